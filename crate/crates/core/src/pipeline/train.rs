//! Captioner pretraining followed by joint training of the scoring networks
//! with the captioner frozen.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::Model;
use crate::captioner;
use crate::corpus::{Corpus, Shot, Video, Vocabulary};
use crate::diffcore::{rng_for, Adam, AdamConfig, Graph, ParamStore};
use crate::error::{Error, Result};

const STREAM_SPLIT: u64 = 20;
const STREAM_PRETRAIN: u64 = 21;
const STREAM_JOINT: u64 = 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    /// Mean per-shot caption loss over the training shots after the epoch.
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub initial_train_loss: f64,
    pub initial_validation_loss: f64,
    pub epochs: Vec<PretrainEpoch>,
    /// Epoch whose parameters were kept; 0 means the initial parameters.
    pub best_epoch: usize,
    pub train_shots: usize,
    pub validation_shots: usize,
}

impl PretrainReport {
    /// Training loss of the retained parameters.
    pub fn final_train_loss(&self) -> f64 {
        match self.best_epoch {
            0 => self.initial_train_loss,
            e => self.epochs[e - 1].train_loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEpoch {
    pub epoch: usize,
    /// Weighted objective summed over training videos during the epoch.
    pub loss: f64,
    pub eta_loss: f64,
    pub phi_loss: f64,
}

struct Example<'a> {
    shot: &'a Shot,
    target: Vec<usize>,
}

fn training_error(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Training {
            step,
            message: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

fn mean_caption_loss(model: &Model, examples: &[Example<'_>]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        total += model
            .captioner
            .caption_loss(&model.store, &ex.shot.features, &ex.target)?;
    }
    Ok(total / examples.len() as f64)
}

/// Trains the captioner alone on the caption loss and keeps the parameters
/// with the lowest validation loss.
pub fn pretrain_captioner(model: &mut Model, videos: &[&Video]) -> Result<PretrainReport> {
    let config = model.train_config().clone();
    let mut examples: Vec<Example<'_>> = videos
        .iter()
        .flat_map(|v| v.shots.iter())
        .map(|shot| Example {
            shot,
            target: model.vocab.encode(&shot.groundtruth),
        })
        .collect();
    if examples.is_empty() {
        return Err(Error::Domain("no training shots".into()));
    }
    examples.shuffle(&mut rng_for(config.seed, STREAM_SPLIT));
    let n_val = (examples.len() as f64 * config.validation_fraction).round() as usize;
    let n_val = n_val.min(examples.len() - 1);
    let validation = examples.split_off(examples.len() - n_val);
    let mut train = examples;

    model.store.set_frozen_prefix(captioner::PREFIX, false);
    let initial_train_loss = mean_caption_loss(model, &train)?;
    let initial_validation_loss = mean_caption_loss(model, &validation)?;
    let mut best = (
        initial_validation_loss,
        0usize,
        model.store.subset(captioner::PREFIX),
    );

    let mut adam = Adam::new(AdamConfig {
        lr: config.pretrain_lr,
        ..AdamConfig::default()
    });
    let mut rng = rng_for(config.seed, STREAM_PRETRAIN);
    let scale = 1.0 / config.batch_size as f64;
    let mut epochs = Vec::with_capacity(config.pretrain_epochs);
    for epoch in 1..=config.pretrain_epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch_size) {
            let step = adam.steps() as usize;
            for ex in batch {
                let mut g = Graph::new();
                let vars = model.captioner.bind(&mut g, &model.store);
                let x = g.constant(ex.shot.features.clone());
                let loss = vars
                    .loss(&mut g, x, &ex.target)
                    .map_err(training_error(step))?;
                let loss = g.scale(loss, scale).map_err(training_error(step))?;
                g.backward(loss)?.accumulate_into(&mut model.store);
            }
            adam.step(&mut model.store);
        }
        let train_loss =
            mean_caption_loss(model, &train).map_err(training_error(adam.steps() as usize))?;
        let validation_loss = mean_caption_loss(model, &validation)?;
        if validation_loss < best.0 {
            best = (
                validation_loss,
                epoch,
                model.store.subset(captioner::PREFIX),
            );
        }
        epochs.push(PretrainEpoch {
            epoch,
            train_loss,
            validation_loss,
        });
    }
    model.store.load_from(&best.2, captioner::PREFIX)?;
    Ok(PretrainReport {
        initial_train_loss,
        initial_validation_loss,
        epochs,
        best_epoch: best.1,
        train_shots: train.len(),
        validation_shots: validation.len(),
    })
}

/// Vocabulary of the groundtruth captions of `videos`.
pub fn build_vocabulary(videos: &[&Video], min_count: usize) -> Result<Vocabulary> {
    Vocabulary::build(
        videos
            .iter()
            .flat_map(|v| v.shots.iter().map(|s| &s.groundtruth)),
        min_count,
    )
}

/// Output of [`train_model`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub pretrain: PretrainReport,
    pub joint: Vec<JointEpoch>,
}

/// Builds a model on the training videos of `corpus`, pretrains the
/// captioner and then runs joint training.
pub fn train_model(corpus: &Corpus, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let (train, _) = corpus.split(config.holdout_videos)?;
    let vocab = build_vocabulary(&train, config.min_count)?;
    let mut model = Model::new(config, corpus.frames, corpus.feature_dim, vocab)?;
    let pretrain = pretrain_captioner(&mut model, &train)?;
    let joint = train_joint(&mut model, &train)?;
    Ok(Trained {
        model,
        pretrain,
        joint,
    })
}

/// Copies captioner parameters from another store, for example a model
/// pretrained under a different ablation setting.
pub fn load_captioner(model: &mut Model, source: &ParamStore) -> Result<usize> {
    model.store.load_from(source, captioner::PREFIX)
}

/// Freezes the captioner and trains the matcher and significance network on
/// `lambda1 * L_eta + lambda2 * L_phi`, one optimiser step per video.
///
/// The captioner is frozen, so each shot's sentence and pseudo-label are
/// computed once up front rather than every epoch.
pub fn train_joint(model: &mut Model, videos: &[&Video]) -> Result<Vec<JointEpoch>> {
    let config = model.train_config().clone();
    config.validate()?;
    if videos.is_empty() {
        return Err(Error::Domain("no training videos".into()));
    }
    model.store.set_frozen_prefix(captioner::PREFIX, true);
    let prepared = videos
        .iter()
        .map(|v| model.joint_input(v))
        .collect::<Result<Vec<_>>>()?;

    let mut adam = Adam::new(AdamConfig {
        lr: config.joint_lr,
        ..AdamConfig::default()
    });
    let mut rng = rng_for(config.seed, STREAM_JOINT);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut log = Vec::with_capacity(config.joint_epochs);
    for epoch in 1..=config.joint_epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        for &i in &order {
            let step = adam.steps() as usize;
            let mut g = Graph::new();
            let terms = model
                .joint_objective(&mut g, &model.store, &prepared[i])
                .map_err(training_error(step))?;
            sums.0 += g.value(terms.loss).item();
            sums.1 += terms.eta.map_or(0.0, |v| g.value(v).item());
            sums.2 += terms.phi.map_or(0.0, |v| g.value(v).item());
            g.backward(terms.loss)?.accumulate_into(&mut model.store);
            adam.step(&mut model.store);
        }
        log.push(JointEpoch {
            epoch,
            loss: sums.0,
            eta_loss: sums.1,
            phi_loss: sums.2,
        });
    }
    Ok(log)
}
