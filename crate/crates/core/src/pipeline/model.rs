use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::inference::{assemble_synopsis, impact, Synopsis};
use crate::captioner::{self, Captioner, CaptionerConfig};
use crate::corpus::{Caption, Shot, Video, Vocabulary, UNK};
use crate::diffcore::{checkpoint, rng_for, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::purport::{Purport, PurportConfig, PurportVars};
use crate::vlcmu::{bce_sum, pseudo_label, Vlcmu, VlcmuConfig, VlcmuVars};

pub const CAPTIONER_FILE: &str = "captioner.tsgw";
pub const MODEL_FILE: &str = "model.tsgw";
pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.json";

const STREAM_CAPTIONER: u64 = 10;
const STREAM_VLCMU: u64 = 11;
const STREAM_PURPORT: u64 = 12;

/// Everything needed to rebuild a [`Model`] around a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub train: TrainConfig,
    pub captioner: CaptionerConfig,
    pub vlcmu: VlcmuConfig,
    pub purport: PurportConfig,
}

/// Captioner, matcher and significance network sharing one parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub captioner: Captioner,
    pub vlcmu: Vlcmu,
    pub purport: Purport,
}

/// Per-shot outputs of a scored video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotScore {
    pub shot: usize,
    pub sentence: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta_bar: u8,
    pub phi: u8,
}

/// Graph handles for one video's forward pass. A disabled module leaves
/// its list empty.
pub struct VideoVars {
    pub alpha: Vec<Var>,
    pub beta: Vec<Var>,
}

/// A training video with sentences fixed and labels attached.
#[derive(Clone, Debug)]
pub struct JointInput {
    /// Frame features and sentence ids per shot.
    pub shots: Vec<(Tensor, Vec<usize>)>,
    pub eta_bar: Vec<u8>,
    pub phi: Vec<u8>,
}

/// The joint objective and its unweighted active terms.
#[derive(Clone, Copy, Debug)]
pub struct JointTerms {
    pub loss: Var,
    pub eta: Option<Var>,
    pub phi: Option<Var>,
}

pub struct Bound {
    vlcmu: Option<VlcmuVars>,
    purport: Option<PurportVars>,
    embedding: Var,
}

impl Model {
    pub fn new(
        train: &TrainConfig,
        frames: usize,
        feature_dim: usize,
        vocab: Vocabulary,
    ) -> Result<Self> {
        train.validate()?;
        let captioner = CaptionerConfig {
            encoder_hidden: train.encoder_hidden,
            decoder_hidden: 2 * train.encoder_hidden,
            embedding: train.embedding,
            max_decode_len: train.max_decode_len,
            ..CaptionerConfig::new(feature_dim, frames, vocab.len())
        };
        let vlcmu = VlcmuConfig {
            embedding: train.vlcmu_embedding,
            visual_hidden: train.vlcmu_hidden,
            language_hidden: train.vlcmu_hidden,
            ..VlcmuConfig::new(feature_dim, vocab.len())
        };
        let purport_input = if train.disable_vlcmu {
            feature_dim + captioner.embedding
        } else {
            vlcmu.feature_dim()
        };
        let purport = PurportConfig {
            input: purport_input,
            hidden: train.purport_hidden,
        };
        Self::build(
            ModelConfig {
                train: train.clone(),
                captioner,
                vlcmu,
                purport,
            },
            vocab,
        )
    }

    fn build(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        if vocab.len() != config.captioner.vocab_size || vocab.len() != config.vlcmu.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens but the model expects {}",
                vocab.len(),
                config.captioner.vocab_size
            )));
        }
        let seed = config.train.seed;
        let mut store = ParamStore::new();
        let captioner = Captioner::new(
            &mut store,
            config.captioner,
            &mut rng_for(seed, STREAM_CAPTIONER),
        )?;
        let vlcmu = Vlcmu::new(&mut store, config.vlcmu, &mut rng_for(seed, STREAM_VLCMU))?;
        let purport = Purport::new(
            &mut store,
            config.purport,
            &mut rng_for(seed, STREAM_PURPORT),
        )?;
        Ok(Self {
            config,
            vocab,
            store,
            captioner,
            vlcmu,
            purport,
        })
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.config.train
    }

    pub fn captioner_checkpoint(&self) -> Result<Vec<u8>> {
        checkpoint::encode(&self.store.subset(captioner::PREFIX))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CAPTIONER_FILE), self.captioner_checkpoint()?)?;
        checkpoint::save(&self.store, &dir.join(MODEL_FILE))?;
        std::fs::write(
            dir.join(CONFIG_FILE),
            serde_json::to_string_pretty(&self.config)? + "\n",
        )?;
        std::fs::write(
            dir.join(VOCAB_FILE),
            serde_json::to_string_pretty(self.vocab.tokens())? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config: ModelConfig =
            serde_json::from_str(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let tokens: Vec<String> =
            serde_json::from_str(&std::fs::read_to_string(dir.join(VOCAB_FILE))?)?;
        let mut model = Self::build(config, Vocabulary::from_tokens(tokens)?)?;
        let stored = checkpoint::load(&dir.join(MODEL_FILE))?;
        if stored.len() != model.store.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, model has {}",
                stored.len(),
                model.store.len()
            )));
        }
        model.store.load_from(&stored, "")?;
        Ok(model)
    }

    fn check_shot(&self, shot: &Shot) -> Result<()> {
        let want = [
            self.config.captioner.frames,
            self.config.captioner.frame_dim,
        ];
        if shot.features.shape() != want {
            return Err(Error::Dimension {
                op: "shot features",
                left: want.to_vec(),
                right: shot.features.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn decode(&self, features: &Tensor) -> Result<Caption> {
        let ids = self.captioner.decode_greedy(&self.store, features)?;
        self.vocab.decode(&ids)
    }

    /// The sentence the downstream networks see for a shot: the injected
    /// one when present, otherwise the captioner's greedy decoding.
    pub fn sentence(&self, shot: &Shot) -> Result<Caption> {
        self.check_shot(shot)?;
        match &shot.injected {
            Some(c) => Ok(c.clone()),
            None => self.decode(&shot.features),
        }
    }

    /// Binds the enabled scoring networks from `store`, which must share
    /// this model's layout.
    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Bound {
        let t = &self.config.train;
        Bound {
            vlcmu: (!t.disable_vlcmu).then(|| self.vlcmu.bind(g, store)),
            purport: (!t.disable_purport).then(|| self.purport.bind(g, store)),
            embedding: g.param(store, self.captioner.embedding()),
        }
    }

    /// Builds correctness and significance scores for a whole video. Disabled
    /// modules yield no handles.
    pub fn video_graph(
        &self,
        g: &mut Graph,
        bound: &Bound,
        shots: &[(Tensor, Vec<usize>)],
    ) -> Result<VideoVars> {
        let mut alpha = Vec::new();
        let mut features = Vec::with_capacity(shots.len());
        for (x, ids) in shots {
            let x = g.constant(x.clone());
            match &bound.vlcmu {
                Some(v) => {
                    let m = v.forward(g, x, ids)?;
                    alpha.push(m.alpha);
                    features.push(m.feature);
                }
                None => features.push(fallback_feature(g, bound.embedding, x, ids)?),
            }
        }
        let beta = match &bound.purport {
            Some(p) => p.score(g, &features)?,
            None => Vec::new(),
        };
        Ok(VideoVars { alpha, beta })
    }

    pub fn encode_sentence(&self, sentence: &Caption) -> Vec<usize> {
        self.vocab.encode(sentence)
    }

    /// Fixes each shot's sentence and pseudo-label for joint training.
    pub fn joint_input(&self, video: &Video) -> Result<JointInput> {
        let mut shots = Vec::with_capacity(video.len());
        let mut eta_bar = Vec::with_capacity(video.len());
        for shot in &video.shots {
            let sentence = self.sentence(shot)?;
            eta_bar.push(pseudo_label(&sentence, &shot.groundtruth));
            shots.push((shot.features.clone(), self.encode_sentence(&sentence)));
        }
        Ok(JointInput {
            shots,
            eta_bar,
            phi: video.shots.iter().map(|s| u8::from(s.important)).collect(),
        })
    }

    /// `lambda1 * L_eta + lambda2 * L_phi` over one video, with switched-off
    /// terms left out.
    pub fn joint_objective(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: &JointInput,
    ) -> Result<JointTerms> {
        let t = &self.config.train;
        let bound = self.bind(g, store);
        let vars = self.video_graph(g, &bound, &input.shots)?;
        let mut terms = Vec::new();
        let eta = if t.eta_active() {
            let l = bce_sum(g, &vars.alpha, &input.eta_bar)?;
            terms.push(g.scale(l, t.lambda1)?);
            Some(l)
        } else {
            None
        };
        let phi = if t.phi_active() {
            let l = bce_sum(g, &vars.beta, &input.phi)?;
            terms.push(g.scale(l, t.lambda2)?);
            Some(l)
        } else {
            None
        };
        if terms.is_empty() {
            return Err(Error::Config("joint objective has no active term".into()));
        }
        Ok(JointTerms {
            loss: g.add_n(&terms)?,
            eta,
            phi,
        })
    }

    /// Scores every shot of a video; disabled modules contribute a factor of 1.
    pub fn score_video(&self, video: &Video) -> Result<Vec<ShotScore>> {
        let sentences = video
            .shots
            .iter()
            .map(|s| self.sentence(s))
            .collect::<Result<Vec<_>>>()?;
        self.score_sentences(video, &sentences)
    }

    pub fn score_sentences(&self, video: &Video, sentences: &[Caption]) -> Result<Vec<ShotScore>> {
        if video.is_empty() {
            return Err(Error::Domain(format!("video {} has no shots", video.id)));
        }
        let inputs: Vec<(Tensor, Vec<usize>)> = video
            .shots
            .iter()
            .zip(sentences)
            .map(|(s, c)| (s.features.clone(), self.encode_sentence(c)))
            .collect();
        let mut g = Graph::new();
        let bound = self.bind(&mut g, &self.store);
        let vars = self.video_graph(&mut g, &bound, &inputs)?;
        let n = video.len();
        let read = |vs: &[Var]| -> Vec<f64> {
            if vs.is_empty() {
                vec![1.0; n]
            } else {
                vs.iter().map(|&v| g.value(v).item()).collect()
            }
        };
        let alpha = read(&vars.alpha);
        let beta = read(&vars.beta);
        let gamma = impact(&alpha, &beta)?;
        Ok(video
            .shots
            .iter()
            .zip(sentences)
            .enumerate()
            .map(|(p, (shot, sentence))| ShotScore {
                shot: p,
                sentence: sentence.text(),
                alpha: alpha[p],
                beta: beta[p],
                gamma: gamma[p],
                eta_bar: pseudo_label(sentence, &shot.groundtruth),
                phi: u8::from(shot.important),
            })
            .collect())
    }

    /// Decodes, scores and summarises one video.
    pub fn synopsis(&self, video: &Video, passes: usize) -> Result<(Synopsis, Vec<ShotScore>)> {
        let sentences = video
            .shots
            .iter()
            .map(|s| self.sentence(s))
            .collect::<Result<Vec<_>>>()?;
        let scores = self.score_sentences(video, &sentences)?;
        let gamma: Vec<f64> = scores.iter().map(|s| s.gamma).collect();
        Ok((
            assemble_synopsis(&video.id, &sentences, &gamma, passes)?,
            scores,
        ))
    }
}

/// Stand-in for the fused feature when the matcher is switched off: mean
/// frame feature followed by the mean captioner word embedding.
fn fallback_feature(g: &mut Graph, embedding: Var, features: Var, ids: &[usize]) -> Result<Var> {
    let visual = g.mean_rows(features)?;
    let unk = [UNK];
    let ids = if ids.is_empty() { &unk[..] } else { ids };
    let words = ids
        .iter()
        .map(|&t| g.row(embedding, t))
        .collect::<Result<Vec<_>>>()?;
    let words = g.stack(&words)?;
    let language = g.mean_rows(words)?;
    g.concat(&[visual, language])
}
