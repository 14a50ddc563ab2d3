//! Visual-language matching: scores how well a sentence describes a shot.
//!
//! A visual BiLSTM reads the frame features and a language BiLSTM reads the
//! word embeddings. Each branch is summarised as `[h_fwd; c_fwd; h_bwd; c_bwd]`,
//! the two summaries are multiplied elementwise into the fused feature, and a
//! linear map plus sigmoid gives the correctness score `alpha`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Caption, RESERVED, UNK};
use crate::diffcore::nn::rows;
use crate::diffcore::{bilstm, BiLstmParams, BiLstmVars, Graph, Linear, LinearVars};
use crate::diffcore::{ParamId, ParamStore, SeededRng, Tensor, Var};
use crate::error::{Error, Result};

pub const PREFIX: &str = "vlcmu";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlcmuConfig {
    pub frame_dim: usize,
    pub vocab_size: usize,
    pub embedding: usize,
    pub visual_hidden: usize,
    pub language_hidden: usize,
}

impl VlcmuConfig {
    /// Both branches of width 32, embeddings of width 32.
    pub fn new(frame_dim: usize, vocab_size: usize) -> Self {
        Self {
            frame_dim,
            vocab_size,
            embedding: 32,
            visual_hidden: 32,
            language_hidden: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.visual_hidden != self.language_hidden {
            return Err(Error::Config(format!(
                "visual branch width {} differs from language branch width {}",
                self.visual_hidden, self.language_hidden
            )));
        }
        if [
            self.frame_dim,
            self.vocab_size,
            self.embedding,
            self.visual_hidden,
        ]
        .contains(&0)
        {
            return Err(Error::Config("vlcmu sizes must be positive".into()));
        }
        if self.vocab_size <= UNK {
            return Err(Error::Config("vocabulary too small".into()));
        }
        Ok(())
    }

    /// Width of the fused feature.
    pub fn feature_dim(&self) -> usize {
        4 * self.visual_hidden
    }
}

#[derive(Clone, Debug)]
pub struct Vlcmu {
    pub config: VlcmuConfig,
    visual: BiLstmParams,
    language: BiLstmParams,
    embedding: ParamId,
    head: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct VlcmuVars {
    config: VlcmuConfig,
    visual: BiLstmVars,
    language: BiLstmVars,
    embedding: Var,
    head: LinearVars,
}

/// Graph outputs of one match.
#[derive(Clone, Copy, Debug)]
pub struct MatchVars {
    pub alpha: Var,
    pub feature: Var,
    /// The sentence was empty and was replaced by a single UNK.
    pub empty_sentence: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub alpha: f64,
    pub feature: Tensor,
    pub empty_sentence: bool,
}

impl Vlcmu {
    pub fn new(store: &mut ParamStore, config: VlcmuConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let c = config;
        Ok(Self {
            config,
            visual: BiLstmParams::new(
                store,
                &format!("{PREFIX}.visual"),
                c.frame_dim,
                c.visual_hidden,
                rng,
            )?,
            language: BiLstmParams::new(
                store,
                &format!("{PREFIX}.language"),
                c.embedding,
                c.language_hidden,
                rng,
            )?,
            embedding: store.add_uniform(
                format!("{PREFIX}.embedding"),
                &[c.vocab_size, c.embedding],
                c.embedding,
                rng,
            )?,
            head: Linear::new(store, &format!("{PREFIX}.head"), c.feature_dim(), 1, rng)?,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> VlcmuVars {
        VlcmuVars {
            config: self.config,
            visual: self.visual.bind(g, store),
            language: self.language.bind(g, store),
            embedding: g.param(store, self.embedding),
            head: self.head.bind(g, store),
        }
    }

    /// Scores one shot against a sentence given as vocabulary ids.
    pub fn score(
        &self,
        store: &ParamStore,
        features: &Tensor,
        sentence: &[usize],
    ) -> Result<Match> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let f = g.constant(features.clone());
        let m = vars.forward(&mut g, f, sentence)?;
        Ok(Match {
            alpha: g.value(m.alpha).item(),
            feature: g.value(m.feature).clone(),
            empty_sentence: m.empty_sentence,
        })
    }
}

impl VlcmuVars {
    pub fn forward(&self, g: &mut Graph, features: Var, sentence: &[usize]) -> Result<MatchVars> {
        let d = self.config.frame_dim;
        if g.shape(features).len() != 2 || g.shape(features)[1] != d {
            return Err(Error::Dimension {
                op: "vlcmu features",
                left: vec![0, d],
                right: g.shape(features).to_vec(),
            });
        }
        let empty_sentence = sentence.is_empty();
        let unk = [UNK];
        let sentence = if empty_sentence { &unk[..] } else { sentence };

        let frames = rows(g, features)?;
        let visual = bilstm(g, &frames, &self.visual)?.summary(g)?;
        let words = sentence
            .iter()
            .map(|&t| g.row(self.embedding, t))
            .collect::<Result<Vec<_>>>()?;
        let language = bilstm(g, &words, &self.language)?.summary(g)?;

        let feature = g.mul(visual, language)?;
        let logit = self.head.forward(g, feature)?;
        let alpha = g.sigmoid(logit)?;
        let alpha = g.reshape(alpha, vec![])?;
        Ok(MatchVars {
            alpha,
            feature,
            empty_sentence,
        })
    }
}

/// Weak correctness label: 1 iff strictly more than half of the generated
/// tokens occur somewhere in the groundtruth. Reserved tokens never match.
pub fn pseudo_label(generated: &Caption, groundtruth: &Caption) -> u8 {
    let n = generated.len();
    if n == 0 {
        return 0;
    }
    let reserved = |t: &str| RESERVED.contains(&t);
    let types: HashSet<&str> = groundtruth
        .tokens()
        .iter()
        .map(String::as_str)
        .filter(|t| !reserved(t))
        .collect();
    let count = generated
        .tokens()
        .iter()
        .filter(|t| !reserved(t) && types.contains(t.as_str()))
        .count();
    u8::from(2 * count > n)
}

/// Summed binary cross-entropy on graph scalars, in index order.
pub fn bce_sum(g: &mut Graph, probs: &[Var], labels: &[u8]) -> Result<Var> {
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Contract("no scores to compare".into()));
    }
    let terms = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| g.bce(p, f64::from(y)))
        .collect::<Result<Vec<_>>>()?;
    g.add_n(&terms)
}

fn bce_values(op: &str, probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{op}: {} scores but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Contract(format!("{op}: labels must be 0 or 1")));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite { op: "bce" });
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = probs
        .iter()
        .map(|&p| g.constant(Tensor::scalar(p)))
        .collect();
    if vars.is_empty() {
        return Ok(0.0);
    }
    let loss = bce_sum(&mut g, &vars, labels)?;
    Ok(g.value(loss).item())
}

/// Correctness loss over one video's shots.
pub fn vlcmu_loss(alpha: &[f64], eta_bar: &[u8]) -> Result<f64> {
    bce_values("vlcmu_loss", alpha, eta_bar)
}

/// Significance loss; same algebra as [`vlcmu_loss`].
pub fn purport_loss(beta: &[f64], phi: &[u8]) -> Result<f64> {
    bce_values("purport_loss", beta, phi)
}
