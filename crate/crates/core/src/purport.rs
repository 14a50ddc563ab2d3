//! Video-level significance network.
//!
//! A BiLSTM reads the sequence of per-shot fused features and a shared
//! linear head with sigmoid turns every per-step output into `beta`.

use serde::{Deserialize, Serialize};

use crate::diffcore::{bilstm, BiLstmParams, BiLstmVars, Graph, Linear, LinearVars};
use crate::diffcore::{ParamStore, SeededRng, Tensor, Var};
use crate::error::{Error, Result};

pub use crate::vlcmu::purport_loss;

pub const PREFIX: &str = "purport";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurportConfig {
    pub input: usize,
    pub hidden: usize,
}

impl PurportConfig {
    pub fn new(input: usize) -> Self {
        Self { input, hidden: 32 }
    }
}

#[derive(Clone, Debug)]
pub struct Purport {
    pub config: PurportConfig,
    blstm: BiLstmParams,
    head: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct PurportVars {
    blstm: BiLstmVars,
    head: LinearVars,
}

impl Purport {
    pub fn new(store: &mut ParamStore, config: PurportConfig, rng: &mut SeededRng) -> Result<Self> {
        if config.input == 0 || config.hidden == 0 {
            return Err(Error::Config("purport sizes must be positive".into()));
        }
        Ok(Self {
            config,
            blstm: BiLstmParams::new(
                store,
                &format!("{PREFIX}.blstm"),
                config.input,
                config.hidden,
                rng,
            )?,
            head: Linear::new(store, &format!("{PREFIX}.head"), 2 * config.hidden, 1, rng)?,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> PurportVars {
        PurportVars {
            blstm: self.blstm.bind(g, store),
            head: self.head.bind(g, store),
        }
    }

    pub fn score_video(&self, store: &ParamStore, features: &[Tensor]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let inputs: Vec<Var> = features.iter().map(|f| g.constant(f.clone())).collect();
        let beta = vars.score(&mut g, &inputs)?;
        Ok(beta.iter().map(|&b| g.value(b).item()).collect())
    }
}

impl PurportVars {
    /// One scalar score per input step.
    pub fn score(&self, g: &mut Graph, features: &[Var]) -> Result<Vec<Var>> {
        if features.is_empty() {
            return Err(Error::Domain("cannot score a video with no shots".into()));
        }
        let out = bilstm(g, features, &self.blstm)?;
        out.steps
            .iter()
            .map(|&s| {
                let logit = self.head.forward(g, s)?;
                let beta = g.sigmoid(logit)?;
                g.reshape(beta, vec![])
            })
            .collect()
    }
}
