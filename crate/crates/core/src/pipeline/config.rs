use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training schedule, loss weights, network sizes and ablation switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub pretrain_lr: f64,
    pub joint_lr: f64,
    /// Shots per optimiser step while pretraining the captioner.
    pub batch_size: usize,
    /// Number of trailing corpus videos kept out of training.
    pub holdout_videos: usize,
    /// Fraction of training shots used to pick the captioner checkpoint.
    pub validation_fraction: f64,
    pub min_count: usize,
    pub encoder_hidden: usize,
    pub embedding: usize,
    pub max_decode_len: usize,
    pub vlcmu_hidden: usize,
    pub vlcmu_embedding: usize,
    pub purport_hidden: usize,
    pub disable_vlcmu: bool,
    pub disable_eta_loss: bool,
    pub disable_purport: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda1: 1.0,
            lambda2: 1.0,
            pretrain_epochs: 10,
            joint_epochs: 20,
            pretrain_lr: 2e-3,
            joint_lr: 2e-3,
            batch_size: 8,
            holdout_videos: 5,
            validation_fraction: 0.2,
            min_count: 1,
            encoder_hidden: 64,
            embedding: 32,
            max_decode_len: 16,
            vlcmu_hidden: 32,
            vlcmu_embedding: 32,
            purport_hidden: 32,
            disable_vlcmu: false,
            disable_eta_loss: false,
            disable_purport: false,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// The correctness loss contributes to the joint objective.
    pub fn eta_active(&self) -> bool {
        !self.disable_vlcmu && !self.disable_eta_loss && self.lambda1 > 0.0
    }

    /// The significance loss contributes to the joint objective.
    pub fn phi_active(&self) -> bool {
        !self.disable_purport && self.lambda2 > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                bad.push(name);
            }
        }
        for (name, v) in [
            ("pretrain_lr", self.pretrain_lr),
            ("joint_lr", self.joint_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad.push(name);
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            bad.push("validation_fraction");
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("min_count", self.min_count),
            ("encoder_hidden", self.encoder_hidden),
            ("embedding", self.embedding),
            ("vlcmu_hidden", self.vlcmu_hidden),
            ("vlcmu_embedding", self.vlcmu_embedding),
            ("purport_hidden", self.purport_hidden),
        ] {
            if v == 0 {
                bad.push(name);
            }
        }
        if self.max_decode_len < 2 {
            bad.push("max_decode_len");
        }
        if !bad.is_empty() {
            return Err(Error::Validation(
                bad.into_iter().map(String::from).collect(),
            ));
        }
        if self.joint_epochs > 0 && !self.eta_active() && !self.phi_active() {
            return Err(Error::Config(
                "joint training has no active loss term: enable a weight or drop an ablation switch".into(),
            ));
        }
        Ok(())
    }
}
