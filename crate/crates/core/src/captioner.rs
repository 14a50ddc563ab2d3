//! Per-shot caption generator.
//!
//! A scalar-output linear map scores each frame, a softmax over the frame
//! scores weights the frames, and a bidirectional LSTM reads the weighted
//! frames as a `k`-step sequence. Its final forward/backward states,
//! concatenated, initialise an LSTM decoder that is trained with teacher
//! forcing and decoded greedily.

use serde::{Deserialize, Serialize};

use crate::corpus::{BOS, EOS};
use crate::diffcore::nn::rows;
use crate::diffcore::{
    bilstm, lstm_cell, BiLstmParams, BiLstmVars, Graph, Linear, LinearVars, LstmParams, LstmVars,
};
use crate::diffcore::{ParamId, ParamStore, SeededRng, Tensor, Var};
use crate::error::{Error, Result};

/// Name prefix of every captioner parameter.
pub const PREFIX: &str = "captioner";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionerConfig {
    pub frame_dim: usize,
    pub frames: usize,
    pub encoder_hidden: usize,
    /// Must equal `2 * encoder_hidden`.
    pub decoder_hidden: usize,
    pub embedding: usize,
    pub vocab_size: usize,
    pub max_decode_len: usize,
}

impl CaptionerConfig {
    /// Default sizes: encoder 64, decoder 128, embedding 32, 16 decode steps.
    pub fn new(frame_dim: usize, frames: usize, vocab_size: usize) -> Self {
        Self {
            frame_dim,
            frames,
            encoder_hidden: 64,
            decoder_hidden: 128,
            embedding: 32,
            vocab_size,
            max_decode_len: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("frame_dim", self.frame_dim),
            ("frames", self.frames),
            ("encoder_hidden", self.encoder_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("embedding", self.embedding),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("captioner {name} must be positive")));
        }
        if self.decoder_hidden != 2 * self.encoder_hidden {
            return Err(Error::Config(format!(
                "decoder_hidden ({}) must be twice encoder_hidden ({})",
                self.decoder_hidden, self.encoder_hidden
            )));
        }
        if self.max_decode_len < 2 {
            return Err(Error::Config("max_decode_len must be at least 2".into()));
        }
        if self.vocab_size <= EOS {
            return Err(Error::Config("vocabulary too small".into()));
        }
        Ok(())
    }
}

/// Frame scores and their softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderStates {
    pub h_fwd: Var,
    pub c_fwd: Var,
    pub h_bwd: Var,
    pub c_bwd: Var,
}

#[derive(Clone, Debug)]
pub struct Captioner {
    pub config: CaptionerConfig,
    attention: Linear,
    encoder: BiLstmParams,
    embedding: ParamId,
    decoder: LstmParams,
    output: Linear,
}

/// Captioner parameters bound into one graph.
#[derive(Clone, Copy, Debug)]
pub struct CaptionerVars {
    config: CaptionerConfig,
    attention: LinearVars,
    encoder: BiLstmVars,
    embedding: Var,
    decoder: LstmVars,
    output: LinearVars,
}

impl Captioner {
    pub fn new(
        store: &mut ParamStore,
        config: CaptionerConfig,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        let c = config;
        Ok(Self {
            config,
            attention: Linear::new(store, &format!("{PREFIX}.attention"), c.frame_dim, 1, rng)?,
            encoder: BiLstmParams::new(
                store,
                &format!("{PREFIX}.encoder"),
                c.frame_dim,
                c.encoder_hidden,
                rng,
            )?,
            embedding: store.add_uniform(
                format!("{PREFIX}.embedding"),
                &[c.vocab_size, c.embedding],
                c.embedding,
                rng,
            )?,
            decoder: LstmParams::new(
                store,
                &format!("{PREFIX}.decoder"),
                c.embedding,
                c.decoder_hidden,
                rng,
            )?,
            output: Linear::new(
                store,
                &format!("{PREFIX}.output"),
                c.decoder_hidden,
                c.vocab_size,
                rng,
            )?,
        })
    }

    pub fn embedding(&self) -> ParamId {
        self.embedding
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> CaptionerVars {
        CaptionerVars {
            config: self.config,
            attention: self.attention.bind(g, store),
            encoder: self.encoder.bind(g, store),
            embedding: g.param(store, self.embedding),
            decoder: self.decoder.bind(g, store),
            output: self.output.bind(g, store),
        }
    }

    pub fn temporal_attention(
        &self,
        store: &ParamStore,
        features: &Tensor,
    ) -> Result<(AttentionWeights, Tensor)> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let f = g.constant(features.clone());
        let (logits, weights, weighted) = vars.attention_parts(&mut g, f)?;
        Ok((
            AttentionWeights {
                logits: g.value(logits).data().to_vec(),
                weights: g.value(weights).data().to_vec(),
            },
            g.value(weighted).clone(),
        ))
    }

    /// Summed negative log-likelihood of `target` followed by EOS.
    pub fn caption_loss(
        &self,
        store: &ParamStore,
        features: &Tensor,
        target: &[usize],
    ) -> Result<f64> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let f = g.constant(features.clone());
        let loss = vars.loss(&mut g, f, target)?;
        Ok(g.value(loss).item())
    }

    pub fn decode_greedy(&self, store: &ParamStore, features: &Tensor) -> Result<Vec<usize>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let f = g.constant(features.clone());
        vars.greedy(&mut g, f)
    }
}

impl CaptionerVars {
    fn check_features(&self, g: &Graph, features: Var) -> Result<()> {
        let want = [self.config.frames, self.config.frame_dim];
        if g.shape(features) != want {
            return Err(Error::Dimension {
                op: "captioner features",
                left: want.to_vec(),
                right: g.shape(features).to_vec(),
            });
        }
        Ok(())
    }

    fn attention_parts(&self, g: &mut Graph, features: Var) -> Result<(Var, Var, Var)> {
        self.check_features(g, features)?;
        let k = self.config.frames;
        let scores = g.matmul(features, self.attention_weight())?;
        let scores = g.reshape(scores, vec![k])?;
        let logits = g.add_scalar(scores, self.attention_bias())?;
        let weights = g.softmax(logits)?;
        let weighted = g.scale_rows(features, weights)?;
        Ok((logits, weights, weighted))
    }

    fn attention_weight(&self) -> Var {
        self.attention.weight()
    }

    fn attention_bias(&self) -> Var {
        self.attention.bias()
    }

    /// Returns `(weights [k], weighted features [k, d])`.
    pub fn attend(&self, g: &mut Graph, features: Var) -> Result<(Var, Var)> {
        let (_, weights, weighted) = self.attention_parts(g, features)?;
        Ok((weights, weighted))
    }

    pub fn encode(&self, g: &mut Graph, weighted: Var) -> Result<EncoderStates> {
        let steps = rows(g, weighted)?;
        let out = bilstm(g, &steps, &self.encoder)?;
        Ok(EncoderStates {
            h_fwd: out.h_fwd,
            c_fwd: out.c_fwd,
            h_bwd: out.h_bwd,
            c_bwd: out.c_bwd,
        })
    }

    /// `h0 = [h_fwd; h_bwd]`, `c0 = [c_fwd; c_bwd]`.
    pub fn init_decoder(&self, g: &mut Graph, s: &EncoderStates) -> Result<(Var, Var)> {
        Ok((
            g.concat(&[s.h_fwd, s.h_bwd])?,
            g.concat(&[s.c_fwd, s.c_bwd])?,
        ))
    }

    fn start(&self, g: &mut Graph, features: Var) -> Result<(Var, Var)> {
        let (_, weighted) = self.attend(g, features)?;
        let states = self.encode(g, weighted)?;
        self.init_decoder(g, &states)
    }

    fn step(&self, g: &mut Graph, token: usize, h: Var, c: Var) -> Result<(Var, Var, Var)> {
        let x = g.row(self.embedding, token)?;
        let (h, c) = lstm_cell(g, x, h, c, &self.decoder)?;
        let logits = self.output.forward(g, h)?;
        Ok((logits, h, c))
    }

    /// Teacher-forced loss: inputs `BOS, w_1..w_m`, targets `w_1..w_m, EOS`.
    pub fn loss(&self, g: &mut Graph, features: Var, target: &[usize]) -> Result<Var> {
        if target.is_empty() {
            return Err(Error::Domain("groundtruth caption is empty".into()));
        }
        if let Some(&bad) = target.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Index {
                index: bad,
                bound: self.config.vocab_size,
            });
        }
        let (mut h, mut c) = self.start(g, features)?;
        let mut terms = Vec::with_capacity(target.len() + 1);
        let mut prev = BOS;
        for &next in target.iter().chain(std::iter::once(&EOS)) {
            let (logits, h2, c2) = self.step(g, prev, h, c)?;
            terms.push(g.cross_entropy(logits, next)?);
            (h, c, prev) = (h2, c2, next);
        }
        g.add_n(&terms)
    }

    /// Argmax decoding until EOS or the length limit. PAD and BOS are never
    /// emitted; the result excludes BOS and EOS.
    pub fn greedy(&self, g: &mut Graph, features: Var) -> Result<Vec<usize>> {
        let (mut h, mut c) = self.start(g, features)?;
        let mut out = Vec::new();
        let mut prev = BOS;
        for _ in 0..self.config.max_decode_len {
            let (logits, h2, c2) = self.step(g, prev, h, c)?;
            (h, c) = (h2, c2);
            let scores = g.value(logits).data();
            let next = (EOS..scores.len())
                .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
                .expect("vocabulary has tokens past EOS");
            if next == EOS {
                break;
            }
            out.push(next);
            prev = next;
        }
        Ok(out)
    }
}
