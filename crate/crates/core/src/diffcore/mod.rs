//! Dense `f64` tensors, a dynamic reverse-mode tape, recurrent layers, Adam,
//! and parameter checkpoints. Every network in the crate is built on this.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod nn;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var, BCE_EPS};
pub use nn::{
    bilstm, lstm_cell, BiLstmOutput, BiLstmParams, BiLstmVars, Linear, LinearVars, LstmParams,
    LstmVars,
};
pub use optim::{Adam, AdamConfig, CLIP_NORM};
pub use params::{rng_for, ParamId, ParamStore, Parameter, SeededRng};
pub use tensor::Tensor;
