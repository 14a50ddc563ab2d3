//! Staged training, per-shot scoring, peak inference and evaluation.

mod config;
mod eval;
mod inference;
mod model;
mod train;

pub use config::TrainConfig;
pub use eval::{config_hash, evaluate, EvalReport, VideoEval};
pub use inference::{
    assemble_synopsis, find_peaks, halving_bound, impact, inference_trace, iterate_inference,
    retrieve_visual, Synopsis, SynopsisEntry,
};
pub use model::{
    Bound, JointInput, JointTerms, Model, ModelConfig, ShotScore, VideoVars, CAPTIONER_FILE,
    CONFIG_FILE, MODEL_FILE, VOCAB_FILE,
};
pub use train::{
    build_vocabulary, load_captioner, pretrain_captioner, train_joint, train_model, JointEpoch,
    PretrainEpoch, PretrainReport, Trained,
};
