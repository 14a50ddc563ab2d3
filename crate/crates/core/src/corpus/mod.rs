//! Shots, videos, vocabulary, on-disk formats and the synthetic generator.

mod features;
mod model;
pub mod store;
mod synth;
mod text;

pub use features::{
    decode_features, encode_features, load_features, save_features, split_shots, stack_shots,
};
pub use model::{Corpus, Shot, Video};
pub use store::{read_corpus, read_references, write_corpus};
pub use synth::{default_templates, generate_synthetic, SyntheticSpec};
pub use text::{tokenize, Caption, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};
