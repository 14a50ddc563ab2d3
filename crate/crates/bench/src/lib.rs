//! Fixtures shared by the criterion benches.

use synopsis::corpus::{generate_synthetic, Corpus, SyntheticSpec};
use synopsis::diffcore::gradcheck::GradCheck;
use synopsis::diffcore::{rng_for, BiLstmParams, ParamStore, Tensor};
use synopsis::pipeline::{train_model, Model, TrainConfig};

/// A BiLSTM with `d`-wide inputs and `h` hidden units plus `steps` inputs.
pub fn bilstm_fixture(d: usize, h: usize, steps: usize) -> (ParamStore, BiLstmParams, Vec<Tensor>) {
    let mut rng = rng_for(0, 0);
    let mut store = ParamStore::new();
    let params = BiLstmParams::new(&mut store, "bench", d, h, &mut rng).expect("valid sizes");
    let xs = (0..steps)
        .map(|_| GradCheck::random(&[d], &mut rng))
        .collect();
    (store, params, xs)
}

/// Random token sequences over a 30-word alphabet.
pub fn token_pairs(n: usize, len: usize) -> Vec<(Vec<u32>, Vec<u32>)> {
    use rand::Rng;
    let mut rng = rng_for(1, 0);
    let seq = |rng: &mut synopsis::diffcore::SeededRng| {
        (0..len).map(|_| rng.random_range(0..30)).collect()
    };
    (0..n).map(|_| (seq(&mut rng), seq(&mut rng))).collect()
}

pub fn random_series(n: usize) -> Vec<f64> {
    use rand::Rng;
    let mut rng = rng_for(2, 0);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// A briefly trained model on a small corpus.
pub fn small_model() -> (Corpus, Model) {
    let corpus = generate_synthetic(&SyntheticSpec {
        videos: 6,
        shots_per_video: 60,
        events: 4,
        templates: Vec::new(),
        ..SyntheticSpec::new(0)
    })
    .expect("valid spec");
    let config = TrainConfig {
        pretrain_epochs: 2,
        joint_epochs: 2,
        holdout_videos: 2,
        ..TrainConfig::default()
    };
    let model = train_model(&corpus, &config).expect("training").model;
    (corpus, model)
}
