#![allow(dead_code)]

use rand::seq::index::sample;
use synopsis::corpus::{generate_synthetic, Corpus, SyntheticSpec, Video};
use synopsis::diffcore::rng_for;
use synopsis::pipeline::TrainConfig;

/// A corpus small enough to train in well under a second.
pub fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        videos: 6,
        shots_per_video: 20,
        events: 4,
        feature_dim: 8,
        frames_per_shot: 3,
        mean_event_duration: 4.0,
        templates: Vec::new(),
        ..SyntheticSpec::new(seed)
    }
}

pub fn small_corpus(seed: u64) -> Corpus {
    generate_synthetic(&small_spec(seed)).unwrap()
}

pub fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        pretrain_epochs: 3,
        joint_epochs: 4,
        holdout_videos: 2,
        encoder_hidden: 8,
        embedding: 8,
        max_decode_len: 8,
        vlcmu_hidden: 4,
        vlcmu_embedding: 4,
        purport_hidden: 4,
        ..TrainConfig::default()
    }
}

/// Area under the ROC curve of `positive` scores ranked above `negative`
/// ones, counting ties as half.
pub fn roc_auc(positive: &[f64], negative: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in positive {
        for n in negative {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positive.len() * negative.len()) as f64
}

/// Event occurrences whose first shot is marked important.
pub fn important_segments(video: &Video) -> Vec<std::ops::Range<usize>> {
    video
        .segments()
        .into_iter()
        .filter(|r| video.shots[r.start].important)
        .collect()
}

/// Fraction of important occurrences containing at least one of `shots`.
pub fn event_recall(video: &Video, shots: &[usize]) -> Option<f64> {
    let segments = important_segments(video);
    if segments.is_empty() {
        return None;
    }
    let hit = segments
        .iter()
        .filter(|r| shots.iter().any(|s| r.contains(s)))
        .count();
    Some(hit as f64 / segments.len() as f64)
}

/// Mean recall of `draws` uniformly random shot subsets of size `size`.
pub fn random_recall(video: &Video, size: usize, draws: usize, seed: u64) -> Option<f64> {
    let mut rng = rng_for(seed, 7_000);
    let mut total = 0.0;
    for _ in 0..draws {
        let pick = sample(&mut rng, video.len(), size.min(video.len())).into_vec();
        total += event_recall(video, &pick)?;
    }
    Some(total / draws as f64)
}
