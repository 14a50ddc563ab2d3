//! Seeded synthetic corpora.
//!
//! Each video is a sequence of latent event occurrences. An occurrence picks
//! an event type (never the same as the previous one) and one of that type's
//! caption templates, and lasts `1 + Geometric(1 / mean_event_duration)`
//! shots. Every frame of every shot in the occurrence is the scene embedding
//! of (type, template) plus independent Gaussian noise, so the caption is a
//! function of the visual content and noise is the only thing separating
//! shots of one occurrence.
//!
//! A fixed subset of event types is important; the first shot of each
//! occurrence of an important type is flagged and its caption goes into the
//! reference summaries. Independently, each shot receives with probability
//! `corruption_rate` an injected sentence drawn from a different event type.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use super::model::{Corpus, Shot, Video};
use super::text::{tokenize, Caption};
use crate::diffcore::{rng_for, SeededRng, Tensor};
use crate::error::{Error, Result};

/// Scale of the per-template offset added to an event type's embedding.
const TEMPLATE_SHIFT: f64 = 0.7;

const STREAM_EMBEDDINGS: u64 = 1;
const STREAM_IMPORTANCE: u64 = 2;
const STREAM_VIDEO: u64 = 1000;

/// `(verb, object, place)` for the built-in event types.
const EVENT_WORDS: [(&str, &str, &str); 16] = [
    ("drive", "car", "street"),
    ("cook", "pasta", "kitchen"),
    ("read", "book", "library"),
    ("wash", "dishes", "sink"),
    ("buy", "groceries", "store"),
    ("eat", "lunch", "cafe"),
    ("type", "email", "office"),
    ("walk", "dog", "park"),
    ("watch", "movie", "lounge"),
    ("paint", "wall", "garage"),
    ("play", "piano", "hall"),
    ("fold", "laundry", "bedroom"),
    ("ride", "bike", "trail"),
    ("water", "plants", "garden"),
    ("fix", "faucet", "bathroom"),
    ("board", "bus", "station"),
];

/// Two caption templates per event type. Across types the templates share at
/// most half of their tokens, so a sentence from another type never earns a
/// positive pseudo-label against this type's groundtruth.
pub fn default_templates(events: usize) -> Vec<Vec<String>> {
    (0..events)
        .map(|e| {
            let (verb, object, place) = match EVENT_WORDS.get(e) {
                Some(&(v, o, p)) => (v.to_owned(), o.to_owned(), p.to_owned()),
                None => (format!("act{e}"), format!("thing{e}"), format!("place{e}")),
            };
            vec![
                format!("i {verb} the {object}"),
                format!("{verb} {object} in the {place}"),
            ]
        })
        .collect()
}

fn default_feature_dim() -> usize {
    32
}
fn default_frames() -> usize {
    6
}
fn default_duration() -> f64 {
    6.0
}
fn default_noise() -> f64 {
    0.5
}
fn default_corruption() -> f64 {
    0.3
}
fn default_important() -> f64 {
    0.25
}
fn default_references() -> usize {
    3
}

/// Generator parameters. `seed`, `videos`, `shots_per_video` and `events`
/// are required in JSON; every other field has a documented default that
/// [`SyntheticSpec::from_json`] fills in explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub videos: usize,
    pub shots_per_video: usize,
    /// Number of event types.
    pub events: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_frames")]
    pub frames_per_shot: usize,
    #[serde(default = "default_duration")]
    pub mean_event_duration: f64,
    /// Caption templates per event type; empty means [`default_templates`].
    #[serde(default)]
    pub templates: Vec<Vec<String>>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_corruption")]
    pub corruption_rate: f64,
    #[serde(default = "default_important")]
    pub important_fraction: f64,
    #[serde(default = "default_references")]
    pub references: usize,
}

impl SyntheticSpec {
    /// The default desk-scale corpus: 25 videos of 60 shots over 8 event types.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            videos: 25,
            shots_per_video: 60,
            events: 8,
            feature_dim: default_feature_dim(),
            frames_per_shot: default_frames(),
            mean_event_duration: default_duration(),
            templates: default_templates(8),
            noise: default_noise(),
            corruption_rate: default_corruption(),
            important_fraction: default_important(),
            references: default_references(),
        }
    }

    /// Parses, fills defaults and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        let spec = spec.resolved();
        spec.validate()?;
        Ok(spec)
    }

    /// Copy with default templates filled in when none were given.
    pub fn resolved(mut self) -> Self {
        if self.templates.is_empty() {
            self.templates = default_templates(self.events);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.events < 2 {
            bad.push("events (must be >= 2)".to_owned());
        }
        if self.videos == 0 {
            bad.push("videos (must be >= 1)".to_owned());
        }
        if self.shots_per_video == 0 {
            bad.push("shots_per_video (must be >= 1)".to_owned());
        }
        if self.feature_dim == 0 {
            bad.push("feature_dim (must be >= 1)".to_owned());
        }
        if self.frames_per_shot == 0 {
            bad.push("frames_per_shot (must be >= 1)".to_owned());
        }
        if !(self.mean_event_duration >= 1.0 && self.mean_event_duration.is_finite()) {
            bad.push("mean_event_duration (must be >= 1)".to_owned());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            bad.push("noise (must be >= 0)".to_owned());
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            bad.push("corruption_rate (must be in [0, 1])".to_owned());
        }
        if !(0.0..=1.0).contains(&self.important_fraction) {
            bad.push("important_fraction (must be in [0, 1])".to_owned());
        }
        if self.references == 0 {
            bad.push("references (must be >= 1)".to_owned());
        }
        if self.templates.len() != self.events {
            bad.push(format!(
                "templates (need {} event entries, got {})",
                self.events,
                self.templates.len()
            ));
        } else if self
            .templates
            .iter()
            .any(|ts| ts.is_empty() || ts.iter().any(|t| tokenize(t).is_empty()))
        {
            bad.push("templates (every event needs non-empty templates)".to_owned());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// Number of important event types.
    pub fn important_types(&self) -> usize {
        (self.important_fraction * self.events as f64).round() as usize
    }
}

fn gaussian(rng: &mut SeededRng, dim: usize, scale: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..dim).map(|_| normal.sample(rng) * scale).collect()
}

/// Generates the corpus described by `spec`. Identical specs give identical
/// corpora.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    let spec = spec.clone().resolved();
    spec.validate()?;
    let d = spec.feature_dim;
    let k = spec.frames_per_shot;
    let templates: Vec<Vec<Caption>> = spec
        .templates
        .iter()
        .map(|ts| ts.iter().map(|t| Caption::from_text(t)).collect())
        .collect();

    let mut rng = rng_for(spec.seed, STREAM_EMBEDDINGS);
    let scenes: Vec<Vec<Vec<f64>>> = templates
        .iter()
        .map(|ts| {
            let base = gaussian(&mut rng, d, 1.0);
            ts.iter()
                .map(|_| {
                    gaussian(&mut rng, d, TEMPLATE_SHIFT)
                        .iter()
                        .zip(&base)
                        .map(|(o, b)| b + o)
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..spec.events).collect();
    order.shuffle(&mut rng_for(spec.seed, STREAM_IMPORTANCE));
    let mut important = vec![false; spec.events];
    for &e in &order[..spec.important_types()] {
        important[e] = true;
    }

    let duration = Geometric::new(1.0 / spec.mean_event_duration)
        .map_err(|e| Error::Validation(vec![format!("mean_event_duration ({e})")]))?;
    let noise = Normal::new(0.0, spec.noise)
        .map_err(|e| Error::Validation(vec![format!("noise ({e})")]))?;

    let mut videos = Vec::with_capacity(spec.videos);
    for v in 0..spec.videos {
        let mut rng = rng_for(spec.seed, STREAM_VIDEO + v as u64);
        let mut shots = Vec::with_capacity(spec.shots_per_video);
        let mut previous: Option<usize> = None;
        while shots.len() < spec.shots_per_video {
            let event = loop {
                let e = rng.random_range(0..spec.events);
                if Some(e) != previous {
                    break e;
                }
            };
            previous = Some(event);
            let template = rng.random_range(0..templates[event].len());
            let length = 1 + duration.sample(&mut rng) as usize;
            let scene = &scenes[event][template];
            for offset in 0..length {
                if shots.len() == spec.shots_per_video {
                    break;
                }
                let mut data = Vec::with_capacity(k * d);
                for _ in 0..k {
                    data.extend(scene.iter().map(|s| s + noise.sample(&mut rng)));
                }
                let injected = if rng.random_bool(spec.corruption_rate) {
                    let other = loop {
                        let e = rng.random_range(0..spec.events);
                        if e != event {
                            break e;
                        }
                    };
                    let t = rng.random_range(0..templates[other].len());
                    Some(templates[other][t].clone())
                } else {
                    None
                };
                shots.push(Shot {
                    index: shots.len(),
                    features: Tensor::matrix(k, d, data)?,
                    groundtruth: templates[event][template].clone(),
                    important: important[event] && offset == 0,
                    injected,
                });
            }
        }
        let summary: Vec<String> = shots
            .iter()
            .filter(|s| s.important)
            .map(|s| format!("{}.", s.groundtruth.text()))
            .collect();
        let summary = summary.join(" ");
        videos.push(Video {
            id: format!("v{v:03}"),
            shots,
            references: vec![summary; spec.references],
        });
    }
    Corpus::new(videos)
}
