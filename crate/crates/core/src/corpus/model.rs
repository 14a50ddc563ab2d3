use std::ops::Range;

use super::text::Caption;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// One fixed-length video segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Shot {
    pub index: usize,
    /// `[k, d]` frame features.
    pub features: Tensor,
    pub groundtruth: Caption,
    /// Whether the groundtruth sentence belongs to the user summary.
    pub important: bool,
    /// A wrong sentence standing in for a captioning failure on this shot.
    /// When present it replaces the decoded sentence during joint training
    /// and inference, and is scored against the groundtruth like any other.
    pub injected: Option<Caption>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub id: String,
    pub shots: Vec<Shot>,
    /// Reference summary documents.
    pub references: Vec<String>,
}

impl Video {
    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    /// Maximal runs of consecutive shots that share a groundtruth sentence.
    /// On synthetic corpora these are exactly the latent event occurrences.
    pub fn segments(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for p in 1..=self.shots.len() {
            if p == self.shots.len() || self.shots[p].groundtruth != self.shots[start].groundtruth {
                out.push(start..p);
                start = p;
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        if self.shots.is_empty() {
            return Err(Error::Contract(format!("video {} has no shots", self.id)));
        }
        for (i, s) in self.shots.iter().enumerate() {
            if s.index != i {
                return Err(Error::Contract(format!(
                    "video {} shot indices are not contiguous at position {i}",
                    self.id
                )));
            }
            if s.groundtruth.is_empty() {
                return Err(Error::Contract(format!(
                    "video {} shot {i} has an empty caption",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A collection of videos with constant frame count and feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub frames: usize,
    pub feature_dim: usize,
    pub videos: Vec<Video>,
}

impl Corpus {
    pub fn new(videos: Vec<Video>) -> Result<Self> {
        let first = videos
            .first()
            .and_then(|v| v.shots.first())
            .ok_or_else(|| Error::Contract("corpus has no shots".into()))?;
        let (frames, feature_dim) = first
            .features
            .dims2()
            .ok_or_else(|| Error::Contract("shot features must be a [k, d] matrix".into()))?;
        for v in &videos {
            v.check()?;
            for s in &v.shots {
                if s.features.shape() != [frames, feature_dim] {
                    return Err(Error::Dimension {
                        op: "corpus",
                        left: vec![frames, feature_dim],
                        right: s.features.shape().to_vec(),
                    });
                }
            }
        }
        Ok(Self {
            frames,
            feature_dim,
            videos,
        })
    }

    pub fn video(&self, id: &str) -> Option<&Video> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn shots(&self) -> impl Iterator<Item = &Shot> {
        self.videos.iter().flat_map(|v| v.shots.iter())
    }

    pub fn shot_count(&self) -> usize {
        self.videos.iter().map(Video::len).sum()
    }

    /// Splits off the last `holdout` videos (in corpus order) for testing.
    pub fn split(&self, holdout: usize) -> Result<(Vec<&Video>, Vec<&Video>)> {
        if holdout >= self.videos.len() {
            return Err(Error::Config(format!(
                "holdout of {holdout} leaves no training videos out of {}",
                self.videos.len()
            )));
        }
        let cut = self.videos.len() - holdout;
        Ok((
            self.videos[..cut].iter().collect(),
            self.videos[cut..].iter().collect(),
        ))
    }
}
