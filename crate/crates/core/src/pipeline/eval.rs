use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::inference::Synopsis;
use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::metrics::{score_document, Scores};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub video: String,
    pub references: usize,
    /// Averaged over references.
    #[serde(flatten)]
    pub scores: Scores,
    /// Against each reference alone, in reference order.
    pub per_reference: Vec<Scores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub videos: Vec<VideoEval>,
    pub macro_average: Scores,
}

/// Scores each synopsis against its video's references. Videos are
/// reported in id order.
pub fn evaluate(
    synopses: &[Synopsis],
    references: &BTreeMap<String, Vec<String>>,
) -> Result<EvalReport> {
    let mut videos = Vec::with_capacity(synopses.len());
    let mut sorted: Vec<&Synopsis> = synopses.iter().collect();
    sorted.sort_by(|a, b| a.video.cmp(&b.video));
    for s in sorted {
        let refs = references
            .get(&s.video)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::Contract(format!("no references for video {}", s.video)))?;
        let candidate = tokenize(&s.text());
        let refs: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
        let per_reference = refs
            .iter()
            .map(|r| score_document(&candidate, std::slice::from_ref(r)))
            .collect::<Result<Vec<_>>>()?;
        videos.push(VideoEval {
            video: s.video.clone(),
            references: refs.len(),
            scores: score_document(&candidate, &refs)?,
            per_reference,
        });
    }
    let all: Vec<Scores> = videos.iter().map(|v| v.scores).collect();
    Ok(EvalReport {
        seed: None,
        config_hash: None,
        macro_average: Scores::mean(&all),
        videos,
    })
}

/// 64-bit FNV-1a of `bytes`, as 16 hex digits.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
