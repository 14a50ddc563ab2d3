//! Impact series, repeated peak selection and synopsis assembly.

use serde::{Deserialize, Serialize};

use crate::corpus::Caption;
use crate::error::{Error, Result};

/// Elementwise product of correctness and significance.
pub fn impact(alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != beta.len() {
        return Err(Error::Contract(format!(
            "impact: {} correctness scores but {} significance scores",
            alpha.len(),
            beta.len()
        )));
    }
    Ok(alpha.iter().zip(beta).map(|(a, b)| a * b).collect())
}

/// Strict local maxima. An endpoint qualifies when it is strictly greater
/// than its one neighbour and a lone point always qualifies. When nothing
/// qualifies (for example a constant series) the first argmax is returned.
pub fn find_peaks(series: &[f64]) -> Vec<usize> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let peaks: Vec<usize> = (0..n)
        .filter(|&p| {
            let left = p == 0 || series[p] > series[p - 1];
            let right = p + 1 == n || series[p] > series[p + 1];
            left && right
        })
        .collect();
    if !peaks.is_empty() {
        return peaks;
    }
    let mut best = 0;
    for (p, v) in series.iter().enumerate() {
        if *v > series[best] {
            best = p;
        }
    }
    vec![best]
}

/// Survivors after each pass, as indices into `series`. Pass `t` runs
/// [`find_peaks`] on the values kept by pass `t - 1`.
pub fn inference_trace(series: &[f64], passes: usize) -> Result<Vec<Vec<usize>>> {
    if passes == 0 {
        return Err(Error::Config(
            "at least one inference pass is required".into(),
        ));
    }
    let mut kept: Vec<usize> = (0..series.len()).collect();
    let mut trace = Vec::with_capacity(passes);
    for _ in 0..passes {
        let values: Vec<f64> = kept.iter().map(|&i| series[i]).collect();
        kept = find_peaks(&values).into_iter().map(|j| kept[j]).collect();
        trace.push(kept.clone());
    }
    Ok(trace)
}

pub fn iterate_inference(series: &[f64], passes: usize) -> Result<Vec<usize>> {
    Ok(inference_trace(series, passes)?.pop().unwrap_or_default())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynopsisEntry {
    pub shot: usize,
    pub sentence: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synopsis {
    pub video: String,
    pub entries: Vec<SynopsisEntry>,
    pub passes: usize,
}

impl Synopsis {
    /// One sentence per line.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.sentence);
            out.push('\n');
        }
        out
    }

    pub fn shots(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.shot).collect()
    }
}

/// Selects shots by repeated peak picking on `gamma`, then collapses runs
/// of identical consecutive sentences onto their earliest shot.
pub fn assemble_synopsis(
    video: &str,
    sentences: &[Caption],
    gamma: &[f64],
    passes: usize,
) -> Result<Synopsis> {
    if sentences.len() != gamma.len() {
        return Err(Error::Contract(format!(
            "{} sentences but {} impact values",
            sentences.len(),
            gamma.len()
        )));
    }
    if gamma.is_empty() {
        return Err(Error::Domain(format!("video {video} has no shots")));
    }
    let mut entries: Vec<SynopsisEntry> = Vec::new();
    for p in iterate_inference(gamma, passes)? {
        let sentence = sentences[p].text();
        if entries.last().is_some_and(|e| e.sentence == sentence) {
            continue;
        }
        entries.push(SynopsisEntry { shot: p, sentence });
    }
    Ok(Synopsis {
        video: video.to_owned(),
        entries,
        passes,
    })
}

/// Shot indices of the synopsis in temporal order.
pub fn retrieve_visual(synopsis: &Synopsis, shot_count: usize) -> Result<Vec<usize>> {
    let shots = synopsis.shots();
    if let Some(&bad) = shots.iter().find(|&&s| s >= shot_count) {
        return Err(Error::Contract(format!(
            "synopsis shot {bad} is outside video {} with {shot_count} shots",
            synopsis.video
        )));
    }
    Ok(shots)
}

/// Upper bound on survivors: `passes` rounds of `ceil(n / 2)`.
pub fn halving_bound(n: usize, passes: usize) -> usize {
    (0..passes).fold(n, |m, _| m.div_ceil(2))
}
