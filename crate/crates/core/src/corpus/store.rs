//! Corpus directories on disk.
//!
//! ```text
//! <dir>/annotations.jsonl   {"video", "shot", "caption", "important", ["injected"]}
//! <dir>/references.jsonl    {"video", "ref", "text"}
//! <dir>/features/<id>.tsgf  [N, k, d] frame features per video
//! <dir>/spec.json           resolved generator spec (synthetic corpora only)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{load_features, save_features, split_shots, stack_shots};
use super::model::{Corpus, Shot, Video};
use super::synth::SyntheticSpec;
use super::text::Caption;
use crate::error::{Error, Result};

pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const REFERENCES: &str = "references.jsonl";
pub const FEATURES_DIR: &str = "features";
pub const SPEC: &str = "spec.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationLine {
    pub video: String,
    pub shot: usize,
    pub caption: String,
    pub important: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceLine {
    pub video: String,
    #[serde(rename = "ref")]
    pub reference: usize,
    pub text: String,
}

/// Parses JSON lines, reporting the byte offset of the offending line.
pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.trim();
        if !body.is_empty() {
            let row =
                serde_json::from_str(body).map_err(|e| Error::format(offset, e.to_string()))?;
            out.push(row);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        writeln!(out, "{}", serde_json::to_string(r)?).expect("writing to a String");
    }
    Ok(out)
}

pub fn write_corpus(dir: &Path, corpus: &Corpus, spec: Option<&SyntheticSpec>) -> Result<()> {
    std::fs::create_dir_all(dir.join(FEATURES_DIR))?;
    let mut annotations = Vec::with_capacity(corpus.shot_count());
    let mut references = Vec::new();
    for v in &corpus.videos {
        let features: Vec<_> = v.shots.iter().map(|s| &s.features).collect();
        save_features(
            &dir.join(FEATURES_DIR).join(format!("{}.tsgf", v.id)),
            &stack_shots(&features)?,
        )?;
        for s in &v.shots {
            annotations.push(AnnotationLine {
                video: v.id.clone(),
                shot: s.index,
                caption: s.groundtruth.text(),
                important: s.important.into(),
                injected: s.injected.as_ref().map(Caption::text),
            });
        }
        for (r, text) in v.references.iter().enumerate() {
            references.push(ReferenceLine {
                video: v.id.clone(),
                reference: r,
                text: text.clone(),
            });
        }
    }
    std::fs::write(dir.join(ANNOTATIONS), to_jsonl(&annotations)?)?;
    std::fs::write(dir.join(REFERENCES), to_jsonl(&references)?)?;
    if let Some(spec) = spec {
        std::fs::write(dir.join(SPEC), serde_json::to_string_pretty(spec)? + "\n")?;
    }
    Ok(())
}

/// Reference documents grouped by video id, ordered by reference index.
pub fn read_references(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let rows: Vec<ReferenceLine> = parse_jsonl(&std::fs::read_to_string(path)?)?;
    let mut grouped: BTreeMap<String, BTreeMap<usize, String>> = BTreeMap::new();
    for r in rows {
        if grouped
            .entry(r.video.clone())
            .or_default()
            .insert(r.reference, r.text)
            .is_some()
        {
            return Err(Error::Contract(format!(
                "duplicate reference {} for video {}",
                r.reference, r.video
            )));
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(v, refs)| (v, refs.into_values().collect()))
        .collect())
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let rows: Vec<AnnotationLine> = parse_jsonl(&std::fs::read_to_string(dir.join(ANNOTATIONS))?)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_video: BTreeMap<String, Vec<AnnotationLine>> = BTreeMap::new();
    for row in rows {
        if row.important > 1 {
            return Err(Error::Contract(format!(
                "video {} shot {}: important must be 0 or 1",
                row.video, row.shot
            )));
        }
        if !by_video.contains_key(&row.video) {
            order.push(row.video.clone());
        }
        by_video.entry(row.video.clone()).or_default().push(row);
    }
    let mut references = match std::fs::metadata(dir.join(REFERENCES)) {
        Ok(_) => read_references(&dir.join(REFERENCES))?,
        Err(_) => BTreeMap::new(),
    };

    let mut videos = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = by_video.remove(&id).expect("grouped above");
        rows.sort_by_key(|r| r.shot);
        let features = split_shots(&load_features(
            &dir.join(FEATURES_DIR).join(format!("{id}.tsgf")),
        )?)?;
        if features.len() != rows.len() {
            return Err(Error::Contract(format!(
                "video {id}: {} annotated shots but {} feature blocks",
                rows.len(),
                features.len()
            )));
        }
        let shots = rows
            .into_iter()
            .zip(features)
            .map(|(r, features)| Shot {
                index: r.shot,
                features,
                groundtruth: Caption::from_text(&r.caption),
                important: r.important == 1,
                injected: r.injected.as_deref().map(Caption::from_text),
            })
            .collect();
        videos.push(Video {
            references: references.remove(&id).unwrap_or_default(),
            id,
            shots,
        });
    }
    Corpus::new(videos)
}
