use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercases, splits on whitespace and strips leading/trailing ASCII
/// punctuation from each token, dropping tokens that end up empty.
///
/// Reserved markers such as `<unk>` lose their angle brackets here, so raw
/// text can never produce a reserved token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// An ordered token sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Caption(Vec<String>);

impl Caption {
    pub fn new(tokens: Vec<String>) -> Self {
        Self(tokens)
    }

    pub fn from_text(text: &str) -> Self {
        Self(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn text(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl From<&str> for Caption {
    fn from(text: &str) -> Self {
        Self::from_text(text)
    }
}

/// Token list with reserved indices `0..4` for PAD, BOS, EOS and UNK.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Tokens with frequency at least `min_count`, ordered by descending
    /// frequency then lexicographically.
    pub fn build<'a>(
        captions: impl IntoIterator<Item = &'a Caption>,
        min_count: usize,
    ) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Domain("min_count must be at least 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut seen_any = false;
        for caption in captions {
            seen_any = true;
            for t in caption.tokens() {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        if !seen_any {
            return Err(Error::Domain(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(
            RESERVED
                .iter()
                .map(|s| s.to_string())
                .chain(kept.into_iter().map(|(t, _)| t.to_owned()))
                .collect(),
        )
    }

    /// Rebuilds a vocabulary from its full token list (reserved tokens first).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Domain(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Domain(format!("duplicate vocabulary token {t}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }

    pub fn encode(&self, caption: &Caption) -> Vec<usize> {
        caption.tokens().iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Caption> {
        ids.iter()
            .map(|&i| {
                self.token(i).map(str::to_owned).ok_or(Error::Index {
                    index: i,
                    bound: self.len(),
                })
            })
            .collect::<Result<_>>()
            .map(Caption::new)
    }
}
