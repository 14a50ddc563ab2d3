//! Text-overlap scores over flat token sequences.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing value substituted for a zero n-gram match count in BLEU.
pub const BLEU_EPS: f64 = 1e-9;
/// Largest position difference of a skip-bigram in ROUGE-SU4.
pub const SKIP_SPAN: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        if candidate == 0 || reference == 0 {
            return Self::default();
        }
        Self::new(
            overlap as f64 / candidate as f64,
            overlap as f64 / reference as f64,
        )
    }

    /// Componentwise mean. The `f1` field is the mean of the F1 values, not
    /// the harmonic mean of the averaged precision and recall.
    pub fn mean(items: &[Prf]) -> Prf {
        if items.is_empty() {
            return Prf::default();
        }
        let n = items.len() as f64;
        Prf {
            precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
            recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
            f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
        }
    }
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Unit<'a, T> {
    Uni(&'a T),
    Skip(&'a T, &'a T),
}

fn su4_units<T: Eq + Hash>(tokens: &[T]) -> HashMap<Unit<'_, T>, usize> {
    let mut units = HashMap::new();
    for (i, t) in tokens.iter().enumerate() {
        *units.entry(Unit::Uni(t)).or_insert(0) += 1;
        for u in tokens.iter().take(i + SKIP_SPAN + 1).skip(i + 1) {
            *units.entry(Unit::Skip(t, u)).or_insert(0) += 1;
        }
    }
    units
}

/// ROUGE with unigrams plus skip-bigrams that skip at most four tokens.
pub fn rouge_su4<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Prf {
    let c = su4_units(candidate);
    let r = su4_units(reference);
    let overlap = c
        .iter()
        .map(|(u, &n)| n.min(r.get(u).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(overlap, c.values().sum(), r.values().sum())
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut out = HashMap::new();
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Corpus-level BLEU with 1- and 2-gram clipped precisions.
pub fn bleu2<T: Eq + Hash, S: AsRef<[T]>>(candidates: &[S], references: &[S]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Contract(format!(
            "bleu2: {} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; 2];
    let mut totals = [0usize; 2];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (c.as_ref(), r.as_ref());
        c_len += c.len();
        r_len += r.len();
        for n in 1..=2 {
            let rc = ngram_counts(r, n);
            for (g, k) in ngram_counts(c, n) {
                matches[n - 1] += k.min(rc.get(g).copied().unwrap_or(0));
            }
            totals[n - 1] += c.len().saturating_sub(n - 1);
        }
    }
    if c_len == 0 {
        return Ok(0.0);
    }
    let precision = |n: usize| {
        if matches[n] == 0 {
            BLEU_EPS / totals[n].max(1) as f64
        } else {
            matches[n] as f64 / totals[n] as f64
        }
    };
    let bp = if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * (precision(0) * precision(1)).sqrt())
}

/// Scores a candidate against each reference and averages.
pub fn multi_ref<T, F>(candidate: &[T], references: &[Vec<T>], metric: F) -> Prf
where
    F: Fn(&[T], &[T]) -> Prf,
{
    let scores: Vec<Prf> = references.iter().map(|r| metric(candidate, r)).collect();
    Prf::mean(&scores)
}

/// Mean single-reference F1; see [`multi_ref`].
pub fn multi_ref_f1<T, F>(candidate: &[T], references: &[Vec<T>], metric: F) -> f64
where
    F: Fn(&[T], &[T]) -> Prf,
{
    multi_ref(candidate, references, metric).f1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rouge_su4: Prf,
    pub rouge_l: Prf,
    pub bleu2: f64,
}

/// All three metrics for one candidate document against its references.
/// BLEU-2 is computed per reference as a one-document corpus and averaged.
pub fn score_document<T: Eq + Hash>(candidate: &[T], references: &[Vec<T>]) -> Result<Scores> {
    if references.is_empty() {
        return Err(Error::Contract("at least one reference is required".into()));
    }
    let mut bleu = 0.0;
    for r in references {
        bleu += bleu2(&[candidate], &[r.as_slice()])?;
    }
    Ok(Scores {
        rouge_su4: multi_ref(candidate, references, rouge_su4),
        rouge_l: multi_ref(candidate, references, rouge_l),
        bleu2: bleu / references.len() as f64,
    })
}

impl Scores {
    pub fn mean(items: &[Scores]) -> Scores {
        if items.is_empty() {
            return Scores::default();
        }
        let su4: Vec<Prf> = items.iter().map(|s| s.rouge_su4).collect();
        let l: Vec<Prf> = items.iter().map(|s| s.rouge_l).collect();
        Scores {
            rouge_su4: Prf::mean(&su4),
            rouge_l: Prf::mean(&l),
            bleu2: items.iter().map(|s| s.bleu2).sum::<f64>() / items.len() as f64,
        }
    }
}
