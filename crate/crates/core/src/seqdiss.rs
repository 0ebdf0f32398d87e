//! Action-sequence handling and pairwise dissimilarity.
//!
//! The default metric is an order-based sequence similarity (OSS): occurrences
//! of each shared token are matched greedily in order between the two
//! sequences, matched pairs contribute the absolute difference of their
//! normalized (1-based) positions, unmatched occurrences contribute 1 each,
//! and the total is divided by the combined length. The result is symmetric,
//! lies in [0, 1], and is 0 exactly for identical token lists.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One person x item log of ordered action tokens.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ActionSequence {
    #[serde(rename = "pid")]
    pub person_id: String,
    #[serde(rename = "item")]
    pub item_id: String,
    pub actions: Vec<String>,
}

impl ActionSequence {
    pub fn new(
        person_id: impl Into<String>,
        item_id: impl Into<String>,
        actions: Vec<String>,
    ) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidSequence("empty action sequence".into()));
        }
        if actions.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidSequence("empty action token".into()));
        }
        Ok(Self {
            person_id: person_id.into(),
            item_id: item_id.into(),
            actions,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// The "looked at nothing and moved on" pattern; exclusion is an ingestion
/// policy, not a metric concern.
pub const OMISSION_ACTIONS: [&str; 3] = ["Start", "Next", "Next_OK"];

pub fn is_omission(seq: &ActionSequence) -> bool {
    seq.actions.len() == OMISSION_ACTIONS.len()
        && seq.actions.iter().zip(OMISSION_ACTIONS).all(|(a, b)| a == b)
}

/// Pairwise dissimilarities for one item's sequences.
#[derive(Debug, Clone)]
pub struct DissimilarityMatrix {
    pub ids: Vec<String>,
    values: Array2<f64>,
}

impl DissimilarityMatrix {
    pub fn from_values(ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let n = ids.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "dissimilarity matrix".into(),
                expected: n,
                got: values.nrows().max(values.ncols()),
            });
        }
        for i in 0..n {
            if values[[i, i]].abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "nonzero diagonal at {i}: {}",
                    values[[i, i]]
                )));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!(
                        "dissimilarity out of [0,1] at ({i},{j}): {v}"
                    )));
                }
                if (v - values[[j, i]]).abs() > 1e-12 {
                    return Err(Error::Domain(format!("asymmetric entries at ({i},{j})")));
                }
            }
        }
        Ok(Self { ids, values })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Principal submatrix for the given person indices, in the given order.
    pub fn subset(&self, keep: &[usize]) -> DissimilarityMatrix {
        let mut values = Array2::zeros((keep.len(), keep.len()));
        for (r, &i) in keep.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                values[[r, c]] = self.values[[i, j]];
            }
        }
        DissimilarityMatrix {
            ids: keep.iter().map(|&i| self.ids[i].clone()).collect(),
            values,
        }
    }
}

/// Token occurrence lists sorted by token, for merge-join pairing.
struct Prepared<'a> {
    len: f64,
    tokens: Vec<(&'a str, Vec<u32>)>,
}

fn prepare(seq: &ActionSequence) -> Prepared<'_> {
    let mut tokens: Vec<(&str, Vec<u32>)> = Vec::new();
    let mut index: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (pos, tok) in seq.actions.iter().enumerate() {
        match index.get(tok.as_str()) {
            Some(&k) => tokens[k].1.push(pos as u32 + 1),
            None => {
                index.insert(tok, tokens.len());
                tokens.push((tok, vec![pos as u32 + 1]));
            }
        }
    }
    tokens.sort_unstable_by(|a, b| a.0.cmp(b.0));
    Prepared {
        len: seq.actions.len() as f64,
        tokens,
    }
}

fn oss_prepared(s: &Prepared<'_>, t: &Prepared<'_>) -> f64 {
    let mut matched_dist = 0.0;
    let mut unmatched = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < s.tokens.len() && j < t.tokens.len() {
        match s.tokens[i].0.cmp(t.tokens[j].0) {
            std::cmp::Ordering::Less => {
                unmatched += s.tokens[i].1.len();
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                unmatched += t.tokens[j].1.len();
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let ps = &s.tokens[i].1;
                let pt = &t.tokens[j].1;
                let m = ps.len().min(pt.len());
                for k in 0..m {
                    matched_dist += (ps[k] as f64 / s.len - pt[k] as f64 / t.len).abs();
                }
                unmatched += ps.len() + pt.len() - 2 * m;
                i += 1;
                j += 1;
            }
        }
    }
    for (_, ps) in &s.tokens[i..] {
        unmatched += ps.len();
    }
    for (_, pt) in &t.tokens[j..] {
        unmatched += pt.len();
    }
    (matched_dist + unmatched as f64) / (s.len + t.len)
}

fn check_pair(s: &ActionSequence, t: &ActionSequence) -> Result<()> {
    if s.actions.is_empty() || t.actions.is_empty() {
        return Err(Error::InvalidSequence("empty action sequence".into()));
    }
    if s.item_id != t.item_id {
        return Err(Error::InvalidSequence(format!(
            "item mismatch: {} vs {}",
            s.item_id, t.item_id
        )));
    }
    Ok(())
}

/// Order-based sequence dissimilarity in [0, 1].
pub fn oss(s: &ActionSequence, t: &ActionSequence) -> Result<f64> {
    check_pair(s, t)?;
    Ok(oss_prepared(&prepare(s), &prepare(t)))
}

/// A pluggable pairwise dissimilarity; implementations must be symmetric,
/// zero for identical sequences, and bounded in [0, 1].
pub trait SequenceMetric: Sync {
    fn name(&self) -> &'static str;
    fn dissimilarity(&self, s: &ActionSequence, t: &ActionSequence) -> Result<f64>;
}

/// The default order-based metric.
pub struct Oss;

impl SequenceMetric for Oss {
    fn name(&self) -> &'static str {
        "oss"
    }

    fn dissimilarity(&self, s: &ActionSequence, t: &ActionSequence) -> Result<f64> {
        oss(s, t)
    }
}

fn check_corpus(seqs: &[ActionSequence]) -> Result<()> {
    if seqs.is_empty() {
        return Err(Error::InvalidSequence("no sequences supplied".into()));
    }
    let item = &seqs[0].item_id;
    if seqs.iter().any(|s| &s.item_id != item) {
        return Err(Error::InvalidSequence(
            "sequences span more than one item".into(),
        ));
    }
    let mut ids: Vec<&str> = seqs.iter().map(|s| s.person_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidSequence(format!(
            "duplicate person id {}",
            w[0]
        )));
    }
    Ok(())
}

/// All pairwise OSS dissimilarities for one item.
pub fn dissimilarity_matrix(seqs: &[ActionSequence]) -> Result<DissimilarityMatrix> {
    check_corpus(seqs)?;
    let n = seqs.len();
    let prepared: Vec<Prepared<'_>> = seqs.iter().map(prepare).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| oss_prepared(&prepared[i], &prepared[j]))
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(DissimilarityMatrix {
        ids: seqs.iter().map(|s| s.person_id.clone()).collect(),
        values,
    })
}

/// As `dissimilarity_matrix` with a caller-chosen metric.
pub fn dissimilarity_matrix_with(
    metric: &dyn SequenceMetric,
    seqs: &[ActionSequence],
) -> Result<DissimilarityMatrix> {
    check_corpus(seqs)?;
    let n = seqs.len();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = metric.dissimilarity(&seqs[i], &seqs[j])?;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    DissimilarityMatrix::from_values(seqs.iter().map(|s| s.person_id.clone()).collect(), values)
}

/// OSS of one new sequence against each training sequence, in training order.
pub fn cross_dissimilarities(
    new_seq: &ActionSequence,
    train_seqs: &[ActionSequence],
) -> Result<Vec<f64>> {
    let prepared_new = prepare(new_seq);
    train_seqs
        .iter()
        .map(|s| {
            check_pair(s, new_seq)?;
            Ok(oss_prepared(&prepare(s), &prepared_new))
        })
        .collect()
}
