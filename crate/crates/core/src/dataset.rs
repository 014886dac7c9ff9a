//! Datasets, score vectors and splitting.

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Binary ground truth, kept as an integer so flip counts are plain sums.
pub type Label = u8;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Label,
}

impl Example {
    pub fn new(id: u64, features: Vec<f64>, label: Label) -> Self {
        Example {
            id,
            features,
            label,
        }
    }
}

/// An ordered, validated collection of examples sharing one feature dimension.
///
/// Datasets are values: every transforming operation returns a new one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, feature_dim: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if ex.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    found: ex.features.len(),
                });
            }
            if ex.label > 1 {
                return Err(Error::NonBinaryLabel(ex.label as i64));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature(ex.id));
            }
            if !seen.insert(ex.id) {
                return Err(Error::DuplicateId(ex.id));
            }
        }
        Ok(Dataset {
            examples,
            feature_dim,
        })
    }

    /// Builds a dataset with sequential ids `0..n` from row-major features.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let examples = rows
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (f, y))| Example::new(i as u64, f, y))
            .collect();
        Dataset::new(examples, dim)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.examples.iter().map(|e| e.id)
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.examples.iter().map(|e| e.label)
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn max_id(&self) -> Option<u64> {
        self.ids().max()
    }

    pub(crate) fn index_of(&self) -> HashMap<u64, usize> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id, i))
            .collect()
    }

    /// Returns the subset of examples at `positions`, keeping their order.
    pub(crate) fn select(&self, positions: &[usize]) -> Dataset {
        Dataset {
            examples: positions
                .iter()
                .map(|&i| self.examples[i].clone())
                .collect(),
            feature_dim: self.feature_dim,
        }
    }

    /// Inverts every label. Used to build the mirrored task.
    pub fn with_swapped_labels(&self) -> Dataset {
        let mut out = self.clone();
        for ex in &mut out.examples {
            ex.label = 1 - ex.label;
        }
        out
    }
}

/// Model outputs ŷ ∈ \[0,1\], one per example id, in the scored dataset's order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    ids: Vec<u64>,
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(ids: Vec<u64>, scores: Vec<f64>) -> Result<Self> {
        if ids.len() != scores.len() {
            return Err(Error::IdMismatch);
        }
        if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::OutOfRange {
                name: "score",
                value: s,
                expected: "[0, 1]",
            });
        }
        Ok(ScoreVector { ids, scores })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<f64> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .map(|p| self.scores[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.ids.iter().copied().zip(self.scores.iter().copied())
    }

    /// Scores reordered to follow `data`'s example order.
    ///
    /// Fails unless the id sets are identical.
    pub fn aligned_to(&self, data: &Dataset) -> Result<Cow<'_, [f64]>> {
        if self.len() != data.len() {
            return Err(Error::IdMismatch);
        }
        if self.ids.iter().copied().eq(data.ids()) {
            return Ok(Cow::Borrowed(&self.scores));
        }
        let lookup: HashMap<u64, f64> = self.iter().collect();
        if lookup.len() != self.len() {
            return Err(Error::IdMismatch);
        }
        data.ids()
            .map(|id| lookup.get(&id).copied().ok_or(Error::IdMismatch))
            .collect::<Result<Vec<_>>>()
            .map(Cow::Owned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction_of_train: f64,
    pub seed: RngSeed,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            val_fraction_of_train: 0.2,
            seed: RngSeed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

// Products like 100 * (1 - 0.8) land a hair under the integer.
fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor() as usize
}

/// Seeded shuffle of positions, then contiguous slices `[test | val | train]`.
///
/// `|test| = ⌊n·(1 − train_fraction)⌋`, `|val| = ⌊(n − |test|)·val_fraction⌋`,
/// and train takes the remainder. Each part keeps the input's example order.
pub fn split_dataset(data: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::OutOfRange {
            name: "train_fraction",
            value: spec.train_fraction,
            expected: "(0, 1)",
        });
    }
    if !(spec.val_fraction_of_train >= 0.0 && spec.val_fraction_of_train < 1.0) {
        return Err(Error::OutOfRange {
            name: "val_fraction_of_train",
            value: spec.val_fraction_of_train,
            expected: "[0, 1)",
        });
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut spec.seed.rng());

    let n_test = floor_count(n as f64 * (1.0 - spec.train_fraction)).min(n);
    let n_val = floor_count((n - n_test) as f64 * spec.val_fraction_of_train);

    let part = |range: &[usize]| {
        let mut p = range.to_vec();
        p.sort_unstable();
        data.select(&p)
    };
    Ok(Split {
        test: part(&order[..n_test]),
        val: part(&order[n_test..n_test + n_val]),
        train: part(&order[n_test + n_val..]),
    })
}

/// Returns a copy of `data` with the listed labels replaced.
pub fn relabel(data: &Dataset, flips: &[(u64, i64)]) -> Result<Dataset> {
    let index = data.index_of();
    let mut out = data.clone();
    for &(id, new_label) in flips {
        let pos = *index.get(&id).ok_or(Error::UnknownId(id))?;
        if !(0..=1).contains(&new_label) {
            return Err(Error::NonBinaryLabel(new_label));
        }
        out.examples[pos].label = new_label as Label;
    }
    Ok(out)
}
