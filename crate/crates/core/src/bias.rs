//! Methods that bias a classifier toward fewer false negatives or fewer false
//! positives: label-flip retraining, class-weighted training, threshold
//! shifting, plus score-averaging ensembles.
//!
//! Label-flip retraining scores the training set with a pre-trained model,
//! takes the wrongly-predicted pool (false positives when minimizing false
//! negatives, false negatives when minimizing false positives), relabels a
//! fraction of that pool to the opposite class and continues training from
//! the pre-trained parameters on the relabeled data.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;

use crate::dataset::{relabel, Dataset, Label, ScoreVector};
use crate::error::{Error, Result};
use crate::metrics::{confusion_at_threshold, predicted_label, ConfusionMatrix};
use crate::models::{predict_scores, train, ClassWeights, Classifier, ClassifierSpec, TrainConfig};
use crate::rng::stream;

/// Default decision threshold for pool identification and evaluation.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Relabel false positives as 1; raises recall.
    MinimizeFn,
    /// Relabel false negatives as 0; raises precision.
    MinimizeFp,
}

impl Direction {
    /// `(label the pool members have, label they are flipped to)`.
    pub fn flip(self) -> (Label, Label) {
        match self {
            Direction::MinimizeFn => (0, 1),
            Direction::MinimizeFp => (1, 0),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::MinimizeFn => "minimize_fn",
            Direction::MinimizeFp => "minimize_fp",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimize_fn" => Ok(Direction::MinimizeFn),
            "minimize_fp" => Ok(Direction::MinimizeFp),
            _ => Err(Error::Config(format!("unknown direction {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SelectionPolicy {
    /// Most confidently wrong pool members first.
    #[default]
    ScoreRanked,
    /// Uniform sample without replacement, seeded from the retrain seed.
    SeededRandom,
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionPolicy::ScoreRanked => "score_ranked",
            SelectionPolicy::SeededRandom => "seeded_random",
        })
    }
}

impl FromStr for SelectionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score_ranked" => Ok(SelectionPolicy::ScoreRanked),
            "seeded_random" => Ok(SelectionPolicy::SeededRandom),
            _ => Err(Error::Config(format!("unknown selection policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasPlan {
    pub direction: Direction,
    pub flip_fraction: f64,
    pub selection_policy: SelectionPolicy,
    /// Threshold the pool is identified at.
    pub pool_threshold: f64,
    /// Retraining budget; `warm_start` must hold the pre-trained model.
    pub retrain: TrainConfig,
}

impl BiasPlan {
    pub fn new(direction: Direction, flip_fraction: f64, retrain: TrainConfig) -> Self {
        BiasPlan {
            direction,
            flip_fraction,
            selection_policy: SelectionPolicy::ScoreRanked,
            pool_threshold: DEFAULT_THRESHOLD,
            retrain,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return Err(Error::OutOfRange {
                name: "flip_fraction",
                value: self.flip_fraction,
                expected: "[0, 1]",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry {
    pub id: u64,
    pub score: f64,
}

/// Wrongly-predicted training examples, most confidently wrong first, plus
/// the confusion matrix they were read from.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub direction: Direction,
    pub entries: Vec<PoolEntry>,
    pub matrix: ConfusionMatrix,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipEntry {
    pub id: u64,
    pub old_label: Label,
    pub new_label: Label,
    /// ŷ of the pre-trained model when the pool was identified.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlipRecord {
    pub direction: Direction,
    pub flip_fraction: f64,
    pub pool_size: usize,
    pub flipped: Vec<FlipEntry>,
    pub source_matrix: ConfusionMatrix,
}

impl FlipRecord {
    pub const CSV_HEADER: &'static str = "id,old_label,new_label,score_at_selection";

    pub fn flipped_ids(&self) -> Vec<u64> {
        self.flipped.iter().map(|f| f.id).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for f in &self.flipped {
            out.push_str(&format!(
                "{},{},{},{}\n",
                f.id, f.old_label, f.new_label, f.score
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `round_half_up(fraction × pool_len)`.
pub fn flip_count(flip_fraction: f64, pool_len: usize) -> usize {
    let x = flip_fraction * pool_len as f64;
    // Snap away representation error so that e.g. 0.7 * 5 rounds as 3.5.
    let snapped = (x * 1e9).round() / 1e9;
    ((snapped + 0.5).floor() as usize).min(pool_len)
}

pub fn identify_pool(
    model: &Classifier,
    train: &Dataset,
    direction: Direction,
    threshold: f64,
) -> Result<Pool> {
    let scores = predict_scores(model, train)?;
    pool_from_scores(&scores, train, direction, threshold)
}

/// Pool identification from precomputed scores.
pub fn pool_from_scores(
    scores: &ScoreVector,
    data: &Dataset,
    direction: Direction,
    threshold: f64,
) -> Result<Pool> {
    let matrix = confusion_at_threshold(scores, data, threshold)?;
    let aligned = scores.aligned_to(data)?;
    let (source, _) = direction.flip();
    let mut entries: Vec<PoolEntry> = data
        .examples()
        .iter()
        .zip(aligned.iter())
        .filter(|(ex, &s)| ex.label == source && predicted_label(s, threshold) != source)
        .map(|(ex, &s)| PoolEntry {
            id: ex.id,
            score: s,
        })
        .collect();
    match direction {
        Direction::MinimizeFn => {
            entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)))
        }
        Direction::MinimizeFp => {
            entries.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)))
        }
    }
    Ok(Pool {
        direction,
        entries,
        matrix,
    })
}

pub fn apply_label_flip(
    train: &Dataset,
    pool: &Pool,
    plan: &BiasPlan,
) -> Result<(Dataset, FlipRecord)> {
    plan.validate()?;
    let idx = train.index_of();
    let (from, to) = plan.direction.flip();
    for e in &pool.entries {
        let pos = *idx.get(&e.id).ok_or(Error::UnknownId(e.id))?;
        if train.examples()[pos].label != from {
            return Err(Error::InvalidSpec(format!(
                "pool id {} has label {}, expected {from} for {}",
                e.id,
                train.examples()[pos].label,
                plan.direction
            )));
        }
    }

    let k = flip_count(plan.flip_fraction, pool.len());
    let chosen: Vec<PoolEntry> = match plan.selection_policy {
        SelectionPolicy::ScoreRanked => pool.entries[..k].to_vec(),
        SelectionPolicy::SeededRandom => {
            let mut rng = plan.retrain.seed.derive(stream::SELECT, 0).rng();
            let mut picks = index::sample(&mut rng, pool.len(), k).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| pool.entries[i]).collect()
        }
    };
    let flips: Vec<(u64, i64)> = chosen.iter().map(|e| (e.id, to as i64)).collect();
    let relabeled = relabel(train, &flips)?;
    let record = FlipRecord {
        direction: plan.direction,
        flip_fraction: plan.flip_fraction,
        pool_size: pool.len(),
        flipped: chosen
            .iter()
            .map(|e| FlipEntry {
                id: e.id,
                old_label: from,
                new_label: to,
                score: e.score,
            })
            .collect(),
        source_matrix: pool.matrix,
    };
    Ok((relabeled, record))
}

/// Identify pool → relabel a fraction of it → warm-start retrain.
///
/// `train` is not modified; evaluation must keep using the original labels.
/// If `plan.retrain.warm_start` is unset it is filled with `pretrained`.
pub fn run_label_flip_method(
    pretrained: &Classifier,
    train_data: &Dataset,
    plan: &BiasPlan,
) -> Result<(Classifier, FlipRecord)> {
    plan.validate()?;
    let mut retrain = plan.retrain.clone();
    match &retrain.warm_start {
        Some(w) if w != pretrained => return Err(Error::WarmStartMismatch),
        Some(_) => {}
        None => retrain.warm_start = Some(pretrained.clone()),
    }
    let pool = identify_pool(pretrained, train_data, plan.direction, plan.pool_threshold)?;
    let (relabeled, record) = apply_label_flip(train_data, &pool, plan)?;
    let model = train(&relabeled, pretrained.spec(), &retrain)?;
    Ok((model, record))
}

/// Plain training with the loss multipliers set to `weights`.
pub fn train_with_class_weights(
    train_data: &Dataset,
    spec: &ClassifierSpec,
    config: &TrainConfig,
    weights: ClassWeights,
) -> Result<Classifier> {
    let config = TrainConfig {
        class_weights: weights,
        ..config.clone()
    };
    train(train_data, spec, &config)
}

pub fn threshold_shift_predict(
    model: &Classifier,
    data: &Dataset,
    threshold: f64,
) -> Result<ConfusionMatrix> {
    let scores = predict_scores(model, data)?;
    confusion_at_threshold(&scores, data, threshold)
}

/// Unweighted per-id mean of member scores.
pub fn ensemble_scores(models: &[Classifier], data: &Dataset) -> Result<ScoreVector> {
    let (first, rest) = models.split_first().ok_or(Error::EmptyEnsemble)?;
    let base = predict_scores(first, data)?;
    let mut sum = base.scores().to_vec();
    let mut lo = sum.clone();
    let mut hi = sum.clone();
    for m in rest {
        let s = predict_scores(m, data)?;
        for (i, &v) in s.scores().iter().enumerate() {
            sum[i] += v;
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    let n = models.len() as f64;
    // Rounding in the sum can push the mean an ulp outside the member range.
    let mean = sum
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(s, (l, h))| (s / n).clamp(*l, *h))
        .collect();
    ScoreVector::new(base.ids().to_vec(), mean)
}
