//! Experiment sweeps over flip fractions, class weights and thresholds,
//! before/after ensemble comparison, and table/scatter export.
//!
//! # Seeds
//!
//! Every replicate `r` draws its randomness from `base_seed` through
//! [`RngSeed::derive`]:
//!
//! | use                         | seed                                    |
//! |-----------------------------|-----------------------------------------|
//! | Gaussian task generation    | `base.derive(DATA, r)`                  |
//! | train/val/test split        | `base.derive(SPLIT, r)`                 |
//! | train-split oversampling    | `base.derive(BALANCE, r)`               |
//! | model `j` training / init   | `base.derive(INIT, r).derive(INIT, j)`  |
//! | model `j` retraining        | `base.derive(RETRAIN, r).derive(RETRAIN, j)` |
//!
//! Sweeps use a single model (`j = 0`). All ladder cells of a replicate share
//! its data, split and base model, so each row is a paired comparison with
//! its `base_*` columns.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::bias::{
    ensemble_scores, run_label_flip_method, train_with_class_weights, BiasPlan, Direction,
    FlipRecord, SelectionPolicy, DEFAULT_THRESHOLD,
};
use crate::data::{
    balance_by_oversampling, generate_gaussian_task, load_csv, save_csv, CsvSchema,
    GaussianTaskSpec,
};
use crate::dataset::{split_dataset, Dataset, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{predicted_label, MetricsReport, Outcome};
use crate::models::{predict_scores, train, ClassWeights, Classifier, ClassifierSpec, TrainConfig};
use crate::rng::{stream, RngSeed};

#[derive(Debug, Clone, PartialEq)]
pub enum TaskSource {
    /// Regenerated per replicate; the spec's own seed is replaced by the derived data seed.
    Gaussian(GaussianTaskSpec),
    /// Fixed data; only splits, balancing and model seeds vary per replicate.
    Csv { path: PathBuf, schema: CsvSchema },
}

/// How a replicate's data is produced and prepared.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSetup {
    pub source: TaskSource,
    /// Invert every label after loading (the mirrored task).
    pub mirror: bool,
    pub train_fraction: f64,
    pub val_fraction_of_train: f64,
    /// Oversample the minority class of the train split.
    pub balance: bool,
    pub jitter_scale: f64,
}

impl TaskSetup {
    pub fn gaussian(spec: GaussianTaskSpec) -> Self {
        TaskSetup {
            source: TaskSource::Gaussian(spec),
            mirror: false,
            train_fraction: 0.8,
            val_fraction_of_train: 0.2,
            balance: true,
            jitter_scale: 0.05,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.source {
            TaskSource::Gaussian(g) => g.mean_neg.len(),
            TaskSource::Csv { schema, .. } => schema.feature_columns.len(),
        }
    }
}

impl Default for TaskSetup {
    fn default() -> Self {
        TaskSetup::gaussian(GaussianTaskSpec::default_task(RngSeed(0)))
    }
}

/// One replicate's data: the untouched dataset, and its split with the
/// train part balanced.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub original: Dataset,
    pub split: Split,
}

pub fn prepare_replicate(
    setup: &TaskSetup,
    base_seed: RngSeed,
    replicate: u64,
) -> Result<PreparedData> {
    let mut original = match &setup.source {
        TaskSource::Gaussian(g) => generate_gaussian_task(&GaussianTaskSpec {
            seed: base_seed.derive(stream::DATA, replicate),
            ..g.clone()
        })?,
        TaskSource::Csv { path, schema } => load_csv(path, schema)?,
    };
    if setup.mirror {
        original = original.with_swapped_labels();
    }
    let mut split = split_dataset(
        &original,
        &SplitSpec {
            train_fraction: setup.train_fraction,
            val_fraction_of_train: setup.val_fraction_of_train,
            seed: base_seed.derive(stream::SPLIT, replicate),
        },
    )?;
    if setup.balance {
        split.train = balance_by_oversampling(
            &split.train,
            setup.jitter_scale,
            base_seed.derive(stream::BALANCE, replicate),
        )?;
    }
    Ok(PreparedData { original, split })
}

fn model_seed(base: RngSeed, s: u64, replicate: u64, model: u64) -> RngSeed {
    base.derive(s, replicate).derive(s, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    LabelFlip,
    ClassWeights,
    Threshold,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::LabelFlip => "label_flip",
            Method::ClassWeights => "class_weights",
            Method::Threshold => "threshold",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "label_flip" => Ok(Method::LabelFlip),
            "class_weights" => Ok(Method::ClassWeights),
            "threshold" => Ok(Method::Threshold),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }

    /// Parameter as it appears in tables: `60%`, `0:1, 1:50`, `0.3`.
    pub fn format_parameter(self, p: f64) -> String {
        match self {
            Method::LabelFlip => format!("{}%", (p * 100.0).round()),
            Method::ClassWeights => format!("0:1, 1:{p}"),
            Method::Threshold => format!("{p:.1}"),
        }
    }
}

/// A ladder of one method's parameter over replicated runs.
///
/// Ladder values are flip fractions, positive-class weights (the negative
/// weight stays 1), or decision thresholds, depending on `method`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub task: TaskSetup,
    pub model: ClassifierSpec,
    pub train: TrainConfig,
    pub method: Method,
    pub ladder: Vec<f64>,
    pub replicates: usize,
    pub base_seed: RngSeed,
    pub direction: Direction,
    pub selection_policy: SelectionPolicy,
    pub pool_threshold: f64,
}

impl SweepSpec {
    pub fn new(method: Method, ladder: Vec<f64>) -> Self {
        let task = TaskSetup::default();
        SweepSpec {
            model: ClassifierSpec::logistic(task.feature_dim()),
            task,
            train: TrainConfig::default(),
            method,
            ladder,
            replicates: 1,
            base_seed: RngSeed(0),
            direction: Direction::MinimizeFn,
            selection_policy: SelectionPolicy::ScoreRanked,
            pool_threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::Config("ladder must not be empty".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        self.model.validate()?;
        if self.model.feature_dim != self.task.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.task.feature_dim(),
                found: self.model.feature_dim,
            });
        }
        for &v in &self.ladder {
            let ok = match self.method {
                Method::LabelFlip | Method::Threshold => (0.0..=1.0).contains(&v),
                Method::ClassWeights => v > 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(Error::Config(format!(
                    "ladder value {v} is invalid for method {}",
                    self.method.as_str()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub parameter_index: usize,
    pub parameter: f64,
    pub replicate: usize,
    pub seed: RngSeed,
    pub status: CellStatus,
    pub metrics: Option<MetricsReport>,
    pub base: Option<MetricsReport>,
    pub pool_size: usize,
    pub flips: usize,
}

/// Mean and sample standard deviation over a parameter's successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Aggregate {
    pub parameter_index: usize,
    pub parameter: f64,
    pub count: usize,
    pub mean: MetricValues,
    pub std: MetricValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricValues {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auroc: f64,
    pub base_recall: f64,
    pub base_precision: f64,
    pub base_f1: f64,
}

impl MetricValues {
    fn of(m: &MetricsReport, b: &MetricsReport) -> Self {
        MetricValues {
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
            auroc: m.auroc,
            base_recall: b.recall,
            base_precision: b.precision,
            base_f1: b.f1,
        }
    }

    fn to_array(self) -> [f64; 7] {
        [
            self.recall,
            self.precision,
            self.f1,
            self.auroc,
            self.base_recall,
            self.base_precision,
            self.base_f1,
        ]
    }

    fn from_array(a: [f64; 7]) -> Self {
        MetricValues {
            recall: a[0],
            precision: a[1],
            f1: a[2],
            auroc: a[3],
            base_recall: a[4],
            base_precision: a[5],
            base_f1: a[6],
        }
    }
}

/// Everything a cell produced besides its row: models, flips, and the ids
/// and labels it was evaluated on.
#[derive(Debug, Clone)]
pub struct CellArtifacts {
    pub name: String,
    pub parameter_index: usize,
    pub replicate: usize,
    pub model: Option<Classifier>,
    pub flips: Option<FlipRecord>,
    /// `(id, label)` of the test split exactly as scored.
    pub test_labels: Vec<(u64, u8)>,
    pub val_ids: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct ReplicateArtifacts {
    pub replicate: usize,
    pub base_model: Classifier,
    pub data: PreparedData,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub method: Method,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
    pub cells: Vec<CellArtifacts>,
    pub replicates: Vec<ReplicateArtifacts>,
}

pub fn aggregate_rows(rows: &[SweepRow], ladder: &[f64]) -> Vec<Aggregate> {
    ladder
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let vals: Vec<[f64; 7]> = rows
                .iter()
                .filter(|r| r.parameter_index == i && r.status == CellStatus::Ok)
                .filter_map(|r| {
                    Some(MetricValues::of(r.metrics.as_ref()?, r.base.as_ref()?).to_array())
                })
                .collect();
            let n = vals.len();
            let mut mean = [0.0; 7];
            let mut std = [0.0; 7];
            if n > 0 {
                for k in 0..7 {
                    mean[k] = vals.iter().map(|v| v[k]).sum::<f64>() / n as f64;
                    if n > 1 {
                        let ss: f64 = vals.iter().map(|v| (v[k] - mean[k]).powi(2)).sum();
                        std[k] = (ss / (n - 1) as f64).sqrt();
                    }
                }
            }
            Aggregate {
                parameter_index: i,
                parameter: p,
                count: n,
                mean: MetricValues::from_array(mean),
                std: MetricValues::from_array(std),
            }
        })
        .collect()
}

/// Asserts that no flipped id is a val/test id and that the test labels
/// used for scoring are the pre-experiment labels.
fn check_hygiene(original: &Dataset, split: &Split, flips: Option<&FlipRecord>) -> Result<()> {
    let held_out: HashSet<u64> = split.val.ids().chain(split.test.ids()).collect();
    if let Some(rec) = flips {
        if let Some(id) = rec
            .flipped
            .iter()
            .map(|f| f.id)
            .find(|id| held_out.contains(id))
        {
            return Err(Error::Hygiene(format!(
                "flipped id {id} belongs to val/test"
            )));
        }
    }
    let index: std::collections::HashMap<u64, u8> = original
        .examples()
        .iter()
        .map(|e| (e.id, e.label))
        .collect();
    for ex in split.test.examples() {
        if index.get(&ex.id) != Some(&ex.label) {
            return Err(Error::Hygiene(format!(
                "test label of id {} differs from the source",
                ex.id
            )));
        }
    }
    Ok(())
}

struct ReplicateResult {
    rows: Vec<SweepRow>,
    cells: Vec<CellArtifacts>,
    artifacts: Option<ReplicateArtifacts>,
}

fn error_rows(spec: &SweepSpec, replicate: usize, seed: RngSeed, msg: &str) -> Vec<SweepRow> {
    spec.ladder
        .iter()
        .enumerate()
        .map(|(i, &p)| SweepRow {
            method: spec.method,
            parameter_index: i,
            parameter: p,
            replicate,
            seed,
            status: CellStatus::Error(msg.to_string()),
            metrics: None,
            base: None,
            pool_size: 0,
            flips: 0,
        })
        .collect()
}

fn cell_name(method: Method, index: usize, replicate: usize) -> String {
    format!("{}_p{index:02}_r{replicate:02}", method.as_str())
}

fn run_replicate(spec: &SweepSpec, replicate: usize) -> ReplicateResult {
    let r = replicate as u64;
    let train_seed = model_seed(spec.base_seed, stream::INIT, r, 0);
    let prepared = prepare_replicate(&spec.task, spec.base_seed, r).and_then(|data| {
        let base_cfg = TrainConfig {
            seed: train_seed,
            warm_start: None,
            class_weights: ClassWeights::UNIT,
            ..spec.train.clone()
        };
        let base = train(&data.split.train, &spec.model, &base_cfg)?;
        let base_scores = predict_scores(&base, &data.split.test)?;
        let base_report =
            MetricsReport::evaluate(&base_scores, &data.split.test, DEFAULT_THRESHOLD)?;
        Ok((data, base, base_scores, base_report))
    });
    let (data, base, base_scores, base_report) = match prepared {
        Ok(p) => p,
        Err(e) => {
            return ReplicateResult {
                rows: error_rows(spec, replicate, train_seed, &e.to_string()),
                cells: Vec::new(),
                artifacts: None,
            }
        }
    };
    let test = &data.split.test;

    let mut rows = Vec::with_capacity(spec.ladder.len());
    let mut cells = Vec::with_capacity(spec.ladder.len());
    for (i, &param) in spec.ladder.iter().enumerate() {
        let outcome: Result<(MetricsReport, Option<Classifier>, Option<FlipRecord>)> =
            (|| match spec.method {
                Method::Threshold => {
                    let m = MetricsReport::evaluate(&base_scores, test, param)?;
                    Ok((m, None, None))
                }
                Method::ClassWeights => {
                    let cfg = TrainConfig {
                        seed: train_seed,
                        warm_start: None,
                        ..spec.train.clone()
                    };
                    let model = train_with_class_weights(
                        &data.split.train,
                        &spec.model,
                        &cfg,
                        ClassWeights::new(1.0, param),
                    )?;
                    let m = MetricsReport::evaluate(
                        &predict_scores(&model, test)?,
                        test,
                        DEFAULT_THRESHOLD,
                    )?;
                    Ok((m, Some(model), None))
                }
                Method::LabelFlip => {
                    let plan = BiasPlan {
                        direction: spec.direction,
                        flip_fraction: param,
                        selection_policy: spec.selection_policy,
                        pool_threshold: spec.pool_threshold,
                        retrain: TrainConfig {
                            seed: model_seed(spec.base_seed, stream::RETRAIN, r, 0),
                            warm_start: Some(base.clone()),
                            class_weights: ClassWeights::UNIT,
                            ..spec.train.clone()
                        },
                    };
                    let (model, rec) = if param == 0.0 {
                        // Zero flips: the base model is the cell's model.
                        let (_, rec) = crate::bias::apply_label_flip(
                            &data.split.train,
                            &crate::bias::identify_pool(
                                &base,
                                &data.split.train,
                                spec.direction,
                                spec.pool_threshold,
                            )?,
                            &plan,
                        )?;
                        (base.clone(), rec)
                    } else {
                        run_label_flip_method(&base, &data.split.train, &plan)?
                    };
                    check_hygiene(&data.original, &data.split, Some(&rec))?;
                    let m = MetricsReport::evaluate(
                        &predict_scores(&model, test)?,
                        test,
                        DEFAULT_THRESHOLD,
                    )?;
                    Ok((m, Some(model), Some(rec)))
                }
            })()
            .and_then(|o| {
                check_hygiene(&data.original, &data.split, o.2.as_ref())?;
                Ok(o)
            });

        let name = cell_name(spec.method, i, replicate);
        let mut row = SweepRow {
            method: spec.method,
            parameter_index: i,
            parameter: param,
            replicate,
            seed: train_seed,
            status: CellStatus::Ok,
            metrics: None,
            base: Some(base_report),
            pool_size: 0,
            flips: 0,
        };
        match outcome {
            Ok((m, model, rec)) => {
                row.metrics = Some(m);
                if let Some(rec) = &rec {
                    row.pool_size = rec.pool_size;
                    row.flips = rec.flipped.len();
                }
                cells.push(CellArtifacts {
                    name,
                    parameter_index: i,
                    replicate,
                    model,
                    flips: rec,
                    test_labels: test.examples().iter().map(|e| (e.id, e.label)).collect(),
                    val_ids: data.split.val.ids().collect(),
                });
            }
            Err(e) => row.status = CellStatus::Error(e.to_string()),
        }
        rows.push(row);
    }
    ReplicateResult {
        rows,
        cells,
        artifacts: Some(ReplicateArtifacts {
            replicate,
            base_model: base,
            data,
        }),
    }
}

/// Runs every `(ladder value, replicate)` cell. Replicates run in parallel;
/// output order is `(parameter, replicate)` regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let results: Vec<ReplicateResult> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| run_replicate(spec, r))
        .collect();

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut cells = Vec::new();
    let mut replicates = Vec::new();
    for res in results {
        rows.extend(res.rows);
        cells.extend(res.cells);
        replicates.extend(res.artifacts);
    }
    rows.sort_by_key(|r| (r.parameter_index, r.replicate));
    cells.sort_by_key(|c| (c.parameter_index, c.replicate));
    let aggregates = aggregate_rows(&rows, &spec.ladder);
    Ok(SweepReport {
        method: spec.method,
        rows,
        aggregates,
        cells,
        replicates,
    })
}

pub const REPORT_CSV_HEADER: &str = "method,parameter,replicate,seed,status,tn,fp,fn,tp,recall,precision,f1,auroc,base_recall,base_precision,base_f1,pool_size,flips";

impl SweepReport {
    /// Per-cell rows then `mean`/`std` rows per parameter. Reals use the
    /// shortest exact representation so aggregates can be recomputed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (status, m, b) = match (&r.status, &r.metrics, &r.base) {
                (CellStatus::Ok, Some(m), Some(b)) => ("ok".to_string(), Some(m), Some(b)),
                (CellStatus::Error(e), ..) => (
                    format!("error: {}", e.replace([',', '\n'], ";")),
                    None,
                    None,
                ),
                _ => ("error: missing metrics".to_string(), None, None),
            };
            let metric_cells = match (m, b) {
                (Some(m), Some(b)) => format!(
                    "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                    m.matrix.tn,
                    m.matrix.fp,
                    m.matrix.fn_,
                    m.matrix.tp,
                    m.recall,
                    m.precision,
                    m.f1,
                    m.auroc,
                    b.recall,
                    b.precision,
                    b.f1
                ),
                _ => ",,,,,,,,,,".to_string(),
            };
            let _ = writeln!(
                out,
                "{},{:?},{},{},{},{},{},{}",
                r.method.as_str(),
                r.parameter,
                r.replicate,
                r.seed.0,
                status,
                metric_cells,
                r.pool_size,
                r.flips
            );
        }
        for a in &self.aggregates {
            for (tag, v) in [("mean", a.mean), ("std", a.std)] {
                let _ = writeln!(
                    out,
                    "{},{:?},{},,n={},,,,,{:?},{:?},{:?},{:?},{:?},{:?},{:?},,",
                    self.method.as_str(),
                    a.parameter,
                    tag,
                    a.count,
                    v.recall,
                    v.precision,
                    v.f1,
                    v.auroc,
                    v.base_recall,
                    v.base_precision,
                    v.base_f1
                );
            }
        }
        out
    }

    /// Replicate means laid out like the corresponding published table.
    pub fn to_markdown(&self, model_label: &str) -> String {
        let (headers, with_model, with_auroc): (&[&str], bool, bool) = match self.method {
            Method::LabelFlip => (
                &[
                    "Model",
                    "Percentage of Change",
                    "Recall",
                    "Precision",
                    "F1 score",
                ],
                true,
                false,
            ),
            Method::ClassWeights => (
                &["Class Weight", "Recall", "Precision", "F1 score", "AUROC"],
                false,
                true,
            ),
            Method::Threshold => (
                &["Threshold Line", "Recall", "Precision", "F1 score"],
                false,
                false,
            ),
        };
        let body: Vec<Vec<String>> = self
            .aggregates
            .iter()
            .map(|a| {
                let mut row = Vec::new();
                if with_model {
                    row.push(model_label.to_string());
                }
                row.push(self.method.format_parameter(a.parameter));
                row.push(format!("{:.2}", a.mean.recall));
                row.push(format!("{:.2}", a.mean.precision));
                row.push(format!("{:.2}", a.mean.f1));
                if with_auroc {
                    row.push(format!("{:.2}", a.mean.auroc));
                }
                row
            })
            .collect();
        let reps = self.aggregates.first().map_or(0, |a| a.count);
        let mut out = markdown_table(headers, &body);
        let _ = writeln!(out, "\nMeans over {reps} replicate(s); see report.csv for per-replicate rows and standard deviations.");
        out
    }
}

fn markdown_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(headers.to_vec());
    out.push_str(&format!(
        "|{}|\n",
        widths
            .iter()
            .map(|w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("|")
    ));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `report.csv` and `report.md` into `dir`.
pub fn export_tables(report: &SweepReport, model_label: &str, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if report.rows.is_empty() {
        return Err(Error::Config("cannot export an empty report".into()));
    }
    create_dir(dir)?;
    write_file(&dir.join("report.csv"), &report.to_csv())?;
    write_file(&dir.join("report.md"), &report.to_markdown(model_label))
}

/// Writes the full sweep output directory: tables, scatter, per-cell flips
/// and models, base models, and each replicate's test split.
pub fn write_sweep_outputs(
    spec: &SweepSpec,
    report: &SweepReport,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    export_tables(report, &spec.model.label(), dir)?;
    let (flips_dir, models_dir, data_dir) =
        (dir.join("flips"), dir.join("models"), dir.join("data"));
    create_dir(&models_dir)?;
    create_dir(&data_dir)?;
    for cell in &report.cells {
        if let Some(m) = &cell.model {
            m.save(models_dir.join(format!("{}.txt", cell.name)))?;
        }
        if let Some(rec) = &cell.flips {
            create_dir(&flips_dir)?;
            rec.write_csv(flips_dir.join(format!("{}.csv", cell.name)))?;
        }
    }
    let schema = CsvSchema::standard(spec.model.feature_dim);
    for rep in &report.replicates {
        rep.base_model
            .save(models_dir.join(format!("base_r{:02}.txt", rep.replicate)))?;
        save_csv(
            &rep.data.split.test,
            data_dir.join(format!("test_r{:02}.csv", rep.replicate)),
            &schema,
        )?;
    }
    if let Some(rep) = report.replicates.first() {
        // Scatter of replicate 0's train split under its base model, marking the
        // examples flipped by the last ladder cell.
        let flips = report
            .cells
            .iter()
            .rev()
            .filter(|c| c.replicate == rep.replicate)
            .find_map(|c| c.flips.as_ref());
        export_scatter(
            &rep.base_model,
            &rep.data.split.train,
            flips,
            DEFAULT_THRESHOLD,
            dir,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub label: u8,
    pub predicted: u8,
    pub outcome: Outcome,
    pub flipped: bool,
}

/// Projects features to 2-D: identity for two features, `(x, 0)` for one,
/// otherwise onto the top two principal axes of the centered feature matrix
/// (each axis signed so its largest-magnitude component is positive).
pub fn project_2d(data: &Dataset) -> Vec<(f64, f64)> {
    let d = data.feature_dim();
    match d {
        0 => return vec![(0.0, 0.0); data.len()],
        1 => {
            return data
                .examples()
                .iter()
                .map(|e| (e.features[0], 0.0))
                .collect()
        }
        2 => {
            return data
                .examples()
                .iter()
                .map(|e| (e.features[0], e.features[1]))
                .collect()
        }
        _ => {}
    }
    let n = data.len().max(1) as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| data.examples().iter().map(|e| e.features[j]).sum::<f64>() / n)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for e in data.examples() {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (e.features[a] - mean[a]) * (e.features[b] - mean[b]) / n;
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&k| {
            let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();
    data.examples()
        .iter()
        .map(|e| {
            let c: Vec<f64> = e.features.iter().zip(&mean).map(|(x, m)| x - m).collect();
            let dot = |ax: &[f64]| ax.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
            (dot(&axes[0]), dot(&axes[1]))
        })
        .collect()
}

pub fn scatter_points(
    model: &Classifier,
    data: &Dataset,
    flips: Option<&FlipRecord>,
    threshold: f64,
) -> Result<Vec<ScatterPoint>> {
    let scores = predict_scores(model, data)?;
    let flipped: HashSet<u64> = flips
        .map(|f| f.flipped_ids().into_iter().collect())
        .unwrap_or_default();
    Ok(project_2d(data)
        .into_iter()
        .zip(data.examples())
        .zip(scores.scores())
        .map(|(((x, y), e), &s)| {
            let predicted = predicted_label(s, threshold);
            ScatterPoint {
                id: e.id,
                x,
                y,
                score: s,
                label: e.label,
                predicted,
                outcome: Outcome::of(e.label, predicted),
                flipped: flipped.contains(&e.id),
            }
        })
        .collect())
}

pub const SCATTER_CSV_HEADER: &str = "id,x,y,score,label,predicted,outcome,flipped";

/// Writes `scatter.csv` and `scatter.svg` into `dir`.
pub fn export_scatter(
    model: &Classifier,
    data: &Dataset,
    flips: Option<&FlipRecord>,
    threshold: f64,
    dir: impl AsRef<Path>,
) -> Result<Vec<ScatterPoint>> {
    let dir = dir.as_ref();
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let points = scatter_points(model, data, flips, threshold)?;
    create_dir(dir)?;
    let mut csv = String::from(SCATTER_CSV_HEADER);
    csv.push('\n');
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{:?},{:?},{:?},{},{},{},{}",
            p.id,
            p.x,
            p.y,
            p.score,
            p.label,
            p.predicted,
            p.outcome.as_str(),
            p.flipped as u8
        );
    }
    write_file(&dir.join("scatter.csv"), &csv)?;
    write_file(&dir.join("scatter.svg"), &scatter_svg(&points))?;
    Ok(points)
}

fn scatter_svg(points: &[ScatterPoint]) -> String {
    const SIZE: f64 = 600.0;
    const PAD: f64 = 40.0;
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let px = |x: f64| PAD + (x - x0) / sx * (SIZE - 2.0 * PAD);
    let py = |y: f64| SIZE - PAD - (y - y0) / sy * (SIZE - 2.0 * PAD);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{}\" viewBox=\"0 0 {SIZE} {}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        SIZE + 30.0,
        SIZE + 30.0
    );
    for p in points {
        let (cx, cy) = (px(p.x), py(p.y));
        out.push_str(&marker(p.outcome, cx, cy));
        if p.flipped {
            let _ = writeln!(out, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"6\" fill=\"none\" stroke=\"black\" stroke-width=\"0.8\"/>");
        }
    }
    let legend = [
        (Outcome::Tp, "TP"),
        (Outcome::Tn, "TN"),
        (Outcome::Fp, "FP"),
        (Outcome::Fn, "FN"),
    ];
    for (i, (o, name)) in legend.iter().enumerate() {
        let x = PAD + i as f64 * 110.0;
        out.push_str(&marker(*o, x, SIZE + 10.0));
        let _ = writeln!(out, "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\" font-family=\"sans-serif\">{name}</text>", x + 10.0, SIZE + 14.0);
    }
    let _ = writeln!(out, "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\" font-family=\"sans-serif\">ring = flipped</text>", PAD + 440.0, SIZE + 14.0);
    out.push_str("</svg>\n");
    out
}

fn marker(outcome: Outcome, x: f64, y: f64) -> String {
    match outcome {
        Outcome::Tp => format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#2ca02c\"/>\n"),
        Outcome::Tn => format!("<rect x=\"{:.2}\" y=\"{:.2}\" width=\"5\" height=\"5\" fill=\"#1f77b4\"/>\n", x - 2.5, y - 2.5),
        Outcome::Fp => format!(
            "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"#ff7f0e\"/>\n",
            x,
            y - 4.0,
            x - 3.5,
            y + 3.0,
            x + 3.5,
            y + 3.0
        ),
        Outcome::Fn => format!(
            "<path d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n",
            x - 3.0,
            y - 3.0,
            x + 3.0,
            y + 3.0,
            x - 3.0,
            y + 3.0,
            x + 3.0,
            y - 3.0
        ),
    }
}

/// Replicate-mean metrics of one ensemble arm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auroc: f64,
}

impl MeanMetrics {
    fn of(reports: &[MetricsReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MeanMetrics {
            recall: sum(|r| r.recall),
            precision: sum(|r| r.precision),
            f1: sum(|r| r.f1),
            auroc: sum(|r| r.auroc),
        }
    }
}

/// Label-flip plan parameters shared by every member of the "After" ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipSettings {
    pub direction: Direction,
    pub flip_fraction: f64,
    pub selection_policy: SelectionPolicy,
    pub pool_threshold: f64,
}

impl FlipSettings {
    pub fn new(direction: Direction, flip_fraction: f64) -> Self {
        FlipSettings {
            direction,
            flip_fraction,
            selection_policy: SelectionPolicy::ScoreRanked,
            pool_threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareReplicate {
    pub replicate: usize,
    pub before: MetricsReport,
    pub after: MetricsReport,
    pub base_models: Vec<Classifier>,
    pub retrained: Vec<Classifier>,
    pub flips: Vec<FlipRecord>,
    pub test_labels: Vec<(u64, u8)>,
    pub val_ids: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub before: MeanMetrics,
    pub after: MeanMetrics,
    pub replicates: Vec<CompareReplicate>,
}

pub const COMPARE_CSV_HEADER: &str = "model,recall,precision,f1,auroc";

impl CompareReport {
    /// Exactly two rows, `Before` and `After`, of replicate means.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARE_CSV_HEADER);
        out.push('\n');
        for (name, m) in [("Before", self.before), ("After", self.after)] {
            let _ = writeln!(
                out,
                "{name},{:.4},{:.4},{:.4},{:.4}",
                m.recall, m.precision, m.f1, m.auroc
            );
        }
        out
    }

    pub fn per_replicate_csv(&self) -> String {
        let mut out = format!("replicate,arm,{}\n", MetricsReport::CSV_HEADER);
        for r in &self.replicates {
            let _ = writeln!(out, "{},Before,{}", r.replicate, r.before.csv_row());
            let _ = writeln!(out, "{},After,{}", r.replicate, r.after.csv_row());
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let rows: Vec<Vec<String>> = [("Before:", self.before), ("After:", self.after)]
            .iter()
            .map(|(n, m)| {
                vec![
                    n.to_string(),
                    format!("{:.2}", m.recall),
                    format!("{:.2}", m.precision),
                    format!("{:.2}", m.f1),
                    format!("{:.2}", m.auroc),
                ]
            })
            .collect();
        let mut out = markdown_table(
            &["Model", "Recall", "Precision", "F1 score", "AUROC"],
            &rows,
        );
        let _ = writeln!(out, "\nMeans over {} replicate(s).", self.replicates.len());
        out
    }
}

/// "Before" is the score-averaged ensemble of the base models, "After" the
/// ensemble of the same models after label-flip retraining; both are scored
/// on the same untouched test split of each replicate.
pub fn compare_before_after(
    task: &TaskSetup,
    model_specs: &[ClassifierSpec],
    train_config: &TrainConfig,
    flip: FlipSettings,
    replicates: usize,
    base_seed: RngSeed,
) -> Result<CompareReport> {
    if model_specs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if model_specs.len() < 2 {
        return Err(Error::Config(
            "an ensemble comparison needs at least two model specs".into(),
        ));
    }
    if replicates == 0 {
        return Err(Error::Config("replicates must be >= 1".into()));
    }
    let reps: Vec<CompareReplicate> = (0..replicates)
        .into_par_iter()
        .map(|rep| -> Result<CompareReplicate> {
            let r = rep as u64;
            let data = prepare_replicate(task, base_seed, r)?;
            let (train_set, test) = (&data.split.train, &data.split.test);
            let mut base_models = Vec::new();
            let mut retrained = Vec::new();
            let mut flips = Vec::new();
            for (j, spec) in model_specs.iter().enumerate() {
                let cfg = TrainConfig {
                    seed: model_seed(base_seed, stream::INIT, r, j as u64),
                    warm_start: None,
                    ..train_config.clone()
                };
                let base = train(train_set, spec, &cfg)?;
                let plan = BiasPlan {
                    direction: flip.direction,
                    flip_fraction: flip.flip_fraction,
                    selection_policy: flip.selection_policy,
                    pool_threshold: flip.pool_threshold,
                    retrain: TrainConfig {
                        seed: model_seed(base_seed, stream::RETRAIN, r, j as u64),
                        warm_start: Some(base.clone()),
                        ..train_config.clone()
                    },
                };
                let (after, rec) = if flip.flip_fraction == 0.0 {
                    let pool = crate::bias::identify_pool(
                        &base,
                        train_set,
                        flip.direction,
                        flip.pool_threshold,
                    )?;
                    let (_, rec) = crate::bias::apply_label_flip(train_set, &pool, &plan)?;
                    (base.clone(), rec)
                } else {
                    run_label_flip_method(&base, train_set, &plan)?
                };
                check_hygiene(&data.original, &data.split, Some(&rec))?;
                base_models.push(base);
                retrained.push(after);
                flips.push(rec);
            }
            let before = MetricsReport::evaluate(
                &ensemble_scores(&base_models, test)?,
                test,
                DEFAULT_THRESHOLD,
            )?;
            let after = MetricsReport::evaluate(
                &ensemble_scores(&retrained, test)?,
                test,
                DEFAULT_THRESHOLD,
            )?;
            Ok(CompareReplicate {
                replicate: rep,
                before,
                after,
                base_models,
                retrained,
                flips,
                test_labels: test.examples().iter().map(|e| (e.id, e.label)).collect(),
                val_ids: data.split.val.ids().collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let befores: Vec<MetricsReport> = reps.iter().map(|r| r.before).collect();
    let afters: Vec<MetricsReport> = reps.iter().map(|r| r.after).collect();
    Ok(CompareReport {
        before: MeanMetrics::of(&befores),
        after: MeanMetrics::of(&afters),
        replicates: reps,
    })
}

/// Writes `report.csv` (Before/After), `report.md`, `replicates.csv`,
/// per-member flips and models, and a scatter of replicate 0's first member.
pub fn write_compare_outputs(
    task: &TaskSetup,
    report: &CompareReport,
    base_seed: RngSeed,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    write_file(&dir.join("report.csv"), &report.to_csv())?;
    write_file(&dir.join("report.md"), &report.to_markdown())?;
    write_file(&dir.join("replicates.csv"), &report.per_replicate_csv())?;
    let (flips_dir, models_dir) = (dir.join("flips"), dir.join("models"));
    create_dir(&flips_dir)?;
    create_dir(&models_dir)?;
    for rep in &report.replicates {
        for (j, ((b, a), f)) in rep
            .base_models
            .iter()
            .zip(&rep.retrained)
            .zip(&rep.flips)
            .enumerate()
        {
            let name = format!("m{j}_r{:02}", rep.replicate);
            b.save(models_dir.join(format!("base_{name}.txt")))?;
            a.save(models_dir.join(format!("after_{name}.txt")))?;
            f.write_csv(flips_dir.join(format!("{name}.csv")))?;
        }
    }
    if let Some(rep) = report.replicates.first() {
        let data = prepare_replicate(task, base_seed, rep.replicate as u64)?;
        export_scatter(
            &rep.base_models[0],
            &data.split.train,
            rep.flips.first(),
            DEFAULT_THRESHOLD,
            dir,
        )?;
    }
    Ok(())
}
