//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys, repeated keys
//! and malformed values are errors. Every key has a default, so an empty
//! file is a valid config; [`RunConfig::to_text`] writes the fully resolved
//! form back out.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bias::{Direction, SelectionPolicy, DEFAULT_THRESHOLD};
use crate::data::{CsvSchema, GaussianTaskSpec};
use crate::error::{Error, Result};
use crate::harness::{FlipSettings, Method, SweepSpec, TaskSetup, TaskSource};
use crate::models::{ClassifierSpec, ModelKind, TrainConfig};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sweep,
    Compare,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Sweep => "sweep",
            Mode::Compare => "compare",
        }
    }
}

/// Key, default, description. Order is the echo order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("mode", "sweep", "sweep | compare"),
    ("method", "label_flip", "sweep method: label_flip | class_weights | threshold"),
    ("ladder", "(per method)", "comma-separated parameter values; defaults: label_flip 0,0.2,0.4,0.6,0.8,1, class_weights 1,2,10,25,50, threshold 0,0.1,0.2,0.3,0.4,0.5"),
    ("replicates", "1", "replicate count"),
    ("seed", "0", "base seed"),
    ("model", "logistic", "sweep model: logistic | mlp"),
    ("hidden", "8", "sweep MLP hidden layer sizes, comma-separated"),
    ("models", "logistic; mlp:8", "compare-mode ensemble members (at least two), ';'-separated"),
    ("epochs", "50", "training epochs (base and retrain)"),
    ("learning_rate", "0.1", "step size"),
    ("batch_size", "32", "mini-batch size"),
    ("direction", "minimize_fn", "minimize_fn | minimize_fp"),
    ("selection", "score_ranked", "score_ranked | seeded_random"),
    ("pool_threshold", "0.5", "threshold defining the FP/FN pool"),
    ("flip_fraction", "1", "compare-mode flip fraction"),
    ("data", "", "CSV path; empty means the Gaussian task"),
    ("label_column", "label", "CSV label column"),
    ("dim", "2", "Gaussian feature count"),
    ("sep", "1.5", "Gaussian positive mean per feature (negative mean is 0)"),
    ("scale", "1", "Gaussian per-feature std"),
    ("n_per_class", "200", "Gaussian positives; negatives = round(n_per_class * imbalance)"),
    ("imbalance", "3", "negatives per positive"),
    ("mirror", "false", "swap every label after loading"),
    ("balance", "true", "oversample the train split's minority class"),
    ("jitter", "0.05", "oversampling jitter, in units of feature std"),
    ("train_fraction", "0.8", "train+val share of the data"),
    ("val_fraction", "0.2", "val share of train+val"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub method: Method,
    pub ladder: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub hidden: Vec<usize>,
    /// `(kind, hidden)` per ensemble member.
    pub models: Vec<(ModelKind, Vec<usize>)>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub direction: Direction,
    pub selection: SelectionPolicy,
    pub pool_threshold: f64,
    pub flip_fraction: f64,
    pub data: Option<PathBuf>,
    pub label_column: String,
    pub dim: usize,
    pub sep: f64,
    pub scale: f64,
    pub n_per_class: usize,
    pub imbalance: f64,
    pub mirror: bool,
    pub balance: bool,
    pub jitter: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

pub fn default_ladder(method: Method) -> Vec<f64> {
    match method {
        Method::LabelFlip => vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        Method::ClassWeights => vec![1.0, 2.0, 10.0, 25.0, 50.0],
        Method::Threshold => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Sweep,
            method: Method::LabelFlip,
            ladder: default_ladder(Method::LabelFlip),
            replicates: 1,
            seed: 0,
            model: ModelKind::Logistic,
            hidden: vec![8],
            models: vec![(ModelKind::Logistic, vec![]), (ModelKind::Mlp, vec![8])],
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 32,
            direction: Direction::MinimizeFn,
            selection: SelectionPolicy::ScoreRanked,
            pool_threshold: DEFAULT_THRESHOLD,
            flip_fraction: 1.0,
            data: None,
            label_column: "label".into(),
            dim: 2,
            sep: 1.5,
            scale: 1.0,
            n_per_class: 200,
            imbalance: 3.0,
            mirror: false,
            balance: true,
            jitter: 0.05,
            train_fraction: 0.8,
            val_fraction: 0.2,
        }
    }
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("key {key:?}: cannot parse {value:?} as {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str, expected: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, expected))
}

fn real(key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(key, v, "a number")?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, v, "a finite number"))
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str, expected: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| num(key, s.trim(), expected)).collect()
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

/// `logistic` or `mlp:8,4` (plain `mlp` means one hidden layer of 8).
fn model_entry(key: &str, v: &str) -> Result<(ModelKind, Vec<usize>)> {
    let (kind, hidden) = match v.split_once(':') {
        Some((k, h)) => (k.trim(), Some(h)),
        None => (v.trim(), None),
    };
    let kind: ModelKind = kind
        .parse()
        .map_err(|_| bad(key, v, "logistic or mlp:<sizes>"))?;
    let hidden = match (kind, hidden) {
        (ModelKind::Logistic, None) => vec![],
        (ModelKind::Logistic, Some(_)) => return Err(bad(key, v, "logistic without hidden sizes")),
        (ModelKind::Mlp, None) => vec![8],
        (ModelKind::Mlp, Some(h)) => list(key, h, "hidden sizes")?,
    };
    Ok((kind, hidden))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses config text. A relative `data` path is kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut ladder_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    lineno + 1
                ))
            })?;
            let (key, v) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key {key:?}",
                    lineno + 1
                )));
            }
            if seen.iter().any(|s| s == key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
            seen.push(key.to_string());
            match key {
                "mode" => {
                    cfg.mode = match v {
                        "sweep" => Mode::Sweep,
                        "compare" => Mode::Compare,
                        _ => return Err(bad(key, v, "sweep or compare")),
                    }
                }
                "method" => cfg.method = Method::parse(v).map_err(|_| bad(key, v, "a method"))?,
                "ladder" => {
                    cfg.ladder = list(key, v, "a list of numbers")?;
                    ladder_set = true;
                }
                "replicates" => cfg.replicates = num(key, v, "a count")?,
                "seed" => cfg.seed = num(key, v, "an unsigned integer")?,
                "model" => cfg.model = v.parse().map_err(|_| bad(key, v, "logistic or mlp"))?,
                "hidden" => cfg.hidden = list(key, v, "hidden sizes")?,
                "models" => {
                    cfg.models = v
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| model_entry(key, s))
                        .collect::<Result<_>>()?
                }
                "epochs" => cfg.epochs = num(key, v, "a count")?,
                "learning_rate" => cfg.learning_rate = real(key, v)?,
                "batch_size" => cfg.batch_size = num(key, v, "a count")?,
                "direction" => {
                    cfg.direction = v
                        .parse()
                        .map_err(|_| bad(key, v, "minimize_fn or minimize_fp"))?
                }
                "selection" => {
                    cfg.selection = v
                        .parse()
                        .map_err(|_| bad(key, v, "score_ranked or seeded_random"))?
                }
                "pool_threshold" => cfg.pool_threshold = real(key, v)?,
                "flip_fraction" => cfg.flip_fraction = real(key, v)?,
                "data" => cfg.data = (!v.is_empty()).then(|| PathBuf::from(v)),
                "label_column" => cfg.label_column = v.to_string(),
                "dim" => cfg.dim = num(key, v, "a count")?,
                "sep" => cfg.sep = real(key, v)?,
                "scale" => cfg.scale = real(key, v)?,
                "n_per_class" => cfg.n_per_class = num(key, v, "a count")?,
                "imbalance" => cfg.imbalance = real(key, v)?,
                "mirror" => cfg.mirror = boolean(key, v)?,
                "balance" => cfg.balance = boolean(key, v)?,
                "jitter" => cfg.jitter = real(key, v)?,
                "train_fraction" => cfg.train_fraction = real(key, v)?,
                "val_fraction" => cfg.val_fraction = real(key, v)?,
                _ => unreachable!("key list and parser disagree on {key}"),
            }
        }
        if !ladder_set {
            cfg.ladder = default_ladder(cfg.method);
        }
        Ok(cfg)
    }

    /// Reads and parses `path`; a relative `data` path is resolved against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::parse(&text)?;
        if let Some(d) = &cfg.data {
            if d.is_relative() {
                if let Some(parent) = path.parent() {
                    cfg.data = Some(parent.join(d));
                }
            }
        }
        Ok(cfg)
    }

    /// Every key with its resolved value, in a form [`RunConfig::parse`] accepts.
    pub fn to_text(&self) -> String {
        let models: Vec<String> = self
            .models
            .iter()
            .map(|(k, h)| match k {
                ModelKind::Logistic => "logistic".to_string(),
                ModelKind::Mlp => format!("mlp:{}", join(h)),
            })
            .collect();
        let ladder: Vec<String> = self.ladder.iter().map(|x| format!("{x:?}")).collect();
        let values: Vec<(&str, String)> = vec![
            ("mode", self.mode.as_str().into()),
            ("method", self.method.as_str().into()),
            ("ladder", ladder.join(",")),
            ("replicates", self.replicates.to_string()),
            ("seed", self.seed.to_string()),
            ("model", self.model.to_string()),
            ("hidden", join(&self.hidden)),
            ("models", models.join("; ")),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("batch_size", self.batch_size.to_string()),
            ("direction", self.direction.to_string()),
            ("selection", self.selection.to_string()),
            ("pool_threshold", format!("{:?}", self.pool_threshold)),
            ("flip_fraction", format!("{:?}", self.flip_fraction)),
            (
                "data",
                self.data
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("label_column", self.label_column.clone()),
            ("dim", self.dim.to_string()),
            ("sep", format!("{:?}", self.sep)),
            ("scale", format!("{:?}", self.scale)),
            ("n_per_class", self.n_per_class.to_string()),
            ("imbalance", format!("{:?}", self.imbalance)),
            ("mirror", self.mirror.to_string()),
            ("balance", self.balance.to_string()),
            ("jitter", format!("{:?}", self.jitter)),
            ("train_fraction", format!("{:?}", self.train_fraction)),
            ("val_fraction", format!("{:?}", self.val_fraction)),
        ];
        let mut out = String::from("# resolved run configuration\n");
        for (k, v) in values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn task(&self) -> Result<TaskSetup> {
        let source = match &self.data {
            Some(path) => TaskSource::Csv {
                schema: CsvSchema::from_header(path, &self.label_column)?,
                path: path.clone(),
            },
            None => TaskSource::Gaussian(GaussianTaskSpec {
                scale: self.scale,
                ..GaussianTaskSpec::diagonal(
                    self.dim,
                    self.sep,
                    self.n_per_class,
                    self.imbalance,
                    RngSeed(self.seed),
                )
            }),
        };
        Ok(TaskSetup {
            source,
            mirror: self.mirror,
            train_fraction: self.train_fraction,
            val_fraction_of_train: self.val_fraction,
            balance: self.balance,
            jitter_scale: self.jitter,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            ..TrainConfig::default()
        }
    }

    fn spec_for(kind: ModelKind, hidden: &[usize], dim: usize) -> ClassifierSpec {
        match kind {
            ModelKind::Logistic => ClassifierSpec::logistic(dim),
            ModelKind::Mlp => ClassifierSpec::mlp(dim, hidden.to_vec()),
        }
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let task = self.task()?;
        let spec = SweepSpec {
            model: Self::spec_for(self.model, &self.hidden, task.feature_dim()),
            task,
            train: self.train_config(),
            method: self.method,
            ladder: self.ladder.clone(),
            replicates: self.replicates,
            base_seed: RngSeed(self.seed),
            direction: self.direction,
            selection_policy: self.selection,
            pool_threshold: self.pool_threshold,
        };
        spec.validate()?;
        spec.train.validate()?;
        Ok(spec)
    }

    pub fn model_specs(&self, feature_dim: usize) -> Result<Vec<ClassifierSpec>> {
        let specs: Vec<ClassifierSpec> = self
            .models
            .iter()
            .map(|(k, h)| Self::spec_for(*k, h, feature_dim))
            .collect();
        if specs.len() < 2 {
            return Err(Error::Config("models must list at least two models".into()));
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }

    pub fn flip_settings(&self) -> Result<FlipSettings> {
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return Err(Error::Config(format!(
                "flip_fraction {} is outside [0, 1]",
                self.flip_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.pool_threshold) {
            return Err(Error::Config(format!(
                "pool_threshold {} is outside [0, 1]",
                self.pool_threshold
            )));
        }
        Ok(FlipSettings {
            direction: self.direction,
            flip_fraction: self.flip_fraction,
            selection_policy: self.selection,
            pool_threshold: self.pool_threshold,
        })
    }
}
