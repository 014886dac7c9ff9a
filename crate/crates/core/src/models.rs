//! Logistic regression and a small tanh MLP trained by mini-batch gradient
//! descent on class-weighted binary cross-entropy.
//!
//! Parameters live in one flat vector. For layer sizes `[d, h1, .., hk, 1]`
//! each layer contributes its weight matrix (row-major, `out × in`) followed
//! by its bias vector. Logistic regression is the `k = 0` case.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{Dataset, ScoreVector};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Clamp applied to ŷ before taking logarithms.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Logistic,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::InvalidSpec(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Hidden-layer nonlinearity. Only tanh is offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassifierSpec {
    pub kind: ModelKind,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub feature_dim: usize,
}

impl ClassifierSpec {
    pub fn logistic(feature_dim: usize) -> Self {
        ClassifierSpec {
            kind: ModelKind::Logistic,
            hidden_layers: Vec::new(),
            activation: Activation::Tanh,
            feature_dim,
        }
    }

    pub fn mlp(feature_dim: usize, hidden_layers: Vec<usize>) -> Self {
        ClassifierSpec {
            kind: ModelKind::Mlp,
            hidden_layers,
            activation: Activation::Tanh,
            feature_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::InvalidSpec("feature_dim must be at least 1".into()));
        }
        match self.kind {
            ModelKind::Logistic if !self.hidden_layers.is_empty() => Err(Error::InvalidSpec(
                "logistic model cannot have hidden layers".into(),
            )),
            ModelKind::Mlp if self.hidden_layers.is_empty() => Err(Error::InvalidSpec(
                "mlp needs at least one hidden layer".into(),
            )),
            _ if self.hidden_layers.contains(&0) => {
                Err(Error::InvalidSpec("hidden layer width must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(self.feature_dim);
        sizes.extend(&self.hidden_layers);
        sizes.push(1);
        sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    /// Short description, e.g. `logistic` or `mlp:8,4`.
    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::Logistic => "logistic".to_string(),
            ModelKind::Mlp => format!("mlp:{}", join(&self.hidden_layers)),
        }
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Per-class loss multipliers; `(1, 50)` is the "0:1, 1:50" setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub neg: f64,
    pub pos: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { neg: 1.0, pos: 1.0 };

    pub fn new(neg: f64, pos: f64) -> Self {
        ClassWeights { neg, pos }
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights::UNIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub class_weights: ClassWeights,
    pub seed: RngSeed,
    pub warm_start: Option<Classifier>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 32,
            class_weights: ClassWeights::UNIT,
            seed: RngSeed(0),
            warm_start: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::OutOfRange {
                name: "epochs",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if self.batch_size == 0 {
            return Err(Error::OutOfRange {
                name: "batch_size",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::OutOfRange {
                name: "learning_rate",
                value: self.learning_rate,
                expected: "> 0 and finite",
            });
        }
        for (name, w) in [
            ("class_weights.neg", self.class_weights.neg),
            ("class_weights.pos", self.class_weights.pos),
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value: w,
                    expected: "> 0",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    spec: ClassifierSpec,
    parameters: Vec<f64>,
}

impl Classifier {
    pub fn zeros(spec: ClassifierSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.parameter_count();
        Ok(Classifier {
            spec,
            parameters: vec![0.0; n],
        })
    }

    pub fn from_parameters(spec: ClassifierSpec, parameters: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if parameters.len() != spec.parameter_count() {
            return Err(Error::InvalidSpec(format!(
                "expected {} parameters, got {}",
                spec.parameter_count(),
                parameters.len()
            )));
        }
        if parameters.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSpec("non-finite parameter".into()));
        }
        Ok(Classifier { spec, parameters })
    }

    /// Seeded uniform init in `±0.5/√fan_in` for every parameter of a layer.
    pub fn random(spec: ClassifierSpec, seed: RngSeed) -> Result<Self> {
        let mut rng = seed.rng();
        Self::random_with(spec, &mut rng)
    }

    fn random_with<R: Rng>(spec: ClassifierSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut parameters = Vec::with_capacity(spec.parameter_count());
        for w in spec.layer_sizes().windows(2) {
            let bound = 0.5 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * (w[0] + 1) {
                parameters.push(rng.gen_range(-bound..=bound));
            }
        }
        Ok(Classifier { spec, parameters })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    /// ŷ for a single feature vector.
    pub fn score(&self, features: &[f64]) -> f64 {
        let mut scratch = Scratch::new(&self.spec);
        self.forward(features, &mut scratch)
    }

    fn check_dim(&self, data: &Dataset) -> Result<()> {
        if data.feature_dim() != self.spec.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.feature_dim,
                found: data.feature_dim(),
            });
        }
        Ok(())
    }

    /// Stores every layer's post-activation output in `scratch` and returns ŷ.
    fn forward(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        let sizes = self.spec.layer_sizes();
        let n_layers = sizes.len() - 1;
        scratch.acts[0].clear();
        scratch.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &self.parameters[offset..offset + n_out * n_in];
            let b = &self.parameters[offset + n_out * n_in..offset + n_out * (n_in + 1)];
            offset += n_out * (n_in + 1);
            let (prev, rest) = scratch.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for j in 0..n_out {
                let z: f64 = w[j * n_in..(j + 1) * n_in]
                    .iter()
                    .zip(input)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + b[j];
                out.push(if l + 1 == n_layers {
                    sigmoid(z)
                } else {
                    z.tanh()
                });
            }
        }
        scratch.acts[n_layers][0]
    }

    /// Adds `dloss/dparam` for one example into `grad`, given `dz` at the output logit.
    fn backward(&self, scratch: &mut Scratch, dz_out: f64, grad: &mut [f64]) {
        let sizes = self.spec.layer_sizes();
        let n_layers = sizes.len() - 1;
        let offsets: Vec<usize> = sizes
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += w[1] * (w[0] + 1);
                Some(o)
            })
            .collect();

        scratch.delta.clear();
        scratch.delta.push(dz_out);
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let off = offsets[l];
            let input = &scratch.acts[l];
            for j in 0..n_out {
                let d = scratch.delta[j];
                let gw = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (g, a) in gw.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[off + n_out * n_in + j] += d;
            }
            if l > 0 {
                let w = &self.parameters[off..off + n_out * n_in];
                scratch.next_delta.clear();
                for i in 0..n_in {
                    let back: f64 = (0..n_out).map(|j| w[j * n_in + i] * scratch.delta[j]).sum();
                    let a = input[i];
                    scratch.next_delta.push(back * (1.0 - a * a));
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.next_delta);
            }
        }
    }

    /// Mean weighted BCE over `data` and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        data: &Dataset,
        weights: ClassWeights,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_dim(data)?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut grad = vec![0.0; self.parameters.len()];
        let mut scratch = Scratch::new(&self.spec);
        let mut loss = 0.0;
        for ex in data.examples() {
            let yhat = self.forward(&ex.features, &mut scratch);
            loss += example_loss(yhat, ex.label, weights);
            let dz = logit_gradient(yhat, ex.label, weights);
            self.backward(&mut scratch, dz, &mut grad);
        }
        let n = data.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    /// Writes the text persistence format. See [`Classifier::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "labelflip-classifier v1 kind={} feature_dim={} hidden={} activation=tanh parameters={}\n",
            self.spec.kind,
            self.spec.feature_dim,
            if self.spec.hidden_layers.is_empty() {
                "-".to_string()
            } else {
                join(&self.spec.hidden_layers)
            },
            self.parameters.len()
        );
        for p in &self.parameters {
            out.push_str(&format!("{p:.17e}\n"));
        }
        out
    }

    /// Parses a header line of `key=value` fields followed by one parameter per line.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: u64, message: String| Error::Parse {
            path: "<classifier>".into(),
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "empty model file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("labelflip-classifier") || fields.next() != Some("v1") {
            return Err(bad(1, "not a labelflip-classifier v1 file".into()));
        }
        let (mut kind, mut dim, mut hidden, mut count) = (None, None, None, None);
        for field in fields {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(1, format!("malformed header field {field:?}")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|e| bad(1, format!("{k}: {e}")));
            match k {
                "kind" => kind = Some(v.parse::<ModelKind>()?),
                "feature_dim" => dim = Some(num(v)?),
                "hidden" if v == "-" => hidden = Some(Vec::new()),
                "hidden" => {
                    hidden = Some(v.split(',').map(num).collect::<Result<Vec<_>>>()?);
                }
                "activation" if v == "tanh" => {}
                "parameters" => count = Some(num(v)?),
                _ => return Err(bad(1, format!("unexpected header field {field:?}"))),
            }
        }
        let spec = ClassifierSpec {
            kind: kind.ok_or_else(|| bad(1, "missing kind".into()))?,
            hidden_layers: hidden.ok_or_else(|| bad(1, "missing hidden".into()))?,
            activation: Activation::Tanh,
            feature_dim: dim.ok_or_else(|| bad(1, "missing feature_dim".into()))?,
        };
        let parameters = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(i as u64 + 2, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if count != Some(parameters.len()) {
            return Err(bad(0, "parameter count does not match header".into()));
        }
        Classifier::from_parameters(spec, parameters)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Classifier::from_text(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }
}

struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ClassifierSpec) -> Self {
        Scratch {
            acts: spec
                .layer_sizes()
                .iter()
                .map(|&n| Vec::with_capacity(n))
                .collect(),
            delta: Vec::new(),
            next_delta: Vec::new(),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_score(yhat: f64) -> f64 {
    yhat.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

fn example_loss(yhat: f64, label: u8, w: ClassWeights) -> f64 {
    let p = clamp_score(yhat);
    if label == 1 {
        -w.pos * p.ln()
    } else {
        -w.neg * (1.0 - p).ln()
    }
}

/// d(loss)/d(logit). Zero where the clamp is active.
fn logit_gradient(yhat: f64, label: u8, w: ClassWeights) -> f64 {
    if !(SCORE_EPS..=1.0 - SCORE_EPS).contains(&yhat) {
        return 0.0;
    }
    if label == 1 {
        -w.pos * (1.0 - yhat)
    } else {
        w.neg * yhat
    }
}

pub fn predict_scores(model: &Classifier, data: &Dataset) -> Result<ScoreVector> {
    model.check_dim(data)?;
    let mut scratch = Scratch::new(&model.spec);
    let scores = data
        .examples()
        .iter()
        .map(|ex| model.forward(&ex.features, &mut scratch))
        .collect();
    ScoreVector::new(data.ids().collect(), scores)
}

/// Mean over examples of `−[w_pos·y·ln ŷ + w_neg·(1−y)·ln(1−ŷ)]`, with ŷ clamped to `[ε, 1−ε]`.
pub fn weighted_bce_loss(
    scores: &ScoreVector,
    data: &Dataset,
    weights: ClassWeights,
) -> Result<f64> {
    let aligned = scores.aligned_to(data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = aligned
        .iter()
        .zip(data.labels())
        .map(|(&s, y)| example_loss(s, y, weights))
        .sum();
    Ok(total / data.len() as f64)
}

/// Mini-batch gradient descent on the class-weighted loss.
///
/// Starts from `config.warm_start` when present, otherwise from a seeded
/// init (zeros for logistic). The epoch shuffle stream is drawn from the
/// same seed, so equal inputs give bit-identical parameters.
pub fn train(data: &Dataset, spec: &ClassifierSpec, config: &TrainConfig) -> Result<Classifier> {
    spec.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.feature_dim() != spec.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim,
            found: data.feature_dim(),
        });
    }
    let mut rng = config.seed.rng();
    let mut model = match &config.warm_start {
        Some(w) if w.spec != *spec => return Err(Error::WarmStartMismatch),
        Some(w) => w.clone(),
        None if spec.kind == ModelKind::Logistic => Classifier::zeros(spec.clone())?,
        None => Classifier::random_with(spec.clone(), &mut rng)?,
    };

    let examples = data.examples();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; model.parameters.len()];
    let mut scratch = Scratch::new(spec);
    let weights = config.class_weights;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let ex = &examples[i];
                let yhat = model.forward(&ex.features, &mut scratch);
                epoch_loss += example_loss(yhat, ex.label, weights);
                let dz = logit_gradient(yhat, ex.label, weights);
                model.backward(&mut scratch, dz, &mut grad);
            }
            let step = config.learning_rate / batch.len() as f64;
            for (p, g) in model.parameters.iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        if !epoch_loss.is_finite() || model.parameters.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok(model)
}

/// Compares the analytic gradient against central differences (step 1e-5)
/// at a seeded random parameter point and returns the largest relative error.
///
/// Relative error per parameter is `|a − n| / max(|a|, |n|, 1e-6)`; the floor
/// keeps components whose true gradient is ~0 from reporting roundoff noise
/// as a large relative error.
#[allow(clippy::needless_range_loop)]
pub fn gradient_check(
    spec: &ClassifierSpec,
    data: &Dataset,
    weights: ClassWeights,
    seed: RngSeed,
) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let model = Classifier::random(spec.clone(), seed)?;
    let (_, analytic) = model.loss_and_gradient(data, weights)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..probe.parameters.len() {
        let orig = probe.parameters[i];
        probe.parameters[i] = orig + STEP;
        let (up, _) = probe.loss_and_gradient(data, weights)?;
        probe.parameters[i] = orig - STEP;
        let (down, _) = probe.loss_and_gradient(data, weights)?;
        probe.parameters[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Example;
    use rand::SeedableRng;

    fn random_data(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
        Dataset::from_rows(rows, labels).unwrap()
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(ClassifierSpec::logistic(3).parameter_count(), 4);
        // 2 -> 4 -> 1: 4*3 + 1*5
        assert_eq!(ClassifierSpec::mlp(2, vec![4]).parameter_count(), 17);
        assert_eq!(
            ClassifierSpec::mlp(2, vec![4, 3]).parameter_count(),
            12 + 15 + 4
        );
    }

    #[test]
    fn spec_validation() {
        let mut bad = ClassifierSpec::logistic(2);
        bad.hidden_layers = vec![3];
        assert!(bad.validate().is_err());
        assert!(ClassifierSpec::mlp(2, vec![]).validate().is_err());
        assert!(ClassifierSpec::mlp(2, vec![0]).validate().is_err());
        assert!(ClassifierSpec::logistic(0).validate().is_err());
    }

    #[test]
    fn zero_logistic_scores_half() {
        let m = Classifier::zeros(ClassifierSpec::logistic(2)).unwrap();
        let s = predict_scores(&m, &random_data(20, 2, 1)).unwrap();
        assert!(s.scores().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn mlp_single_hidden_unit_hand_forward() {
        // 2 -> 1 -> 1: h = tanh(0.5*x1 - 0.25*x2 + 0.1); y = σ(2h - 0.3)
        let spec = ClassifierSpec::mlp(2, vec![1]);
        let m = Classifier::from_parameters(spec, vec![0.5, -0.25, 0.1, 2.0, -0.3]).unwrap();
        let (x1, x2) = (1.0, 2.0);
        // 0.5 - 0.5 + 0.1 = 0.1
        let h = 0.1f64.tanh();
        let expected = 1.0 / (1.0 + (-(2.0 * h - 0.3)).exp());
        assert!((m.score(&[x1, x2]) - expected).abs() < 1e-15);
        // hand value: tanh(0.1) = 0.0996679946, σ(-0.1006640107) = 0.4748553
        assert!((m.score(&[x1, x2]) - 0.474_855_3).abs() < 1e-6);
    }

    #[test]
    fn scores_independent_of_order() {
        let d = random_data(30, 2, 4);
        let m = Classifier::random(ClassifierSpec::mlp(2, vec![5]), RngSeed(9)).unwrap();
        let mut rev: Vec<Example> = d.examples().to_vec();
        rev.reverse();
        let rd = Dataset::new(rev, 2).unwrap();
        let a = predict_scores(&m, &d).unwrap();
        let b = predict_scores(&m, &rd).unwrap();
        for (id, s) in a.iter() {
            assert_eq!(b.get(id), Some(s));
        }
    }

    #[test]
    fn dimension_mismatch_errors() {
        let m = Classifier::zeros(ClassifierSpec::logistic(3)).unwrap();
        assert!(matches!(
            predict_scores(&m, &random_data(3, 2, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(train(
            &random_data(3, 2, 0),
            &ClassifierSpec::logistic(3),
            &TrainConfig::default()
        )
        .is_err());
    }

    #[test]
    fn bce_analytic_value() {
        let d = Dataset::from_rows(vec![vec![0.0]], vec![1]).unwrap();
        let s = ScoreVector::new(vec![0], vec![0.5]).unwrap();
        let l = weighted_bce_loss(&s, &d, ClassWeights::UNIT).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_fifty_to_one() {
        let w = ClassWeights::new(1.0, 50.0);
        let pos = Dataset::from_rows(vec![vec![0.0]], vec![1]).unwrap();
        let neg = Dataset::from_rows(vec![vec![0.0]], vec![0]).unwrap();
        let lp =
            weighted_bce_loss(&ScoreVector::new(vec![0], vec![0.1]).unwrap(), &pos, w).unwrap();
        let ln =
            weighted_bce_loss(&ScoreVector::new(vec![0], vec![0.9]).unwrap(), &neg, w).unwrap();
        assert!((lp - 50.0 * ln).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_bruteforce_sum() {
        let d = Dataset::from_rows(vec![vec![0.0]; 4], vec![1, 0, 1, 0]).unwrap();
        let s = ScoreVector::new(vec![0, 1, 2, 3], vec![0.8, 0.3, 0.0, 0.6]).unwrap();
        let w = ClassWeights::new(2.0, 3.0);
        // Independent per-example terms; ŷ = 0 is clamped to 1e-7.
        let terms = [
            -3.0 * 0.8f64.ln(),
            -2.0 * 0.7f64.ln(),
            -3.0 * 1e-7f64.ln(),
            -2.0 * 0.4f64.ln(),
        ];
        let expected = terms.iter().sum::<f64>() / 4.0;
        assert!((weighted_bce_loss(&s, &d, w).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_id_mismatch() {
        let d = Dataset::from_rows(vec![vec![0.0]; 2], vec![1, 0]).unwrap();
        let s = ScoreVector::new(vec![0, 5], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            weighted_bce_loss(&s, &d, ClassWeights::UNIT),
            Err(Error::IdMismatch)
        ));
    }

    #[test]
    fn loss_grows_with_positive_weight() {
        let d = Dataset::from_rows(vec![vec![0.0]], vec![1]).unwrap();
        for yhat in [0.01, 0.3, 0.5, 0.99] {
            let s = ScoreVector::new(vec![0], vec![yhat]).unwrap();
            let mut prev = 0.0;
            for wp in [0.5, 1.0, 2.0, 10.0, 50.0] {
                let l = weighted_bce_loss(&s, &d, ClassWeights::new(1.0, wp)).unwrap();
                assert!(l > prev);
                prev = l;
            }
        }
    }

    #[test]
    fn gradient_check_both_kinds() {
        let d = random_data(8, 3, 5);
        let w = ClassWeights::new(1.0, 3.0);
        let e1 = gradient_check(&ClassifierSpec::logistic(3), &d, w, RngSeed(1)).unwrap();
        let e2 = gradient_check(&ClassifierSpec::mlp(3, vec![4]), &d, w, RngSeed(1)).unwrap();
        assert!(e1 < 1e-4, "logistic {e1}");
        assert!(e2 < 1e-4, "mlp {e2}");
    }

    #[test]
    fn gradient_vanishes_without_signal() {
        // All-negative data with w_neg = 0: every loss term is zero.
        let rows = (0..8).map(|i| vec![i as f64 * 0.1, 1.0]).collect();
        let d = Dataset::from_rows(rows, vec![0; 8]).unwrap();
        let w = ClassWeights::new(0.0, 1.0);
        for spec in [ClassifierSpec::logistic(2), ClassifierSpec::mlp(2, vec![3])] {
            let m = Classifier::random(spec.clone(), RngSeed(3)).unwrap();
            let (loss, g) = m.loss_and_gradient(&d, w).unwrap();
            assert_eq!(loss, 0.0);
            assert!(g.iter().all(|&v| v == 0.0));
            assert_eq!(gradient_check(&spec, &d, w, RngSeed(3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn separable_data_is_learned() {
        // Two clusters along x = y with margin well above 1.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let y = (i % 2) as u8;
            let t: f64 = rng.gen_range(-3.0..3.0);
            let off = if y == 1 {
                rng.gen_range(1.0..3.0)
            } else {
                -rng.gen_range(1.0..3.0)
            };
            rows.push(vec![t + off, -t + off]);
            labels.push(y);
        }
        let d = Dataset::from_rows(rows, labels).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            ..TrainConfig::default()
        };
        let m = train(&d, &ClassifierSpec::logistic(2), &cfg).unwrap();
        let s = predict_scores(&m, &d).unwrap();
        let correct = s
            .scores()
            .iter()
            .zip(d.labels())
            .filter(|(&p, y)| (p > 0.5) as u8 == *y)
            .count();
        assert!(correct as f64 / 200.0 >= 0.99, "accuracy {correct}/200");
    }

    #[test]
    fn training_is_deterministic() {
        let d = random_data(64, 2, 8);
        for spec in [ClassifierSpec::logistic(2), ClassifierSpec::mlp(2, vec![6])] {
            let cfg = TrainConfig {
                epochs: 20,
                seed: RngSeed(99),
                ..TrainConfig::default()
            };
            let a = train(&d, &spec, &cfg).unwrap();
            let b = train(&d, &spec, &cfg).unwrap();
            let bits = |m: &Classifier| {
                m.parameters()
                    .iter()
                    .map(|p| p.to_bits())
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn non_positive_learning_rate_is_rejected() {
        let d = random_data(10, 2, 2);
        for lr in [0.0, -0.1, f64::NAN] {
            let cfg = TrainConfig {
                learning_rate: lr,
                ..TrainConfig::default()
            };
            assert!(
                train(&d, &ClassifierSpec::logistic(2), &cfg).is_err(),
                "{lr}"
            );
        }
    }

    #[test]
    fn one_more_epoch_from_converged_barely_moves_f1() {
        let d = random_data(200, 2, 3);
        let spec = ClassifierSpec::logistic(2);
        let converged = train(
            &d,
            &spec,
            &TrainConfig {
                epochs: 300,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            warm_start: Some(converged.clone()),
            ..TrainConfig::default()
        };
        let again = train(&d, &spec, &cfg).unwrap();
        let f1 = |m: &Classifier| {
            let s = predict_scores(m, &d).unwrap();
            crate::metrics::MetricsReport::evaluate(&s, &d, 0.5)
                .unwrap()
                .f1
        };
        assert!((f1(&again) - f1(&converged)).abs() < 0.01);
    }

    #[test]
    fn warm_start_spec_must_match() {
        let d = random_data(10, 2, 2);
        let warm = Classifier::zeros(ClassifierSpec::logistic(2)).unwrap();
        let cfg = TrainConfig {
            warm_start: Some(warm),
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&d, &ClassifierSpec::mlp(2, vec![2]), &cfg),
            Err(Error::WarmStartMismatch)
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let rows = (0..32).map(|i| vec![1e300 * (i as f64 - 16.5)]).collect();
        let labels = (0..32).map(|i| (i >= 16) as u8).collect();
        let d = Dataset::from_rows(rows, labels).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&d, &ClassifierSpec::logistic(1), &cfg),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = Classifier::random(ClassifierSpec::mlp(3, vec![4, 2]), RngSeed(1)).unwrap();
        let back = Classifier::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        let l = Classifier::random(ClassifierSpec::logistic(2), RngSeed(1)).unwrap();
        assert_eq!(Classifier::from_text(&l.to_text()).unwrap(), l);
        assert!(Classifier::from_text("garbage").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scores_in_unit_interval(seed: u64, scale in 0.1f64..50.0) {
                let spec = ClassifierSpec::mlp(2, vec![3]);
                let mut m = Classifier::random(spec.clone(), RngSeed(seed)).unwrap();
                let params: Vec<f64> = m.parameters().iter().map(|p| p * scale * 20.0).collect();
                m = Classifier::from_parameters(spec, params).unwrap();
                let d = random_data(16, 2, seed);
                let s = predict_scores(&m, &d).unwrap();
                prop_assert!(s.scores().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
