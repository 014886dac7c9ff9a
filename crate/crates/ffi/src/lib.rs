//! C ABI over `labelflip`.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible call returns an [`LfStatus`]; on failure
//! [`lf_last_error_message`] describes the error for the calling thread.
//! Panics never cross the boundary; they are reported as `LF_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use labelflip::bias::{run_label_flip_method, BiasPlan, Direction, SelectionPolicy};
use labelflip::data::{generate_gaussian_task, load_csv, save_csv, CsvSchema, GaussianTaskSpec};
use labelflip::models::{predict_scores, train};
use labelflip::{
    ClassWeights, Classifier, ClassifierSpec, Dataset, Error, MetricsReport, RngSeed, TrainConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    EmptyDataset = 4,
    InvalidData = 5,
    Diverged = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfModelKind {
    Logistic = 0,
    Mlp = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfDirection {
    MinimizeFn = 0,
    MinimizeFp = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfSelection {
    ScoreRanked = 0,
    SeededRandom = 1,
}

/// Training hyperparameters. Obtain defaults from [`lf_train_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfTrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_neg: f64,
    pub weight_pos: f64,
    pub seed: u64,
}

/// Confusion counts and derived metrics at one threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LfMetrics {
    pub threshold: f64,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_positives: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auroc: f64,
}

/// Opaque dataset handle.
pub struct LfDataset(Dataset);

/// Opaque classifier handle.
pub struct LfClassifier(Classifier);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> LfStatus {
    match e {
        Error::EmptyDataset | Error::EmptyEnsemble => LfStatus::EmptyDataset,
        Error::DimensionMismatch { .. } | Error::WarmStartMismatch => LfStatus::DimensionMismatch,
        Error::NonFiniteLoss { .. } => LfStatus::Diverged,
        Error::Io { .. } => LfStatus::Io,
        Error::Parse { .. } | Error::MissingColumn(_) | Error::Csv(_) => LfStatus::Parse,
        Error::NonBinaryLabel(_)
        | Error::NonFiniteFeature(_)
        | Error::DuplicateId(_)
        | Error::UnknownId(_)
        | Error::IdMismatch
        | Error::SingleClass => LfStatus::InvalidData,
        _ => LfStatus::InvalidArgument,
    }
}

struct Failure(LfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LfStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LfStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {msg}"));
            LfStatus::Internal
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn train_config(o: &LfTrainOptions) -> TrainConfig {
    TrainConfig {
        epochs: o.epochs,
        learning_rate: o.learning_rate,
        batch_size: o.batch_size,
        class_weights: ClassWeights::new(o.weight_neg, o.weight_pos),
        seed: RngSeed(o.seed),
        warm_start: None,
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next `lf_*` call on the same thread.
#[no_mangle]
pub extern "C" fn lf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn lf_train_options_default() -> LfTrainOptions {
    let d = TrainConfig::default();
    LfTrainOptions {
        epochs: d.epochs,
        learning_rate: d.learning_rate,
        batch_size: d.batch_size,
        weight_neg: d.class_weights.neg,
        weight_pos: d.class_weights.pos,
        seed: d.seed.0,
    }
}

/// Builds a dataset from a row-major `n × dim` feature matrix and `n`
/// labels in {0,1}. Ids are `0..n`.
///
/// # Safety
/// `features` must point to `n * dim` doubles and `labels` to `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_new(
    features: *const f64,
    labels: *const u8,
    n: usize,
    dim: usize,
    out: *mut *mut LfDataset,
) -> LfStatus {
    guard(|| {
        if n > 0 && (features.is_null() || labels.is_null()) {
            return Err(null("features or labels"));
        }
        if dim == 0 {
            return Err(invalid("dim must be >= 1"));
        }
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| invalid("n * dim overflows"))?;
        let (feats, labs): (&[f64], &[u8]) = if n == 0 {
            (&[], &[])
        } else {
            (
                std::slice::from_raw_parts(features, len),
                std::slice::from_raw_parts(labels, n),
            )
        };
        let rows = feats.chunks(dim).map(<[f64]>::to_vec).collect();
        let data = Dataset::from_rows(rows, labs.to_vec())?;
        put(out, LfDataset(data))
    })
}

/// Seeded two-class Gaussian task: `n_per_class` positives with every
/// feature mean `sep`, `round(n_per_class * imbalance)` negatives at 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_generate(
    n_per_class: usize,
    dim: usize,
    sep: f64,
    scale: f64,
    imbalance: f64,
    seed: u64,
    out: *mut *mut LfDataset,
) -> LfStatus {
    guard(|| {
        let spec = GaussianTaskSpec {
            scale,
            ..GaussianTaskSpec::diagonal(dim, sep, n_per_class, imbalance, RngSeed(seed))
        };
        put(out, LfDataset(generate_gaussian_task(&spec)?))
    })
}

/// Loads a headed CSV; `label_column` names the label, an `id` column is
/// used as ids when present, and every other column is a feature.
///
/// # Safety
/// `path` and `label_column` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    out: *mut *mut LfDataset,
) -> LfStatus {
    guard(|| {
        let path = PathBuf::from(c_str(path, "path")?);
        let schema = CsvSchema::from_header(&path, c_str(label_column, "label_column")?)?;
        put(out, LfDataset(load_csv(&path, &schema)?))
    })
}

/// Writes `id,x0..,label`.
///
/// # Safety
/// `data` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_save_csv(
    data: *const LfDataset,
    path: *const c_char,
) -> LfStatus {
    guard(|| {
        let d = &as_ref(data, "dataset")?.0;
        save_csv(
            d,
            c_str(path, "path")?,
            &CsvSchema::standard(d.feature_dim()),
        )?;
        Ok(())
    })
}

/// Number of examples; 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_len(data: *const LfDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.len())
}

/// Feature count; 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_feature_dim(data: *const LfDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.feature_dim())
}

/// Copies the labels into `out` (capacity `len`, at least the dataset length).
///
/// # Safety
/// `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_labels(
    data: *const LfDataset,
    out: *mut u8,
    len: usize,
) -> LfStatus {
    guard(|| {
        let d = &as_ref(data, "dataset")?.0;
        if len < d.len() {
            return Err(Failure(
                LfStatus::BufferTooSmall,
                format!("need {} labels, buffer holds {len}", d.len()),
            ));
        }
        if !d.is_empty() && out.is_null() {
            return Err(null("out"));
        }
        for (i, l) in d.labels().enumerate() {
            *out.add(i) = l;
        }
        Ok(())
    })
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_free(data: *mut LfDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Trains a fresh classifier. `kind` is an [`LfModelKind`] value; `hidden` lists MLP layer sizes and is ignored
/// for logistic models. `options` may be NULL for defaults.
///
/// # Safety
/// `hidden` must point to `n_hidden` values; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lf_classifier_train(
    data: *const LfDataset,
    kind: u32,
    hidden: *const usize,
    n_hidden: usize,
    options: *const LfTrainOptions,
    out: *mut *mut LfClassifier,
) -> LfStatus {
    guard(|| {
        let d = &as_ref(data, "dataset")?.0;
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| lf_train_options_default());
        let spec = match kind {
            k if k == LfModelKind::Logistic as u32 => ClassifierSpec::logistic(d.feature_dim()),
            k if k == LfModelKind::Mlp as u32 => {
                if n_hidden > 0 && hidden.is_null() {
                    return Err(null("hidden"));
                }
                let layers = if n_hidden == 0 {
                    Vec::new()
                } else {
                    std::slice::from_raw_parts(hidden, n_hidden).to_vec()
                };
                ClassifierSpec::mlp(d.feature_dim(), layers)
            }
            k => return Err(invalid(format!("unknown model kind {k}"))),
        };
        put(out, LfClassifier(train(d, &spec, &train_config(&opts))?))
    })
}

/// Writes one score in \[0,1\] per example, in dataset order.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lf_classifier_predict(
    model: *const LfClassifier,
    data: *const LfDataset,
    out: *mut f64,
    len: usize,
) -> LfStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let d = &as_ref(data, "dataset")?.0;
        let scores = predict_scores(m, d)?;
        if len < scores.len() {
            return Err(Failure(
                LfStatus::BufferTooSmall,
                format!("need {} scores, buffer holds {len}", scores.len()),
            ));
        }
        if !scores.is_empty() && out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(scores.scores().as_ptr(), out, scores.len());
        Ok(())
    })
}

/// Metrics of `model` on `data`, predicting positive iff score > threshold.
/// AUROC is 0 when `data` holds a single class.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lf_classifier_evaluate(
    model: *const LfClassifier,
    data: *const LfDataset,
    threshold: f64,
    out: *mut LfMetrics,
) -> LfStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let d = &as_ref(data, "dataset")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = MetricsReport::evaluate(&predict_scores(m, d)?, d, threshold)?;
        *out = LfMetrics {
            threshold: r.threshold,
            true_negatives: r.matrix.tn,
            false_positives: r.matrix.fp,
            false_negatives: r.matrix.fn_,
            true_positives: r.matrix.tp,
            recall: r.recall,
            precision: r.precision,
            f1: r.f1,
            auroc: r.auroc,
        };
        Ok(())
    })
}

/// Label-flip retraining (`direction` is an [`LfDirection`], `selection` an
/// [`LfSelection`] value): flips `round_half_up(fraction × pool)` labels of
/// the pool at `pool_threshold` and warm-starts from `pretrained`, which must
/// have been trained on `train`'s feature space. `options` may be NULL.
///
/// When `flipped_ids` is non-NULL, up to `ids_capacity` flipped ids are
/// written there. `flip_count` and `pool_size` may be NULL.
///
/// # Safety
/// Pointers must be valid; `flipped_ids` must hold `ids_capacity` values.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lf_label_flip(
    pretrained: *const LfClassifier,
    train_data: *const LfDataset,
    direction: u32,
    fraction: f64,
    selection: u32,
    pool_threshold: f64,
    options: *const LfTrainOptions,
    out: *mut *mut LfClassifier,
    flip_count: *mut usize,
    pool_size: *mut usize,
    flipped_ids: *mut u64,
    ids_capacity: usize,
) -> LfStatus {
    guard(|| {
        let base = &as_ref(pretrained, "pretrained")?.0;
        let d = &as_ref(train_data, "train")?.0;
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| lf_train_options_default());
        let plan = BiasPlan {
            direction: match direction {
                d if d == LfDirection::MinimizeFn as u32 => Direction::MinimizeFn,
                d if d == LfDirection::MinimizeFp as u32 => Direction::MinimizeFp,
                d => return Err(invalid(format!("unknown direction {d}"))),
            },
            flip_fraction: fraction,
            selection_policy: match selection {
                p if p == LfSelection::ScoreRanked as u32 => SelectionPolicy::ScoreRanked,
                p if p == LfSelection::SeededRandom as u32 => SelectionPolicy::SeededRandom,
                p => return Err(invalid(format!("unknown selection policy {p}"))),
            },
            pool_threshold,
            retrain: train_config(&opts),
        };
        let (model, record) = run_label_flip_method(base, d, &plan)?;
        if let Some(c) = flip_count.as_mut() {
            *c = record.flipped.len();
        }
        if let Some(p) = pool_size.as_mut() {
            *p = record.pool_size;
        }
        if !flipped_ids.is_null() {
            for (i, id) in record
                .flipped_ids()
                .into_iter()
                .take(ids_capacity)
                .enumerate()
            {
                *flipped_ids.add(i) = id;
            }
        }
        put(out, LfClassifier(model))
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lf_classifier_save(
    model: *const LfClassifier,
    path: *const c_char,
) -> LfStatus {
    guard(|| {
        as_ref(model, "model")?.0.save(c_str(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lf_classifier_load(
    path: *const c_char,
    out: *mut *mut LfClassifier,
) -> LfStatus {
    guard(|| put(out, LfClassifier(Classifier::load(c_str(path, "path")?)?)))
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lf_classifier_free(model: *mut LfClassifier) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
