//! Synthetic Gaussian tasks, class balancing by jittered oversampling, and
//! CSV dataset I/O.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, Example, Label};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Two isotropic Gaussian clusters. Negatives come from `mean_neg`,
/// positives from `mean_pos`, both with standard deviation `scale` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTaskSpec {
    /// Positive-class count; negatives number `round(n_per_class × imbalance_ratio)`.
    pub n_per_class: usize,
    pub mean_neg: Vec<f64>,
    pub mean_pos: Vec<f64>,
    pub scale: f64,
    pub imbalance_ratio: f64,
    pub seed: RngSeed,
}

impl GaussianTaskSpec {
    /// Means at the origin and at `separation` along every axis.
    pub fn diagonal(
        dim: usize,
        separation: f64,
        n_per_class: usize,
        imbalance_ratio: f64,
        seed: RngSeed,
    ) -> Self {
        GaussianTaskSpec {
            n_per_class,
            mean_neg: vec![0.0; dim],
            mean_pos: vec![separation; dim],
            scale: 1.0,
            imbalance_ratio,
            seed,
        }
    }

    /// The experiment default: 2-D, means (0,0) and (1.5,1.5), unit scale,
    /// three negatives per positive, 200 positives.
    pub fn default_task(seed: RngSeed) -> Self {
        Self::diagonal(2, 1.5, 200, 3.0, seed)
    }

    pub fn n_negatives(&self) -> usize {
        (self.n_per_class as f64 * self.imbalance_ratio).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::DegenerateCovariance(self.scale));
        }
        if self.mean_neg.len() != self.mean_pos.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean_neg.len(),
                found: self.mean_pos.len(),
            });
        }
        if self.mean_neg.is_empty() {
            return Err(Error::InvalidSpec("task needs at least one feature".into()));
        }
        if self
            .mean_neg
            .iter()
            .chain(&self.mean_pos)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidSpec("non-finite cluster mean".into()));
        }
        if !(self.imbalance_ratio > 0.0 && self.imbalance_ratio.is_finite()) {
            return Err(Error::OutOfRange {
                name: "imbalance_ratio",
                value: self.imbalance_ratio,
                expected: "> 0",
            });
        }
        if self.n_per_class == 0 || self.n_negatives() == 0 {
            return Err(Error::InvalidSpec(
                "task needs at least one example per class".into(),
            ));
        }
        Ok(())
    }
}

/// Negatives first, then positives, with ids `0..n`.
pub fn generate_gaussian_task(spec: &GaussianTaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = spec.seed.rng();
    let dim = spec.mean_neg.len();
    let mut examples = Vec::with_capacity(spec.n_negatives() + spec.n_per_class);
    let clusters = [
        (0u8, &spec.mean_neg, spec.n_negatives()),
        (1u8, &spec.mean_pos, spec.n_per_class),
    ];
    for (label, mean, count) in clusters {
        for _ in 0..count {
            let features = mean
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + spec.scale * z
                })
                .collect();
            examples.push(Example::new(examples.len() as u64, features, label));
        }
    }
    Dataset::new(examples, dim)
}

fn feature_std(data: &Dataset) -> Vec<f64> {
    let n = data.len() as f64;
    (0..data.feature_dim())
        .map(|j| {
            let mean = data.examples().iter().map(|e| e.features[j]).sum::<f64>() / n;
            let var = data
                .examples()
                .iter()
                .map(|e| (e.features[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .collect()
}

/// Duplicates minority-class examples until both classes have equal counts.
///
/// Duplicates cycle through a seeded permutation of the minority class, get
/// additive Gaussian jitter of `jitter_scale × std_j` on feature `j` (std over
/// the whole input), and receive fresh ids above the input's largest id.
/// Originals are kept unchanged and in place; duplicates are appended.
pub fn balance_by_oversampling(
    train: &Dataset,
    jitter_scale: f64,
    seed: RngSeed,
) -> Result<Dataset> {
    let (pos, neg) = (train.positives(), train.negatives());
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    if !(jitter_scale >= 0.0 && jitter_scale.is_finite()) {
        return Err(Error::OutOfRange {
            name: "jitter_scale",
            value: jitter_scale,
            expected: ">= 0",
        });
    }
    if pos == neg {
        return Ok(train.clone());
    }
    let minority: Label = (pos < neg) as Label;
    let deficit = pos.abs_diff(neg);
    let std = feature_std(train);

    let mut rng = seed.rng();
    let mut sources: Vec<&Example> = train
        .examples()
        .iter()
        .filter(|e| e.label == minority)
        .collect();
    sources.shuffle(&mut rng);

    let first_id = train.max_id().map_or(0, |m| m + 1);
    let mut examples = train.examples().to_vec();
    for (id, src) in (first_id..).zip(sources.iter().cycle().take(deficit)) {
        let features = src
            .features
            .iter()
            .zip(&std)
            .map(|(x, s)| {
                let z: f64 = rng.sample(StandardNormal);
                x + jitter_scale * s * z
            })
            .collect();
        examples.push(Example::new(id, features, minority));
    }
    Dataset::new(examples, train.feature_dim())
}

/// Column layout of a dataset CSV file.
///
/// With `has_header = false` column names are zero-based positions ("0", "1", ...).
/// Without an `id_column`, ids are the zero-based data-row index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub id_column: Option<String>,
    pub has_header: bool,
}

impl CsvSchema {
    /// `id,x0,..,x{dim-1},label` with a header row.
    pub fn standard(dim: usize) -> Self {
        CsvSchema {
            feature_columns: (0..dim).map(|j| format!("x{j}")).collect(),
            label_column: "label".into(),
            id_column: Some("id".into()),
            has_header: true,
        }
    }

    /// Reads the header of `path`: `label_column` is the label, an `id`
    /// column (if present) is the id, every other column is a feature.
    pub fn from_header(path: impl AsRef<Path>, label_column: &str) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| csv_err(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        if !headers.iter().any(|h| h == label_column) {
            return Err(Error::MissingColumn(label_column.to_string()));
        }
        let has_id = headers.iter().any(|h| h == "id");
        Ok(CsvSchema {
            feature_columns: headers
                .iter()
                .filter(|h| *h != label_column && *h != "id")
                .map(str::to_string)
                .collect(),
            label_column: label_column.to_string(),
            id_column: has_id.then(|| "id".to_string()),
            has_header: true,
        })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;

    let column = |name: &str, headers: Option<&csv::StringRecord>| -> Result<usize> {
        match headers {
            Some(h) => h
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string())),
            None => name
                .parse::<usize>()
                .map_err(|_| Error::MissingColumn(name.to_string())),
        }
    };
    let headers = if schema.has_header {
        Some(rdr.headers().map_err(|e| csv_err(path, e))?.clone())
    } else {
        None
    };
    let feature_idx = schema
        .feature_columns
        .iter()
        .map(|c| column(c, headers.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = column(&schema.label_column, headers.as_ref())?;
    let id_idx = schema
        .id_column
        .as_deref()
        .map(|c| column(c, headers.as_ref()))
        .transpose()?;

    let mut examples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |col: &str, message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("row {row}, column {col:?}: {message}"),
        };
        let cell =
            |i: usize, col: &str| record.get(i).ok_or_else(|| bad(col, "missing cell".into()));

        let label = match cell(label_idx, &schema.label_column)? {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(bad(
                    &schema.label_column,
                    format!("label {other:?} is not 0 or 1"),
                ))
            }
        };
        let features = feature_idx
            .iter()
            .zip(&schema.feature_columns)
            .map(|(&i, col)| {
                let raw = cell(i, col)?;
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(bad(col, format!("{raw:?} is not a finite number"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let id = match (id_idx, schema.id_column.as_deref()) {
            (Some(i), Some(col)) => {
                let raw = cell(i, col)?;
                raw.parse::<u64>()
                    .map_err(|_| bad(col, format!("{raw:?} is not an id")))?
            }
            _ => row as u64,
        };
        examples.push(Example::new(id, features, label));
    }
    Dataset::new(examples, schema.feature_columns.len())
}

/// Writes `data` under `schema`. Reals use the shortest representation that
/// parses back to the same `f64`, so `load_csv ∘ save_csv` is exact.
///
/// Positional (header-less) schemas are written in the order id, features, label.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>, schema: &CsvSchema) -> Result<()> {
    let path = path.as_ref();
    if schema.feature_columns.len() != data.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: schema.feature_columns.len(),
            found: data.feature_dim(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if schema.has_header {
        let mut cols: Vec<&str> = Vec::new();
        if let Some(id) = &schema.id_column {
            cols.push(id);
        }
        cols.extend(schema.feature_columns.iter().map(String::as_str));
        cols.push(&schema.label_column);
        writeln!(out, "{}", cols.join(",")).map_err(io)?;
    }
    for ex in data.examples() {
        let mut cells: Vec<String> = Vec::with_capacity(data.feature_dim() + 2);
        if schema.id_column.is_some() {
            cells.push(ex.id.to_string());
        }
        cells.extend(ex.features.iter().map(|v| format!("{v:?}")));
        cells.push(ex.label.to_string());
        writeln!(out, "{}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn generator_counts_and_labels() {
        let spec = GaussianTaskSpec::diagonal(3, 2.0, 100, 3.0, RngSeed(1));
        let d = generate_gaussian_task(&spec).unwrap();
        assert_eq!((d.negatives(), d.positives()), (300, 100));
        assert_eq!(d.feature_dim(), 3);
        assert!(d.ids().eq(0..400));
        assert_eq!(generate_gaussian_task(&spec).unwrap(), d);
    }

    #[test]
    fn generator_labels_follow_clusters() {
        // Far-apart clusters make the generating component recoverable from position.
        let spec = GaussianTaskSpec {
            scale: 0.1,
            ..GaussianTaskSpec::diagonal(2, 50.0, 50, 1.0, RngSeed(2))
        };
        let d = generate_gaussian_task(&spec).unwrap();
        for e in d.examples() {
            assert_eq!(e.label, (e.features[0] > 25.0) as u8);
        }
    }

    #[test]
    fn generator_rejects_degenerate_scale() {
        for scale in [0.0, -1.0, f64::NAN] {
            let spec = GaussianTaskSpec {
                scale,
                ..GaussianTaskSpec::default_task(RngSeed(0))
            };
            assert!(matches!(
                generate_gaussian_task(&spec),
                Err(Error::DegenerateCovariance(_))
            ));
        }
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let d = generate_gaussian_task(&GaussianTaskSpec::diagonal(2, 1.0, 20, 1.0, RngSeed(3)))
            .unwrap();
        assert_eq!(balance_by_oversampling(&d, 0.05, RngSeed(1)).unwrap(), d);
    }

    #[test]
    fn oversampling_counts() {
        let d = generate_gaussian_task(&GaussianTaskSpec::diagonal(2, 1.0, 10, 9.0, RngSeed(3)))
            .unwrap();
        let b = balance_by_oversampling(&d, 0.05, RngSeed(1)).unwrap();
        assert_eq!((b.negatives(), b.positives()), (90, 90));
        assert_eq!(&b.examples()[..100], d.examples());
        assert!(b.examples()[100..]
            .iter()
            .all(|e| e.id >= 100 && e.label == 1));
    }

    #[test]
    fn zero_jitter_copies_exactly() {
        let d = generate_gaussian_task(&GaussianTaskSpec::diagonal(2, 1.0, 10, 4.0, RngSeed(5)))
            .unwrap();
        let b = balance_by_oversampling(&d, 0.0, RngSeed(1)).unwrap();
        let originals: Vec<&Vec<f64>> = d
            .examples()
            .iter()
            .filter(|e| e.label == 1)
            .map(|e| &e.features)
            .collect();
        for dup in &b.examples()[d.len()..] {
            assert!(originals.contains(&&dup.features));
        }
    }

    #[test]
    fn oversampling_needs_both_classes() {
        let d = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![1, 1]).unwrap();
        assert!(matches!(
            balance_by_oversampling(&d, 0.05, RngSeed(0)),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = generate_gaussian_task(&GaussianTaskSpec::diagonal(2, 1.0, 25, 1.0, RngSeed(8)))
            .unwrap();
        let schema = CsvSchema::standard(2);
        save_csv(&d, &path, &schema).unwrap();
        assert_eq!(load_csv(&path, &schema).unwrap(), d);
        assert_eq!(CsvSchema::from_header(&path, "label").unwrap(), schema);
    }

    #[test]
    fn bad_label_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "id,x0,label\n0,1.5,0\n1,2.5,2\n").unwrap();
        let schema = CsvSchema {
            feature_columns: vec!["x0".into()],
            label_column: "label".into(),
            id_column: Some("id".into()),
            has_header: true,
        };
        let err = load_csv(&path, &schema).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("row 1"), "{err}");
        assert!(err.contains("\"label\""), "{err}");
    }

    #[test]
    fn missing_column_and_bad_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "x0,label\n1.0,1\nabc,0\n").unwrap();
        let mut schema = CsvSchema {
            feature_columns: vec!["x0".into(), "x1".into()],
            label_column: "label".into(),
            id_column: None,
            has_header: true,
        };
        assert!(matches!(load_csv(&path, &schema), Err(Error::MissingColumn(c)) if c == "x1"));
        schema.feature_columns.pop();
        let err = load_csv(&path, &schema).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("abc"), "{err}");
    }

    #[test]
    fn headerless_positional() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        fs::write(&path, "0.5,-1.25,1\n2.0,3.0,0\n").unwrap();
        let schema = CsvSchema {
            feature_columns: vec!["0".into(), "1".into()],
            label_column: "2".into(),
            id_column: None,
            has_header: false,
        };
        let d = load_csv(&path, &schema).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.examples()[0].features, vec![0.5, -1.25]);
        assert_eq!(d.examples()[1].label, 0);
        assert!(d.ids().eq(0..2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn balancing_only_adds(n_pos in 1usize..20, n_neg in 1usize..40, seed: u64, jitter in 0.0f64..1.0) {
                let rows: Vec<Vec<f64>> = (0..n_pos + n_neg).map(|i| vec![i as f64, (i * i) as f64]).collect();
                let labels: Vec<u8> = (0..n_pos + n_neg).map(|i| (i < n_pos) as u8).collect();
                let d = Dataset::from_rows(rows, labels).unwrap();
                let b = balance_by_oversampling(&d, jitter, RngSeed(seed)).unwrap();
                prop_assert_eq!(&b.examples()[..d.len()], d.examples());
                prop_assert_eq!(b.positives(), b.negatives());
            }

            #[test]
            fn csv_round_trip_exact(vals in proptest::collection::vec(-1e300f64..1e300, 1..40), seed: u64) {
                let n = vals.len();
                let rows = vals.iter().map(|&v| vec![v, v / 3.0]).collect();
                let labels = (0..n).map(|i| ((i as u64 ^ seed) & 1) as u8).collect();
                let d = Dataset::from_rows(rows, labels).unwrap();
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("p.csv");
                save_csv(&d, &path, &CsvSchema::standard(2)).unwrap();
                prop_assert_eq!(load_csv(&path, &CsvSchema::standard(2)).unwrap(), d);
            }
        }
    }
}
