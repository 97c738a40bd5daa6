//! Datasets: CSV I/O, the benchmark registry, min-max scaling, and
//! synthetic generators.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::{Error, Result, Scalar};

/// Binary-labelled feature matrix; label 1 is the minority (positive) class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub name: String,
    pub features: Array2<T>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    /// Labels were inverted at construction because 1 was the majority.
    pub flipped: bool,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: impl Into<String>, features: Array2<T>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let name = name.into();
        if features.nrows() != labels.len() {
            return Err(Error::Dimension {
                context: "dataset labels",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Dimension {
                context: "feature names",
                expected: features.ncols(),
                got: feature_names.len(),
            });
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Load {
                row: r + 1,
                column: feature_names[c].clone(),
                reason: "non-finite value".into(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Input("labels must be 0 or 1".into()));
        }
        let mut ds = Self {
            name,
            features,
            labels,
            feature_names,
            flipped: false,
        };
        if ds.positives() > ds.negatives() {
            log::warn!("{}: label 1 is the majority class; flipping labels", ds.name);
            ds.labels.iter_mut().for_each(|l| *l = 1 - *l);
            ds.flipped = true;
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Row indices holding `label`, ascending.
    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// `|majority| − |minority|`.
    pub fn deficit(&self) -> usize {
        self.negatives() - self.positives()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "N/A" | "na" | "?" | "nan" | "NaN" | "null" | "NULL")
}

/// Parses CSV with a header row. Every column except `label_column` must be
/// numeric; a label equal to `positive_label` maps to 1, anything else to 0.
/// Reported rows are 1-based data rows (the header is not counted).
pub fn read_csv<T: Scalar, R: Read>(reader: R, name: &str, label_column: &str, positive_label: &str) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Input(format!("label column {label_column:?} not in header")))?;
    let feature_names: Vec<String> = headers.iter().enumerate().filter(|(i, _)| *i != label_idx).map(|(_, h)| h.clone()).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Load {
                row,
                column: String::new(),
                reason: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                return Err(Error::Load {
                    row,
                    column: headers[c].clone(),
                    reason: "missing value".into(),
                });
            }
            if c == label_idx {
                labels.push(u8::from(cell == positive_label));
                continue;
            }
            let v: T = cell.parse().map_err(|_| Error::Load {
                row,
                column: headers[c].clone(),
                reason: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Load {
                    row,
                    column: headers[c].clone(),
                    reason: "non-finite value".into(),
                });
            }
            values.push(v);
        }
    }
    let features = Array2::from_shape_vec((labels.len(), feature_names.len()), values).expect("row-major");
    Dataset::new(name, features, labels, feature_names)
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label_column: &str, positive_label: &str) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_owned();
    let file = std::fs::File::open(path)?;
    read_csv(file, &name, label_column, positive_label)
}

/// Writes features at full round-trip precision plus a `label_column` of 0/1.
pub fn write_csv<T: Scalar, W: Write>(ds: &Dataset<T>, writer: W, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ds.feature_names.iter().map(String::as_str).chain([label_column]))?;
    for (row, &label) in ds.features.outer_iter().zip(&ds.labels) {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        cells.push(label.to_string());
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

/// One benchmark dataset's published shape and network defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegistryEntry {
    pub name: &'static str,
    pub expected_instances: usize,
    pub expected_attributes: usize,
    pub expected_pos: usize,
    pub expected_neg: usize,
    /// Deep SMOTE hidden widths and training-pair count.
    pub deep_smote_hidden: &'static [usize],
    pub deep_smote_t_count: usize,
    /// DA-SMOTE generator / discriminator widths, input first.
    pub da_smote_gen: &'static [usize],
    pub da_smote_disc: &'static [usize],
    /// GAN generator / discriminator widths, input first.
    pub gan_gen: &'static [usize],
    pub gan_disc: &'static [usize],
}

const BANKRUPTCY_DA_GEN: &[usize] = &[128, 512, 256, 128, 100, 82, 64];
const BANKRUPTCY_DA_DISC: &[usize] = &[64, 48, 24, 16, 8, 1];
const BANKRUPTCY_GAN_GEN: &[usize] = &[64, 16, 8, 64];
const BANKRUPTCY_GAN_DISC: &[usize] = &[64, 32, 16, 8, 1];
const BANKRUPTCY_HIDDEN: &[usize] = &[112, 86, 72];

const fn bankruptcy(name: &'static str, instances: usize, pos: usize, neg: usize, t_count: usize) -> RegistryEntry {
    RegistryEntry {
        name,
        expected_instances: instances,
        expected_attributes: 64,
        expected_pos: pos,
        expected_neg: neg,
        deep_smote_hidden: BANKRUPTCY_HIDDEN,
        deep_smote_t_count: t_count,
        da_smote_gen: BANKRUPTCY_DA_GEN,
        da_smote_disc: BANKRUPTCY_DA_DISC,
        gan_gen: BANKRUPTCY_GAN_GEN,
        gan_disc: BANKRUPTCY_GAN_DISC,
    }
}

/// The ten benchmark datasets.
pub const REGISTRY: [RegistryEntry; 10] = [
    RegistryEntry {
        name: "Pima",
        expected_instances: 768,
        expected_attributes: 8,
        expected_pos: 268,
        expected_neg: 500,
        deep_smote_hidden: &[32, 24, 16],
        deep_smote_t_count: 7000,
        da_smote_gen: &[16, 64, 48, 24, 12, 8],
        da_smote_disc: &[8, 4, 2, 1],
        gan_gen: &[8, 24, 16, 8],
        gan_disc: &[8, 6, 4, 1],
    },
    RegistryEntry {
        name: "WBC",
        expected_instances: 699,
        expected_attributes: 9,
        expected_pos: 241,
        expected_neg: 458,
        deep_smote_hidden: &[48, 32, 16],
        deep_smote_t_count: 12000,
        da_smote_gen: &[18, 64, 48, 24, 12, 9],
        da_smote_disc: &[9, 4, 2, 1],
        gan_gen: &[9, 36, 18, 9],
        gan_disc: &[9, 20, 8, 1],
    },
    RegistryEntry {
        name: "Haberman",
        expected_instances: 306,
        expected_attributes: 3,
        expected_pos: 81,
        expected_neg: 225,
        deep_smote_hidden: &[3],
        deep_smote_t_count: 1500,
        da_smote_gen: &[6, 64, 48, 24, 6, 3],
        da_smote_disc: &[3, 12, 8, 6, 2, 1],
        gan_gen: &[3, 9, 6, 3],
        gan_disc: &[3, 10, 8, 1],
    },
    RegistryEntry {
        name: "Ionosphere",
        expected_instances: 351,
        expected_attributes: 34,
        expected_pos: 126,
        expected_neg: 225,
        deep_smote_hidden: &[138, 96, 72, 38],
        deep_smote_t_count: 7000,
        da_smote_gen: &[68, 136, 112, 86, 64, 52, 34],
        da_smote_disc: &[34, 16, 8, 1],
        gan_gen: &[34, 106, 53, 34],
        gan_disc: &[34, 64, 32, 16, 8, 1],
    },
    RegistryEntry {
        name: "Parkinson",
        expected_instances: 195,
        expected_attributes: 23,
        expected_pos: 48,
        expected_neg: 147,
        deep_smote_hidden: &[40, 36, 32, 28],
        deep_smote_t_count: 1500,
        da_smote_gen: &[44, 112, 96, 82, 64, 32, 22],
        da_smote_disc: &[22, 16, 8, 1],
        gan_gen: &[22, 88, 44, 22],
        gan_disc: &[22, 44, 22, 11, 1],
    },
    RegistryEntry {
        name: "Blood",
        expected_instances: 748,
        expected_attributes: 4,
        expected_pos: 178,
        expected_neg: 570,
        deep_smote_hidden: &[16, 6],
        deep_smote_t_count: 7000,
        da_smote_gen: &[8, 32, 24, 16, 12, 8, 4],
        da_smote_disc: &[4, 3, 2, 1],
        gan_gen: &[4, 16, 8, 4],
        gan_disc: &[4, 16, 8, 1],
    },
    bankruptcy("Bankruptcy-1", 7027, 271, 6756, 2000),
    bankruptcy("Bankruptcy-2", 10173, 400, 9773, 8000),
    bankruptcy("Bankruptcy-3", 10503, 495, 10008, 10000),
    bankruptcy("Bankruptcy-5", 5910, 410, 5500, 2000),
];

/// Case-insensitive lookup by registry name.
pub fn registry_entry(name: &str) -> Option<&'static RegistryEntry> {
    REGISTRY.iter().find(|e| e.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dataset: String,
    pub registry: &'static str,
    pub instances: usize,
    pub attributes: usize,
    pub positives: usize,
    pub negatives: usize,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Compares a loaded dataset against its registry row. Mismatches are
/// reported as warnings; they never fail.
pub fn validate_against_registry<T: Scalar>(ds: &Dataset<T>, entry: &'static RegistryEntry) -> ValidationReport {
    let mut warnings = Vec::new();
    let mut check = |what: &str, got: usize, expected: usize| {
        if got != expected {
            warnings.push(format!("{what}: found {got}, registry lists {expected}"));
        }
    };
    check("instances", ds.len(), entry.expected_instances);
    check("attributes", ds.n_features(), entry.expected_attributes);
    check("positives", ds.positives(), entry.expected_pos);
    check("negatives", ds.negatives(), entry.expected_neg);
    for w in &warnings {
        log::warn!("{} vs registry {}: {w}", ds.name, entry.name);
    }
    ValidationReport {
        dataset: ds.name.clone(),
        registry: entry.name,
        instances: ds.len(),
        attributes: ds.n_features(),
        positives: ds.positives(),
        negatives: ds.negatives(),
        warnings,
    }
}

/// Per-feature min-max scaler fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler<T> {
    pub min: Array1<T>,
    pub max: Array1<T>,
}

impl<T: Scalar> MinMaxScaler<T> {
    pub fn fit(train: ArrayView2<T>) -> Result<Self> {
        if train.nrows() == 0 {
            return Err(Error::Input("scaler needs at least one row".into()));
        }
        let min = train.fold_axis(Axis(0), T::infinity(), |&a, &b| a.min(b));
        let max = train.fold_axis(Axis(0), T::neg_infinity(), |&a, &b| a.max(b));
        Ok(Self { min, max })
    }

    /// `(x − min)/(max − min)`; constant training columns map to 0. Values
    /// outside the training range fall outside `[0, 1]`.
    pub fn transform(&self, features: ArrayView2<T>) -> Result<Array2<T>> {
        if features.ncols() != self.min.len() {
            return Err(Error::Dimension {
                context: "scaler width",
                expected: self.min.len(),
                got: features.ncols(),
            });
        }
        let mut out = features.to_owned();
        for (mut col, (&lo, &hi)) in out.axis_iter_mut(Axis(1)).zip(self.min.iter().zip(self.max.iter())) {
            let span = hi - lo;
            col.mapv_inplace(|v| if span > T::zero() { (v - lo) / span } else { T::zero() });
        }
        Ok(out)
    }
}

pub fn fit_minmax<T: Scalar>(train: ArrayView2<T>) -> Result<MinMaxScaler<T>> {
    MinMaxScaler::fit(train)
}

pub fn apply_minmax<T: Scalar>(scaler: &MinMaxScaler<T>, features: ArrayView2<T>) -> Result<Array2<T>> {
    scaler.transform(features)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    TwoGaussians,
    Moons,
    Ring,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::TwoGaussians => "two_gaussians",
            SyntheticKind::Moons => "moons",
            SyntheticKind::Ring => "ring",
        }
    }
}

/// Reproducible 2-D imbalanced data. `overlap` in `[0, 1]` moves the classes
/// together; at 0 every kind is separable (two_gaussians linearly so).
pub fn make_synthetic<T: Scalar>(
    kind: SyntheticKind,
    n_major: usize,
    n_minor: usize,
    overlap: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if n_minor < 2 {
        return Err(Error::InsufficientMinority { needed: 2, got: n_minor });
    }
    if n_minor > n_major {
        return Err(Error::Config("n_minor must not exceed n_major".into()));
    }
    let overlap = overlap.clamp(0.0, 1.0);
    let mut rng = seeded(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut rows: Vec<[f64; 2]> = Vec::with_capacity(n_major + n_minor);
    let mut labels = Vec::with_capacity(n_major + n_minor);
    for (label, count) in [(0u8, n_major), (1u8, n_minor)] {
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let mut made = 0;
        while made < count {
            let point = match kind {
                SyntheticKind::TwoGaussians => {
                    let center = 3.0 * (1.0 - overlap);
                    let p = [sign * center + std_normal.sample(&mut rng), std_normal.sample(&mut rng)];
                    // at zero overlap keep a clear margin around x = 0
                    if overlap == 0.0 && sign * p[0] < 0.5 {
                        continue;
                    }
                    p
                }
                SyntheticKind::Moons => {
                    let theta = rng.random::<f64>() * std::f64::consts::PI;
                    let noise = 0.05 + 0.3 * overlap;
                    let (x, y) = if label == 0 {
                        (theta.cos(), theta.sin())
                    } else {
                        (1.0 - theta.cos(), 0.5 - theta.sin())
                    };
                    let gap = 0.5 * (1.0 - overlap);
                    let p = [
                        x + noise * std_normal.sample(&mut rng),
                        y + sign * -gap + noise * std_normal.sample(&mut rng),
                    ];
                    if overlap == 0.0 {
                        // reject noise that crosses into the other moon's band
                        let clean_theta_ok = if label == 0 { p[1] > 0.25 - gap + 0.3 } else { p[1] < 0.25 + gap - 0.3 };
                        if !clean_theta_ok {
                            continue;
                        }
                    }
                    p
                }
                SyntheticKind::Ring => {
                    let angle = rng.random::<f64>() * std::f64::consts::TAU;
                    let radius = if label == 1 {
                        rng.random::<f64>().sqrt()
                    } else {
                        let inner = 2.0 - 1.5 * overlap;
                        inner + rng.random::<f64>()
                    };
                    [radius * angle.cos(), radius * angle.sin()]
                }
            };
            rows.push(point);
            labels.push(label);
            made += 1;
        }
    }
    let features = Array2::from_shape_fn((rows.len(), 2), |(i, j)| T::lit(rows[i][j]));
    Dataset::new(kind.name(), features, labels, vec!["x0".into(), "x1".into()])
}

/// Synthetic dataset with exactly the registry row's instance, attribute and
/// class counts: standard-normal majority and a minority shifted on its first
/// three features.
pub fn registry_standin<T: Scalar>(entry: &RegistryEntry, seed: u64) -> Result<Dataset<T>> {
    let n = entry.expected_attributes;
    let mut rng = seeded(seed);
    let norm = Normal::new(0.0, 1.0).expect("valid normal");
    let total = entry.expected_pos + entry.expected_neg;
    let mut labels = vec![0u8; entry.expected_neg];
    labels.extend(vec![1u8; entry.expected_pos]);
    let features = Array2::from_shape_fn((total, n), |(i, j)| {
        let shift = if labels[i] == 1 && j < 3 { 1.2 } else { 0.0 };
        T::lit(shift + norm.sample(&mut rng))
    });
    let names = (0..n).map(|j| format!("f{j}")).collect();
    Dataset::new(entry.name, features, labels, names)
}
