//! Synthetic benchmark data, reference-set splitting, and dataset file IO.
//!
//! The synthetic benchmark draws a reference sample from the standard
//! Gaussian in `d` dimensions and a test sample contaminated by outliers
//! whose first `signal_dims` coordinates are shifted by `amplitude`. All
//! draws run through keyed ChaCha streams plus an explicit Box-Muller
//! transform, so datasets are bit-reproducible across platforms and thread
//! counts.

use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub d: usize,
    pub n_ref: usize,
    pub n_test: usize,
    pub outlier_prop: f64,
    /// Mean shift applied to each signal coordinate of an outlier.
    pub amplitude: f64,
    /// Number of leading coordinates that carry the shift.
    pub signal_dims: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            d: 100,
            n_ref: 2000,
            n_test: 1000,
            outlier_prop: 0.1,
            amplitude: 3.0,
            signal_dims: 5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter {
                name: "d",
                value: "0".into(),
                reason: "need at least one dimension",
            });
        }
        if self.signal_dims > self.d {
            return Err(Error::InvalidParameter {
                name: "signal_dims",
                value: format!("{}", self.signal_dims),
                reason: "cannot exceed d",
            });
        }
        if self.n_ref == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter {
                name: "n_ref/n_test",
                value: format!("{}/{}", self.n_ref, self.n_test),
                reason: "need at least one reference and one test point",
            });
        }
        if !(0.0..1.0).contains(&self.outlier_prop) {
            return Err(Error::InvalidParameter {
                name: "outlier_prop",
                value: format!("{}", self.outlier_prop),
                reason: "must lie in [0, 1)",
            });
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                value: format!("{}", self.amplitude),
                reason: "must be finite",
            });
        }
        Ok(())
    }

    /// Number of planted outliers: `floor(n_test * outlier_prop)`.
    pub fn n_outliers(&self) -> usize {
        (self.n_test as f64 * self.outlier_prop).floor() as usize
    }
}

/// A reference sample (assumed all inliers) plus a test sample with optional
/// ground-truth labels (`true` = outlier), used only for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub reference: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    pub test_labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.reference.first().or_else(|| self.test.first()).map_or(0, Vec::len)
    }

    pub fn n_ref(&self) -> usize {
        self.reference.len()
    }

    pub fn n_test(&self) -> usize {
        self.test.len()
    }
}

/// Standard normal draws via Box-Muller on a ChaCha stream; explicit so the
/// generated values are stable regardless of RNG-library internals.
struct Gaussian {
    rng: ChaCha12Rng,
    spare: Option<f64>,
}

impl Gaussian {
    fn new(rng: ChaCha12Rng) -> Self {
        Self { rng, spare: None }
    }

    fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = 1.0 - self.rng.random::<f64>(); // (0, 1]
        let u2: f64 = self.rng.random();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * sin);
        radius * cos
    }

    fn row(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.sample()).collect()
    }
}

/// Generates the synthetic benchmark dataset for `cfg`. Outlier count is
/// `floor(n_test * outlier_prop)`; outlier positions within the test sample
/// are a seeded shuffle.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut reference_stream = Gaussian::new(seeding::stream(cfg.seed, "synth-ref", &[]));
    let reference: Vec<Vec<f64>> = (0..cfg.n_ref).map(|_| reference_stream.row(cfg.d)).collect();

    let n_out = cfg.n_outliers();
    let mut positions: Vec<usize> = (0..cfg.n_test).collect();
    positions.shuffle(&mut seeding::stream(cfg.seed, "synth-placement", &[]));
    let mut is_outlier = vec![false; cfg.n_test];
    for &p in &positions[..n_out] {
        is_outlier[p] = true;
    }

    let mut inlier_stream = Gaussian::new(seeding::stream(cfg.seed, "synth-test-inlier", &[]));
    let mut outlier_stream = Gaussian::new(seeding::stream(cfg.seed, "synth-test-outlier", &[]));
    let test: Vec<Vec<f64>> = is_outlier
        .iter()
        .map(|&out| {
            if out {
                let mut row = outlier_stream.row(cfg.d);
                for v in row.iter_mut().take(cfg.signal_dims) {
                    *v += cfg.amplitude;
                }
                row
            } else {
                inlier_stream.row(cfg.d)
            }
        })
        .collect();

    Ok(Dataset { reference, test, test_labels: Some(is_outlier) })
}

/// Splits the reference indices into disjoint (train, cal) index sets for
/// repetition `k`. The split is a pure function of `(master_seed, k)`: any
/// repetition can be reproduced without generating the others.
pub fn split_reference(
    dataset: &Dataset,
    n_cal: usize,
    k: usize,
    master_seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_ref = dataset.n_ref();
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            value: "0".into(),
            reason: "repetition indices are 1-based",
        });
    }
    if n_cal == 0 || n_cal >= n_ref {
        return Err(Error::InvalidParameter {
            name: "n_cal",
            value: format!("{n_cal}"),
            reason: "must leave at least one training point (0 < n_cal < n_ref)",
        });
    }
    let mut indices: Vec<usize> = (0..n_ref).collect();
    indices.shuffle(&mut seeding::stream(master_seed, "split", &[k as u64]));
    let mut cal: Vec<usize> = indices[..n_cal].to_vec();
    let mut train: Vec<usize> = indices[n_cal..].to_vec();
    cal.sort_unstable();
    train.sort_unstable();
    Ok((train, cal))
}

/// Subsampling directions for [`load_dataset`]: build a benchmark of the
/// requested shape out of a labeled pool of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub n_ref: usize,
    pub n_test: usize,
    pub outlier_prop: f64,
    pub seed: u64,
}

struct ParsedCsv {
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<bool>>,
    roles: Option<Vec<bool>>, // true = test row
}

fn parse_dataset_csv(path: &Path) -> Result<ParsedCsv> {
    let display = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: display.clone(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<String> = headers.iter().map(str::to_string).collect();

    let mut d = 0;
    while d < names.len() && names[d] == format!("x{d}") {
        d += 1;
    }
    if d == 0 {
        return Err(parse_err(1, format!("expected coordinate columns x0..x{{d-1}}, got {names:?}")));
    }
    let mut col = d;
    let outlier_col = if col < names.len() && names[col] == "is_outlier" {
        col += 1;
        Some(col - 1)
    } else {
        None
    };
    let role_col = if col < names.len() && names[col] == "role" {
        col += 1;
        Some(col - 1)
    } else {
        None
    };
    if col != names.len() {
        return Err(parse_err(1, format!("unexpected trailing columns {:?}", &names[col..])));
    }

    let mut rows = Vec::new();
    let mut labels = outlier_col.map(|_| Vec::new());
    let mut roles = role_col.map(|_| Vec::new());
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", names.len(), record.len())));
        }
        let mut row = Vec::with_capacity(d);
        for i in 0..d {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| parse_err(line, format!("invalid coordinate {:?}", &record[i])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite coordinate {v}")));
            }
            row.push(v);
        }
        rows.push(row);
        if let (Some(c), Some(ls)) = (outlier_col, labels.as_mut()) {
            let flag = match &record[c] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(line, format!("is_outlier must be 0 or 1, got {other:?}"))),
            };
            ls.push(flag);
        }
        if let (Some(c), Some(rs)) = (role_col, roles.as_mut()) {
            let is_test = match &record[c] {
                "ref" | "reference" => false,
                "test" => true,
                other => return Err(parse_err(line, format!("role must be ref or test, got {other:?}"))),
            };
            rs.push(is_test);
        }
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    Ok(ParsedCsv { rows, labels, roles })
}

/// Loads a dataset CSV with columns `x0..x{d-1}[,is_outlier][,role]`.
///
/// Without `subsample`, a `role` column must assign every row to the
/// reference or test sample (reference rows must not be labeled outliers).
/// With `subsample`, the rows are treated as a labeled pool and a benchmark
/// of the requested shape is drawn from it without replacement.
pub fn load_dataset(path: &Path, subsample: Option<&SubsampleSpec>) -> Result<Dataset> {
    let parsed = parse_dataset_csv(path)?;
    let display = path.display().to_string();

    match subsample {
        None => {
            let Some(roles) = parsed.roles else {
                return Err(Error::Parse {
                    path: display,
                    line: 1,
                    message: "no role column and no subsample directions; cannot split rows".into(),
                });
            };
            let mut reference = Vec::new();
            let mut test = Vec::new();
            let mut test_labels = parsed.labels.as_ref().map(|_| Vec::new());
            for (i, row) in parsed.rows.into_iter().enumerate() {
                if roles[i] {
                    test.push(row);
                    if let (Some(ls), Some(all)) = (test_labels.as_mut(), parsed.labels.as_ref()) {
                        ls.push(all[i]);
                    }
                } else {
                    if parsed.labels.as_ref().is_some_and(|ls| ls[i]) {
                        return Err(Error::Parse {
                            path: display,
                            line: i + 2,
                            message: "reference row labeled as outlier".into(),
                        });
                    }
                    reference.push(row);
                }
            }
            if reference.is_empty() || test.is_empty() {
                return Err(Error::Parse {
                    path: display,
                    line: 0,
                    message: "need at least one reference and one test row".into(),
                });
            }
            Ok(Dataset { reference, test, test_labels })
        }
        Some(spec) => {
            let Some(labels) = parsed.labels else {
                return Err(Error::Parse {
                    path: display,
                    line: 1,
                    message: "subsampling requires an is_outlier column".into(),
                });
            };
            if !(0.0..1.0).contains(&spec.outlier_prop) {
                return Err(Error::InvalidParameter {
                    name: "outlier_prop",
                    value: format!("{}", spec.outlier_prop),
                    reason: "must lie in [0, 1)",
                });
            }
            let n_out = (spec.n_test as f64 * spec.outlier_prop).floor() as usize;
            let n_in_test = spec.n_test - n_out;

            let mut inliers: Vec<usize> = Vec::new();
            let mut outliers: Vec<usize> = Vec::new();
            for (i, &out) in labels.iter().enumerate() {
                if out {
                    outliers.push(i);
                } else {
                    inliers.push(i);
                }
            }
            let needed_inliers = spec.n_ref + n_in_test;
            if inliers.len() < needed_inliers {
                return Err(Error::InsufficientData {
                    needed: needed_inliers,
                    available: inliers.len(),
                    what: "inlier rows",
                });
            }
            if outliers.len() < n_out {
                return Err(Error::InsufficientData {
                    needed: n_out,
                    available: outliers.len(),
                    what: "outlier rows",
                });
            }

            inliers.shuffle(&mut seeding::stream(spec.seed, "subsample-inliers", &[]));
            outliers.shuffle(&mut seeding::stream(spec.seed, "subsample-outliers", &[]));
            let reference: Vec<Vec<f64>> =
                inliers[..spec.n_ref].iter().map(|&i| parsed.rows[i].clone()).collect();

            let mut positions: Vec<usize> = (0..spec.n_test).collect();
            positions.shuffle(&mut seeding::stream(spec.seed, "subsample-placement", &[]));
            let mut is_outlier = vec![false; spec.n_test];
            for &p in &positions[..n_out] {
                is_outlier[p] = true;
            }

            let mut next_in = inliers[spec.n_ref..].iter();
            let mut next_out = outliers.iter();
            let test: Vec<Vec<f64>> = is_outlier
                .iter()
                .map(|&out| {
                    let &i = if out {
                        next_out.next().expect("counted above")
                    } else {
                        next_in.next().expect("counted above")
                    };
                    parsed.rows[i].clone()
                })
                .collect();
            Ok(Dataset { reference, test, test_labels: Some(is_outlier) })
        }
    }
}

/// Writes a dataset CSV (`x0..x{d-1},is_outlier,role`) that `load_dataset`
/// reads back exactly.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let d = dataset.dim();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("is_outlier".into());
    header.push("role".into());
    writer.write_record(&header)?;

    let mut record = Vec::with_capacity(d + 2);
    for row in &dataset.reference {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v}")));
        record.push("0".into());
        record.push("ref".into());
        writer.write_record(&record)?;
    }
    for (j, row) in dataset.test.iter().enumerate() {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v}")));
        let label = dataset.test_labels.as_ref().is_some_and(|ls| ls[j]);
        record.push(if label { "1" } else { "0" }.into());
        record.push("test".into());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a labels CSV with header `test_index,is_outlier` covering indices
/// `0..n_test` exactly once.
pub fn load_labels(path: &Path) -> Result<Vec<bool>> {
    let display = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: display.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["test_index", "is_outlier"] {
        return Err(parse_err(1, format!("expected header `test_index,is_outlier`, got {headers:?}")));
    }
    let mut pairs: Vec<(usize, bool)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let idx: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid test_index {:?}", &record[0])))?;
        let flag = match &record[1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line, format!("is_outlier must be 0 or 1, got {other:?}"))),
        };
        pairs.push((idx, flag));
    }
    pairs.sort_unstable();
    for (expected, &(idx, _)) in pairs.iter().enumerate() {
        if idx != expected {
            return Err(parse_err(
                0,
                format!("test_index values must cover 0..{} exactly; problem near {idx}", pairs.len()),
            ));
        }
    }
    Ok(pairs.into_iter().map(|(_, flag)| flag).collect())
}

/// Writes the labels CSV read by [`load_labels`].
pub fn write_labels(path: &Path, labels: &[bool]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["test_index", "is_outlier"])?;
    for (j, &flag) in labels.iter().enumerate() {
        writer.write_record([j.to_string(), (flag as u8).to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Content hash of a dataset for provenance records.
pub fn dataset_fingerprint(dataset: &Dataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"dataset/v1");
    for group in [&dataset.reference, &dataset.test] {
        hasher.update((group.len() as u64).to_le_bytes());
        for row in group {
            hasher.update((row.len() as u64).to_le_bytes());
            for &v in row {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    match &dataset.test_labels {
        Some(labels) => {
            hasher.update([1u8]);
            for &flag in labels {
                hasher.update([flag as u8]);
            }
        }
        None => hasher.update([0u8]),
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            d: 20,
            n_ref: 2000,
            n_test: 400,
            outlier_prop: 0.25,
            amplitude: 3.0,
            signal_dims: 4,
            seed: 11,
        }
    }

    #[test]
    fn synthetic_generation_is_deterministic_per_seed() {
        let cfg = small_cfg();
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.reference[0], c.reference[0]);
    }

    #[test]
    fn synthetic_outlier_count_uses_floor() {
        let count = |n_test: usize, prop: f64| {
            let cfg = SyntheticConfig {
                d: 2,
                n_ref: 4,
                n_test,
                outlier_prop: prop,
                signal_dims: 1,
                ..Default::default()
            };
            let data = generate_synthetic(&cfg).unwrap();
            data.test_labels.unwrap().iter().filter(|&&o| o).count()
        };
        assert_eq!(count(10, 0.25), 2); // floor(2.5)
        assert_eq!(count(500, 0.1), 50);
        assert_eq!(count(7, 0.0), 0);
        assert_eq!(count(3, 0.99), 2); // floor(2.97)
    }

    #[test]
    fn synthetic_moments_match_the_model() {
        let cfg = small_cfg();
        let data = generate_synthetic(&cfg).unwrap();
        let labels = data.test_labels.as_ref().unwrap();

        let flat: Vec<f64> = data.reference.iter().flatten().copied().collect();
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        let var = flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / flat.len() as f64;
        assert!(mean.abs() < 0.05, "reference mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "reference var {var}");

        // Signal coordinates of outliers center on the amplitude; noise
        // coordinates and inliers center on zero.
        let outlier_rows: Vec<&Vec<f64>> = data
            .test
            .iter()
            .zip(labels)
            .filter(|&(_, &o)| o)
            .map(|(r, _)| r)
            .collect();
        assert_eq!(outlier_rows.len(), 100);
        for dim in 0..cfg.d {
            let m = outlier_rows.iter().map(|r| r[dim]).sum::<f64>() / outlier_rows.len() as f64;
            let target = if dim < cfg.signal_dims { cfg.amplitude } else { 0.0 };
            assert!((m - target).abs() < 0.5, "dim {dim}: mean {m} vs {target}");
        }
    }

    #[test]
    fn synthetic_validates_parameters() {
        let bad = SyntheticConfig { signal_dims: 3, d: 2, ..Default::default() };
        assert!(generate_synthetic(&bad).is_err());
        let bad = SyntheticConfig { outlier_prop: 1.0, ..Default::default() };
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn split_is_a_pure_function_of_seed_and_repetition() {
        let data = generate_synthetic(&SyntheticConfig {
            d: 2,
            n_ref: 50,
            n_test: 5,
            signal_dims: 1,
            ..Default::default()
        })
        .unwrap();
        let (train1, cal1) = split_reference(&data, 20, 1, 9).unwrap();
        let (train1b, cal1b) = split_reference(&data, 20, 1, 9).unwrap();
        assert_eq!((&train1, &cal1), (&train1b, &cal1b));

        let (_, cal2) = split_reference(&data, 20, 2, 9).unwrap();
        assert_ne!(cal1, cal2, "repetitions must get different splits");

        assert_eq!(cal1.len(), 20);
        assert_eq!(train1.len(), 30);
        let mut all: Vec<usize> = train1.iter().chain(cal1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_sizes() {
        let data = generate_synthetic(&SyntheticConfig {
            d: 2,
            n_ref: 10,
            n_test: 2,
            signal_dims: 1,
            ..Default::default()
        })
        .unwrap();
        assert!(split_reference(&data, 0, 1, 0).is_err());
        assert!(split_reference(&data, 10, 1, 0).is_err());
        assert!(split_reference(&data, 5, 0, 0).is_err());
    }

    #[test]
    fn dataset_csv_round_trips_exactly() {
        let cfg = SyntheticConfig {
            d: 3,
            n_ref: 12,
            n_test: 8,
            outlier_prop: 0.25,
            signal_dims: 2,
            ..Default::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset(&path, &data).unwrap();
        let back = load_dataset(&path, None).unwrap();
        assert_eq!(back, data);
        assert_eq!(dataset_fingerprint(&back), dataset_fingerprint(&data));
    }

    #[test]
    fn load_without_role_or_subsample_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        std::fs::write(&path, "x0,is_outlier\n1.0,0\n2.0,1\n").unwrap();
        let err = load_dataset(&path, None).unwrap_err().to_string();
        assert!(err.contains("role"), "{err}");
    }

    #[test]
    fn load_rejects_outlier_labeled_reference_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,is_outlier,role\n1.0,1,ref\n2.0,0,test\n").unwrap();
        let err = load_dataset(&path, None).unwrap_err().to_string();
        assert!(err.contains("reference row labeled as outlier"), "{err}");
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn load_reports_bad_values_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,role\n1.0,ref\nnope,test\n").unwrap();
        let err = load_dataset(&path, None).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn subsample_draws_requested_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        let mut content = String::from("x0,x1,is_outlier\n");
        for i in 0..60 {
            content.push_str(&format!("{}.0,0.5,0\n", i));
        }
        for i in 0..10 {
            content.push_str(&format!("{}.5,9.0,1\n", i));
        }
        std::fs::write(&path, content).unwrap();

        let spec = SubsampleSpec { n_ref: 30, n_test: 20, outlier_prop: 0.25, seed: 4 };
        let data = load_dataset(&path, Some(&spec)).unwrap();
        assert_eq!(data.n_ref(), 30);
        assert_eq!(data.n_test(), 20);
        let labels = data.test_labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|&&o| o).count(), 5);
        // Outlier rows in the pool all have x1 = 9.0.
        for (row, &out) in data.test.iter().zip(labels) {
            assert_eq!(row[1] == 9.0, out);
        }
        // Deterministic in the seed.
        let again = load_dataset(&path, Some(&spec)).unwrap();
        assert_eq!(again, data);
    }

    #[test]
    fn subsample_reports_shortages() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        std::fs::write(&path, "x0,is_outlier\n1.0,0\n2.0,0\n3.0,1\n").unwrap();
        let spec = SubsampleSpec { n_ref: 5, n_test: 2, outlier_prop: 0.5, seed: 0 };
        let err = load_dataset(&path, Some(&spec)).unwrap_err().to_string();
        assert!(err.contains("need 6 inlier rows"), "{err}");
        assert!(err.contains("only 2 available"), "{err}");
    }

    #[test]
    fn labels_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![true, false, false, true];
        write_labels(&path, &labels).unwrap();
        assert_eq!(load_labels(&path).unwrap(), labels);
    }

    #[test]
    fn labels_csv_must_cover_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(&path, "test_index,is_outlier\n0,1\n2,0\n").unwrap();
        assert!(load_labels(&path).is_err());
    }
}
