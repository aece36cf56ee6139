//! Score functions: a one-class k-nearest-neighbor scorer, a deterministic
//! binary logistic scorer for the classifier-based pipeline, and ingestion of
//! externally computed scores.
//!
//! Both trainers are bit-reproducible: no randomness, and every floating-point
//! accumulation runs in a canonical order, so shuffling the rows of any input
//! set leaves the trained model bit-identical. That matters because the
//! classifier-based pipeline is only valid when training treats the
//! calibration+test bag as an unordered set.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::ScoreSet;
use crate::error::{Error, Result};
use crate::seeding;

/// Training hyperparameters shared by the built-in scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    /// Neighbors used by the one-class scorer.
    pub knn_k: usize,
    /// L2 penalty on the logistic coefficients (intercept unpenalized).
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Gradient-norm stopping tolerance.
    pub tol: f64,
    /// Reserved for stochastic trainers; recorded in fingerprints.
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            knn_k: 5,
            l2_lambda: 1e-4,
            learning_rate: 0.1,
            max_iters: 500,
            tol: 1e-8,
            seed: 0,
        }
    }
}

impl TrainSpec {
    fn validate(&self) -> Result<()> {
        if self.knn_k == 0 {
            return Err(Error::InvalidParameter {
                name: "knn_k",
                value: "0".into(),
                reason: "need at least one neighbor",
            });
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter {
                name: "learning_rate",
                value: format!("{}", self.learning_rate),
                reason: "must be positive and finite",
            });
        }
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            return Err(Error::InvalidParameter {
                name: "l2_lambda",
                value: format!("{}", self.l2_lambda),
                reason: "must be nonnegative and finite",
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                value: "0".into(),
                reason: "need at least one iteration",
            });
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                value: format!("{}", self.tol),
                reason: "must be nonnegative",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub train: Vec<Vec<f64>>,
    pub k: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub fingerprint: String,
}

/// A trained scorer. Higher scores mean more anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    OneClassKnn(KnnModel),
    BinaryLogistic(LogisticModel),
    /// Scores arrive precomputed via [`ingest_scores`]; there is no model to
    /// apply to raw points.
    External,
}

fn check_matrix(context: &'static str, rows: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = rows.first() else {
        return Err(Error::InsufficientTraining { needed: 1, got: 0, what: context });
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidParameter {
            name: "points",
            value: "0-dimensional".into(),
            reason: "points need at least one coordinate",
        });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: row.len(), index: i });
        }
        for &v in row {
            if !v.is_finite() {
                return Err(Error::NonFinite { context, index: i, value: v });
            }
        }
    }
    Ok(dim)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn fingerprint_rows(tag: &str, spec: &TrainSpec, groups: &[&[Vec<f64>]]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    hasher.update((spec.knn_k as u64).to_le_bytes());
    hasher.update(spec.l2_lambda.to_le_bytes());
    hasher.update(spec.learning_rate.to_le_bytes());
    hasher.update((spec.max_iters as u64).to_le_bytes());
    hasher.update(spec.tol.to_le_bytes());
    hasher.update(spec.seed.to_le_bytes());
    for rows in groups {
        // Canonically ordered so the fingerprint, like the model, is
        // invariant to row permutations.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&i, &j| lex_cmp(&rows[i], &rows[j]));
        hasher.update((rows.len() as u64).to_le_bytes());
        for i in order {
            for &v in &rows[i] {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fits the one-class scorer: the score of a point is its mean Euclidean
/// distance to its `knn_k` nearest training points.
pub fn train_one_class(train: &[Vec<f64>], spec: &TrainSpec) -> Result<Scorer> {
    spec.validate()?;
    check_matrix("training points", train)?;
    if train.len() <= spec.knn_k {
        return Err(Error::InsufficientTraining {
            needed: spec.knn_k + 1,
            got: train.len(),
            what: "training points for kNN",
        });
    }
    let fingerprint = fingerprint_rows("one-class-knn", spec, &[train]);
    Ok(Scorer::OneClassKnn(KnnModel { train: train.to_vec(), k: spec.knn_k, fingerprint }))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss plus the ridge penalty `l2_lambda/2 * ||w||^2` (intercept
/// unpenalized); the objective `train_binary` descends. Training itself only
/// needs the gradient, so the loss is compiled for tests.
#[cfg(test)]
pub(crate) fn logistic_loss(
    weights: &[f64],
    intercept: f64,
    rows: &[(Vec<f64>, f64)],
    l2_lambda: f64,
) -> f64 {
    let n = rows.len() as f64;
    let mut total = 0.0;
    for (x, y) in rows {
        let z: f64 = weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + intercept;
        // log(1 + exp(-m)) with m = z for y=1 and m = -z for y=0, stably.
        let m = if *y > 0.5 { z } else { -z };
        total += if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
    }
    total / n + 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

pub(crate) fn logistic_gradient(
    weights: &[f64],
    intercept: f64,
    rows: &[(Vec<f64>, f64)],
    l2_lambda: f64,
) -> (Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, y) in rows {
        let z: f64 = weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + intercept;
        let diff = sigmoid(z) - y;
        for (g, &xi) in grad_w.iter_mut().zip(x) {
            *g += diff * xi;
        }
        grad_b += diff;
    }
    for (g, &w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2_lambda * w;
    }
    (grad_w, grad_b / n)
}

/// Fits the binary scorer on inliers (label 0) against the mixed bag
/// (label 1) by full-batch gradient descent from zero initialization. The
/// score of a point is its predicted bag-membership probability.
///
/// Rows are processed in canonical (lexicographic) order, so the fit is
/// bit-identical under any permutation of either input set.
pub fn train_binary(inliers: &[Vec<f64>], bag: &[Vec<f64>], spec: &TrainSpec) -> Result<Scorer> {
    spec.validate()?;
    let d_in = check_matrix("inlier points", inliers)?;
    let d_bag = check_matrix("bag points", bag)?;
    if d_in != d_bag {
        return Err(Error::DimensionMismatch { expected: d_in, got: d_bag, index: 0 });
    }

    let mut rows: Vec<(Vec<f64>, f64)> = inliers
        .iter()
        .map(|x| (x.clone(), 0.0))
        .chain(bag.iter().map(|x| (x.clone(), 1.0)))
        .collect();
    rows.sort_by(|a, b| lex_cmp(&a.0, &b.0).then(a.1.total_cmp(&b.1)));

    let mut weights = vec![0.0; d_in];
    let mut intercept = 0.0;
    for _ in 0..spec.max_iters {
        let (grad_w, grad_b) = logistic_gradient(&weights, intercept, &rows, spec.l2_lambda);
        let norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if norm < spec.tol {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= spec.learning_rate * g;
        }
        intercept -= spec.learning_rate * grad_b;
    }

    let fingerprint = fingerprint_rows("binary-logistic", spec, &[inliers, bag]);
    Ok(Scorer::BinaryLogistic(LogisticModel { weights, intercept, fingerprint }))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Applies a trained scorer to a batch of points.
pub fn score_batch(scorer: &Scorer, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    match scorer {
        Scorer::OneClassKnn(model) => {
            let dim = model.train[0].len();
            let mut scores = Vec::with_capacity(points.len());
            for (index, p) in points.iter().enumerate() {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: p.len(), index });
                }
                let mut dists: Vec<f64> =
                    model.train.iter().map(|t| euclidean(t, p)).collect();
                dists.sort_by(f64::total_cmp);
                scores.push(dists[..model.k].iter().sum::<f64>() / model.k as f64);
            }
            Ok(scores)
        }
        Scorer::BinaryLogistic(model) => {
            let dim = model.weights.len();
            let mut scores = Vec::with_capacity(points.len());
            for (index, p) in points.iter().enumerate() {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: p.len(), index });
                }
                let z: f64 =
                    model.weights.iter().zip(p).map(|(w, x)| w * x).sum::<f64>() + model.intercept;
                scores.push(sigmoid(z));
            }
            Ok(scores)
        }
        Scorer::External => Err(Error::InvalidConfig(
            "external scorer has no model; scores must be ingested from a file".into(),
        )),
    }
}

/// Score sets parsed from a score CSV, tie-broken with the file-declared seed.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedScores {
    pub sets: Vec<ScoreSet>,
    pub seed: u64,
}

/// Reads a score CSV with header `repetition,role,score` (role `cal` or
/// `test`), grouped into one [`ScoreSet`] per repetition `1..=K`.
///
/// An optional leading comment line `# seed=<u64>` declares the tie-breaking
/// seed (default 0). Every repetition must contain the same number of test
/// scores; parse errors carry the 1-based line number.
pub fn ingest_scores(path: &Path) -> Result<IngestedScores> {
    let content = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: display.clone(),
        line,
        message,
    };

    let mut seed = 0u64;
    for raw in content.lines() {
        let line = raw.trim();
        if !line.starts_with('#') {
            break;
        }
        let body = line.trim_start_matches('#').trim();
        if let Some(value) = body.strip_prefix("seed=").or_else(|| body.strip_prefix("seed = ")) {
            seed = value.trim().parse().map_err(|_| {
                parse_err(1, format!("invalid seed declaration {body:?}"))
            })?;
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());

    let headers = reader.headers()?.clone();
    let expected = ["repetition", "role", "score"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            1,
            format!("expected header `repetition,role,score`, got {headers:?}"),
        ));
    }

    let mut groups: std::collections::BTreeMap<usize, (Vec<f64>, Vec<f64>)> =
        std::collections::BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", record.len())));
        }
        let rep: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid repetition {:?}", &record[0])))?;
        if rep == 0 {
            return Err(parse_err(line, "repetition indices are 1-based".into()));
        }
        let score: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid score {:?}", &record[2])))?;
        if !score.is_finite() {
            return Err(parse_err(line, format!("non-finite score {score}")));
        }
        let entry = groups.entry(rep).or_default();
        match &record[1] {
            "cal" => entry.0.push(score),
            "test" => entry.1.push(score),
            other => {
                return Err(parse_err(
                    line,
                    format!("role must be `cal` or `test`, got {other:?}"),
                ))
            }
        }
    }

    if groups.is_empty() {
        return Err(parse_err(0, "no repetitions found".into()));
    }
    let k_max = *groups.keys().last().expect("nonempty");
    if groups.len() != k_max {
        let missing = (1..=k_max).find(|k| !groups.contains_key(k)).expect("gap");
        return Err(parse_err(0, format!("missing repetition {missing} of {k_max}")));
    }

    let n_test = groups[&1].1.len();
    let mut sets = Vec::with_capacity(k_max);
    for (rep, (cal, test)) in groups {
        if cal.is_empty() || test.is_empty() {
            return Err(parse_err(
                0,
                format!("repetition {rep} needs at least one cal and one test score"),
            ));
        }
        if test.len() != n_test {
            return Err(parse_err(
                0,
                format!(
                    "inconsistent test size: repetition {rep} has {}, repetition 1 has {n_test}",
                    test.len()
                ),
            ));
        }
        let jitter_seed = seeding::derive_u64(seed, "ingest-jitter", &[rep as u64]);
        sets.push(ScoreSet::with_tie_breaking(cal, test, rep, jitter_seed)?);
    }
    Ok(IngestedScores { sets, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn pts(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn knn_scores_mean_distance_to_nearest_neighbors() {
        let train = pts(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let spec = TrainSpec { knn_k: 1, ..Default::default() };
        let model = train_one_class(&train, &spec).unwrap();
        let scores = score_batch(&model, &pts(&[&[3.0, 0.0]])).unwrap();
        assert_eq!(scores, vec![2.0]);
    }

    #[test]
    fn knn_duplicate_training_point_scores_zero() {
        let train = pts(&[&[0.0, 0.0], &[0.0, 0.0], &[5.0, 5.0]]);
        let spec = TrainSpec { knn_k: 1, ..Default::default() };
        let model = train_one_class(&train, &spec).unwrap();
        let scores = score_batch(&model, &pts(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(scores, vec![0.0]);
    }

    #[test]
    fn knn_averages_over_k_neighbors() {
        let train = pts(&[&[0.0], &[2.0], &[10.0]]);
        let spec = TrainSpec { knn_k: 2, ..Default::default() };
        let model = train_one_class(&train, &spec).unwrap();
        let scores = score_batch(&model, &pts(&[&[1.0]])).unwrap();
        assert_eq!(scores, vec![1.0]); // distances 1 and 1
    }

    #[test]
    fn knn_requires_more_training_points_than_neighbors() {
        let train = pts(&[&[0.0], &[1.0]]);
        let spec = TrainSpec { knn_k: 2, ..Default::default() };
        assert!(matches!(
            train_one_class(&train, &spec),
            Err(Error::InsufficientTraining { needed: 3, got: 2, .. })
        ));
    }

    #[test]
    fn knn_score_is_invariant_to_training_order() {
        let spec = TrainSpec { knn_k: 2, ..Default::default() };
        let a = train_one_class(&pts(&[&[0.0], &[2.0], &[5.0]]), &spec).unwrap();
        let b = train_one_class(&pts(&[&[5.0], &[0.0], &[2.0]]), &spec).unwrap();
        let q = pts(&[&[1.0], &[4.0]]);
        let sa = score_batch(&a, &q).unwrap();
        let sb = score_batch(&b, &q).unwrap();
        assert_eq!(sa[0].to_bits(), sb[0].to_bits());
        assert_eq!(sa[1].to_bits(), sb[1].to_bits());
        // Same data, same hyperparameters, same fingerprint.
        let (Scorer::OneClassKnn(ma), Scorer::OneClassKnn(mb)) = (&a, &b) else {
            panic!("expected kNN models")
        };
        assert_eq!(ma.fingerprint, mb.fingerprint);
    }

    #[test]
    fn logistic_separates_labeled_classes() {
        let inliers = pts(&[&[-1.0], &[-1.5], &[-0.5], &[-1.2]]);
        let bag = pts(&[&[1.0], &[1.5], &[0.5], &[1.2]]);
        let spec = TrainSpec { max_iters: 20_000, ..Default::default() };
        let model = train_binary(&inliers, &bag, &spec).unwrap();
        let scores = score_batch(&model, &pts(&[&[10.0], &[-10.0]])).unwrap();
        assert!(scores[0] > 0.99, "far bag side scored {}", scores[0]);
        assert!(scores[1] < 0.01, "far inlier side scored {}", scores[1]);
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        use rand::Rng;
        let mut rng = crate::seeding::stream(3, "grad-check", &[]);
        let d = 4;
        let rows: Vec<(Vec<f64>, f64)> = (0..12)
            .map(|i| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                (x, (i % 2) as f64)
            })
            .collect();
        let weights: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let intercept = 0.3;
        let l2 = 1e-3;

        let (grad_w, grad_b) = logistic_gradient(&weights, intercept, &rows, l2);
        let h = 1e-6;
        for i in 0..d {
            let mut plus = weights.clone();
            let mut minus = weights.clone();
            plus[i] += h;
            minus[i] -= h;
            let numeric = (logistic_loss(&plus, intercept, &rows, l2)
                - logistic_loss(&minus, intercept, &rows, l2))
                / (2.0 * h);
            let denom = numeric.abs().max(1e-8);
            assert!(
                (grad_w[i] - numeric).abs() / denom < 1e-5,
                "coordinate {i}: analytic {} vs numeric {numeric}",
                grad_w[i]
            );
        }
        let numeric_b = (logistic_loss(&weights, intercept + h, &rows, l2)
            - logistic_loss(&weights, intercept - h, &rows, l2))
            / (2.0 * h);
        assert!((grad_b - numeric_b).abs() / numeric_b.abs().max(1e-8) < 1e-5);
    }

    #[test]
    fn logistic_fit_is_bit_identical_under_row_shuffles() {
        let inliers = pts(&[&[0.1, -0.3], &[-0.8, 0.2], &[0.4, 0.4], &[-0.1, -0.9]]);
        let bag = pts(&[&[1.1, 0.3], &[0.9, -0.2], &[-0.2, 1.4], &[0.7, 0.8], &[1.3, 1.1]]);
        let mut bag_shuffled = bag.clone();
        bag_shuffled.rotate_left(2);
        bag_shuffled.swap(0, 3);
        let mut inliers_shuffled = inliers.clone();
        inliers_shuffled.reverse();

        let spec = TrainSpec::default();
        let a = train_binary(&inliers, &bag, &spec).unwrap();
        let b = train_binary(&inliers_shuffled, &bag_shuffled, &spec).unwrap();
        let (Scorer::BinaryLogistic(ma), Scorer::BinaryLogistic(mb)) = (&a, &b) else {
            panic!("expected logistic models")
        };
        assert_eq!(ma.intercept.to_bits(), mb.intercept.to_bits());
        for (wa, wb) in ma.weights.iter().zip(&mb.weights) {
            assert_eq!(wa.to_bits(), wb.to_bits());
        }
        assert_eq!(ma.fingerprint, mb.fingerprint);
    }

    #[test]
    fn score_batch_rejects_dimension_mismatch() {
        let train = pts(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let spec = TrainSpec { knn_k: 1, ..Default::default() };
        let model = train_one_class(&train, &spec).unwrap();
        assert!(matches!(
            score_batch(&model, &pts(&[&[1.0]])),
            Err(Error::DimensionMismatch { expected: 2, got: 1, index: 0 })
        ));
    }

    #[test]
    fn external_scorer_cannot_score_points() {
        assert!(score_batch(&Scorer::External, &pts(&[&[1.0]])).is_err());
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_groups_by_repetition_and_applies_jitter() {
        let f = write_temp(
            "# seed=7\nrepetition,role,score\n\
             1,cal,0.5\n1,cal,0.5\n1,test,0.9\n\
             2,cal,0.1\n2,cal,0.2\n2,test,0.3\n",
        );
        let ingested = ingest_scores(f.path()).unwrap();
        assert_eq!(ingested.seed, 7);
        assert_eq!(ingested.sets.len(), 2);
        let first = &ingested.sets[0];
        assert_eq!(first.repetition, 1);
        assert_eq!(first.n_cal(), 2);
        assert_eq!(first.n_test(), 1);
        // The duplicate cal scores must have been separated.
        assert!(first.scores_distinct());
        // Jitter only nudges values.
        assert!((first.cal[0] - 0.5).abs() < 1e-6);

        // Same file, same seed, same jittered values.
        let again = ingest_scores(f.path()).unwrap();
        assert_eq!(again, ingested);
    }

    #[test]
    fn ingest_defaults_seed_to_zero() {
        let f = write_temp("repetition,role,score\n1,cal,1.0\n1,test,2.0\n");
        assert_eq!(ingest_scores(f.path()).unwrap().seed, 0);
    }

    #[test]
    fn ingest_reports_malformed_rows_with_line_numbers() {
        let f = write_temp("repetition,role,score\n1,cal,1.0\n1,oops,2.0\n");
        let err = ingest_scores(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":3:"), "missing line number: {msg}");
        assert!(msg.contains("role"), "unexpected message: {msg}");
    }

    #[test]
    fn ingest_rejects_inconsistent_test_sizes() {
        let f = write_temp(
            "repetition,role,score\n1,cal,1.0\n1,test,2.0\n1,test,3.0\n\
             2,cal,1.0\n2,test,2.0\n",
        );
        let msg = ingest_scores(f.path()).unwrap_err().to_string();
        assert!(msg.contains("inconsistent test size"), "{msg}");
    }

    #[test]
    fn ingest_rejects_gaps_in_repetitions() {
        let f = write_temp("repetition,role,score\n1,cal,1.0\n1,test,2.0\n3,cal,1.0\n3,test,2.0\n");
        let msg = ingest_scores(f.path()).unwrap_err().to_string();
        assert!(msg.contains("missing repetition 2"), "{msg}");
    }

    #[test]
    fn ingest_rejects_non_finite_scores() {
        let f = write_temp("repetition,role,score\n1,cal,NaN\n1,test,2.0\n");
        assert!(ingest_scores(f.path()).is_err());
    }
}
