//! Permutation importance of hyperparameters per objective, backed by a
//! from-scratch regression forest (bootstrap CART trees, variance-reduction
//! splits, leaf means).
//!
//! Trees are canonical: split ties break on the lowest feature index, then
//! the lowest threshold, and thresholds are midpoints between consecutive
//! sorted unique feature values. Per-tree seeds derive from
//! (forest seed, tree index), so the ensemble is scheduling-independent.

use std::collections::BTreeMap;

use crate::seeding;
use crate::tuning::{TrialRecord, TrialStatus};

#[derive(Debug, thiserror::Error)]
pub enum ImportanceError {
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("feature row has {got} values, forest expects {expected}")]
    MissingFeature { expected: usize, got: usize },
    #[error("scoring needs {0}")]
    BadScore(String),
}

/// Trials as a dense feature matrix (no missing cells).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Build the feature matrix and per-objective target vectors from the
/// successful trials of a study.
pub fn from_trials(trials: &[TrialRecord]) -> (FeatureMatrix, BTreeMap<String, Vec<f64>>) {
    let ok: Vec<&TrialRecord> = trials
        .iter()
        .filter(|t| t.status == TrialStatus::Ok && t.objectives.is_some())
        .collect();
    let mut names: Vec<String> = ok
        .iter()
        .flat_map(|t| t.hyperparams.keys().cloned())
        .collect();
    names.sort();
    names.dedup();
    let rows = ok
        .iter()
        .map(|t| {
            names
                .iter()
                .map(|n| t.hyperparams.get(n).map(|v| v.as_f64()).unwrap_or(0.0))
                .collect()
        })
        .collect();
    let mut targets = BTreeMap::new();
    targets.insert(
        "loss".to_string(),
        ok.iter().map(|t| t.objectives.unwrap().loss).collect(),
    );
    targets.insert(
        "bleu".to_string(),
        ok.iter().map(|t| t.objectives.unwrap().bleu).collect(),
    );
    targets.insert(
        "rouge_l_f1".to_string(),
        ok.iter().map(|t| t.objectives.unwrap().rouge_l_f1).collect(),
    );
    (
        FeatureMatrix {
            feature_names: names,
            rows,
        },
        targets,
    )
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all (regression-forest
    /// convention).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Self::Leaf { value } => *value,
            Self::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RegressionForest {
    pub config: ForestConfig,
    n_features: usize,
    trees: Vec<TreeNode>,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Best (feature, threshold, sse) over the given samples, or None if no
/// split separates the data.
fn best_split(
    rows: &[Vec<f64>],
    y: &[f64],
    samples: &[usize],
    features: &[usize],
) -> Option<(usize, f64)> {
    let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
    for &feature in features {
        let mut order: Vec<usize> = samples.to_vec();
        order.sort_by(|&a, &b| rows[a][feature].partial_cmp(&rows[b][feature]).unwrap());
        // prefix sums over the sorted order
        let n = order.len();
        let mut prefix_sum = vec![0.0; n + 1];
        let mut prefix_sq = vec![0.0; n + 1];
        for (i, &idx) in order.iter().enumerate() {
            prefix_sum[i + 1] = prefix_sum[i] + y[idx];
            prefix_sq[i + 1] = prefix_sq[i] + y[idx] * y[idx];
        }
        let total_sum = prefix_sum[n];
        let total_sq = prefix_sq[n];
        for i in 1..n {
            let (lo, hi) = (rows[order[i - 1]][feature], rows[order[i]][feature]);
            if lo == hi {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            let left_n = i as f64;
            let right_n = (n - i) as f64;
            let left_sse = prefix_sq[i] - prefix_sum[i] * prefix_sum[i] / left_n;
            let right_sum = total_sum - prefix_sum[i];
            let right_sse = (total_sq - prefix_sq[i]) - right_sum * right_sum / right_n;
            let sse = left_sse + right_sse;
            // strict improvement keeps the first (lowest feature, lowest
            // threshold) among ties
            if best.map_or(true, |(b, _, _)| sse < b) {
                best = Some((sse, feature, threshold));
            }
        }
    }
    best.map(|(_, feature, threshold)| (feature, threshold))
}

fn build_tree(
    rows: &[Vec<f64>],
    y: &[f64],
    samples: &[usize],
    depth: usize,
    config: &ForestConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> TreeNode {
    let node_mean = mean(samples.iter().map(|&i| y[i]), samples.len());
    let constant_target = samples.iter().all(|&i| y[i] == y[samples[0]]);
    let depth_reached = config.max_depth.is_some_and(|d| depth >= d);
    if samples.len() <= config.min_samples_leaf || constant_target || depth_reached {
        return TreeNode::Leaf { value: node_mean };
    }

    let n_features = rows[0].len();
    let features: Vec<usize> = match config.max_features {
        Some(m) if m < n_features => {
            let mut all: Vec<usize> = (0..n_features).collect();
            seeding::fisher_yates(&mut all, rng);
            let mut subset = all[..m].to_vec();
            subset.sort_unstable();
            subset
        }
        _ => (0..n_features).collect(),
    };

    match best_split(rows, y, samples, &features) {
        None => TreeNode::Leaf { value: node_mean },
        Some((feature, threshold)) => {
            let (left, right): (Vec<usize>, Vec<usize>) = samples
                .iter()
                .partition(|&&i| rows[i][feature] <= threshold);
            if left.is_empty() || right.is_empty() {
                return TreeNode::Leaf { value: node_mean };
            }
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(build_tree(rows, y, &left, depth + 1, config, rng)),
                right: Box::new(build_tree(rows, y, &right, depth + 1, config, rng)),
            }
        }
    }
}

/// Fit a bootstrap forest of CART trees minimizing weighted child variance.
pub fn fit_forest(
    matrix: &FeatureMatrix,
    y: &[f64],
    config: &ForestConfig,
) -> Result<RegressionForest, ImportanceError> {
    if matrix.rows.len() < 2 {
        return Err(ImportanceError::DegenerateFit(
            "need at least 2 rows".into(),
        ));
    }
    if matrix.rows.len() != y.len() {
        return Err(ImportanceError::DegenerateFit(format!(
            "{} rows but {} targets",
            matrix.rows.len(),
            y.len()
        )));
    }
    if y.iter().all(|v| *v == y[0]) {
        return Err(ImportanceError::DegenerateFit(
            "need at least 2 distinct target values".into(),
        ));
    }
    if matrix.rows.iter().all(|r| *r == matrix.rows[0]) {
        return Err(ImportanceError::DegenerateFit(
            "need at least 2 distinct feature rows".into(),
        ));
    }
    if config.n_trees < 1 {
        return Err(ImportanceError::DegenerateFit("need n_trees >= 1".into()));
    }

    let n = matrix.rows.len();
    let trees = (0..config.n_trees)
        .map(|index| {
            let mut rng = seeding::rng(seeding::derive_seed(config.seed, index as u64));
            let samples: Vec<usize> = if config.bootstrap {
                (0..n)
                    .map(|_| seeding::uniform_index(&mut rng, n as u64) as usize)
                    .collect()
            } else {
                (0..n).collect()
            };
            build_tree(&matrix.rows, y, &samples, 0, config, &mut rng)
        })
        .collect();
    Ok(RegressionForest {
        config: config.clone(),
        n_features: matrix.n_features(),
        trees,
    })
}

impl RegressionForest {
    /// Mean of per-tree leaf predictions.
    pub fn predict(&self, row: &[f64]) -> Result<f64, ImportanceError> {
        if row.len() != self.n_features {
            return Err(ImportanceError::MissingFeature {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(mean(
            self.trees.iter().map(|t| t.predict(row)),
            self.trees.len(),
        ))
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ImportanceError> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    /// Structure hash over the serialized ensemble.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(&self.trees).expect("serializing forest");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// Coefficient of determination, 1 − SS_res/SS_tot.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64, ImportanceError> {
    if y_true.len() != y_pred.len() || y_true.len() < 2 {
        return Err(ImportanceError::BadScore(
            "equal-length vectors of at least 2 values".into(),
        ));
    }
    if y_true.iter().all(|v| *v == y_true[0]) {
        return Err(ImportanceError::BadScore("non-constant y_true".into()));
    }
    let mean_true = mean(y_true.iter().copied(), y_true.len());
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean_true) * (t - mean_true)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Scoring function used for the importance drop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    #[default]
    R2,
    NegMse,
}

fn score(scorer: Scorer, y_true: &[f64], y_pred: &[f64]) -> Result<f64, ImportanceError> {
    match scorer {
        Scorer::R2 => r2_score(y_true, y_pred),
        Scorer::NegMse => {
            if y_true.len() != y_pred.len() || y_true.is_empty() {
                return Err(ImportanceError::BadScore("equal non-empty lengths".into()));
            }
            Ok(-mean(
                y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)),
                y_true.len(),
            ))
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

/// Per-feature mean ± std of the score drop under column permutation.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ImportanceReport {
    pub baseline: f64,
    pub scorer: Scorer,
    pub repeats: usize,
    pub features: Vec<FeatureImportance>,
}

/// Permutation importance: baseline score minus the score after shuffling
/// one feature column, repeated with a seeded PRNG.
pub fn permutation_importance(
    forest: &RegressionForest,
    matrix: &FeatureMatrix,
    y: &[f64],
    repeats: usize,
    seed: u64,
    scorer: Scorer,
) -> Result<ImportanceReport, ImportanceError> {
    assert!(repeats >= 1, "repeats must be >= 1");
    let baseline = score(scorer, y, &forest.predict_all(&matrix.rows)?)?;
    let mut features = Vec::with_capacity(matrix.n_features());
    for j in 0..matrix.n_features() {
        let mut samples = Vec::with_capacity(repeats);
        for repeat in 0..repeats {
            let mut rng = seeding::rng(seeding::derive_seed(
                seed,
                (j as u64) << 32 | repeat as u64,
            ));
            let mut column: Vec<f64> = matrix.rows.iter().map(|r| r[j]).collect();
            seeding::fisher_yates(&mut column, &mut rng);
            let shuffled: Vec<Vec<f64>> = matrix
                .rows
                .iter()
                .zip(&column)
                .map(|(row, &v)| {
                    let mut row = row.clone();
                    row[j] = v;
                    row
                })
                .collect();
            let shuffled_score = score(scorer, y, &forest.predict_all(&shuffled)?)?;
            samples.push(baseline - shuffled_score);
        }
        let m = mean(samples.iter().copied(), samples.len());
        let var = mean(samples.iter().map(|s| (s - m) * (s - m)), samples.len());
        features.push(FeatureImportance {
            feature: matrix.feature_names[j].clone(),
            mean: m,
            std: var.sqrt(),
            samples,
        });
    }
    Ok(ImportanceReport {
        baseline,
        scorer,
        repeats,
        features,
    })
}

/// Fit one forest per objective over a study's trials and report permutation
/// importances; this is what `importance.json` serializes.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct StudyImportance {
    pub objectives: BTreeMap<String, ImportanceReport>,
}

pub fn analyze_trials(
    trials: &[TrialRecord],
    config: &ForestConfig,
    repeats: usize,
    seed: u64,
    scorer: Scorer,
) -> Result<StudyImportance, ImportanceError> {
    let (matrix, targets) = from_trials(trials);
    let mut objectives = BTreeMap::new();
    for (name, y) in targets {
        let forest = fit_forest(&matrix, &y, config)?;
        let report = permutation_importance(&forest, &matrix, &y, repeats, seed, scorer)?;
        objectives.insert(name, report);
    }
    Ok(StudyImportance { objectives })
}

/// Plain-text bar chart of one report, one row per feature.
pub fn render_bars(report: &ImportanceReport) -> String {
    let max = report
        .features
        .iter()
        .map(|f| f.mean.abs())
        .fold(f64::EPSILON, f64::max);
    let mut out = String::new();
    for f in &report.features {
        let width = ((f.mean.max(0.0) / max) * 40.0).round() as usize;
        out.push_str(&format!(
            "{:>20} {:<40} {:+.4} ± {:.4}\n",
            f.feature,
            "#".repeat(width),
            f.mean,
            f.std
        ));
    }
    out
}
