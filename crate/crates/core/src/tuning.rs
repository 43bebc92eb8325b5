//! Hyperparameter trials and the weighted-sum scalarization: objective
//! vectors (loss, BLEU, ROUGE-L-F1), f(x) ranking, θ* selection, random
//! search over the reference generator, and CSV persistence.
//!
//! Default weights are (0.5, 0.5, 0). The published per-trial sums are
//! consistent with equal loss/BLEU weights and a zero ROUGE weight
//! (0.5·0.9688 + 0.5·0.9913 ≈ 0.9801); the weights themselves were derived
//! from those sums, and remain fully configurable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::assess;
use crate::corpus::SplitDataset;
use crate::generator::{self, GenerationConfig};
use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum TuningError {
    #[error("empty study: no successful trials to rank")]
    EmptyStudy,
    #[error("invalid weights: at least one must be positive, none negative")]
    BadWeights,
    #[error("invalid search space: {0}")]
    BadSpace(String),
    #[error("trial csv i/o failed on {path}: {message}")]
    CsvIo { path: String, message: String },
}

/// Objective values for one trial: L(x), B(x), R(x).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectiveVector {
    pub loss: f64,
    pub bleu: f64,
    pub rouge_l_f1: f64,
}

/// Scalarization weights for loss, BLEU and ROUGE-L-F1.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct WeightedSumConfig {
    pub w_loss: f64,
    pub w_bleu: f64,
    pub w_rouge: f64,
}

impl Default for WeightedSumConfig {
    fn default() -> Self {
        Self {
            w_loss: 0.5,
            w_bleu: 0.5,
            w_rouge: 0.0,
        }
    }
}

impl WeightedSumConfig {
    pub fn check(&self) -> Result<(), TuningError> {
        let ws = [self.w_loss, self.w_bleu, self.w_rouge];
        if ws.iter().any(|w| *w < 0.0) || ws.iter().all(|w| *w == 0.0) {
            return Err(TuningError::BadWeights);
        }
        Ok(())
    }
}

/// Inverse loss: 1 − L. Deliberately unclamped; ranking only needs
/// monotonicity and clamping would create artificial ties.
pub fn inverse_loss(loss: f64) -> f64 {
    1.0 - loss
}

/// f(x) = w_loss·(1 − L) + w_bleu·B + w_rouge·R, one pass in f64. With
/// w_rouge = 0 the ROUGE term contributes exactly +0.0, so f is bitwise
/// independent of R.
pub fn weighted_sum(objectives: &ObjectiveVector, weights: &WeightedSumConfig) -> f64 {
    weights.w_loss * inverse_loss(objectives.loss)
        + weights.w_bleu * objectives.bleu
        + weights.w_rouge * objectives.rouge_l_f1
}

/// A single hyperparameter value; integers and reals are kept apart so CSV
/// and JSON round-trips stay exact.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
}

impl ParamValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            Self::Int(v) => *v as f64,
            Self::Float(v) => *v,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Self::Int(v) => Some(*v),
            Self::Float(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Int(v) => write!(f, "{v}"),
            Self::Float(v) => write!(f, "{v}"),
        }
    }
}

pub type HyperparamMap = BTreeMap<String, ParamValue>;

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrialRecord {
    pub trial_number: u32,
    pub status: TrialStatus,
    pub hyperparams: HyperparamMap,
    /// Present for successful trials only.
    pub objectives: Option<ObjectiveVector>,
}

/// θ* and the f(x) value that selected it.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrialSelection {
    pub optimal_trial: u32,
    pub theta_star: HyperparamMap,
    pub f_value: f64,
}

/// Rank successful trials by descending f(x); ties break on lower loss,
/// then lower trial number. Returns the ordered list and the argmax.
pub fn rank_trials(
    trials: &[TrialRecord],
    weights: &WeightedSumConfig,
) -> Result<(Vec<(TrialRecord, f64)>, TrialSelection), TuningError> {
    weights.check()?;
    let mut scored: Vec<(TrialRecord, f64)> = trials
        .iter()
        .filter_map(|t| {
            t.objectives
                .as_ref()
                .map(|obj| (t.clone(), weighted_sum(obj, weights)))
        })
        .collect();
    if scored.is_empty() {
        return Err(TuningError::EmptyStudy);
    }
    scored.sort_by(|(a, fa), (b, fb)| {
        fb.partial_cmp(fa)
            .unwrap()
            .then_with(|| {
                let la = a.objectives.as_ref().unwrap().loss;
                let lb = b.objectives.as_ref().unwrap().loss;
                la.partial_cmp(&lb).unwrap()
            })
            .then_with(|| a.trial_number.cmp(&b.trial_number))
    });
    let best = &scored[0];
    let selection = TrialSelection {
        optimal_trial: best.0.trial_number,
        theta_star: best.0.hyperparams.clone(),
        f_value: best.1,
    };
    Ok((scored, selection))
}

/// Per-objective leaderboards over successful trials.
#[derive(Clone, Debug, Default)]
pub struct ObjectiveTops {
    /// Ascending loss.
    pub loss: Vec<TrialRecord>,
    /// Descending BLEU.
    pub bleu: Vec<TrialRecord>,
    /// Descending ROUGE-L-F1.
    pub rouge_l_f1: Vec<TrialRecord>,
}

pub fn top_k_per_objective(trials: &[TrialRecord], k: usize) -> ObjectiveTops {
    assert!(k >= 1, "k must be >= 1");
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.objectives.is_some()).collect();
    let rank = |field: fn(&ObjectiveVector) -> f64, ascending: bool| -> Vec<TrialRecord> {
        let mut sorted = ok.clone();
        sorted.sort_by(|a, b| {
            let fa = field(a.objectives.as_ref().unwrap());
            let fb = field(b.objectives.as_ref().unwrap());
            let ord = if ascending {
                fa.partial_cmp(&fb).unwrap()
            } else {
                fb.partial_cmp(&fa).unwrap()
            };
            ord.then_with(|| a.trial_number.cmp(&b.trial_number))
        });
        sorted.into_iter().take(k).cloned().collect()
    };
    ObjectiveTops {
        loss: rank(|o| o.loss, true),
        bleu: rank(|o| o.bleu, false),
        rouge_l_f1: rank(|o| o.rouge_l_f1, false),
    }
}

/// One tunable parameter range.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamRange {
    Continuous { lo: f64, hi: f64, log: bool },
    Integer { lo: i64, hi: i64 },
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub range: ParamRange,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn check(&self) -> Result<(), TuningError> {
        for spec in &self.params {
            match &spec.range {
                ParamRange::Continuous { lo, hi, log } => {
                    if lo > hi || (*log && *lo <= 0.0) {
                        return Err(TuningError::BadSpace(format!(
                            "bad range for {}: [{lo}, {hi}]",
                            spec.name
                        )));
                    }
                }
                ParamRange::Integer { lo, hi } => {
                    if lo > hi {
                        return Err(TuningError::BadSpace(format!(
                            "bad range for {}: [{lo}, {hi}]",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The reference generator's space: n-gram order, smoothing constant,
    /// and the interpolation decay shaping λ.
    pub fn reference_default() -> Self {
        Self {
            params: vec![
                ParamSpec {
                    name: "order".into(),
                    range: ParamRange::Integer { lo: 1, hi: 5 },
                },
                ParamSpec {
                    name: "alpha".into(),
                    range: ParamRange::Continuous {
                        lo: 1e-3,
                        hi: 1.0,
                        log: true,
                    },
                },
                ParamSpec {
                    name: "interp_decay".into(),
                    range: ParamRange::Continuous {
                        lo: 0.1,
                        hi: 1.0,
                        log: false,
                    },
                },
            ],
        }
    }
}

fn unit_f64(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand_chacha::rand_core::RngCore;
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Independent uniform draw per parameter (log-uniform where flagged,
/// integer-uniform for counts); deterministic per seed.
pub fn sample_trial(space: &SearchSpace, seed: u64) -> Result<HyperparamMap, TuningError> {
    space.check()?;
    let mut rng = seeding::rng(seed);
    let mut params = HyperparamMap::new();
    for spec in &space.params {
        let value = match &spec.range {
            ParamRange::Continuous { lo, hi, log } => {
                let u = unit_f64(&mut rng);
                if *log {
                    ParamValue::Float((lo.ln() + u * (hi.ln() - lo.ln())).exp())
                } else {
                    ParamValue::Float(lo + u * (hi - lo))
                }
            }
            ParamRange::Integer { lo, hi } => {
                let span = (hi - lo + 1) as u64;
                ParamValue::Int(lo + seeding::uniform_index(&mut rng, span) as i64)
            }
        };
        params.insert(spec.name.clone(), value);
    }
    Ok(params)
}

/// Interpolation weights from a decay factor: λ_j ∝ decay^(k−j), so decay 1
/// is uniform and smaller decay shifts mass to higher orders.
pub fn decay_weights(order: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=order)
        .map(|j| decay.powi((order - j) as i32))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Study knobs that are not part of the searched space.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct StudyOptions {
    /// Cap on eval chunks scored per trial (generation is the slow part).
    pub eval_chunk_cap: usize,
    /// Generation cap for continuation scoring.
    pub max_continuation_tokens: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            eval_chunk_cap: 16,
            max_continuation_tokens: 256,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudyResult {
    pub trials: Vec<TrialRecord>,
    pub selection: TrialSelection,
}

/// Random-search study over the reference generator: per trial, sample
/// hyperparameters, train on the train split, score loss/BLEU/ROUGE on the
/// eval split, then rank by f(x). Per-trial seeds derive from
/// (study seed, trial number), so results are schedule-independent; failed
/// trials are recorded and skipped by the ranking.
pub fn run_study(
    space: &SearchSpace,
    datasets: &SplitDataset,
    n_trials: usize,
    weights: &WeightedSumConfig,
    seed: u64,
    options: &StudyOptions,
) -> Result<StudyResult, TuningError> {
    assert!(n_trials >= 1, "n_trials must be >= 1");
    space.check()?;
    weights.check()?;
    let mut trials = Vec::with_capacity(n_trials);
    for number in 1..=n_trials as u32 {
        let trial_seed = seeding::derive_seed(seed, number as u64);
        let hyperparams = sample_trial(space, trial_seed)?;
        match evaluate_trial(&hyperparams, datasets, trial_seed, options) {
            Ok(objectives) => trials.push(TrialRecord {
                trial_number: number,
                status: TrialStatus::Ok,
                hyperparams,
                objectives: Some(objectives),
            }),
            Err(_) => trials.push(TrialRecord {
                trial_number: number,
                status: TrialStatus::Failed,
                hyperparams,
                objectives: None,
            }),
        }
    }
    let (_, selection) = rank_trials(&trials, weights)?;
    Ok(StudyResult { trials, selection })
}

/// Train and score one reference-generator configuration.
pub fn evaluate_trial(
    hyperparams: &HyperparamMap,
    datasets: &SplitDataset,
    trial_seed: u64,
    options: &StudyOptions,
) -> Result<ObjectiveVector, generator::GeneratorError> {
    let order = hyperparams
        .get("order")
        .and_then(ParamValue::as_i64)
        .unwrap_or(4)
        .max(1) as usize;
    let alpha = hyperparams
        .get("alpha")
        .map(ParamValue::as_f64)
        .unwrap_or(0.01);
    let decay = hyperparams
        .get("interp_decay")
        .map(ParamValue::as_f64)
        .unwrap_or(1.0);
    let weights = decay_weights(order, decay);
    let model = generator::train_ngram(&datasets.train, order, alpha, &weights)?;
    let loss = generator::cross_entropy(&model, &datasets.eval)?;
    let gen_config = GenerationConfig {
        max_tokens: options.max_continuation_tokens,
        temperature: 0.0,
        seed: seeding::derive_seed(trial_seed, 0xE7A1),
        ..Default::default()
    };
    let scores = assess::continuation_scores(
        &model,
        &datasets.eval,
        options.eval_chunk_cap,
        &gen_config,
    )?;
    Ok(ObjectiveVector {
        loss,
        bleu: scores.bleu,
        rouge_l_f1: scores.rouge_l_f1,
    })
}

const CSV_FIXED_PREFIX: [&str; 2] = ["trial_number", "status"];
const CSV_FIXED_SUFFIX: [&str; 4] = ["loss", "bleu", "rouge_l_f1", "f"];

/// Persist trials as CSV with a fixed column order: trial_number, status,
/// one column per hyperparameter (sorted by name), loss, bleu, rouge_l_f1, f.
pub fn write_trials_csv(
    trials: &[TrialRecord],
    weights: &WeightedSumConfig,
    path: &Path,
) -> Result<(), TuningError> {
    let io_err = |message: String| TuningError::CsvIo {
        path: path.display().to_string(),
        message,
    };
    let mut param_names: Vec<String> = trials
        .iter()
        .flat_map(|t| t.hyperparams.keys().cloned())
        .collect();
    param_names.sort();
    param_names.dedup();

    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(e.to_string()))?;
    let header: Vec<String> = CSV_FIXED_PREFIX
        .iter()
        .map(|s| s.to_string())
        .chain(param_names.iter().cloned())
        .chain(CSV_FIXED_SUFFIX.iter().map(|s| s.to_string()))
        .collect();
    writer
        .write_record(&header)
        .map_err(|e| io_err(e.to_string()))?;
    for trial in trials {
        let mut row = vec![
            trial.trial_number.to_string(),
            match trial.status {
                TrialStatus::Ok => "ok".to_string(),
                TrialStatus::Failed => "failed".to_string(),
            },
        ];
        for name in &param_names {
            row.push(
                trial
                    .hyperparams
                    .get(name)
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        match &trial.objectives {
            Some(obj) => {
                row.push(obj.loss.to_string());
                row.push(obj.bleu.to_string());
                row.push(obj.rouge_l_f1.to_string());
                row.push(weighted_sum(obj, weights).to_string());
            }
            None => row.extend(std::iter::repeat(String::new()).take(4)),
        }
        writer.write_record(&row).map_err(|e| io_err(e.to_string()))?;
    }
    writer.flush().map_err(|e| io_err(e.to_string()))?;
    Ok(())
}

/// Read a trials CSV written by [`write_trials_csv`].
pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRecord>, TuningError> {
    let io_err = |message: String| TuningError::CsvIo {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| io_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < CSV_FIXED_PREFIX.len() + CSV_FIXED_SUFFIX.len() {
        return Err(io_err("missing columns".into()));
    }
    let param_names = &header[CSV_FIXED_PREFIX.len()..header.len() - CSV_FIXED_SUFFIX.len()];
    let mut trials = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| io_err(e.to_string()))?;
        let fields: Vec<&str> = record.iter().collect();
        let trial_number: u32 = fields[0].parse().map_err(|_| io_err("bad trial_number".into()))?;
        let status = if fields[1] == "ok" {
            TrialStatus::Ok
        } else {
            TrialStatus::Failed
        };
        let mut hyperparams = HyperparamMap::new();
        for (name, raw) in param_names.iter().zip(&fields[2..2 + param_names.len()]) {
            if raw.is_empty() {
                continue;
            }
            let value = raw
                .parse::<i64>()
                .map(ParamValue::Int)
                .or_else(|_| raw.parse::<f64>().map(ParamValue::Float))
                .map_err(|_| io_err(format!("bad value for {name}")))?;
            hyperparams.insert(name.clone(), value);
        }
        let tail = &fields[2 + param_names.len()..];
        let objectives = if status == TrialStatus::Ok {
            Some(ObjectiveVector {
                loss: tail[0].parse().map_err(|_| io_err("bad loss".into()))?,
                bleu: tail[1].parse().map_err(|_| io_err("bad bleu".into()))?,
                rouge_l_f1: tail[2].parse().map_err(|_| io_err("bad rouge".into()))?,
            })
        } else {
            None
        };
        trials.push(TrialRecord {
            trial_number,
            status,
            hyperparams,
            objectives,
        });
    }
    Ok(trials)
}
