//! End-to-end orchestration: a declarative JSON config drives the stage
//! sequence synth -> preprocess -> tune -> train -> importance -> assess ->
//! report, each stage reading and writing declared artifacts under one
//! output directory.
//!
//! Every stage writes a manifest under `manifests/`; none of them carries a
//! timestamp, so a rerun with the same config and inputs produces a
//! byte-identical tree. The only timestamp lives in the single
//! `generated_at` field of the root manifest written by `report`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::assess::{self, AssessError, AssessmentConfig};
use crate::corpus::{self, AnonymizationRules, Chunk, CorpusError, RawDocument, SourceTag};
use crate::generator::{self, GenerationConfig, GeneratorError, NGramModel};
use crate::importance::{self, ForestConfig, ImportanceError, Scorer};
use crate::repair::SanitizeConfig;
use crate::tuning::{
    self, ParamValue, SearchSpace, StudyOptions, TrialSelection, TuningError, WeightedSumConfig,
};

pub const PIPELINE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Tuning(#[from] TuningError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Assess(#[from] AssessError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact {artifact}: run `{producer}` first")]
    MissingArtifact {
        artifact: String,
        producer: &'static str,
    },
    #[error("bad config: {0}")]
    BadConfig(String),
}

impl PipelineError {
    /// True when the failure should trip the downstream quality gate rather
    /// than count as a data error.
    pub fn is_gate_failure(&self) -> bool {
        matches!(self, Self::Assess(AssessError::GateFailed { .. }))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    /// Import documents from an existing directory.
    Directory { path: PathBuf },
    /// Generate a synthetic corpus first (the `synth` stage).
    Synth {
        n_docs: usize,
        customer_fraction: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PreprocessParams {
    pub chunk_size: usize,
    pub min_tail: usize,
    pub seed: u64,
    pub anonymization: Option<AnonymizationRules>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GeneratorParams {
    pub order: usize,
    pub alpha: f64,
    pub interp_decay: f64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TuneParams {
    pub n_trials: usize,
    pub seed: u64,
    pub weights: WeightedSumConfig,
    #[serde(default)]
    pub space: Option<SearchSpace>,
    pub eval_chunk_cap: usize,
    pub max_continuation_tokens: usize,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ImportanceParams {
    pub n_trees: usize,
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AssessParams {
    /// Prompt file to use; when absent, prompts are synthesized and written
    /// to `prompts.jsonl` in the output directory.
    #[serde(default)]
    pub prompts_path: Option<PathBuf>,
    pub n_clear: usize,
    pub n_experimental: usize,
    pub samples_per_prompt: usize,
    pub seed: u64,
    pub max_tokens: usize,
    pub temperature: f64,
    /// Minimum parse rate required of the clear category.
    pub parse_rate_floor: f64,
    /// Cap on test chunks used for held-out continuation scoring.
    pub test_chunk_cap: usize,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub corpus: CorpusSource,
    pub preprocess: PreprocessParams,
    pub generator: GeneratorParams,
    pub tuning: TuneParams,
    pub importance: ImportanceParams,
    pub assessment: AssessParams,
}

impl PipelineConfig {
    /// A small, fast, fully seeded configuration.
    pub fn example(output_dir: PathBuf) -> Self {
        Self {
            output_dir,
            corpus: CorpusSource::Synth {
                n_docs: 120,
                customer_fraction: 0.8,
                seed: 11,
            },
            preprocess: PreprocessParams {
                chunk_size: 96,
                min_tail: 24,
                seed: 22,
                anonymization: None,
            },
            generator: GeneratorParams {
                order: 3,
                alpha: 0.01,
                interp_decay: 0.4,
            },
            tuning: TuneParams {
                n_trials: 12,
                seed: 33,
                weights: WeightedSumConfig::default(),
                space: None,
                eval_chunk_cap: 8,
                max_continuation_tokens: 128,
            },
            importance: ImportanceParams {
                n_trees: 100,
                repeats: 5,
                seed: 44,
            },
            assessment: AssessParams {
                prompts_path: None,
                n_clear: 10,
                n_experimental: 10,
                samples_per_prompt: 5,
                seed: 55,
                max_tokens: 192,
                temperature: 0.7,
                parse_rate_floor: 0.0,
                test_chunk_cap: 8,
            },
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if let CorpusSource::Directory { path } = &self.corpus {
            if path == &self.output_dir {
                return Err(PipelineError::BadConfig(
                    "output_dir must differ from the corpus directory".into(),
                ));
            }
        }
        if self.preprocess.min_tail > self.preprocess.chunk_size {
            return Err(PipelineError::BadConfig(
                "preprocess.min_tail must be <= preprocess.chunk_size".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.assessment.parse_rate_floor) {
            return Err(PipelineError::BadConfig(
                "assessment.parse_rate_floor must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Apply one `--set key.path=value` override to the raw config JSON. The
/// value parses as JSON when possible and falls back to a plain string.
pub fn apply_override(
    config: &mut serde_json::Value,
    assignment: &str,
) -> Result<(), PipelineError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        PipelineError::BadConfig(format!("override `{assignment}` is not key=value"))
    })?;
    let mut cursor = &mut *config;
    for part in key.split('.') {
        let map = cursor.as_object_mut().ok_or_else(|| {
            PipelineError::BadConfig(format!("override path `{key}` crosses a non-object"))
        })?;
        cursor = map
            .entry(part.to_string())
            .or_insert(serde_json::Value::Null);
    }
    *cursor = serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
    Ok(())
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<PipelineConfig, PipelineError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let mut value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| PipelineError::BadConfig(format!("{}: {e}", path.display())))?;
    for assignment in overrides {
        apply_override(&mut value, assignment)?;
    }
    let config: PipelineConfig = serde_json::from_value(value)
        .map_err(|e| PipelineError::BadConfig(format!("{}: {e}", path.display())))?;
    config.check()?;
    Ok(config)
}

/// One stage's declared inputs/outputs plus a free-form summary; written to
/// `manifests/<stage>.json` and later folded into `report.md`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub schema_version: u32,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

const STAGE_ORDER: [&str; 7] = [
    "synth",
    "preprocess",
    "tune",
    "train",
    "importance",
    "assess",
    "report",
];

fn write_manifest(config: &PipelineConfig, manifest: &StageManifest) -> Result<(), PipelineError> {
    let dir = config.output_dir.join("manifests");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join(format!("{}.json", manifest.stage));
    let json = serde_json::to_string_pretty(manifest).expect("manifest json");
    fs::write(&path, json + "\n").map_err(io_err(&path))
}

fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact {
            artifact: path.display().to_string(),
            producer,
        })
    }
}

fn corpus_dir(config: &PipelineConfig) -> PathBuf {
    match &config.corpus {
        CorpusSource::Directory { path } => path.clone(),
        CorpusSource::Synth { .. } => config.output_dir.join("corpus"),
    }
}

/// Write a synthetic corpus (one `.json` file per document plus a tag
/// manifest) into `<output_dir>/corpus`.
pub fn stage_synth(config: &PipelineConfig) -> Result<StageManifest, PipelineError> {
    let CorpusSource::Synth {
        n_docs,
        customer_fraction,
        seed,
    } = config.corpus
    else {
        return Err(PipelineError::BadConfig(
            "corpus source is a directory; `synth` does not apply".into(),
        ));
    };
    let docs = corpus::synthesize_corpus(n_docs, customer_fraction, seed)?;
    let dir = config.output_dir.join("corpus");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut tags: BTreeMap<String, SourceTag> = BTreeMap::new();
    for doc in &docs {
        let path = dir.join(format!("{}.json", doc.id));
        fs::write(&path, &doc.text).map_err(io_err(&path))?;
        tags.insert(doc.id.clone(), doc.source_tag);
    }
    let manifest_path = dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&tags).expect("tags json") + "\n",
    )
    .map_err(io_err(&manifest_path))?;

    let manifest = StageManifest {
        stage: "synth".into(),
        schema_version: PIPELINE_SCHEMA_VERSION,
        inputs: vec![],
        outputs: vec!["corpus/".into()],
        summary: serde_json::json!({
            "n_docs": docs.len(),
            "customer_share": corpus::customer_share(&docs),
            "seed": seed,
        }),
    };
    write_manifest(config, &manifest)?;
    Ok(manifest)
}

fn preprocess_docs(
    docs: &[RawDocument],
    params: &PreprocessParams,
) -> Result<(Vec<Chunk>, usize), PipelineError> {
    let mut chunks = Vec::new();
    let mut dropped = 0;
    for doc in docs {
        let doc = match &params.anonymization {
            Some(rules) => corpus::anonymize(doc, rules)?,
            None => doc.clone(),
        };
        let stream = corpus::tokenize_doc(&doc.text, doc.id.clone());
        let chunking = corpus::chunk(&stream, params.chunk_size, params.min_tail);
        dropped += chunking.dropped_tokens;
        chunks.extend(chunking.chunks);
    }
    Ok((chunks, dropped))
}

/// Anonymize, tokenize, chunk, shuffle-split, and export the dataset to
/// `<output_dir>/dataset`.
pub fn stage_preprocess(config: &PipelineConfig) -> Result<StageManifest, PipelineError> {
    let source = require(corpus_dir(config), "synth")?;
    // keep manifests free of absolute paths so identical configs give
    // identical output trees wherever they run
    let input_label = match &config.corpus {
        CorpusSource::Synth { .. } => "corpus/".to_string(),
        CorpusSource::Directory { path } => path.display().to_string(),
    };
    let docs = corpus::import_corpus(&source)?;
    let (chunks, dropped_tokens) = preprocess_docs(&docs, &config.preprocess)?;
    let split = corpus::shuffle_split(&chunks, config.preprocess.seed)?;
    let dataset_dir = config.output_dir.join("dataset");
    let version = corpus::export_dataset(&split, &dataset_dir)?;

    let manifest = StageManifest {
        stage: "preprocess".into(),
        schema_version: PIPELINE_SCHEMA_VERSION,
        inputs: vec![input_label],
        outputs: vec!["dataset/".into()],
        summary: serde_json::json!({
            "n_docs": docs.len(),
            "n_chunks": chunks.len(),
            "dropped_tokens": dropped_tokens,
            "train_chunks": split.train.len(),
            "eval_chunks": split.eval.len(),
            "test_chunks": split.test.len(),
            "dataset_version": version,
            "anonymized": config.preprocess.anonymization.is_some(),
        }),
    };
    write_manifest(config, &manifest)?;
    Ok(manifest)
}

fn theta_star_params(
    config: &PipelineConfig,
) -> Result<(GeneratorParams, bool), PipelineError> {
    let selection_path = config.output_dir.join("study/selection.json");
    if !selection_path.exists() {
        return Ok((config.generator.clone(), false));
    }
    let raw = fs::read_to_string(&selection_path).map_err(io_err(&selection_path))?;
    let selection: TrialSelection = serde_json::from_str(&raw)
        .map_err(|e| PipelineError::BadConfig(format!("study/selection.json: {e}")))?;
    let get = |name: &str, fallback: f64| {
        selection
            .theta_star
            .get(name)
            .map(ParamValue::as_f64)
            .unwrap_or(fallback)
    };
    Ok((
        GeneratorParams {
            order: get("order", config.generator.order as f64) as usize,
            alpha: get("alpha", config.generator.alpha),
            interp_decay: get("interp_decay", config.generator.interp_decay),
        },
        true,
    ))
}

/// Train the reference generator on the train split and save `model.json`.
/// Uses the tuned hyperparameters when `tune` has already produced a
/// selection, otherwise the configured generator defaults. Also reports
/// losses on all three splits plus held-out continuation scores.
pub fn stage_train(config: &PipelineConfig) -> Result<StageManifest, PipelineError> {
    let dataset_dir = require(config.output_dir.join("dataset"), "preprocess")?;
    let split = corpus::import_dataset(&dataset_dir)?;
    let (params, tuned) = theta_star_params(config)?;
    let weights = tuning::decay_weights(params.order, params.interp_decay);
    let model = generator::train_ngram(&split.train, params.order, params.alpha, &weights)?;
    let model_path = config.output_dir.join("model.json");
    model.save(&model_path)?;

    let train_loss = generator::cross_entropy(&model, &split.train)?;
    let eval_loss = generator::cross_entropy(&model, &split.eval)?;
    let gen_config = GenerationConfig {
        max_tokens: config.tuning.max_continuation_tokens,
        temperature: 0.0,
        seed: config.preprocess.seed,
        ..Default::default()
    };
    let test =
        assess::evaluate_on_test(&model, &split.test, config.assessment.test_chunk_cap, &gen_config)?;

    let manifest = StageManifest {
        stage: "train".into(),
        schema_version: PIPELINE_SCHEMA_VERSION,
        inputs: vec!["dataset/".into()],
        outputs: vec!["model.json".into()],
        summary: serde_json::json!({
            "hyperparams": {
                "order": params.order,
                "alpha": params.alpha,
                "interp_decay": params.interp_decay,
            },
            "from_tuning": tuned,
            "model_hash": model.hash(),
            "train_loss": train_loss,
            "eval_loss": eval_loss,
            "test": test,
        }),
    };
    write_manifest(config, &manifest)?;
    Ok(manifest)
}

/// Random-search study over the dataset; writes `study/trials.csv` and
/// `study/selection.json`.
pub fn stage_tune(config: &PipelineConfig) -> Result<StageManifest, PipelineError> {
    let dataset_dir = require(config.output_dir.join("dataset"), "preprocess")?;
    let split = corpus::import_dataset(&dataset_dir)?;
    let space = config
        .tuning
        .space
        .clone()
        .unwrap_or_else(SearchSpace::reference_default);
    let options = StudyOptions {
        eval_chunk_cap: config.tuning.eval_chunk_cap,
        max_continuation_tokens: config.tuning.max_continuation_tokens,
    };
    let study = tuning::run_study(
        &space,
        &split,
        config.tuning.n_trials,
        &config.tuning.weights,
        config.tuning.seed,
        &options,
    )?;
    let study_dir = config.output_dir.join("study");
    fs::create_dir_all(&study_dir).map_err(io_err(&study_dir))?;
    tuning::write_trials_csv(
        &study.trials,
        &config.tuning.weights,
        &study_dir.join("trials.csv"),
    )?;
    let selection_path = study_dir.join("selection.json");
    fs::write(
        &selection_path,
        serde_json::to_string_pretty(&study.selection).expect("selection json") + "\n",
    )
    .map_err(io_err(&selection_path))?;

    let manifest = StageManifest {
        stage: "tune".into(),
        schema_version: PIPELINE_SCHEMA_VERSION,
        inputs: vec!["dataset/".into()],
        outputs: vec!["study/trials.csv".into(), "study/selection.json".into()],
        summary: serde_json::json!({
            "n_trials": config.tuning.n_trials,
            "seed": config.tuning.seed,
            "optimal_trial": study.selection.optimal_trial,
            "f_value": study.selection.f_value,
            "theta_star": study.selection.theta_star,
        }),
    };
    write_manifest(config, &manifest)?;
    Ok(manifest)
}

/// Fit per-objective forests over the study's trials and write
/// `importance.json`.
pub fn stage_importance(config: &PipelineConfig) -> Result<StageManifest, PipelineError> {
    let trials_path = require(config.output_dir.join("study/trials.csv"), "tune")?;
    let trials = tuning::read_trials_csv(&trials_path)?;
    let forest_config = ForestConfig {
        n_trees: config.importance.n_trees,
        seed: config.importance.seed,
        ..Default::default()
    };
    let report = importance::analyze_trials(
        &trials,
        &forest_config,
        config.importance.repeats,
        config.importance.seed,
        Scorer::R2,
    )?;
    let path = config.output_dir.join("importance.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("importance json") + "\n",
    )
    .map_err(io_err(&path))?;

    let top_feature: BTreeMap<&String, &String> = report
        .objectives
        .iter()
        .filter_map(|(objective, r)| {
            r.features
                .iter()
                .max_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap())
                .map(|f| (objective, &f.feature))
        })
        .collect();
    let manifest = StageManifest {
        stage: "importance".into(),
        schema_version: PIPELINE_SCHEMA_VERSION,
        inputs: vec!["study/trials.csv".into()],
        outputs: vec!["importance.json".into()],
        summary: serde_json::json!({
            "repeats": config.importance.repeats,
            "n_trees": config.importance.n_trees,
            "top_feature_per_objective": top_feature,
        }),
    };
    write_manifest(config, &manifest)?;
    Ok(manifest)
}

/// Sample prompts against the trained model, classify failures, write
/// `assessment.json` + `assessment.md`, and apply the parse-rate floor.
pub fn stage_assess(config: &PipelineConfig) -> Result<StageManifest, PipelineError> {
    let model_path = require(config.output_dir.join("model.json"), "train")?;
    let model = NGramModel::load(&model_path)?;
    let params = &config.assessment;
    let prompts = match &params.prompts_path {
        Some(path) => assess::read_prompts(path)?,
        None => {
            let prompts = assess::synthesize_prompts(params.n_clear, params.n_experimental);
            assess::write_prompts(&config.output_dir.join("prompts.jsonl"), &prompts)?;
            prompts
        }
    };
    let assess_config = AssessmentConfig {
        samples_per_prompt: params.samples_per_prompt,
        seed: params.seed,
        generation: GenerationConfig {
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            ..Default::default()
        },
        sanitize: SanitizeConfig::default(),
        ..Default::default()
    };
    let report = assess::run_assessment(&model, &prompts, &assess_config)?;

    let json_path = config.output_dir.join("assessment.json");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&report).expect("assessment json") + "\n",
    )
    .map_err(io_err(&json_path))?;
    let md_path = config.output_dir.join("assessment.md");
    fs::write(&md_path, assess::render_markdown(&report)).map_err(io_err(&md_path))?;

    let manifest = StageManifest {
        stage: "assess".into(),
        schema_version: PIPELINE_SCHEMA_VERSION,
        inputs: vec!["model.json".into(), "prompts".into()],
        outputs: vec!["assessment.json".into(), "assessment.md".into()],
        summary: serde_json::json!({
            "n_samples": report.overall.n_samples,
            "overall_parse_rate": report.overall.parse_rate,
            "per_category": report.categories,
            "parse_rate_floor": params.parse_rate_floor,
        }),
    };
    write_manifest(config, &manifest)?;
    // gate last so the artifacts exist even when the floor trips
    assess::check_gate(&report, params.parse_rate_floor)?;
    Ok(manifest)
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RootManifest {
    pub schema_version: u32,
    pub stages: Vec<StageManifest>,
    /// Unix seconds; the only timestamp in the output tree.
    pub generated_at: u64,
}

/// Fold every stage manifest into `report.md` and a root `manifest.json`.
pub fn stage_report(config: &PipelineConfig) -> Result<StageManifest, PipelineError> {
    let mut stages = Vec::new();
    for stage in STAGE_ORDER {
        if stage == "report" {
            continue;
        }
        let path = config.output_dir.join(format!("manifests/{stage}.json"));
        if !path.exists() {
            continue;
        }
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: StageManifest = serde_json::from_str(&raw)
            .map_err(|e| PipelineError::BadConfig(format!("{}: {e}", path.display())))?;
        stages.push(manifest);
    }
    if stages.is_empty() {
        return Err(PipelineError::MissingArtifact {
            artifact: config.output_dir.join("manifests").display().to_string(),
            producer: "preprocess",
        });
    }

    let mut md = String::from("# Pipeline report\n");
    for manifest in &stages {
        md.push_str(&format!("\n## {}\n\n", manifest.stage));
        md.push_str(&format!(
            "- inputs: {}\n- outputs: {}\n",
            manifest.inputs.join(", "),
            manifest.outputs.join(", ")
        ));
        md.push_str("\n```json\n");
        md.push_str(&serde_json::to_string_pretty(&manifest.summary).expect("summary json"));
        md.push_str("\n```\n");
    }
    let md_path = config.output_dir.join("report.md");
    fs::write(&md_path, &md).map_err(io_err(&md_path))?;

    let generated_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let root = RootManifest {
        schema_version: PIPELINE_SCHEMA_VERSION,
        stages: stages.clone(),
        generated_at,
    };
    let root_path = config.output_dir.join("manifest.json");
    fs::write(
        &root_path,
        serde_json::to_string_pretty(&root).expect("root manifest") + "\n",
    )
    .map_err(io_err(&root_path))?;

    let manifest = StageManifest {
        stage: "report".into(),
        schema_version: PIPELINE_SCHEMA_VERSION,
        inputs: vec!["manifests/".into()],
        outputs: vec!["report.md".into(), "manifest.json".into()],
        summary: serde_json::json!({ "n_stages": stages.len() }),
    };
    Ok(manifest)
}

/// Run every stage in order. Synth is skipped for directory-backed corpora;
/// `tune` runs before `train` so the final model uses the tuned
/// hyperparameters.
pub fn run_all(config: &PipelineConfig) -> Result<Vec<StageManifest>, PipelineError> {
    config.check()?;
    let mut manifests = Vec::new();
    if matches!(config.corpus, CorpusSource::Synth { .. }) {
        manifests.push(stage_synth(config)?);
    }
    manifests.push(stage_preprocess(config)?);
    manifests.push(stage_tune(config)?);
    manifests.push(stage_train(config)?);
    manifests.push(stage_importance(config)?);
    manifests.push(stage_assess(config)?);
    manifests.push(stage_report(config)?);
    Ok(manifests)
}
