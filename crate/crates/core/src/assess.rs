//! Model assessment: held-out continuation scoring, prompt-based sampling,
//! and failure-mode classification of generated documents.
//!
//! A sample is the prompt text plus the generated continuation. Each sample
//! runs through sanitize -> prefix scan -> repair -> strict validation and is
//! tagged with one failure class, checked in priority order:
//! nested_start > forbidden_char > repetition > truncation_only > none > other.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::{detokenize, tokenize, Chunk};
use crate::generator::{self, GenerationConfig, GeneratorError, NGramModel, Termination};
use crate::metrics;
use crate::repair::{self, RepairStatus, SanitizeConfig, ScanStatus};
use crate::seeding;

pub const ASSESSMENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum AssessError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prompts line {line}: {message}")]
    BadPrompt { line: usize, message: String },
    #[error("no prompts to assess")]
    NoPrompts,
    #[error("parse-rate gate failed: clear rate {rate:.4} below floor {floor:.4}")]
    GateFailed { rate: f64, floor: f64 },
}

/// Continuation quality over held-out chunks: each chunk's first half is the
/// prompt, the second half the reference; the model continues greedily (or
/// per `config.temperature`) and the continuation is scored token-wise after
/// dropping whitespace tokens. BLEU is corpus-level, ROUGE values are means
/// over chunk pairs.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ContinuationScores {
    pub bleu: f64,
    pub rouge_1_f1: f64,
    pub rouge_2_f1: f64,
    pub rouge_l_f1: f64,
    pub n_pairs: usize,
}

pub fn continuation_scores(
    model: &NGramModel,
    chunks: &[Chunk],
    chunk_cap: usize,
    config: &GenerationConfig,
) -> Result<ContinuationScores, GeneratorError> {
    let mut candidates = Vec::new();
    let mut references = Vec::new();
    for (i, chunk) in chunks.iter().take(chunk_cap).enumerate() {
        if chunk.tokens.len() < 2 {
            continue;
        }
        let mid = chunk.tokens.len() / 2;
        let per_chunk = GenerationConfig {
            seed: seeding::derive_seed(config.seed, i as u64),
            ..config.clone()
        };
        let (continuation, _) = generator::generate(model, &chunk.tokens[..mid], &per_chunk);
        candidates.push(metrics::content_tokens(&continuation));
        references.push(metrics::content_tokens(&chunk.tokens[mid..]));
    }
    if candidates.is_empty() {
        return Err(GeneratorError::EmptyDataset);
    }
    let bleu = metrics::bleu(&candidates, &references, &metrics::BleuConfig::default())
        .unwrap_or(0.0);
    let n = candidates.len() as f64;
    let mean = |f: fn(&[String], &[String]) -> f64| {
        candidates
            .iter()
            .zip(&references)
            .map(|(c, r)| f(c, r))
            .sum::<f64>()
            / n
    };
    Ok(ContinuationScores {
        bleu,
        rouge_1_f1: mean(|c, r| metrics::rouge_n_f1(c, r, 1)),
        rouge_2_f1: mean(|c, r| metrics::rouge_n_f1(c, r, 2)),
        rouge_l_f1: mean(|c, r| metrics::rouge_l_f1(c, r)),
        n_pairs: candidates.len(),
    })
}

/// Final held-out evaluation: cross-entropy plus continuation scores.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TestEvaluation {
    pub loss: f64,
    pub scores: ContinuationScores,
}

pub fn evaluate_on_test(
    model: &NGramModel,
    test: &[Chunk],
    chunk_cap: usize,
    config: &GenerationConfig,
) -> Result<TestEvaluation, GeneratorError> {
    Ok(TestEvaluation {
        loss: generator::cross_entropy(model, test)?,
        scores: continuation_scores(model, test, chunk_cap, config)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptCategory {
    /// A valid opening of a JSON document.
    Clear,
    /// A fragment starting mid-document.
    Experimental,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub category: PromptCategory,
    pub text: String,
}

/// One JSON object per line: {"id", "category", "text"}.
pub fn read_prompts(path: &Path) -> Result<Vec<PromptSpec>, AssessError> {
    let io = |source| AssessError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut prompts = Vec::new();
    for (index, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let prompt: PromptSpec =
            serde_json::from_str(&line).map_err(|e| AssessError::BadPrompt {
                line: index + 1,
                message: e.to_string(),
            })?;
        if prompt.text.is_empty() {
            return Err(AssessError::BadPrompt {
                line: index + 1,
                message: "empty prompt text".into(),
            });
        }
        prompts.push(prompt);
    }
    if prompts.is_empty() {
        return Err(AssessError::NoPrompts);
    }
    Ok(prompts)
}

pub fn write_prompts(path: &Path, prompts: &[PromptSpec]) -> Result<(), AssessError> {
    let io = |source| AssessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io)?;
    for prompt in prompts {
        writeln!(file, "{}", serde_json::to_string(prompt).expect("prompt json")).map_err(io)?;
    }
    Ok(())
}

const CLEAR_OPENINGS: [&str; 5] = [
    "{",
    "{\"context\": ",
    "{\"context\": {\"name\": \"",
    "{\"aggregates\": [{\"",
    "{\"context\": {\"name\": \"billing\", \"",
];

const EXPERIMENTAL_FRAGMENTS: [&str; 5] = [
    "\": \"invoice\", \"fields\": [",
    ", \"entities\": [{\"name\": ",
    "}], \"type\": \"",
    ": 42, \"required\": true}",
    "\"}]}, {\"name\": \"",
];

/// Deterministic prompt sets: clear prompts are valid document openings
/// (always a proper JSON prefix), experimental prompts start mid-document,
/// several of them in positions no valid document can start from.
pub fn synthesize_prompts(n_clear: usize, n_experimental: usize) -> Vec<PromptSpec> {
    let mut prompts = Vec::with_capacity(n_clear + n_experimental);
    for i in 0..n_clear {
        prompts.push(PromptSpec {
            id: format!("clear{i:03}"),
            category: PromptCategory::Clear,
            text: CLEAR_OPENINGS[i % CLEAR_OPENINGS.len()].to_string(),
        });
    }
    for i in 0..n_experimental {
        prompts.push(PromptSpec {
            id: format!("exp{i:03}"),
            category: PromptCategory::Experimental,
            text: EXPERIMENTAL_FRAGMENTS[i % EXPERIMENTAL_FRAGMENTS.len()].to_string(),
        });
    }
    prompts
}

/// Smallest period `p >= min_period` such that the stream ends with
/// `min_repeats` exact copies of its last `p` tokens.
pub fn detect_repetition(
    tokens: &[String],
    min_period: usize,
    min_repeats: usize,
) -> Option<usize> {
    assert!(min_period >= 1 && min_repeats >= 2);
    let n = tokens.len();
    for period in min_period..=n / min_repeats {
        let tail = &tokens[n - period..];
        let repeats_back = (1..min_repeats).all(|k| {
            let start = n - (k + 1) * period;
            &tokens[start..start + period] == tail
        });
        if repeats_back {
            return Some(period);
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    NestedStart,
    ForbiddenChar,
    Repetition,
    TruncationOnly,
    None,
    Other,
}

impl FailureClass {
    pub fn label(self) -> &'static str {
        match self {
            Self::NestedStart => "nested_start",
            Self::ForbiddenChar => "forbidden_char",
            Self::Repetition => "repetition",
            Self::TruncationOnly => "truncation_only",
            Self::None => "none",
            Self::Other => "other",
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AssessmentConfig {
    pub samples_per_prompt: usize,
    pub seed: u64,
    pub generation: GenerationConfig,
    pub sanitize: SanitizeConfig,
    pub repetition_min_period: usize,
    pub repetition_min_repeats: usize,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self {
            samples_per_prompt: 5,
            seed: 0,
            generation: GenerationConfig {
                max_tokens: 256,
                ..Default::default()
            },
            sanitize: SanitizeConfig::default(),
            repetition_min_period: 8,
            repetition_min_repeats: 3,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SampleResult {
    pub prompt_id: String,
    pub category: PromptCategory,
    pub sample_index: usize,
    pub seed: u64,
    pub termination: Termination,
    /// Prompt text plus continuation, before any post-processing.
    pub text: String,
    pub repair_status: RepairStatus,
    pub failure: FailureClass,
    /// True iff the sample validates directly or after repair.
    pub parsed: bool,
    pub output: Option<String>,
}

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct CategorySummary {
    pub n_samples: usize,
    pub valid_as_is: usize,
    pub repaired: usize,
    pub unrepairable: usize,
    pub parse_rate: f64,
    pub failures: BTreeMap<String, usize>,
}

impl CategorySummary {
    fn add(&mut self, sample: &SampleResult) {
        self.n_samples += 1;
        match sample.repair_status {
            RepairStatus::ValidAsIs => self.valid_as_is += 1,
            RepairStatus::Repaired => self.repaired += 1,
            RepairStatus::Unrepairable => self.unrepairable += 1,
        }
        *self
            .failures
            .entry(sample.failure.label().to_string())
            .or_insert(0) += 1;
    }

    fn finish(&mut self) {
        if self.n_samples > 0 {
            self.parse_rate = (self.valid_as_is + self.repaired) as f64 / self.n_samples as f64;
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AssessmentReport {
    pub schema_version: u32,
    pub seed: u64,
    pub model_hash: String,
    pub categories: BTreeMap<String, CategorySummary>,
    pub overall: CategorySummary,
    pub samples: Vec<SampleResult>,
}

fn classify(
    continuation: &[String],
    sanitized_positions: &[usize],
    scan_status: ScanStatus,
    config: &AssessmentConfig,
) -> FailureClass {
    if scan_status == ScanStatus::NotAPrefix {
        return FailureClass::NestedStart;
    }
    if !sanitized_positions.is_empty() {
        return FailureClass::ForbiddenChar;
    }
    if detect_repetition(
        continuation,
        config.repetition_min_period,
        config.repetition_min_repeats,
    )
    .is_some()
    {
        return FailureClass::Repetition;
    }
    match scan_status {
        ScanStatus::Prefix => FailureClass::TruncationOnly,
        ScanStatus::Complete => FailureClass::None,
        ScanStatus::NotAPrefix => unreachable!(),
    }
}

/// Sample every prompt `samples_per_prompt` times with per-sample derived
/// seeds, post-process, classify, and aggregate per prompt category. Fully
/// deterministic for a fixed (model, prompts, config).
pub fn run_assessment(
    model: &NGramModel,
    prompts: &[PromptSpec],
    config: &AssessmentConfig,
) -> Result<AssessmentReport, AssessError> {
    if prompts.is_empty() {
        return Err(AssessError::NoPrompts);
    }
    assert!(config.samples_per_prompt >= 1);
    let mut samples = Vec::with_capacity(prompts.len() * config.samples_per_prompt);
    for (prompt_index, prompt) in prompts.iter().enumerate() {
        let prompt_tokens = tokenize(&prompt.text).tokens;
        for sample_index in 0..config.samples_per_prompt {
            let seed = seeding::derive_seed(
                config.seed,
                (prompt_index as u64) << 32 | sample_index as u64,
            );
            let generation = GenerationConfig {
                seed,
                ..config.generation.clone()
            };
            let (continuation, termination) =
                generator::generate(model, &prompt_tokens, &generation);
            let text = format!("{}{}", prompt.text, detokenize(&continuation));
            let outcome = repair::repair(&text, &config.sanitize)
                .expect("strip action never errors");
            let failure = classify(
                &continuation,
                &outcome.edits.sanitized_positions,
                outcome.scan.status,
                config,
            );
            let parsed = matches!(
                outcome.status,
                RepairStatus::ValidAsIs | RepairStatus::Repaired
            );
            samples.push(SampleResult {
                prompt_id: prompt.id.clone(),
                category: prompt.category,
                sample_index,
                seed,
                termination,
                text,
                repair_status: outcome.status,
                failure: if !parsed && failure == FailureClass::None {
                    FailureClass::Other
                } else {
                    failure
                },
                parsed,
                output: outcome.output,
            });
        }
    }

    let mut categories: BTreeMap<String, CategorySummary> = BTreeMap::new();
    let mut overall = CategorySummary::default();
    for sample in &samples {
        let key = match sample.category {
            PromptCategory::Clear => "clear",
            PromptCategory::Experimental => "experimental",
        };
        categories.entry(key.to_string()).or_default().add(sample);
        overall.add(sample);
    }
    for summary in categories.values_mut() {
        summary.finish();
    }
    overall.finish();

    Ok(AssessmentReport {
        schema_version: ASSESSMENT_SCHEMA_VERSION,
        seed: config.seed,
        model_hash: model.hash(),
        categories,
        overall,
        samples,
    })
}

/// Fail when the clear-category parse rate sits below `floor`.
pub fn check_gate(report: &AssessmentReport, floor: f64) -> Result<(), AssessError> {
    let rate = report
        .categories
        .get("clear")
        .map(|s| s.parse_rate)
        .unwrap_or(0.0);
    if rate < floor {
        return Err(AssessError::GateFailed { rate, floor });
    }
    Ok(())
}

/// Human-readable companion to `assessment.json`.
pub fn render_markdown(report: &AssessmentReport) -> String {
    let mut out = String::new();
    out.push_str("# Assessment\n\n");
    out.push_str(&format!(
        "Model `{}`, seed {}, {} samples.\n\n",
        &report.model_hash[..12],
        report.seed,
        report.overall.n_samples
    ));
    out.push_str("| category | samples | valid | repaired | unrepairable | parse rate |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for (name, s) in report
        .categories
        .iter()
        .map(|(k, v)| (k.as_str(), v))
        .chain(std::iter::once(("overall", &report.overall)))
    {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.3} |\n",
            name, s.n_samples, s.valid_as_is, s.repaired, s.unrepairable, s.parse_rate
        ));
    }
    out.push_str("\nFailure classes (overall):\n\n");
    for (class, count) in &report.overall.failures {
        out.push_str(&format!("- {class}: {count}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize_doc;

    fn toks(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn tiny_model() -> NGramModel {
        let docs = [
            "{\"context\": {\"name\": \"billing\"}, \"aggregates\": []}",
            "{\"context\": {\"name\": \"orders\"}, \"aggregates\": []}",
            "{\"context\": {\"name\": \"billing\"}, \"entities\": []}",
        ];
        let chunks: Vec<Chunk> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let stream = tokenize_doc(d, format!("d{i}"));
                Chunk {
                    tokens: stream.tokens,
                    doc_ids: vec![stream.doc_id],
                }
            })
            .collect();
        // order 4 so the key token sits inside the context window; order 3
        // contexts like (':', ' ') are shared by every key and derail greedy
        // continuation
        generator::train_ngram(&chunks, 4, 0.01, &[0.05, 0.1, 0.25, 0.6]).unwrap()
    }

    #[test]
    fn repetition_requires_min_period_and_repeats() {
        let tokens = toks(&["a", "b", "a", "b", "a", "b"]);
        assert_eq!(detect_repetition(&tokens, 2, 3), Some(2));
        assert_eq!(detect_repetition(&tokens, 3, 3), None); // period too small
        assert_eq!(detect_repetition(&tokens, 2, 4), None); // not enough copies
    }

    #[test]
    fn repetition_finds_smallest_period() {
        // last 8 tokens are "x y" four times; period 2 wins over period 4
        let mut tokens = toks(&["q"]);
        for _ in 0..4 {
            tokens.push("x".into());
            tokens.push("y".into());
        }
        assert_eq!(detect_repetition(&tokens, 2, 3), Some(2));
    }

    #[test]
    fn repetition_must_be_trailing() {
        let tokens = toks(&["a", "a", "a", "a", "end", "of", "stream", "z"]);
        assert_eq!(detect_repetition(&tokens, 1, 3), None);
    }

    #[test]
    fn classify_priority_order() {
        let cfg = AssessmentConfig::default();
        // not-a-prefix beats everything
        assert_eq!(
            classify(&[], &[3], ScanStatus::NotAPrefix, &cfg),
            FailureClass::NestedStart
        );
        // forbidden char beats repetition
        let reps: Vec<String> = std::iter::repeat("t".to_string()).take(64).collect();
        let cfg_small = AssessmentConfig {
            repetition_min_period: 1,
            ..cfg.clone()
        };
        assert_eq!(
            classify(&reps, &[0], ScanStatus::Prefix, &cfg_small),
            FailureClass::ForbiddenChar
        );
        assert_eq!(
            classify(&reps, &[], ScanStatus::Prefix, &cfg_small),
            FailureClass::Repetition
        );
        assert_eq!(
            classify(&[], &[], ScanStatus::Prefix, &cfg),
            FailureClass::TruncationOnly
        );
        assert_eq!(
            classify(&[], &[], ScanStatus::Complete, &cfg),
            FailureClass::None
        );
    }

    #[test]
    fn continuation_scores_high_on_memorized_corpus() {
        let model = tiny_model();
        let doc = "{\"context\": {\"name\": \"billing\"}, \"aggregates\": []}";
        let stream = tokenize_doc(doc, "d".into());
        let chunk = Chunk {
            tokens: stream.tokens,
            doc_ids: vec!["d".into()],
        };
        let config = GenerationConfig {
            temperature: 0.0,
            max_tokens: 64,
            ..Default::default()
        };
        let scores = continuation_scores(&model, &[chunk], 16, &config).unwrap();
        assert_eq!(scores.n_pairs, 1);
        assert!(scores.rouge_1_f1 > 0.5, "rouge_1 = {}", scores.rouge_1_f1);
    }

    #[test]
    fn continuation_scores_reject_empty_input() {
        let model = tiny_model();
        assert!(matches!(
            continuation_scores(&model, &[], 16, &GenerationConfig::default()),
            Err(GeneratorError::EmptyDataset)
        ));
    }

    #[test]
    fn prompts_roundtrip_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prompts.jsonl");
        let prompts = synthesize_prompts(3, 4);
        write_prompts(&path, &prompts).unwrap();
        let back = read_prompts(&path).unwrap();
        assert_eq!(back.len(), 7);
        assert_eq!(back[0].id, "clear000");
        assert_eq!(back[3].category, PromptCategory::Experimental);
        assert_eq!(back[3].text, prompts[3].text);
    }

    #[test]
    fn experimental_prompts_include_impossible_starts() {
        let prompts = synthesize_prompts(0, 5);
        let impossible = prompts
            .iter()
            .filter(|p| repair::scan_partial(&p.text).status == ScanStatus::NotAPrefix)
            .count();
        assert!(impossible >= 2, "{impossible} impossible starts");
    }

    #[test]
    fn clear_prompts_are_valid_prefixes() {
        for prompt in synthesize_prompts(5, 0) {
            assert_ne!(
                repair::scan_partial(&prompt.text).status,
                ScanStatus::NotAPrefix,
                "{:?}",
                prompt.text
            );
        }
    }

    #[test]
    fn assessment_is_deterministic_and_gated() {
        let model = tiny_model();
        let prompts = synthesize_prompts(3, 3);
        let config = AssessmentConfig {
            samples_per_prompt: 2,
            seed: 7,
            generation: GenerationConfig {
                max_tokens: 48,
                temperature: 0.8,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = run_assessment(&model, &prompts, &config).unwrap();
        let b = run_assessment(&model, &prompts, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.overall.n_samples, 12);
        let clear = &a.categories["clear"];
        let exp = &a.categories["experimental"];
        assert!(clear.parse_rate >= exp.parse_rate);
        assert!(check_gate(&a, 0.0).is_ok());
        assert!(check_gate(&a, 1.1).is_err());
    }

    #[test]
    fn nested_start_dominates_experimental_failures() {
        let model = tiny_model();
        let prompts = vec![PromptSpec {
            id: "x".into(),
            category: PromptCategory::Experimental,
            text: "\": \"v\", ".into(),
        }];
        let report =
            run_assessment(&model, &prompts, &AssessmentConfig::default()).unwrap();
        assert_eq!(
            report.overall.failures.get("nested_start"),
            Some(&report.overall.n_samples)
        );
        assert_eq!(report.overall.parse_rate, 0.0);
    }

    #[test]
    fn markdown_report_mentions_every_category() {
        let model = tiny_model();
        let report = run_assessment(
            &model,
            &synthesize_prompts(2, 2),
            &AssessmentConfig {
                samples_per_prompt: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let md = render_markdown(&report);
        assert!(md.contains("| clear |"));
        assert!(md.contains("| experimental |"));
        assert!(md.contains("| overall |"));
    }
}
