//! Text-generation evaluation metrics: corpus-level BLEU, ROUGE-N-F1 and
//! ROUGE-L-F1 over token sequences.
//!
//! All functions are pure; token sequences are compared exactly (no casing or
//! normalization). Callers that score JSON text are expected to drop
//! pure-whitespace tokens first (see [`content_tokens`]) so that indentation
//! runs do not dominate the n-gram counts.

use std::collections::HashMap;

/// BLEU smoothing for zero n-gram matches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Any zero modified precision makes the whole score 0.
    #[default]
    None,
    /// Add-one smoothing on match and total counts.
    AddOne,
}

#[derive(Clone, Debug)]
pub struct BleuConfig {
    pub max_n: usize,
    /// Per-order weights; must be non-negative and sum to 1.
    pub weights: Vec<f64>,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            weights: vec![0.25; 4],
            smoothing: Smoothing::None,
        }
    }
}

impl BleuConfig {
    pub fn uniform(max_n: usize) -> Self {
        Self {
            max_n,
            weights: vec![1.0 / max_n as f64; max_n],
            smoothing: Smoothing::None,
        }
    }

    fn check(&self) -> Result<(), MetricError> {
        if self.max_n == 0 || self.weights.len() != self.max_n {
            return Err(MetricError::BadConfig(
                "max_n must be >= 1 with one weight per order".into(),
            ));
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(MetricError::BadConfig(
                "weights must be non-negative and sum to 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("candidate/reference count mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty candidate set")]
    EmptyCorpus,
    #[error("invalid metric config: {0}")]
    BadConfig(String),
}

/// Scores for one candidate/reference pairing, matching the evaluation
/// table columns used throughout the pipeline.
#[derive(Clone, Copy, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct ScoreReport {
    pub bleu: f64,
    pub rouge_1_f1: f64,
    pub rouge_2_f1: f64,
    pub rouge_l_f1: f64,
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut map = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for window in tokens.windows(n) {
            *map.entry(window).or_insert(0) += 1;
        }
    }
    map
}

/// Corpus-level BLEU: clipped n-gram matches pooled over all pairs, geometric
/// mean under `weights`, times the brevity penalty `min(1, e^(1 - r/c))`.
pub fn bleu(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    config: &BleuConfig,
) -> Result<f64, MetricError> {
    config.check()?;
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch(
            candidates.len(),
            references.len(),
        ));
    }
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }

    let cand_len: usize = candidates.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return Ok(0.0);
    }

    let mut log_sum = 0.0;
    for n in 1..=config.max_n {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, reference) in candidates.iter().zip(references) {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                total += count;
                matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
        let (matched, total) = match config.smoothing {
            Smoothing::None => (matched as f64, total as f64),
            Smoothing::AddOne => ((matched + 1) as f64, (total + 1) as f64),
        };
        if matched == 0.0 || total == 0.0 {
            return Ok(0.0);
        }
        log_sum += config.weights[n - 1] * (matched / total).ln();
    }

    let brevity = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(log_sum.exp() * brevity)
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// F1 over the clipped multiset intersection of n-grams.
pub fn rouge_n_f1(candidate: &[String], reference: &[String], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be >= 1");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let cand_total: usize = cand.values().sum();
    let ref_total: usize = refs.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let overlap: usize = cand
        .iter()
        .map(|(gram, count)| (*count).min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    f1(
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    )
}

/// Length of the longest common subsequence, rolling-row DP.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// LCS-based F1: P = lcs/|cand|, R = lcs/|ref|.
pub fn rouge_l_f1(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(candidate, reference) as f64;
    f1(lcs / candidate.len() as f64, lcs / reference.len() as f64)
}

/// Drop pure-whitespace tokens before scoring.
pub fn content_tokens(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !t.chars().all(char::is_whitespace))
        .cloned()
        .collect()
}

/// All four pipeline metrics for a single pair (BLEU wraps the pair into a
/// one-element corpus).
pub fn score_pair(candidate: &[String], reference: &[String]) -> ScoreReport {
    let bleu_score = bleu(
        &[candidate.to_vec()],
        &[reference.to_vec()],
        &BleuConfig::default(),
    )
    .unwrap_or(0.0);
    ScoreReport {
        bleu: bleu_score,
        rouge_1_f1: rouge_n_f1(candidate, reference, 1),
        rouge_2_f1: rouge_n_f1(candidate, reference, 2),
        rouge_l_f1: rouge_l_f1(candidate, reference),
    }
}
