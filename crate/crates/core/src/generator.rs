//! Trainable next-token reference generator: an interpolated add-α n-gram
//! model standing in for a fine-tuned LLM. Supports training, cross-entropy
//! evaluation, and capped temperature sampling, all fully deterministic.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Chunk;
use crate::seeding;

/// End-of-sequence marker. The lossless tokenizer can never emit this as a
/// single token, so it cannot collide with corpus tokens.
pub const EOS: &str = "<eos>";

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("model i/o failed on {path}: {message}")]
    ModelIo { path: String, message: String },
}

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
struct ContextCounts {
    // next-token id -> count
    tokens: HashMap<usize, u64>,
    total: u64,
}

/// Interpolated add-α n-gram model. Immutable once trained; safe to share
/// across threads for concurrent read-only generation.
#[derive(Clone, Debug)]
pub struct NGramModel {
    pub order: usize,
    pub alpha: f64,
    /// λ_1..λ_k, non-negative, summing to 1.
    pub interp_weights: Vec<f64>,
    /// Sorted vocabulary including the EOS marker.
    vocab: Vec<String>,
    vocab_index: HashMap<String, usize>,
    /// counts[j-1]: context (last j-1 tokens) -> next-token counts.
    counts: Vec<HashMap<Vec<String>, ContextCounts>>,
}

fn check_params(order: usize, alpha: f64, interp_weights: &[f64]) -> Result<(), GeneratorError> {
    if order < 1 {
        return Err(GeneratorError::BadParam("order must be >= 1".into()));
    }
    if !(alpha > 0.0) {
        return Err(GeneratorError::BadParam("alpha must be > 0".into()));
    }
    if interp_weights.len() != order {
        return Err(GeneratorError::BadParam(
            "interp_weights must have one entry per order".into(),
        ));
    }
    let sum: f64 = interp_weights.iter().sum();
    if interp_weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(GeneratorError::BadParam(
            "interp_weights must be non-negative and sum to 1".into(),
        ));
    }
    Ok(())
}

/// Count next-token frequencies for orders 1..k over the training chunks.
/// Each chunk is an independent sequence terminated by EOS; contexts never
/// span chunk boundaries.
pub fn train_ngram(
    train_chunks: &[Chunk],
    order: usize,
    alpha: f64,
    interp_weights: &[f64],
) -> Result<NGramModel, GeneratorError> {
    check_params(order, alpha, interp_weights)?;
    if train_chunks.is_empty() || train_chunks.iter().all(Chunk::is_empty) {
        return Err(GeneratorError::EmptyTrainingSet);
    }

    let mut vocab: Vec<String> = train_chunks
        .iter()
        .flat_map(|c| c.tokens.iter().cloned())
        .collect();
    vocab.push(EOS.to_string());
    vocab.sort();
    vocab.dedup();
    let vocab_index: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();

    let mut counts: Vec<HashMap<Vec<String>, ContextCounts>> = vec![HashMap::new(); order];
    for chunk in train_chunks {
        if chunk.is_empty() {
            continue;
        }
        let mut seq = chunk.tokens.clone();
        seq.push(EOS.to_string());
        for i in 0..seq.len() {
            let target = vocab_index[&seq[i]];
            for j in 1..=order {
                let ctx_len = (j - 1).min(i);
                let ctx = seq[i - ctx_len..i].to_vec();
                let entry = counts[j - 1].entry(ctx).or_default();
                *entry.tokens.entry(target).or_insert(0) += 1;
                entry.total += 1;
            }
        }
    }

    Ok(NGramModel {
        order,
        alpha,
        interp_weights: interp_weights.to_vec(),
        vocab,
        vocab_index,
        counts,
    })
}

impl NGramModel {
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn order_context<'a>(&self, context: &'a [String], j: usize) -> &'a [String] {
        let ctx_len = (j - 1).min(context.len());
        &context[context.len() - ctx_len..]
    }

    /// P(token | context) under the interpolated add-α formula. Tokens
    /// outside the vocabulary get the zero-count smoothed mass, so the value
    /// is always finite and positive.
    pub fn token_prob(&self, context: &[String], token: &str) -> f64 {
        let id = self.vocab_index.get(token);
        let v = self.vocab.len() as f64;
        let mut p = 0.0;
        for j in 1..=self.order {
            let ctx = self.order_context(context, j);
            let (count, total) = match self.counts[j - 1].get(ctx) {
                Some(entry) => (
                    id.and_then(|id| entry.tokens.get(id)).copied().unwrap_or(0),
                    entry.total,
                ),
                None => (0, 0),
            };
            p += self.interp_weights[j - 1] * (count as f64 + self.alpha)
                / (total as f64 + self.alpha * v);
        }
        p
    }

    /// Full next-token distribution over the sorted vocabulary; sums to 1
    /// within 1e-9.
    pub fn next_token_dist(&self, context: &[String]) -> Vec<f64> {
        let v = self.vocab.len() as f64;
        let mut dist = vec![0.0; self.vocab.len()];
        for j in 1..=self.order {
            let ctx = self.order_context(context, j);
            let weight = self.interp_weights[j - 1];
            if weight == 0.0 {
                continue;
            }
            match self.counts[j - 1].get(ctx) {
                Some(entry) => {
                    let denom = entry.total as f64 + self.alpha * v;
                    let base = weight * self.alpha / denom;
                    for p in dist.iter_mut() {
                        *p += base;
                    }
                    for (&id, &count) in &entry.tokens {
                        dist[id] += weight * count as f64 / denom;
                    }
                }
                None => {
                    let base = weight / v;
                    for p in dist.iter_mut() {
                        *p += base;
                    }
                }
            }
        }
        dist
    }

    /// Content hash over the canonical serialized form.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        format!("{:x}", hasher.finalize())
    }

    /// Self-describing JSON serialization with a mandatory version field and
    /// canonically sorted count tables.
    pub fn to_json(&self) -> String {
        let counts: Vec<Vec<(Vec<String>, Vec<(usize, u64)>)>> = self
            .counts
            .iter()
            .map(|table| {
                let mut rows: Vec<(Vec<String>, Vec<(usize, u64)>)> = table
                    .iter()
                    .map(|(ctx, entry)| {
                        let mut tokens: Vec<(usize, u64)> =
                            entry.tokens.iter().map(|(&k, &v)| (k, v)).collect();
                        tokens.sort_unstable();
                        (ctx.clone(), tokens)
                    })
                    .collect();
                rows.sort();
                rows
            })
            .collect();
        let ser = SerializedModel {
            format_version: MODEL_FORMAT_VERSION,
            order: self.order,
            alpha: self.alpha,
            interp_weights: self.interp_weights.clone(),
            vocab: self.vocab.clone(),
            counts,
        };
        serde_json::to_string(&ser).expect("serializing model")
    }

    pub fn from_json(json: &str) -> Result<Self, GeneratorError> {
        let ser: SerializedModel = serde_json::from_str(json).map_err(|e| {
            GeneratorError::ModelIo {
                path: "<json>".into(),
                message: e.to_string(),
            }
        })?;
        if ser.format_version != MODEL_FORMAT_VERSION {
            return Err(GeneratorError::ModelIo {
                path: "<json>".into(),
                message: format!("unsupported model format version {}", ser.format_version),
            });
        }
        check_params(ser.order, ser.alpha, &ser.interp_weights)?;
        let vocab_index: HashMap<String, usize> = ser
            .vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let counts = ser
            .counts
            .into_iter()
            .map(|rows| {
                rows.into_iter()
                    .map(|(ctx, tokens)| {
                        let total = tokens.iter().map(|(_, c)| c).sum();
                        (
                            ctx,
                            ContextCounts {
                                tokens: tokens.into_iter().collect(),
                                total,
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            order: ser.order,
            alpha: ser.alpha,
            interp_weights: ser.interp_weights,
            vocab: ser.vocab,
            vocab_index,
            counts,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), GeneratorError> {
        std::fs::write(path, self.to_json()).map_err(|e| GeneratorError::ModelIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let json = std::fs::read_to_string(path).map_err(|e| GeneratorError::ModelIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&json)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SerializedModel {
    format_version: u32,
    order: usize,
    alpha: f64,
    interp_weights: Vec<f64>,
    vocab: Vec<String>,
    counts: Vec<Vec<(Vec<String>, Vec<(usize, u64)>)>>,
}

/// Mean next-token negative log-likelihood in nats per token, including the
/// EOS position of every chunk.
pub fn cross_entropy(model: &NGramModel, dataset: &[Chunk]) -> Result<f64, GeneratorError> {
    let mut total = 0.0;
    let mut positions = 0usize;
    for chunk in dataset {
        if chunk.is_empty() {
            continue;
        }
        let mut seq = chunk.tokens.clone();
        seq.push(EOS.to_string());
        for i in 0..seq.len() {
            total += -model.token_prob(&seq[..i], &seq[i]).ln();
            positions += 1;
        }
    }
    if positions == 0 {
        return Err(GeneratorError::EmptyDataset);
    }
    Ok(total / positions as f64)
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GenerationConfig {
    pub max_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Token that terminates generation.
    pub stop_on: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_tokens: 4000,
            temperature: 1.0,
            seed: 0,
            stop_on: EOS.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Eos,
    MaxTokens,
}

/// Autoregressive sampling with temperature as logit scaling (p^(1/T),
/// renormalized). T = 0 is argmax; the sorted vocabulary makes the tie-break
/// lexicographic. Unknown prompt tokens simply shorten the usable context.
pub fn generate(
    model: &NGramModel,
    prompt: &[String],
    config: &GenerationConfig,
) -> (Vec<String>, Termination) {
    assert!(config.max_tokens >= 1, "max_tokens must be >= 1");
    assert!(config.temperature >= 0.0, "temperature must be >= 0");
    let mut rng = seeding::rng(config.seed);
    let mut history: Vec<String> = prompt.to_vec();
    let mut output = Vec::new();
    for _ in 0..config.max_tokens {
        let dist = model.next_token_dist(&history);
        let index = if config.temperature == 0.0 {
            dist.iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        } else {
            sample_index(&dist, 1.0 / config.temperature, &mut rng)
        };
        let token = model.vocab[index].clone();
        if token == config.stop_on {
            return (output, Termination::Eos);
        }
        history.push(token.clone());
        output.push(token);
    }
    (output, Termination::MaxTokens)
}

fn sample_index(dist: &[f64], inv_temp: f64, rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    use rand_chacha::rand_core::RngCore;
    let scaled: Vec<f64> = dist.iter().map(|p| p.powf(inv_temp)).collect();
    let total: f64 = scaled.iter().sum();
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * total;
    let mut acc = 0.0;
    for (i, w) in scaled.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    scaled.len() - 1
}
