//! Corpus handling: import or synthesis of DSL-JSON documents, placeholder
//! anonymization, lossless tokenization, fixed-size chunking, and the seeded
//! double 80:20 train/eval/test split.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("file {0} is not valid UTF-8")]
    InvalidUtf8(String),
    #[error("directory {0} contains no .json files")]
    EmptyDirectory(String),
    #[error("document {id} is not valid JSON: {source}")]
    NotJson {
        id: String,
        source: serde_json::Error,
    },
    #[error("invalid anonymization rule: {0}")]
    BadRule(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("need at least {needed} chunks to populate all three splits, got {got}")]
    TooFewChunks { needed: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Customer,
    Test,
}

/// One corpus file: a single JSON object plus provenance.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub source_tag: SourceTag,
    pub text: String,
}

/// Fraction of documents tagged as customer-project sources.
pub fn customer_share(docs: &[RawDocument]) -> f64 {
    if docs.is_empty() {
        return 0.0;
    }
    let customers = docs
        .iter()
        .filter(|d| d.source_tag == SourceTag::Customer)
        .count();
    customers as f64 / docs.len() as f64
}

/// Read every `.json` file in `directory` (except `manifest.json`) as one
/// document; ids are file stems, source tags come from an optional
/// `manifest.json` map of id to tag (default: customer). Ordering is
/// deterministic by id.
pub fn import_corpus(directory: &Path) -> Result<Vec<RawDocument>, CorpusError> {
    let read_dir = fs::read_dir(directory).map_err(|source| CorpusError::Io {
        path: directory.display().to_string(),
        source,
    })?;

    let manifest_path = directory.join("manifest.json");
    let mut tags: HashMap<String, SourceTag> = HashMap::new();
    if manifest_path.is_file() {
        let raw = fs::read_to_string(&manifest_path).map_err(|source| CorpusError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
        tags = serde_json::from_str(&raw).map_err(|source| CorpusError::NotJson {
            id: "manifest.json".into(),
            source,
        })?;
    }

    let mut docs = Vec::new();
    for entry in read_dir {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: directory.display().to_string(),
            source,
        })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json")
            || path.file_name().and_then(|n| n.to_str()) == Some("manifest.json")
        {
            continue;
        }
        let bytes = fs::read(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CorpusError::InvalidUtf8(path.display().to_string()))?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let source_tag = tags.get(&id).copied().unwrap_or(SourceTag::Customer);
        docs.push(RawDocument {
            id,
            source_tag,
            text,
        });
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyDirectory(directory.display().to_string()));
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}

const CUSTOMER_CONTEXTS: &[&str] = &["Billing", "Shipping", "Ordering", "Inventory", "Payments"];
const CUSTOMER_NOUNS: &[&str] = &[
    "Invoice", "Shipment", "Order", "Customer", "Account", "Ledger", "Warehouse", "Carrier",
    "Contract", "Tariff",
];
const TEST_CONTEXTS: &[&str] = &["Sandbox", "Playground", "Sample"];
const TEST_NOUNS: &[&str] = &[
    "Widget", "Gadget", "Thing", "Item", "Fixture", "Mock", "Probe", "Dummy",
];
const FIELD_TYPES: &[&str] = &["String", "Integer", "Decimal", "Boolean", "Date", "Reference"];

fn pick<'a>(rng: &mut rand_chacha::ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[seeding::uniform_index(rng, items.len() as u64) as usize]
}

fn synth_document(rng: &mut rand_chacha::ChaCha8Rng, tag: SourceTag, index: usize) -> String {
    let (contexts, nouns) = match tag {
        SourceTag::Customer => (CUSTOMER_CONTEXTS, CUSTOMER_NOUNS),
        SourceTag::Test => (TEST_CONTEXTS, TEST_NOUNS),
    };
    let context = pick(rng, contexts);
    let mut text = String::new();
    let _ = write!(
        text,
        "{{\n  \"context\": {{\n    \"name\": \"{context}Context\",\n    \"version\": {},\n    \"owner\": \"Team {}\"\n  }},\n  \"aggregates\": [",
        1 + seeding::uniform_index(rng, 9),
        pick(rng, nouns),
    );
    let n_aggregates = 1 + seeding::uniform_index(rng, 3) as usize;
    for a in 0..n_aggregates {
        if a > 0 {
            text.push(',');
        }
        let agg = pick(rng, nouns);
        let _ = write!(
            text,
            "\n    {{\n      \"name\": \"{agg}Aggregate\",\n      \"root\": \"{agg}\",\n      \"entities\": ["
        );
        let n_entities = 1 + seeding::uniform_index(rng, 3) as usize;
        for e in 0..n_entities {
            if e > 0 {
                text.push(',');
            }
            let entity = pick(rng, nouns);
            let _ = write!(
                text,
                "\n        {{\n          \"name\": \"{entity}\",\n          \"identity\": \"{entity}Id\",\n          \"fields\": ["
            );
            let n_fields = 1 + seeding::uniform_index(rng, 4) as usize;
            for f in 0..n_fields {
                if f > 0 {
                    text.push(',');
                }
                let field = pick(rng, nouns);
                let ty = pick(rng, FIELD_TYPES);
                let _ = write!(
                    text,
                    "\n            {{ \"name\": \"{}{field}\", \"type\": \"{ty}\", \"required\": {} }}",
                    field.to_lowercase(),
                    seeding::uniform_index(rng, 2) == 0,
                );
            }
            text.push_str("\n          ]\n        }");
        }
        text.push_str("\n      ]\n    }");
    }
    let _ = write!(
        text,
        "\n  ],\n  \"revision\": {}\n}}",
        index + 1
    );
    text
}

/// Generate a synthetic corpus standing in for the confidential dataset:
/// hierarchically structured domain-model JSON with two source projects that
/// differ in key vocabulary. Deterministic per seed.
pub fn synthesize_corpus(
    n_docs: usize,
    customer_fraction: f64,
    seed: u64,
) -> Result<Vec<RawDocument>, CorpusError> {
    if n_docs == 0 {
        return Err(CorpusError::BadParam("n_docs must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&customer_fraction) {
        return Err(CorpusError::BadParam(
            "customer_fraction must be in [0, 1]".into(),
        ));
    }
    let n_customer = (n_docs as f64 * customer_fraction).round() as usize;
    let mut docs = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let tag = if i < n_customer {
            SourceTag::Customer
        } else {
            SourceTag::Test
        };
        let mut rng = seeding::rng(seeding::derive_seed(seed, i as u64));
        let width = n_docs.to_string().len();
        docs.push(RawDocument {
            id: format!("doc{i:0width$}"),
            source_tag: tag,
            text: synth_document(&mut rng, tag, i),
        });
    }
    Ok(docs)
}

/// One key-path glob plus the placeholder template it maps values to.
/// Globs are dot-separated segments; `*` matches one segment, `**` any run
/// of segments. Array elements inherit their parent path. Templates contain
/// exactly one `{n}` counter slot.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct KeyPattern {
    pub glob: String,
    pub template: String,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AnonymizationRules {
    pub key_patterns: Vec<KeyPattern>,
    /// When set, equal original values always map to the same placeholder.
    pub stable_mapping: bool,
}

fn glob_matches(pattern: &[&str], path: &[&str]) -> bool {
    match (pattern.first(), path.first()) {
        (None, None) => true,
        (Some(&"**"), _) => {
            glob_matches(&pattern[1..], path)
                || (!path.is_empty() && glob_matches(pattern, &path[1..]))
        }
        (Some(&seg), Some(&head)) if seg == "*" || seg == head => {
            glob_matches(&pattern[1..], &path[1..])
        }
        _ => false,
    }
}

struct RuleState<'a> {
    pattern: Vec<&'a str>,
    prefix: &'a str,
    suffix: &'a str,
    counter: usize,
    mapping: HashMap<String, String>,
}

impl RuleState<'_> {
    fn is_placeholder(&self, value: &str) -> bool {
        value.len() > self.prefix.len() + self.suffix.len()
            && value.starts_with(self.prefix)
            && value.ends_with(self.suffix)
            && value[self.prefix.len()..value.len() - self.suffix.len()]
                .bytes()
                .all(|b| b.is_ascii_digit())
    }

    fn placeholder_for(&mut self, original: &str, stable: bool) -> String {
        if stable {
            if let Some(existing) = self.mapping.get(original) {
                return existing.clone();
            }
        }
        self.counter += 1;
        let placeholder = format!("{}{}{}", self.prefix, self.counter, self.suffix);
        if stable {
            self.mapping
                .insert(original.to_string(), placeholder.clone());
        }
        placeholder
    }
}

fn walk_anonymize(
    value: &mut Value,
    path: &mut Vec<String>,
    rules: &mut [RuleState<'_>],
    stable: bool,
) {
    match value {
        Value::Object(map) => {
            for (key, child) in map.iter_mut() {
                path.push(key.clone());
                let segments: Vec<&str> = path.iter().map(String::as_str).collect();
                let mut replaced = false;
                if let Value::String(s) = child {
                    for rule in rules.iter_mut() {
                        if glob_matches(&rule.pattern, &segments) {
                            if !rule.is_placeholder(s) {
                                *child = Value::String(rule.placeholder_for(s, stable));
                            }
                            replaced = true;
                            break;
                        }
                    }
                }
                if !replaced {
                    walk_anonymize(child, path, rules, stable);
                }
                path.pop();
            }
        }
        Value::Array(items) => {
            for item in items.iter_mut() {
                walk_anonymize(item, path, rules, stable);
            }
        }
        _ => {}
    }
}

/// Replace string values under matching key paths with placeholders.
/// Idempotent: values already in placeholder form are left unchanged.
pub fn anonymize(
    doc: &RawDocument,
    rules: &AnonymizationRules,
) -> Result<RawDocument, CorpusError> {
    let mut states = Vec::with_capacity(rules.key_patterns.len());
    for kp in &rules.key_patterns {
        if kp.glob.is_empty() || kp.glob.split('.').any(str::is_empty) {
            return Err(CorpusError::BadRule(format!("malformed glob {:?}", kp.glob)));
        }
        let slots = kp.template.matches("{n}").count();
        if slots != 1 {
            return Err(CorpusError::BadRule(format!(
                "template {:?} must contain exactly one {{n}} slot",
                kp.template
            )));
        }
        let (prefix, suffix) = kp.template.split_once("{n}").unwrap();
        states.push(RuleState {
            pattern: kp.glob.split('.').collect(),
            prefix,
            suffix,
            counter: 0,
            mapping: HashMap::new(),
        });
    }

    let mut value: Value =
        serde_json::from_str(&doc.text).map_err(|source| CorpusError::NotJson {
            id: doc.id.clone(),
            source,
        })?;
    let mut path = Vec::new();
    walk_anonymize(&mut value, &mut path, &mut states, rules.stable_mapping);
    Ok(RawDocument {
        id: doc.id.clone(),
        source_tag: doc.source_tag,
        text: serde_json::to_string_pretty(&value).expect("serializing JSON value"),
    })
}

/// Lossless token stream: concatenating `tokens` reproduces the source text
/// byte for byte.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    pub doc_id: String,
}

/// Segment text into string literals, numbers, identifier/word runs,
/// whitespace runs, and single punctuation characters. Total on valid UTF-8.
pub fn tokenize(text: &str) -> TokenStream {
    tokenize_doc(text, String::new())
}

pub fn tokenize_doc(text: &str, doc_id: String) -> TokenStream {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c == '"' {
            // string literal piece, through the closing unescaped quote
            i += 1;
            let mut escape = false;
            while i < chars.len() {
                let d = chars[i];
                i += 1;
                if escape {
                    escape = false;
                } else if d == '\\' {
                    escape = true;
                } else if d == '"' {
                    break;
                }
            }
        } else if c.is_whitespace() {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || matches!(chars[i], '.' | 'e' | 'E')
                    || (matches!(chars[i], '+' | '-')
                        && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
        } else if c.is_alphanumeric() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
        } else {
            i += 1;
        }
        tokens.push(chars[start..i].iter().collect());
    }
    TokenStream { tokens, doc_id }
}

/// Inverse of [`tokenize`]: plain concatenation.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.concat()
}

/// A non-overlapping fixed-size slice of one token stream.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Chunk {
    pub tokens: Vec<String>,
    pub doc_ids: Vec<String>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Chunking result; a final remainder shorter than `min_tail` is dropped and
/// reported in `dropped_tokens`.
#[derive(Clone, Debug, Default)]
pub struct Chunking {
    pub chunks: Vec<Chunk>,
    pub dropped_tokens: usize,
}

/// Slice a stream into consecutive non-overlapping chunks of `chunk_size`
/// tokens; the remainder is kept iff it holds at least `min_tail` tokens.
pub fn chunk(stream: &TokenStream, chunk_size: usize, min_tail: usize) -> Chunking {
    assert!(chunk_size >= 1, "chunk_size must be >= 1");
    assert!(min_tail <= chunk_size, "min_tail must be <= chunk_size");
    let mut result = Chunking::default();
    for slice in stream.tokens.chunks(chunk_size) {
        if slice.len() == chunk_size || slice.len() >= min_tail.max(1) {
            result.chunks.push(Chunk {
                tokens: slice.to_vec(),
                doc_ids: vec![stream.doc_id.clone()],
            });
        } else {
            result.dropped_tokens += slice.len();
        }
    }
    result
}

/// The seeded 64/16/20 double split.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SplitDataset {
    pub train: Vec<Chunk>,
    pub eval: Vec<Chunk>,
    pub test: Vec<Chunk>,
    pub seed: u64,
    /// The two 80:20 cut ratios applied in sequence.
    pub ratios: (f64, f64),
    pub chunk_size: Option<usize>,
}

/// Shuffle chunks with the seeded Fisher–Yates generator documented in
/// [`crate::seeding`], then apply the double 80:20 split: the first cut at
/// the nearest integer to 0.8·n separates the test set, the second at the
/// nearest integer to 0.8 of the remainder separates eval from train.
pub fn shuffle_split(chunks: &[Chunk], seed: u64) -> Result<SplitDataset, CorpusError> {
    if chunks.len() < 5 {
        return Err(CorpusError::TooFewChunks {
            needed: 5,
            got: chunks.len(),
        });
    }
    let mut shuffled = chunks.to_vec();
    seeding::fisher_yates(&mut shuffled, &mut seeding::rng(seed));

    let n = shuffled.len();
    let first_cut = (0.8 * n as f64).round() as usize;
    let test = shuffled.split_off(first_cut);
    let second_cut = (0.8 * shuffled.len() as f64).round() as usize;
    let eval = shuffled.split_off(second_cut);
    let train = shuffled;
    if train.is_empty() || eval.is_empty() || test.is_empty() {
        return Err(CorpusError::TooFewChunks { needed: 5, got: n });
    }
    Ok(SplitDataset {
        train,
        eval,
        test,
        seed,
        ratios: (0.8, 0.8),
        chunk_size: None,
    })
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub ratios: (f64, f64),
    pub chunk_size: Option<usize>,
    pub version: String,
    pub counts: BTreeMap<String, usize>,
}

fn split_lines(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    for chunk in chunks {
        out.push_str(&serde_json::to_string(&chunk.tokens).expect("serializing token list"));
        out.push('\n');
    }
    out
}

/// Write `train.jsonl` / `eval.jsonl` / `test.jsonl` (one JSON array of token
/// strings per line) plus a manifest; returns the version tag, a SHA-256
/// content hash over the three files.
pub fn export_dataset(split: &SplitDataset, directory: &Path) -> Result<String, CorpusError> {
    fs::create_dir_all(directory).map_err(|source| CorpusError::Io {
        path: directory.display().to_string(),
        source,
    })?;
    let mut hasher = Sha256::new();
    let mut counts = BTreeMap::new();
    for (name, chunks) in [
        ("train", &split.train),
        ("eval", &split.eval),
        ("test", &split.test),
    ] {
        let body = split_lines(chunks);
        hasher.update(body.as_bytes());
        counts.insert(name.to_string(), chunks.len());
        let path = directory.join(format!("{name}.jsonl"));
        fs::write(&path, body).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    let version = format!("{:x}", hasher.finalize());
    let manifest = DatasetManifest {
        seed: split.seed,
        ratios: split.ratios,
        chunk_size: split.chunk_size,
        version: version.clone(),
        counts,
    };
    let path = directory.join("manifest.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("serializing manifest"),
    )
    .map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(version)
}

/// Read back a dataset exported by [`export_dataset`]. Chunk provenance is
/// not stored in the line format, so `doc_ids` come back empty.
pub fn import_dataset(directory: &Path) -> Result<SplitDataset, CorpusError> {
    let manifest_path = directory.join("manifest.json");
    let raw = fs::read_to_string(&manifest_path).map_err(|source| CorpusError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&raw).map_err(|source| CorpusError::NotJson {
            id: "manifest.json".into(),
            source,
        })?;
    let mut splits: Vec<Vec<Chunk>> = Vec::new();
    for name in ["train", "eval", "test"] {
        let path = directory.join(format!("{name}.jsonl"));
        let body = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut chunks = Vec::new();
        for line in body.lines() {
            let tokens: Vec<String> =
                serde_json::from_str(line).map_err(|source| CorpusError::NotJson {
                    id: path.display().to_string(),
                    source,
                })?;
            chunks.push(Chunk {
                tokens,
                doc_ids: Vec::new(),
            });
        }
        splits.push(chunks);
    }
    let test = splits.pop().unwrap();
    let eval = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(SplitDataset {
        train,
        eval,
        test,
        seed: manifest.seed,
        ratios: manifest.ratios,
        chunk_size: manifest.chunk_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repair;

    #[test]
    fn synthesize_respects_count_tag_mix_and_validity() {
        let docs = synthesize_corpus(10, 0.8, 7).unwrap();
        assert_eq!(docs.len(), 10);
        let customers = docs
            .iter()
            .filter(|d| d.source_tag == SourceTag::Customer)
            .count();
        assert_eq!(customers, 8);
        for doc in &docs {
            assert!(
                repair::validate(&doc.text).is_ok(),
                "doc {} is not strict JSON",
                doc.id
            );
            assert!(doc.text.is_ascii());
        }
    }

    #[test]
    fn synthesize_is_deterministic() {
        let a = synthesize_corpus(20, 0.5, 3).unwrap();
        let b = synthesize_corpus(20, 0.5, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.text, y.text);
            assert_eq!(x.id, y.id);
        }
        let c = synthesize_corpus(20, 0.5, 4).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.text != y.text));
    }

    #[test]
    fn synthesize_rejects_bad_params() {
        assert!(synthesize_corpus(0, 0.5, 1).is_err());
        assert!(synthesize_corpus(5, 1.5, 1).is_err());
    }

    #[test]
    fn import_reads_files_with_manifest_tags() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), "{\"x\": 1}").unwrap();
        fs::write(dir.path().join("b.json"), "{\"y\": 2}").unwrap();
        fs::write(
            dir.path().join("manifest.json"),
            "{\"a\": \"customer\", \"b\": \"test\"}",
        )
        .unwrap();
        let docs = import_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "a");
        assert_eq!(docs[0].source_tag, SourceTag::Customer);
        assert_eq!(docs[1].source_tag, SourceTag::Test);
    }

    #[test]
    fn customer_share_matches_manifest_ratio() {
        // 821 of 1022 tagged customer, as in a corpus with an 80% project bias
        let mut docs = Vec::new();
        for i in 0..1022 {
            docs.push(RawDocument {
                id: format!("d{i}"),
                source_tag: if i < 821 {
                    SourceTag::Customer
                } else {
                    SourceTag::Test
                },
                text: "{}".into(),
            });
        }
        let share = customer_share(&docs);
        assert!((share - 0.8033).abs() < 1e-3);
    }

    #[test]
    fn import_rejects_invalid_utf8_naming_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.json"), [0x7b, 0xff, 0x7d]).unwrap();
        let err = import_corpus(dir.path()).unwrap_err();
        match err {
            CorpusError::InvalidUtf8(path) => assert!(path.contains("bad.json")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn import_rejects_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            import_corpus(dir.path()),
            Err(CorpusError::EmptyDirectory(_))
        ));
    }

    fn name_rules(stable: bool) -> AnonymizationRules {
        AnonymizationRules {
            key_patterns: vec![KeyPattern {
                glob: "**.name".into(),
                template: "NAME_{n}".into(),
            }],
            stable_mapping: stable,
        }
    }

    #[test]
    fn anonymize_single_substitution() {
        let doc = RawDocument {
            id: "d".into(),
            source_tag: SourceTag::Test,
            text: "{\"name\":\"AcmeCorp\"}".into(),
        };
        let rules = AnonymizationRules {
            key_patterns: vec![KeyPattern {
                glob: "name".into(),
                template: "NAME_{n}".into(),
            }],
            stable_mapping: true,
        };
        let out = anonymize(&doc, &rules).unwrap();
        let value: Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(value["name"], "NAME_1");
    }

    #[test]
    fn anonymize_stable_mapping_reuses_placeholders() {
        let doc = RawDocument {
            id: "d".into(),
            source_tag: SourceTag::Test,
            text: "{\"a\":{\"name\":\"AcmeCorp\"},\"b\":{\"name\":\"AcmeCorp\"}}".into(),
        };
        let out = anonymize(&doc, &name_rules(true)).unwrap();
        let value: Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(value["a"]["name"], "NAME_1");
        assert_eq!(value["b"]["name"], "NAME_1");
    }

    #[test]
    fn anonymize_is_idempotent() {
        let doc = RawDocument {
            id: "d".into(),
            source_tag: SourceTag::Test,
            text: "{\"a\":{\"name\":\"Acme\"},\"b\":{\"name\":\"Globex\"}}".into(),
        };
        let once = anonymize(&doc, &name_rules(true)).unwrap();
        let twice = anonymize(&once, &name_rules(true)).unwrap();
        assert_eq!(once.text, twice.text);
    }

    #[test]
    fn anonymize_rejects_malformed_rules() {
        let doc = RawDocument {
            id: "d".into(),
            source_tag: SourceTag::Test,
            text: "{}".into(),
        };
        let no_slot = AnonymizationRules {
            key_patterns: vec![KeyPattern {
                glob: "name".into(),
                template: "NAME".into(),
            }],
            stable_mapping: false,
        };
        assert!(matches!(
            anonymize(&doc, &no_slot),
            Err(CorpusError::BadRule(_))
        ));
        let bad_glob = AnonymizationRules {
            key_patterns: vec![KeyPattern {
                glob: "a..b".into(),
                template: "X{n}".into(),
            }],
            stable_mapping: false,
        };
        assert!(matches!(
            anonymize(&doc, &bad_glob),
            Err(CorpusError::BadRule(_))
        ));
    }

    #[test]
    fn anonymize_rejects_non_json_input() {
        let doc = RawDocument {
            id: "d".into(),
            source_tag: SourceTag::Test,
            text: "not json".into(),
        };
        assert!(matches!(
            anonymize(&doc, &name_rules(false)),
            Err(CorpusError::NotJson { .. })
        ));
    }

    #[test]
    fn tokenize_splits_into_expected_classes() {
        let stream = tokenize("{\"a\": 1}");
        let expected: Vec<String> = ["{", "\"a\"", ":", " ", "1", "}"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(stream.tokens, expected);
    }

    #[test]
    fn tokenize_empty_string_is_empty_stream() {
        assert!(tokenize("").tokens.is_empty());
    }

    #[test]
    fn tokenize_roundtrips_synthesized_docs() {
        for doc in synthesize_corpus(5, 0.6, 11).unwrap() {
            let stream = tokenize(&doc.text);
            assert_eq!(detokenize(&stream.tokens), doc.text);
        }
    }

    #[test]
    fn chunk_arithmetic() {
        let stream = TokenStream {
            tokens: (0..5000).map(|i| i.to_string()).collect(),
            doc_id: "d".into(),
        };
        let result = chunk(&stream, 2048, 64);
        let lengths: Vec<usize> = result.chunks.iter().map(Chunk::len).collect();
        assert_eq!(lengths, vec![2048, 2048, 904]);
        assert_eq!(result.dropped_tokens, 0);
    }

    #[test]
    fn chunk_exact_boundary_has_no_remainder() {
        let stream = TokenStream {
            tokens: (0..2048).map(|i| i.to_string()).collect(),
            doc_id: "d".into(),
        };
        let result = chunk(&stream, 2048, 64);
        assert_eq!(result.chunks.len(), 1);
        assert_eq!(result.dropped_tokens, 0);
    }

    #[test]
    fn chunk_short_tail_is_dropped_and_accounted() {
        let stream = TokenStream {
            tokens: (0..2100).map(|i| i.to_string()).collect(),
            doc_id: "d".into(),
        };
        let result = chunk(&stream, 2048, 64);
        assert_eq!(result.chunks.len(), 1);
        assert_eq!(result.dropped_tokens, 52);
        let kept: usize = result.chunks.iter().map(Chunk::len).sum();
        assert_eq!(kept + result.dropped_tokens, 2100);
    }

    fn unit_chunks(n: usize) -> Vec<Chunk> {
        (0..n)
            .map(|i| Chunk {
                tokens: vec![i.to_string()],
                doc_ids: vec![],
            })
            .collect()
    }

    #[test]
    fn split_sizes_for_1000_chunks() {
        let split = shuffle_split(&unit_chunks(1000), 9).unwrap();
        assert_eq!(split.train.len(), 640);
        assert_eq!(split.eval.len(), 160);
        assert_eq!(split.test.len(), 200);
    }

    #[test]
    fn split_sizes_for_5_chunks() {
        let split = shuffle_split(&unit_chunks(5), 9).unwrap();
        assert_eq!(
            (split.train.len(), split.eval.len(), split.test.len()),
            (3, 1, 1)
        );
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let chunks = unit_chunks(97);
        let a = shuffle_split(&chunks, 5).unwrap();
        let b = shuffle_split(&chunks, 5).unwrap();
        let members = |s: &SplitDataset| {
            (
                s.train.iter().map(|c| c.tokens.clone()).collect::<Vec<_>>(),
                s.eval.iter().map(|c| c.tokens.clone()).collect::<Vec<_>>(),
                s.test.iter().map(|c| c.tokens.clone()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(members(&a), members(&b));
        let mut all: Vec<String> = a
            .train
            .iter()
            .chain(&a.eval)
            .chain(&a.test)
            .map(|c| c.tokens[0].clone())
            .collect();
        all.sort_by_key(|t| t.parse::<usize>().unwrap());
        let expected: Vec<String> = (0..97).map(|i| i.to_string()).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn split_rejects_too_few_chunks() {
        assert!(matches!(
            shuffle_split(&unit_chunks(4), 1),
            Err(CorpusError::TooFewChunks { .. })
        ));
    }

    #[test]
    fn export_version_is_content_sensitive_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let mut split = shuffle_split(&unit_chunks(10), 3).unwrap();
        let tag1 = export_dataset(&split, dir.path()).unwrap();
        let tag2 = export_dataset(&split, dir.path()).unwrap();
        assert_eq!(tag1, tag2);

        let loaded = import_dataset(dir.path()).unwrap();
        assert_eq!(loaded.train.len(), split.train.len());
        assert_eq!(loaded.seed, split.seed);

        split.train[0].tokens[0] = "flipped".into();
        let tag3 = export_dataset(&split, dir.path()).unwrap();
        assert_ne!(tag1, tag3);
    }

    #[test]
    fn exported_line_counts_match_chunk_counts() {
        let dir = tempfile::tempdir().unwrap();
        let split = shuffle_split(&unit_chunks(20), 3).unwrap();
        export_dataset(&split, dir.path()).unwrap();
        for (name, chunks) in [
            ("train", &split.train),
            ("eval", &split.eval),
            ("test", &split.test),
        ] {
            let body = fs::read_to_string(dir.path().join(format!("{name}.jsonl"))).unwrap();
            assert_eq!(body.lines().count(), chunks.len());
        }
    }
}
