//! Post-processing of generated JSON text: sanitization of forbidden
//! codepoints, prefix detection, truncation-based repair of incomplete
//! documents, and strict validation.
//!
//! Repair policy: cut at the last complete value at any depth (or the last
//! container opening, whichever is later), dropping any dangling key, colon,
//! partial literal or trailing comma, then close every open container in
//! LIFO order. Partial string literals are never auto-closed; they are
//! dropped together with their key.

mod scanner;
mod validate;

pub use scanner::{
    scan_partial, ContainerFrame, ContainerKind, ContainerState, PartialJsonScan, ScanStatus,
};
pub use validate::{validate, ValidationError};

use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SanitizeAction {
    Strip,
    Error,
}

/// Which codepoints are treated as generation artifacts.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SanitizeConfig {
    pub forbidden_codepoints: BTreeSet<char>,
    pub action: SanitizeAction,
}

impl Default for SanitizeConfig {
    fn default() -> Self {
        Self {
            forbidden_codepoints: BTreeSet::from(['\u{200B}']),
            action: SanitizeAction::Strip,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error("forbidden codepoint U+{codepoint:04X} at byte offset {offset}")]
    ForbiddenCodepoint { codepoint: u32, offset: usize },
}

/// Remove forbidden codepoints everywhere, including inside string literals.
/// Returns the cleaned text and the byte offsets (in the original text) of
/// each removed codepoint, in order.
pub fn sanitize(text: &str, config: &SanitizeConfig) -> Result<(String, Vec<usize>), RepairError> {
    let mut out = String::with_capacity(text.len());
    let mut removed = Vec::new();
    for (offset, ch) in text.char_indices() {
        if config.forbidden_codepoints.contains(&ch) {
            if config.action == SanitizeAction::Error {
                return Err(RepairError::ForbiddenCodepoint {
                    codepoint: ch as u32,
                    offset,
                });
            }
            removed.push(offset);
        } else {
            out.push(ch);
        }
    }
    Ok((out, removed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStatus {
    ValidAsIs,
    Repaired,
    Unrepairable,
}

/// Edit log for one repair: where codepoints were stripped, where the text
/// was cut, and what was appended. Offsets are bytes.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct RepairEdits {
    pub sanitized_positions: Vec<usize>,
    pub truncation_offset: Option<usize>,
    pub appended_closers: String,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RepairOutcome {
    pub status: RepairStatus,
    pub output: Option<String>,
    pub edits: RepairEdits,
    pub scan: PartialJsonScan,
}

/// Sanitize, scan, and if the input is a proper prefix of valid JSON, repair
/// it into a parseable document. Idempotent: repairing a repaired output
/// returns it unchanged with status `ValidAsIs`.
pub fn repair(text: &str, config: &SanitizeConfig) -> Result<RepairOutcome, RepairError> {
    let (clean, sanitized_positions) = sanitize(text, config)?;
    let scan = scan_partial(&clean);
    let outcome = match scan.status {
        ScanStatus::Complete => RepairOutcome {
            status: RepairStatus::ValidAsIs,
            output: Some(clean),
            edits: RepairEdits {
                sanitized_positions,
                ..Default::default()
            },
            scan,
        },
        ScanStatus::NotAPrefix => RepairOutcome {
            status: RepairStatus::Unrepairable,
            output: None,
            edits: RepairEdits {
                sanitized_positions,
                ..Default::default()
            },
            scan,
        },
        ScanStatus::Prefix => {
            if scan.safe_point == 0 {
                // nothing recoverable (e.g. whitespace only, bare `tru`)
                RepairOutcome {
                    status: RepairStatus::Unrepairable,
                    output: None,
                    edits: RepairEdits {
                        sanitized_positions,
                        ..Default::default()
                    },
                    scan,
                }
            } else {
                let closers: String = scan
                    .stack_at_safe_point
                    .iter()
                    .rev()
                    .map(|kind| match kind {
                        ContainerKind::Object => '}',
                        ContainerKind::Array => ']',
                    })
                    .collect();
                let mut output = clean[..scan.safe_point].to_string();
                output.push_str(&closers);
                debug_assert!(validate(&output).is_ok());
                RepairOutcome {
                    status: RepairStatus::Repaired,
                    output: Some(output),
                    edits: RepairEdits {
                        sanitized_positions,
                        truncation_offset: Some(scan.safe_point),
                        appended_closers: closers,
                    },
                    scan,
                }
            }
        }
    };
    Ok(outcome)
}
