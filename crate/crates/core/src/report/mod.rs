//! Merging findings and attestations into a total compliance report.

pub mod registry;
mod render;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use render::{canonical_json, format_float, render, render_json, render_text, Format};

use crate::finding::{Finding, RecId, Status};
use crate::manifest::AttestationRecord;
use registry::{RecMode, RecRegistry};

pub const SCHEMA_VERSION: &str = "dds-report/1";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReportError {
    #[error("registry violation for REC {rec}: {reason}")]
    RegistryViolation { rec: u8, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub rec_id: RecId,
    pub title: String,
    pub area: String,
    pub mode: RecMode,
    /// Worst of the automated and attested halves.
    pub status: Status,
    /// `None` when the recommendation has no automated check.
    pub automated_status: Option<Status>,
    /// `None` when the recommendation takes no attestation.
    pub attestation_status: Option<Status>,
    /// Worst first.
    pub findings: Vec<Finding>,
    /// Sorted union of the findings' evidence.
    pub evidence: Vec<String>,
    pub attestation: Option<AttestationRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Entry count per status; every status is listed.
    pub counts: BTreeMap<Status, u64>,
    pub worst: Status,
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub schema_version: String,
    pub dataset_id: String,
    pub generated_at: String,
    pub tool_version: String,
    pub odd_currency_notes: Option<String>,
    /// Exactly one entry per recommendation, ordered by id.
    pub entries: Vec<ReportEntry>,
    pub summary: Summary,
    pub exit_code: i32,
}

impl ComplianceReport {
    /// All findings carried by the entries, in entry order.
    pub fn findings(&self) -> Vec<Finding> {
        self.entries.iter().flat_map(|e| e.findings.iter().cloned()).collect()
    }

    pub fn attestations(&self) -> Vec<AttestationRecord> {
        self.entries.iter().filter_map(|e| e.attestation.clone()).collect()
    }

    pub fn entry(&self, rec: u8) -> &ReportEntry {
        &self.entries[usize::from(rec) - 1]
    }

    pub fn meta(&self) -> ReportMeta {
        ReportMeta {
            dataset_id: self.dataset_id.clone(),
            generated_at: self.generated_at.clone(),
            tool_version: self.tool_version.clone(),
            odd_currency_notes: self.odd_currency_notes.clone(),
            lenient: self.summary.lenient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportMeta {
    pub dataset_id: String,
    pub generated_at: String,
    pub tool_version: String,
    pub odd_currency_notes: Option<String>,
    /// Treat `manual_pending` as non-blocking for the exit code.
    pub lenient: bool,
}

/// Exit code for a worst status: 0 unless something blocks the gate.
pub fn exit_code(worst: Status, lenient: bool) -> i32 {
    match worst {
        Status::Fail | Status::AttestedFail => 1,
        Status::ManualPending if !lenient => 1,
        _ => 0,
    }
}

pub fn assemble(
    findings: &[Finding],
    attestations: &[AttestationRecord],
    registry: &RecRegistry,
    meta: &ReportMeta,
) -> Result<ComplianceReport, ReportError> {
    let mut by_rec: BTreeMap<RecId, Vec<Finding>> = BTreeMap::new();
    for f in findings {
        let entry = registry.entry(f.rec_id);
        if !entry.mode.accepts_findings() {
            return Err(ReportError::RegistryViolation {
                rec: f.rec(),
                reason: "automated finding for an attestation-only recommendation".into(),
            });
        }
        if !f.status.is_automated() {
            return Err(ReportError::RegistryViolation {
                rec: f.rec(),
                reason: format!("automated finding with status {}", f.status),
            });
        }
        by_rec.entry(f.rec_id).or_default().push(f.clone());
    }
    let mut attested: BTreeMap<RecId, AttestationRecord> = BTreeMap::new();
    for a in attestations {
        if !registry.entry(a.rec_id).mode.accepts_attestation() {
            return Err(ReportError::RegistryViolation {
                rec: a.rec_id.get(),
                reason: "attestation for an automated-only recommendation".into(),
            });
        }
        if attested.insert(a.rec_id, a.clone()).is_some() {
            return Err(ReportError::RegistryViolation { rec: a.rec_id.get(), reason: "more than one attestation".into() });
        }
    }

    let entries: Vec<ReportEntry> = registry
        .entries()
        .iter()
        .map(|reg| {
            let mut notes = Vec::new();
            let mut entry_findings = by_rec.remove(&reg.id).unwrap_or_default();
            entry_findings.sort_by_cached_key(|f| (Reverse(f.status), f.message.clone(), f.evidence.clone()));

            let automated_status = reg.mode.accepts_findings().then(|| {
                crate::finding::worst_status(&entry_findings).unwrap_or_else(|| {
                    notes.push("check not run".to_string());
                    Status::ManualPending
                })
            });
            let attestation = attested.remove(&reg.id);
            let attestation_status = reg.mode.accepts_attestation().then(|| match &attestation {
                Some(a) => a.status.as_status(),
                None => {
                    notes.push("attestation missing".to_string());
                    Status::ManualPending
                }
            });
            let status = automated_status.into_iter().chain(attestation_status).max().expect("every mode has a half");
            let evidence: BTreeSet<&str> =
                entry_findings.iter().flat_map(|f| f.evidence.iter().map(String::as_str)).collect();
            ReportEntry {
                rec_id: reg.id,
                title: reg.title.to_string(),
                area: reg.area.to_string(),
                mode: reg.mode,
                status,
                automated_status,
                attestation_status,
                evidence: evidence.into_iter().map(str::to_string).collect(),
                findings: entry_findings,
                attestation,
                notes,
            }
        })
        .collect();

    let mut counts: BTreeMap<Status, u64> = Status::ALL.iter().map(|s| (*s, 0)).collect();
    for e in &entries {
        *counts.get_mut(&e.status).expect("all statuses present") += 1;
    }
    let worst = entries.iter().map(|e| e.status).max().expect("44 entries");
    Ok(ComplianceReport {
        schema_version: SCHEMA_VERSION.to_string(),
        dataset_id: meta.dataset_id.clone(),
        generated_at: meta.generated_at.clone(),
        tool_version: meta.tool_version.clone(),
        odd_currency_notes: meta.odd_currency_notes.clone(),
        entries,
        summary: Summary { counts, worst, lenient: meta.lenient },
        exit_code: exit_code(worst, meta.lenient),
    })
}

/// Saved output of `dds check`, input of `dds report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingsFile {
    pub dataset_id: String,
    #[serde(default)]
    pub odd_currency_notes: Option<String>,
    pub findings: Vec<Finding>,
}
