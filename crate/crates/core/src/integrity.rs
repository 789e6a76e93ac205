//! Content digest verification, hash-chained audit logs and test-split seals.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::ContentDigest;
use crate::finding::Finding;
use crate::jsonl::{self, LineError};
use crate::manifest::{Manifest, Split};
use crate::timestamp::Timestamp;

#[derive(Debug, thiserror::Error)]
pub enum IntegrityError {
    #[error("split {0} has no items")]
    EmptySplit(Split),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl From<LineError> for IntegrityError {
    fn from(e: LineError) -> Self {
        IntegrityError::Parse { line: e.line, reason: e.reason }
    }
}

/// Maps an item id to its byte content, `None` when unavailable.
pub trait ContentResolver: Sync {
    fn resolve(&self, item_id: &str) -> Option<Vec<u8>>;
}

impl ContentResolver for HashMap<String, Vec<u8>> {
    fn resolve(&self, item_id: &str) -> Option<Vec<u8>> {
        self.get(item_id).cloned()
    }
}

/// Resolves `<root>/<item id>` on the local filesystem.
#[derive(Debug, Clone)]
pub struct DirResolver {
    root: PathBuf,
}

impl DirResolver {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirResolver { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ContentResolver for DirResolver {
    fn resolve(&self, item_id: &str) -> Option<Vec<u8>> {
        // Ids are relative names; refuse anything that would leave the root.
        let rel = Path::new(item_id);
        if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return None;
        }
        std::fs::read(self.root.join(rel)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum DigestOutcome {
    Match,
    Mismatch(ContentDigest),
    Absent,
}

/// REC 22 and REC 23: recompute every item's digest from resolved content.
///
/// Emits one REC 22 failure per mismatched or unavailable item, ordered by
/// item id, and a REC 23 summary.
pub fn verify_item_digests(manifest: &Manifest, resolver: &dyn ContentResolver) -> Vec<Finding> {
    let mut outcomes: Vec<(&str, DigestOutcome)> = manifest
        .items()
        .par_iter()
        .map(|item| {
            let outcome = match resolver.resolve(&item.id) {
                None => DigestOutcome::Absent,
                Some(bytes) => {
                    let actual = ContentDigest::of(&bytes);
                    if actual == item.digest {
                        DigestOutcome::Match
                    } else {
                        DigestOutcome::Mismatch(actual)
                    }
                }
            };
            (item.id.as_str(), outcome)
        })
        .collect();
    outcomes.sort_by(|a, b| a.0.cmp(b.0));

    let mut findings = Vec::new();
    let mut bad = Vec::new();
    for (id, outcome) in &outcomes {
        match outcome {
            DigestOutcome::Match => {}
            DigestOutcome::Absent => {
                bad.push(*id);
                findings.push(Finding::fail(22, format!("content unavailable for {id}")).with_evidence([*id]));
            }
            DigestOutcome::Mismatch(actual) => {
                bad.push(*id);
                findings.push(
                    Finding::fail(22, format!("digest mismatch for {id}: recomputed {actual}")).with_evidence([*id]),
                );
            }
        }
    }
    let checked = outcomes.len();
    if bad.is_empty() {
        findings.push(Finding::pass(22, "all item digests match their content").with_metric("items", checked));
        findings.push(
            Finding::pass(23, "received content verified against recorded digests").with_metric("items", checked),
        );
    } else {
        findings.push(
            Finding::fail(23, format!("{} of {checked} item(s) failed digest verification", bad.len()))
                .with_evidence(bad.iter().copied())
                .with_metric("failed", bad.len())
                .with_metric("items", checked),
        );
    }
    findings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Add,
    Modify,
    Remove,
}

/// One dataset modification, chained to its predecessor by digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditLogEntry {
    pub ts: Timestamp,
    pub user: String,
    pub action: AuditAction,
    pub item_ids: Vec<String>,
    pub justification: String,
    pub prev_digest: ContentDigest,
}

impl AuditLogEntry {
    /// JSON object with lexicographically sorted keys and no insignificant
    /// whitespace.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        // serde_json's default map is a BTreeMap, so keys come out sorted.
        let value: Value = serde_json::to_value(self).expect("audit entry serializes");
        serde_json::to_vec(&value).expect("value serializes")
    }

    pub fn digest(&self) -> ContentDigest {
        ContentDigest::of(&self.canonical_bytes())
    }
}

/// Builds a correctly chained log from unchained entries.
pub fn chain_entries(entries: impl IntoIterator<Item = AuditLogEntry>) -> Vec<AuditLogEntry> {
    let mut prev = ContentDigest::zero();
    entries
        .into_iter()
        .map(|mut e| {
            e.prev_digest = prev.clone();
            prev = e.digest();
            e
        })
        .collect()
}

pub fn load_audit_log<R: BufRead>(reader: R) -> Result<Vec<AuditLogEntry>, IntegrityError> {
    let mut entries = Vec::new();
    jsonl::for_each_line(reader, |line_no, text| {
        entries.push(jsonl::parse_line(line_no, text)?);
        Ok::<_, IntegrityError>(())
    })?;
    Ok(entries)
}

pub fn write_audit_log<W: Write>(entries: &[AuditLogEntry], mut out: W) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// REC 19: the modification log is chained, attributed, justified and in
/// chronological order. Indices in messages are 0-based.
pub fn verify_audit_chain(log: &[AuditLogEntry]) -> Vec<Finding> {
    if log.is_empty() {
        return vec![Finding::warn(19, "no modification history")];
    }
    let mut findings = Vec::new();
    let mut expected = ContentDigest::zero();
    let mut first_break: Option<usize> = None;
    for (i, entry) in log.iter().enumerate() {
        if first_break.is_none() && entry.prev_digest != expected {
            first_break = Some(i);
        }
        expected = entry.digest();
    }
    if let Some(i) = first_break {
        findings.push(
            Finding::fail(19, format!("chain broken at index {i}"))
                .with_evidence(log[i].item_ids.iter().map(String::as_str))
                .with_metric("broken_index", i),
        );
    }
    for (i, entry) in log.iter().enumerate() {
        if entry.user.trim().is_empty() {
            findings.push(
                Finding::fail(19, format!("entry {i} has no user"))
                    .with_evidence(entry.item_ids.iter().map(String::as_str)),
            );
        }
        if entry.justification.trim().is_empty() {
            findings.push(
                Finding::fail(19, format!("entry {i} has no justification"))
                    .with_evidence(entry.item_ids.iter().map(String::as_str)),
            );
        }
        if i > 0 && entry.ts < log[i - 1].ts {
            findings.push(
                Finding::fail(19, format!("entry {i} timestamp {} precedes entry {}", entry.ts, i - 1))
                    .with_evidence(entry.item_ids.iter().map(String::as_str)),
            );
        }
    }
    if findings.is_empty() {
        findings.push(
            Finding::pass(19, "modification log is chained, attributed and justified").with_metric("entries", log.len()),
        );
    }
    findings
}

/// Commitment to the content of one split, verifiable later without having
/// disclosed the items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SealCommitment {
    pub split: Split,
    pub item_count: u64,
    pub commitment: ContentDigest,
    pub sealed_at: Timestamp,
}

/// Digest over the sorted item digests of `split`, each followed by `\n`.
fn split_commitment(manifest: &Manifest, split: Split) -> (u64, ContentDigest) {
    let mut digests: Vec<&str> = manifest.split_items(split).map(|it| it.digest.as_str()).collect();
    digests.sort_unstable();
    let mut buf = Vec::with_capacity(digests.len() * 72);
    for d in &digests {
        buf.extend_from_slice(d.as_bytes());
        buf.push(b'\n');
    }
    (digests.len() as u64, ContentDigest::of(&buf))
}

pub fn seal_split(manifest: &Manifest, split: Split, sealed_at: Timestamp) -> Result<SealCommitment, IntegrityError> {
    let (item_count, commitment) = split_commitment(manifest, split);
    if item_count == 0 {
        return Err(IntegrityError::EmptySplit(split));
    }
    Ok(SealCommitment { split, item_count, commitment, sealed_at })
}

/// REC 40: the sealed split is unchanged.
pub fn verify_seal(manifest: &Manifest, seal: &SealCommitment) -> Finding {
    let (count, commitment) = split_commitment(manifest, seal.split);
    let mut problems = Vec::new();
    if count != seal.item_count {
        problems.push(format!("item count {count} differs from sealed count {}", seal.item_count));
    }
    if commitment != seal.commitment {
        problems.push("commitment mismatch".to_string());
    }
    let f = if problems.is_empty() {
        Finding::pass(40, format!("{} split matches seal from {}", seal.split, seal.sealed_at))
    } else {
        Finding::fail(40, format!("{} split does not match seal: {}", seal.split, problems.join("; ")))
    };
    f.with_metric("item_count", count).with_metric("sealed_item_count", seal.item_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finding::Status;
    use crate::manifest::{DataItem, Lineage, ManifestHeader, SourceDecl};

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    fn manifest(items: &[(&str, &str, Split)]) -> Manifest {
        let header = ManifestHeader {
            schema_version: "1.0".into(),
            dataset_id: "d".into(),
            created: ts("2024-01-01T00:00:00Z"),
            sources: vec![SourceDecl { source_id: "s".into(), description: String::new(), acquisition_config_version: "1".into() }],
        };
        let items = items
            .iter()
            .map(|(id, content, split)| DataItem {
                id: id.to_string(),
                digest: ContentDigest::of(content.as_bytes()),
                source_id: "s".into(),
                split: *split,
                group_id: None,
                odd: Default::default(),
                attributes: Default::default(),
                lineage: Lineage::raw(),
                ambiguous: false,
                simhash64: None,
                label: None,
            })
            .collect();
        Manifest::new(header, items).unwrap()
    }

    fn contents(items: &[(&str, &str, Split)]) -> HashMap<String, Vec<u8>> {
        items.iter().map(|(id, c, _)| (id.to_string(), c.as_bytes().to_vec())).collect()
    }

    const ITEMS: [(&str, &str, Split); 3] =
        [("a", "alpha", Split::Train), ("b", "bravo", Split::Test), ("c", "charlie", Split::Test)];

    #[test]
    fn matching_content_passes() {
        let f = verify_item_digests(&manifest(&ITEMS), &contents(&ITEMS));
        assert!(f.iter().all(|f| f.status == Status::Pass));
        assert_eq!(f.iter().map(|f| f.rec()).collect::<Vec<_>>(), vec![22, 23]);
    }

    #[test]
    fn flipped_byte_names_one_item() {
        let mut store = contents(&ITEMS);
        store.get_mut("b").unwrap()[0] ^= 0x01;
        let f = verify_item_digests(&manifest(&ITEMS), &store);
        let fails22: Vec<_> = f.iter().filter(|f| f.rec() == 22 && f.status == Status::Fail).collect();
        assert_eq!(fails22.len(), 1);
        assert_eq!(fails22[0].evidence, vec!["b"]);
        let r23 = f.iter().find(|f| f.rec() == 23).unwrap();
        assert_eq!((r23.status, r23.evidence.clone()), (Status::Fail, vec!["b".to_string()]));
    }

    #[test]
    fn missing_content_is_reported() {
        let mut store = contents(&ITEMS);
        store.remove("c");
        let f = verify_item_digests(&manifest(&ITEMS), &store);
        let fail = f.iter().find(|f| f.rec() == 22 && f.status == Status::Fail).unwrap();
        assert!(fail.message.contains("content unavailable"));
        assert_eq!(fail.evidence, vec!["c"]);
    }

    #[test]
    fn dir_resolver_refuses_escape() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a"), b"alpha").unwrap();
        let r = DirResolver::new(dir.path());
        assert_eq!(r.resolve("a").as_deref(), Some(&b"alpha"[..]));
        assert_eq!(r.resolve("../a"), None);
        assert_eq!(r.resolve("missing"), None);
    }

    fn entry(t: &str, user: &str, why: &str) -> AuditLogEntry {
        AuditLogEntry {
            ts: ts(t),
            user: user.into(),
            action: AuditAction::Modify,
            item_ids: vec!["a".into()],
            justification: why.into(),
            prev_digest: ContentDigest::zero(),
        }
    }

    fn good_log() -> Vec<AuditLogEntry> {
        chain_entries([
            entry("2024-01-01T00:00:00Z", "alice", "initial import"),
            entry("2024-01-02T00:00:00Z", "bob", "fix label"),
            entry("2024-01-03T00:00:00Z", "alice", "remove blurred frame"),
        ])
    }

    #[test]
    fn canonical_bytes_sort_keys_without_whitespace() {
        let e = entry("2024-01-01T00:00:00Z", "alice", "x");
        let text = String::from_utf8(e.canonical_bytes()).unwrap();
        assert_eq!(
            text,
            format!(
                r#"{{"action":"modify","item_ids":["a"],"justification":"x","prev_digest":"{}","ts":"2024-01-01T00:00:00Z","user":"alice"}}"#,
                ContentDigest::zero()
            )
        );
    }

    #[test]
    fn audit_chain_cases() {
        assert_eq!(verify_audit_chain(&[])[0].status, Status::Warn);
        assert_eq!(verify_audit_chain(&[])[0].message, "no modification history");

        let log = good_log();
        // Chain built by hand: each prev_digest is SHA-256 of the previous entry's canonical bytes.
        assert_eq!(log[1].prev_digest, ContentDigest::of(&log[0].canonical_bytes()));
        assert_eq!(log[2].prev_digest, ContentDigest::of(&log[1].canonical_bytes()));
        let f = verify_audit_chain(&log);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].status, Status::Pass);

        let mut broken = good_log();
        broken[2].prev_digest = ContentDigest::of(b"tampered");
        let f = verify_audit_chain(&broken);
        assert_eq!(f[0].status, Status::Fail);
        assert_eq!(f[0].message, "chain broken at index 2");
    }

    #[test]
    fn audit_chain_detects_edits_upstream() {
        let mut log = good_log();
        log[0].justification = "rewritten".into();
        assert_eq!(verify_audit_chain(&log)[0].message, "chain broken at index 1");
    }

    #[test]
    fn audit_chain_field_checks() {
        let log = chain_entries([
            entry("2024-01-02T00:00:00Z", "", "x"),
            entry("2024-01-01T00:00:00Z", "bob", " "),
        ]);
        let msgs: Vec<_> = verify_audit_chain(&log).into_iter().map(|f| f.message).collect();
        assert!(msgs.iter().any(|m| m == "entry 0 has no user"));
        assert!(msgs.iter().any(|m| m == "entry 1 has no justification"));
        assert!(msgs.iter().any(|m| m.starts_with("entry 1 timestamp")));
    }

    #[test]
    fn audit_log_jsonl_roundtrip() {
        let log = good_log();
        let mut buf = Vec::new();
        write_audit_log(&log, &mut buf).unwrap();
        assert_eq!(load_audit_log(&buf[..]).unwrap(), log);
    }

    #[test]
    fn seal_single_item_definition() {
        let m = manifest(&[("x", "only", Split::Test)]);
        let seal = seal_split(&m, Split::Test, ts("2024-05-01T00:00:00Z")).unwrap();
        let d = ContentDigest::of(b"only");
        assert_eq!(seal.commitment, ContentDigest::of(format!("{d}\n").as_bytes()));
        assert_eq!(seal.item_count, 1);
    }

    #[test]
    fn seal_is_order_independent() {
        let mut rev = ITEMS;
        rev.reverse();
        let t = ts("2024-05-01T00:00:00Z");
        assert_eq!(
            seal_split(&manifest(&ITEMS), Split::Test, t.clone()).unwrap(),
            seal_split(&manifest(&rev), Split::Test, t).unwrap()
        );
    }

    #[test]
    fn seal_empty_split_rejected() {
        let m = manifest(&ITEMS);
        assert!(matches!(
            seal_split(&m, Split::Validation, ts("2024-05-01T00:00:00Z")),
            Err(IntegrityError::EmptySplit(Split::Validation))
        ));
    }

    #[test]
    fn verify_seal_cases() {
        let m = manifest(&ITEMS);
        let seal = seal_split(&m, Split::Test, ts("2024-05-01T00:00:00Z")).unwrap();
        assert_eq!(verify_seal(&m, &seal).status, Status::Pass);

        let changed = manifest(&[ITEMS[0], ("b", "bravo!", Split::Test), ITEMS[2]]);
        assert_eq!(verify_seal(&changed, &seal).status, Status::Fail);

        let removed = manifest(&ITEMS[..2]);
        let f = verify_seal(&removed, &seal);
        assert_eq!(f.status, Status::Fail);
        assert!(f.message.contains("item count 1 differs from sealed count 2"), "{}", f.message);
    }
}
