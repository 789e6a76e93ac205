//! Split-level audits: overlap, group and near-duplicate leakage, label bias,
//! and test-set sizing.

mod bias;
mod bound;
mod leakage;

use std::collections::{BTreeMap, BTreeSet};

pub use bias::{bias_scan, DEFAULT_MIN_SUPPORT, DEFAULT_PURITY_THRESHOLD};
pub use bound::{required_test_size, test_bound, BoundInputs};
pub use leakage::{
    hamming, leakage_findings, near_duplicate_leakage, validate_banding, LeakageKind, LeakagePair, LeakageScan,
    DEFAULT_BANDS, DEFAULT_MAX_DISTANCE,
};

use crate::finding::Finding;
use crate::manifest::{Manifest, Split};

#[derive(Debug, thiserror::Error)]
pub enum SplitsError {
    #[error("invalid banding (bands={bands}, max_distance={max_distance}): {reason}")]
    InvalidBanding { bands: u32, max_distance: u32, reason: String },
    #[error("no labelled items in scope")]
    MissingLabels,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn split_list(splits: &BTreeSet<Split>) -> String {
    splits.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
}

/// REC 39: no content digest may appear in more than one assigned split.
pub fn check_disjoint(manifest: &Manifest) -> Vec<Finding> {
    let mut by_digest: BTreeMap<&str, Vec<(&str, Split)>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    for it in manifest.items() {
        if it.split.is_assigned() {
            by_digest.entry(it.digest.as_str()).or_default().push((it.id.as_str(), it.split));
        } else {
            unassigned.push(it.id.as_str());
        }
    }

    let mut findings = Vec::new();
    for (digest, members) in &by_digest {
        let splits: BTreeSet<Split> = members.iter().map(|(_, s)| *s).collect();
        if splits.len() > 1 {
            let mut ids: Vec<&str> = members.iter().map(|(id, _)| *id).collect();
            ids.sort_unstable();
            findings.push(
                Finding::fail(39, format!("content {digest} appears in splits {}", split_list(&splits)))
                    .with_evidence(ids),
            );
        }
    }
    if !unassigned.is_empty() {
        unassigned.sort_unstable();
        findings.push(
            Finding::warn(39, format!("{} item(s) not assigned to any split", unassigned.len()))
                .with_metric("unassigned", unassigned.len())
                .with_evidence(unassigned),
        );
    }
    if !findings.iter().any(|f| f.status == crate::finding::Status::Fail) {
        findings.push(
            Finding::pass(39, "assigned splits share no content").with_metric("digests", by_digest.len()),
        );
    }
    findings
}

/// REC 43: groups of related items (video, subject, site) and augmented
/// copies must stay within one split.
pub fn check_group_integrity(manifest: &Manifest) -> Vec<Finding> {
    let mut groups: BTreeMap<&str, BTreeMap<Split, Vec<&str>>> = BTreeMap::new();
    for it in manifest.items().iter().filter(|it| it.split.is_assigned()) {
        if let Some(g) = it.group_id.as_deref() {
            groups.entry(g).or_default().entry(it.split).or_default().push(it.id.as_str());
        }
    }

    let mut findings = Vec::new();
    for (group, by_split) in &groups {
        if by_split.len() > 1 {
            let splits: BTreeSet<Split> = by_split.keys().copied().collect();
            let mut ids: Vec<&str> = by_split.values().flatten().copied().collect();
            ids.sort_unstable();
            findings.push(
                Finding::fail(43, format!("group {group:?} spans splits {}", split_list(&splits))).with_evidence(ids),
            );
        }
    }

    let mut crossings = 0usize;
    for it in manifest.items().iter().filter(|it| it.split.is_assigned()) {
        for parent_id in it.lineage.parents() {
            let Some(parent) = manifest.item(parent_id) else { continue };
            if parent.split.is_assigned() && parent.split != it.split {
                crossings += 1;
                findings.push(
                    Finding::fail(
                        43,
                        format!(
                            "augmentation crosses split: {} ({}) derives from {} ({})",
                            it.id, it.split, parent.id, parent.split
                        ),
                    )
                    .with_evidence([parent.id.as_str(), it.id.as_str()]),
                );
            }
        }
    }

    if findings.is_empty() {
        findings.push(
            Finding::pass(43, "groups and augmented copies stay within one split")
                .with_metric("groups", groups.len())
                .with_metric("augmentation_crossings", crossings),
        );
    }
    findings
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeCheck {
    pub p_hat: f64,
    pub delta: f64,
    pub target_bound: f64,
}

impl Default for SizeCheck {
    fn default() -> Self {
        SizeCheck { p_hat: 0.0, delta: 0.05, target_bound: 0.01 }
    }
}

/// REC 44: is the test split large enough for the bound to reach the target?
pub fn check_test_size(manifest: &Manifest, params: &SizeCheck) -> Result<Vec<Finding>, SplitsError> {
    let required = required_test_size(params.p_hat, params.target_bound, params.delta)?;
    let test: Vec<_> = manifest.split_items(Split::Test).collect();
    let n = test.len() as u64;
    let mut findings = Vec::new();
    if n == 0 {
        findings.push(
            Finding::fail(44, "test split is empty; no error bound can be stated")
                .with_metric("required_n", required),
        );
        return Ok(findings);
    }
    let bound = test_bound(&BoundInputs::new(params.p_hat, n, params.delta)?);
    let detail = format!(
        "bound {bound:.6} at n={n}, p_hat={}, delta={} (target {}, needs n>={required}); assumes i.i.d. samples from the target distribution, which depends on the evaluation context (see REC 6)",
        params.p_hat, params.delta, params.target_bound
    );
    // correlated samples make the effective n smaller than counted
    let grouped = test.iter().filter(|it| it.group_id.is_some()).count();
    let detail = if grouped > 0 {
        format!("{detail}; caution: {grouped} test item(s) belong to groups, so the effective n is smaller")
    } else {
        detail
    };
    let finding = if bound <= params.target_bound {
        Finding::pass(44, detail)
    } else {
        Finding::fail(44, format!("test split too small: {detail}"))
    };
    findings.push(
        finding
            .with_metric("n", n)
            .with_metric("required_n", required)
            .with_metric("bound", bound)
            .with_metric("target_bound", params.target_bound)
            .with_metric("grouped_items", grouped),
    );
    Ok(findings)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::finding::Status;
    use crate::manifest::{DataItem, Lineage, TransformStep};
    use crate::testutil::{item, manifest_of};
    use serde_json::json;

    pub(crate) fn manifest_with(rows: &[(&str, Split, Option<u64>)]) -> Manifest {
        manifest_of(
            rows.iter()
                .map(|(id, split, h)| DataItem { simhash64: *h, ..item(id, *split) })
                .collect(),
        )
    }

    pub(crate) fn labelled_manifest(rows: &[(&str, &str, &str)]) -> Manifest {
        manifest_of(
            rows.iter()
                .enumerate()
                .map(|(i, (loc, light, label))| {
                    let mut it = item(&format!("i{i:05}"), Split::Train);
                    it.odd.insert("location".into(), json!(loc));
                    it.odd.insert("light".into(), json!(light));
                    it.label = Some(label.to_string());
                    it
                })
                .collect(),
        )
    }

    #[test]
    fn shared_digest_across_train_and_test() {
        let mut items = vec![item("a", Split::Train), item("b", Split::Test), item("c", Split::Validation)];
        items[1].digest = items[0].digest.clone();
        let f = check_disjoint(&manifest_of(items));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].status, Status::Fail);
        assert_eq!(f[0].evidence, vec!["a", "b"]);
        assert!(f[0].message.contains("train, test"));
    }

    #[test]
    fn unassigned_duplicates_only_warn() {
        let mut items = vec![item("a", Split::Train), item("b", Split::Unassigned)];
        items[1].digest = items[0].digest.clone();
        let f = check_disjoint(&manifest_of(items));
        assert_eq!(f.iter().map(|f| f.status).collect::<Vec<_>>(), vec![Status::Warn, Status::Pass]);
    }

    #[test]
    fn group_spanning_splits() {
        let mut items = vec![item("f1", Split::Train), item("f2", Split::Train), item("f3", Split::Test)];
        for it in &mut items {
            it.group_id = Some("video_7".into());
        }
        let f = check_group_integrity(&manifest_of(items));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].status, Status::Fail);
        assert_eq!(f[0].evidence, vec!["f1", "f2", "f3"]);
    }

    #[test]
    fn augmentation_across_split() {
        let mut child = item("a_flip", Split::Test);
        child.lineage = Lineage {
            raw_uri: None,
            is_raw: false,
            transforms: vec![TransformStep {
                op_name: "augment_flip".into(),
                params: [("parent_id".to_string(), json!("a"))].into_iter().collect(),
                tool_version: "1".into(),
            }],
        };
        let f = check_group_integrity(&manifest_of(vec![item("a", Split::Train), child]));
        assert_eq!(f.len(), 1);
        assert!(f[0].message.starts_with("augmentation crosses split"));
        assert_eq!(f[0].evidence, vec!["a", "a_flip"]);
    }

    #[test]
    fn test_size_check() {
        let items: Vec<_> = (0..600).map(|i| item(&format!("t{i}"), Split::Test)).collect();
        let m = manifest_of(items);
        // 600 items at delta 0.05: bound = 2 ln 20 / 600 ≈ 0.00999
        let ok = check_test_size(&m, &SizeCheck::default()).unwrap();
        assert_eq!(ok[0].status, Status::Pass);
        assert_eq!(ok[0].metrics["required_n"].as_f64(), 600.0);
        let tight = check_test_size(&m, &SizeCheck { target_bound: 0.005, ..SizeCheck::default() }).unwrap();
        assert_eq!(tight[0].status, Status::Fail);
    }
}
