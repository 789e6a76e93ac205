//! Label quality: audit sample sizing, inter-annotator agreement, object-level
//! consistency, ambiguity handling, and ordering tests on annotator streams.

mod agreement;
mod randomness;
mod runs;

use std::collections::{BTreeMap, BTreeSet};

pub use agreement::{agreement, agreement_findings, AgreementResult, PairAgreement, DEFAULT_MIN_KAPPA};
pub use randomness::{assignment_randomness, spearman_rho, RandomnessMethod, RandomnessResult, RandomnessParams};
pub use runs::{longest_run, run_length_test, run_p_value, RunMethod, RunTestParams, RunTestResult};

use crate::finding::Finding;
use crate::manifest::{AnnotationMethod, AnnotationSet, Manifest};
use crate::splits::{required_test_size, SplitsError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnnotationError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no two annotators share an item")]
    InsufficientOverlap,
    #[error("annotator {annotator:?} has {records} record(s); at least 2 needed")]
    InsufficientData { annotator: String, records: usize },
    #[error("no item carries field {0:?}")]
    UnknownField(String),
}

impl From<SplitsError> for AnnotationError {
    fn from(e: SplitsError) -> Self {
        AnnotationError::InvalidParameter(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePlan {
    /// Sample size to draw.
    pub n: u64,
    /// Size the bound asks for before capping.
    pub required: u64,
    pub population: u64,
}

impl SamplePlan {
    pub fn capped(&self) -> bool {
        self.n < self.required
    }

    /// REC 35 finding describing the plan.
    pub fn finding(&self) -> Finding {
        let f = if self.capped() {
            Finding::warn(
                35,
                format!(
                    "population smaller than statistically required sample: review all {} items (bound asks for {})",
                    self.population, self.required
                ),
            )
        } else {
            Finding::pass(35, format!("expert audit sample of {} out of {} items", self.n, self.population))
        };
        f.with_metric("sample_size", self.n)
            .with_metric("required_sample_size", self.required)
            .with_metric("population", self.population)
    }
}

/// Size of an expert audit sample: the smallest n for which zero errors
/// observed would bound the true error rate by `target_bound` at confidence
/// 1 − `delta`, capped at the population.
pub fn audit_sample_plan(population: u64, delta: f64, target_bound: f64) -> Result<SamplePlan, AnnotationError> {
    if population == 0 {
        return Err(AnnotationError::InvalidParameter("population must be positive".into()));
    }
    if !(target_bound > 0.0 && target_bound < 1.0) {
        return Err(AnnotationError::InvalidParameter(format!("target_bound must lie in (0, 1), got {target_bound}")));
    }
    let required = required_test_size(0.0, target_bound, delta)?;
    Ok(SamplePlan { n: required.min(population), required, population })
}

/// REC 27: every item showing the same object carries the same label.
///
/// Labels come from the manifest's resolved `label`, or from the annotation
/// records when an item has none.
pub fn check_object_label_consistency(
    manifest: &Manifest,
    annotations: &AnnotationSet,
    object_key: &str,
) -> Result<Vec<Finding>, AnnotationError> {
    let by_item = annotations.by_item();
    // object → label → item ids
    let mut objects: BTreeMap<String, BTreeMap<String, BTreeSet<&str>>> = BTreeMap::new();
    let mut keyed = 0usize;
    for it in manifest.items() {
        let Some(key) = it.field(object_key) else { continue };
        keyed += 1;
        let key = match key {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let labels = objects.entry(key).or_default();
        match &it.label {
            Some(l) => {
                labels.entry(l.clone()).or_default().insert(it.id.as_str());
            }
            None => {
                for r in by_item.get(it.id.as_str()).into_iter().flatten() {
                    labels.entry(r.label.clone()).or_default().insert(it.id.as_str());
                }
            }
        }
    }
    if keyed == 0 {
        return Err(AnnotationError::UnknownField(object_key.to_string()));
    }

    let mut findings = Vec::new();
    for (object, labels) in &objects {
        if labels.len() > 1 {
            let names: Vec<&str> = labels.keys().map(String::as_str).collect();
            let ids: BTreeSet<&str> = labels.values().flatten().copied().collect();
            findings.push(
                Finding::fail(27, format!("object {object:?} labelled inconsistently: {}", names.join(", ")))
                    .with_evidence(ids),
            );
        }
    }
    if findings.is_empty() {
        findings.push(
            Finding::pass(27, format!("every {object_key} carries a single label")).with_metric("objects", objects.len()),
        );
    }
    Ok(findings)
}

/// REC 31 and REC 28: ambiguous items need a manual annotation, and their
/// existence calls for an expert review attestation.
pub fn check_ambiguity_handling(
    manifest: &Manifest,
    annotations: &AnnotationSet,
    has_review_attestation: bool,
) -> Vec<Finding> {
    let by_item = annotations.by_item();
    let ambiguous: Vec<&str> = manifest.items().iter().filter(|it| it.ambiguous).map(|it| it.id.as_str()).collect();

    let mut findings = Vec::new();
    for id in &ambiguous {
        let Some(records) = by_item.get(id) else { continue };
        if records.iter().all(|r| r.method == AnnotationMethod::Automatic) {
            findings.push(
                Finding::fail(31, format!("ambiguous item {id} was labelled only automatically")).with_evidence([*id]),
            );
        }
    }
    if findings.is_empty() {
        findings.push(
            Finding::pass(31, "every annotated ambiguous item has a manual label")
                .with_metric("ambiguous_items", ambiguous.len()),
        );
    }

    if ambiguous.is_empty() {
        findings.push(Finding::pass(28, "no items flagged ambiguous; expert ambiguity review not required"));
    } else if has_review_attestation {
        findings.push(
            Finding::pass(28, format!("{} ambiguous item(s) covered by the expert review attestation", ambiguous.len()))
                .with_metric("ambiguous_items", ambiguous.len()),
        );
    } else {
        findings.push(
            Finding::warn(28, format!("{} ambiguous item(s) but no expert review attestation", ambiguous.len()))
                .with_metric("ambiguous_items", ambiguous.len()),
        );
    }
    findings
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::finding::Status;
    use crate::manifest::{AnnotationRecord, Split};
    use crate::testutil::{item, manifest_of};
    use crate::timestamp::Timestamp;
    use serde_json::json;

    pub(crate) fn record(annotator: &str, item_id: &str, label: &str, seq: u64, storage_index: u64) -> AnnotationRecord {
        AnnotationRecord {
            item_id: item_id.into(),
            annotator: annotator.into(),
            label: label.into(),
            at: Timestamp::parse("2024-03-01T00:00:00Z").unwrap(),
            seq,
            storage_index,
            method: AnnotationMethod::Manual,
        }
    }

    #[test]
    fn sample_plan() {
        let p = audit_sample_plan(10_000, 0.05, 0.001).unwrap();
        assert_eq!(p.n, 5992);
        assert!(!p.capped());
        assert_eq!(p.finding().status, Status::Pass);

        let small = audit_sample_plan(100, 0.05, 0.001).unwrap();
        assert_eq!(small.n, 100);
        let f = small.finding();
        assert_eq!(f.status, Status::Warn);
        assert!(f.message.starts_with("population smaller than statistically required sample"));

        assert!(matches!(audit_sample_plan(100, 1.0, 0.001), Err(AnnotationError::InvalidParameter(_))));
        assert!(audit_sample_plan(0, 0.05, 0.001).is_err());
        assert!(audit_sample_plan(10, 0.05, 1.0).is_err());
    }

    fn objects_manifest(rows: &[(&str, &str, Option<&str>)]) -> Manifest {
        manifest_of(
            rows.iter()
                .map(|(id, obj, label)| {
                    let mut it = item(id, Split::Train);
                    it.attributes.insert("object_id".into(), json!(obj));
                    it.label = label.map(str::to_string);
                    it
                })
                .collect(),
        )
    }

    #[test]
    fn traffic_light_consistent() {
        let m = objects_manifest(&[
            ("a", "traffic_light_17", Some("traffic_light")),
            ("b", "traffic_light_17", Some("traffic_light")),
            ("c", "lamp_2", Some("street_lamp")),
        ]);
        let f = check_object_label_consistency(&m, &AnnotationSet::default(), "object_id").unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].status, Status::Pass);
    }

    #[test]
    fn traffic_light_conflict_via_annotations() {
        let m = objects_manifest(&[("a", "traffic_light_17", Some("traffic_light")), ("b", "traffic_light_17", None)]);
        let ann = AnnotationSet::new(vec![record("x", "b", "street_lamp", 0, 1)]).unwrap();
        let f = check_object_label_consistency(&m, &ann, "object_id").unwrap();
        assert_eq!(f[0].status, Status::Fail);
        assert!(f[0].message.contains("street_lamp, traffic_light"));
        assert_eq!(f[0].evidence, vec!["a", "b"]);
    }

    #[test]
    fn object_key_missing() {
        let m = objects_manifest(&[("a", "o", Some("x"))]);
        assert_eq!(
            check_object_label_consistency(&m, &AnnotationSet::default(), "track").unwrap_err(),
            AnnotationError::UnknownField("track".into())
        );
    }

    #[test]
    fn ambiguity_rules() {
        let mut a = item("a", Split::Train);
        a.ambiguous = true;
        let mut b = item("b", Split::Train);
        b.ambiguous = true;
        let m = manifest_of(vec![a, b, item("c", Split::Train)]);
        let mut auto = record("bot", "b", "x", 1, 1);
        auto.method = AnnotationMethod::Automatic;
        let ann = AnnotationSet::new(vec![record("h", "a", "x", 0, 0), auto]).unwrap();

        let f = check_ambiguity_handling(&m, &ann, false);
        let fails: Vec<_> = f.iter().filter(|f| f.status == Status::Fail).collect();
        assert_eq!(fails.len(), 1);
        assert_eq!(fails[0].evidence, vec!["b"]);
        assert!(f.iter().any(|f| f.rec() == 28 && f.status == Status::Warn));
        assert!(check_ambiguity_handling(&m, &ann, true).iter().any(|f| f.rec() == 28 && f.status == Status::Pass));

        let plain = manifest_of(vec![item("c", Split::Train)]);
        let f = check_ambiguity_handling(&plain, &ann, false);
        assert!(f.iter().all(|f| f.status == Status::Pass));
        assert!(f.iter().any(|f| f.rec() == 28));
    }
}
