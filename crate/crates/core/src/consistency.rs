//! Declarative consistency rules, representation uniformity across sources,
//! exact-duplicate grouping and robust outlier flags.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::ContentDigest;
use crate::finding::Finding;
use crate::manifest::{AnnotationSet, DataItem, Manifest};

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 3.5;
pub const DEFAULT_REL_EPSILON: f64 = 1e-9;
/// Scales MAD to the standard deviation of a normal distribution.
const MAD_CONSISTENCY: f64 = 0.6745;
const MIN_OUTLIER_SAMPLES: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConsistencyError {
    #[error("rule {rule_id:?} references unknown field {field:?}")]
    UnknownField { rule_id: String, field: String },
    #[error("rule id {0:?} is declared more than once")]
    DuplicateRule(String),
    #[error("outlier threshold must be positive, got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRule {
    pub rule_id: String,
    #[serde(flatten)]
    pub kind: RuleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    /// No two items share a value of `field`.
    Unique { field: String },
    /// Items sharing `object_key_field` agree on `value_field`.
    SameObjectSameValue { object_key_field: String, value_field: String },
    InSet { field: String, allowed: Vec<Value> },
    /// Inclusive numeric range.
    InRange { field: String, lo: f64, hi: f64 },
    /// `field_a = value_a` implies `field_b` ∈ `allowed_b`.
    Implies { field_a: String, value_a: Value, field_b: String, allowed_b: Vec<Value> },
}

impl RuleKind {
    fn fields(&self) -> Vec<&str> {
        match self {
            RuleKind::Unique { field } | RuleKind::InSet { field, .. } | RuleKind::InRange { field, .. } => vec![field],
            RuleKind::SameObjectSameValue { object_key_field, value_field } => vec![object_key_field, value_field],
            RuleKind::Implies { field_a, field_b, .. } => vec![field_a, field_b],
        }
    }

    /// Same-object rules evidence REC 16; the others REC 15.
    fn rec(&self) -> u8 {
        match self {
            RuleKind::SameObjectSameValue { .. } => 16,
            _ => 15,
        }
    }
}

fn known_fields(manifest: &Manifest) -> HashSet<&str> {
    let mut known: HashSet<&str> = DataItem::BUILTIN_FIELDS.iter().copied().collect();
    for item in manifest.items() {
        known.extend(item.attributes.keys().map(String::as_str));
        known.extend(item.odd.keys().map(String::as_str));
    }
    known
}

/// Label for an item: the gold label, else the label all its annotations
/// agree on.
fn consensus_labels(annotations: &AnnotationSet) -> BTreeMap<&str, &str> {
    annotations
        .by_item()
        .into_iter()
        .filter_map(|(id, recs)| {
            let first = recs[0].label.as_str();
            recs.iter().all(|r| r.label == first).then_some((id, first))
        })
        .collect()
}

fn lookup(item: &DataItem, field: &str, labels: &BTreeMap<&str, &str>) -> Option<Value> {
    match item.field(field) {
        None if field == "label" => labels.get(item.id.as_str()).map(|l| Value::from(*l)),
        other => other,
    }
}

fn value_key(v: &Value) -> String {
    serde_json::to_string(v).expect("json value serializes")
}

fn numeric(v: &Value) -> Option<f64> {
    v.as_f64().or_else(|| v.get("value").and_then(Value::as_f64))
}

/// REC 14, 15 and 16: evaluate the declared rules over the items.
pub fn check_rules(
    manifest: &Manifest,
    annotations: &AnnotationSet,
    rules: &[ConsistencyRule],
) -> Result<Vec<Finding>, ConsistencyError> {
    let known = known_fields(manifest);
    let mut ids = HashSet::new();
    for rule in rules {
        if !ids.insert(rule.rule_id.as_str()) {
            return Err(ConsistencyError::DuplicateRule(rule.rule_id.clone()));
        }
        if let Some(f) = rule.kind.fields().into_iter().find(|f| !known.contains(f)) {
            return Err(ConsistencyError::UnknownField { rule_id: rule.rule_id.clone(), field: f.to_string() });
        }
    }

    let mut findings = Vec::new();
    if rules.is_empty() {
        findings.push(Finding::fail(14, "no consistency rules are expressed"));
        return Ok(findings);
    }
    findings.push(Finding::pass(14, format!("{} consistency rule(s) expressed", rules.len())).with_metric("rules", rules.len()));

    let labels = consensus_labels(annotations);
    let mut items: Vec<&DataItem> = manifest.items().iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let mut sorted: Vec<&ConsistencyRule> = rules.iter().collect();
    sorted.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));

    for rule in sorted {
        let violations = evaluate(rule, &items, &labels);
        let rec = rule.kind.rec();
        if violations.is_empty() {
            findings.push(Finding::pass(rec, format!("rule {} holds", rule.rule_id)));
        } else {
            findings.extend(violations.into_iter().map(|(msg, ev)| {
                Finding::fail(rec, format!("rule {}: {msg}", rule.rule_id)).with_evidence(ev)
            }));
        }
    }
    Ok(findings)
}

/// Violations as (message, offending item ids), in deterministic order.
fn evaluate(rule: &ConsistencyRule, items: &[&DataItem], labels: &BTreeMap<&str, &str>) -> Vec<(String, Vec<String>)> {
    let mut out = Vec::new();
    match &rule.kind {
        RuleKind::Unique { field } => {
            let mut by_value: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for it in items {
                if let Some(v) = lookup(it, field, labels) {
                    by_value.entry(value_key(&v)).or_default().push(it.id.clone());
                }
            }
            for (v, ids) in by_value.into_iter().filter(|(_, ids)| ids.len() > 1) {
                out.push((format!("{field} = {v} shared by {} items", ids.len()), ids));
            }
        }
        RuleKind::SameObjectSameValue { object_key_field, value_field } => {
            let mut objects: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
            for it in items {
                let Some(key) = lookup(it, object_key_field, labels) else { continue };
                let value = lookup(it, value_field, labels).unwrap_or(Value::Null);
                objects.entry(value_key(&key)).or_default().entry(value_key(&value)).or_default().push(it.id.clone());
            }
            for (obj, values) in objects.into_iter().filter(|(_, v)| v.len() > 1) {
                let listing: Vec<String> = values.keys().cloned().collect();
                let ids: Vec<String> = values.into_values().flatten().collect::<BTreeSet<_>>().into_iter().collect();
                out.push((
                    format!("{object_key_field} = {obj} has conflicting {value_field} values {}", listing.join(", ")),
                    ids,
                ));
            }
        }
        RuleKind::InSet { field, allowed } => {
            for it in items {
                if let Some(v) = lookup(it, field, labels) {
                    if !allowed.contains(&v) {
                        out.push((format!("{field} = {} not in allowed set", value_key(&v)), vec![it.id.clone()]));
                    }
                }
            }
        }
        RuleKind::InRange { field, lo, hi } => {
            for it in items {
                if let Some(v) = lookup(it, field, labels) {
                    match numeric(&v) {
                        Some(x) if (*lo..=*hi).contains(&x) => {}
                        Some(x) => out.push((format!("{field} = {x} outside [{lo}, {hi}]"), vec![it.id.clone()])),
                        None => out.push((format!("{field} = {} is not numeric", value_key(&v)), vec![it.id.clone()])),
                    }
                }
            }
        }
        RuleKind::Implies { field_a, value_a, field_b, allowed_b } => {
            for it in items {
                if lookup(it, field_a, labels).as_ref() != Some(value_a) {
                    continue;
                }
                match lookup(it, field_b, labels) {
                    Some(b) if allowed_b.contains(&b) => {}
                    Some(b) => out.push((
                        format!("{field_a} = {} but {field_b} = {} not allowed", value_key(value_a), value_key(&b)),
                        vec![it.id.clone()],
                    )),
                    None => out.push((
                        format!("{field_a} = {} but {field_b} is missing", value_key(value_a)),
                        vec![it.id.clone()],
                    )),
                }
            }
        }
    }
    out
}

/// (value kind, unit tag) of an attribute value. Unit-tagged values are
/// objects of the form `{"value": .., "unit": ".."}`.
fn representation(v: &Value) -> Representation {
    fn kind(v: &Value) -> &'static str {
        match v {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Number(_) => "number",
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        }
    }
    if let Value::Object(map) = v {
        if let (Some(inner), Some(unit)) = (map.get("value"), map.get("unit").and_then(Value::as_str)) {
            return (kind(inner), Some(unit.to_string()));
        }
    }
    (kind(v), None)
}

/// Value kind and unit tag.
type Representation = (&'static str, Option<String>);

/// REC 17: one value kind and one unit tag per attribute across all sources.
/// Sources lacking an attribute are ignored.
pub fn check_representation(manifest: &Manifest) -> Vec<Finding> {
    // attribute → (kind, unit) → sources
    let mut seen: BTreeMap<&str, BTreeMap<Representation, BTreeSet<&str>>> = BTreeMap::new();
    for item in manifest.items() {
        for (name, v) in item.attributes.iter().chain(item.odd.iter()) {
            seen.entry(name.as_str()).or_default().entry(representation(v)).or_default().insert(item.source_id.as_str());
        }
    }
    let mut findings = Vec::new();
    for (attr, variants) in &seen {
        let kinds: BTreeSet<&str> = variants.keys().map(|(k, _)| *k).collect();
        let units: BTreeSet<&Option<String>> = variants.keys().map(|(_, u)| u).collect();
        if kinds.len() > 1 || units.len() > 1 {
            let listing: Vec<String> = variants
                .iter()
                .map(|((k, u), srcs)| {
                    let tag = u.as_deref().map(|u| format!(" [{u}]")).unwrap_or_default();
                    format!("{k}{tag} from {}", srcs.iter().copied().collect::<Vec<_>>().join("/"))
                })
                .collect();
            let sources: BTreeSet<&str> = variants.values().flatten().copied().collect();
            findings.push(
                Finding::fail(17, format!("attribute {attr} has mixed representations: {}", listing.join("; ")))
                    .with_evidence(sources),
            );
        }
    }
    if findings.is_empty() {
        findings.push(
            Finding::pass(17, "each attribute uses one representation across sources").with_metric("attributes", seen.len()),
        );
    }
    findings
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub digest: ContentDigest,
    /// Sorted.
    pub item_ids: Vec<String>,
}

/// Items sharing a content digest, groups ordered by their first item id.
pub fn group_exact_duplicates(manifest: &Manifest) -> Vec<DuplicateGroup> {
    let mut by_digest: BTreeMap<&ContentDigest, Vec<&str>> = BTreeMap::new();
    for item in manifest.items() {
        by_digest.entry(&item.digest).or_default().push(item.id.as_str());
    }
    let mut groups: Vec<DuplicateGroup> = by_digest
        .into_iter()
        .filter(|(_, ids)| ids.len() > 1)
        .map(|(d, mut ids)| {
            ids.sort_unstable();
            DuplicateGroup { digest: d.clone(), item_ids: ids.into_iter().map(String::from).collect() }
        })
        .collect();
    groups.sort_by(|a, b| a.item_ids[0].cmp(&b.item_ids[0]));
    groups
}

/// Repeated data is legal but needs a rationale: each group becomes a REC 14
/// warning. Groups spanning several assigned splits are leakage and left to
/// the split audit.
pub fn duplicate_findings(manifest: &Manifest, groups: &[DuplicateGroup]) -> Vec<Finding> {
    groups
        .iter()
        .filter(|g| {
            let splits: BTreeSet<_> = g
                .item_ids
                .iter()
                .filter_map(|id| manifest.item(id))
                .map(|it| it.split)
                .filter(|s| s.is_assigned())
                .collect();
            splits.len() <= 1
        })
        .map(|g| {
            Finding::warn(14, format!("{} items share content {}; repetition needs a rationale", g.item_ids.len(), g.digest))
                .with_evidence(g.item_ids.iter().map(String::as_str))
                .with_metric("group_size", g.item_ids.len())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierPolicy {
    /// Fields to scan. Empty means every attribute that is numeric on enough
    /// items.
    pub fields: Vec<String>,
    /// Modified z-score cutoff.
    pub threshold: f64,
    /// Tolerance used when MAD is zero.
    pub rel_epsilon: f64,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy { fields: Vec::new(), threshold: DEFAULT_OUTLIER_THRESHOLD, rel_epsilon: DEFAULT_REL_EPSILON }
    }
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Item ids flagged among `values` under the modified z-score rule.
pub fn flag_outliers(values: &[(&str, f64)], threshold: f64, rel_epsilon: f64) -> (Vec<String>, f64, f64) {
    let mut xs: Vec<f64> = values.iter().map(|(_, x)| *x).collect();
    xs.sort_by(f64::total_cmp);
    let m = median(&xs);
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median(&dev);
    let mut flagged: Vec<String> = values
        .iter()
        .filter(|(_, x)| {
            if mad > 0.0 {
                MAD_CONSISTENCY * (x - m).abs() / mad > threshold
            } else {
                (x - m).abs() > rel_epsilon * m.abs().max(1.0)
            }
        })
        .map(|(id, _)| id.to_string())
        .collect();
    flagged.sort();
    (flagged, m, mad)
}

/// REC 12: flag numeric outliers per field. Flags are warnings.
pub fn detect_outliers(manifest: &Manifest, policy: &OutlierPolicy) -> Result<Vec<Finding>, ConsistencyError> {
    if !(policy.threshold > 0.0) {
        return Err(ConsistencyError::InvalidThreshold(policy.threshold));
    }
    let fields: Vec<String> = if policy.fields.is_empty() {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for item in manifest.items() {
            for (k, v) in &item.attributes {
                if numeric(v).is_some() {
                    *counts.entry(k.as_str()).or_insert(0) += 1;
                }
            }
        }
        counts.into_iter().filter(|(_, n)| *n >= MIN_OUTLIER_SAMPLES).map(|(k, _)| k.to_string()).collect()
    } else {
        let mut f = policy.fields.clone();
        f.sort();
        f.dedup();
        f
    };

    let mut findings = Vec::new();
    for field in &fields {
        let values: Vec<(&str, f64)> = manifest
            .items()
            .iter()
            .filter_map(|it| it.field(field).as_ref().and_then(numeric).map(|x| (it.id.as_str(), x)))
            .collect();
        if values.len() < MIN_OUTLIER_SAMPLES {
            findings.push(Finding::warn(
                12,
                format!("outlier scan of {field} skipped: numeric on {} item(s), need {MIN_OUTLIER_SAMPLES}", values.len()),
            ));
            continue;
        }
        let (flagged, m, mad) = flag_outliers(&values, policy.threshold, policy.rel_epsilon);
        let f = if flagged.is_empty() {
            Finding::pass(12, format!("no outliers in {field}"))
        } else {
            Finding::warn(12, format!("{} outlier(s) in {field}", flagged.len())).with_evidence(flagged)
        };
        findings.push(f.with_metric("median", m).with_metric("mad", mad).with_metric("values", values.len()));
    }
    if findings.is_empty() {
        findings.push(Finding::pass(12, "no numeric attributes to scan for outliers"));
    }
    Ok(findings)
}
