//! Operational Design Domain: schema validation, item traceability, coverage
//! tables and proportion drift against declared operational distributions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::finding::{Finding, Status};
use crate::manifest::{DataItem, Manifest, Split};

pub const DEFAULT_MIN_COUNT: u64 = 30;
pub const DEFAULT_TV_THRESHOLD: f64 = 0.05;
const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OddError {
    #[error("unknown ODD dimension {0:?}")]
    UnknownDimension(String),
    #[error("split {0} has no items")]
    EmptySplit(Split),
    #[error("invalid expected distribution for {dimension:?}: {reason}")]
    InvalidDistribution { dimension: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionKind {
    Categorical,
    Ordinal,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddDimension {
    pub name: String,
    pub kind: DimensionKind,
    /// Grouping label such as "weather"; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<f64>>,
}

impl OddDimension {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        OddDimension {
            name: name.to_string(),
            kind: DimensionKind::Categorical,
            domain: None,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            range: None,
            bins: None,
        }
    }

    pub fn numeric(name: &str, lo: f64, hi: f64, bins: Option<Vec<f64>>) -> Self {
        OddDimension {
            name: name.to_string(),
            kind: DimensionKind::Numeric,
            domain: None,
            levels: Vec::new(),
            range: Some([lo, hi]),
            bins,
        }
    }

    /// Bin edges covering the whole range.
    fn edges(&self) -> Vec<f64> {
        let [lo, hi] = self.range.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]);
        let mut edges = vec![lo];
        for &b in self.bins.iter().flatten() {
            if b > *edges.last().unwrap() && b < hi {
                edges.push(b);
            }
        }
        edges.push(hi);
        edges
    }

    /// Every coverage cell of this dimension, in declaration order.
    pub fn cells(&self) -> Vec<String> {
        match self.kind {
            DimensionKind::Categorical | DimensionKind::Ordinal => self.levels.clone(),
            DimensionKind::Numeric => {
                let edges = self.edges();
                let last = edges.len() - 2;
                edges
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| bin_label(w[0], w[1], i == last))
                    .collect()
            }
        }
    }

    /// Maps a value to its cell, or explains why the value is outside the
    /// declared domain.
    pub fn cell_of(&self, value: &Value) -> Result<String, CellError> {
        match self.kind {
            DimensionKind::Categorical | DimensionKind::Ordinal => {
                let s = value.as_str().ok_or(CellError::WrongKind)?;
                if self.levels.iter().any(|l| l == s) {
                    Ok(s.to_string())
                } else {
                    Err(CellError::NotInLevels(s.to_string()))
                }
            }
            DimensionKind::Numeric => {
                let x = value.as_f64().ok_or(CellError::WrongKind)?;
                let [lo, hi] = self.range.ok_or(CellError::WrongKind)?;
                if !(lo..=hi).contains(&x) {
                    return Err(CellError::OutOfRange(x));
                }
                let edges = self.edges();
                let last = edges.len() - 2;
                let idx = edges.windows(2).position(|w| x < w[1]).unwrap_or(last);
                Ok(bin_label(edges[idx], edges[idx + 1], idx == last))
            }
        }
    }
}

fn bin_label(lo: f64, hi: f64, closed: bool) -> String {
    format!("[{lo}, {hi}{}", if closed { "]" } else { ")" })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellError {
    WrongKind,
    NotInLevels(String),
    OutOfRange(f64),
}

impl fmt::Display for CellError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellError::WrongKind => f.write_str("value has the wrong kind"),
            CellError::NotInLevels(v) => write!(f, "value {v:?} not in levels"),
            CellError::OutOfRange(x) => write!(f, "value {x} outside range"),
        }
    }
}

/// Declared operational design domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddSchema {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub dimensions: Vec<OddDimension>,
    /// Free-form notes on how representativeness is kept over time; shown in
    /// the report, not checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub currency_notes: Option<String>,
}

impl OddSchema {
    pub fn dimension(&self, name: &str) -> Option<&OddDimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// The schema encoding the railway environmental-conditions table.
    pub fn railway() -> Self {
        serde_json::from_str(RAILWAY_SCHEMA_JSON).expect("bundled railway schema parses")
    }
}

/// Bundled copy of `examples/odd_railway.json`.
pub const RAILWAY_SCHEMA_JSON: &str = include_str!("../examples/odd_railway.json");

/// REC 3: each schema invariant violation becomes its own failure.
pub fn validate_schema(schema: &OddSchema) -> Vec<Finding> {
    let mut problems = Vec::new();
    if schema.dimensions.is_empty() {
        problems.push("schema declares no dimensions".to_string());
    }
    let mut names = HashSet::new();
    for d in &schema.dimensions {
        if d.name.trim().is_empty() {
            problems.push("dimension with empty name".to_string());
        }
        if !names.insert(d.name.as_str()) {
            problems.push(format!("duplicate dimension {:?}", d.name));
        }
        match d.kind {
            DimensionKind::Categorical | DimensionKind::Ordinal => {
                if d.levels.is_empty() {
                    problems.push(format!("dimension {:?} has no levels", d.name));
                }
                let mut seen = HashSet::new();
                for l in &d.levels {
                    if !seen.insert(l.as_str()) {
                        problems.push(format!("dimension {:?} repeats level {l:?}", d.name));
                    }
                }
            }
            DimensionKind::Numeric => match d.range {
                None => problems.push(format!("numeric dimension {:?} has no range", d.name)),
                Some([lo, hi]) => {
                    if !(lo < hi) {
                        problems.push(format!("dimension {:?} range [{lo}, {hi}] violates lo < hi", d.name));
                    }
                    if let Some(bins) = &d.bins {
                        if bins.windows(2).any(|w| !(w[0] < w[1])) {
                            problems.push(format!("dimension {:?} bin edges not strictly increasing", d.name));
                        }
                        if bins.iter().any(|b| !(lo..=hi).contains(b)) {
                            problems.push(format!("dimension {:?} bin edge outside range", d.name));
                        }
                    }
                }
            },
        }
    }
    if problems.is_empty() {
        vec![Finding::pass(3, "ODD schema is well formed").with_metric("dimensions", schema.dimensions.len())]
    } else {
        problems.into_iter().map(|p| Finding::fail(3, p)).collect()
    }
}

/// How an item lacking a schema dimension is graded under REC 7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingDimensionPolicy {
    #[default]
    Warn,
    Fail,
}

/// REC 4 (values traceable to the ODD) and REC 7 (every dimension recorded).
pub fn check_traceability(manifest: &Manifest, schema: &OddSchema, missing: MissingDimensionPolicy) -> Vec<Finding> {
    let mut items: Vec<&DataItem> = manifest.items().iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let missing_status = match missing {
        MissingDimensionPolicy::Warn => Status::Warn,
        MissingDimensionPolicy::Fail => Status::Fail,
    };

    let mut findings = Vec::new();
    let (mut bad, mut incomplete) = (0usize, 0usize);
    for item in items {
        let mut problems = Vec::new();
        for (key, value) in &item.odd {
            match schema.dimension(key) {
                None => problems.push(format!("{key}: not a schema dimension")),
                Some(dim) => {
                    if let Err(e) = dim.cell_of(value) {
                        problems.push(format!("{key}: {e}"));
                    }
                }
            }
        }
        if !problems.is_empty() {
            bad += 1;
            findings.push(
                Finding::fail(4, format!("item {}: {}", item.id, problems.join("; "))).with_evidence([item.id.as_str()]),
            );
        }
        let absent: Vec<&str> = schema
            .dimensions
            .iter()
            .filter(|d| !item.odd.contains_key(&d.name))
            .map(|d| d.name.as_str())
            .collect();
        if !absent.is_empty() {
            incomplete += 1;
            findings.push(
                Finding::new(7, missing_status, format!("item {} lacks dimension(s) {}", item.id, absent.join(", ")))
                    .with_evidence([item.id.as_str()]),
            );
        }
    }
    if bad == 0 {
        findings.push(Finding::pass(4, "all ODD values are traceable to the schema").with_metric("items", manifest.len()));
    }
    if incomplete == 0 {
        findings.push(Finding::pass(7, "every item records every ODD dimension").with_metric("items", manifest.len()));
    }
    findings
}

/// A coverage request: one dimension or a pair crossed together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimSelector {
    Single(String),
    Pair(String, String),
}

impl DimSelector {
    pub fn key(&self) -> String {
        match self {
            DimSelector::Single(a) => a.clone(),
            DimSelector::Pair(a, b) => format!("{a}|{b}"),
        }
    }

    fn names(&self) -> Vec<&str> {
        match self {
            DimSelector::Single(a) => vec![a],
            DimSelector::Pair(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageTable {
    /// Selector key → cell label → count. Pair cells are `level_a|level_b`.
    pub cells: BTreeMap<String, BTreeMap<String, u64>>,
    pub total: u64,
    pub min_count_threshold: u64,
}

/// REC 5: count items per cell and flag cells below `min_count`.
pub fn coverage(
    manifest: &Manifest,
    schema: &OddSchema,
    dims: &[DimSelector],
    min_count: u64,
) -> Result<(CoverageTable, Vec<Finding>), OddError> {
    let mut resolved = Vec::with_capacity(dims.len());
    for sel in dims {
        let ds = sel
            .names()
            .into_iter()
            .map(|n| schema.dimension(n).ok_or_else(|| OddError::UnknownDimension(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        resolved.push((sel, ds));
    }

    let mut table = CoverageTable { cells: BTreeMap::new(), total: manifest.len() as u64, min_count_threshold: min_count };
    let mut findings = Vec::new();
    for (sel, ds) in resolved {
        let key = sel.key();
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let all_cells: Vec<String> = match ds.as_slice() {
            [a] => a.cells(),
            [a, b] => a.cells().iter().flat_map(|x| b.cells().into_iter().map(move |y| format!("{x}|{y}"))).collect(),
            _ => unreachable!("selectors name one or two dimensions"),
        };
        for c in &all_cells {
            counts.insert(c.clone(), 0);
        }
        // untraceable values are REC 4 failures; here they only leave the count
        let mut excluded = Vec::new();
        for item in manifest.items() {
            let values: Option<Vec<&Value>> = ds.iter().map(|d| item.odd.get(&d.name)).collect();
            let Some(values) = values else { continue };
            let cells: Result<Vec<String>, _> = ds.iter().zip(values).map(|(d, v)| d.cell_of(v)).collect();
            match cells {
                Ok(parts) => *counts.entry(parts.join("|")).or_insert(0) += 1,
                Err(_) => excluded.push(item.id.as_str()),
            }
        }
        let mut short = 0usize;
        for cell in &all_cells {
            let n = counts[cell];
            if n < min_count {
                short += 1;
                findings.push(
                    Finding::fail(5, format!("cell ({key}) = ({cell}) has {n} item(s), below {min_count}"))
                        .with_metric("count", n)
                        .with_metric("min_count", min_count)
                        .with_metric("excluded", excluded.len()),
                );
            }
        }
        if short == 0 {
            findings.push(
                Finding::pass(5, format!("all {} cell(s) of {key} reach {min_count}", all_cells.len()))
                    .with_metric("min_count", min_count)
                    .with_metric("excluded", excluded.len()),
            );
        }
        table.cells.insert(key, counts);
    }
    Ok((table, findings))
}

/// Declared operational proportions: dimension → level → probability.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpectedDistribution(pub BTreeMap<String, BTreeMap<String, f64>>);

impl ExpectedDistribution {
    pub fn validate(&self) -> Result<(), OddError> {
        for (dim, probs) in &self.0 {
            let invalid = |reason: String| OddError::InvalidDistribution { dimension: dim.clone(), reason };
            if probs.is_empty() {
                return Err(invalid("no levels".into()));
            }
            if let Some((l, p)) = probs.iter().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
                return Err(invalid(format!("probability {p} for {l:?} is not a non-negative number")));
            }
            let sum: f64 = probs.values().sum();
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                return Err(invalid(format!("probabilities sum to {sum}")));
            }
        }
        Ok(())
    }
}

/// Total variation distance ½ Σ |p − q| over the union of supports.
pub fn total_variation(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let support: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    0.5 * support
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Per-dimension TV thresholds with a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvThresholds {
    pub default: f64,
    #[serde(default)]
    pub per_dimension: BTreeMap<String, f64>,
}

impl TvThresholds {
    pub fn uniform(t: f64) -> Self {
        TvThresholds { default: t, per_dimension: BTreeMap::new() }
    }

    pub fn for_dimension(&self, dim: &str) -> f64 {
        self.per_dimension.get(dim).copied().unwrap_or(self.default)
    }
}

impl Default for TvThresholds {
    fn default() -> Self {
        Self::uniform(DEFAULT_TV_THRESHOLD)
    }
}

/// REC 6: compare observed level frequencies in `split` with the declared
/// operational proportions.
pub fn proportion_check(
    manifest: &Manifest,
    schema: &OddSchema,
    split: Split,
    expected: &ExpectedDistribution,
    thresholds: &TvThresholds,
) -> Result<Vec<Finding>, OddError> {
    expected.validate()?;
    let items: Vec<&DataItem> = manifest.split_items(split).collect();
    if items.is_empty() {
        return Err(OddError::EmptySplit(split));
    }
    let mut findings = Vec::new();
    for (dim_name, exp) in &expected.0 {
        let dim = schema.dimension(dim_name).ok_or_else(|| OddError::UnknownDimension(dim_name.clone()))?;
        let threshold = thresholds.for_dimension(dim_name);
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut n = 0u64;
        for item in &items {
            if let Some(cell) = item.odd.get(dim_name).and_then(|v| dim.cell_of(v).ok()) {
                *counts.entry(cell).or_insert(0) += 1;
                n += 1;
            }
        }
        if n == 0 {
            findings.push(Finding::fail(6, format!("no {split} item carries a traceable value for {dim_name}")));
            continue;
        }
        let observed: BTreeMap<String, f64> = counts.iter().map(|(k, &c)| (k.clone(), c as f64 / n as f64)).collect();
        let tv = total_variation(&observed, exp);
        let (worst_level, worst_dev) = observed
            .keys()
            .chain(exp.keys())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|k| (k, observed.get(k).copied().unwrap_or(0.0) - exp.get(k).copied().unwrap_or(0.0)))
            .fold((None::<&String>, 0.0f64), |acc, (k, d)| if acc.0.is_none() || d.abs() > acc.1.abs() { (Some(k), d) } else { acc });
        let worst_level = worst_level.expect("support is non-empty");

        let outside: Vec<&str> = observed.keys().filter(|k| !exp.contains_key(*k)).map(String::as_str).collect();
        let status = if !outside.is_empty() || tv > threshold { Status::Fail } else { Status::Pass };
        let mut msg = format!(
            "{split} {dim_name}: TV distance {tv:.6} (threshold {threshold}); largest deviation at {worst_level:?} ({worst_dev:+.6})"
        );
        if !outside.is_empty() {
            msg.push_str(&format!("; level outside expected support: {}", outside.join(", ")));
        }
        findings.push(
            Finding::new(6, status, msg)
                .with_metric("tv_distance", tv)
                .with_metric("tv_threshold", threshold)
                .with_metric("items", n),
        );
    }
    Ok(findings)
}
