//! Dataset manifest, annotation stream and attestation file: parsing into
//! immutable models, plus lineage and annotator-traceability checks.

mod model;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Read, Write};

pub use model::*;

use crate::finding::Finding;
use crate::jsonl::{self, LineError};
use crate::report::registry::RecRegistry;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("item {id:?} references undeclared source {source_id:?}")]
    UnknownSource { id: String, source_id: String },
    #[error("unsupported schema_version {0:?}")]
    SchemaVersionUnsupported(String),
    #[error("duplicate annotation by {annotator:?} on item {item_id:?}")]
    DuplicateAnnotation { annotator: String, item_id: String },
    #[error("invalid attestation for REC {rec}: {reason}")]
    InvalidAttestation { rec: u8, reason: String },
}

impl From<LineError> for ManifestError {
    fn from(e: LineError) -> Self {
        ManifestError::Parse { line: e.line, reason: e.reason }
    }
}

/// Header plus items, with all load-time invariants verified.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    header: ManifestHeader,
    items: Vec<DataItem>,
    index: HashMap<String, usize>,
}

impl Manifest {
    pub fn new(header: ManifestHeader, items: Vec<DataItem>) -> Result<Self, ManifestError> {
        validate_header(&header, 1)?;
        let sources: HashSet<&str> = header.sources.iter().map(|s| s.source_id.as_str()).collect();
        let mut index = HashMap::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            check_item(item, &sources)?;
            if index.insert(item.id.clone(), pos).is_some() {
                return Err(ManifestError::DuplicateId(item.id.clone()));
            }
        }
        Ok(Manifest { header, items, index })
    }

    pub fn header(&self) -> &ManifestHeader {
        &self.header
    }

    pub fn dataset_id(&self) -> &str {
        &self.header.dataset_id
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn item(&self, id: &str) -> Option<&DataItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn split_items(&self, split: Split) -> impl Iterator<Item = &DataItem> {
        self.items.iter().filter(move |it| it.split == split)
    }

    pub fn into_parts(self) -> (ManifestHeader, Vec<DataItem>) {
        (self.header, self.items)
    }

    /// Writes the manifest as JSON Lines, header first.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for item in &self.items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn validate_header(header: &ManifestHeader, line: usize) -> Result<(), ManifestError> {
    if !SUPPORTED_SCHEMA_VERSIONS.contains(&header.schema_version.as_str()) {
        return Err(ManifestError::SchemaVersionUnsupported(header.schema_version.clone()));
    }
    if header.dataset_id.trim().is_empty() {
        return Err(ManifestError::Parse { line, reason: "dataset_id is empty".into() });
    }
    let mut seen = HashSet::new();
    for s in &header.sources {
        if !seen.insert(s.source_id.as_str()) {
            return Err(ManifestError::Parse {
                line,
                reason: format!("duplicate source_id {:?}", s.source_id),
            });
        }
    }
    Ok(())
}

fn check_item(item: &DataItem, sources: &HashSet<&str>) -> Result<(), ManifestError> {
    if !sources.contains(item.source_id.as_str()) {
        return Err(ManifestError::UnknownSource {
            id: item.id.clone(),
            source_id: item.source_id.clone(),
        });
    }
    Ok(())
}

/// Reads a manifest: line 1 is the header, every further line an item.
pub fn load_manifest<R: BufRead>(reader: R) -> Result<Manifest, ManifestError> {
    let mut header: Option<ManifestHeader> = None;
    let mut source_ids: HashSet<String> = HashSet::new();
    let mut items = Vec::new();
    let mut index = HashMap::new();

    jsonl::for_each_line(reader, |line_no, text| {
        if header.is_none() {
            let h: ManifestHeader = jsonl::parse_line(line_no, text)?;
            validate_header(&h, line_no)?;
            source_ids = h.sources.iter().map(|s| s.source_id.clone()).collect();
            header = Some(h);
            return Ok(());
        }
        let item: DataItem = jsonl::parse_line(line_no, text)?;
        if item.id.is_empty() {
            return Err(ManifestError::Parse { line: line_no, reason: "item id is empty".into() });
        }
        if !source_ids.contains(&item.source_id) {
            return Err(ManifestError::UnknownSource { id: item.id, source_id: item.source_id });
        }
        if index.insert(item.id.clone(), items.len()).is_some() {
            return Err(ManifestError::DuplicateId(item.id));
        }
        items.push(item);
        Ok(())
    })?;

    let header = header.ok_or(ManifestError::Parse { line: 1, reason: "missing header record".into() })?;
    Ok(Manifest { header, items, index })
}

/// Ordered annotation records, unique per `(annotator, item_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    records: Vec<AnnotationRecord>,
}

impl AnnotationSet {
    pub fn new(records: Vec<AnnotationRecord>) -> Result<Self, ManifestError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert((r.annotator.as_str(), r.item_id.as_str())) {
                return Err(ManifestError::DuplicateAnnotation {
                    annotator: r.annotator.clone(),
                    item_id: r.item_id.clone(),
                });
            }
        }
        Ok(AnnotationSet { records })
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct annotator names, sorted.
    pub fn annotators(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.annotator.as_str()).collect();
        set.into_iter().collect()
    }

    /// Records of one annotator in processing (`seq`) order.
    pub fn by_annotator(&self, annotator: &str) -> Vec<&AnnotationRecord> {
        let mut recs: Vec<_> = self.records.iter().filter(|r| r.annotator == annotator).collect();
        recs.sort_by(|a, b| a.seq.cmp(&b.seq).then_with(|| a.item_id.cmp(&b.item_id)));
        recs
    }

    /// Records grouped by item id.
    pub fn by_item(&self) -> BTreeMap<&str, Vec<&AnnotationRecord>> {
        let mut map: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in &self.records {
            map.entry(r.item_id.as_str()).or_default().push(r);
        }
        map
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn load_annotations<R: BufRead>(reader: R) -> Result<AnnotationSet, ManifestError> {
    let mut records = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    jsonl::for_each_line(reader, |line_no, text| {
        let rec: AnnotationRecord = jsonl::parse_line(line_no, text)?;
        if !seen.insert((rec.annotator.clone(), rec.item_id.clone())) {
            return Err(ManifestError::DuplicateAnnotation {
                annotator: rec.annotator,
                item_id: rec.item_id,
            });
        }
        records.push(rec);
        Ok(())
    })?;
    Ok(AnnotationSet { records })
}

/// Reads the attestation file (one JSON array) and validates each record
/// against the registry.
pub fn load_attestations<R: Read>(
    reader: R,
    registry: &RecRegistry,
) -> Result<Vec<AttestationRecord>, ManifestError> {
    let records: Vec<AttestationRecord> = serde_json::from_reader(reader).map_err(|e| ManifestError::Parse {
        line: e.line(),
        reason: e.to_string(),
    })?;
    for r in &records {
        validate_attestation(r, registry)?;
    }
    Ok(records)
}

pub fn validate_attestation(r: &AttestationRecord, registry: &RecRegistry) -> Result<(), ManifestError> {
    let rec = r.rec_id.get();
    let invalid = |reason: &str| ManifestError::InvalidAttestation { rec, reason: reason.to_string() };
    if !registry.entry(r.rec_id).mode.accepts_attestation() {
        return Err(invalid("recommendation is checked automatically and takes no attestation"));
    }
    if r.by.trim().is_empty() {
        return Err(invalid("`by` is empty"));
    }
    if r.status != AttestationStatus::AttestedPass && r.note.trim().is_empty() {
        return Err(invalid("a note is required for attested_fail and not_applicable"));
    }
    Ok(())
}

/// REC 8 (recorded ability to regenerate each item) and REC 9 (versioned
/// acquisition configuration per source).
///
/// Only metadata completeness is verified; transforms are never executed.
pub fn check_lineage(manifest: &Manifest) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut items: Vec<&DataItem> = manifest.items().iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));

    let mut failing = 0usize;
    for item in items {
        let problems = lineage_problems(item, manifest);
        if !problems.is_empty() {
            failing += 1;
            findings.push(
                Finding::fail(8, format!("item {}: {}", item.id, problems.join("; ")))
                    .with_evidence([item.id.as_str()]),
            );
        }
    }
    if failing == 0 {
        findings.push(
            Finding::pass(8, "every item is raw or carries a complete derivation record (metadata only, not executed)")
                .with_metric("items", manifest.len()),
        );
    }

    let mut sources: Vec<&SourceDecl> = manifest.header().sources.iter().collect();
    sources.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    let unversioned: Vec<&str> = sources
        .iter()
        .filter(|s| s.acquisition_config_version.trim().is_empty())
        .map(|s| s.source_id.as_str())
        .collect();
    for sid in &unversioned {
        findings.push(
            Finding::fail(9, format!("source {sid} has no acquisition_config_version")).with_evidence([*sid]),
        );
    }
    if unversioned.is_empty() {
        findings.push(
            Finding::pass(9, "all sources declare an acquisition configuration version")
                .with_metric("sources", sources.len()),
        );
    }
    findings
}

fn lineage_problems(item: &DataItem, manifest: &Manifest) -> Vec<String> {
    let lin = &item.lineage;
    let mut problems = Vec::new();
    if lin.is_raw {
        if !lin.transforms.is_empty() {
            problems.push("raw item lists transforms".to_string());
        }
        return problems;
    }
    if lin.raw_uri.as_deref().is_none_or(|u| u.trim().is_empty()) {
        problems.push("derived item has no raw_uri".to_string());
    }
    if lin.transforms.is_empty() {
        problems.push("derived item has no transforms".to_string());
    }
    for step in lin.transforms.iter().filter(|s| s.is_augmentation()) {
        match step.params.get(TransformStep::PARENT_PARAM) {
            None => problems.push(format!("augmentation step {:?} has no parent_id", step.op_name)),
            Some(v) => match v.as_str() {
                None => problems.push("parent_id is not a string".to_string()),
                Some(pid) if pid == item.id => problems.push("augmentation names itself as parent".to_string()),
                Some(pid) if !manifest.contains(pid) => problems.push(format!("dangling parent {pid:?}")),
                Some(_) => {}
            },
        }
    }
    problems
}

/// REC 38: every annotation names the person who made it.
pub fn check_annotation_traceability(annotations: &AnnotationSet) -> Vec<Finding> {
    let mut anonymous: Vec<&AnnotationRecord> =
        annotations.records().iter().filter(|r| r.annotator.trim().is_empty()).collect();
    if anonymous.is_empty() {
        return vec![Finding::pass(38, "all annotation records are attributed to an annotator")
            .with_metric("records", annotations.len())];
    }
    anonymous.sort_by(|a, b| a.item_id.cmp(&b.item_id).then(a.seq.cmp(&b.seq)));
    vec![Finding::fail(38, format!("{} annotation record(s) have no annotator", anonymous.len()))
        .with_evidence(anonymous.iter().map(|r| r.item_id.as_str()))
        .with_metric("count", anonymous.len())]
}

/// Annotation records whose item is not in the manifest. Reported as REC 38
/// failures since the label cannot be traced to data.
pub fn check_annotation_references(manifest: &Manifest, annotations: &AnnotationSet) -> Vec<Finding> {
    let dangling: BTreeSet<&str> = annotations
        .records()
        .iter()
        .map(|r| r.item_id.as_str())
        .filter(|id| !manifest.contains(id))
        .collect();
    if dangling.is_empty() {
        return Vec::new();
    }
    vec![Finding::fail(38, format!("{} annotated item id(s) are not in the manifest", dangling.len()))
        .with_evidence(dangling.iter().copied())
        .with_metric("count", dangling.len())]
}
