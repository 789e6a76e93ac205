//! Synthetic dataset fixtures and a driver for the `dds` binary.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use dds_gate::consistency::{ConsistencyRule, RuleKind};
use dds_gate::digest::ContentDigest;
use dds_gate::finding::RecId;
use dds_gate::integrity::{chain_entries, seal_split, write_audit_log, AuditAction, AuditLogEntry, SealCommitment};
use dds_gate::manifest::{
    AnnotationMethod, AnnotationRecord, AnnotationSet, AttestationRecord, AttestationStatus, DataItem, Lineage,
    Manifest, ManifestHeader, SourceDecl, Split,
};
use dds_gate::odd::{ExpectedDistribution, OddDimension, OddSchema};
use dds_gate::timestamp::Timestamp;

pub const GENERATED_AT: &str = "2024-06-01T12:00:00Z";
pub const ANNOTATORS: [&str; 3] = ["ann_a", "ann_b", "ann_c"];
const LABELS: [&str; 3] = ["car", "pedestrian", "signal"];

/// Recommendations signed off in the golden fixture: every attested-only
/// and hybrid one.
pub const ATTESTED: [u8; 21] = [1, 2, 3, 7, 10, 11, 13, 18, 20, 21, 24, 25, 26, 28, 30, 32, 33, 34, 35, 40, 41];

pub fn ts(s: &str) -> Timestamp {
    Timestamp::parse(s).expect("fixture timestamp")
}

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn split_of(i: usize) -> Split {
    match i % 10 {
        0..=5 => Split::Train,
        6 => Split::Validation,
        _ => Split::Test,
    }
}

/// Physical object shown by item `i`; four items per object, scattered over
/// storage order.
fn object_of(i: usize, n: usize) -> usize {
    (i * 7919 % n) / 4
}

fn gold_label(object: usize) -> &'static str {
    LABELS[(mix(object as u64) % 3) as usize]
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub header: ManifestHeader,
    pub items: Vec<DataItem>,
    pub content: BTreeMap<String, Vec<u8>>,
    pub annotations: Vec<AnnotationRecord>,
    pub attestations: Vec<AttestationRecord>,
    pub audit: Vec<AuditLogEntry>,
    pub schema: OddSchema,
    pub rules: Vec<ConsistencyRule>,
    pub expected: ExpectedDistribution,
    pub seal: SealCommitment,
}

pub struct Paths {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub odd: PathBuf,
    pub annotations: PathBuf,
    pub attestations: PathBuf,
    pub audit_log: PathBuf,
    pub rules: PathBuf,
    pub expected: PathBuf,
    pub content_dir: PathBuf,
    pub seal: PathBuf,
}

impl Paths {
    /// Arguments for `dds check` that feed every input file.
    pub fn check_args(&self) -> Vec<String> {
        let mut args: Vec<String> = vec!["check".into()];
        let pairs: [(&str, &Path); 9] = [
            ("--manifest", &self.manifest),
            ("--odd", &self.odd),
            ("--annotations", &self.annotations),
            ("--attestations", &self.attestations),
            ("--audit-log", &self.audit_log),
            ("--rules", &self.rules),
            ("--expected", &self.expected),
            ("--content-dir", &self.content_dir),
            ("--seal", &self.seal),
        ];
        for (flag, path) in pairs {
            args.push(flag.into());
            args.push(path.display().to_string());
        }
        args.extend(["--all", "--format", "json", "--generated-at", GENERATED_AT].map(String::from));
        args
    }
}

fn schema() -> OddSchema {
    let mut dims = vec![
        OddDimension::categorical("weather", &["clear", "rain"]),
        OddDimension::categorical("light", &["day", "night"]),
        OddDimension::categorical("location", &["urban", "rural"]),
    ];
    dims[0].domain = Some("weather".into());
    dims[1].domain = Some("lighting".into());
    dims[2].domain = Some("site".into());
    OddSchema { name: "fixture".into(), dimensions: dims, currency_notes: Some("reviewed quarterly".into()) }
}

impl Fixture {
    /// A clean dataset of `n` items that passes every automated check.
    pub fn golden(n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let header = ManifestHeader {
            schema_version: "1.0".into(),
            dataset_id: "fixture-golden".into(),
            created: ts("2024-01-15T08:00:00Z"),
            sources: vec![
                SourceDecl {
                    source_id: "cam_front".into(),
                    description: "front camera".into(),
                    acquisition_config_version: "cfg-3.1".into(),
                },
                SourceDecl {
                    source_id: "cam_side".into(),
                    description: "side camera".into(),
                    acquisition_config_version: "cfg-2.0".into(),
                },
            ],
        };

        let mut items = Vec::with_capacity(n);
        let mut content = BTreeMap::new();
        for i in 0..n {
            let id = format!("img{i:06}");
            let bytes = format!("frame {id} payload {}", mix(i as u64)).into_bytes();
            let split = split_of(i);
            let object = object_of(i, n);
            let mut odd = BTreeMap::new();
            odd.insert("weather".to_string(), json!(["clear", "rain"][i % 2]));
            odd.insert("light".to_string(), json!(["day", "night"][(i / 3) % 2]));
            odd.insert("location".to_string(), json!(["urban", "rural"][(i / 5) % 2]));
            let mut attributes = BTreeMap::new();
            attributes.insert("object_id".to_string(), json!(format!("obj{object:06}")));
            attributes.insert("birthday".to_string(), json!(format!("{}-01-01", 1950 + object % 60)));
            attributes.insert("distance".to_string(), json!({"value": 20 + object % 60, "unit": "m"}));
            attributes.insert("exposure".to_string(), json!(10 + i % 7));
            items.push(DataItem {
                id: id.clone(),
                digest: ContentDigest::of(&bytes),
                source_id: ["cam_front", "cam_side"][i % 2].to_string(),
                split,
                group_id: (split == Split::Train).then(|| format!("seq{:05}", i / 20)),
                odd,
                attributes,
                lineage: Lineage { raw_uri: Some(format!("raw/{id}.bin")), is_raw: true, transforms: Vec::new() },
                ambiguous: i % 97 == 0,
                simhash64: Some(rng.gen()),
                label: Some(gold_label(object).to_string()),
            });
            content.insert(id, bytes);
        }

        let annotations = annotate(&items, n, &mut rng);

        let att_date = ts("2024-05-20T10:00:00Z");
        let attestations = ATTESTED
            .iter()
            .map(|&r| AttestationRecord {
                rec_id: RecId::new(r),
                status: AttestationStatus::AttestedPass,
                by: "qa-lead".into(),
                date: att_date.clone(),
                note: String::new(),
            })
            .collect();

        let entry = |t: &str, user: &str, action, ids: &[&str], why: &str| AuditLogEntry {
            ts: ts(t),
            user: user.into(),
            action,
            item_ids: ids.iter().map(|s| s.to_string()).collect(),
            justification: why.into(),
            prev_digest: ContentDigest::zero(),
        };
        let audit = chain_entries([
            entry("2024-01-15T08:00:00Z", "ingest-bot", AuditAction::Add, &["img000000"], "initial import"),
            entry("2024-02-01T09:30:00Z", "alice", AuditAction::Modify, &["img000001"], "fixed exposure metadata"),
            entry("2024-02-10T14:00:00Z", "bob", AuditAction::Remove, &["img999999"], "corrupt frame"),
            entry("2024-03-05T11:15:00Z", "alice", AuditAction::Modify, &["img000002"], "relabelled after review"),
            entry("2024-04-22T16:45:00Z", "carol", AuditAction::Add, &["img000003"], "new capture session"),
        ]);

        let rules = vec![
            ConsistencyRule {
                rule_id: "label-vocabulary".into(),
                kind: RuleKind::InSet { field: "label".into(), allowed: LABELS.iter().map(|l| json!(l)).collect() },
            },
            ConsistencyRule {
                rule_id: "exposure-range".into(),
                kind: RuleKind::InRange { field: "exposure".into(), lo: 0.0, hi: 100.0 },
            },
            ConsistencyRule {
                rule_id: "birthday-per-object".into(),
                kind: RuleKind::SameObjectSameValue {
                    object_key_field: "object_id".into(),
                    value_field: "birthday".into(),
                },
            },
        ];

        let schema = schema();
        let expected = observed_proportions(&items, &schema, Split::Test);
        let manifest = Manifest::new(header.clone(), items.clone()).expect("golden manifest");
        let seal = seal_split(&manifest, Split::Test, ts("2024-05-01T00:00:00Z")).expect("test split sealed");

        Fixture { header, items, content, annotations, attestations, audit, schema, rules, expected, seal }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest::new(self.header.clone(), self.items.clone()).expect("fixture manifest")
    }

    pub fn index_in(&self, split: Split) -> usize {
        self.items.iter().position(|it| it.split == split).expect("split populated")
    }

    pub fn write(&self, dir: &Path) -> Paths {
        let p = |name: &str| dir.join(name);
        let paths = Paths {
            dir: dir.to_path_buf(),
            manifest: p("manifest.jsonl"),
            odd: p("odd.json"),
            annotations: p("annotations.jsonl"),
            attestations: p("attestations.json"),
            audit_log: p("audit.jsonl"),
            rules: p("rules.json"),
            expected: p("expected.json"),
            content_dir: p("content"),
            seal: p("seal.json"),
        };
        self.manifest().write_jsonl(BufWriter::new(File::create(&paths.manifest).unwrap())).unwrap();
        AnnotationSet::new(self.annotations.clone())
            .expect("fixture annotations")
            .write_jsonl(BufWriter::new(File::create(&paths.annotations).unwrap()))
            .unwrap();
        write_audit_log(&self.audit, BufWriter::new(File::create(&paths.audit_log).unwrap())).unwrap();
        let json = |path: &Path, v: Value| fs::write(path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
        json(&paths.odd, serde_json::to_value(&self.schema).unwrap());
        json(&paths.attestations, serde_json::to_value(&self.attestations).unwrap());
        json(&paths.rules, serde_json::to_value(&self.rules).unwrap());
        json(&paths.expected, serde_json::to_value(&self.expected).unwrap());
        json(&paths.seal, serde_json::to_value(&self.seal).unwrap());
        fs::create_dir_all(&paths.content_dir).unwrap();
        for (id, bytes) in &self.content {
            fs::write(paths.content_dir.join(id), bytes).unwrap();
        }
        paths
    }
}

/// Each item gets one primary annotator; every fifth item gets a second
/// opinion, one in ten of which disagrees. Processing order is shuffled.
fn annotate(items: &[DataItem], n: usize, rng: &mut ChaCha8Rng) -> Vec<AnnotationRecord> {
    let at = ts("2024-03-01T09:00:00Z");
    let mut per_annotator: Vec<Vec<AnnotationRecord>> = vec![Vec::new(); ANNOTATORS.len()];
    for (i, it) in items.iter().enumerate() {
        let gold = gold_label(object_of(i, n));
        let mut push = |a: usize, label: &str| {
            per_annotator[a].push(AnnotationRecord {
                item_id: it.id.clone(),
                annotator: ANNOTATORS[a].to_string(),
                label: label.to_string(),
                at: at.clone(),
                seq: 0,
                storage_index: i as u64,
                method: AnnotationMethod::Manual,
            })
        };
        push(i % 3, gold);
        if i % 5 == 0 {
            let label = if i % 50 == 0 { LABELS[(LABELS.iter().position(|l| *l == gold).unwrap() + 1) % 3] } else { gold };
            push((i + 1) % 3, label);
        }
    }
    let mut out = Vec::new();
    for mut recs in per_annotator {
        let mut order: Vec<u64> = (0..recs.len() as u64).collect();
        order.shuffle(rng);
        for (r, s) in recs.iter_mut().zip(order) {
            r.seq = s;
        }
        out.extend(recs);
    }
    out
}

fn observed_proportions(items: &[DataItem], schema: &OddSchema, split: Split) -> ExpectedDistribution {
    let in_split: Vec<&DataItem> = items.iter().filter(|it| it.split == split).collect();
    let mut out = BTreeMap::new();
    for dim in &schema.dimensions {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for it in &in_split {
            *counts.entry(it.odd[&dim.name].as_str().unwrap().to_string()).or_insert(0.0) += 1.0;
        }
        let total = in_split.len() as f64;
        out.insert(dim.name.clone(), counts.into_iter().map(|(k, c)| (k, c / total)).collect());
    }
    ExpectedDistribution(out)
}

/// The planted defects, each aimed at one recommendation.
#[derive(Debug, Clone, Copy)]
pub enum Defect {
    CrossSplitDuplicate,
    SplitSpanningGroup,
    InconsistentBirthday,
    UnitKindMix,
    UnattributedAnnotation,
    SequentialAssignment,
    OddValueOutsideLevels,
    BrokenAuditChain,
}

impl Defect {
    pub const ALL: [Defect; 8] = [
        Defect::CrossSplitDuplicate,
        Defect::SplitSpanningGroup,
        Defect::InconsistentBirthday,
        Defect::UnitKindMix,
        Defect::UnattributedAnnotation,
        Defect::SequentialAssignment,
        Defect::OddValueOutsideLevels,
        Defect::BrokenAuditChain,
    ];

    /// The recommendation expected to fail.
    pub fn rec(self) -> u8 {
        match self {
            Defect::CrossSplitDuplicate => 39,
            Defect::SplitSpanningGroup => 43,
            Defect::InconsistentBirthday => 16,
            Defect::UnitKindMix => 17,
            Defect::UnattributedAnnotation => 38,
            Defect::SequentialAssignment => 37,
            Defect::OddValueOutsideLevels => 4,
            Defect::BrokenAuditChain => 19,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Defect::CrossSplitDuplicate => "cross-split duplicate",
            Defect::SplitSpanningGroup => "split-spanning group",
            Defect::InconsistentBirthday => "inconsistent birthday",
            Defect::UnitKindMix => "unit-kind mix",
            Defect::UnattributedAnnotation => "unattributed annotation",
            Defect::SequentialAssignment => "sequential assignment",
            Defect::OddValueOutsideLevels => "ODD value outside levels",
            Defect::BrokenAuditChain => "broken audit chain",
        }
    }

    pub fn apply(self, f: &mut Fixture) {
        match self {
            Defect::CrossSplitDuplicate => {
                let (train, test) = (f.index_in(Split::Train), f.index_in(Split::Test));
                f.items[train].digest = f.items[test].digest.clone();
                let bytes = f.content[&f.items[test].id].clone();
                f.content.insert(f.items[train].id.clone(), bytes);
            }
            Defect::SplitSpanningGroup => {
                let (train, test) = (f.index_in(Split::Train), f.index_in(Split::Test));
                f.items[test].group_id = f.items[train].group_id.clone();
            }
            Defect::InconsistentBirthday => {
                f.items[0].attributes.insert("birthday".into(), json!("1899-12-31"));
            }
            Defect::UnitKindMix => {
                let it = &mut f.items[1];
                let value = it.attributes["distance"]["value"].clone();
                it.attributes.insert("distance".into(), json!({"value": value, "unit": "km"}));
            }
            Defect::UnattributedAnnotation => {
                let mut r = f.annotations[0].clone();
                r.annotator = String::new();
                f.annotations.push(r);
            }
            Defect::SequentialAssignment => {
                for r in f.annotations.iter_mut().filter(|r| r.annotator == ANNOTATORS[1]) {
                    r.seq = r.storage_index;
                }
            }
            Defect::OddValueOutsideLevels => {
                let train = f.index_in(Split::Train);
                f.items[train].odd.insert("weather".into(), json!("fog"));
            }
            Defect::BrokenAuditChain => {
                f.audit[1].justification = "rewritten after the fact".into();
            }
        }
    }
}

pub fn dds(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dds")).args(args).output().expect("dds binary runs")
}

/// Runs `dds check` on every input; returns the exit code and parsed report.
pub fn check(paths: &Paths, extra: &[&str]) -> (i32, Value) {
    let mut args = paths.check_args();
    args.extend(extra.iter().map(|s| s.to_string()));
    let out = dds(&args);
    let code = out.status.code().expect("exit code");
    let report = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("report JSON ({e}); stderr: {}", String::from_utf8_lossy(&out.stderr)));
    (code, report)
}

/// REC id → status string.
pub fn statuses(report: &Value) -> BTreeMap<u64, String> {
    report["entries"]
        .as_array()
        .expect("entries")
        .iter()
        .map(|e| (e["rec_id"].as_u64().unwrap(), e["status"].as_str().unwrap().to_string()))
        .collect()
}
