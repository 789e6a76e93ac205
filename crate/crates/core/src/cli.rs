//! The `dds` command line.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::annotation::{
    agreement, agreement_findings, assignment_randomness, audit_sample_plan, check_ambiguity_handling,
    check_object_label_consistency, run_length_test, AnnotationError,
};
use crate::config::Config;
use crate::consistency::{
    check_representation, check_rules, detect_outliers, duplicate_findings, group_exact_duplicates, ConsistencyRule,
};
use crate::finding::{Finding, RecId};
use crate::integrity::{load_audit_log, seal_split, verify_audit_chain, verify_item_digests, verify_seal, DirResolver, SealCommitment};
use crate::manifest::{
    check_annotation_references, check_annotation_traceability, check_lineage, load_annotations, load_attestations,
    load_manifest, AnnotationSet, AttestationRecord, Manifest, Split,
};
use crate::odd::{
    check_traceability, coverage, proportion_check, validate_schema, DimSelector, ExpectedDistribution, OddError,
    OddSchema,
};
use crate::report::registry::RecRegistry;
use crate::report::{assemble, format_float, render, FindingsFile, Format, ReportMeta};
use crate::splits::{
    bias_scan, check_disjoint, check_group_integrity, check_test_size, leakage_findings, near_duplicate_leakage,
    required_test_size, test_bound, BoundInputs, SplitsError,
};
use crate::timestamp::Timestamp;

pub const CONFIG_ENV: &str = "DDS_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "dds", version, about = "Dataset quality gate with CI exit codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse inputs without running checks.
    Validate(ValidateArgs),
    /// Run checks and emit a compliance report.
    Check(Box<CheckArgs>),
    /// Write a commitment to one split's content.
    Seal(SealArgs),
    /// Compare a split against a stored commitment.
    VerifySeal(VerifySealArgs),
    /// Test-set size calculator for the error bound.
    Size(SizeArgs),
    /// Assemble a report from saved findings and attestations.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    attestations: Option<PathBuf>,
    /// ODD schema (JSON).
    #[arg(long)]
    odd: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    audit_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Do not block on pending manual obligations.
    #[arg(long)]
    lenient: bool,
    /// Report timestamp (YYYY-MM-DDTHH:MM:SSZ); defaults to SOURCE_DATE_EPOCH, then the clock.
    #[arg(long)]
    generated_at: Option<String>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// ODD schema (JSON).
    #[arg(long)]
    odd: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    attestations: Option<PathBuf>,
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Consistency rules (JSON array).
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Expected operational proportions per ODD dimension (JSON).
    #[arg(long)]
    expected: Option<PathBuf>,
    /// Directory holding item content as `<dir>/<item id>`.
    #[arg(long)]
    content_dir: Option<PathBuf>,
    /// Seal commitment to verify.
    #[arg(long)]
    seal: Option<PathBuf>,
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Also write the raw findings here, for `dds report`.
    #[arg(long)]
    findings_out: Option<PathBuf>,

    #[arg(long)]
    integrity: bool,
    #[arg(long)]
    odd_checks: bool,
    #[arg(long)]
    consistency: bool,
    #[arg(long)]
    annotation: bool,
    #[arg(long)]
    splits: bool,
    #[arg(long)]
    all: bool,

    #[arg(long)]
    max_distance: Option<u32>,
    #[arg(long)]
    bands: Option<u32>,
    #[arg(long)]
    purity_threshold: Option<f64>,
    #[arg(long)]
    min_support: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    target_bound: Option<f64>,
    #[arg(long)]
    p_hat: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SealArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sealed_at: Option<String>,
}

#[derive(Debug, Args)]
struct VerifySealArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    seal: PathBuf,
}

#[derive(Debug, Args)]
struct SizeArgs {
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Upper bound to reach; prints the required test-set size.
    #[arg(long, required_unless_present = "n")]
    target: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    p_hat: f64,
    /// Evaluate the bound at this size instead.
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    findings: PathBuf,
    #[arg(long)]
    attestations: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Check(a) => check(&a),
        Command::Seal(a) => seal(&a),
        Command::VerifySeal(a) => verify(&a),
        Command::Size(a) => size(&a),
        Command::Report(a) => report(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Explicit value, else SOURCE_DATE_EPOCH, else the clock.
fn resolve_timestamp(explicit: Option<&str>) -> anyhow::Result<Timestamp> {
    if let Some(s) = explicit {
        return Timestamp::parse(s).map_err(|e| anyhow::anyhow!("bad timestamp {s:?}: {e}"));
    }
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs: i64 = epoch.trim().parse().context("SOURCE_DATE_EPOCH is not an integer")?;
        return Timestamp::from_unix(secs).context("SOURCE_DATE_EPOCH out of range");
    }
    Ok(Timestamp::now())
}

fn load_attestation_file(path: Option<&Path>, registry: &RecRegistry) -> anyhow::Result<Vec<AttestationRecord>> {
    match path {
        Some(p) => load_attestations(open(p)?, registry).with_context(|| format!("in {}", p.display())),
        None => Ok(Vec::new()),
    }
}

fn validate(a: &ValidateArgs) -> anyhow::Result<i32> {
    let registry = RecRegistry::standard();
    // open everything first so missing files are usage errors, not invalid input
    let manifest_in = open(&a.manifest)?;
    let annotations_in = a.annotations.as_deref().map(open).transpose()?;
    let attestations_in = a.attestations.as_deref().map(open).transpose()?;
    let odd_in = a.odd.as_deref().map(open).transpose()?;
    let rules_in = a.rules.as_deref().map(open).transpose()?;
    let audit_in = a.audit_log.as_deref().map(open).transpose()?;

    let mut problems = Vec::new();
    let mut report = |what: &str, r: Result<String, String>| match r {
        Ok(s) => println!("{what}: {s}"),
        Err(e) => {
            eprintln!("{what}: {e}");
            problems.push(what.to_string());
        }
    };
    report(
        "manifest",
        load_manifest(manifest_in)
            .map(|m| format!("{} item(s) in dataset {}", m.len(), m.dataset_id()))
            .map_err(|e| e.to_string()),
    );
    if let Some(r) = annotations_in {
        report("annotations", load_annotations(r).map(|s| format!("{} record(s)", s.len())).map_err(|e| e.to_string()));
    }
    if let Some(r) = attestations_in {
        report(
            "attestations",
            load_attestations(r, &registry).map(|v| format!("{} record(s)", v.len())).map_err(|e| e.to_string()),
        );
    }
    if let Some(r) = odd_in {
        report(
            "odd",
            serde_json::from_reader::<_, OddSchema>(r)
                .map_err(|e| e.to_string())
                .and_then(|s| {
                    let bad: Vec<String> =
                        validate_schema(&s).into_iter().filter(|f| f.status != crate::finding::Status::Pass).map(|f| f.message).collect();
                    if bad.is_empty() {
                        Ok(format!("{} dimension(s)", s.dimensions.len()))
                    } else {
                        Err(bad.join("; "))
                    }
                }),
        );
    }
    if let Some(r) = rules_in {
        report(
            "rules",
            serde_json::from_reader::<_, Vec<ConsistencyRule>>(r).map(|v| format!("{} rule(s)", v.len())).map_err(|e| e.to_string()),
        );
    }
    if let Some(r) = audit_in {
        report("audit log", load_audit_log(r).map(|v| format!("{} entr(ies)", v.len())).map_err(|e| e.to_string()));
    }
    Ok(if problems.is_empty() { 0 } else { 1 })
}

struct Groups {
    integrity: bool,
    odd: bool,
    consistency: bool,
    annotation: bool,
    splits: bool,
}

impl Groups {
    fn from_args(a: &CheckArgs) -> Self {
        let none = !(a.integrity || a.odd_checks || a.consistency || a.annotation || a.splits);
        let all = a.all || none;
        Groups {
            integrity: all || a.integrity,
            odd: all || a.odd_checks,
            consistency: all || a.consistency,
            annotation: all || a.annotation,
            splits: all || a.splits,
        }
    }
}

fn effective_config(a: &CheckArgs) -> anyhow::Result<Config> {
    let mut c = match &a.config {
        Some(p) => Config::load(p).with_context(|| format!("config {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(v) = a.max_distance {
        c.max_distance = v;
    }
    if let Some(v) = a.bands {
        c.bands = v;
    }
    if let Some(v) = a.purity_threshold {
        c.purity_threshold = v;
    }
    if let Some(v) = a.min_support {
        c.min_support = v;
    }
    if let Some(v) = a.delta {
        c.delta = v;
    }
    if let Some(v) = a.target_bound {
        c.target_bound = v;
    }
    if let Some(v) = a.p_hat {
        c.p_hat = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    Ok(c)
}

fn check(a: &CheckArgs) -> anyhow::Result<i32> {
    let config = effective_config(a)?;
    let registry = RecRegistry::standard();
    let generated_at = resolve_timestamp(a.output.generated_at.as_deref())?;
    let manifest = load_manifest(open(&a.manifest)?).with_context(|| format!("in {}", a.manifest.display()))?;
    let schema: Option<OddSchema> = a.odd.as_deref().map(read_json).transpose()?;
    let annotations: Option<AnnotationSet> = match &a.annotations {
        Some(p) => Some(load_annotations(open(p)?).with_context(|| format!("in {}", p.display()))?),
        None => None,
    };
    let attestations = load_attestation_file(a.attestations.as_deref(), &registry)?;
    let groups = Groups::from_args(a);

    let mut findings = Vec::new();
    if groups.integrity {
        integrity_checks(a, &manifest, &mut findings)?;
    }
    if groups.odd {
        if let Some(schema) = &schema {
            odd_checks(a, &config, &manifest, schema, &mut findings)?;
        }
    }
    if groups.consistency {
        consistency_checks(a, &config, &manifest, annotations.as_ref(), &mut findings)?;
    }
    if groups.annotation {
        annotation_checks(&config, &manifest, annotations.as_ref(), &attestations, &mut findings)?;
    }
    if groups.splits {
        split_checks(&config, &manifest, schema.as_ref(), &mut findings)?;
    }
    config.apply_severity(&mut findings);

    let currency_notes = schema.as_ref().and_then(|s| s.currency_notes.clone());
    if let Some(path) = &a.findings_out {
        let file = FindingsFile {
            dataset_id: manifest.dataset_id().to_string(),
            odd_currency_notes: currency_notes.clone(),
            findings: findings.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let meta = ReportMeta {
        dataset_id: manifest.dataset_id().to_string(),
        generated_at: generated_at.as_str().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        odd_currency_notes: currency_notes,
        lenient: a.output.lenient,
    };
    let report = assemble(&findings, &attestations, &registry, &meta)?;
    write_output(a.output.out.as_deref(), &render(&report, a.output.format))?;
    Ok(report.exit_code)
}

fn integrity_checks(a: &CheckArgs, manifest: &Manifest, out: &mut Vec<Finding>) -> anyhow::Result<()> {
    out.extend(check_lineage(manifest));
    if let Some(p) = &a.audit_log {
        let log = load_audit_log(open(p)?).with_context(|| format!("in {}", p.display()))?;
        out.extend(verify_audit_chain(&log));
    }
    if let Some(dir) = &a.content_dir {
        if !dir.is_dir() {
            bail!("content directory {} does not exist", dir.display());
        }
        out.extend(verify_item_digests(manifest, &DirResolver::new(dir)));
    }
    if let Some(p) = &a.seal {
        let seal: SealCommitment = read_json(p)?;
        out.push(verify_seal(manifest, &seal));
    }
    Ok(())
}

fn odd_checks(
    a: &CheckArgs,
    config: &Config,
    manifest: &Manifest,
    schema: &OddSchema,
    out: &mut Vec<Finding>,
) -> anyhow::Result<()> {
    out.extend(validate_schema(schema));
    out.extend(check_traceability(manifest, schema, config.missing_dimension));
    let dims: Vec<DimSelector> = match &config.coverage_dims {
        Some(d) => d.clone(),
        None => schema.dimensions.iter().map(|d| DimSelector::Single(d.name.clone())).collect(),
    };
    let (_, coverage_findings) = coverage(manifest, schema, &dims, config.min_count)?;
    out.extend(coverage_findings);
    if let Some(p) = &a.expected {
        let expected: ExpectedDistribution = read_json(p)?;
        match proportion_check(manifest, schema, config.proportion_split, &expected, &config.tv_thresholds) {
            Ok(f) => out.extend(f),
            Err(OddError::EmptySplit(s)) => out.push(Finding::fail(6, format!("split {s} has no items to compare"))),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn consistency_checks(
    a: &CheckArgs,
    config: &Config,
    manifest: &Manifest,
    annotations: Option<&AnnotationSet>,
    out: &mut Vec<Finding>,
) -> anyhow::Result<()> {
    let rules: Vec<ConsistencyRule> = a.rules.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let empty = AnnotationSet::default();
    out.extend(check_rules(manifest, annotations.unwrap_or(&empty), &rules)?);
    out.extend(check_representation(manifest));
    out.extend(duplicate_findings(manifest, &group_exact_duplicates(manifest)));
    out.extend(detect_outliers(manifest, &config.outliers)?);
    Ok(())
}

fn annotation_checks(
    config: &Config,
    manifest: &Manifest,
    annotations: Option<&AnnotationSet>,
    attestations: &[AttestationRecord],
    out: &mut Vec<Finding>,
) -> anyhow::Result<()> {
    let plan = audit_sample_plan(manifest.len().max(1) as u64, config.audit_delta, config.audit_target_bound)?;
    out.push(plan.finding());

    let Some(ann) = annotations else { return Ok(()) };
    out.extend(check_annotation_traceability(ann));
    out.extend(check_annotation_references(manifest, ann));
    match check_object_label_consistency(manifest, ann, &config.object_key) {
        Ok(f) => out.extend(f),
        Err(AnnotationError::UnknownField(k)) => {
            out.push(Finding::warn(27, format!("no item carries {k:?}; object label consistency not checked")))
        }
        Err(e) => return Err(e.into()),
    }
    let reviewed = attestations.iter().any(|r| r.rec_id == RecId::new(28));
    out.extend(check_ambiguity_handling(manifest, ann, reviewed));

    // unattributed records are reported under traceability and kept out of
    // the per-annotator statistics
    let named = AnnotationSet::new(ann.records().iter().filter(|r| !r.annotator.trim().is_empty()).cloned().collect())?;
    match agreement(&named) {
        Ok(result) => out.extend(agreement_findings(&result, config.min_kappa)),
        Err(AnnotationError::InsufficientOverlap) => {
            out.push(Finding::warn(29, "no two annotators share an item; agreement not measurable"))
        }
        Err(e) => return Err(e.into()),
    }
    let run_params = config.run_test();
    let rand_params = config.randomness();
    for annotator in named.annotators() {
        match run_length_test(&named, annotator, &run_params) {
            Ok(r) => out.push(r.finding(run_params.alpha)),
            Err(AnnotationError::InsufficientData { annotator, records }) => out.push(
                Finding::warn(36, format!("insufficient data: {annotator} has {records} record(s)")).with_evidence([annotator]),
            ),
            Err(e) => return Err(e.into()),
        }
        out.push(assignment_randomness(&named, annotator, &rand_params).finding);
    }
    Ok(())
}

fn split_checks(
    config: &Config,
    manifest: &Manifest,
    schema: Option<&OddSchema>,
    out: &mut Vec<Finding>,
) -> anyhow::Result<()> {
    out.extend(check_disjoint(manifest));
    out.extend(check_group_integrity(manifest));
    let scan = near_duplicate_leakage(manifest, config.max_distance, config.bands)?;
    out.extend(leakage_findings(manifest, &scan, config.max_distance));
    if let Some(schema) = schema {
        match bias_scan(manifest, schema, config.bias_split, config.purity_threshold, config.min_support) {
            Ok(f) => out.extend(f),
            Err(SplitsError::MissingLabels) => {
                out.push(Finding::warn(42, "no labelled items in scope; bias scan not possible"))
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.extend(check_test_size(manifest, &config.size_check())?);
    Ok(())
}

fn seal(a: &SealArgs) -> anyhow::Result<i32> {
    let manifest = load_manifest(open(&a.manifest)?)?;
    let sealed_at = resolve_timestamp(a.sealed_at.as_deref())?;
    let commitment = seal_split(&manifest, a.split, sealed_at)?;
    let mut bytes = serde_json::to_vec_pretty(&commitment)?;
    bytes.push(b'\n');
    write_output(a.out.as_deref(), &bytes)?;
    Ok(0)
}

fn verify(a: &VerifySealArgs) -> anyhow::Result<i32> {
    let manifest = load_manifest(open(&a.manifest)?)?;
    let seal: SealCommitment = read_json(&a.seal)?;
    let f = verify_seal(&manifest, &seal);
    println!("{}: {}", f.status, f.message);
    Ok(if f.status == crate::finding::Status::Pass { 0 } else { 1 })
}

fn size(a: &SizeArgs) -> anyhow::Result<i32> {
    match a.n {
        Some(n) => {
            let bound = test_bound(&BoundInputs::new(a.p_hat, n, a.delta)?);
            println!("{}", format_float(bound));
            if let Some(t) = a.target {
                return Ok(if bound <= t { 0 } else { 1 });
            }
        }
        None => {
            let target = a.target.expect("clap enforces --target without --n");
            println!("{}", required_test_size(a.p_hat, target, a.delta)?);
        }
    }
    Ok(0)
}

fn report(a: &ReportArgs) -> anyhow::Result<i32> {
    let registry = RecRegistry::standard();
    let saved: FindingsFile = read_json(&a.findings)?;
    let attestations = load_attestation_file(a.attestations.as_deref(), &registry)?;
    let meta = ReportMeta {
        dataset_id: saved.dataset_id,
        generated_at: resolve_timestamp(a.output.generated_at.as_deref())?.as_str().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        odd_currency_notes: saved.odd_currency_notes,
        lenient: a.output.lenient,
    };
    let report = assemble(&saved.findings, &attestations, &registry, &meta)?;
    write_output(a.output.out.as_deref(), &render(&report, a.output.format))?;
    Ok(report.exit_code)
}
