use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::AnnotationError;
use crate::finding::Finding;
use crate::manifest::AnnotationSet;

pub const DEFAULT_MIN_KAPPA: f64 = 0.6;

/// Cohen's kappa for one annotator pair over the items both labelled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAgreement {
    pub annotator_a: String,
    pub annotator_b: String,
    pub n_shared: usize,
    pub p_o: f64,
    pub p_e: f64,
    pub kappa: f64,
    /// Both annotators used one and the same label throughout (p_e = 1).
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementResult {
    /// Pairs with at least one shared item, ordered by annotator names.
    pub pairs: Vec<PairAgreement>,
    pub mean_kappa: f64,
}

/// Pairwise Cohen's kappa; overall agreement is the unweighted mean.
pub fn agreement(annotations: &AnnotationSet) -> Result<AgreementResult, AnnotationError> {
    // annotator → item → label
    let mut labels: BTreeMap<&str, HashMap<&str, &str>> = BTreeMap::new();
    for r in annotations.records() {
        labels.entry(r.annotator.as_str()).or_default().insert(r.item_id.as_str(), r.label.as_str());
    }
    let annotators: Vec<(&str, &HashMap<&str, &str>)> = labels.iter().map(|(k, v)| (*k, v)).collect();

    let mut pairs = Vec::new();
    for (i, (a, la)) in annotators.iter().enumerate() {
        for (b, lb) in &annotators[i + 1..] {
            if let Some(p) = pair_kappa(a, la, b, lb) {
                pairs.push(p);
            }
        }
    }
    if pairs.is_empty() {
        return Err(AnnotationError::InsufficientOverlap);
    }
    let mean_kappa = pairs.iter().map(|p| p.kappa).sum::<f64>() / pairs.len() as f64;
    Ok(AgreementResult { pairs, mean_kappa })
}

fn pair_kappa(a: &str, la: &HashMap<&str, &str>, b: &str, lb: &HashMap<&str, &str>) -> Option<PairAgreement> {
    let mut n = 0usize;
    let mut agree = 0usize;
    let mut marg_a: HashMap<&str, usize> = HashMap::new();
    let mut marg_b: HashMap<&str, usize> = HashMap::new();
    for (item, label_a) in la {
        let Some(label_b) = lb.get(item) else { continue };
        n += 1;
        if label_a == label_b {
            agree += 1;
        }
        *marg_a.entry(label_a).or_insert(0) += 1;
        *marg_b.entry(label_b).or_insert(0) += 1;
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let p_o = agree as f64 / nf;
    // sum in a fixed label order so results do not depend on hash iteration
    let mut shared: Vec<(&str, usize, usize)> =
        marg_a.iter().filter_map(|(l, &ca)| marg_b.get(l).map(|&cb| (*l, ca, cb))).collect();
    shared.sort_unstable();
    let p_e = shared.iter().map(|&(_, ca, cb)| (ca as f64 / nf) * (cb as f64 / nf)).sum::<f64>();
    let degenerate = marg_a.len() == 1 && marg_b.len() == 1 && shared.len() == 1;
    let kappa = if degenerate { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    Some(PairAgreement {
        annotator_a: a.to_string(),
        annotator_b: b.to_string(),
        n_shared: n,
        p_o,
        p_e: if degenerate { 1.0 } else { p_e },
        kappa,
        degenerate,
    })
}

/// REC 29 findings: warn for each pair whose kappa falls below `min_kappa`.
pub fn agreement_findings(result: &AgreementResult, min_kappa: f64) -> Vec<Finding> {
    let mut findings = Vec::new();
    for p in &result.pairs {
        let with_stats = |f: Finding| {
            f.with_evidence([p.annotator_a.as_str(), p.annotator_b.as_str()])
                .with_metric("kappa", p.kappa)
                .with_metric("p_o", p.p_o)
                .with_metric("p_e", p.p_e)
                .with_metric("n_shared", p.n_shared)
        };
        if p.degenerate {
            findings.push(with_stats(Finding::pass(
                29,
                format!("{} and {} agree fully with degenerate marginals (one label each)", p.annotator_a, p.annotator_b),
            )));
        } else if p.kappa < min_kappa {
            findings.push(with_stats(Finding::warn(
                29,
                format!("{} and {} agree weakly: kappa {:.3} below {min_kappa}", p.annotator_a, p.annotator_b, p.kappa),
            )));
        }
    }
    findings.push(
        Finding::pass(29, format!("mean pairwise kappa {:.3} over {} pair(s)", result.mean_kappa, result.pairs.len()))
            .with_metric("mean_kappa", result.mean_kappa)
            .with_metric("pairs", result.pairs.len()),
    );
    findings
}
