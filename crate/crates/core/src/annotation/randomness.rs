//! Does an annotator's processing order follow storage order?
//!
//! Spearman's rho between `seq` and `storage_index`, with a two-sided
//! permutation p-value. Large sequences use the normal approximation
//! rho·sqrt(n − 1) ~ N(0, 1) instead of resampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::finding::Finding;
use crate::manifest::AnnotationSet;

pub const MIN_RECORDS: usize = 10;
/// Above this many permuted elements (n × permutations) the normal
/// approximation is used.
pub const PERMUTATION_BUDGET: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomnessParams {
    pub permutations: u64,
    pub seed: u64,
    pub rho_threshold: f64,
    pub alpha: f64,
}

impl Default for RandomnessParams {
    fn default() -> Self {
        RandomnessParams { permutations: 10_000, seed: 0, rho_threshold: 0.5, alpha: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RandomnessMethod {
    Permutation { seed: u64, permutations: u64 },
    NormalApproximation,
    /// Too few records or no rank variation; nothing was tested.
    NotTested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomnessResult {
    pub annotator: String,
    pub n: usize,
    pub rho: f64,
    pub p_value: f64,
    pub method: RandomnessMethod,
    /// REC 37 finding for this annotator.
    pub finding: Finding,
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &pos in &order[i..=j] {
            ranks[pos] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn centered(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Spearman rank correlation; `None` if either side has no rank variation.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "paired samples");
    if x.len() < 2 {
        return None;
    }
    let a = centered(average_ranks(x));
    let b = centered(average_ranks(y));
    let norm = (dot(&a, &a) * dot(&b, &b)).sqrt();
    (norm > 0.0).then(|| dot(&a, &b) / norm)
}

pub fn assignment_randomness(annotations: &AnnotationSet, annotator: &str, params: &RandomnessParams) -> RandomnessResult {
    let records = annotations.by_annotator(annotator);
    let n = records.len();
    let seq: Vec<f64> = records.iter().map(|r| r.seq as f64).collect();
    let storage: Vec<f64> = records.iter().map(|r| r.storage_index as f64).collect();

    let untested = |rho: f64, finding: Finding| RandomnessResult {
        annotator: annotator.to_string(),
        n,
        rho,
        p_value: 1.0,
        method: RandomnessMethod::NotTested,
        finding: finding.with_evidence([annotator]).with_metric("records", n),
    };
    if n < MIN_RECORDS {
        let rho = spearman_rho(&seq, &storage).unwrap_or(0.0);
        return untested(
            rho,
            Finding::warn(37, format!("insufficient data: {annotator} has {n} record(s), {MIN_RECORDS} needed")),
        );
    }
    let a = centered(average_ranks(&seq));
    let b = centered(average_ranks(&storage));
    let norm = (dot(&a, &a) * dot(&b, &b)).sqrt();
    if norm == 0.0 {
        return untested(0.0, Finding::pass(37, format!("{annotator}: no variation in order, correlation undefined")));
    }
    let observed = dot(&a, &b);
    let rho = observed / norm;

    let (p_value, method) = if (n as u64).saturating_mul(params.permutations) <= PERMUTATION_BUDGET {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut shuffled = b.clone();
        let cutoff = observed.abs() * (1.0 - 1e-12);
        let mut extreme = 0u64;
        for _ in 0..params.permutations {
            shuffled.shuffle(&mut rng);
            if dot(&a, &shuffled).abs() >= cutoff {
                extreme += 1;
            }
        }
        (
            (extreme + 1) as f64 / (params.permutations + 1) as f64,
            RandomnessMethod::Permutation { seed: params.seed, permutations: params.permutations },
        )
    } else {
        let z = rho.abs() * ((n - 1) as f64).sqrt();
        (libm::erfc(z / std::f64::consts::SQRT_2), RandomnessMethod::NormalApproximation)
    };

    let summary = format!("{annotator}: rank correlation of processing and storage order {rho:.3}, p = {p_value:.4}");
    let finding = if rho.abs() > params.rho_threshold && p_value < params.alpha {
        Finding::fail(37, format!("items not assigned randomly: {summary}"))
    } else {
        Finding::pass(37, summary)
    };
    RandomnessResult {
        annotator: annotator.to_string(),
        n,
        rho,
        p_value,
        method,
        finding: finding
            .with_evidence([annotator])
            .with_metric("rho", rho)
            .with_metric("p_value", p_value)
            .with_metric("records", n),
    }
}
