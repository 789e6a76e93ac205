//! Longest-run test on an annotator's label sequence.
//!
//! Long streaks of one label can come from fatigue or anchoring rather than
//! from the data. Under the null, labels are i.i.d. draws from the annotator's
//! own label frequencies; the p-value is P(longest run ≥ observed).

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::AnnotationError;
use crate::finding::Finding;
use crate::manifest::AnnotationSet;

/// Sequences with at most this many label combinations are enumerated.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 20;
/// Above this many simulated labels (length × draws) the exact chain
/// recursion replaces simulation.
pub const SIMULATION_BUDGET: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RunMethod {
    Exhaustive,
    MonteCarlo { seed: u64, draws: u64 },
    /// Exact recursion over (last label, current run length) states.
    MarkovChain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunTestParams {
    pub seed: u64,
    pub draws: u64,
    pub alpha: f64,
}

impl Default for RunTestParams {
    fn default() -> Self {
        RunTestParams { seed: 0, draws: 100_000, alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTestResult {
    pub annotator: String,
    pub longest_run: usize,
    pub labels_sequence_length: usize,
    pub p_value: f64,
    pub method: RunMethod,
}

impl RunTestResult {
    /// REC 36 finding: fail when the streak is improbable at level `alpha`.
    pub fn finding(&self, alpha: f64) -> Finding {
        let summary = format!(
            "{}: longest run {} in {} labels, p = {:.4}",
            self.annotator, self.longest_run, self.labels_sequence_length, self.p_value
        );
        let f = if self.p_value < alpha {
            Finding::fail(36, format!("improbable label streak for {summary}"))
        } else {
            Finding::pass(36, summary)
        };
        f.with_evidence([self.annotator.as_str()])
            .with_metric("longest_run", self.longest_run)
            .with_metric("sequence_length", self.labels_sequence_length)
            .with_metric("p_value", self.p_value)
    }
}

/// Longest stretch of equal consecutive elements; 0 for an empty slice.
pub fn longest_run<T: PartialEq>(seq: &[T]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for (i, x) in seq.iter().enumerate() {
        run = if i > 0 && seq[i - 1] == *x { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

pub fn run_length_test(
    annotations: &AnnotationSet,
    annotator: &str,
    params: &RunTestParams,
) -> Result<RunTestResult, AnnotationError> {
    let records = annotations.by_annotator(annotator);
    if records.len() < 2 {
        return Err(AnnotationError::InsufficientData { annotator: annotator.to_string(), records: records.len() });
    }
    // encode labels as dense indices in sorted label order
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &records {
        *counts.entry(r.label.as_str()).or_insert(0) += 1;
    }
    let index: BTreeMap<&str, usize> = counts.keys().enumerate().map(|(i, l)| (*l, i)).collect();
    let seq: Vec<usize> = records.iter().map(|r| index[r.label.as_str()]).collect();
    let weights: Vec<u64> = counts.values().copied().collect();

    let observed = longest_run(&seq);
    let (p_value, method) = run_p_value(&weights, seq.len(), observed, params);
    Ok(RunTestResult {
        annotator: annotator.to_string(),
        longest_run: observed,
        labels_sequence_length: seq.len(),
        p_value,
        method,
    })
}

/// P(longest run ≥ `threshold`) for `m` i.i.d. draws with probabilities
/// proportional to `weights`.
pub fn run_p_value(weights: &[u64], m: usize, threshold: usize, params: &RunTestParams) -> (f64, RunMethod) {
    let total: u64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|&w| w as f64 / total as f64).collect();
    let k = weights.len() as u64;
    if threshold > m {
        return (0.0, RunMethod::Exhaustive);
    }
    if threshold <= 1 {
        return (1.0, RunMethod::Exhaustive);
    }
    if k <= 1 {
        // a single label makes the whole sequence one run
        return (1.0, RunMethod::Exhaustive);
    }
    let combos = u32::try_from(m).ok().and_then(|m| k.checked_pow(m));
    if combos.is_some_and(|c| c <= EXHAUSTIVE_LIMIT) {
        return (exhaustive(&probs, m, threshold), RunMethod::Exhaustive);
    }
    if (m as u64).saturating_mul(params.draws) <= SIMULATION_BUDGET {
        let p = monte_carlo(weights, m, threshold, params.seed, params.draws);
        return (p, RunMethod::MonteCarlo { seed: params.seed, draws: params.draws });
    }
    (markov_chain(&probs, m, threshold), RunMethod::MarkovChain)
}

fn exhaustive(probs: &[f64], m: usize, threshold: usize) -> f64 {
    fn walk(probs: &[f64], left: usize, last: usize, run: usize, mass: f64, threshold: usize) -> f64 {
        if run >= threshold {
            // every continuation of this prefix qualifies
            return mass;
        }
        if left == 0 {
            return 0.0;
        }
        probs
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let next = if j == last { run + 1 } else { 1 };
                walk(probs, left - 1, j, next, mass * p, threshold)
            })
            .sum()
    }
    probs
        .iter()
        .enumerate()
        .map(|(j, p)| walk(probs, m - 1, j, 1, *p, threshold))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

fn monte_carlo(weights: &[u64], m: usize, threshold: usize, seed: u64, draws: u64) -> f64 {
    let dist = WeightedIndex::new(weights).expect("weights are positive counts");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..draws {
        let mut last = usize::MAX;
        let mut run = 0;
        for _ in 0..m {
            let x = dist.sample(&mut rng);
            run = if x == last { run + 1 } else { 1 };
            last = x;
            if run >= threshold {
                hits += 1;
                break;
            }
        }
    }
    hits as f64 / draws as f64
}

fn markov_chain(probs: &[f64], m: usize, threshold: usize) -> f64 {
    let k = probs.len();
    let width = threshold - 1;
    // mass[j * width + (r - 1)]: no run ≥ threshold yet, last label j, current run r
    let mut mass = vec![0.0f64; k * width];
    for (j, p) in probs.iter().enumerate() {
        mass[j * width] = *p;
    }
    let mut next = vec![0.0f64; k * width];
    for _ in 1..m {
        let per_label: Vec<f64> = (0..k).map(|j| mass[j * width..(j + 1) * width].iter().sum()).collect();
        let alive: f64 = per_label.iter().sum();
        for j in 0..k {
            let row = &mut next[j * width..(j + 1) * width];
            row[0] = probs[j] * (alive - per_label[j]);
            for r in 1..width {
                row[r] = mass[j * width + r - 1] * probs[j];
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    (1.0 - mass.iter().sum::<f64>()).clamp(0.0, 1.0)
}
