//! Thresholds and policies for `dds check`, read from a JSON file.
//! Every field is optional; command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{RandomnessParams, RunTestParams, DEFAULT_MIN_KAPPA};
use crate::consistency::OutlierPolicy;
use crate::finding::{Finding, RecId, Status};
use crate::manifest::Split;
use crate::odd::{DimSelector, MissingDimensionPolicy, TvThresholds, DEFAULT_MIN_COUNT};
use crate::splits::{SizeCheck, DEFAULT_BANDS, DEFAULT_MAX_DISTANCE, DEFAULT_MIN_SUPPORT, DEFAULT_PURITY_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Minimum items per ODD coverage cell.
    pub min_count: u64,
    /// Coverage selectors; `None` means every schema dimension on its own.
    pub coverage_dims: Option<Vec<DimSelector>>,
    pub tv_thresholds: TvThresholds,
    /// Split compared against the expected operational proportions.
    pub proportion_split: Split,
    pub missing_dimension: MissingDimensionPolicy,
    pub outliers: OutlierPolicy,

    pub max_distance: u32,
    pub bands: u32,
    pub purity_threshold: f64,
    pub min_support: u64,
    /// Split scanned for label bias; `None` scans every item.
    pub bias_split: Option<Split>,
    pub delta: f64,
    pub target_bound: f64,
    pub p_hat: f64,

    pub min_kappa: f64,
    /// Attribute naming the physical object an item shows.
    pub object_key: String,
    pub audit_delta: f64,
    pub audit_target_bound: f64,
    pub run_test_alpha: f64,
    pub mc_draws: u64,
    pub rho_threshold: f64,
    pub randomness_alpha: f64,
    pub permutations: u64,
    pub seed: u64,

    /// Recommendations whose warnings block the gate.
    pub warn_as_fail: Vec<RecId>,
}

impl Default for Config {
    fn default() -> Self {
        let size = SizeCheck::default();
        let runs = RunTestParams::default();
        let rand = RandomnessParams::default();
        Config {
            min_count: DEFAULT_MIN_COUNT,
            coverage_dims: None,
            tv_thresholds: TvThresholds::default(),
            proportion_split: Split::Test,
            missing_dimension: MissingDimensionPolicy::default(),
            outliers: OutlierPolicy::default(),
            max_distance: DEFAULT_MAX_DISTANCE,
            bands: DEFAULT_BANDS,
            purity_threshold: DEFAULT_PURITY_THRESHOLD,
            min_support: DEFAULT_MIN_SUPPORT,
            bias_split: Some(Split::Train),
            delta: size.delta,
            target_bound: size.target_bound,
            p_hat: size.p_hat,
            min_kappa: DEFAULT_MIN_KAPPA,
            object_key: "object_id".to_string(),
            audit_delta: 0.05,
            audit_target_bound: 0.01,
            run_test_alpha: runs.alpha,
            mc_draws: runs.draws,
            rho_threshold: rand.rho_threshold,
            randomness_alpha: rand.alpha,
            permutations: rand.permutations,
            seed: 0,
            warn_as_fail: Vec::new(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn size_check(&self) -> SizeCheck {
        SizeCheck { p_hat: self.p_hat, delta: self.delta, target_bound: self.target_bound }
    }

    pub fn run_test(&self) -> RunTestParams {
        RunTestParams { seed: self.seed, draws: self.mc_draws, alpha: self.run_test_alpha }
    }

    pub fn randomness(&self) -> RandomnessParams {
        RandomnessParams {
            permutations: self.permutations,
            seed: self.seed,
            rho_threshold: self.rho_threshold,
            alpha: self.randomness_alpha,
        }
    }

    /// Applies `warn_as_fail` to a finding list.
    pub fn apply_severity(&self, findings: &mut [Finding]) {
        for f in findings.iter_mut() {
            if f.status == Status::Warn && self.warn_as_fail.contains(&f.rec_id) {
                f.status = Status::Fail;
            }
        }
    }
}
