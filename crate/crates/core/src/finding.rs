//! Check outcomes bound to a recommendation id.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of recommendations tracked by the registry.
pub const REC_COUNT: u8 = 44;

/// Recommendation identifier in `1..=44`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RecId(u8);

impl RecId {
    /// Panics if `id` is outside `1..=44`; use `TryFrom` for untrusted input.
    pub const fn new(id: u8) -> Self {
        assert!(id >= 1 && id <= REC_COUNT, "rec id out of range");
        RecId(id)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = RecId> {
        (1..=REC_COUNT).map(RecId)
    }
}

impl TryFrom<u8> for RecId {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        if (1..=REC_COUNT).contains(&value) {
            Ok(RecId(value))
        } else {
            Err(format!("rec id {value} outside 1..={REC_COUNT}"))
        }
    }
}

impl From<RecId> for u8 {
    fn from(id: RecId) -> u8 {
        id.0
    }
}

impl fmt::Display for RecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "REC {}", self.0)
    }
}

/// Outcome status. The derived ordering runs best to worst, so `max` is the
/// worst-status merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    AttestedPass,
    NotApplicable,
    Warn,
    ManualPending,
    AttestedFail,
    Fail,
}

impl Status {
    pub const ALL: [Status; 7] = [
        Status::Pass,
        Status::AttestedPass,
        Status::NotApplicable,
        Status::Warn,
        Status::ManualPending,
        Status::AttestedFail,
        Status::Fail,
    ];

    /// Statuses an automated check may emit.
    pub fn is_automated(self) -> bool {
        matches!(self, Status::Pass | Status::Warn | Status::Fail)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::AttestedPass => "attested_pass",
            Status::NotApplicable => "not_applicable",
            Status::Warn => "warn",
            Status::ManualPending => "manual_pending",
            Status::AttestedFail => "attested_fail",
            Status::Fail => "fail",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A statistic attached to a finding. Counts render as integers, values as
/// fixed-precision floats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Count(u64),
    Value(f64),
}

impl Metric {
    pub fn as_f64(self) -> f64 {
        match self {
            Metric::Count(c) => c as f64,
            Metric::Value(v) => v,
        }
    }
}

impl From<u64> for Metric {
    fn from(v: u64) -> Self {
        Metric::Count(v)
    }
}

impl From<usize> for Metric {
    fn from(v: usize) -> Self {
        Metric::Count(v as u64)
    }
}

impl From<f64> for Metric {
    fn from(v: f64) -> Self {
        Metric::Value(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finding {
    pub rec_id: RecId,
    pub status: Status,
    pub message: String,
    #[serde(default)]
    pub evidence: Vec<String>,
    #[serde(default)]
    pub metrics: BTreeMap<String, Metric>,
}

impl Finding {
    pub fn new(rec: u8, status: Status, message: impl Into<String>) -> Self {
        Finding {
            rec_id: RecId::new(rec),
            status,
            message: message.into(),
            evidence: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn pass(rec: u8, message: impl Into<String>) -> Self {
        Self::new(rec, Status::Pass, message)
    }

    pub fn warn(rec: u8, message: impl Into<String>) -> Self {
        Self::new(rec, Status::Warn, message)
    }

    pub fn fail(rec: u8, message: impl Into<String>) -> Self {
        Self::new(rec, Status::Fail, message)
    }

    pub fn with_evidence<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.evidence.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn with_metric(mut self, name: &str, value: impl Into<Metric>) -> Self {
        self.metrics.insert(name.to_string(), value.into());
        self
    }

    pub fn rec(&self) -> u8 {
        self.rec_id.get()
    }
}

/// Worst status over a set of findings, `None` when empty.
pub fn worst_status<'a>(findings: impl IntoIterator<Item = &'a Finding>) -> Option<Status> {
    findings.into_iter().map(|f| f.status).max()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_order_matches_severity() {
        use Status::*;
        let worst_to_best = [Fail, AttestedFail, ManualPending, Warn, NotApplicable, AttestedPass, Pass];
        for w in worst_to_best.windows(2) {
            assert!(w[0] > w[1], "{:?} should be worse than {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn rec_id_bounds() {
        assert!(RecId::try_from(0).is_err());
        assert!(RecId::try_from(45).is_err());
        assert_eq!(RecId::try_from(44).unwrap().get(), 44);
        assert_eq!(RecId::all().count(), 44);
        assert!(serde_json::from_str::<RecId>("45").is_err());
    }

    #[test]
    fn finding_roundtrips_through_json() {
        let f = Finding::fail(39, "overlap")
            .with_evidence(["a", "b"])
            .with_metric("count", 2usize)
            .with_metric("tv_distance", 0.1);
        let text = serde_json::to_string(&f).unwrap();
        let back: Finding = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
    }
}
