//! Near-duplicate leakage between splits via a banded SimHash index.
//!
//! Splitting the 64-bit signature into `bands` equal segments, any two
//! signatures within Hamming distance `bands - 1` agree on at least one whole
//! segment (pigeonhole), so bucketing by segment finds every such pair.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SplitsError;
use crate::finding::Finding;
use crate::manifest::{DataItem, Manifest};

pub const DEFAULT_BANDS: u32 = 4;
pub const DEFAULT_MAX_DISTANCE: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LeakageKind {
    Exact,
    Near { distance: u32 },
}

/// Two items in different splits that are too similar. `item_a < item_b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LeakagePair {
    pub item_a: String,
    pub item_b: String,
    pub kind: LeakageKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LeakageScan {
    /// Sorted by `(item_a, item_b)`.
    pub pairs: Vec<LeakagePair>,
    /// Assigned items without a signature.
    pub skipped: usize,
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

pub fn validate_banding(max_distance: u32, bands: u32) -> Result<(), SplitsError> {
    let invalid = |reason: &str| SplitsError::InvalidBanding { bands, max_distance, reason: reason.to_string() };
    if bands == 0 || 64 % bands != 0 {
        return Err(invalid("bands must divide 64"));
    }
    if max_distance >= bands {
        return Err(invalid("max_distance must be below bands for complete recall"));
    }
    Ok(())
}

/// All cross-split pairs with Hamming distance ≤ `max_distance`.
/// Items with split `unassigned` take no part.
pub fn near_duplicate_leakage(manifest: &Manifest, max_distance: u32, bands: u32) -> Result<LeakageScan, SplitsError> {
    validate_banding(max_distance, bands)?;
    let width = 64 / bands;
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };

    let mut skipped = 0usize;
    let signed: Vec<(&DataItem, u64)> = manifest
        .items()
        .iter()
        .filter(|it| it.split.is_assigned())
        .filter_map(|it| match it.simhash64 {
            Some(h) => Some((it, h)),
            None => {
                skipped += 1;
                None
            }
        })
        .collect();

    let mut pairs: Vec<LeakagePair> = (0..bands)
        .into_par_iter()
        .flat_map_iter(|band| {
            let shift = band * width;
            let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
            for (idx, (_, h)) in signed.iter().enumerate() {
                buckets.entry((h >> shift) & mask).or_default().push(idx);
            }
            let mut found = Vec::new();
            for members in buckets.values() {
                for (k, &i) in members.iter().enumerate() {
                    for &j in &members[k + 1..] {
                        let (a, ha) = signed[i];
                        let (b, hb) = signed[j];
                        if a.split == b.split {
                            continue;
                        }
                        let d = hamming(ha, hb);
                        if d <= max_distance {
                            found.push(ordered_pair(a, b, d));
                        }
                    }
                }
            }
            found
        })
        .collect();
    pairs.sort();
    pairs.dedup();
    Ok(LeakageScan { pairs, skipped })
}

fn ordered_pair(a: &DataItem, b: &DataItem, distance: u32) -> LeakagePair {
    let (x, y) = if a.id <= b.id { (a, b) } else { (b, a) };
    LeakagePair { item_a: x.id.clone(), item_b: y.id.clone(), kind: LeakageKind::Near { distance } }
}

/// REC 43 findings for a scan.
pub fn leakage_findings(manifest: &Manifest, scan: &LeakageScan, max_distance: u32) -> Vec<Finding> {
    let mut findings: Vec<Finding> = scan
        .pairs
        .iter()
        .map(|p| {
            let split_of = |id: &str| manifest.item(id).map(|it| it.split.as_str()).unwrap_or("?");
            let distance = match p.kind {
                LeakageKind::Exact => 0,
                LeakageKind::Near { distance } => distance,
            };
            Finding::fail(
                43,
                format!(
                    "near-duplicate across splits: {} ({}) and {} ({}) at Hamming distance {distance}",
                    p.item_a,
                    split_of(&p.item_a),
                    p.item_b,
                    split_of(&p.item_b)
                ),
            )
            .with_evidence([p.item_a.as_str(), p.item_b.as_str()])
            .with_metric("hamming_distance", u64::from(distance))
        })
        .collect();
    if scan.skipped > 0 {
        findings.push(
            Finding::warn(43, format!("{} assigned item(s) have no simhash64 and were not scanned", scan.skipped))
                .with_metric("skipped", scan.skipped),
        );
    }
    if scan.pairs.is_empty() {
        findings.push(
            Finding::pass(43, format!("no cross-split near-duplicates within Hamming distance {max_distance}"))
                .with_metric("max_distance", u64::from(max_distance)),
        );
    }
    findings
}
