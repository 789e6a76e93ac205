use std::collections::BTreeMap;

use super::SplitsError;
use crate::finding::Finding;
use crate::manifest::{DataItem, Manifest, Split};
use crate::odd::OddSchema;

pub const DEFAULT_PURITY_THRESHOLD: f64 = 0.99;
pub const DEFAULT_MIN_SUPPORT: u64 = 30;

/// REC 42: flag ODD levels that almost determine the label.
///
/// A level is suspicious when, among items at that level (at least
/// `min_support` of them), one label reaches `purity_threshold` while the same
/// label's overall frequency stays below it. Items without a label are left
/// out; `split` restricts the scan (training data by default in the CLI).
pub fn bias_scan(
    manifest: &Manifest,
    schema: &OddSchema,
    split: Option<Split>,
    purity_threshold: f64,
    min_support: u64,
) -> Result<Vec<Finding>, SplitsError> {
    let labelled: Vec<(&DataItem, &str)> = manifest
        .items()
        .iter()
        .filter(|it| split.is_none_or(|s| it.split == s))
        .filter_map(|it| it.label.as_deref().map(|l| (it, l)))
        .collect();
    if labelled.is_empty() {
        return Err(SplitsError::MissingLabels);
    }

    let total = labelled.len() as f64;
    let mut global: BTreeMap<&str, u64> = BTreeMap::new();
    for (_, l) in &labelled {
        *global.entry(l).or_insert(0) += 1;
    }

    let mut findings = Vec::new();
    let mut levels_scanned = 0usize;
    for dim in &schema.dimensions {
        // level → label → count
        let mut table: BTreeMap<String, BTreeMap<&str, u64>> = BTreeMap::new();
        for (item, label) in &labelled {
            if let Some(cell) = item.odd.get(&dim.name).and_then(|v| dim.cell_of(v).ok()) {
                *table.entry(cell).or_default().entry(label).or_insert(0) += 1;
            }
        }
        for (level, labels) in &table {
            let support: u64 = labels.values().sum();
            if support < min_support {
                continue;
            }
            levels_scanned += 1;
            for (label, &count) in labels {
                let conditional = count as f64 / support as f64;
                let overall = global[label] as f64 / total;
                if conditional >= purity_threshold && overall < purity_threshold {
                    findings.push(
                        Finding::fail(
                            42,
                            format!(
                                "{}={level} almost determines label {label:?}: {:.1}% of {support} items vs {:.1}% overall",
                                dim.name,
                                conditional * 100.0,
                                overall * 100.0
                            ),
                        )
                        .with_metric("conditional_frequency", conditional)
                        .with_metric("global_frequency", overall)
                        .with_metric("support", support),
                    );
                }
            }
        }
    }
    if findings.is_empty() {
        findings.push(
            Finding::pass(42, "no ODD level determines a label")
                .with_metric("levels_scanned", levels_scanned)
                .with_metric("labelled_items", labelled.len()),
        );
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finding::Status;
    use crate::odd::OddDimension;
    use crate::splits::tests::labelled_manifest;

    fn schema() -> OddSchema {
        OddSchema {
            name: String::new(),
            dimensions: vec![
                OddDimension::categorical("location", &["indoor", "outdoor"]),
                OddDimension::categorical("light", &["day", "night"]),
            ],
            currency_notes: None,
        }
    }

    #[test]
    fn indoor_cats() {
        // 50 indoor cats, 50 outdoor dogs; light alternates independently.
        let rows: Vec<_> = (0..100)
            .map(|i| {
                let (loc, label) = if i < 50 { ("indoor", "cat") } else { ("outdoor", "dog") };
                (loc, if i % 2 == 0 { "day" } else { "night" }, label)
            })
            .collect();
        let m = labelled_manifest(&rows);
        let f = bias_scan(&m, &schema(), None, 0.99, 30).unwrap();
        let hit = f.iter().find(|f| f.message.starts_with("location=indoor")).unwrap();
        assert_eq!(hit.status, Status::Fail);
        assert_eq!(hit.metrics["conditional_frequency"].as_f64(), 1.0);
        assert_eq!(hit.metrics["global_frequency"].as_f64(), 0.5);
        assert!(hit.message.contains("\"cat\""));
        assert!(!f.iter().any(|f| f.message.starts_with("light=")));
    }

    #[test]
    fn independent_labels_pass() {
        let locs = ["indoor", "outdoor"];
        let lights = ["day", "night"];
        let labels = ["cat", "dog"];
        let mut rows = Vec::new();
        for (a, loc) in locs.iter().enumerate() {
            for (b, light) in lights.iter().enumerate() {
                for (c, label) in labels.iter().enumerate() {
                    for _ in 0..(10 + a + b + c) {
                        rows.push((*loc, *light, *label));
                    }
                }
            }
        }
        let f = bias_scan(&labelled_manifest(&rows), &schema(), None, 0.99, 30).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].status, Status::Pass);
    }

    #[test]
    fn small_levels_skipped() {
        let mut rows = vec![("indoor", "day", "cat"); 3];
        rows.extend(vec![("outdoor", "night", "dog"); 40]);
        rows.extend(vec![("outdoor", "day", "cat"); 40]);
        let f = bias_scan(&labelled_manifest(&rows), &schema(), None, 0.99, 30).unwrap();
        assert!(!f.iter().any(|f| f.message.starts_with("location=indoor")), "{f:#?}");
    }

    #[test]
    fn missing_labels() {
        let m = labelled_manifest(&[]);
        assert!(matches!(bias_scan(&m, &schema(), None, 0.99, 30), Err(SplitsError::MissingLabels)));
    }
}
