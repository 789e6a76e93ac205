//! Small builders shared by unit tests.

use crate::digest::ContentDigest;
use crate::manifest::{DataItem, Lineage, Manifest, ManifestHeader, SourceDecl, Split};
use crate::timestamp::Timestamp;

pub(crate) fn header() -> ManifestHeader {
    ManifestHeader {
        schema_version: "1.0".into(),
        dataset_id: "d".into(),
        created: Timestamp::parse("2024-01-01T00:00:00Z").unwrap(),
        sources: vec![SourceDecl { source_id: "s".into(), description: String::new(), acquisition_config_version: "1".into() }],
    }
}

/// A raw item whose digest is derived from its id.
pub(crate) fn item(id: &str, split: Split) -> DataItem {
    DataItem {
        id: id.to_string(),
        digest: ContentDigest::of(id.as_bytes()),
        source_id: "s".into(),
        split,
        group_id: None,
        odd: Default::default(),
        attributes: Default::default(),
        lineage: Lineage::raw(),
        ambiguous: false,
        simhash64: None,
        label: None,
    }
}

pub(crate) fn manifest_of(items: Vec<DataItem>) -> Manifest {
    Manifest::new(header(), items).unwrap()
}
