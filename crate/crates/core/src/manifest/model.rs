use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::ContentDigest;
use crate::timestamp::Timestamp;

/// Manifest schema versions this build reads.
pub const SUPPORTED_SCHEMA_VERSIONS: &[&str] = &["1.0"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDecl {
    pub source_id: String,
    #[serde(default)]
    pub description: String,
    /// Empty when the source is not under configuration management.
    #[serde(default)]
    pub acquisition_config_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub schema_version: String,
    pub dataset_id: String,
    pub created: Timestamp,
    pub sources: Vec<SourceDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
    Unassigned,
}

impl Split {
    /// The three roles that take part in model development.
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn is_assigned(self) -> bool {
        self != Split::Unassigned
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformStep {
    pub op_name: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    pub tool_version: String,
}

impl TransformStep {
    pub const PARENT_PARAM: &'static str = "parent_id";

    pub fn is_augmentation(&self) -> bool {
        self.op_name.starts_with("augment") || self.params.contains_key(Self::PARENT_PARAM)
    }

    pub fn parent_id(&self) -> Option<&str> {
        self.params.get(Self::PARENT_PARAM).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lineage {
    #[serde(default)]
    pub raw_uri: Option<String>,
    pub is_raw: bool,
    #[serde(default)]
    pub transforms: Vec<TransformStep>,
}

impl Lineage {
    pub fn raw() -> Self {
        Lineage { raw_uri: None, is_raw: true, transforms: Vec::new() }
    }

    /// Parent ids named by augmentation steps.
    pub fn parents(&self) -> impl Iterator<Item = &str> {
        self.transforms.iter().filter_map(TransformStep::parent_id)
    }
}

/// One sample of the dataset.
///
/// `odd` holds operational-domain values keyed by dimension name; `attributes`
/// holds any other per-item fields that consistency rules may reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataItem {
    pub id: String,
    pub digest: ContentDigest,
    pub source_id: String,
    pub split: Split,
    #[serde(default)]
    pub group_id: Option<String>,
    #[serde(default)]
    pub odd: BTreeMap<String, Value>,
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
    pub lineage: Lineage,
    #[serde(default)]
    pub ambiguous: bool,
    #[serde(default)]
    pub simhash64: Option<u64>,
    /// Resolved gold label.
    #[serde(default)]
    pub label: Option<String>,
}

impl DataItem {
    /// Looks a field up by name: built-in fields first, then attributes, then
    /// ODD dimensions.
    pub fn field(&self, name: &str) -> Option<Value> {
        let builtin = match name {
            "id" => Some(Value::from(self.id.as_str())),
            "digest" => Some(Value::from(self.digest.as_str())),
            "source_id" => Some(Value::from(self.source_id.as_str())),
            "split" => Some(Value::from(self.split.as_str())),
            "group_id" => return self.group_id.as_deref().map(Value::from),
            "label" => return self.label.as_deref().map(Value::from),
            "ambiguous" => Some(Value::from(self.ambiguous)),
            "simhash64" => return self.simhash64.map(Value::from),
            _ => None,
        };
        builtin
            .or_else(|| self.attributes.get(name).cloned())
            .or_else(|| self.odd.get(name).cloned())
    }

    pub const BUILTIN_FIELDS: &'static [&'static str] =
        &["id", "digest", "source_id", "split", "group_id", "label", "ambiguous", "simhash64"];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationMethod {
    Manual,
    Automatic,
}

/// One label event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub annotator: String,
    pub label: String,
    pub at: Timestamp,
    /// Position in the annotator's processing order.
    pub seq: u64,
    /// Position of the item in original storage order.
    pub storage_index: u64,
    pub method: AnnotationMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttestationStatus {
    AttestedPass,
    AttestedFail,
    NotApplicable,
}

impl AttestationStatus {
    pub fn as_status(self) -> crate::finding::Status {
        use crate::finding::Status;
        match self {
            AttestationStatus::AttestedPass => Status::AttestedPass,
            AttestationStatus::AttestedFail => Status::AttestedFail,
            AttestationStatus::NotApplicable => Status::NotApplicable,
        }
    }
}

/// Manual sign-off for a recommendation that cannot be checked from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttestationRecord {
    pub rec_id: crate::finding::RecId,
    pub status: AttestationStatus,
    pub by: String,
    pub date: Timestamp,
    #[serde(default)]
    pub note: String,
}
