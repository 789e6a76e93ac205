//! The table of all 44 recommendations and how each is evaluated.

use serde::{Deserialize, Serialize};

use crate::finding::{RecId, REC_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecMode {
    /// Decided by a check over the inputs.
    Automated,
    /// Decided by a human attestation.
    Attested,
    /// Automated half plus an attestation slot; overall status is the worse.
    Hybrid,
}

impl RecMode {
    pub fn accepts_findings(self) -> bool {
        matches!(self, RecMode::Automated | RecMode::Hybrid)
    }

    pub fn accepts_attestation(self) -> bool {
        matches!(self, RecMode::Attested | RecMode::Hybrid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecEntry {
    pub id: RecId,
    pub mode: RecMode,
    pub title: &'static str,
    /// Quality area the recommendation belongs to.
    pub area: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecRegistry {
    entries: Vec<RecEntry>,
}

use RecMode::{Attested as Att, Automated as Auto, Hybrid as Hyb};

const TABLE: [(RecMode, &str, &str); REC_COUNT as usize] = [
    (Att, "acquisition chain matches operation", "representativeness"),
    (Att, "system validated on the operational acquisition chain", "representativeness"),
    (Hyb, "operational design domain defined", "representativeness"),
    (Auto, "data traceable to the ODD", "representativeness"),
    (Auto, "operational situations sufficiently represented", "representativeness"),
    (Auto, "operating conditions in operational proportions", "representativeness"),
    (Hyb, "ODD compliance evidence maintained", "representativeness"),
    (Auto, "data can be regenerated or restored", "traceability"),
    (Auto, "acquisition configuration under version control", "traceability"),
    (Att, "acquisition chain differences estimated", "accuracy and precision"),
    (Att, "degradation sources estimated", "accuracy and precision"),
    (Auto, "outliers removed", "reliability"),
    (Att, "source reliability assessed", "reliability"),
    (Auto, "consistency properties expressed", "consistency"),
    (Auto, "consistency properties verified", "consistency"),
    (Auto, "same-object attributes consistent", "consistency"),
    (Auto, "consistent data representation", "consistency"),
    (Att, "role-based access to the dataset", "integrity"),
    (Auto, "modifications justified, logged and attributed", "integrity"),
    (Att, "write-access protocol defined", "integrity"),
    (Att, "modifications notified to impacted users", "integrity"),
    (Auto, "cryptographic integrity guarantee", "integrity"),
    (Auto, "integrity checked after transmission", "integrity"),
    (Att, "dataset specified before acquisition", "bias"),
    (Att, "compliance checked after acquisition", "bias"),
    (Att, "expert label accuracy review", "label accuracy"),
    (Auto, "same object labelled identically", "label consistency"),
    (Hyb, "expert ambiguity review", "label consistency"),
    (Auto, "label consistency measured", "label consistency"),
    (Att, "consistency checks by domain experts", "label consistency"),
    (Auto, "ambiguous data labelled manually", "label consistency"),
    (Att, "automatic labelling workflow assessed", "label consistency"),
    (Att, "annotator ability assessed", "annotation bias"),
    (Att, "annotation instructions validated", "annotation bias"),
    (Hyb, "annotation quality sample verified", "annotation bias"),
    (Auto, "same-label series checked", "annotation bias"),
    (Auto, "random assignment to annotators", "annotation bias"),
    (Auto, "annotations traceable to annotator", "annotation bias"),
    (Auto, "train and test sets disjoint", "datasets"),
    (Hyb, "test set sealed until validation", "datasets"),
    (Att, "test-to-train information policy", "datasets"),
    (Auto, "automatic bias detection on training data", "independence"),
    (Auto, "no redundancy across train and test", "independence"),
    (Auto, "test set large enough for the error bound", "independence"),
];

impl RecRegistry {
    pub fn standard() -> Self {
        let entries = TABLE
            .iter()
            .zip(RecId::all())
            .map(|(&(mode, title, area), id)| RecEntry { id, mode, title, area })
            .collect();
        RecRegistry { entries }
    }

    pub fn entries(&self) -> &[RecEntry] {
        &self.entries
    }

    pub fn entry(&self, id: RecId) -> &RecEntry {
        &self.entries[usize::from(id.get()) - 1]
    }

    pub fn ids_with_mode(&self, mode: RecMode) -> Vec<u8> {
        self.entries.iter().filter(|e| e.mode == mode).map(|e| e.id.get()).collect()
    }
}

impl Default for RecRegistry {
    fn default() -> Self {
        Self::standard()
    }
}
