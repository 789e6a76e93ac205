//! Dataset quality gate: checks a dataset manifest, its annotations and split
//! layout against a fixed list of 44 data-quality recommendations and
//! produces a compliance report.

pub mod annotation;
pub mod cli;
pub mod config;
pub mod consistency;
pub mod digest;
pub mod finding;
pub mod integrity;
pub mod jsonl;
pub mod manifest;
pub mod odd;
pub mod report;
pub mod splits;
pub mod timestamp;

#[cfg(test)]
pub(crate) mod testutil;
