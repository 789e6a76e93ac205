use std::fmt;

use chrono::{NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

const FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// UTC ISO-8601 timestamp with seconds precision, e.g. `2024-03-01T12:00:00Z`.
///
/// The textual form is fixed-width, so ordering is lexicographic on the string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("timestamp {0:?} is not UTC ISO-8601 with seconds precision (YYYY-MM-DDTHH:MM:SSZ)")]
pub struct TimestampError(pub String);

impl Timestamp {
    pub fn parse(s: &str) -> Result<Self, TimestampError> {
        // chrono accepts some non-padded fields; the length check pins the width.
        if s.len() != 20 || NaiveDateTime::parse_from_str(s, FORMAT).is_err() {
            return Err(TimestampError(s.to_string()));
        }
        Ok(Timestamp(s.to_string()))
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().format(FORMAT).to_string())
    }

    pub fn from_unix(secs: i64) -> Option<Self> {
        chrono::DateTime::from_timestamp(secs, 0).map(|dt| Timestamp(dt.format(FORMAT).to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Timestamp {
    type Error = TimestampError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Timestamp::parse(&value)
    }
}

impl From<Timestamp> for String {
    fn from(t: Timestamp) -> String {
        t.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
