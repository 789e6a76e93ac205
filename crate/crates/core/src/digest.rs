//! Algorithm-prefixed content digests.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub const SHA256_PREFIX: &str = "sha256:";

/// `"sha256:"` followed by 64 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ContentDigest(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DigestSyntaxError {
    #[error("digest must start with \"sha256:\"")]
    MissingPrefix,
    #[error("digest body must be 64 hex characters, got {0}")]
    BadLength(usize),
    #[error("digest body must be lowercase hex")]
    NotLowerHex,
}

impl ContentDigest {
    pub fn parse(s: &str) -> Result<Self, DigestSyntaxError> {
        let body = s.strip_prefix(SHA256_PREFIX).ok_or(DigestSyntaxError::MissingPrefix)?;
        if body.len() != 64 {
            return Err(DigestSyntaxError::BadLength(body.len()));
        }
        if !body.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(DigestSyntaxError::NotLowerHex);
        }
        Ok(ContentDigest(s.to_string()))
    }

    /// SHA-256 of `bytes`.
    pub fn of(bytes: &[u8]) -> Self {
        ContentDigest(format!("{SHA256_PREFIX}{}", hex::encode(Sha256::digest(bytes))))
    }

    /// The all-zero digest that anchors a hash chain.
    pub fn zero() -> Self {
        ContentDigest(format!("{SHA256_PREFIX}{}", "0".repeat(64)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for ContentDigest {
    type Err = DigestSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContentDigest::parse(s)
    }
}

impl TryFrom<String> for ContentDigest {
    type Error = DigestSyntaxError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ContentDigest::parse(&value)
    }
}

impl From<ContentDigest> for String {
    fn from(d: ContentDigest) -> String {
        d.0
    }
}

impl fmt::Display for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        // SHA-256("abc")
        assert_eq!(
            ContentDigest::of(b"abc").as_str(),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn rejects_bad_syntax() {
        let zz = format!("sha256:{}", "z".repeat(64));
        assert_eq!(ContentDigest::parse(&zz), Err(DigestSyntaxError::NotLowerHex));
        let upper = format!("sha256:{}", "A".repeat(64));
        assert_eq!(ContentDigest::parse(&upper), Err(DigestSyntaxError::NotLowerHex));
        assert_eq!(ContentDigest::parse("sha256:abc"), Err(DigestSyntaxError::BadLength(3)));
        assert_eq!(ContentDigest::parse(&"0".repeat(64)), Err(DigestSyntaxError::MissingPrefix));
        assert!(ContentDigest::parse(ContentDigest::zero().as_str()).is_ok());
    }
}
