//! Code references shared by every module: `system:code` pairs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Code systems known to the engine.
///
/// `Mesh` is only used as a pivot for cross-terminology transcoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    Atc,
    Icd10,
    Loinc,
    Meddra,
    Custom,
    Mesh,
}

impl SystemId {
    pub const ALL: [SystemId; 6] = [
        SystemId::Atc,
        SystemId::Icd10,
        SystemId::Loinc,
        SystemId::Meddra,
        SystemId::Custom,
        SystemId::Mesh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::Atc => "atc",
            SystemId::Icd10 => "icd10",
            SystemId::Loinc => "loinc",
            SystemId::Meddra => "meddra",
            SystemId::Custom => "custom",
            SystemId::Mesh => "mesh",
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeParseError {
    #[error("unknown code system `{0}`")]
    UnknownSystem(String),
    #[error("malformed code reference `{0}` (expected system:code)")]
    Malformed(String),
}

impl FromStr for SystemId {
    type Err = CodeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "atc" => Ok(SystemId::Atc),
            "icd10" | "icd-10" => Ok(SystemId::Icd10),
            "loinc" => Ok(SystemId::Loinc),
            "meddra" => Ok(SystemId::Meddra),
            "custom" => Ok(SystemId::Custom),
            "mesh" => Ok(SystemId::Mesh),
            other => Err(CodeParseError::UnknownSystem(other.to_string())),
        }
    }
}

/// A reference to one code in one system, written `system:code`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeRef {
    pub system: SystemId,
    pub code: String,
}

impl CodeRef {
    pub fn new(system: SystemId, code: impl Into<String>) -> Self {
        CodeRef {
            system,
            code: code.into(),
        }
    }

    pub fn atc(code: &str) -> Self {
        Self::new(SystemId::Atc, code)
    }

    pub fn icd10(code: &str) -> Self {
        Self::new(SystemId::Icd10, code)
    }

    pub fn loinc(code: &str) -> Self {
        Self::new(SystemId::Loinc, code)
    }

    pub fn meddra(code: &str) -> Self {
        Self::new(SystemId::Meddra, code)
    }

    pub fn custom(code: &str) -> Self {
        Self::new(SystemId::Custom, code)
    }
}

impl fmt::Display for CodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.system, self.code)
    }
}

impl FromStr for CodeRef {
    type Err = CodeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (system, code) = s
            .split_once(':')
            .ok_or_else(|| CodeParseError::Malformed(s.to_string()))?;
        let code = code.trim();
        if code.is_empty() || code.chars().any(char::is_whitespace) {
            return Err(CodeParseError::Malformed(s.to_string()));
        }
        Ok(CodeRef::new(system.parse()?, code))
    }
}

impl Serialize for CodeRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CodeRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
