//! The eight review tabs and which patient-data categories each one reads.
//!
//! Dependency file: `tab<TAB>category,category,...`, one line per tab; `#` lines
//! and blank lines are ignored. Every tab must appear exactly once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use medreview_core::patient::DataCategory;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tab {
    PatientData,
    Interview,
    Posologies,
    AdverseEffects,
    Interactions,
    StoppStart,
    Preconizations,
    Chat,
}

impl Tab {
    pub const ALL: [Tab; 8] = [
        Tab::PatientData,
        Tab::Interview,
        Tab::Posologies,
        Tab::AdverseEffects,
        Tab::Interactions,
        Tab::StoppStart,
        Tab::Preconizations,
        Tab::Chat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tab::PatientData => "patient_data",
            Tab::Interview => "interview",
            Tab::Posologies => "posologies",
            Tab::AdverseEffects => "adverse_effects",
            Tab::Interactions => "interactions",
            Tab::StoppStart => "stopp_start",
            Tab::Preconizations => "preconizations",
            Tab::Chat => "chat",
        }
    }
}

impl fmt::Display for Tab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown tab `{0}`")]
pub struct UnknownTab(pub String);

impl FromStr for Tab {
    type Err = UnknownTab;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tab::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTab(s.to_string()))
    }
}

fn category(s: &str) -> Option<DataCategory> {
    DataCategory::ALL.into_iter().find(|c| c.as_str() == s)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DependencyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("tab `{0}` is missing from the dependency table")]
    Missing(Tab),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyMap {
    reads: BTreeMap<Tab, BTreeSet<DataCategory>>,
}

impl DependencyMap {
    pub fn parse(text: &str) -> Result<Self, DependencyError> {
        let mut reads = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| DependencyError::Parse { line, message };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (tab, cats) = raw
                .split_once('\t')
                .ok_or_else(|| err("expected tab<TAB>categories".into()))?;
            let tab: Tab = tab
                .trim()
                .parse()
                .map_err(|e: UnknownTab| err(e.to_string()))?;
            let cats = cats
                .split(',')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(|c| category(c).ok_or_else(|| err(format!("unknown data category `{c}`"))))
                .collect::<Result<BTreeSet<_>, _>>()?;
            if reads.insert(tab, cats).is_some() {
                return Err(err(format!("tab `{tab}` listed twice")));
            }
        }
        if let Some(&tab) = Tab::ALL.iter().find(|t| !reads.contains_key(t)) {
            return Err(DependencyError::Missing(tab));
        }
        Ok(DependencyMap { reads })
    }

    pub fn reads(&self, tab: Tab) -> &BTreeSet<DataCategory> {
        &self.reads[&tab]
    }

    /// Tabs to flag for a change to `changed`. The tab the change was made from,
    /// if any, is left out.
    pub fn dirty_flags(
        &self,
        changed: &BTreeSet<DataCategory>,
        authoring: Option<Tab>,
    ) -> TabDirtyFlags {
        let mut flags = TabDirtyFlags::default();
        for tab in Tab::ALL {
            if Some(tab) != authoring && !self.reads(tab).is_disjoint(changed) {
                flags.set(tab);
            }
        }
        flags
    }
}

/// One boolean per tab; serialized as an object with all eight keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TabDirtyFlags([bool; 8]);

impl TabDirtyFlags {
    fn index(tab: Tab) -> usize {
        Tab::ALL.iter().position(|&t| t == tab).unwrap_or(0)
    }

    pub fn set(&mut self, tab: Tab) {
        self.0[Self::index(tab)] = true;
    }

    pub fn clear(&mut self, tab: Tab) {
        self.0[Self::index(tab)] = false;
    }

    pub fn is_set(&self, tab: Tab) -> bool {
        self.0[Self::index(tab)]
    }

    pub fn flagged(&self) -> Vec<Tab> {
        Tab::ALL.into_iter().filter(|&t| self.is_set(t)).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }
}

impl Serialize for TabDirtyFlags {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, bool> = Tab::ALL
            .iter()
            .map(|&t| (t.as_str(), self.is_set(t)))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TabDirtyFlags {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<Tab, bool>::deserialize(d)?;
        let mut flags = TabDirtyFlags::default();
        for (tab, on) in map {
            if on {
                flags.set(tab);
            }
        }
        Ok(flags)
    }
}
