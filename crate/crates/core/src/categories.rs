//! The 13 anatomical categories shared by the interview questionnaire and the
//! adverse-effect views, and the table mapping codes onto them.
//!
//! Mapping file format: `system:code<TAB>category_index`. A code inherits the
//! category of its nearest mapped ancestor; anything unmapped is category 13.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::code::CodeRef;
use crate::terminology::Terminology;

pub const CATEGORY_COUNT: usize = 13;
pub const UNCLASSIFIED: u8 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnatomicalCategory {
    pub index: u8,
    pub name: &'static str,
}

pub const CATEGORIES: [AnatomicalCategory; CATEGORY_COUNT] = [
    AnatomicalCategory {
        index: 1,
        name: "cardiovascular",
    },
    AnatomicalCategory {
        index: 2,
        name: "respiratory",
    },
    AnatomicalCategory {
        index: 3,
        name: "digestive",
    },
    AnatomicalCategory {
        index: 4,
        name: "hepatobiliary",
    },
    AnatomicalCategory {
        index: 5,
        name: "renal and urinary",
    },
    AnatomicalCategory {
        index: 6,
        name: "metabolism and endocrine",
    },
    AnatomicalCategory {
        index: 7,
        name: "nervous system",
    },
    AnatomicalCategory {
        index: 8,
        name: "psychiatric",
    },
    AnatomicalCategory {
        index: 9,
        name: "musculoskeletal",
    },
    AnatomicalCategory {
        index: 10,
        name: "skin",
    },
    AnatomicalCategory {
        index: 11,
        name: "blood and immune",
    },
    AnatomicalCategory {
        index: 12,
        name: "eye and ear",
    },
    AnatomicalCategory {
        index: 13,
        name: "unclassified",
    },
];

pub fn category(index: u8) -> Option<AnatomicalCategory> {
    CATEGORIES.get(usize::from(index).checked_sub(1)?).copied()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CategoryMapError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct CategoryMap {
    entries: BTreeMap<CodeRef, u8>,
}

impl CategoryMap {
    pub fn parse(text: &str) -> Result<Self, CategoryMapError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| CategoryMapError::Parse { line, message };
            let (code, index) = raw
                .split_once('\t')
                .ok_or_else(|| err("expected `system:code<TAB>category`".into()))?;
            let code: CodeRef = code.parse().map_err(|e| err(format!("{e}")))?;
            let index: u8 = index
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid category `{}`", index.trim())))?;
            if !(1..=CATEGORY_COUNT as u8).contains(&index) {
                return Err(err(format!("category {index} outside 1..=13")));
            }
            entries.insert(code, index);
        }
        Ok(CategoryMap { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Category of `code`: its own mapping, else the nearest mapped ancestor
    /// (smallest index on ties), else [`UNCLASSIFIED`].
    pub fn category_of(&self, code: &CodeRef, terminology: &Terminology) -> u8 {
        if let Some(&c) = self.entries.get(code) {
            return c;
        }
        let mut frontier: VecDeque<CodeRef> = VecDeque::from([code.clone()]);
        let mut seen = BTreeSet::from([code.clone()]);
        while !frontier.is_empty() {
            let mut level_hits = Vec::new();
            for _ in 0..frontier.len() {
                let Some(current) = frontier.pop_front() else {
                    break;
                };
                let Some(entry) = terminology.get(&current) else {
                    continue;
                };
                for parent in &entry.parents {
                    let parent = CodeRef::new(current.system, parent.clone());
                    if let Some(&c) = self.entries.get(&parent) {
                        level_hits.push(c);
                    }
                    if seen.insert(parent.clone()) {
                        frontier.push_back(parent);
                    }
                }
            }
            if let Some(c) = level_hits.into_iter().min() {
                return c;
            }
        }
        UNCLASSIFIED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_categories_last_unclassified() {
        assert_eq!(CATEGORIES.len(), 13);
        assert_eq!(category(13).unwrap().name, "unclassified");
        assert!(category(0).is_none());
        assert!(category(14).is_none());
    }

    #[test]
    fn inherits_from_nearest_ancestor() {
        let t = Terminology::parse(
            "meddra\tSOC\tCardiac\t\nmeddra\tHLT\tx\tSOC\nmeddra\tPT\tBradycardia\tHLT\nmeddra\tLONE\ty\t\n",
        )
        .unwrap();
        let map = CategoryMap::parse("meddra:SOC\t1\n").unwrap();
        assert_eq!(map.category_of(&CodeRef::meddra("PT"), &t), 1);
        assert_eq!(map.category_of(&CodeRef::meddra("LONE"), &t), UNCLASSIFIED);
        assert_eq!(
            map.category_of(&CodeRef::meddra("NOT-LOADED"), &t),
            UNCLASSIFIED
        );
    }

    #[test]
    fn rejects_out_of_range_index() {
        assert!(CategoryMap::parse("meddra:X\t14\n").is_err());
        assert!(CategoryMap::parse("meddra:X 3\n").is_err());
    }
}
