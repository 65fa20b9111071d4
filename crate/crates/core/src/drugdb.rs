//! Drug knowledge fixture: per drug ATC codes, names, active principles,
//! indications, official posologies, adverse effects and drug-disease entries.
//!
//! The file is a JSON object `{"drugs": [...]}`; see `fixtures/drugs.json`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adverse::FrequencyLevel;
use crate::code::CodeRef;
use crate::posology::OfficialPosology;
use crate::terminology::Terminology;

#[derive(Debug, Error)]
pub enum DrugDbError {
    #[error("drug database is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("drug `{drug}`: {reason}")]
    Invalid { drug: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePrinciple {
    pub id: String,
    /// Milligrams per unit of pharmaceutical form.
    pub strength_mg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEntry {
    pub pt: CodeRef,
    pub level: FrequencyLevel,
    #[serde(default)]
    pub serious: bool,
    #[serde(default)]
    pub elderly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrugEntry {
    pub id: String,
    pub trademark: String,
    pub inn: String,
    pub atc: Vec<CodeRef>,
    pub principles: Vec<ActivePrinciple>,
    #[serde(default)]
    pub indications: Vec<CodeRef>,
    #[serde(default)]
    pub official_posologies: Vec<OfficialPosology>,
    #[serde(default)]
    pub adverse_effects: Vec<EffectEntry>,
    #[serde(default)]
    pub contraindications: Vec<CodeRef>,
    #[serde(default)]
    pub cautions: Vec<CodeRef>,
}

impl DrugEntry {
    pub fn primary_principle(&self) -> &ActivePrinciple {
        &self.principles[0]
    }
}

#[derive(Debug, Clone, Default)]
pub struct DrugDatabase {
    drugs: BTreeMap<String, DrugEntry>,
}

#[derive(Deserialize)]
struct DrugFile {
    drugs: Vec<DrugEntry>,
}

impl DrugDatabase {
    pub fn parse(text: &str) -> Result<Self, DrugDbError> {
        let file: DrugFile = serde_json::from_str(text)?;
        Self::from_entries(file.drugs)
    }

    pub fn from_entries(entries: Vec<DrugEntry>) -> Result<Self, DrugDbError> {
        let mut drugs = BTreeMap::new();
        for entry in entries {
            let invalid = |reason: &str| DrugDbError::Invalid {
                drug: entry.id.clone(),
                reason: reason.to_string(),
            };
            if entry.atc.is_empty() {
                return Err(invalid("at least one ATC code is required"));
            }
            if entry.principles.is_empty() {
                return Err(invalid("at least one active principle is required"));
            }
            if entry
                .principles
                .iter()
                .any(|p| !(p.strength_mg.is_finite() && p.strength_mg > 0.0))
            {
                return Err(invalid("principle strengths must be positive"));
            }
            if entry
                .official_posologies
                .iter()
                .any(|o| o.text.is_none() && o.max_day_dose_mg.is_none())
            {
                return Err(invalid("official posology needs a text or a maximum dose"));
            }
            if drugs.contains_key(&entry.id) {
                return Err(invalid("duplicate drug id"));
            }
            drugs.insert(entry.id.clone(), entry);
        }
        Ok(DrugDatabase { drugs })
    }

    /// Checks that every code referenced by the database resolves.
    pub fn validate_codes(&self, terminology: &Terminology) -> Result<(), DrugDbError> {
        for entry in self.drugs.values() {
            let codes = entry
                .atc
                .iter()
                .chain(&entry.indications)
                .chain(&entry.contraindications)
                .chain(&entry.cautions)
                .chain(entry.adverse_effects.iter().map(|e| &e.pt))
                .chain(
                    entry
                        .official_posologies
                        .iter()
                        .flat_map(|o| o.indication.iter().chain(&o.co_prescription)),
                );
            for code in codes {
                if !terminology.contains(code) {
                    return Err(DrugDbError::Invalid {
                        drug: entry.id.clone(),
                        reason: format!("unknown code {code}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&DrugEntry> {
        self.drugs.get(id)
    }

    pub fn len(&self) -> usize {
        self.drugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drugs.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &DrugEntry> {
        self.drugs.values()
    }
}
