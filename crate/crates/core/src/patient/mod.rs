//! The six-category patient model (drugs, conditions, labs, treatment problems,
//! preconizations, chat) with per-item provenance and a revision counter.
//!
//! The model deliberately has no field for personal identity (names, addresses).

mod import;
mod mutate;
mod treatment;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::code::CodeRef;

pub use import::{import_patient, ImportError, ImportIssue, ImportOutcome, FORBIDDEN_KEYS};
pub use mutate::{
    freeze_review, infer_indications, mutate, Change, ChangeKind, ChangeLogEntry, ItemInput,
    ItemOp, MutationError,
};
pub use treatment::{
    apply_preconizations, effective_preconizations, pre_mr, EntryMark, Phase, PreconizationError,
    TreatmentEntry, TreatmentView,
};

pub type ItemId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ManualPharmacist,
    ManualGp,
    Ehr,
    Reimbursement,
    TextReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Other,
    Unknown,
}

/// Patient data categories; the unit of change tracking between views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataCategory {
    Drugs,
    Conditions,
    Labs,
    Problems,
    Preconizations,
    Chat,
}

impl DataCategory {
    pub const ALL: [DataCategory; 6] = [
        DataCategory::Drugs,
        DataCategory::Conditions,
        DataCategory::Labs,
        DataCategory::Problems,
        DataCategory::Preconizations,
        DataCategory::Chat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataCategory::Drugs => "drugs",
            DataCategory::Conditions => "conditions",
            DataCategory::Labs => "labs",
            DataCategory::Problems => "problems",
            DataCategory::Preconizations => "preconizations",
            DataCategory::Chat => "chat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugPrescription {
    pub id: ItemId,
    pub drug_id: String,
    pub atc_codes: Vec<CodeRef>,
    pub trademark: String,
    pub inn: String,
    pub posology_text: String,
    pub indication: Option<CodeRef>,
    /// Set when the indication was entered by a clinician rather than inferred.
    pub indication_manual: bool,
    pub missing_indication: bool,
    pub duration_days: Option<f64>,
    pub source: Provenance,
}

impl DrugPrescription {
    pub fn display_name(&self, use_inn: bool) -> &str {
        if use_inn {
            &self.inn
        } else {
            &self.trademark
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalCondition {
    pub id: ItemId,
    pub code: CodeRef,
    /// `false` records an explicit absence (distinct from "never asked").
    pub present: bool,
    pub source: Provenance,
    pub needs_review: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub id: ItemId,
    pub code: CodeRef,
    pub value: f64,
    pub unit: String,
    pub date: Option<String>,
    pub source: Provenance,
    pub needs_review: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemCategory {
    SuspectedAdverseEvent,
    IntakeDifficulty,
    Dependency,
    PoorObservance,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentProblem {
    pub id: ItemId,
    pub category: ProblemCategory,
    pub drug: Option<ItemId>,
    pub effect: Option<CodeRef>,
    pub note: String,
    pub source: Provenance,
}

/// A drug proposed by a preconization. Descriptive fields are filled from the
/// drug database when the preconization is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewDrug {
    pub drug_id: String,
    pub posology_text: String,
    #[serde(default)]
    pub indication: Option<CodeRef>,
    #[serde(default)]
    pub indication_manual: bool,
    #[serde(default)]
    pub atc_codes: Vec<CodeRef>,
    #[serde(default)]
    pub trademark: String,
    #[serde(default)]
    pub inn: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreconizationAction {
    SignalProblem {
        drug: ItemId,
        note: String,
    },
    Prescribe {
        drug: NewDrug,
    },
    Deprescribe {
        drug: ItemId,
    },
    ChangePosology {
        drug: ItemId,
        new_posology_text: String,
    },
    Replace {
        drug: ItemId,
        by: NewDrug,
    },
    Cancel {
        target: ItemId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preconization {
    pub id: ItemId,
    pub author: String,
    pub source: Provenance,
    #[serde(flatten)]
    pub action: PreconizationAction,
}

/// Free-text recommendation issued with the review (e.g. a biological follow-up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewNote {
    pub id: ItemId,
    pub author: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub id: ItemId,
    pub author: String,
    pub text: String,
    pub timestamp: u64,
}

/// Concept mentioned in a report as family history; informative only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyNote {
    pub id: ItemId,
    pub code: CodeRef,
    pub text: String,
    pub source: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lifestyle {
    #[serde(default)]
    pub driving: bool,
    #[serde(default)]
    pub tobacco: bool,
    #[serde(default)]
    pub alcohol: bool,
    #[serde(default)]
    pub other_addiction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub age: u32,
    pub sex: Sex,
    pub drugs: Vec<DrugPrescription>,
    pub conditions: Vec<ClinicalCondition>,
    pub labs: Vec<LabResult>,
    pub problems: Vec<TreatmentProblem>,
    pub preconizations: Vec<Preconization>,
    pub review_notes: Vec<ReviewNote>,
    pub chat: Vec<ChatMessage>,
    pub family_notes: Vec<FamilyNote>,
    pub lifestyle: Lifestyle,
    pub revision: u64,
    /// Set once the review is validated; preconizations are then read-only.
    pub review_frozen: bool,
    pub import_issues: Vec<ImportIssue>,
    pub change_log: Vec<ChangeLogEntry>,
    /// Revision at which each item was last written (stale-write detection).
    pub item_revisions: BTreeMap<ItemId, u64>,
    pub next_ids: BTreeMap<String, u64>,
}

pub(crate) const LIFESTYLE_ITEM: &str = "lifestyle";

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, age: u32, sex: Sex) -> Self {
        PatientRecord {
            patient_id: patient_id.into(),
            age,
            sex,
            drugs: Vec::new(),
            conditions: Vec::new(),
            labs: Vec::new(),
            problems: Vec::new(),
            preconizations: Vec::new(),
            review_notes: Vec::new(),
            chat: Vec::new(),
            family_notes: Vec::new(),
            lifestyle: Lifestyle::default(),
            revision: 0,
            review_frozen: false,
            import_issues: Vec::new(),
            change_log: Vec::new(),
            item_revisions: BTreeMap::new(),
            next_ids: BTreeMap::new(),
        }
    }

    pub(crate) fn allocate_id(&mut self, prefix: &str) -> ItemId {
        let next = self.next_ids.entry(prefix.to_string()).or_insert(0);
        *next += 1;
        format!("{prefix}{next}")
    }

    pub fn drug(&self, id: &str) -> Option<&DrugPrescription> {
        self.drugs.iter().find(|d| d.id == id)
    }

    pub fn preconization(&self, id: &str) -> Option<&Preconization> {
        self.preconizations.iter().find(|p| p.id == id)
    }

    pub fn present_conditions(&self) -> impl Iterator<Item = &ClinicalCondition> {
        self.conditions.iter().filter(|c| c.present)
    }

    /// Category of the item with this id, if it exists.
    pub fn category_of_item(&self, id: &str) -> Option<DataCategory> {
        if id == LIFESTYLE_ITEM {
            return Some(DataCategory::Problems);
        }
        if self.drugs.iter().any(|d| d.id == id) {
            Some(DataCategory::Drugs)
        } else if self.conditions.iter().any(|c| c.id == id)
            || self.family_notes.iter().any(|n| n.id == id)
        {
            Some(DataCategory::Conditions)
        } else if self.labs.iter().any(|l| l.id == id) {
            Some(DataCategory::Labs)
        } else if self.problems.iter().any(|p| p.id == id) {
            Some(DataCategory::Problems)
        } else if self.preconizations.iter().any(|p| p.id == id)
            || self.review_notes.iter().any(|n| n.id == id)
        {
            Some(DataCategory::Preconizations)
        } else if self.chat.iter().any(|m| m.id == id) {
            Some(DataCategory::Chat)
        } else {
            None
        }
    }
}
