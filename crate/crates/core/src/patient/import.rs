//! Patient import documents (UTF-8 JSON).
//!
//! ```json
//! {
//!   "patient_id": "demo-1",            // optional
//!   "age": 82, "sex": "female", "source": "ehr",
//!   "drugs":      [{"drug_id": "...", "posology": "1 morning", "indication": "icd10:I10", "duration_days": 90}],
//!   "conditions": [{"code": "icd10:I10", "present": true}],
//!   "labs":       [{"code": "loinc:2160-0", "value": 95, "unit": "umol/L", "date": "2024-01-10"}],
//!   "problems":   [{"problem": "suspected_adverse_event", "drug": "d1", "effect": "meddra:10013573", "note": ""}],
//!   "preconizations": [{"kind": "deprescribe", "drug": "d3"}],
//!   "lifestyle":  {"driving": true},
//!   "texts":      ["free-text report ..."]
//! }
//! ```
//!
//! Imported drugs get ids `d1`, `d2`, ... by position in the document (quarantined
//! entries keep their slot), so preconizations and problems can reference them.
//! Documents carrying identifying keys are refused outright.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::mutate::{refresh_indications, resolve_new_drug};
use super::{
    ClinicalCondition, DrugPrescription, LabResult, Lifestyle, NewDrug, PatientRecord,
    Preconization, PreconizationAction, ProblemCategory, Provenance, Sex, TreatmentProblem,
};
use crate::code::{CodeRef, SystemId};
use crate::knowledge::Knowledge;

/// Keys that would carry personal identity; refused anywhere in the document.
pub const FORBIDDEN_KEYS: [&str; 5] = ["name", "first_name", "last_name", "address", "gp_name"];

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("identifying field `{0}` is not accepted; anonymize the document first")]
    IdentifyingField(String),
}

/// An item dropped during import, kept for review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportIssue {
    pub section: String,
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ImportOutcome {
    pub record: PatientRecord,
    /// Free-text reports for the concept extractor.
    pub texts: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportDocument {
    #[serde(default)]
    patient_id: Option<String>,
    age: u32,
    sex: Sex,
    source: Provenance,
    #[serde(default)]
    drugs: Vec<ImportDrug>,
    #[serde(default)]
    conditions: Vec<ImportCondition>,
    #[serde(default)]
    labs: Vec<ImportLab>,
    #[serde(default)]
    problems: Vec<ImportProblem>,
    #[serde(default)]
    preconizations: Vec<PreconizationAction>,
    #[serde(default)]
    lifestyle: Option<Lifestyle>,
    #[serde(default)]
    texts: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportDrug {
    drug_id: String,
    #[serde(default)]
    posology: String,
    #[serde(default)]
    indication: Option<String>,
    #[serde(default)]
    duration_days: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportCondition {
    code: String,
    #[serde(default = "yes")]
    present: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportLab {
    code: String,
    value: f64,
    unit: String,
    #[serde(default)]
    date: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportProblem {
    problem: ProblemCategory,
    #[serde(default)]
    drug: Option<String>,
    #[serde(default)]
    effect: Option<String>,
    #[serde(default)]
    note: String,
}

fn find_forbidden(value: &Value) -> Option<String> {
    match value {
        Value::Object(map) => map.iter().find_map(|(k, v)| {
            if FORBIDDEN_KEYS.contains(&k.to_ascii_lowercase().as_str())
                || k.eq_ignore_ascii_case("patient_name")
            {
                Some(k.clone())
            } else {
                find_forbidden(v)
            }
        }),
        Value::Array(items) => items.iter().find_map(find_forbidden),
        _ => None,
    }
}

fn schema_error(e: serde_json::Error) -> ImportError {
    ImportError::Schema {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

struct Quarantine(Vec<super::ImportIssue>);

impl Quarantine {
    fn push(&mut self, section: &str, index: usize, reason: impl Into<String>) {
        self.0.push(ImportIssue {
            section: section.into(),
            index,
            reason: reason.into(),
        });
    }
}

fn resolve_code(knowledge: &Knowledge, raw: &str, allowed: &[SystemId]) -> Result<CodeRef, String> {
    let code: CodeRef = raw.parse().map_err(|e| format!("{e}"))?;
    if !allowed.contains(&code.system) {
        return Err(format!("code {code} is not in an accepted system"));
    }
    if !knowledge.terminology.contains(&code) {
        return Err(format!("unknown code {code}"));
    }
    Ok(code)
}

/// Builds a record (revision 1) from an import document. Unknown codes or drugs
/// quarantine the offending item into `import_issues`; structural errors and
/// identifying fields reject the whole document.
pub fn import_patient(document: &str, knowledge: &Knowledge) -> Result<ImportOutcome, ImportError> {
    let value: Value = serde_json::from_str(document).map_err(schema_error)?;
    if let Some(key) = find_forbidden(&value) {
        return Err(ImportError::IdentifyingField(key));
    }
    let doc: ImportDocument = serde_json::from_str(document).map_err(schema_error)?;
    let source = doc.source;
    let mut record = PatientRecord::new(
        doc.patient_id.unwrap_or_else(|| "patient".to_string()),
        doc.age,
        doc.sex,
    );
    let mut issues = Quarantine(Vec::new());

    for (i, d) in doc.drugs.iter().enumerate() {
        let id = format!("d{}", i + 1);
        let Some(entry) = knowledge.drugs.get(&d.drug_id) else {
            issues.push("drugs", i, format!("unknown drug `{}`", d.drug_id));
            continue;
        };
        let indication = match &d.indication {
            None => None,
            Some(raw) => match resolve_code(knowledge, raw, &[SystemId::Icd10, SystemId::Custom]) {
                Ok(c) => Some(c),
                Err(reason) => {
                    issues.push("drugs", i, reason);
                    continue;
                }
            },
        };
        if d.duration_days
            .is_some_and(|v| !(v.is_finite() && v >= 0.0))
        {
            issues.push("drugs", i, "invalid duration");
            continue;
        }
        record.drugs.push(DrugPrescription {
            id,
            drug_id: d.drug_id.clone(),
            atc_codes: entry.atc.clone(),
            trademark: entry.trademark.clone(),
            inn: entry.inn.clone(),
            posology_text: d.posology.clone(),
            indication_manual: indication.is_some(),
            missing_indication: indication.is_none(),
            indication,
            duration_days: d.duration_days,
            source,
        });
    }
    record.next_ids.insert("d".into(), doc.drugs.len() as u64);

    for (i, c) in doc.conditions.iter().enumerate() {
        match resolve_code(knowledge, &c.code, &[SystemId::Icd10, SystemId::Custom]) {
            Ok(code) => {
                let id = record.allocate_id("c");
                record.conditions.push(ClinicalCondition {
                    id,
                    code,
                    present: c.present,
                    source,
                    needs_review: source == Provenance::TextReport,
                });
            }
            Err(reason) => issues.push("conditions", i, reason),
        }
    }

    for (i, l) in doc.labs.iter().enumerate() {
        let code = match resolve_code(knowledge, &l.code, &[SystemId::Loinc]) {
            Ok(code) => code,
            Err(reason) => {
                issues.push("labs", i, reason);
                continue;
            }
        };
        if !l.value.is_finite() || l.unit.trim().is_empty() {
            issues.push("labs", i, "lab value must be finite with a unit");
            continue;
        }
        let id = record.allocate_id("l");
        record.labs.push(LabResult {
            id,
            code,
            value: l.value,
            unit: l.unit.trim().to_string(),
            date: l.date.clone(),
            source,
            needs_review: source == Provenance::TextReport,
        });
    }

    for (i, p) in doc.problems.iter().enumerate() {
        let effect = match &p.effect {
            None => None,
            Some(raw) => match resolve_code(knowledge, raw, &[SystemId::Meddra]) {
                Ok(c) => Some(c),
                Err(reason) => {
                    issues.push("problems", i, reason);
                    continue;
                }
            },
        };
        if p.problem == ProblemCategory::SuspectedAdverseEvent && effect.is_none() {
            issues.push("problems", i, "suspected adverse event without effect code");
            continue;
        }
        if let Some(drug) = &p.drug {
            if record.drug(drug).is_none() {
                issues.push("problems", i, format!("unknown drug item `{drug}`"));
                continue;
            }
        }
        let id = record.allocate_id("t");
        record.problems.push(TreatmentProblem {
            id,
            category: p.problem,
            drug: p.drug.clone(),
            effect,
            note: p.note.clone(),
            source,
        });
    }

    for (i, action) in doc.preconizations.iter().enumerate() {
        match import_preconization(&record, action, knowledge) {
            Ok(action) => {
                let id = record.allocate_id("p");
                record.preconizations.push(Preconization {
                    id,
                    author: "import".into(),
                    source,
                    action,
                });
            }
            Err(reason) => issues.push("preconizations", i, reason),
        }
    }

    if let Some(lifestyle) = doc.lifestyle {
        record.lifestyle = lifestyle;
    }

    refresh_indications(&mut record, knowledge);
    record.import_issues = issues.0;
    record.revision = 1;
    let item_ids: Vec<String> = record
        .drugs
        .iter()
        .map(|d| d.id.clone())
        .chain(record.conditions.iter().map(|c| c.id.clone()))
        .chain(record.labs.iter().map(|l| l.id.clone()))
        .chain(record.problems.iter().map(|p| p.id.clone()))
        .chain(record.preconizations.iter().map(|p| p.id.clone()))
        .collect();
    for id in item_ids {
        record.item_revisions.insert(id, 1);
    }
    Ok(ImportOutcome {
        record,
        texts: doc.texts,
    })
}

fn import_preconization(
    record: &PatientRecord,
    action: &PreconizationAction,
    knowledge: &Knowledge,
) -> Result<PreconizationAction, String> {
    let drug_known = |id: &str| {
        record.drug(id).is_some()
            || record.preconizations.iter().any(|p| {
                p.id == id
                    && matches!(
                        p.action,
                        PreconizationAction::Prescribe { .. } | PreconizationAction::Replace { .. }
                    )
            })
    };
    let resolve = |d: &NewDrug| resolve_new_drug(knowledge, d).map_err(|e| e.to_string());
    match action {
        PreconizationAction::Prescribe { drug } => Ok(PreconizationAction::Prescribe {
            drug: resolve(drug)?,
        }),
        PreconizationAction::Replace { drug, by } if drug_known(drug) => {
            Ok(PreconizationAction::Replace {
                drug: drug.clone(),
                by: resolve(by)?,
            })
        }
        PreconizationAction::SignalProblem { drug, .. }
        | PreconizationAction::Deprescribe { drug }
        | PreconizationAction::ChangePosology { drug, .. }
        | PreconizationAction::Replace { drug, .. } => {
            if drug_known(drug) {
                Ok(action.clone())
            } else {
                Err(format!("unknown drug item `{drug}`"))
            }
        }
        PreconizationAction::Cancel { target } => {
            if record.preconization(target).is_some() {
                Ok(action.clone())
            } else {
                Err(format!(
                    "cancel references unknown preconization `{target}`"
                ))
            }
        }
    }
}
