use serde::{Deserialize, Serialize};

use super::dose::day_doses;
use super::parse::{Moment, PosologyForm};
use crate::code::CodeRef;
use crate::knowledge::Knowledge;
use crate::patient::{ItemId, PatientRecord, TreatmentEntry, TreatmentView};

/// Creatinine renal clearance, in mL/min.
pub const CREATININE_CLEARANCE_LOINC: &str = "2164-2";
pub const HEPATIC_FAILURE_ICD10: &str = "K72";

/// One official posology entry with the patient context it applies to.
/// Every stated constraint must hold for the entry to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfficialPosology {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub indication: Option<CodeRef>,
    #[serde(default)]
    pub age_min: Option<u32>,
    #[serde(default)]
    pub age_max: Option<u32>,
    /// Applies when clearance >= this value (mL/min).
    #[serde(default)]
    pub clearance_min: Option<f64>,
    /// Applies when clearance < this value (mL/min).
    #[serde(default)]
    pub clearance_max: Option<f64>,
    #[serde(default)]
    pub hepatic_failure: Option<bool>,
    /// Applies only when another drug of this ATC class is co-prescribed.
    #[serde(default)]
    pub co_prescription: Option<CodeRef>,
    #[serde(default)]
    pub max_day_dose_mg: Option<f64>,
    /// Principle the maximum refers to; defaults to the drug's first principle.
    #[serde(default)]
    pub principle: Option<String>,
    #[serde(default)]
    pub required_moment: Option<Moment>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilteredPosology {
    pub posology: OfficialPosology,
    /// False when a constraint refers to data the record lacks.
    pub verified: bool,
    pub unverified: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PosologyFlagKind {
    OverMaxDose,
    MissingRequiredMoment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosologyFlag {
    pub kind: PosologyFlagKind,
    pub drug: ItemId,
    pub detail: String,
}

fn latest_clearance(record: &PatientRecord, knowledge: &Knowledge) -> Option<Result<f64, String>> {
    let code = CodeRef::loinc(CREATININE_CLEARANCE_LOINC);
    let lab = record
        .labs
        .iter()
        .filter(|l| knowledge.terminology.subsumed_by(&l.code, &code))
        .max_by(|a, b| a.date.cmp(&b.date))?;
    if lab.unit.eq_ignore_ascii_case("mL/min") {
        Some(Ok(lab.value))
    } else {
        Some(Err(format!(
            "clearance reported in {}, expected mL/min",
            lab.unit
        )))
    }
}

/// Official posologies of `entry` that apply to this patient and treatment.
/// Entries whose constraints need missing data are kept and marked unverified.
pub fn filter_official(
    entry: &TreatmentEntry,
    posologies: &[OfficialPosology],
    record: &PatientRecord,
    treatment: &TreatmentView,
    knowledge: &Knowledge,
) -> Vec<FilteredPosology> {
    let terminology = &knowledge.terminology;
    let hepatic = CodeRef::icd10(HEPATIC_FAILURE_ICD10);
    let has_hepatic_failure = record
        .present_conditions()
        .any(|c| terminology.subsumed_by(&c.code, &hepatic));
    let clearance = latest_clearance(record, knowledge);

    posologies
        .iter()
        .filter_map(|p| {
            let mut unverified = Vec::new();
            if let Some(ind) = &p.indication {
                match &entry.drug.indication {
                    Some(actual) if terminology.subsumed_by(actual, ind) => {}
                    Some(_) => return None,
                    None => unverified.push("drug indication unknown".to_string()),
                }
            }
            if p.age_min.is_some_and(|min| record.age < min)
                || p.age_max.is_some_and(|max| record.age > max)
            {
                return None;
            }
            if p.clearance_min.is_some() || p.clearance_max.is_some() {
                match &clearance {
                    None => unverified.push("no creatinine clearance result".to_string()),
                    Some(Err(why)) => unverified.push(why.clone()),
                    Some(Ok(v)) => {
                        if p.clearance_min.is_some_and(|min| *v < min)
                            || p.clearance_max.is_some_and(|max| *v >= max)
                        {
                            return None;
                        }
                    }
                }
            }
            if p.hepatic_failure
                .is_some_and(|flag| flag != has_hepatic_failure)
            {
                return None;
            }
            if let Some(class) = &p.co_prescription {
                let co_prescribed = treatment.active().any(|other| {
                    other.drug.id != entry.drug.id
                        && other
                            .drug
                            .atc_codes
                            .iter()
                            .any(|c| terminology.subsumed_by(c, class))
                });
                if !co_prescribed {
                    return None;
                }
            }
            Some(FilteredPosology {
                posology: p.clone(),
                verified: unverified.is_empty(),
                unverified,
            })
        })
        .collect()
}

/// Max-dose and missing-moment flags. Only verified official entries are used,
/// and nothing is flagged from an unrecognized posology or an incomplete total.
pub fn check_flags(
    treatment: &TreatmentView,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Vec<PosologyFlag> {
    let totals = day_doses(treatment, &knowledge.drugs);
    let mut flags = Vec::new();
    for entry in treatment.active() {
        if !entry.posology.recognized {
            continue;
        }
        let Some(db) = knowledge.drugs.get(&entry.drug.drug_id) else {
            continue;
        };
        let applicable =
            filter_official(entry, &db.official_posologies, record, treatment, knowledge);
        for official in applicable.iter().filter(|f| f.verified) {
            let p = &official.posology;
            if let Some(max) = p.max_day_dose_mg {
                let principle = p.principle.as_deref().unwrap_or(&db.primary_principle().id);
                let total = totals.iter().find(|t| t.principle == principle);
                if let Some(t) = total.filter(|t| t.total.complete && t.total.max_mg > max) {
                    flags.push(PosologyFlag {
                        kind: PosologyFlagKind::OverMaxDose,
                        drug: entry.drug.id.clone(),
                        detail: format!(
                            "{principle}: up to {} mg/day exceeds maximum {} mg/day",
                            t.total.max_mg, max
                        ),
                    });
                }
            }
            if let Some(moment) = p.required_moment {
                let mentioned = entry.posology.moments.contains(&moment);
                if !mentioned && entry.posology.form != PosologyForm::AsNeeded {
                    flags.push(PosologyFlag {
                        kind: PosologyFlagKind::MissingRequiredMoment,
                        drug: entry.drug.id.clone(),
                        detail: format!("should be taken in the {}", moment.as_str()),
                    });
                }
            }
        }
    }
    flags.sort_by(|a, b| (&a.drug, a.kind, &a.detail).cmp(&(&b.drug, b.kind, &b.detail)));
    flags.dedup();
    flags
}
