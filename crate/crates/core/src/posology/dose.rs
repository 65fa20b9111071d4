use std::collections::BTreeMap;

use serde::Serialize;

use crate::drugdb::DrugDatabase;
use crate::patient::{ItemId, TreatmentEntry, TreatmentView};

/// Closed mg/day interval; a point dose has `min_mg == max_mg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoseRange {
    pub min_mg: f64,
    pub max_mg: f64,
}

impl DoseRange {
    pub fn point(mg: f64) -> Self {
        DoseRange {
            min_mg: mg,
            max_mg: mg,
        }
    }
}

/// Treatment-wide total for one principle. When `complete` is false at least one
/// contributing posology was unrecognized and both bounds only cover the
/// recognized part: the true total is at least `min_mg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayDose {
    pub min_mg: f64,
    pub max_mg: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrugDose {
    pub drug: ItemId,
    /// `None` when the posology text was not recognized.
    pub dose: Option<DoseRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivePrincipleDose {
    pub principle: String,
    pub per_drug: Vec<DrugDose>,
    pub total: DayDose,
}

/// mg/day of one principle delivered by one treatment entry.
pub fn drug_day_dose(entry: &TreatmentEntry, strength_mg: f64) -> Option<DoseRange> {
    entry.posology.units_per_day().map(|u| DoseRange {
        min_mg: u.min * strength_mg,
        max_mg: u.max * strength_mg,
    })
}

/// Day doses of every active principle in the active treatment, sorted by principle id.
/// Drugs missing from the database contribute nothing.
pub fn day_doses(treatment: &TreatmentView, drug_db: &DrugDatabase) -> Vec<ActivePrincipleDose> {
    let mut by_principle: BTreeMap<&str, Vec<DrugDose>> = BTreeMap::new();
    for entry in treatment.active() {
        let Some(db) = drug_db.get(&entry.drug.drug_id) else {
            continue;
        };
        for principle in &db.principles {
            by_principle
                .entry(&principle.id)
                .or_default()
                .push(DrugDose {
                    drug: entry.drug.id.clone(),
                    dose: drug_day_dose(entry, principle.strength_mg),
                });
        }
    }
    by_principle
        .into_iter()
        .map(|(principle, per_drug)| {
            let mut total = DayDose {
                min_mg: 0.0,
                max_mg: 0.0,
                complete: true,
            };
            for d in &per_drug {
                match d.dose {
                    Some(r) => {
                        total.min_mg += r.min_mg;
                        total.max_mg += r.max_mg;
                    }
                    None => total.complete = false,
                }
            }
            ActivePrincipleDose {
                principle: principle.to_string(),
                per_drug,
                total,
            }
        })
        .collect()
}
