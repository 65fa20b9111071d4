//! Pre-review and post-review treatment views.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DrugPrescription, ItemId, NewDrug, PatientRecord, Preconization, PreconizationAction};
use crate::posology::{parse_posology, ParsedPosology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreMr,
    PostMr,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreMr => "pre_mr",
            Phase::PostMr => "post_mr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryMark {
    Unchanged,
    Added,
    Removed,
    PosologyChanged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreatmentEntry {
    pub drug: DrugPrescription,
    pub mark: EntryMark,
    /// For drugs added by a replacement: the drug they replace.
    pub replaces: Option<ItemId>,
    pub original_posology: Option<String>,
    pub posology: ParsedPosology,
}

impl TreatmentEntry {
    fn new(drug: DrugPrescription, mark: EntryMark) -> Self {
        let posology = parse_posology(&drug.posology_text);
        TreatmentEntry {
            drug,
            mark,
            replaces: None,
            original_posology: None,
            posology,
        }
    }

    pub fn is_active(&self) -> bool {
        self.mark != EntryMark::Removed
    }
}

/// A resolved drug list. Removed drugs stay listed (marked) for display but are
/// not part of the active treatment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreatmentView {
    pub phase: Phase,
    pub entries: Vec<TreatmentEntry>,
}

impl TreatmentView {
    pub fn active(&self) -> impl Iterator<Item = &TreatmentEntry> {
        self.entries.iter().filter(|e| e.is_active())
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }

    pub fn entry(&self, id: &str) -> Option<&TreatmentEntry> {
        self.entries.iter().find(|e| e.drug.id == id)
    }

    pub fn is_active(&self, id: &str) -> bool {
        self.entry(id).is_some_and(TreatmentEntry::is_active)
    }

    /// Same view restricted to active entries, keeping the phase.
    pub fn only_active(&self) -> TreatmentView {
        TreatmentView {
            phase: self.phase,
            entries: self.active().cloned().collect(),
        }
    }

    /// A view containing exactly the given drugs, all unchanged.
    pub fn from_drugs(phase: Phase, drugs: impl IntoIterator<Item = DrugPrescription>) -> Self {
        TreatmentView {
            phase,
            entries: drugs
                .into_iter()
                .map(|d| TreatmentEntry::new(d, EntryMark::Unchanged))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreconizationError {
    #[error("preconization {cancel} cancels `{target}`, which is not an earlier preconization")]
    DanglingCancel { cancel: ItemId, target: ItemId },
}

pub fn pre_mr(record: &PatientRecord) -> TreatmentView {
    TreatmentView::from_drugs(Phase::PreMr, record.drugs.iter().cloned())
}

/// Preconizations still in force, in entry order. A cancel disables its target;
/// a cancelled cancel restores it. Cancels themselves are not returned.
pub fn effective_preconizations(
    record: &PatientRecord,
) -> Result<Vec<&Preconization>, PreconizationError> {
    let log = &record.preconizations;
    let mut active = vec![true; log.len()];
    for (i, p) in log.iter().enumerate().rev() {
        if let PreconizationAction::Cancel { target } = &p.action {
            let Some(t) = log[..i].iter().position(|q| &q.id == target) else {
                return Err(PreconizationError::DanglingCancel {
                    cancel: p.id.clone(),
                    target: target.clone(),
                });
            };
            if active[i] {
                active[t] = false;
            }
        }
    }
    Ok(log
        .iter()
        .zip(active)
        .filter(|(p, on)| *on && !matches!(p.action, PreconizationAction::Cancel { .. }))
        .map(|(p, _)| p)
        .collect())
}

fn added_drug(p: &Preconization, new: &NewDrug) -> DrugPrescription {
    DrugPrescription {
        id: p.id.clone(),
        drug_id: new.drug_id.clone(),
        atc_codes: new.atc_codes.clone(),
        trademark: new.trademark.clone(),
        inn: new.inn.clone(),
        posology_text: new.posology_text.clone(),
        indication: new.indication.clone(),
        indication_manual: new.indication_manual,
        missing_indication: new.indication.is_none(),
        duration_days: None,
        source: p.source,
    }
}

fn remove(entries: &mut Vec<TreatmentEntry>, id: &str) {
    if let Some(pos) = entries
        .iter()
        .position(|e| e.drug.id == id && e.is_active())
    {
        if entries[pos].mark == EntryMark::Added {
            entries.remove(pos);
        } else {
            entries[pos].mark = EntryMark::Removed;
        }
    }
}

/// The post-review treatment: the current drugs with every preconization in
/// force applied in entry order.
pub fn apply_preconizations(record: &PatientRecord) -> Result<TreatmentView, PreconizationError> {
    let mut entries = pre_mr(record).entries;
    for p in effective_preconizations(record)? {
        match &p.action {
            PreconizationAction::SignalProblem { .. } | PreconizationAction::Cancel { .. } => {}
            PreconizationAction::Prescribe { drug } => {
                entries.push(TreatmentEntry::new(added_drug(p, drug), EntryMark::Added));
            }
            PreconizationAction::Deprescribe { drug } => remove(&mut entries, drug),
            PreconizationAction::ChangePosology {
                drug,
                new_posology_text,
            } => {
                if let Some(e) = entries
                    .iter_mut()
                    .find(|e| &e.drug.id == drug && e.is_active())
                {
                    if e.original_posology.is_none() && e.mark != EntryMark::Added {
                        e.original_posology = Some(e.drug.posology_text.clone());
                    }
                    e.drug.posology_text = new_posology_text.clone();
                    e.posology = parse_posology(new_posology_text);
                    if e.mark == EntryMark::Unchanged {
                        e.mark = EntryMark::PosologyChanged;
                    }
                }
            }
            PreconizationAction::Replace { drug, by } => {
                if entries.iter().any(|e| &e.drug.id == drug && e.is_active()) {
                    remove(&mut entries, drug);
                    let mut entry = TreatmentEntry::new(added_drug(p, by), EntryMark::Added);
                    entry.replaces = Some(drug.clone());
                    entries.push(entry);
                }
            }
        }
    }
    Ok(TreatmentView {
        phase: crate::patient::Phase::PostMr,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::CodeRef;
    use crate::patient::{Provenance, Sex};

    fn drug(id: &str) -> DrugPrescription {
        DrugPrescription {
            id: id.into(),
            drug_id: format!("db-{id}"),
            atc_codes: vec![CodeRef::atc("C07AB07")],
            trademark: id.to_uppercase(),
            inn: id.into(),
            posology_text: "1 morning".into(),
            indication: None,
            indication_manual: false,
            missing_indication: true,
            duration_days: None,
            source: Provenance::Ehr,
        }
    }

    fn precon(id: &str, action: PreconizationAction) -> Preconization {
        Preconization {
            id: id.into(),
            author: "ph".into(),
            source: Provenance::ManualPharmacist,
            action,
        }
    }

    fn new_drug(id: &str) -> NewDrug {
        NewDrug {
            drug_id: id.into(),
            posology_text: "1 evening".into(),
            indication: None,
            indication_manual: false,
            atc_codes: vec![CodeRef::atc("C08CA01")],
            trademark: "Z".into(),
            inn: "z".into(),
        }
    }

    fn record() -> PatientRecord {
        let mut r = PatientRecord::new("p", 80, Sex::Female);
        r.drugs = vec![drug("x"), drug("y")];
        r
    }

    fn active_ids(v: &TreatmentView) -> Vec<&str> {
        v.active().map(|e| e.drug.id.as_str()).collect()
    }

    #[test]
    fn no_preconizations_is_identity() {
        let r = record();
        let post = apply_preconizations(&r).unwrap();
        assert_eq!(post.entries, pre_mr(&r).entries);
        assert_eq!(post.phase, Phase::PostMr);
    }

    #[test]
    fn deprescribe_keeps_removed_marker() {
        let mut r = record();
        r.preconizations.push(precon(
            "p1",
            PreconizationAction::Deprescribe { drug: "x".into() },
        ));
        let post = apply_preconizations(&r).unwrap();
        assert_eq!(active_ids(&post), vec!["y"]);
        assert_eq!(post.entry("x").unwrap().mark, EntryMark::Removed);
    }

    #[test]
    fn replace_then_cancel_restores_pre_view() {
        let mut r = record();
        r.preconizations.push(precon(
            "p1",
            PreconizationAction::Replace {
                drug: "x".into(),
                by: new_drug("z"),
            },
        ));
        let replaced = apply_preconizations(&r).unwrap();
        assert_eq!(active_ids(&replaced), vec!["y", "p1"]);
        assert_eq!(replaced.entry("p1").unwrap().replaces.as_deref(), Some("x"));
        r.preconizations.push(precon(
            "p2",
            PreconizationAction::Cancel {
                target: "p1".into(),
            },
        ));
        let post = apply_preconizations(&r).unwrap();
        assert_eq!(post.entries, pre_mr(&r).entries);
    }

    #[test]
    fn cancelling_a_cancel_reinstates() {
        let mut r = record();
        r.preconizations.push(precon(
            "p1",
            PreconizationAction::Deprescribe { drug: "x".into() },
        ));
        r.preconizations.push(precon(
            "p2",
            PreconizationAction::Cancel {
                target: "p1".into(),
            },
        ));
        r.preconizations.push(precon(
            "p3",
            PreconizationAction::Cancel {
                target: "p2".into(),
            },
        ));
        assert_eq!(active_ids(&apply_preconizations(&r).unwrap()), vec!["y"]);
    }

    #[test]
    fn change_posology_rewrites_text() {
        let mut r = record();
        r.preconizations.push(precon(
            "p1",
            PreconizationAction::ChangePosology {
                drug: "y".into(),
                new_posology_text: "1 morning and evening".into(),
            },
        ));
        let post = apply_preconizations(&r).unwrap();
        let y = post.entry("y").unwrap();
        assert_eq!(y.mark, EntryMark::PosologyChanged);
        assert_eq!(y.original_posology.as_deref(), Some("1 morning"));
        assert_eq!(y.posology.moments.len(), 2);
    }

    #[test]
    fn dangling_cancel_is_an_error() {
        let mut r = record();
        r.preconizations.push(precon(
            "p1",
            PreconizationAction::Cancel {
                target: "p9".into(),
            },
        ));
        assert!(matches!(
            apply_preconizations(&r),
            Err(PreconizationError::DanglingCancel { .. })
        ));
    }

    #[test]
    fn prescribed_then_deprescribed_disappears() {
        let mut r = record();
        r.preconizations.push(precon(
            "p1",
            PreconizationAction::Prescribe {
                drug: new_drug("z"),
            },
        ));
        r.preconizations.push(precon(
            "p2",
            PreconizationAction::Deprescribe { drug: "p1".into() },
        ));
        let post = apply_preconizations(&r).unwrap();
        assert!(post.entry("p1").is_none());
        assert_eq!(active_ids(&post), vec!["x", "y"]);
    }
}
