//! Item-level mutations. Every accepted change bumps the revision by exactly one
//! and appends to the change log; a rejected change leaves the record untouched.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    ChatMessage, ClinicalCondition, DataCategory, DrugPrescription, FamilyNote, ItemId, LabResult,
    Lifestyle, NewDrug, PatientRecord, Preconization, PreconizationAction, ProblemCategory,
    Provenance, ReviewNote, TreatmentProblem, LIFESTYLE_ITEM,
};
use crate::code::{CodeRef, SystemId};
use crate::knowledge::Knowledge;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MutationError {
    #[error("unknown item `{0}`")]
    UnknownItem(ItemId),
    #[error("item `{item}` changed at revision {current}, after base revision {base}")]
    Stale {
        item: ItemId,
        base: u64,
        current: u64,
    },
    #[error("item `{item}` is a {actual}, not a {expected}")]
    WrongCategory {
        item: ItemId,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("item `{0}` cannot be modified or removed")]
    Immutable(ItemId),
    #[error("the preconization log is frozen by a validated review")]
    FrozenLog,
    #[error("unknown drug `{0}`")]
    UnknownDrug(String),
    #[error("unknown code {0}")]
    UnknownCode(CodeRef),
    #[error("invalid item: {0}")]
    Invalid(String),
    #[error("a change must contain at least one operation")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "snake_case")]
pub enum ItemInput {
    Drug {
        drug_id: String,
        posology_text: String,
        #[serde(default)]
        indication: Option<CodeRef>,
        #[serde(default)]
        duration_days: Option<f64>,
    },
    Condition {
        code: CodeRef,
        #[serde(default = "present_default")]
        present: bool,
    },
    Lab {
        code: CodeRef,
        value: f64,
        unit: String,
        #[serde(default)]
        date: Option<String>,
    },
    Problem {
        problem: ProblemCategory,
        #[serde(default)]
        drug: Option<ItemId>,
        #[serde(default)]
        effect: Option<CodeRef>,
        #[serde(default)]
        note: String,
    },
    Preconization {
        action: PreconizationAction,
    },
    ReviewNote {
        text: String,
    },
    Chat {
        text: String,
    },
    FamilyNote {
        code: CodeRef,
        text: String,
    },
}

fn present_default() -> bool {
    true
}

impl ItemInput {
    pub fn category(&self) -> DataCategory {
        match self {
            ItemInput::Drug { .. } => DataCategory::Drugs,
            ItemInput::Condition { .. } | ItemInput::FamilyNote { .. } => DataCategory::Conditions,
            ItemInput::Lab { .. } => DataCategory::Labs,
            ItemInput::Problem { .. } => DataCategory::Problems,
            ItemInput::Preconization { .. } | ItemInput::ReviewNote { .. } => {
                DataCategory::Preconizations
            }
            ItemInput::Chat { .. } => DataCategory::Chat,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            ItemInput::Drug { .. } => "drug",
            ItemInput::Condition { .. } => "condition",
            ItemInput::Lab { .. } => "lab",
            ItemInput::Problem { .. } => "problem",
            ItemInput::Preconization { .. } => "preconization",
            ItemInput::ReviewNote { .. } => "review_note",
            ItemInput::Chat { .. } => "chat",
            ItemInput::FamilyNote { .. } => "family_note",
        }
    }

    fn id_prefix(&self) -> &'static str {
        match self {
            ItemInput::Drug { .. } => "d",
            ItemInput::Condition { .. } => "c",
            ItemInput::Lab { .. } => "l",
            ItemInput::Problem { .. } => "t",
            ItemInput::Preconization { .. } => "p",
            ItemInput::ReviewNote { .. } => "n",
            ItemInput::Chat { .. } => "m",
            ItemInput::FamilyNote { .. } => "f",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ItemOp {
    Add { item: ItemInput },
    Update { id: ItemId, item: ItemInput },
    Remove { id: ItemId },
    SetLifestyle { lifestyle: Lifestyle },
}

/// A batch of item operations applied atomically as one revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub author: String,
    pub provenance: Provenance,
    /// Revision the author was looking at; enables stale-write detection.
    #[serde(default)]
    pub base_revision: Option<u64>,
    #[serde(default)]
    pub timestamp: u64,
    pub ops: Vec<ItemOp>,
}

impl Change {
    pub fn new(author: impl Into<String>, provenance: Provenance, ops: Vec<ItemOp>) -> Self {
        Change {
            author: author.into(),
            provenance,
            base_revision: None,
            timestamp: 0,
            ops,
        }
    }

    pub fn with_base(mut self, base: u64) -> Self {
        self.base_revision = Some(base);
        self
    }

    pub fn at(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }

    /// Data categories this change touches, resolved against `record`.
    pub fn categories(&self, record: &PatientRecord) -> BTreeSet<DataCategory> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                ItemOp::Add { item } | ItemOp::Update { item, .. } => Some(item.category()),
                ItemOp::Remove { id } => record.category_of_item(id),
                ItemOp::SetLifestyle { .. } => Some(DataCategory::Problems),
            })
            .collect()
    }

    /// Ids of existing items this change overwrites or removes.
    pub fn targeted_items(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                ItemOp::Update { id, .. } | ItemOp::Remove { id } => Some(id.as_str()),
                ItemOp::SetLifestyle { .. } => Some(LIFESTYLE_ITEM),
                ItemOp::Add { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Updated,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeLogEntry {
    pub item_id: ItemId,
    pub kind: ChangeKind,
    pub author: String,
    pub prior_revision: u64,
}

/// Applies `change` to a copy of `record`. On success the copy's revision is
/// exactly one greater.
pub fn mutate(
    record: &PatientRecord,
    change: &Change,
    knowledge: &Knowledge,
) -> Result<PatientRecord, MutationError> {
    if change.ops.is_empty() {
        return Err(MutationError::Empty);
    }
    if let Some(base) = change.base_revision {
        for id in change.targeted_items() {
            if let Some(&current) = record.item_revisions.get(id) {
                if current > base {
                    return Err(MutationError::Stale {
                        item: id.to_string(),
                        base,
                        current,
                    });
                }
            }
        }
    }

    let mut next = record.clone();
    let prior = record.revision;
    let revision = prior + 1;
    let mut touched: Vec<(ItemId, ChangeKind)> = Vec::new();
    for op in &change.ops {
        match op {
            ItemOp::Add { item } => {
                let id = next.allocate_id(item.id_prefix());
                insert_item(&mut next, id.clone(), item, change, knowledge)?;
                touched.push((id, ChangeKind::Added));
            }
            ItemOp::Update { id, item } => {
                check_updatable(&next, id, item)?;
                let pos = remove_item(&mut next, id);
                insert_item(&mut next, id.clone(), item, change, knowledge)?;
                restore_position(&mut next, id, item.category(), pos);
                touched.push((id.clone(), ChangeKind::Updated));
            }
            ItemOp::Remove { id } => {
                match next.category_of_item(id) {
                    None => return Err(MutationError::UnknownItem(id.clone())),
                    Some(DataCategory::Chat) => return Err(MutationError::Immutable(id.clone())),
                    Some(DataCategory::Preconizations) => {
                        if next.preconizations.iter().any(|p| &p.id == id) {
                            return Err(MutationError::Immutable(id.clone()));
                        }
                        if next.review_frozen {
                            return Err(MutationError::FrozenLog);
                        }
                    }
                    Some(_) if id == LIFESTYLE_ITEM => {
                        return Err(MutationError::Immutable(id.clone()))
                    }
                    Some(_) => {}
                }
                remove_item(&mut next, id);
                touched.push((id.clone(), ChangeKind::Removed));
            }
            ItemOp::SetLifestyle { lifestyle } => {
                next.lifestyle = lifestyle.clone();
                touched.push((LIFESTYLE_ITEM.to_string(), ChangeKind::Updated));
            }
        }
    }

    refresh_indications(&mut next, knowledge);
    next.revision = revision;
    for (id, kind) in touched {
        if kind == ChangeKind::Removed {
            next.item_revisions.remove(&id);
        } else {
            next.item_revisions.insert(id.clone(), revision);
        }
        next.change_log.push(ChangeLogEntry {
            item_id: id,
            kind,
            author: change.author.clone(),
            prior_revision: prior,
        });
    }
    Ok(next)
}

/// Marks the preconization log as frozen (review validated). Bumps the revision.
pub fn freeze_review(record: &PatientRecord, author: &str) -> PatientRecord {
    let mut next = record.clone();
    next.review_frozen = true;
    next.revision += 1;
    next.change_log.push(ChangeLogEntry {
        item_id: "review".into(),
        kind: ChangeKind::Updated,
        author: author.to_string(),
        prior_revision: record.revision,
    });
    next
}

fn check_updatable(
    record: &PatientRecord,
    id: &str,
    item: &ItemInput,
) -> Result<(), MutationError> {
    let actual = record
        .category_of_item(id)
        .ok_or_else(|| MutationError::UnknownItem(id.to_string()))?;
    if id == LIFESTYLE_ITEM {
        return Err(MutationError::Immutable(id.to_string()));
    }
    let same_kind = match item {
        ItemInput::Drug { .. } => record.drugs.iter().any(|d| d.id == id),
        ItemInput::Condition { .. } => record.conditions.iter().any(|c| c.id == id),
        ItemInput::FamilyNote { .. } => record.family_notes.iter().any(|n| n.id == id),
        ItemInput::Lab { .. } => record.labs.iter().any(|l| l.id == id),
        ItemInput::Problem { .. } => record.problems.iter().any(|p| p.id == id),
        ItemInput::ReviewNote { .. } => record.review_notes.iter().any(|n| n.id == id),
        ItemInput::Preconization { .. } | ItemInput::Chat { .. } => {
            return Err(MutationError::Immutable(id.to_string()))
        }
    };
    if !same_kind {
        return Err(MutationError::WrongCategory {
            item: id.to_string(),
            expected: item.kind_name(),
            actual: actual.as_str(),
        });
    }
    Ok(())
}

fn remove_item(record: &mut PatientRecord, id: &str) -> Option<usize> {
    fn take<T>(list: &mut Vec<T>, pred: impl Fn(&T) -> bool) -> Option<usize> {
        let pos = list.iter().position(pred)?;
        list.remove(pos);
        Some(pos)
    }
    take(&mut record.drugs, |d| d.id == id)
        .or_else(|| take(&mut record.conditions, |c| c.id == id))
        .or_else(|| take(&mut record.family_notes, |n| n.id == id))
        .or_else(|| take(&mut record.labs, |l| l.id == id))
        .or_else(|| take(&mut record.problems, |p| p.id == id))
        .or_else(|| take(&mut record.review_notes, |n| n.id == id))
}

fn restore_position(
    record: &mut PatientRecord,
    id: &str,
    category: DataCategory,
    pos: Option<usize>,
) {
    fn reposition<T>(list: &mut Vec<T>, pos: Option<usize>, is: impl Fn(&T) -> bool) {
        if let (Some(pos), Some(cur)) = (pos, list.iter().position(is)) {
            let item = list.remove(cur);
            list.insert(pos.min(list.len()), item);
        }
    }
    match category {
        DataCategory::Drugs => reposition(&mut record.drugs, pos, |d| d.id == id),
        DataCategory::Conditions => {
            reposition(&mut record.conditions, pos, |c| c.id == id);
            reposition(&mut record.family_notes, pos, |n| n.id == id);
        }
        DataCategory::Labs => reposition(&mut record.labs, pos, |l| l.id == id),
        DataCategory::Problems => reposition(&mut record.problems, pos, |p| p.id == id),
        DataCategory::Preconizations => reposition(&mut record.review_notes, pos, |n| n.id == id),
        DataCategory::Chat => {}
    }
}

fn require_code(
    knowledge: &Knowledge,
    code: &CodeRef,
    allowed: &[SystemId],
) -> Result<(), MutationError> {
    if !allowed.contains(&code.system) {
        return Err(MutationError::Invalid(format!(
            "code {code} is not in an accepted system ({})",
            allowed
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    if !knowledge.terminology.contains(code) {
        return Err(MutationError::UnknownCode(code.clone()));
    }
    Ok(())
}

fn non_empty(text: &str, what: &str) -> Result<(), MutationError> {
    if text.trim().is_empty() {
        Err(MutationError::Invalid(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

pub(crate) fn resolve_new_drug(
    knowledge: &Knowledge,
    drug: &NewDrug,
) -> Result<NewDrug, MutationError> {
    let entry = knowledge
        .drugs
        .get(&drug.drug_id)
        .ok_or_else(|| MutationError::UnknownDrug(drug.drug_id.clone()))?;
    if let Some(ind) = &drug.indication {
        require_code(knowledge, ind, &[SystemId::Icd10, SystemId::Custom])?;
    }
    Ok(NewDrug {
        drug_id: drug.drug_id.clone(),
        posology_text: drug.posology_text.clone(),
        indication: drug.indication.clone(),
        indication_manual: drug.indication.is_some(),
        atc_codes: entry.atc.clone(),
        trademark: entry.trademark.clone(),
        inn: entry.inn.clone(),
    })
}

fn drug_exists_for_preconization(record: &PatientRecord, id: &str) -> bool {
    record.drugs.iter().any(|d| d.id == id)
        || record.preconizations.iter().any(|p| {
            p.id == id
                && matches!(
                    p.action,
                    PreconizationAction::Prescribe { .. } | PreconizationAction::Replace { .. }
                )
        })
}

fn insert_item(
    record: &mut PatientRecord,
    id: ItemId,
    item: &ItemInput,
    change: &Change,
    knowledge: &Knowledge,
) -> Result<(), MutationError> {
    let source = change.provenance;
    let needs_review = source == Provenance::TextReport;
    match item {
        ItemInput::Drug {
            drug_id,
            posology_text,
            indication,
            duration_days,
        } => {
            let entry = knowledge
                .drugs
                .get(drug_id)
                .ok_or_else(|| MutationError::UnknownDrug(drug_id.clone()))?;
            if let Some(ind) = indication {
                require_code(knowledge, ind, &[SystemId::Icd10, SystemId::Custom])?;
            }
            if let Some(d) = duration_days {
                if !(d.is_finite() && *d >= 0.0) {
                    return Err(MutationError::Invalid(
                        "duration must be a non-negative number".into(),
                    ));
                }
            }
            record.drugs.push(DrugPrescription {
                id,
                drug_id: drug_id.clone(),
                atc_codes: entry.atc.clone(),
                trademark: entry.trademark.clone(),
                inn: entry.inn.clone(),
                posology_text: posology_text.clone(),
                indication: indication.clone(),
                indication_manual: indication.is_some(),
                missing_indication: indication.is_none(),
                duration_days: *duration_days,
                source,
            });
        }
        ItemInput::Condition { code, present } => {
            require_code(knowledge, code, &[SystemId::Icd10, SystemId::Custom])?;
            record.conditions.push(ClinicalCondition {
                id,
                code: code.clone(),
                present: *present,
                source,
                needs_review,
            });
        }
        ItemInput::FamilyNote { code, text } => {
            if !knowledge.terminology.contains(code) {
                return Err(MutationError::UnknownCode(code.clone()));
            }
            record.family_notes.push(FamilyNote {
                id,
                code: code.clone(),
                text: text.clone(),
                source,
            });
        }
        ItemInput::Lab {
            code,
            value,
            unit,
            date,
        } => {
            require_code(knowledge, code, &[SystemId::Loinc])?;
            if !value.is_finite() {
                return Err(MutationError::Invalid("lab value must be finite".into()));
            }
            non_empty(unit, "lab unit")?;
            record.labs.push(LabResult {
                id,
                code: code.clone(),
                value: *value,
                unit: unit.trim().to_string(),
                date: date.clone(),
                source,
                needs_review,
            });
        }
        ItemInput::Problem {
            problem,
            drug,
            effect,
            note,
        } => {
            if *problem == ProblemCategory::SuspectedAdverseEvent && effect.is_none() {
                return Err(MutationError::Invalid(
                    "a suspected adverse event needs an effect code".into(),
                ));
            }
            if let Some(effect) = effect {
                require_code(knowledge, effect, &[SystemId::Meddra])?;
            }
            if let Some(drug) = drug {
                if record.drug(drug).is_none() {
                    return Err(MutationError::UnknownItem(drug.clone()));
                }
            }
            record.problems.push(TreatmentProblem {
                id,
                category: *problem,
                drug: drug.clone(),
                effect: effect.clone(),
                note: note.clone(),
                source,
            });
        }
        ItemInput::Preconization { action } => {
            if record.review_frozen {
                return Err(MutationError::FrozenLog);
            }
            let action = validate_preconization(record, action, knowledge)?;
            record.preconizations.push(Preconization {
                id,
                author: change.author.clone(),
                source,
                action,
            });
        }
        ItemInput::ReviewNote { text } => {
            if record.review_frozen {
                return Err(MutationError::FrozenLog);
            }
            non_empty(text, "review note")?;
            record.review_notes.push(ReviewNote {
                id,
                author: change.author.clone(),
                text: text.clone(),
            });
        }
        ItemInput::Chat { text } => {
            non_empty(text, "chat message")?;
            record.chat.push(ChatMessage {
                id,
                author: change.author.clone(),
                text: text.clone(),
                timestamp: change.timestamp,
            });
        }
    }
    Ok(())
}

fn validate_preconization(
    record: &PatientRecord,
    action: &PreconizationAction,
    knowledge: &Knowledge,
) -> Result<PreconizationAction, MutationError> {
    let need_drug = |id: &ItemId| {
        if drug_exists_for_preconization(record, id) {
            Ok(())
        } else {
            Err(MutationError::UnknownItem(id.clone()))
        }
    };
    Ok(match action {
        PreconizationAction::SignalProblem { drug, note } => {
            need_drug(drug)?;
            PreconizationAction::SignalProblem {
                drug: drug.clone(),
                note: note.clone(),
            }
        }
        PreconizationAction::Prescribe { drug } => PreconizationAction::Prescribe {
            drug: resolve_new_drug(knowledge, drug)?,
        },
        PreconizationAction::Deprescribe { drug } => {
            need_drug(drug)?;
            action.clone()
        }
        PreconizationAction::ChangePosology { drug, .. } => {
            need_drug(drug)?;
            action.clone()
        }
        PreconizationAction::Replace { drug, by } => {
            need_drug(drug)?;
            PreconizationAction::Replace {
                drug: drug.clone(),
                by: resolve_new_drug(knowledge, by)?,
            }
        }
        PreconizationAction::Cancel { target } => {
            if record.preconization(target).is_none() {
                return Err(MutationError::UnknownItem(target.clone()));
            }
            action.clone()
        }
    })
}

fn inferred_indication(
    knowledge: &Knowledge,
    record: &PatientRecord,
    drug_id: &str,
) -> Option<CodeRef> {
    let entry = knowledge.drugs.get(drug_id)?;
    record
        .present_conditions()
        .find(|c| {
            entry
                .indications
                .iter()
                .any(|ind| knowledge.terminology.subsumed_by(&c.code, ind))
        })
        .map(|c| c.code.clone())
}

pub(crate) fn refresh_indications(record: &mut PatientRecord, knowledge: &Knowledge) {
    let snapshot = record.clone();
    for drug in &mut record.drugs {
        if !drug.indication_manual {
            drug.indication = inferred_indication(knowledge, &snapshot, &drug.drug_id);
        }
        drug.missing_indication = drug.indication.is_none();
    }
    for p in &mut record.preconizations {
        if let PreconizationAction::Prescribe { drug }
        | PreconizationAction::Replace { by: drug, .. } = &mut p.action
        {
            if !drug.indication_manual {
                drug.indication = inferred_indication(knowledge, &snapshot, &drug.drug_id);
            }
        }
    }
}

/// Links every drug without a clinician-entered indication to a patient
/// condition subsumed by one of the drug's known indications; drugs left
/// without one are flagged `missing_indication`.
pub fn infer_indications(record: &PatientRecord, knowledge: &Knowledge) -> PatientRecord {
    let mut out = record.clone();
    refresh_indications(&mut out, knowledge);
    out
}
