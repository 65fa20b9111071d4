use serde::Serialize;

use super::eval::{evaluate, Alert, DataQualityNote, EvalContext, RulePlan};
use crate::knowledge::Knowledge;
use crate::patient::{
    apply_preconizations, pre_mr, EntryMark, ItemId, PatientRecord, PreconizationError,
};

/// One drug line of the comparative table: the pre-review drug and what it
/// became (itself, its replacement, or nothing).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignedRow {
    pub pre_drug: Option<ItemId>,
    pub post_drug: Option<ItemId>,
    pub pre: Vec<Alert>,
    pub post: Vec<Alert>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AlertDiff {
    pub rows: Vec<AlignedRow>,
    pub start_pre: Vec<Alert>,
    pub start_post: Vec<Alert>,
    pub notes: Vec<DataQualityNote>,
}

/// Alerts before and after the review, aligned by drug. A replacement drug
/// shares the row of the drug it replaces.
pub fn evaluate_comparative(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Result<AlertDiff, PreconizationError> {
    let pre = pre_mr(record);
    let post = apply_preconizations(record)?;
    let pre_eval = evaluate(plan, &EvalContext::new(record, &pre, knowledge));
    let post_eval = evaluate(plan, &EvalContext::new(record, &post, knowledge));

    let mut rows: Vec<AlignedRow> = Vec::new();
    for entry in &pre.entries {
        let id = &entry.drug.id;
        let post_drug = if post.is_active(id) {
            Some(id.clone())
        } else {
            post.entries
                .iter()
                .find(|e| e.replaces.as_ref() == Some(id) && e.is_active())
                .map(|e| e.drug.id.clone())
        };
        rows.push(AlignedRow {
            pre_drug: Some(id.clone()),
            post_drug,
            pre: Vec::new(),
            post: Vec::new(),
        });
    }
    for entry in post.active().filter(|e| e.mark == EntryMark::Added) {
        if !rows
            .iter()
            .any(|r| r.post_drug.as_ref() == Some(&entry.drug.id))
        {
            rows.push(AlignedRow {
                pre_drug: None,
                post_drug: Some(entry.drug.id.clone()),
                pre: Vec::new(),
                post: Vec::new(),
            });
        }
    }

    let mut diff = AlertDiff::default();
    for alert in pre_eval.alerts {
        match alert.drug.clone() {
            Some(d) => match rows.iter_mut().find(|r| r.pre_drug.as_ref() == Some(&d)) {
                Some(row) => row.pre.push(alert),
                None => diff.start_pre.push(alert),
            },
            None => diff.start_pre.push(alert),
        }
    }
    for alert in post_eval.alerts {
        match alert.drug.clone() {
            Some(d) => match rows.iter_mut().find(|r| r.post_drug.as_ref() == Some(&d)) {
                Some(row) => row.post.push(alert),
                None => diff.start_post.push(alert),
            },
            None => diff.start_post.push(alert),
        }
    }
    diff.rows = rows;
    diff.notes = pre_eval.notes;
    diff.notes.extend(post_eval.notes);
    Ok(diff)
}
