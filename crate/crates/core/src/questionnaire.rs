//! Adaptive interview: only the condition items that can still change the
//! outcome of some rule for this patient are shown.
//!
//! Unlike `rules::evaluate`, conditions here are open-world: a concept nobody
//! answered is unknown, not absent. Within one rule, unknown concepts are
//! revealed one at a time in written order; across rules the first relevant
//! concepts are merged.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories::{category, AnatomicalCategory, CATEGORIES, UNCLASSIFIED};
use crate::code::CodeRef;
use crate::knowledge::Knowledge;
use crate::logic::Truth;
use crate::patient::{
    mutate, pre_mr, Change, ItemInput, ItemOp, MutationError, PatientRecord, Provenance,
};
use crate::rules::{drug_side_truth, term_truth_with};
use crate::rules::{CompiledElement, CompiledRule, CompiledTerm, EvalContext, RulePlan};
use crate::terminology::Terminology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Unasked,
    Checked,
    Unchecked,
}

impl ItemState {
    fn truth(self) -> Truth {
        match self {
            ItemState::Unasked => Truth::Unknown,
            ItemState::Checked => Truth::True,
            ItemState::Unchecked => Truth::False,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionnaireItem {
    pub concept: CodeRef,
    pub label: String,
    pub category: AnatomicalCategory,
    pub state: ItemState,
    /// Strict descendants offered as more specific answers.
    pub refinements: Vec<CodeRef>,
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerValue {
    Checked,
    Unchecked,
}

#[derive(Debug, Error)]
pub enum QuestionnaireError {
    #[error("{0} is not a questionnaire concept of the loaded rules")]
    UnknownConcept(CodeRef),
    #[error("{0} is not currently shown and cannot be answered")]
    Hidden(CodeRef),
    #[error("{refinement} is not a more specific term of {concept}")]
    InvalidRefinement {
        concept: CodeRef,
        refinement: CodeRef,
    },
    #[error(transparent)]
    Mutation(#[from] MutationError),
}

/// Checked when a present condition falls under the concept; unchecked when the
/// concept or one of its ancestors is recorded absent; unasked otherwise.
pub fn concept_state(
    concept: &CodeRef,
    record: &PatientRecord,
    terminology: &Terminology,
) -> ItemState {
    if record
        .present_conditions()
        .any(|c| terminology.subsumed_by(&c.code, concept))
    {
        ItemState::Checked
    } else if record
        .conditions
        .iter()
        .any(|c| !c.present && terminology.subsumed_by(concept, &c.code))
    {
        ItemState::Unchecked
    } else {
        ItemState::Unasked
    }
}

fn states(
    plan: &RulePlan,
    record: &PatientRecord,
    terminology: &Terminology,
) -> BTreeMap<CodeRef, Truth> {
    plan.concepts()
        .into_iter()
        .map(|c| {
            let t = concept_state(&c, record, terminology).truth();
            (c, t)
        })
        .collect()
}

fn valuation<'a>(states: &'a BTreeMap<CodeRef, Truth>) -> impl Fn(&CompiledElement) -> Truth + 'a {
    move |e: &CompiledElement| {
        Truth::any(
            e.written
                .iter()
                .map(|c| states.get(c).copied().unwrap_or(Truth::Unknown)),
        )
    }
}

fn mentions(term: &CompiledTerm, concept: &CodeRef) -> bool {
    term.elements().any(|e| e.written.contains(concept))
}

/// First concept of `rule`, in written order, whose answer could change the
/// rule's outcome. `None` when the outcome is already determined.
fn first_relevant(
    rule: &CompiledRule,
    ctx: &EvalContext<'_>,
    states: &BTreeMap<CodeRef, Truth>,
) -> Option<CodeRef> {
    let mut scratch = Vec::new();
    let base_val = valuation(states);
    let base: Vec<Truth> = rule
        .terms
        .iter()
        .map(|t| term_truth_with(t, ctx, &base_val, &mut scratch))
        .collect();
    let drugs = drug_side_truth(rule, ctx, &mut scratch);
    if Truth::all(base.iter().copied()).and(drugs) != Truth::Unknown {
        return None;
    }
    for concept in rule.concepts() {
        if states.get(&concept) != Some(&Truth::Unknown) {
            continue;
        }
        let outcome = |value: Truth| {
            let mut forced = states.clone();
            forced.insert(concept.clone(), value);
            let val = valuation(&forced);
            let mut scratch = Vec::new();
            let terms = rule.terms.iter().zip(&base).map(|(t, &b)| {
                if mentions(t, &concept) {
                    term_truth_with(t, ctx, &val, &mut scratch)
                } else {
                    b
                }
            });
            Truth::all(terms.collect::<Vec<_>>()).and(drugs)
        };
        if outcome(Truth::True) != outcome(Truth::False) {
            return Some(concept);
        }
    }
    None
}

/// Concepts to show now.
pub fn visible_concepts(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> BTreeSet<CodeRef> {
    let treatment = pre_mr(record);
    let ctx = EvalContext::new(record, &treatment, knowledge);
    let states = states(plan, record, &knowledge.terminology);
    plan.rules
        .iter()
        .filter_map(|r| first_relevant(r, &ctx, &states))
        .collect()
}

fn item(
    concept: &CodeRef,
    record: &PatientRecord,
    knowledge: &Knowledge,
    visible: bool,
) -> QuestionnaireItem {
    let terminology = &knowledge.terminology;
    let refinements = terminology
        .descendants(concept)
        .map(|d| d.into_iter().filter(|c| c != concept).collect())
        .unwrap_or_default();
    QuestionnaireItem {
        concept: concept.clone(),
        label: terminology
            .label(concept)
            .unwrap_or(&concept.code)
            .to_string(),
        category: category(knowledge.category_of(concept))
            .unwrap_or(CATEGORIES[usize::from(UNCLASSIFIED) - 1]),
        state: concept_state(concept, record, terminology),
        refinements,
        visible,
    }
}

fn sort_items(items: &mut [QuestionnaireItem]) {
    items.sort_by(|a, b| (a.category.index, &a.concept).cmp(&(b.category.index, &b.concept)));
}

/// Visible items, grouped by anatomical category.
pub fn visible_items(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Vec<QuestionnaireItem> {
    let mut items: Vec<_> = visible_concepts(plan, record, knowledge)
        .iter()
        .map(|c| item(c, record, knowledge, true))
        .collect();
    sort_items(&mut items);
    items
}

/// Visible items plus items already answered (which stay editable).
pub fn questionnaire_view(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Vec<QuestionnaireItem> {
    let visible = visible_concepts(plan, record, knowledge);
    let mut items: Vec<_> = plan
        .concepts()
        .iter()
        .filter_map(|c| {
            let shown = visible.contains(c);
            let answered = concept_state(c, record, &knowledge.terminology) != ItemState::Unasked;
            (shown || answered).then(|| item(c, record, knowledge, shown))
        })
        .collect();
    sort_items(&mut items);
    items
}

/// `1 - visible / total concepts`; 1.0 for a corpus without condition concepts.
pub fn reduction_ratio(plan: &RulePlan, record: &PatientRecord, knowledge: &Knowledge) -> f64 {
    let total = plan.concepts().len();
    if total == 0 {
        return 1.0;
    }
    1.0 - visible_concepts(plan, record, knowledge).len() as f64 / total as f64
}

/// Item operations recording an answer. Checking adds the concept (or the chosen
/// refinement, replacing a more generic present code); unchecking removes
/// present codes under the concept and records the concept as absent.
pub fn answer_ops(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
    concept: &CodeRef,
    value: AnswerValue,
    refinement: Option<&CodeRef>,
) -> Result<Vec<ItemOp>, QuestionnaireError> {
    let terminology = &knowledge.terminology;
    if !plan.concepts().contains(concept) {
        return Err(QuestionnaireError::UnknownConcept(concept.clone()));
    }
    let answered = concept_state(concept, record, terminology) != ItemState::Unasked;
    if !answered && !visible_concepts(plan, record, knowledge).contains(concept) {
        return Err(QuestionnaireError::Hidden(concept.clone()));
    }
    let mut ops = Vec::new();
    match value {
        AnswerValue::Checked => {
            let code = match refinement {
                Some(r) if r != concept && terminology.subsumed_by(r, concept) => r.clone(),
                Some(r) => {
                    return Err(QuestionnaireError::InvalidRefinement {
                        concept: concept.clone(),
                        refinement: r.clone(),
                    })
                }
                None => concept.clone(),
            };
            for c in &record.conditions {
                let contradicts = !c.present && terminology.subsumed_by(&code, &c.code);
                let superseded = c.present
                    && c.code != code
                    && terminology.subsumed_by(&code, &c.code)
                    && terminology.subsumed_by(&c.code, concept);
                if contradicts || superseded {
                    ops.push(ItemOp::Remove { id: c.id.clone() });
                }
            }
            if !record
                .conditions
                .iter()
                .any(|c| c.present && c.code == code)
            {
                ops.push(ItemOp::Add {
                    item: ItemInput::Condition {
                        code,
                        present: true,
                    },
                });
            }
        }
        AnswerValue::Unchecked => {
            if refinement.is_some() {
                return Err(QuestionnaireError::InvalidRefinement {
                    concept: concept.clone(),
                    refinement: refinement.cloned().unwrap_or_else(|| concept.clone()),
                });
            }
            for c in record.present_conditions() {
                if terminology.subsumed_by(&c.code, concept) {
                    ops.push(ItemOp::Remove { id: c.id.clone() });
                }
            }
            if !record
                .conditions
                .iter()
                .any(|c| !c.present && &c.code == concept)
            {
                ops.push(ItemOp::Add {
                    item: ItemInput::Condition {
                        code: concept.clone(),
                        present: false,
                    },
                });
            }
        }
    }
    Ok(ops)
}

/// Records an answer and returns the updated record.
#[allow(clippy::too_many_arguments)]
pub fn answer(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
    concept: &CodeRef,
    value: AnswerValue,
    refinement: Option<&CodeRef>,
    author: &str,
    provenance: Provenance,
) -> Result<PatientRecord, QuestionnaireError> {
    let ops = answer_ops(plan, record, knowledge, concept, value, refinement)?;
    if ops.is_empty() {
        return Ok(record.clone());
    }
    Ok(mutate(
        record,
        &Change::new(author, provenance, ops),
        knowledge,
    )?)
}
