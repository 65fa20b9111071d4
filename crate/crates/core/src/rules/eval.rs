use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::parse::expand_codes;
use super::{
    Action, AlertClass, Attribute, Comparator, ElementKind, Quantity, Rule, RuleError, Term,
};
use crate::code::CodeRef;
use crate::knowledge::Knowledge;
use crate::logic::Truth;
use crate::patient::{ItemId, PatientRecord, Phase, TreatmentEntry, TreatmentView};
use crate::posology::{day_doses, DayDose};
use crate::terminology::Terminology;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CompiledAttribute {
    Dose(Quantity),
    Duration(Quantity),
    /// The indication code and all its descendants.
    Indication(CodeRef, BTreeSet<CodeRef>),
    Value(Quantity),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompiledElement {
    pub kind: ElementKind,
    /// Codes as written, ranges expanded.
    pub written: Vec<CodeRef>,
    /// Every code an item may carry to match: descendants of the written codes.
    pub matches: BTreeSet<CodeRef>,
    pub attributes: Vec<CompiledAttribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CompiledTerm {
    Required(CompiledElement),
    AnyOf(Vec<CompiledElement>),
    Not(CompiledElement),
}

impl CompiledTerm {
    pub fn elements(&self) -> impl Iterator<Item = &CompiledElement> {
        match self {
            CompiledTerm::Required(e) | CompiledTerm::Not(e) => std::slice::from_ref(e).iter(),
            CompiledTerm::AnyOf(es) => es.iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompiledRule {
    pub rule: Rule,
    pub terms: Vec<CompiledTerm>,
    pub target: CompiledElement,
    /// Required drug terms related to the target by subsumption (stop rules).
    pub target_terms: Vec<usize>,
}

impl CompiledRule {
    /// Condition concepts in written order, deduplicated.
    pub fn concepts(&self) -> Vec<CodeRef> {
        let mut out: Vec<CodeRef> = Vec::new();
        for term in &self.terms {
            for e in term.elements().filter(|e| e.kind == ElementKind::Condition) {
                for c in &e.written {
                    if !out.contains(c) {
                        out.push(c.clone());
                    }
                }
            }
        }
        out
    }
}

/// Rules compiled against one terminology.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RulePlan {
    pub rules: Vec<CompiledRule>,
}

impl RulePlan {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Distinct condition concepts across the corpus.
    pub fn concepts(&self) -> BTreeSet<CodeRef> {
        self.rules.iter().flat_map(CompiledRule::concepts).collect()
    }
}

fn compile_element(
    rule: &Rule,
    element: &super::RuleElement,
    terminology: &Terminology,
) -> Result<CompiledElement, RuleError> {
    let invalid = |message: String| RuleError::Invalid {
        rule: rule.id.clone(),
        message,
    };
    let written = expand_codes(element, terminology).map_err(invalid)?;
    let mut matches = BTreeSet::new();
    for c in &written {
        matches.extend(
            terminology
                .descendants(c)
                .map_err(|e| invalid(e.to_string()))?,
        );
    }
    let attributes = element
        .attributes
        .iter()
        .map(|a| {
            Ok(match a {
                Attribute::Dose(q) => CompiledAttribute::Dose(q.clone()),
                Attribute::Duration(q) => CompiledAttribute::Duration(q.clone()),
                Attribute::Value(q) => CompiledAttribute::Value(q.clone()),
                Attribute::Indication(c) => CompiledAttribute::Indication(
                    c.clone(),
                    terminology
                        .descendants(c)
                        .map_err(|e| invalid(e.to_string()))?,
                ),
            })
        })
        .collect::<Result<_, RuleError>>()?;
    Ok(CompiledElement {
        kind: element.kind,
        written,
        matches,
        attributes,
    })
}

/// Checks every rule and pre-expands descendant sets for matching.
pub fn compile(rules: &[Rule], terminology: &Terminology) -> Result<RulePlan, RuleError> {
    let mut ids = BTreeSet::new();
    let mut out = Vec::with_capacity(rules.len());
    for rule in rules {
        super::check_rule(rule, terminology)?;
        if !ids.insert(rule.id.as_str()) {
            return Err(RuleError::Invalid {
                rule: rule.id.clone(),
                message: "duplicate rule id".into(),
            });
        }
        let terms = rule
            .terms
            .iter()
            .map(|t| {
                Ok(match t {
                    Term::Required(e) => {
                        CompiledTerm::Required(compile_element(rule, e, terminology)?)
                    }
                    Term::Not(e) => CompiledTerm::Not(compile_element(rule, e, terminology)?),
                    Term::AnyOf(es) => CompiledTerm::AnyOf(
                        es.iter()
                            .map(|e| compile_element(rule, e, terminology))
                            .collect::<Result<_, _>>()?,
                    ),
                })
            })
            .collect::<Result<Vec<_>, RuleError>>()?;
        let target = compile_element(rule, &rule.target, terminology)?;
        let target_terms = terms
            .iter()
            .enumerate()
            .filter(|(_, t)| match t {
                CompiledTerm::Required(e) => {
                    e.kind == ElementKind::Drug
                        && (e.matches.iter().any(|c| target.written.contains(c))
                            || target.matches.iter().any(|c| e.written.contains(c)))
                }
                _ => false,
            })
            .map(|(i, _)| i)
            .collect();
        out.push(CompiledRule {
            rule: rule.clone(),
            terms,
            target,
            target_terms,
        });
    }
    Ok(RulePlan { rules: out })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DataQualityNote {
    pub rule: String,
    pub phase: Phase,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Alert {
    pub rule: String,
    pub action: Action,
    pub class: AlertClass,
    pub phase: Phase,
    /// The treatment drug to stop; `None` for start alerts.
    pub drug: Option<ItemId>,
    pub drug_id: Option<String>,
    pub text: String,
    pub comment: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Evaluation {
    pub alerts: Vec<Alert>,
    pub notes: Vec<DataQualityNote>,
}

/// Everything derived once per (record, treatment) before rules run.
pub struct EvalContext<'a> {
    pub record: &'a PatientRecord,
    pub treatment: &'a TreatmentView,
    pub knowledge: &'a Knowledge,
    totals: BTreeMap<String, DayDose>,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        record: &'a PatientRecord,
        treatment: &'a TreatmentView,
        knowledge: &'a Knowledge,
    ) -> Self {
        let totals = day_doses(treatment, &knowledge.drugs)
            .into_iter()
            .map(|d| (d.principle, d.total))
            .collect();
        EvalContext {
            record,
            treatment,
            knowledge,
            totals,
        }
    }
}

/// Truth of `x op threshold` for every x in [lo, hi].
pub(crate) fn interval_truth(op: Comparator, threshold: f64, lo: f64, hi: f64) -> Truth {
    let (all, none) = match op {
        Comparator::Lt => (hi < threshold, lo >= threshold),
        Comparator::Le => (hi <= threshold, lo > threshold),
        Comparator::Gt => (lo > threshold, hi <= threshold),
        Comparator::Ge => (lo >= threshold, hi < threshold),
        Comparator::Eq => (
            lo == threshold && hi == threshold,
            threshold < lo || threshold > hi,
        ),
    };
    if all {
        Truth::True
    } else if none {
        Truth::False
    } else {
        Truth::Unknown
    }
}

pub(crate) type Notes = Vec<String>;

pub(crate) fn drug_truth(
    element: &CompiledElement,
    entry: &TreatmentEntry,
    ctx: &EvalContext<'_>,
    notes: &mut Notes,
) -> Truth {
    let drug = &entry.drug;
    if !drug.atc_codes.iter().any(|c| element.matches.contains(c)) {
        return Truth::False;
    }
    let mut truth = Truth::True;
    for attr in &element.attributes {
        let t = match attr {
            CompiledAttribute::Dose(q) => {
                let principle = ctx
                    .knowledge
                    .drugs
                    .get(&drug.drug_id)
                    .map(|db| db.primary_principle().id.as_str());
                match principle.and_then(|p| ctx.totals.get(p).map(|t| (p, t))) {
                    Some((p, total)) => {
                        let hi = if total.complete {
                            total.max_mg
                        } else {
                            f64::INFINITY
                        };
                        let t = interval_truth(q.op, q.value, total.min_mg, hi);
                        if t == Truth::Unknown {
                            notes.push(format!(
                                "day dose of {p} ({}) not known precisely enough",
                                drug.id
                            ));
                        }
                        t
                    }
                    None => {
                        notes.push(format!("no day dose for {}", drug.id));
                        Truth::Unknown
                    }
                }
            }
            CompiledAttribute::Duration(q) => match drug.duration_days {
                Some(d) => Truth::from_bool(q.op.holds(d, q.value)),
                None => {
                    notes.push(format!("treatment duration of {} unknown", drug.id));
                    Truth::Unknown
                }
            },
            CompiledAttribute::Indication(code, set) => match &drug.indication {
                Some(ind) => Truth::from_bool(set.contains(ind)),
                None => {
                    notes.push(format!(
                        "indication of {} unknown (expected {code})",
                        drug.id
                    ));
                    Truth::Unknown
                }
            },
            CompiledAttribute::Value(_) => Truth::Unknown,
        };
        truth = truth.and(t);
        if truth == Truth::False {
            break;
        }
    }
    truth
}

fn lab_truth(element: &CompiledElement, ctx: &EvalContext<'_>, notes: &mut Notes) -> Truth {
    let labs: Vec<_> = ctx
        .record
        .labs
        .iter()
        .filter(|l| element.matches.contains(&l.code))
        .collect();
    let value_attr = element.attributes.iter().find_map(|a| match a {
        CompiledAttribute::Value(q) => Some(q),
        _ => None,
    });
    let Some(q) = value_attr else {
        return Truth::from_bool(!labs.is_empty());
    };
    if labs.is_empty() {
        notes.push(format!("no result for {}", element.written[0]));
        return Truth::Unknown;
    }
    Truth::any(labs.iter().map(|l| {
        if l.unit.trim().eq_ignore_ascii_case(q.unit.trim()) {
            Truth::from_bool(q.op.holds(l.value, q.value))
        } else {
            notes.push(format!(
                "{} reported in {}, rule expects {}",
                l.code, l.unit, q.unit
            ));
            Truth::Unknown
        }
    }))
}

/// Condition elements match present conditions only.
pub(crate) fn closed_world(element: &CompiledElement, ctx: &EvalContext<'_>) -> Truth {
    Truth::from_bool(
        ctx.record
            .present_conditions()
            .any(|c| element.matches.contains(&c.code)),
    )
}

pub(crate) fn element_truth(
    element: &CompiledElement,
    ctx: &EvalContext<'_>,
    condition: &dyn Fn(&CompiledElement) -> Truth,
    notes: &mut Notes,
) -> Truth {
    match element.kind {
        ElementKind::Drug => Truth::any(
            ctx.treatment
                .active()
                .map(|e| drug_truth(element, e, ctx, notes))
                .collect::<Vec<_>>(),
        ),
        ElementKind::Condition => condition(element),
        ElementKind::Lab => lab_truth(element, ctx, notes),
    }
}

pub(crate) fn term_truth(
    term: &CompiledTerm,
    ctx: &EvalContext<'_>,
    condition: &dyn Fn(&CompiledElement) -> Truth,
    notes: &mut Notes,
) -> Truth {
    match term {
        CompiledTerm::Required(e) => element_truth(e, ctx, condition, notes),
        CompiledTerm::Not(e) => !element_truth(e, ctx, condition, notes),
        CompiledTerm::AnyOf(es) => Truth::any(
            es.iter()
                .map(|e| element_truth(e, ctx, condition, notes))
                .collect::<Vec<_>>(),
        ),
    }
}

/// Per active drug: does the rule target it? For stop rules the drug must also
/// satisfy one of the related required elements.
pub(crate) fn target_truths(
    rule: &CompiledRule,
    ctx: &EvalContext<'_>,
    notes: &mut Notes,
) -> Vec<(usize, Truth)> {
    ctx.treatment
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_active())
        .map(|(pos, entry)| {
            let mut t = drug_truth(&rule.target, entry, ctx, notes);
            if rule.rule.action == Action::Stop {
                let related = Truth::any(
                    rule.target_terms
                        .iter()
                        .filter_map(|&i| match &rule.terms[i] {
                            CompiledTerm::Required(e) => Some(drug_truth(e, entry, ctx, notes)),
                            _ => None,
                        })
                        .collect::<Vec<_>>(),
                );
                t = t.and(related);
            }
            (pos, t)
        })
        .collect()
}

/// Truth of the drug side: some targeted drug for stop rules, no targeted drug
/// for start rules.
pub(crate) fn drug_side(rule: &CompiledRule, ctx: &EvalContext<'_>, notes: &mut Notes) -> Truth {
    let any = Truth::any(target_truths(rule, ctx, notes).into_iter().map(|(_, t)| t));
    match rule.rule.action {
        Action::Stop => any,
        Action::Start => !any,
    }
}

fn evaluate_rule(
    rule: &CompiledRule,
    ctx: &EvalContext<'_>,
    out: &mut Vec<(usize, Alert)>,
    dq: &mut Vec<DataQualityNote>,
) {
    let mut notes = Notes::new();
    let cond = |e: &CompiledElement| closed_world(e, ctx);
    let condition = Truth::all(
        rule.terms
            .iter()
            .map(|t| term_truth(t, ctx, &cond, &mut notes))
            .collect::<Vec<_>>(),
    );
    let status = match condition {
        Truth::False => Truth::False,
        _ => condition.and(drug_side(rule, ctx, &mut notes)),
    };
    match status {
        Truth::False => {}
        Truth::Unknown => {
            notes.sort();
            notes.dedup();
            if notes.is_empty() {
                notes.push("undetermined".into());
            }
            for reason in notes {
                dq.push(DataQualityNote {
                    rule: rule.rule.id.clone(),
                    phase: ctx.treatment.phase,
                    reason,
                });
            }
        }
        Truth::True => {
            let alert = |drug: Option<&TreatmentEntry>| Alert {
                rule: rule.rule.id.clone(),
                action: rule.rule.action,
                class: rule.rule.class(),
                phase: ctx.treatment.phase,
                drug: drug.map(|d| d.drug.id.clone()),
                drug_id: drug.map(|d| d.drug.drug_id.clone()),
                text: rule.rule.alert_text.clone(),
                comment: rule.rule.comment.clone(),
            };
            match rule.rule.action {
                Action::Start => out.push((usize::MAX, alert(None))),
                Action::Stop => {
                    let mut scratch = Notes::new();
                    for (pos, t) in target_truths(rule, ctx, &mut scratch) {
                        if t == Truth::True {
                            out.push((pos, alert(Some(&ctx.treatment.entries[pos]))));
                        }
                    }
                }
            }
        }
    }
}

/// Alerts for one treatment, ordered by drug position then rule id, start
/// alerts last. A rule whose outcome depends on unknown data does not fire and
/// leaves data-quality notes instead.
pub fn evaluate(plan: &RulePlan, ctx: &EvalContext<'_>) -> Evaluation {
    let mut alerts = Vec::new();
    let mut notes = Vec::new();
    for rule in &plan.rules {
        evaluate_rule(rule, ctx, &mut alerts, &mut notes);
    }
    alerts.sort_by(|(pa, a), (pb, b)| (pa, &a.rule).cmp(&(pb, &b.rule)));
    notes.sort();
    Evaluation {
        alerts: alerts.into_iter().map(|(_, a)| a).collect(),
        notes,
    }
}
