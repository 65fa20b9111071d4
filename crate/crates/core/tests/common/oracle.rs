//! Direct evaluation of rules from their written form, for cross-checking the
//! compiled engine and the questionnaire.

use std::collections::{BTreeMap, BTreeSet};

use medreview_core::patient::{DrugPrescription, PatientRecord};
use medreview_core::rules::{
    Action, Attribute, CodeSpec, Comparator, ElementKind, Rule, RuleElement, Term,
};
use medreview_core::{CodeRef, Knowledge};

use super::synth::SynthPatient;

// Kleene values as 0 (false), 1 (unknown), 2 (true).
pub const F: u8 = 0;
pub const U: u8 = 1;
pub const T: u8 = 2;

fn b(x: bool) -> u8 {
    if x {
        T
    } else {
        F
    }
}

pub fn under(k: &Knowledge, code: &CodeRef, ancestor: &CodeRef) -> bool {
    if code == ancestor {
        return true;
    }
    let Some(c) = k.terminology.get(code) else {
        return false;
    };
    c.parents
        .iter()
        .any(|p| under(k, &CodeRef::new(code.system, p.clone()), ancestor))
}

pub fn written(k: &Knowledge, e: &RuleElement) -> Vec<CodeRef> {
    let mut out = Vec::new();
    for spec in &e.codes {
        match spec {
            CodeSpec::Code(c) => out.push(c.clone()),
            CodeSpec::Range { lo, hi } => {
                let system = k.terminology.system(lo.system).unwrap();
                out.extend(
                    system
                        .codes()
                        .filter(|c| {
                            c.id.as_str() >= lo.code.as_str() && c.id.as_str() <= hi.as_str()
                        })
                        .map(|c| c.code_ref()),
                );
            }
        }
    }
    out
}

fn matches(k: &Knowledge, code: &CodeRef, e: &RuleElement) -> bool {
    written(k, e).iter().any(|w| under(k, code, w))
}

fn compare(op: Comparator, x: f64, t: f64) -> bool {
    match op {
        Comparator::Lt => x < t,
        Comparator::Le => x <= t,
        Comparator::Eq => x == t,
        Comparator::Ge => x >= t,
        Comparator::Gt => x > t,
    }
}

pub struct Case<'a> {
    pub k: &'a Knowledge,
    pub synth: &'a SynthPatient,
    pub record: &'a PatientRecord,
    /// Open-world condition states by concept; closed world when `None`.
    pub states: Option<&'a BTreeMap<CodeRef, u8>>,
}

impl Case<'_> {
    /// Total mg/day interval of one principle over the whole treatment.
    fn principle_total(&self, principle: &str) -> (f64, f64, bool) {
        let (mut lo, mut hi, mut complete) = (0.0, 0.0, true);
        for (i, d) in self.synth.drugs.iter().enumerate() {
            let entry = self.k.drugs.get(&d.drug_id).unwrap();
            for p in entry.principles.iter().filter(|p| p.id == principle) {
                let (ulo, uhi, ok) = self.synth.units(i);
                if ok {
                    lo += ulo * p.strength_mg;
                    hi += uhi * p.strength_mg;
                } else {
                    complete = false;
                }
            }
        }
        (lo, if complete { hi } else { f64::INFINITY }, complete)
    }

    fn drug(&self, e: &RuleElement, d: &DrugPrescription) -> u8 {
        if !d.atc_codes.iter().any(|c| matches(self.k, c, e)) {
            return F;
        }
        let mut out = T;
        for a in &e.attributes {
            let v = match a {
                Attribute::Dose(q) => {
                    let principle = &self.k.drugs.get(&d.drug_id).unwrap().principles[0].id;
                    let (lo, hi, _) = self.principle_total(principle);
                    // Holds for every dose in [lo, hi], for none, or for some.
                    let every = match q.op {
                        Comparator::Lt | Comparator::Le => compare(q.op, hi, q.value),
                        Comparator::Gt | Comparator::Ge => compare(q.op, lo, q.value),
                        Comparator::Eq => lo == q.value && hi == q.value,
                    };
                    let none = match q.op {
                        Comparator::Lt | Comparator::Le => !compare(q.op, lo, q.value),
                        Comparator::Gt | Comparator::Ge => !compare(q.op, hi, q.value),
                        Comparator::Eq => q.value < lo || q.value > hi,
                    };
                    if every {
                        T
                    } else if none {
                        F
                    } else {
                        U
                    }
                }
                Attribute::Duration(q) => {
                    d.duration_days.map_or(U, |x| b(compare(q.op, x, q.value)))
                }
                Attribute::Indication(c) => {
                    d.indication.as_ref().map_or(U, |i| b(under(self.k, i, c)))
                }
                Attribute::Value(_) => U,
            };
            out = out.min(v);
        }
        out
    }

    fn element(&self, e: &RuleElement) -> u8 {
        match e.kind {
            ElementKind::Drug => self
                .record
                .drugs
                .iter()
                .map(|d| self.drug(e, d))
                .max()
                .unwrap_or(F),
            ElementKind::Condition => match self.states {
                Some(states) => written(self.k, e)
                    .iter()
                    .map(|c| states.get(c).copied().unwrap_or(U))
                    .max()
                    .unwrap_or(F),
                None => b(self
                    .record
                    .conditions
                    .iter()
                    .any(|c| c.present && matches(self.k, &c.code, e))),
            },
            ElementKind::Lab => {
                let labs: Vec<_> = self
                    .record
                    .labs
                    .iter()
                    .filter(|l| matches(self.k, &l.code, e))
                    .collect();
                let value = e.attributes.iter().find_map(|a| match a {
                    Attribute::Value(q) => Some(q),
                    _ => None,
                });
                match value {
                    None => b(!labs.is_empty()),
                    Some(_) if labs.is_empty() => U,
                    Some(q) => labs
                        .iter()
                        .map(|l| {
                            if l.unit.to_lowercase() == q.unit.to_lowercase() {
                                b(compare(q.op, l.value, q.value))
                            } else {
                                U
                            }
                        })
                        .max()
                        .unwrap(),
                }
            }
        }
    }

    fn term(&self, t: &Term) -> u8 {
        match t {
            Term::Required(e) => self.element(e),
            Term::Not(e) => T - self.element(e),
            Term::AnyOf(es) => es.iter().map(|e| self.element(e)).max().unwrap_or(F),
        }
    }

    fn related(&self, a: &RuleElement, b: &RuleElement) -> bool {
        let (wa, wb) = (written(self.k, a), written(self.k, b));
        wa.iter().any(|x| {
            wb.iter()
                .any(|y| under(self.k, x, y) || under(self.k, y, x))
        })
    }

    fn targeted(&self, rule: &Rule, d: &DrugPrescription) -> u8 {
        let mut t = self.drug(&rule.target, d);
        if rule.action == Action::Stop {
            let related = rule
                .required()
                .filter(|e| e.kind == ElementKind::Drug && self.related(e, &rule.target))
                .map(|e| self.drug(e, d))
                .max()
                .unwrap_or(F);
            t = t.min(related);
        }
        t
    }

    /// Status of one rule: conditions and drug side.
    pub fn status(&self, rule: &Rule) -> u8 {
        let cond = rule.terms.iter().map(|t| self.term(t)).min().unwrap_or(T);
        let some = self
            .record
            .drugs
            .iter()
            .map(|d| self.targeted(rule, d))
            .max()
            .unwrap_or(F);
        let side = match rule.action {
            Action::Stop => some,
            Action::Start => T - some,
        };
        cond.min(side)
    }

    /// Fired alerts as (rule, drug item) and the set of undetermined rules.
    pub fn run(&self, rules: &[Rule]) -> (BTreeSet<(String, Option<String>)>, BTreeSet<String>) {
        let mut alerts = BTreeSet::new();
        let mut unknown = BTreeSet::new();
        for rule in rules {
            let cond = rule.terms.iter().map(|t| self.term(t)).min().unwrap_or(T);
            let per_drug: Vec<(String, u8)> = self
                .record
                .drugs
                .iter()
                .map(|d| (d.id.clone(), self.targeted(rule, d)))
                .collect();
            let some = per_drug.iter().map(|(_, t)| *t).max().unwrap_or(F);
            let side = match rule.action {
                Action::Stop => some,
                Action::Start => T - some,
            };
            match cond.min(side) {
                T => match rule.action {
                    Action::Start => {
                        alerts.insert((rule.id.clone(), None));
                    }
                    Action::Stop => {
                        for (id, t) in per_drug {
                            if t == T {
                                alerts.insert((rule.id.clone(), Some(id)));
                            }
                        }
                    }
                },
                U => {
                    unknown.insert(rule.id.clone());
                }
                _ => {}
            }
        }
        (alerts, unknown)
    }
}

/// Whole-rule probing with every concept's state derived from the record.
pub fn visible(
    k: &Knowledge,
    rules: &[Rule],
    synth: &SynthPatient,
    record: &PatientRecord,
) -> BTreeSet<CodeRef> {
    let mut concepts: Vec<Vec<CodeRef>> = Vec::new();
    for rule in rules {
        let mut own: Vec<CodeRef> = Vec::new();
        for term in &rule.terms {
            for e in term.elements().filter(|e| e.kind == ElementKind::Condition) {
                for c in written(k, e) {
                    if !own.contains(&c) {
                        own.push(c);
                    }
                }
            }
        }
        concepts.push(own);
    }
    let mut states = BTreeMap::new();
    for c in concepts.iter().flatten() {
        let checked = record
            .conditions
            .iter()
            .any(|x| x.present && under(k, &x.code, c));
        let unchecked = record
            .conditions
            .iter()
            .any(|x| !x.present && under(k, c, &x.code));
        states.insert(
            c.clone(),
            if checked {
                T
            } else if unchecked {
                F
            } else {
                U
            },
        );
    }
    let mut out = BTreeSet::new();
    for (rule, own) in rules.iter().zip(&concepts) {
        let status = |s: &BTreeMap<CodeRef, u8>| {
            Case {
                k,
                synth,
                record,
                states: Some(s),
            }
            .status(rule)
        };
        if status(&states) != U {
            continue;
        }
        for c in own.iter().filter(|c| states[*c] == U) {
            let mut yes = states.clone();
            yes.insert(c.clone(), T);
            let mut no = states.clone();
            no.insert(c.clone(), F);
            if status(&yes) != status(&no) {
                out.insert(c.clone());
                break;
            }
        }
    }
    out
}
