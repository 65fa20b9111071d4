//! STOPP/START-style rules: a small DSL, a compiled matching plan and a
//! three-valued evaluator producing alerts and data-quality notes.
//!
//! A rule reads "if E1 and ... and (U1 or U2 ...) and not N1 ... then stop or
//! start prescription P". In the DSL:
//!
//! ```text
//! RULE STOPP-J3
//! ACTION stop atc:C07
//! WHEN drug(atc:C07) AND cond(icd10:E10-E14) AND cond(custom:HYPOGLY)
//! TEXT "Beta-blocker with diabetes mellitus and frequent hypoglycaemic episodes"
//! ```
//!
//! Terms are joined by `AND` (a line starting with `AND` continues `WHEN`).
//! `ANY(a OR b)` is a disjunctive group, `NOT x` a negated element. Elements
//! are `drug(...)`, `cond(...)` or `lab(...)` with `|`-separated codes
//! (`sys:lo..hi` expands a range) followed by attributes:
//! `dose>3000 mg/day`, `duration>56 days`, `indication=icd10:I10` for drugs and
//! `value>150 umol/L` for labs. `COMMENT "..."` marks a rule that cannot be
//! fully automated. `#` starts a comment line.

mod batch;
mod compare;
mod eval;
mod parse;

use std::fmt;

use serde::Serialize;

use crate::code::CodeRef;

pub use batch::{evaluate_batch, evaluate_batch_sequential};
pub use compare::{evaluate_comparative, AlertDiff, AlignedRow};
pub use eval::{
    compile, evaluate, Alert, CompiledAttribute, CompiledElement, CompiledRule, CompiledTerm,
    DataQualityNote, EvalContext, Evaluation, RulePlan,
};
pub(crate) use eval::{drug_side as drug_side_truth, term_truth as term_truth_with};
pub use parse::{check_rule, parse_rules, parse_rules_unchecked, RuleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Stop,
    Start,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Stop => "stop",
            Action::Start => "start",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertClass {
    StoppAuto,
    StoppSemiAuto,
    Start,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Drug,
    Condition,
    Lab,
}

impl ElementKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ElementKind::Drug => "drug",
            ElementKind::Condition => "cond",
            ElementKind::Lab => "lab",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Eq => value == threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Gt => value > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub op: Comparator,
    pub value: f64,
    pub unit: String,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{} {}", self.op.symbol(), self.value, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    /// Day dose of the drug's primary active principle, mg/day.
    Dose(Quantity),
    Duration(Quantity),
    Indication(CodeRef),
    /// Lab value with its unit.
    Value(Quantity),
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::Dose(q) => write!(f, "dose{q}"),
            Attribute::Duration(q) => write!(f, "duration{q}"),
            Attribute::Indication(c) => write!(f, "indication={c}"),
            Attribute::Value(q) => write!(f, "value{q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum CodeSpec {
    Code(CodeRef),
    Range { lo: CodeRef, hi: String },
}

impl fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeSpec::Code(c) => write!(f, "{c}"),
            CodeSpec::Range { lo, hi } => write!(f, "{lo}..{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleElement {
    pub kind: ElementKind,
    pub codes: Vec<CodeSpec>,
    pub attributes: Vec<Attribute>,
}

impl fmt::Display for RuleElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind.keyword())?;
        for (i, c) in self.codes.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{c}")?;
        }
        for a in &self.attributes {
            write!(f, ", {a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Required(RuleElement),
    AnyOf(Vec<RuleElement>),
    Not(RuleElement),
}

impl Term {
    pub fn elements(&self) -> impl Iterator<Item = &RuleElement> {
        match self {
            Term::Required(e) | Term::Not(e) => std::slice::from_ref(e).iter(),
            Term::AnyOf(es) => es.iter(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Required(e) => write!(f, "{e}"),
            Term::Not(e) => write!(f, "NOT {e}"),
            Term::AnyOf(es) => {
                f.write_str("ANY(")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" OR ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rule {
    pub id: String,
    pub action: Action,
    /// Conditions in the order they are written.
    pub terms: Vec<Term>,
    /// The prescription to stop or start.
    pub target: RuleElement,
    pub alert_text: String,
    pub comment: Option<String>,
}

impl Rule {
    pub fn required(&self) -> impl Iterator<Item = &RuleElement> {
        self.terms.iter().filter_map(|t| match t {
            Term::Required(e) => Some(e),
            _ => None,
        })
    }

    pub fn or_groups(&self) -> impl Iterator<Item = &[RuleElement]> {
        self.terms.iter().filter_map(|t| match t {
            Term::AnyOf(es) => Some(es.as_slice()),
            _ => None,
        })
    }

    pub fn negated(&self) -> impl Iterator<Item = &RuleElement> {
        self.terms.iter().filter_map(|t| match t {
            Term::Not(e) => Some(e),
            _ => None,
        })
    }

    pub fn automatizable(&self) -> bool {
        self.comment.is_none()
    }

    pub fn class(&self) -> AlertClass {
        match (self.action, self.automatizable()) {
            (Action::Start, _) => AlertClass::Start,
            (Action::Stop, true) => AlertClass::StoppAuto,
            (Action::Stop, false) => AlertClass::StoppSemiAuto,
        }
    }
}

fn quote(text: &str) -> String {
    format!("\"{}\"", text.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders the rule back into the DSL; parsing the output yields an equal rule.
impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RULE {}", self.id)?;
        writeln!(f, "ACTION {} {}", self.action.as_str(), self.target)?;
        f.write_str("WHEN ")?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{t}")?;
        }
        writeln!(f)?;
        writeln!(f, "TEXT {}", quote(&self.alert_text))?;
        if let Some(c) = &self.comment {
            writeln!(f, "COMMENT {}", quote(c))?;
        }
        Ok(())
    }
}
