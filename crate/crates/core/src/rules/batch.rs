//! Many patients against one plan. With the `parallel` feature the patients are
//! spread over the rayon pool; results keep input order either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::eval::{evaluate, EvalContext, Evaluation, RulePlan};
use crate::knowledge::Knowledge;
use crate::patient::{PatientRecord, TreatmentView};

pub fn evaluate_batch_sequential(
    plan: &RulePlan,
    cases: &[(PatientRecord, TreatmentView)],
    knowledge: &Knowledge,
) -> Vec<Evaluation> {
    cases
        .iter()
        .map(|(record, treatment)| evaluate(plan, &EvalContext::new(record, treatment, knowledge)))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn evaluate_batch(
    plan: &RulePlan,
    cases: &[(PatientRecord, TreatmentView)],
    knowledge: &Knowledge,
) -> Vec<Evaluation> {
    cases
        .par_iter()
        .map(|(record, treatment)| evaluate(plan, &EvalContext::new(record, treatment, knowledge)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn evaluate_batch(
    plan: &RulePlan,
    cases: &[(PatientRecord, TreatmentView)],
    knowledge: &Knowledge,
) -> Vec<Evaluation> {
    evaluate_batch_sequential(plan, cases, knowledge)
}
