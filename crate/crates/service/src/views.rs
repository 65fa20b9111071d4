//! Per-tab view models of one record revision, as JSON.

use std::collections::BTreeMap;

use medreview_core::patient::{
    apply_preconizations, effective_preconizations, pre_mr, PatientRecord,
};
use medreview_core::questionnaire::{questionnaire_view, reduction_ratio};
use medreview_core::review::run_review;
use medreview_core::rules::RulePlan;
use medreview_core::Knowledge;
use serde::Serialize;
use serde_json::{json, Value};

use crate::tabs::Tab;

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or_else(|e| json!({ "error": e.to_string() }))
}

fn error(e: impl std::fmt::Display) -> Value {
    json!({ "error": e.to_string() })
}

/// All eight views, computed from the same record.
pub fn compute_views(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> BTreeMap<Tab, Value> {
    let mut views = BTreeMap::new();
    views.insert(
        Tab::PatientData,
        json!({
            "age": record.age,
            "sex": record.sex,
            "treatment": pre_mr(record),
            "conditions": record.conditions,
            "family_notes": record.family_notes,
            "labs": record.labs,
            "import_issues": record.import_issues,
        }),
    );
    views.insert(
        Tab::Interview,
        json!({
            "items": questionnaire_view(plan, record, knowledge),
            "reduction_ratio": reduction_ratio(plan, record, knowledge),
        }),
    );
    match run_review(plan, record, knowledge, false) {
        Ok(report) => {
            views.insert(Tab::Posologies, to_value(&report.posology));
            views.insert(
                Tab::AdverseEffects,
                json!({ "pre": report.glyph_pre, "post": report.glyph_post }),
            );
            views.insert(
                Tab::Interactions,
                json!({ "pre": report.interactions_pre, "post": report.interactions_post }),
            );
            // The revision lives on the snapshot; keeping it here would make the
            // view differ after changes the tab does not read.
            let mut alerts = to_value(&report.alerts);
            if let Some(map) = alerts.as_object_mut() {
                map.remove("revision");
            }
            views.insert(Tab::StoppStart, alerts);
        }
        Err(e) => {
            for tab in [
                Tab::Posologies,
                Tab::AdverseEffects,
                Tab::Interactions,
                Tab::StoppStart,
            ] {
                views.insert(tab, error(&e));
            }
        }
    }
    let effective: Vec<&str> = effective_preconizations(record)
        .map(|ps| ps.iter().map(|p| p.id.as_str()).collect())
        .unwrap_or_default();
    views.insert(
        Tab::Preconizations,
        json!({
            "log": record.preconizations,
            "in_force": effective,
            "notes": record.review_notes,
            "problems": record.problems,
            "lifestyle": record.lifestyle,
            "post_treatment": apply_preconizations(record).map(to_value).unwrap_or_else(error),
            "frozen": record.review_frozen,
        }),
    );
    views.insert(Tab::Chat, json!({ "messages": record.chat }));
    views
}
