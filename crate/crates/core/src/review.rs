//! View models for the review screens and the one-shot review report.

use serde::Serialize;
use thiserror::Error;

use crate::adverse::{
    drug_profile, effect_bars, treatment_profile, AdverseError, BarSeries, GlyphData,
};
use crate::interactions::{
    build_graph, comparative_from_views, palette, ranked_interaction_list, InteractionError,
    InteractionGraphVM, Palette, RankedInteraction,
};
use crate::knowledge::Knowledge;
use crate::patient::{
    apply_preconizations, effective_preconizations, pre_mr, ImportIssue, ItemId, PatientRecord,
    Preconization, PreconizationError, ReviewNote, TreatmentView,
};
use crate::posology::{
    check_flags, day_doses, filter_official, ActivePrincipleDose, FilteredPosology, ParsedPosology,
    PosologyFlag,
};
use crate::rules::{
    evaluate, evaluate_comparative, Alert, AlertDiff, DataQualityNote, EvalContext, Evaluation,
    RulePlan,
};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error(transparent)]
    Preconization(#[from] PreconizationError),
    #[error(transparent)]
    Adverse(#[from] AdverseError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosologyRow {
    pub drug: ItemId,
    pub name: String,
    pub posology: ParsedPosology,
    pub canonical_text: Option<String>,
    pub official: Vec<FilteredPosology>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosologyView {
    pub rows: Vec<PosologyRow>,
    pub day_doses: Vec<ActivePrincipleDose>,
    pub flags: Vec<PosologyFlag>,
}

pub fn posology_view(
    treatment: &TreatmentView,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> PosologyView {
    let rows = treatment
        .active()
        .map(|e| PosologyRow {
            drug: e.drug.id.clone(),
            name: e.drug.trademark.clone(),
            posology: e.posology.clone(),
            canonical_text: e.posology.canonical_text(),
            official: knowledge
                .drugs
                .get(&e.drug.drug_id)
                .map(|db| filter_official(e, &db.official_posologies, record, treatment, knowledge))
                .unwrap_or_default(),
        })
        .collect();
    PosologyView {
        rows,
        day_doses: day_doses(treatment, &knowledge.drugs),
        flags: check_flags(treatment, record, knowledge),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrugGlyph {
    pub drug: ItemId,
    pub glyph: GlyphData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdverseView {
    pub glyph: GlyphData,
    pub per_drug: Vec<DrugGlyph>,
    pub bars: Vec<BarSeries>,
}

/// Glyph of `shown`; bars compare `pre` with `post` when given.
pub fn adverse_view(
    record: &PatientRecord,
    shown: &TreatmentView,
    pre: &TreatmentView,
    post: Option<&TreatmentView>,
    knowledge: &Knowledge,
) -> Result<AdverseView, AdverseError> {
    let per_drug = shown
        .active()
        .map(|e| {
            drug_profile(&e.drug.drug_id, knowledge).map(|glyph| DrugGlyph {
                drug: e.drug.id.clone(),
                glyph,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(AdverseView {
        glyph: treatment_profile(shown, knowledge)?,
        per_drug,
        bars: effect_bars(record, pre, post, knowledge)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionView {
    pub graph: InteractionGraphVM,
    pub ranked: Vec<RankedInteraction>,
    pub palette: Palette,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlertsReport {
    pub patient_id: String,
    pub revision: u64,
    pub pre: Evaluation,
    pub comparative: Option<AlertDiff>,
}

/// Everything a review produces. `*_post` are present only when the record has
/// preconizations in force.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewReport {
    pub alerts: AlertsReport,
    pub glyph_pre: AdverseView,
    pub glyph_post: Option<AdverseView>,
    pub interactions_pre: InteractionView,
    pub interactions_post: Option<InteractionView>,
    pub posology: PosologyReport,
    pub import_issues: Vec<ImportIssue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosologyReport {
    pub pre: PosologyView,
    pub post: Option<PosologyView>,
}

impl ReviewReport {
    pub fn notes(&self) -> Vec<&DataQualityNote> {
        let mut out: Vec<&DataQualityNote> = self.alerts.pre.notes.iter().collect();
        if let Some(c) = &self.alerts.comparative {
            out.extend(&c.notes);
        }
        out.sort();
        out.dedup();
        out
    }

    /// True when some rule could not be decided or import dropped items.
    pub fn has_quality_issues(&self) -> bool {
        !self.notes().is_empty() || !self.import_issues.is_empty()
    }
}

fn interaction_view(
    graph: InteractionGraphVM,
    treatment: &TreatmentView,
    record: &PatientRecord,
    knowledge: &Knowledge,
    color_blind: bool,
) -> Result<InteractionView, InteractionError> {
    Ok(InteractionView {
        graph,
        ranked: ranked_interaction_list(treatment, record, knowledge, false)?,
        palette: palette(color_blind),
    })
}

pub fn run_review(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
    color_blind: bool,
) -> Result<ReviewReport, ReviewError> {
    let pre = pre_mr(record);
    let comparative = !effective_preconizations(record)?.is_empty();
    let pre_eval = evaluate(plan, &EvalContext::new(record, &pre, knowledge));
    let posology_pre = posology_view(&pre, record, knowledge);

    if !comparative {
        let graph = build_graph(&pre, record, knowledge)?;
        return Ok(ReviewReport {
            alerts: AlertsReport {
                patient_id: record.patient_id.clone(),
                revision: record.revision,
                pre: pre_eval,
                comparative: None,
            },
            glyph_pre: adverse_view(record, &pre, &pre, None, knowledge)?,
            glyph_post: None,
            interactions_pre: interaction_view(graph, &pre, record, knowledge, color_blind)?,
            interactions_post: None,
            posology: PosologyReport {
                pre: posology_pre,
                post: None,
            },
            import_issues: record.import_issues.clone(),
        });
    }

    let post = apply_preconizations(record)?;
    let (pre_graph, post_graph) = comparative_from_views(&pre, &post, record, knowledge)?;
    Ok(ReviewReport {
        alerts: AlertsReport {
            patient_id: record.patient_id.clone(),
            revision: record.revision,
            pre: pre_eval,
            comparative: Some(evaluate_comparative(plan, record, knowledge)?),
        },
        glyph_pre: adverse_view(record, &pre, &pre, Some(&post), knowledge)?,
        glyph_post: Some(adverse_view(record, &post, &pre, Some(&post), knowledge)?),
        interactions_pre: interaction_view(pre_graph, &pre, record, knowledge, color_blind)?,
        interactions_post: Some(interaction_view(
            post_graph,
            &post,
            record,
            knowledge,
            color_blind,
        )?),
        posology: PosologyReport {
            pre: posology_pre,
            post: Some(posology_view(&post, record, knowledge)),
        },
        import_issues: record.import_issues.clone(),
    })
}

/// The document sent to the GP when a review is validated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewDocument {
    pub patient_id: String,
    pub revision: u64,
    pub validated_by: String,
    pub preconizations: Vec<Preconization>,
    pub notes: Vec<ReviewNote>,
    pub pre_alerts: Vec<Alert>,
    pub post_alerts: Vec<Alert>,
}

pub fn review_document(
    plan: &RulePlan,
    record: &PatientRecord,
    knowledge: &Knowledge,
    validated_by: &str,
) -> Result<ReviewDocument, ReviewError> {
    let pre = pre_mr(record);
    let post = apply_preconizations(record)?;
    Ok(ReviewDocument {
        patient_id: record.patient_id.clone(),
        revision: record.revision,
        validated_by: validated_by.to_string(),
        preconizations: effective_preconizations(record)?
            .into_iter()
            .cloned()
            .collect(),
        notes: record.review_notes.clone(),
        pre_alerts: evaluate(plan, &EvalContext::new(record, &pre, knowledge)).alerts,
        post_alerts: evaluate(plan, &EvalContext::new(record, &post, knowledge)).alerts,
    })
}
