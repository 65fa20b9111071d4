//! Drug-disease statuses, drug-drug interaction arcs and the radial graph view
//! model, single-phase or as a pre/post pair of circles.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::code::{CodeRef, SystemId};
use crate::knowledge::Knowledge;
use crate::patient::{
    apply_preconizations, pre_mr, DrugPrescription, ItemId, PatientRecord, Phase,
    PreconizationError, TreatmentView,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InteractionError {
    #[error("interaction table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("drug `{0}` is not in the drug database")]
    UnknownDrug(String),
    #[error(transparent)]
    Preconization(#[from] PreconizationError),
}

/// One row of the interaction table: any drug under `a` with any drug under `b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionEntry {
    pub a: CodeRef,
    pub b: CodeRef,
    /// 1 (least) to 4 (most severe).
    pub severity: u8,
    pub recommendation: String,
    pub mechanism: String,
    pub url: String,
}

#[derive(Debug, Clone, Default)]
pub struct InteractionTable {
    entries: Vec<InteractionEntry>,
}

impl InteractionTable {
    /// Format: `atc:a<TAB>atc:b<TAB>severity<TAB>recommendation<TAB>mechanism<TAB>url`.
    pub fn parse(text: &str) -> Result<Self, InteractionError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| InteractionError::Parse { line, message };
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 6 {
                return Err(err(format!(
                    "expected 6 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let code = |s: &str| -> Result<CodeRef, InteractionError> {
                let c: CodeRef = s.trim().parse().map_err(|e| err(format!("{e}")))?;
                if c.system != SystemId::Atc {
                    return Err(err(format!("{c} is not an ATC code")));
                }
                Ok(c)
            };
            let a = code(fields[0])?;
            let b = code(fields[1])?;
            let severity: u8 = fields[2]
                .trim()
                .parse()
                .ok()
                .filter(|s| (1..=4).contains(s))
                .ok_or_else(|| {
                    err(format!(
                        "severity must be 1..4, found `{}`",
                        fields[2].trim()
                    ))
                })?;
            entries.push(InteractionEntry {
                a,
                b,
                severity,
                recommendation: fields[3].trim().to_string(),
                mechanism: fields[4].trim().to_string(),
                url: fields[5].trim().to_string(),
            });
        }
        Ok(InteractionTable { entries })
    }

    pub fn entries(&self) -> &[InteractionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Table rows applying to the unordered drug pair, in table order.
    pub fn between<'a>(
        &'a self,
        x: &'a DrugPrescription,
        y: &'a DrugPrescription,
        knowledge: &'a Knowledge,
    ) -> impl Iterator<Item = &'a InteractionEntry> + 'a {
        let under = move |d: &DrugPrescription, class: &CodeRef| {
            d.atc_codes
                .iter()
                .any(|c| knowledge.terminology.subsumed_by(c, class))
        };
        self.entries.iter().filter(move |e| {
            (under(x, &e.a) && under(y, &e.b)) || (under(x, &e.b) && under(y, &e.a))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusColor {
    Green,
    Orange,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrugDiseaseStatus {
    pub drug: ItemId,
    pub status: StatusColor,
    /// Patient condition codes that matched a contraindication (red) or, when
    /// there is none, a caution.
    pub triggering: Vec<CodeRef>,
}

pub fn node_status(
    drug: &DrugPrescription,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Result<DrugDiseaseStatus, InteractionError> {
    let entry = knowledge
        .drugs
        .get(&drug.drug_id)
        .ok_or_else(|| InteractionError::UnknownDrug(drug.drug_id.clone()))?;
    let matching = |list: &[CodeRef]| -> Vec<CodeRef> {
        let mut out: Vec<CodeRef> = record
            .present_conditions()
            .filter(|c| {
                list.iter()
                    .any(|x| knowledge.terminology.subsumed_by(&c.code, x))
            })
            .map(|c| c.code.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    };
    let contra = matching(&entry.contraindications);
    let (status, triggering) = if !contra.is_empty() {
        (StatusColor::Red, contra)
    } else {
        let cautions = matching(&entry.cautions);
        if cautions.is_empty() {
            (StatusColor::Green, cautions)
        } else {
            (StatusColor::Orange, cautions)
        }
    };
    Ok(DrugDiseaseStatus {
        drug: drug.id.clone(),
        status,
        triggering,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphNode {
    pub drug: ItemId,
    pub drug_id: String,
    pub trademark: String,
    pub inn: String,
    /// Radians, node `k` of `n` sits at `2πk/n`.
    pub angle: f64,
    pub status: StatusColor,
    pub triggering: Vec<CodeRef>,
    pub grayed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphArc {
    pub a: ItemId,
    pub b: ItemId,
    pub severity: u8,
    /// Distinguishes several interactions between the same pair (0-based).
    pub arc_index: usize,
    pub recommendation: String,
    pub mechanism: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionGraphVM {
    pub phase: Phase,
    pub nodes: Vec<GraphNode>,
    pub arcs: Vec<GraphArc>,
}

pub fn node_angle(k: usize, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

/// Geometry order: INN, then database id, then item id. The trademark/INN
/// display toggle never changes positions.
fn geometry_key(d: &DrugPrescription) -> (String, &str, &str) {
    (d.inn.to_lowercase(), d.drug_id.as_str(), d.id.as_str())
}

fn layout(
    phase: Phase,
    drugs: &[&DrugPrescription],
    active: impl Fn(&str) -> bool,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Result<InteractionGraphVM, InteractionError> {
    let mut ordered: Vec<&DrugPrescription> = drugs.to_vec();
    ordered.sort_by(|x, y| geometry_key(x).cmp(&geometry_key(y)));
    let n = ordered.len();
    let mut nodes = Vec::with_capacity(n);
    for (k, d) in ordered.iter().enumerate() {
        let status = node_status(d, record, knowledge)?;
        nodes.push(GraphNode {
            drug: d.id.clone(),
            drug_id: d.drug_id.clone(),
            trademark: d.trademark.clone(),
            inn: d.inn.clone(),
            angle: node_angle(k, n),
            status: status.status,
            triggering: status.triggering,
            grayed: !active(&d.id),
        });
    }
    let mut arcs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (ordered[i], ordered[j]);
            if !active(&x.id) || !active(&y.id) {
                continue;
            }
            for (arc_index, e) in knowledge.interactions.between(x, y, knowledge).enumerate() {
                arcs.push(GraphArc {
                    a: x.id.clone(),
                    b: y.id.clone(),
                    severity: e.severity,
                    arc_index,
                    recommendation: e.recommendation.clone(),
                    mechanism: e.mechanism.clone(),
                    url: e.url.clone(),
                });
            }
        }
    }
    Ok(InteractionGraphVM { phase, nodes, arcs })
}

/// Radial graph of the active drugs of one treatment.
pub fn build_graph(
    treatment: &TreatmentView,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Result<InteractionGraphVM, InteractionError> {
    let drugs: Vec<&DrugPrescription> = treatment.active().map(|e| &e.drug).collect();
    layout(treatment.phase, &drugs, |_| true, record, knowledge)
}

/// Pre and post circles over the union of both drug sets. A drug absent from a
/// phase is grayed there and has no arcs; positions are shared.
pub fn comparative_graphs(
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Result<(InteractionGraphVM, InteractionGraphVM), InteractionError> {
    let pre = pre_mr(record);
    let post = apply_preconizations(record)?;
    comparative_from_views(&pre, &post, record, knowledge)
}

pub fn comparative_from_views(
    pre: &TreatmentView,
    post: &TreatmentView,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Result<(InteractionGraphVM, InteractionGraphVM), InteractionError> {
    let mut union: BTreeMap<&str, &DrugPrescription> = BTreeMap::new();
    for e in pre.entries.iter().chain(&post.entries) {
        union.entry(e.drug.id.as_str()).or_insert(&e.drug);
    }
    let drugs: Vec<&DrugPrescription> = union.into_values().collect();
    let pre_vm = layout(pre.phase, &drugs, |id| pre.is_active(id), record, knowledge)?;
    let post_vm = layout(
        post.phase,
        &drugs,
        |id| post.is_active(id),
        record,
        knowledge,
    )?;
    Ok((pre_vm, post_vm))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankedDetail {
    DrugDrug {
        a: ItemId,
        b: ItemId,
        recommendation: String,
        mechanism: String,
        url: String,
    },
    DrugDisease {
        drug: ItemId,
        conditions: Vec<CodeRef>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedInteraction {
    pub severity: u8,
    pub pair: String,
    #[serde(flatten)]
    pub detail: RankedDetail,
}

/// Severity applied to contraindicated drug-disease pairs in the ranked list.
pub const CONTRAINDICATION_SEVERITY: u8 = 4;

/// Interactions by decreasing severity, ties by pair name. Red drug-disease
/// statuses rank with the most severe interactions; orange ones are not listed.
pub fn ranked_interaction_list(
    treatment: &TreatmentView,
    record: &PatientRecord,
    knowledge: &Knowledge,
    use_inn: bool,
) -> Result<Vec<RankedInteraction>, InteractionError> {
    let graph = build_graph(treatment, record, knowledge)?;
    let by_id: BTreeMap<&str, &DrugPrescription> = treatment
        .active()
        .map(|e| (e.drug.id.as_str(), &e.drug))
        .collect();
    let name = |id: &str| by_id[id].display_name(use_inn).to_string();
    let mut out = Vec::new();
    for arc in &graph.arcs {
        let mut names = [name(&arc.a), name(&arc.b)];
        names.sort();
        out.push(RankedInteraction {
            severity: arc.severity,
            pair: format!("{} + {}", names[0], names[1]),
            detail: RankedDetail::DrugDrug {
                a: arc.a.clone(),
                b: arc.b.clone(),
                recommendation: arc.recommendation.clone(),
                mechanism: arc.mechanism.clone(),
                url: arc.url.clone(),
            },
        });
    }
    for node in graph.nodes.iter().filter(|n| n.status == StatusColor::Red) {
        let labels: Vec<&str> = node
            .triggering
            .iter()
            .map(|c| knowledge.terminology.label(c).unwrap_or(&c.code))
            .collect();
        out.push(RankedInteraction {
            severity: CONTRAINDICATION_SEVERITY,
            pair: format!("{} + {}", name(&node.drug), labels.join(", ")),
            detail: RankedDetail::DrugDisease {
                drug: node.drug.clone(),
                conditions: node.triggering.clone(),
            },
        });
    }
    out.sort_by(|x, y| {
        y.severity
            .cmp(&x.severity)
            .then_with(|| x.pair.cmp(&y.pair))
            .then_with(|| detail_key(&x.detail).cmp(&detail_key(&y.detail)))
    });
    Ok(out)
}

fn detail_key(d: &RankedDetail) -> (u8, &str, &str) {
    match d {
        RankedDetail::DrugDrug {
            recommendation,
            mechanism,
            ..
        } => (0, recommendation, mechanism),
        RankedDetail::DrugDisease { drug, .. } => (1, drug, ""),
    }
}

/// Colors for severities 1..4 and the three node statuses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Palette {
    pub color_blind: bool,
    pub severity: [&'static str; 4],
    pub green: &'static str,
    pub orange: &'static str,
    pub red: &'static str,
    pub grayed: &'static str,
}

pub fn palette(color_blind: bool) -> Palette {
    if color_blind {
        Palette {
            color_blind,
            severity: ["#d9d9d9", "#a6a6a6", "#666666", "#1a1a1a"],
            green: "#f2f2f2",
            orange: "#8c8c8c",
            red: "#262626",
            grayed: "#e6e6e6",
        }
    } else {
        Palette {
            color_blind,
            severity: ["#f2d600", "#ff9f1a", "#eb5a46", "#8b0000"],
            green: "#61bd4f",
            orange: "#ff9f1a",
            red: "#eb5a46",
            grayed: "#c4c4c4",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_follow_the_circle() {
        assert_eq!(node_angle(0, 1), 0.0);
        assert_eq!(node_angle(1, 4), PI / 2.0);
        assert_eq!(node_angle(2, 4), PI);
        assert_eq!(node_angle(3, 4), 3.0 * PI / 2.0);
    }

    #[test]
    fn table_rejects_bad_rows() {
        assert!(InteractionTable::parse("atc:A\tatc:B\t5\tr\tm\tu").is_err());
        assert!(InteractionTable::parse("icd10:A\tatc:B\t2\tr\tm\tu").is_err());
        assert!(InteractionTable::parse("atc:A\tatc:B\t2\tr\tm").is_err());
        let t = InteractionTable::parse("# c\n\natc:A\tatc:B\t2\tr\tm\thttp://x\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.entries()[0].severity, 2);
    }

    #[test]
    fn palettes_differ_only_in_colors() {
        let a = palette(false);
        let b = palette(true);
        assert_ne!(a.severity, b.severity);
        assert!(b.color_blind);
    }

    #[test]
    fn status_order_is_total() {
        assert!(StatusColor::Green < StatusColor::Orange);
        assert!(StatusColor::Orange < StatusColor::Red);
    }
}
