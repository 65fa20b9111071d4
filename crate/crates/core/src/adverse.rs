//! Adverse-effect aggregation: 13-category flower-glyph profiles, bar-chart
//! series and per-drug breakdowns, for one treatment or a pre/post pair.
//!
//! Frequencies are level-coded; each level contributes a representative value
//! (the upper bound of its range, 0.5 for "very frequent"). Sums are a burden
//! indicator, not probabilities, and are never capped.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories::CATEGORY_COUNT;
use crate::code::CodeRef;
use crate::knowledge::Knowledge;
use crate::patient::{ItemId, PatientRecord, ProblemCategory, TreatmentView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyLevel {
    VeryRare,
    Rare,
    Uncommon,
    Frequent,
    VeryFrequent,
}

impl FrequencyLevel {
    pub const ALL: [FrequencyLevel; 5] = [
        FrequencyLevel::VeryRare,
        FrequencyLevel::Rare,
        FrequencyLevel::Uncommon,
        FrequencyLevel::Frequent,
        FrequencyLevel::VeryFrequent,
    ];

    /// Representative fraction used for summation.
    pub fn numeric(self) -> f64 {
        match self {
            FrequencyLevel::VeryRare => 0.0001,
            FrequencyLevel::Rare => 0.001,
            FrequencyLevel::Uncommon => 0.01,
            FrequencyLevel::Frequent => 0.10,
            FrequencyLevel::VeryFrequent => 0.50,
        }
    }

    /// Nominal range as fractions; the last level is open-ended.
    pub fn range(self) -> (f64, Option<f64>) {
        match self {
            FrequencyLevel::VeryRare => (0.00001, Some(0.0001)),
            FrequencyLevel::Rare => (0.0001, Some(0.001)),
            FrequencyLevel::Uncommon => (0.001, Some(0.01)),
            FrequencyLevel::Frequent => (0.01, Some(0.10)),
            FrequencyLevel::VeryFrequent => (0.10, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdverseError {
    #[error("drug `{0}` is not in the drug database")]
    UnknownDrug(String),
}

/// One adverse effect of one drug, with derived flags and category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdverseEffect {
    pub pt: CodeRef,
    pub frequency: FrequencyLevel,
    pub serious: bool,
    pub elderly_important: bool,
    pub category: u8,
}

/// Flower-glyph data: slot `i` holds category `i + 1`; slot 12 is the central
/// unclassified region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlyphData {
    pub label: String,
    pub values: [f64; CATEGORY_COUNT],
    pub serious_values: [f64; CATEGORY_COUNT],
}

impl GlyphData {
    pub fn empty(label: impl Into<String>) -> Self {
        GlyphData {
            label: label.into(),
            values: [0.0; CATEGORY_COUNT],
            serious_values: [0.0; CATEGORY_COUNT],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BarSeriesKind {
    SuspectedInPatient,
    TopFrequent,
    TopSerious,
    Elderly13,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarRow {
    pub pt: CodeRef,
    pub label: String,
    pub category: u8,
    pub pre: f64,
    /// Post-review value, in comparative mode only.
    pub post: Option<f64>,
    pub serious: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarSeries {
    pub kind: BarSeriesKind,
    pub rows: Vec<BarRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectContribution {
    pub drug: ItemId,
    pub drug_id: String,
    pub frequency: FrequencyLevel,
    pub value: f64,
}

pub const TOP_N: usize = 5;

/// Effects of one database drug with flags and categories resolved.
pub fn drug_effects(
    drug_id: &str,
    knowledge: &Knowledge,
) -> Result<Vec<AdverseEffect>, AdverseError> {
    let entry = knowledge
        .drugs
        .get(drug_id)
        .ok_or_else(|| AdverseError::UnknownDrug(drug_id.to_string()))?;
    Ok(entry
        .adverse_effects
        .iter()
        .map(|e| AdverseEffect {
            pt: e.pt.clone(),
            frequency: e.level,
            serious: knowledge.is_serious(&e.pt),
            elderly_important: knowledge.is_elderly_important(&e.pt),
            category: knowledge.category_of(&e.pt),
        })
        .collect())
}

/// Sums effect frequencies per category over the active drugs of `treatment`.
pub fn treatment_profile(
    treatment: &TreatmentView,
    knowledge: &Knowledge,
) -> Result<GlyphData, AdverseError> {
    let mut glyph = GlyphData::empty(treatment.phase.as_str());
    for entry in treatment.active() {
        for effect in drug_effects(&entry.drug.drug_id, knowledge)? {
            let slot = usize::from(effect.category) - 1;
            let v = effect.frequency.numeric();
            glyph.values[slot] += v;
            if effect.serious {
                glyph.serious_values[slot] += v;
            }
        }
    }
    Ok(glyph)
}

/// Profile of a single drug (the small per-drug glyphs).
pub fn drug_profile(drug_id: &str, knowledge: &Knowledge) -> Result<GlyphData, AdverseError> {
    let mut glyph = GlyphData::empty(drug_id);
    for effect in drug_effects(drug_id, knowledge)? {
        let slot = usize::from(effect.category) - 1;
        glyph.values[slot] += effect.frequency.numeric();
        if effect.serious {
            glyph.serious_values[slot] += effect.frequency.numeric();
        }
    }
    Ok(glyph)
}

fn per_pt(
    treatment: &TreatmentView,
    knowledge: &Knowledge,
) -> Result<BTreeMap<CodeRef, f64>, AdverseError> {
    let mut out = BTreeMap::new();
    for entry in treatment.active() {
        for effect in drug_effects(&entry.drug.drug_id, knowledge)? {
            *out.entry(effect.pt).or_insert(0.0) += effect.frequency.numeric();
        }
    }
    Ok(out)
}

fn desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

fn sort_rows(rows: &mut [BarRow]) {
    rows.sort_by(|a, b| {
        desc(a.pre, b.pre)
            .then_with(|| desc(a.post.unwrap_or(0.0), b.post.unwrap_or(0.0)))
            .then_with(|| a.pt.cmp(&b.pt))
    });
}

/// The four bar-chart series. With `post`, each row carries both phase values.
pub fn effect_bars(
    record: &PatientRecord,
    pre: &TreatmentView,
    post: Option<&TreatmentView>,
    knowledge: &Knowledge,
) -> Result<Vec<BarSeries>, AdverseError> {
    let pre_map = per_pt(pre, knowledge)?;
    let post_map = post.map(|p| per_pt(p, knowledge)).transpose()?;
    let row = |pt: &CodeRef| BarRow {
        pt: pt.clone(),
        label: knowledge
            .terminology
            .label(pt)
            .unwrap_or(&pt.code)
            .to_string(),
        category: knowledge.category_of(pt),
        pre: pre_map.get(pt).copied().unwrap_or(0.0),
        post: post_map.as_ref().map(|m| m.get(pt).copied().unwrap_or(0.0)),
        serious: knowledge.is_serious(pt),
    };

    let mut suspected: Vec<CodeRef> = record
        .problems
        .iter()
        .filter(|p| p.category == ProblemCategory::SuspectedAdverseEvent)
        .filter_map(|p| p.effect.clone())
        .collect();
    suspected.sort();
    suspected.dedup();
    let mut suspected_rows: Vec<BarRow> = suspected.iter().map(row).collect();
    sort_rows(&mut suspected_rows);

    let mut all_pts: Vec<&CodeRef> = pre_map.keys().collect();
    if let Some(m) = &post_map {
        all_pts.extend(m.keys());
    }
    all_pts.sort();
    all_pts.dedup();
    let top = |serious_only: bool| {
        let mut candidates: Vec<BarRow> = all_pts
            .iter()
            .map(|pt| row(pt))
            .filter(|r| !serious_only || r.serious)
            .filter(|r| r.pre.max(r.post.unwrap_or(0.0)) > 0.0)
            .collect();
        let score = |r: &BarRow| r.pre.max(r.post.unwrap_or(0.0));
        candidates.sort_by(|a, b| desc(score(a), score(b)).then_with(|| a.pt.cmp(&b.pt)));
        if candidates.len() > TOP_N {
            let threshold = score(&candidates[TOP_N - 1]);
            candidates.retain(|r| score(r) >= threshold);
        }
        sort_rows(&mut candidates);
        candidates
    };

    let mut elderly_rows: Vec<BarRow> = knowledge.elderly.iter().map(row).collect();
    elderly_rows.sort_by(|a, b| {
        desc(a.pre, b.pre).then_with(|| desc(a.post.unwrap_or(0.0), b.post.unwrap_or(0.0)))
    });

    Ok(vec![
        BarSeries {
            kind: BarSeriesKind::SuspectedInPatient,
            rows: suspected_rows,
        },
        BarSeries {
            kind: BarSeriesKind::TopFrequent,
            rows: top(false),
        },
        BarSeries {
            kind: BarSeriesKind::TopSerious,
            rows: top(true),
        },
        BarSeries {
            kind: BarSeriesKind::Elderly13,
            rows: elderly_rows,
        },
    ])
}

/// Per-drug contributions to one effect's aggregate.
pub fn effect_breakdown(
    pt: &CodeRef,
    treatment: &TreatmentView,
    knowledge: &Knowledge,
) -> Result<Vec<EffectContribution>, AdverseError> {
    let mut out = Vec::new();
    for entry in treatment.active() {
        for effect in drug_effects(&entry.drug.drug_id, knowledge)? {
            if &effect.pt == pt {
                out.push(EffectContribution {
                    drug: entry.drug.id.clone(),
                    drug_id: entry.drug.drug_id.clone(),
                    frequency: effect.frequency,
                    value: effect.frequency.numeric(),
                });
            }
        }
    }
    Ok(out)
}
