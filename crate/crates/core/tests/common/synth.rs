//! Random patient documents over the shipped fixtures.

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use medreview_core::Knowledge;

/// Posology text with the units per day it denotes: (min, max, recognized).
pub const POSOLOGIES: [(&str, f64, f64, bool); 10] = [
    ("1 morning", 1.0, 1.0, true),
    ("1 evening", 1.0, 1.0, true),
    ("1 morning and evening", 2.0, 2.0, true),
    ("2 morning noon and evening", 6.0, 6.0, true),
    ("1 morning noon and evening", 3.0, 3.0, true),
    ("1 tablet every two days", 0.5, 0.5, true),
    ("1 in case of pain max 3 per day", 0.0, 3.0, true),
    ("4 per day", 4.0, 4.0, true),
    ("2 tablets per day", 2.0, 2.0, true),
    ("as directed by the doctor", 0.0, 0.0, false),
];

pub const CONDITION_POOL: [&str; 24] = [
    "icd10:I10",
    "icd10:I48",
    "icd10:I50",
    "icd10:I20",
    "icd10:I21",
    "icd10:I25",
    "icd10:I20-I25",
    "icd10:I63",
    "icd10:E10",
    "icd10:E11",
    "icd10:E14",
    "icd10:E10-E14",
    "custom:HYPOGLY",
    "custom:FALLS",
    "icd10:M81",
    "icd10:N18",
    "icd10:K25",
    "icd10:K25-K28",
    "icd10:K72",
    "icd10:K70-K77",
    "icd10:R60",
    "icd10:F41",
    "icd10:M17",
    "icd10:J45",
];

pub const INDICATION_POOL: [&str; 6] = [
    "icd10:E11",
    "icd10:R60",
    "icd10:I10",
    "icd10:I50",
    "icd10:E10",
    "icd10:F41",
];

pub const DURATIONS: [f64; 7] = [7.0, 27.0, 28.0, 56.0, 57.0, 90.0, 365.0];

/// Lab code, plausible value range, units the generator may report.
pub const LABS: [(&str, f64, f64, &[&str]); 3] = [
    ("loinc:2164-2", 10.0, 90.0, &["mL/min", "ml/min", "umol/L"]),
    ("loinc:2951-2", 120.0, 145.0, &["mmol/L"]),
    ("loinc:2823-3", 2.8, 5.2, &["mmol/L", "mEq/L"]),
];

#[derive(Debug, Clone)]
pub struct SynthDrug {
    pub drug_id: String,
    pub posology: usize,
    pub duration: Option<f64>,
    pub indication: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SynthPatient {
    pub drugs: Vec<SynthDrug>,
    pub conditions: Vec<(String, bool)>,
    pub labs: Vec<(String, f64, String)>,
}

impl SynthPatient {
    pub fn units(&self, index: usize) -> (f64, f64, bool) {
        let (_, lo, hi, ok) = POSOLOGIES[self.drugs[index].posology];
        (lo, hi, ok)
    }

    pub fn document(&self, patient_id: &str) -> Value {
        let drugs: Vec<Value> = self
            .drugs
            .iter()
            .map(|d| {
                let mut v = json!({"drug_id": d.drug_id, "posology": POSOLOGIES[d.posology].0});
                if let Some(x) = d.duration {
                    v["duration_days"] = json!(x);
                }
                if let Some(i) = &d.indication {
                    v["indication"] = json!(i);
                }
                v
            })
            .collect();
        json!({
            "patient_id": patient_id,
            "age": 80,
            "sex": "female",
            "source": "ehr",
            "drugs": drugs,
            "conditions": self.conditions.iter().map(|(c, p)| json!({"code": c, "present": p})).collect::<Vec<_>>(),
            "labs": self.labs.iter().map(|(c, v, u)| json!({"code": c, "value": v, "unit": u})).collect::<Vec<_>>(),
        })
    }
}

pub fn random_patient(rng: &mut impl Rng, knowledge: &Knowledge) -> SynthPatient {
    let ids: Vec<&str> = knowledge.drugs.entries().map(|e| e.id.as_str()).collect();
    let n = rng.gen_range(0..=8);
    let drugs = ids
        .choose_multiple(rng, n)
        .map(|id| SynthDrug {
            drug_id: id.to_string(),
            posology: rng.gen_range(0..POSOLOGIES.len()),
            duration: rng.gen_bool(0.8).then(|| *DURATIONS.choose(rng).unwrap()),
            indication: rng
                .gen_bool(0.2)
                .then(|| INDICATION_POOL.choose(rng).unwrap().to_string()),
        })
        .collect();
    let k = rng.gen_range(0..=6);
    let conditions = CONDITION_POOL
        .choose_multiple(rng, k)
        .map(|c| (c.to_string(), rng.gen_bool(0.8)))
        .collect();
    let mut labs = Vec::new();
    for (code, lo, hi, units) in LABS {
        if !rng.gen_bool(0.5) {
            continue;
        }
        for _ in 0..rng.gen_range(1..=2) {
            let value = (rng.gen_range(lo..hi) * 10.0_f64).round() / 10.0;
            labs.push((
                code.to_string(),
                value,
                units.choose(rng).unwrap().to_string(),
            ));
        }
    }
    SynthPatient {
        drugs,
        conditions,
        labs,
    }
}
