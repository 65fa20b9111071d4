//! One check per acceptance criterion. Each returns a one-line summary on
//! success and the first violation otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use medreview_core::adverse::{effect_bars, treatment_profile, BarSeriesKind, TOP_N};
use medreview_core::drugdb::DrugDatabase;
use medreview_core::interactions::{build_graph, comparative_graphs};
use medreview_core::patient::{
    import_patient, pre_mr, DrugPrescription, PatientRecord, Phase, Provenance, Sex, TreatmentView,
};
use medreview_core::posology::day_doses;
use medreview_core::questionnaire::{
    answer, reduction_ratio, visible_concepts, visible_items, AnswerValue,
};
use medreview_core::rules::{evaluate, EvalContext, RulePlan};
use medreview_core::textextract::{annotate, ConceptKind};
use medreview_core::{CodeRef, Knowledge};

use super::oracle::{visible, Case};
use super::synth::random_patient;

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn import(doc: serde_json::Value) -> PatientRecord {
    import_patient(&doc.to_string(), super::knowledge())
        .unwrap()
        .record
}

pub fn rule_oracle(patients: usize) -> Outcome {
    let k = super::knowledge();
    let rules = super::rules();
    ensure!(rules.len() >= 12, "only {} rules", rules.len());
    let plan = super::plan_of(&rules);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let started = Instant::now();
    let mut mismatches = 0;
    let mut seen = BTreeSet::new();
    for n in 0..patients {
        let synth = random_patient(&mut rng, k);
        let record = import_patient(&synth.document(&format!("s{n}")).to_string(), k)
            .unwrap()
            .record;
        let treatment = pre_mr(&record);
        let got = evaluate(&plan, &EvalContext::new(&record, &treatment, k));
        let case = Case {
            k,
            synth: &synth,
            record: &record,
            states: None,
        };
        let (want, unknown) = case.run(&rules);
        let got_alerts: BTreeSet<_> = got
            .alerts
            .iter()
            .map(|a| (a.rule.clone(), a.drug.clone()))
            .collect();
        let got_unknown: BTreeSet<_> = got.notes.iter().map(|n| n.rule.clone()).collect();
        if got_alerts != want || got_unknown != unknown {
            mismatches += 1;
        }
        seen.extend(want.into_iter().map(|(r, _)| r));
    }
    let elapsed = started.elapsed();
    ensure!(
        mismatches == 0,
        "{mismatches} mismatches over {patients} patients"
    );
    ensure!(elapsed.as_secs() < 60, "took {elapsed:?}");
    Ok(format!(
        "{patients} patients x {} rules, 0 mismatches, {} rules fired, {:.1?}",
        rules.len(),
        seen.len(),
        elapsed
    ))
}

pub fn j3_narrative() -> Outcome {
    let k = super::knowledge();
    let rules: Vec<_> = super::rules()
        .into_iter()
        .filter(|r| r.id == "STOPP-J3")
        .collect();
    let plan = super::plan_of(&rules);
    let patient = |drugs: &[&str]| {
        import(json!({
            "age": 78, "sex": "male", "source": "ehr",
            "drugs": drugs.iter().map(|d| json!({"drug_id": d, "posology": "1 morning"})).collect::<Vec<_>>(),
        }))
    };
    let shown = |r: &PatientRecord| -> Vec<String> {
        visible_items(&plan, r, k)
            .into_iter()
            .map(|i| i.concept.to_string())
            .collect()
    };
    let fired = |r: &PatientRecord| -> Vec<String> {
        let t = pre_mr(r);
        evaluate(&plan, &EvalContext::new(r, &t, k))
            .alerts
            .into_iter()
            .map(|a| a.rule)
            .collect()
    };
    let code = |s: &str| s.parse::<CodeRef>().unwrap();
    let say =
        |stage: &str, r: &PatientRecord, items: &[&str], alerts: &[&str]| -> Result<(), String> {
            let (got_items, got_alerts) = (shown(r), fired(r));
            if got_items != items || got_alerts != alerts {
                return Err(format!(
                    "{stage}: items {got_items:?}, alerts {got_alerts:?}"
                ));
            }
            Ok(())
        };
    say("no beta-blocker", &patient(&["paracetamol-500"]), &[], &[])?;
    let r = patient(&["bisoprolol-5"]);
    say("beta-blocker", &r, &["icd10:E10-E14"], &[])?;
    let r = answer(
        &plan,
        &r,
        k,
        &code("icd10:E10-E14"),
        AnswerValue::Checked,
        None,
        "ph",
        Provenance::ManualPharmacist,
    )
    .map_err(|e| e.to_string())?;
    say("diabetes checked", &r, &["custom:HYPOGLY"], &[])?;
    let r = answer(
        &plan,
        &r,
        k,
        &code("custom:HYPOGLY"),
        AnswerValue::Checked,
        None,
        "ph",
        Provenance::ManualPharmacist,
    )
    .map_err(|e| e.to_string())?;
    say("both checked", &r, &[], &["STOPP-J3"])?;
    Ok("0 items / diabetes / hypoglycaemia / alert, exact".into())
}

pub fn questionnaire_relevance(states: usize) -> Outcome {
    let k = super::knowledge();
    let rules = super::rules();
    let plan: RulePlan = super::plan_of(&rules);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut ratio = 0.0;
    for n in 0..states {
        let synth = random_patient(&mut rng, k);
        let record = import_patient(&synth.document(&format!("q{n}")).to_string(), k)
            .unwrap()
            .record;
        if visible_concepts(&plan, &record, k) != visible(k, &rules, &synth, &record) {
            mismatches += 1;
        }
        ratio += reduction_ratio(&plan, &record, k);
    }
    ensure!(
        mismatches == 0,
        "{mismatches} mismatches over {states} states"
    );
    Ok(format!(
        "{states} states, 0 mismatches; mean reduction ratio {:.3} over {} concepts",
        ratio / states as f64,
        plan.concepts().len()
    ))
}

pub fn posology_patterns() -> Outcome {
    let k = super::knowledge();
    let total = |drug: &str, text: &str, principle: &str| {
        let r = import(
            json!({ "age": 80, "sex": "female", "source": "ehr", "drugs": [{ "drug_id": drug, "posology": text }] }),
        );
        let t = day_doses(&pre_mr(&r), &k.drugs)
            .into_iter()
            .find(|d| d.principle == principle)
            .unwrap()
            .total;
        (t.min_mg, t.max_mg)
    };
    let cases = [
        (
            "paracetamol-500",
            "1 morning noon and evening",
            "paracetamol",
            (1500.0, 1500.0),
        ),
        (
            "metoprolol-100",
            "1 tablet every two days",
            "metoprolol",
            (50.0, 50.0),
        ),
        (
            "codeine-paracetamol",
            "1 in case of pain max 6 per day",
            "paracetamol",
            (0.0, 6000.0),
        ),
    ];
    for (drug, text, principle, want) in cases {
        let got = total(drug, text, principle);
        ensure!(
            got == want,
            "`{text}` on {drug}: {got:?}, expected {want:?}"
        );
    }
    Ok("1500 mg, 50 mg, [0, 6000] mg exact".into())
}

fn prescription(k: &Knowledge, n: usize, drug_id: &str) -> DrugPrescription {
    let db = k.drugs.get(drug_id).unwrap();
    DrugPrescription {
        id: format!("d{n}"),
        drug_id: drug_id.to_string(),
        atc_codes: db.atc.clone(),
        trademark: db.trademark.clone(),
        inn: db.inn.clone(),
        posology_text: "1 morning".into(),
        indication: None,
        indication_manual: false,
        missing_indication: false,
        duration_days: None,
        source: Provenance::Ehr,
    }
}

fn view(k: &Knowledge, ids: &[&str]) -> TreatmentView {
    TreatmentView::from_drugs(
        Phase::PreMr,
        ids.iter()
            .enumerate()
            .map(|(i, d)| prescription(k, i + 1, d)),
    )
}

pub fn adverse_aggregation() -> Outcome {
    let k = super::knowledge();
    let ids: Vec<String> = k.drugs.entries().map(|e| e.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for round in 0..500 {
        let n = rng.gen_range(0..=ids.len());
        let picked: Vec<&str> = ids
            .choose_multiple(&mut rng, n)
            .map(String::as_str)
            .collect();
        let (a, b) = picked.split_at(rng.gen_range(0..=picked.len()));
        let whole = treatment_profile(&view(k, &picked), k).map_err(|e| e.to_string())?;
        let pa = treatment_profile(&view(k, a), k).map_err(|e| e.to_string())?;
        let pb = treatment_profile(&view(k, b), k).map_err(|e| e.to_string())?;
        for i in 0..13 {
            ensure!(
                (whole.values[i] - pa.values[i] - pb.values[i]).abs() < 1e-9,
                "round {round}: not additive"
            );
            ensure!(
                (whole.serious_values[i] - pa.serious_values[i] - pb.serious_values[i]).abs()
                    < 1e-9,
                "round {round}: serious part not additive"
            );
            ensure!(
                0.0 <= whole.serious_values[i] && whole.serious_values[i] <= whole.values[i],
                "round {round}: serious bound broken in category {}",
                i + 1
            );
        }
    }
    for id in &ids {
        let single = treatment_profile(&view(k, &[id.as_str()]), k).map_err(|e| e.to_string())?;
        let own = medreview_core::adverse::drug_profile(id, k).map_err(|e| e.to_string())?;
        ensure!(
            single.values == own.values && single.serious_values == own.serious_values,
            "{id}: single-drug treatment differs from its profile"
        );
    }
    let pts = [
        "10006093", "10021097", "10013573", "10028813", "10012735", "10010774", "10019211",
    ];
    let effects: Vec<String> = pts
        .iter()
        .enumerate()
        .map(|(i, pt)| {
            let level = if i == 0 { "very_frequent" } else { "frequent" };
            format!(r#"{{"pt": "meddra:{pt}", "level": "{level}"}}"#)
        })
        .collect();
    let db = format!(
        r#"{{"drugs": [{{"id": "tie", "trademark": "TIE", "inn": "tie", "atc": ["atc:C07AB07"],
            "principles": [{{"id": "tie", "strength_mg": 1}}], "adverse_effects": [{}]}}]}}"#,
        effects.join(",")
    );
    let mut tie = k.clone();
    tie.drugs = DrugDatabase::parse(&db).map_err(|e| e.to_string())?;
    let bars = effect_bars(
        &PatientRecord::new("t", 80, Sex::Female),
        &view(&tie, &["tie"]),
        None,
        &tie,
    )
    .map_err(|e| e.to_string())?;
    let rows = bars
        .iter()
        .find(|s| s.kind == BarSeriesKind::TopFrequent)
        .map(|s| s.rows.len())
        .unwrap_or(0);
    ensure!(rows > TOP_N, "tie fixture shows {rows} rows");
    Ok(format!(
        "500 random treatments additive and bounded; identity exact for {} drugs; tie fixture {rows} rows",
        ids.len()
    ))
}

pub fn interaction_vm() -> Outcome {
    let k = super::knowledge();
    let ids: Vec<String> = k.drugs.entries().map(|e| e.id.clone()).collect();
    let record = |drugs: &[&str]| {
        import(json!({
            "age": 81, "sex": "female", "source": "ehr",
            "drugs": drugs.iter().map(|d| json!({"drug_id": d, "posology": "1 morning"})).collect::<Vec<_>>(),
        }))
    };
    for n in 1..=12 {
        let picked: Vec<&str> = ids[..n].iter().map(String::as_str).collect();
        let r = record(&picked);
        let g = build_graph(&pre_mr(&r), &r, k).map_err(|e| e.to_string())?;
        for (i, node) in g.nodes.iter().enumerate() {
            ensure!(
                node.angle == 2.0 * PI * i as f64 / n as f64,
                "n={n}: node {i} at {}",
                node.angle
            );
        }
    }
    let demo = super::demo("demo_review.json");
    let (pre, post) = comparative_graphs(&demo, k).map_err(|e| e.to_string())?;
    let geometry = |g: &medreview_core::interactions::InteractionGraphVM| {
        g.nodes
            .iter()
            .map(|n| (n.drug.clone(), n.angle))
            .collect::<Vec<_>>()
    };
    ensure!(
        geometry(&pre) == geometry(&post),
        "pre and post positions differ"
    );
    for g in [&pre, &post] {
        let gray: BTreeSet<&str> = g
            .nodes
            .iter()
            .filter(|n| n.grayed)
            .map(|n| n.drug.as_str())
            .collect();
        ensure!(!gray.is_empty(), "no grayed node in a comparative circle");
        ensure!(
            g.arcs
                .iter()
                .all(|a| !gray.contains(a.a.as_str()) && !gray.contains(a.b.as_str())),
            "a grayed node has an arc"
        );
    }
    let t = &k.terminology;
    let related = |p: &CodeRef, q: &CodeRef| {
        p.system == q.system && (t.subsumed_by(p, q) || t.subsumed_by(q, p))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pairs = 0;
    for _ in 0..200 {
        let n = rng.gen_range(0..=10);
        let picked: Vec<&str> = ids
            .choose_multiple(&mut rng, n)
            .map(String::as_str)
            .collect();
        let r = record(&picked);
        let g = build_graph(&pre_mr(&r), &r, k).map_err(|e| e.to_string())?;
        let mut arcs: BTreeMap<(String, String), usize> = BTreeMap::new();
        for a in &g.arcs {
            let key = if a.a < a.b {
                (a.a.clone(), a.b.clone())
            } else {
                (a.b.clone(), a.a.clone())
            };
            *arcs.entry(key).or_default() += 1;
        }
        for x in &r.drugs {
            for y in r.drugs.iter().filter(|y| x.id < y.id) {
                let under =
                    |d: &DrugPrescription, c: &CodeRef| d.atc_codes.iter().any(|a| related(a, c));
                let rows = k
                    .interactions
                    .entries()
                    .iter()
                    .filter(|e| {
                        (under(x, &e.a) && under(y, &e.b)) || (under(x, &e.b) && under(y, &e.a))
                    })
                    .count();
                let got = arcs
                    .get(&(x.id.clone(), y.id.clone()))
                    .copied()
                    .unwrap_or(0);
                ensure!(
                    got == rows,
                    "{} + {}: {got} arcs, {rows} table rows",
                    x.drug_id,
                    y.drug_id
                );
                pairs += 1;
            }
        }
    }
    Ok(format!("angles exact for n=1..12; comparative positions shared, grayed nodes arc-free; {pairs} pairs arc count = table rows"))
}

pub fn text_extraction() -> Outcome {
    let lexicon = &super::knowledge().lexicon;
    let text = "diastolic blood pressure 95 mmHg";
    let got: Vec<_> = annotate(text, lexicon)
        .into_iter()
        .filter_map(|a| a.value.map(|v| (a.concept.to_string(), v.value, v.unit)))
        .collect();
    ensure!(
        got == vec![("loinc:8462-4".to_string(), 95.0, "mmHg".to_string())],
        "`{text}` gave {got:?}"
    );

    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/data/negation_cases.tsv");
    let cases = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut by_sentence: BTreeMap<&str, Vec<(&str, bool, bool)>> = BTreeMap::new();
    for line in cases
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
    {
        let f: Vec<&str> = line.split('\t').collect();
        by_sentence
            .entry(f[0])
            .or_default()
            .push((f[1], f[2] == "1", f[3] == "1"));
    }
    let (mut labels, mut agree) = (0, 0);
    for (sentence, expected) in &by_sentence {
        let found: Vec<_> = annotate(sentence, lexicon)
            .into_iter()
            .filter(|a| a.kind == ConceptKind::Condition)
            .collect();
        labels += expected.len();
        if found.len() != expected.len() {
            continue;
        }
        agree += expected
            .iter()
            .filter(|(c, neg, fam)| {
                found.iter().any(|a| {
                    a.concept.to_string() == *c && a.negated == *neg && a.family_history == *fam
                })
            })
            .count();
    }
    ensure!(
        by_sentence.len() >= 20,
        "only {} sentences",
        by_sentence.len()
    );
    ensure!(agree == labels, "{agree}/{labels} labels agree");
    Ok(format!(
        "(8462-4, 95, mmHg) exact; {} sentences, {labels}/{labels} labels agree",
        by_sentence.len()
    ))
}
