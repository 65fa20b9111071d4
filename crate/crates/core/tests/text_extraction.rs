mod common;

use std::collections::BTreeMap;

use medreview_core::patient::{mutate, Change, ItemOp, Provenance};
use medreview_core::textextract::{annotate, ingest_annotations, Annotation, ConceptKind};
use medreview_core::CodeRef;

fn code(s: &str) -> CodeRef {
    s.parse().unwrap()
}

fn measures(text: &str) -> Vec<(String, f64, String)> {
    annotate(text, &common::knowledge().lexicon)
        .into_iter()
        .filter_map(|a| a.value.map(|v| (a.concept.to_string(), v.value, v.unit)))
        .collect()
}

#[test]
fn diastolic_pressure_95_mmhg() {
    let text = "diastolic blood pressure 95 mmHg";
    let found = annotate(text, &common::knowledge().lexicon);
    assert_eq!(found.len(), 1);
    let a = &found[0];
    assert_eq!(a.concept, code("loinc:8462-4"));
    assert_eq!(a.kind, ConceptKind::Measure);
    assert_eq!(&text[a.start..a.end], "diastolic blood pressure");
    let v = a.value.as_ref().unwrap();
    assert_eq!((v.value, v.unit.as_str()), (95.0, "mmHg"));
    assert!(!a.negated && !a.family_history);
}

#[test]
fn other_measure_shapes() {
    assert_eq!(
        measures("Creatinine clearance: 42 mL/min."),
        vec![("loinc:2164-2".into(), 42.0, "mL/min".into())]
    );
    assert_eq!(
        measures("creatinine 105 µmol/L"),
        vec![("loinc:2160-0".into(), 105.0, "umol/L".into())]
    );
    assert_eq!(
        measures("Potassium 3,4 mmol/L today"),
        vec![("loinc:2823-3".into(), 3.4, "mmol/L".into())]
    );
    assert_eq!(
        measures("HbA1c 7.2%"),
        vec![("loinc:4548-4".into(), 7.2, "%".into())]
    );
    assert_eq!(
        measures("Systolic blood pressure was 150 mmHg, diastolic blood pressure 85 mmHg."),
        vec![
            ("loinc:8480-6".into(), 150.0, "mmHg".into()),
            ("loinc:8462-4".into(), 85.0, "mmHg".into()),
        ]
    );
    // Wrong unit or a value in another sentence is not attached.
    assert!(measures("diastolic blood pressure 95 kg").is_empty());
    assert!(measures("Diastolic blood pressure. 95 mmHg").is_empty());
}

struct Case {
    concept: CodeRef,
    negated: bool,
    family: bool,
}

fn load_cases() -> BTreeMap<String, Vec<Case>> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/data/negation_cases.tsv"
    ))
    .unwrap();
    let mut out: BTreeMap<String, Vec<Case>> = BTreeMap::new();
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
    {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 4, "{line}");
        out.entry(f[0].to_string()).or_default().push(Case {
            concept: code(f[1]),
            negated: f[2] == "1",
            family: f[3] == "1",
        });
    }
    out
}

#[test]
fn negation_and_family_history_agree_with_hand_labels() {
    let lexicon = &common::knowledge().lexicon;
    let cases = load_cases();
    assert!(cases.len() >= 20);
    let (mut labels, mut agree) = (0, 0);
    for (sentence, expected) in &cases {
        let found: Vec<Annotation> = annotate(sentence, lexicon)
            .into_iter()
            .filter(|a| a.kind == ConceptKind::Condition)
            .collect();
        assert_eq!(found.len(), expected.len(), "{sentence}: {found:?}");
        for case in expected {
            labels += 1;
            let hit = found.iter().find(|a| a.concept == case.concept);
            match hit {
                Some(a) if a.negated == case.negated && a.family_history == case.family => {
                    agree += 1
                }
                other => eprintln!(
                    "{sentence}: expected {} neg={} fam={}, got {other:?}",
                    case.concept, case.negated, case.family
                ),
            }
        }
    }
    println!("{} sentences, {labels} labels, {agree} agree", cases.len());
    assert_eq!(agree, labels);
}

#[test]
fn spans_point_into_the_original_text() {
    let lexicon = &common::knowledge().lexicon;
    for sentence in load_cases().keys() {
        for a in annotate(sentence, lexicon) {
            let span = &sentence[a.start..a.end];
            assert!(
                !span.is_empty() && !span.starts_with(' ') && !span.ends_with(' '),
                "{sentence}: {span:?}"
            );
        }
    }
}

#[test]
fn report_text_feeds_the_record() {
    let k = common::knowledge();
    let record = common::demo("demo_import.json");
    let doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(common::fixtures_dir().join("demo_import.json")).unwrap(),
    )
    .unwrap();
    let text = doc["texts"][0].as_str().unwrap();
    let ops = ingest_annotations(&annotate(text, &k.lexicon), text, &record, k);
    let updated = mutate(
        &record,
        &Change::new("import", Provenance::TextReport, ops.clone()),
        k,
    )
    .unwrap();
    let present: Vec<String> = updated
        .present_conditions()
        .map(|c| c.code.to_string())
        .collect();
    assert!(present.contains(&"icd10:E11".to_string()), "{present:?}");
    assert!(present.contains(&"custom:HYPOGLY".to_string()));
    assert!(updated
        .conditions
        .iter()
        .any(|c| !c.present && c.code == code("icd10:I50")));
    assert!(updated
        .labs
        .iter()
        .any(|l| l.code == code("loinc:8462-4") && l.value == 95.0 && l.unit == "mmHg"));
    assert!(updated
        .family_notes
        .iter()
        .any(|f| f.code == code("icd10:M81")));
    assert!(!present.contains(&"icd10:M81".to_string()));
    // Ingesting the same text again adds nothing.
    assert!(ingest_annotations(&annotate(text, &k.lexicon), text, &updated, k).is_empty());
    assert!(ops.iter().all(|op| matches!(op, ItemOp::Add { .. })));
}
