mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use medreview_core::interactions::{
    build_graph, comparative_graphs, ranked_interaction_list, RankedDetail, StatusColor,
    CONTRAINDICATION_SEVERITY,
};
use medreview_core::patient::{import_patient, pre_mr, PatientRecord};

fn record(drugs: &[&str], conditions: &[&str]) -> PatientRecord {
    let doc = json!({
        "age": 81, "sex": "female", "source": "ehr",
        "drugs": drugs.iter().map(|d| json!({"drug_id": d, "posology": "1 morning"})).collect::<Vec<_>>(),
        "conditions": conditions.iter().map(|c| json!({"code": c})).collect::<Vec<_>>(),
    });
    import_patient(&doc.to_string(), common::knowledge())
        .unwrap()
        .record
}

fn ids() -> Vec<String> {
    common::knowledge()
        .drugs
        .entries()
        .map(|e| e.id.clone())
        .collect()
}

#[test]
fn angles_are_exact_for_one_to_twelve_nodes() {
    let k = common::knowledge();
    let all = ids();
    for n in 1..=12 {
        let picked: Vec<&str> = all[..n].iter().map(String::as_str).collect();
        let r = record(&picked, &[]);
        let g = build_graph(&pre_mr(&r), &r, k).unwrap();
        assert_eq!(g.nodes.len(), n);
        for (i, node) in g.nodes.iter().enumerate() {
            assert_eq!(node.angle, 2.0 * PI * i as f64 / n as f64, "n={n} k={i}");
        }
        let inns: Vec<String> = g.nodes.iter().map(|x| x.inn.to_lowercase()).collect();
        assert!(inns.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn pair_with_two_table_rows_gets_two_arcs() {
    let k = common::knowledge();
    let r = record(&["warfarin-5", "aspirin-75"], &[]);
    let g = build_graph(&pre_mr(&r), &r, k).unwrap();
    let idx: Vec<(usize, u8)> = g.arcs.iter().map(|a| (a.arc_index, a.severity)).collect();
    assert_eq!(idx, vec![(0, 4), (1, 2)]);
}

#[test]
fn arc_multiplicity_equals_table_rows_on_random_treatments() {
    let k = common::knowledge();
    let t = &k.terminology;
    let all = ids();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(0..=10);
        let picked: Vec<&str> = all
            .choose_multiple(&mut rng, n)
            .map(String::as_str)
            .collect();
        let r = record(&picked, &[]);
        let g = build_graph(&pre_mr(&r), &r, k).unwrap();
        let mut arcs: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for a in &g.arcs {
            arcs.entry((a.a.clone(), a.b.clone()))
                .or_default()
                .push(a.arc_index);
        }
        for x in &r.drugs {
            for y in &r.drugs {
                if x.id >= y.id {
                    continue;
                }
                let hits = |p: &medreview_core::CodeRef, q: &medreview_core::CodeRef| {
                    p.system == q.system && (t.subsumed_by(p, q) || t.subsumed_by(q, p))
                };
                let under = |d: &medreview_core::patient::DrugPrescription,
                             c: &medreview_core::CodeRef| {
                    d.atc_codes.iter().any(|a| hits(a, c))
                };
                let expected = k
                    .interactions
                    .entries()
                    .iter()
                    .filter(|e| {
                        (under(x, &e.a) && under(y, &e.b)) || (under(x, &e.b) && under(y, &e.a))
                    })
                    .count();
                let got = arcs
                    .get(&(x.id.clone(), y.id.clone()))
                    .or_else(|| arcs.get(&(y.id.clone(), x.id.clone())))
                    .cloned()
                    .unwrap_or_default();
                assert_eq!(got.len(), expected, "{} / {}", x.drug_id, y.drug_id);
                assert_eq!(got, (0..expected).collect::<Vec<_>>());
            }
        }
    }
}

#[test]
fn comparative_circles_share_positions_and_gray_absent_drugs() {
    let k = common::knowledge();
    let r = common::demo("demo_review.json");
    let (pre, post) = comparative_graphs(&r, k).unwrap();
    assert_eq!(pre.nodes.len(), 8);
    let geometry = |g: &medreview_core::interactions::InteractionGraphVM| {
        g.nodes
            .iter()
            .map(|n| (n.drug.clone(), n.angle))
            .collect::<Vec<_>>()
    };
    assert_eq!(geometry(&pre), geometry(&post));

    let grayed = |g: &medreview_core::interactions::InteractionGraphVM| {
        let mut v: Vec<String> = g
            .nodes
            .iter()
            .filter(|n| n.grayed)
            .map(|n| n.drug_id.clone())
            .collect();
        v.sort();
        v
    };
    assert_eq!(grayed(&pre), vec!["amlodipine-5"]);
    assert_eq!(grayed(&post), vec!["bisoprolol-5", "gliclazide-30"]);
    for g in [&pre, &post] {
        let gray: Vec<&str> = g
            .nodes
            .iter()
            .filter(|n| n.grayed)
            .map(|n| n.drug.as_str())
            .collect();
        assert!(g
            .arcs
            .iter()
            .all(|a| !gray.contains(&a.a.as_str()) && !gray.contains(&a.b.as_str())));
    }
    // Beta-blocker with both antidiabetics, and benzodiazepine with opioid; only
    // the last survives the review.
    assert_eq!(pre.arcs.len(), 3);
    assert_eq!(post.arcs.len(), 1);
    assert_eq!(post.arcs[0].severity, 3);
}

#[test]
fn node_colors_follow_drug_disease_entries() {
    let k = common::knowledge();
    let r = record(
        &["ibuprofen-200", "bisoprolol-5", "paracetamol-500"],
        &["icd10:I50", "icd10:E11"],
    );
    let g = build_graph(&pre_mr(&r), &r, k).unwrap();
    let status: BTreeMap<&str, StatusColor> = g
        .nodes
        .iter()
        .map(|n| (n.drug_id.as_str(), n.status))
        .collect();
    assert_eq!(status["ibuprofen-200"], StatusColor::Red);
    assert_eq!(status["bisoprolol-5"], StatusColor::Orange);
    assert_eq!(status["paracetamol-500"], StatusColor::Green);
    let red = g
        .nodes
        .iter()
        .find(|n| n.status == StatusColor::Red)
        .unwrap();
    assert_eq!(red.triggering, vec!["icd10:I50".parse().unwrap()]);
}

#[test]
fn ranked_list_orders_by_severity_then_name() {
    let k = common::knowledge();
    let r = record(
        &[
            "warfarin-5",
            "aspirin-75",
            "ibuprofen-200",
            "ramipril-5",
            "bisoprolol-5",
            "gliclazide-30",
        ],
        &["icd10:I50", "icd10:E11"],
    );
    let t = pre_mr(&r);
    let list = ranked_interaction_list(&t, &r, k, true).unwrap();
    assert!(list.windows(2).all(|w| w[0].severity > w[1].severity
        || (w[0].severity == w[1].severity && w[0].pair <= w[1].pair)));
    let disease: Vec<_> = list
        .iter()
        .filter(|x| matches!(x.detail, RankedDetail::DrugDisease { .. }))
        .collect();
    assert_eq!(disease.len(), 1, "only the contraindication is listed");
    assert_eq!(disease[0].severity, CONTRAINDICATION_SEVERITY);
    assert!(list[0].severity == 4);
    let pairs: Vec<&str> = list.iter().map(|x| x.pair.as_str()).collect();
    assert!(
        pairs.contains(&"acetylsalicylic acid + warfarin"),
        "{pairs:?}"
    );
    let trademarks = ranked_interaction_list(&t, &r, k, false).unwrap();
    assert_eq!(trademarks.len(), list.len());
    assert!(trademarks
        .iter()
        .any(|x| x.pair == "ASPIRIN 75 mg + WARFARIN 5 mg"));
}
