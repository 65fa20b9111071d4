#![allow(dead_code)]

pub mod criteria;
pub mod oracle;
pub mod synth;

use std::path::PathBuf;
use std::sync::OnceLock;

use medreview_core::patient::{import_patient, PatientRecord};
use medreview_core::rules::{compile, parse_rules, Rule, RulePlan};
use medreview_core::Knowledge;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn knowledge() -> &'static Knowledge {
    static K: OnceLock<Knowledge> = OnceLock::new();
    K.get_or_init(|| Knowledge::load_dir(fixtures_dir()).expect("fixtures load"))
}

pub fn rules() -> Vec<Rule> {
    let text = std::fs::read_to_string(fixtures_dir().join("rules.txt")).unwrap();
    parse_rules(&text, &knowledge().terminology).expect("fixture rules parse")
}

pub fn plan_of(rules: &[Rule]) -> RulePlan {
    compile(rules, &knowledge().terminology).expect("fixture rules compile")
}

pub fn plan() -> RulePlan {
    plan_of(&rules())
}

pub fn demo(name: &str) -> PatientRecord {
    let text = std::fs::read_to_string(fixtures_dir().join(name)).unwrap();
    import_patient(&text, knowledge())
        .expect("demo imports")
        .record
}
