//! Medication-review engine: terminologies, the patient model, STOPP/START
//! rules, the adaptive questionnaire, posology checks, adverse-effect and
//! interaction view models, and report text extraction.

pub mod adverse;
pub mod categories;
pub mod code;
pub mod drugdb;
pub mod interactions;
pub mod knowledge;
pub mod logic;
pub mod patient;
pub mod posology;
pub mod questionnaire;
pub mod review;
pub mod rules;
pub mod terminology;
pub mod textextract;

pub use code::{CodeRef, SystemId};
pub use knowledge::{FixturePaths, Knowledge, KnowledgeError};
pub use logic::Truth;
pub use patient::PatientRecord;
pub use terminology::Terminology;
