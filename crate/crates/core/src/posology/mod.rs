//! Posologies: free-text recognition, per-active-principle day doses, official
//! posology filtering and dose/timing flags.

mod dose;
mod official;
mod parse;

pub use dose::{day_doses, drug_day_dose, ActivePrincipleDose, DayDose, DoseRange, DrugDose};
pub use official::{
    check_flags, filter_official, FilteredPosology, OfficialPosology, PosologyFlag,
    PosologyFlagKind, CREATININE_CLEARANCE_LOINC, HEPATIC_FAILURE_ICD10,
};
pub use parse::{parse_posology, Moment, ParsedPosology, PosologyForm, UnitsPerDay};
