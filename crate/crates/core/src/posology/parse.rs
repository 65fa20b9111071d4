//! Recognizer for the simple free-text posology shapes:
//!
//! * `<n> [tablet(s)] <moment-list>`, e.g. `1 morning noon and evening`
//! * `<n> [tablet(s)] every <k> day(s)`, e.g. `1 tablet every two days`
//! * `<n> [tablet(s)] in case of <indication> max <m> per day`
//! * `<n> [tablet(s)] per day`
//!
//! Anything else is returned with `recognized = false`; nothing is guessed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Moment {
    Morning,
    Noon,
    Evening,
    Night,
}

impl Moment {
    pub fn as_str(self) -> &'static str {
        match self {
            Moment::Morning => "morning",
            Moment::Noon => "noon",
            Moment::Evening => "evening",
            Moment::Night => "night",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        match w {
            "morning" => Some(Moment::Morning),
            "noon" => Some(Moment::Noon),
            "evening" => Some(Moment::Evening),
            "night" => Some(Moment::Night),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosologyForm {
    Moments,
    Interval,
    AsNeeded,
    Daily,
    Unrecognized,
}

/// Structured posology. Quantities are in units of the pharmaceutical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPosology {
    pub raw: String,
    pub recognized: bool,
    pub form: PosologyForm,
    pub dose_per_intake: f64,
    pub moments: Vec<Moment>,
    pub interval_days: f64,
    pub prn: bool,
    pub prn_indication: Option<String>,
    pub max_per_day: Option<f64>,
}

/// Units of form per day: a point value or, for as-needed posologies, a range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitsPerDay {
    pub min: f64,
    pub max: f64,
}

impl ParsedPosology {
    fn unrecognized(raw: &str) -> Self {
        ParsedPosology {
            raw: raw.to_string(),
            recognized: false,
            form: PosologyForm::Unrecognized,
            dose_per_intake: 0.0,
            moments: Vec::new(),
            interval_days: 0.0,
            prn: false,
            prn_indication: None,
            max_per_day: None,
        }
    }

    fn recognized(raw: &str, form: PosologyForm, dose: f64) -> Self {
        ParsedPosology {
            raw: raw.to_string(),
            recognized: true,
            form,
            dose_per_intake: dose,
            moments: Vec::new(),
            interval_days: 1.0,
            prn: false,
            prn_indication: None,
            max_per_day: None,
        }
    }

    /// Mean units per day; `None` when the text was not recognized.
    pub fn units_per_day(&self) -> Option<UnitsPerDay> {
        let point = |v: f64| Some(UnitsPerDay { min: v, max: v });
        match self.form {
            PosologyForm::Unrecognized => None,
            PosologyForm::Moments => point(self.dose_per_intake * self.moments.len() as f64),
            PosologyForm::Interval => point(self.dose_per_intake / self.interval_days),
            PosologyForm::Daily => point(self.dose_per_intake),
            PosologyForm::AsNeeded => Some(UnitsPerDay {
                min: 0.0,
                max: self.max_per_day.unwrap_or(0.0),
            }),
        }
    }

    /// Canonical text that reparses to an equal value (modulo `raw`).
    pub fn canonical_text(&self) -> Option<String> {
        let n = fmt_number(self.dose_per_intake);
        let mut out = String::new();
        match self.form {
            PosologyForm::Unrecognized => return None,
            PosologyForm::Moments => {
                out.push_str(&n);
                for m in &self.moments {
                    out.push(' ');
                    out.push_str(m.as_str());
                }
            }
            PosologyForm::Interval => {
                let _ = write!(out, "{n} every {} days", fmt_number(self.interval_days));
            }
            PosologyForm::AsNeeded => {
                let _ = write!(
                    out,
                    "{n} in case of {} max {} per day",
                    self.prn_indication.as_deref().unwrap_or(""),
                    fmt_number(self.max_per_day.unwrap_or(0.0))
                );
            }
            PosologyForm::Daily => {
                let _ = write!(out, "{n} per day");
            }
        }
        Some(out)
    }

    /// Whether two values describe the same regimen (ignores the raw text).
    pub fn same_regimen(&self, other: &ParsedPosology) -> bool {
        let mut a = self.clone();
        a.raw.clear();
        let mut b = other.clone();
        b.raw.clear();
        a == b
    }
}

fn fmt_number(v: f64) -> String {
    format!("{v}")
}

fn normalize(text: &str) -> Vec<String> {
    let lower = text.trim().to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in chars.iter().enumerate() {
        let between_digits = i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit();
        match c {
            ',' if between_digits => cleaned.push('.'),
            ',' | ';' | '(' | ')' => cleaned.push(' '),
            '.' if !between_digits => cleaned.push(' '),
            _ => cleaned.push(c),
        }
    }
    cleaned.split_whitespace().map(String::from).collect()
}

fn parse_number(tok: &str) -> Option<f64> {
    let word = match tok {
        "one" => Some(1.0),
        "two" => Some(2.0),
        "three" => Some(3.0),
        "four" => Some(4.0),
        "five" => Some(5.0),
        "six" => Some(6.0),
        "seven" => Some(7.0),
        "eight" => Some(8.0),
        "nine" => Some(9.0),
        "ten" => Some(10.0),
        "half" => Some(0.5),
        _ => None,
    };
    if word.is_some() {
        return word;
    }
    if let Some((num, den)) = tok.split_once('/') {
        let num: f64 = num.parse().ok()?;
        let den: f64 = den.parse().ok()?;
        return (den > 0.0).then(|| num / den).filter(|v| v.is_finite());
    }
    if !tok.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn positive(tok: Option<&String>) -> Option<f64> {
    tok.and_then(|t| parse_number(t)).filter(|v| *v > 0.0)
}

/// Parses a posology text. Never fails: unrecognized text is a value.
pub fn parse_posology(text: &str) -> ParsedPosology {
    parse_tokens(text, &normalize(text)).unwrap_or_else(|| ParsedPosology::unrecognized(text))
}

fn parse_tokens(raw: &str, toks: &[String]) -> Option<ParsedPosology> {
    let dose = positive(toks.first())?;
    let mut i = 1;
    if matches!(toks.get(i).map(String::as_str), Some("tablet" | "tablets")) {
        i += 1;
    }
    let rest = &toks[i..];
    let first = rest.first()?.as_str();

    if Moment::from_word(first).is_some() {
        let mut moments = Vec::new();
        let mut expect_moment = true;
        for tok in rest {
            if tok == "and" && !expect_moment {
                expect_moment = true;
                continue;
            }
            let m = Moment::from_word(tok)?;
            if moments.contains(&m) {
                return None;
            }
            moments.push(m);
            expect_moment = false;
        }
        if expect_moment {
            return None;
        }
        moments.sort();
        let mut p = ParsedPosology::recognized(raw, PosologyForm::Moments, dose);
        p.moments = moments;
        return Some(p);
    }

    match rest {
        [every, day] if every == "every" && day == "day" => {
            let mut p = ParsedPosology::recognized(raw, PosologyForm::Interval, dose);
            p.interval_days = 1.0;
            Some(p)
        }
        [every, k, days] if every == "every" && (days == "days" || days == "day") => {
            let k = positive(Some(k))?;
            let mut p = ParsedPosology::recognized(raw, PosologyForm::Interval, dose);
            p.interval_days = k;
            Some(p)
        }
        [per, day] if per == "per" && day == "day" => {
            Some(ParsedPosology::recognized(raw, PosologyForm::Daily, dose))
        }
        [in_, case, of, tail @ ..] if in_ == "in" && case == "case" && of == "of" => {
            let max_at = tail.iter().position(|t| t == "max")?;
            if max_at == 0 {
                return None;
            }
            let indication = tail[..max_at].join(" ");
            let after = &tail[max_at + 1..];
            let (m, after) = after.split_first()?;
            let m = positive(Some(m))?;
            let after = match after.first().map(String::as_str) {
                Some("tablet" | "tablets") => &after[1..],
                _ => after,
            };
            if after != ["per", "day"] {
                return None;
            }
            let mut p = ParsedPosology::recognized(raw, PosologyForm::AsNeeded, dose);
            p.prn = true;
            p.prn_indication = Some(indication);
            p.max_per_day = Some(m);
            Some(p)
        }
        _ => None,
    }
}
