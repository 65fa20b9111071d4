//! Dictionary-based annotator for free-text reports: concept spotting,
//! `(concept, value)` measures, negation and family-history flags.
//!
//! Matching runs on a normalized copy of the text (lower-cased, diacritics
//! removed); every normalized character keeps the byte range of the original
//! character it came from, so spans always index the original text.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::code::{CodeRef, SystemId};
use crate::knowledge::Knowledge;
use crate::patient::{ItemInput, ItemOp, PatientRecord};

/// Words after a trigger that fall in its scope.
pub const SCOPE_TOKENS: usize = 5;

/// Words that close a trigger's scope.
pub const SCOPE_BREAKERS: [&str; 5] = ["but", "however", "although", "except", "yet"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Condition,
    Measure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LexiconEntry {
    pub surface: String,
    pub code: CodeRef,
    pub kind: ConceptKind,
    /// Accepted units for measures, as written in the lexicon. The first is reported.
    pub units: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    by_tokens: BTreeMap<Vec<String>, usize>,
    negation: BTreeMap<Vec<String>, String>,
    family: BTreeMap<Vec<String>, String>,
    longest: usize,
}

fn fold(text: &str) -> String {
    text.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

fn phrase_tokens(phrase: &str) -> Vec<String> {
    tokenize(&normalize(phrase))
        .into_iter()
        .filter(|t| t.kind != TokenKind::Boundary)
        .map(|t| t.text)
        .collect()
}

fn parse_triggers(text: &str) -> BTreeMap<Vec<String>, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| (phrase_tokens(l), l.to_string()))
        .filter(|(t, _)| !t.is_empty())
        .collect()
}

impl Lexicon {
    /// Lexicon lines: `surface<TAB>system:code<TAB>condition|measure[<TAB>unit;unit]`.
    /// Trigger files hold one phrase per line.
    pub fn parse(lexicon: &str, negation: &str, family: &str) -> Result<Self, LexiconError> {
        let mut out = Lexicon {
            negation: parse_triggers(negation),
            family: parse_triggers(family),
            ..Lexicon::default()
        };
        for (idx, raw) in lexicon.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| LexiconError::Parse { line, message };
            let fields: Vec<&str> = raw.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(err(format!(
                    "expected 3 or 4 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let code: CodeRef = fields[1].trim().parse().map_err(|e| err(format!("{e}")))?;
            let kind = match fields[2].trim() {
                "condition" => ConceptKind::Condition,
                "measure" => ConceptKind::Measure,
                other => return Err(err(format!("unknown kind `{other}`"))),
            };
            let units: Vec<String> = fields
                .get(3)
                .map(|u| {
                    u.split(';')
                        .map(str::trim)
                        .filter(|u| !u.is_empty())
                        .map(String::from)
                        .collect()
                })
                .unwrap_or_default();
            if kind == ConceptKind::Measure && units.is_empty() {
                return Err(err("a measure needs at least one unit".into()));
            }
            let tokens = phrase_tokens(fields[0]);
            if tokens.is_empty() {
                return Err(err("empty surface form".into()));
            }
            if out.by_tokens.contains_key(&tokens) {
                return Err(err(format!(
                    "duplicate surface form `{}`",
                    fields[0].trim()
                )));
            }
            out.longest = out.longest.max(tokens.len());
            out.by_tokens.insert(tokens, out.entries.len());
            out.entries.push(LexiconEntry {
                surface: fields[0].trim().to_string(),
                code,
                kind,
                units,
            });
        }
        Ok(out)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Normalized text with, per normalized char, the original byte range.
struct Normalized {
    chars: Vec<char>,
    origin: Vec<(usize, usize)>,
}

fn normalize(text: &str) -> Normalized {
    let mut chars = Vec::with_capacity(text.len());
    let mut origin = Vec::with_capacity(text.len());
    for (i, c) in text.char_indices() {
        let range = (i, i + c.len_utf8());
        for n in fold(c.encode_utf8(&mut [0; 4])).chars() {
            chars.push(n);
            origin.push(range);
        }
    }
    Normalized { chars, origin }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Word,
    Number,
    Boundary,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    text: String,
    /// Byte range in the original text.
    start: usize,
    end: usize,
    /// Index just past the token in the normalized char stream.
    norm_end: usize,
}

fn tokenize(n: &Normalized) -> Vec<Token> {
    let cs = &n.chars;
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_ascii_digit() {
            let start = i;
            while i < cs.len()
                && (cs[i].is_ascii_digit()
                    || ((cs[i] == '.' || cs[i] == ',')
                        && i + 1 < cs.len()
                        && cs[i + 1].is_ascii_digit()
                        && i > start))
            {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Number,
                text: cs[start..i].iter().collect(),
                start: n.origin[start].0,
                end: n.origin[i - 1].1,
                norm_end: i,
            });
        } else if c.is_alphanumeric() {
            let start = i;
            while i < cs.len() && cs[i].is_alphanumeric() && !cs[i].is_ascii_digit() {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Word,
                text: cs[start..i].iter().collect(),
                start: n.origin[start].0,
                end: n.origin[i - 1].1,
                norm_end: i,
            });
        } else {
            if matches!(c, '.' | ';' | '\n' | '!' | '?') {
                out.push(Token {
                    kind: TokenKind::Boundary,
                    text: c.to_string(),
                    start: n.origin[i].0,
                    end: n.origin[i].1,
                    norm_end: i + 1,
                });
            }
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureValue {
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotation {
    pub concept: CodeRef,
    pub kind: ConceptKind,
    /// Byte offsets into the original text.
    pub start: usize,
    pub end: usize,
    pub negated: bool,
    pub family_history: bool,
    pub value: Option<MeasureValue>,
}

fn match_at(
    tokens: &[Token],
    i: usize,
    longest: usize,
    lookup: impl Fn(&[String]) -> bool,
) -> Option<usize> {
    let mut key: Vec<String> = Vec::new();
    let mut best = None;
    for t in tokens.iter().skip(i).take(longest) {
        if t.kind == TokenKind::Boundary {
            break;
        }
        key.push(t.text.clone());
        if lookup(&key) {
            best = Some(key.len());
        }
    }
    best
}

/// Scope of each trigger: (trigger end token, last token index in scope).
fn trigger_scopes(
    tokens: &[Token],
    triggers: &BTreeMap<Vec<String>, String>,
) -> Vec<(usize, usize)> {
    let longest = triggers.keys().map(Vec::len).max().unwrap_or(0);
    let mut scopes = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match match_at(tokens, i, longest, |k| triggers.contains_key(k)) {
            Some(len) => {
                let from = i + len;
                let mut to = from;
                while to < tokens.len()
                    && to < from + SCOPE_TOKENS
                    && tokens[to].kind != TokenKind::Boundary
                    && !SCOPE_BREAKERS.contains(&tokens[to].text.as_str())
                {
                    to += 1;
                }
                scopes.push((from, to));
                i += len;
            }
            None => i += 1,
        }
    }
    scopes
}

fn parse_number(text: &str) -> Option<f64> {
    text.replace(',', ".").parse().ok()
}

/// Unit written right after a number: the next run of non-space characters
/// without trailing punctuation.
fn unit_after(n: &Normalized, from: usize, original: &str) -> Option<String> {
    let cs = &n.chars;
    let mut i = from;
    while i < cs.len() && cs[i] == ' ' {
        i += 1;
    }
    let start = i;
    while i < cs.len() && !cs[i].is_whitespace() {
        i += 1;
    }
    while i > start && matches!(cs[i - 1], '.' | ',' | ';' | ':' | ')' | '!' | '?') {
        i -= 1;
    }
    (i > start).then(|| original[n.origin[start].0..n.origin[i - 1].1].to_string())
}

/// Annotates `text`. Longest match wins; overlapping spots are not produced.
pub fn annotate(text: &str, lexicon: &Lexicon) -> Vec<Annotation> {
    let norm = normalize(text);
    let tokens = tokenize(&norm);
    let negations = trigger_scopes(&tokens, &lexicon.negation);
    let families = trigger_scopes(&tokens, &lexicon.family);
    let in_scope = |scopes: &[(usize, usize)], k: usize| {
        scopes.iter().any(|&(from, to)| (from..to).contains(&k))
    };

    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let Some(len) = match_at(&tokens, i, lexicon.longest, |k| {
            lexicon.by_tokens.contains_key(k)
        }) else {
            i += 1;
            continue;
        };
        let key: Vec<String> = tokens[i..i + len].iter().map(|t| t.text.clone()).collect();
        let entry = &lexicon.entries[lexicon.by_tokens[&key]];
        let last = i + len - 1;
        let value = if entry.kind == ConceptKind::Measure {
            tokens[last + 1..]
                .iter()
                .take_while(|t| t.kind != TokenKind::Boundary)
                .find(|t| t.kind == TokenKind::Number)
                .and_then(|num| {
                    let value = parse_number(&num.text)?;
                    let written = unit_after(&norm, num.norm_end, text)?;
                    entry.units.iter().find(|u| fold(u) == fold(&written))?;
                    Some(MeasureValue {
                        value,
                        unit: entry.units[0].clone(),
                    })
                })
        } else {
            None
        };
        out.push(Annotation {
            concept: entry.code.clone(),
            kind: entry.kind,
            start: tokens[i].start,
            end: tokens[last].end,
            negated: in_scope(&negations, i),
            family_history: in_scope(&families, i),
            value,
        });
        i += len;
    }
    out
}

/// Item operations that bring the annotations into the record. Items already
/// present are skipped, so ingesting the same annotations twice adds nothing.
/// Conditions coded outside ICD10/custom are transcoded to ICD10 first.
pub fn ingest_annotations(
    annotations: &[Annotation],
    text: &str,
    record: &PatientRecord,
    knowledge: &Knowledge,
) -> Vec<ItemOp> {
    let mut ops = Vec::new();
    let mut conditions: Vec<(CodeRef, bool)> = record
        .conditions
        .iter()
        .map(|c| (c.code.clone(), c.present))
        .collect();
    let mut family: Vec<CodeRef> = record.family_notes.iter().map(|f| f.code.clone()).collect();
    let mut labs: Vec<(CodeRef, f64, String)> = record
        .labs
        .iter()
        .map(|l| (l.code.clone(), l.value, l.unit.clone()))
        .collect();
    for a in annotations {
        match a.kind {
            ConceptKind::Condition => {
                let code = if matches!(a.concept.system, SystemId::Icd10 | SystemId::Custom) {
                    Some(a.concept.clone())
                } else {
                    knowledge
                        .terminology
                        .transcode(&a.concept, SystemId::Icd10)
                        .into_iter()
                        .next()
                };
                let Some(code) = code.filter(|c| knowledge.terminology.contains(c)) else {
                    continue;
                };
                if a.family_history {
                    if !family.contains(&code) {
                        family.push(code.clone());
                        ops.push(ItemOp::Add {
                            item: ItemInput::FamilyNote {
                                code,
                                text: text.get(a.start..a.end).unwrap_or_default().to_string(),
                            },
                        });
                    }
                    continue;
                }
                let present = !a.negated;
                if !conditions.contains(&(code.clone(), present)) {
                    conditions.push((code.clone(), present));
                    ops.push(ItemOp::Add {
                        item: ItemInput::Condition { code, present },
                    });
                }
            }
            ConceptKind::Measure => {
                let Some(v) = &a.value else { continue };
                if a.negated || a.family_history {
                    continue;
                }
                let key = (a.concept.clone(), v.value, v.unit.clone());
                if !labs.contains(&key) {
                    labs.push(key);
                    ops.push(ItemOp::Add {
                        item: ItemInput::Lab {
                            code: a.concept.clone(),
                            value: v.value,
                            unit: v.unit.clone(),
                            date: None,
                        },
                    });
                }
            }
        }
    }
    ops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> Lexicon {
        Lexicon::parse(
            "diastolic blood pressure\tloinc:8462-4\tmeasure\tmmHg\n\
             blood pressure\tloinc:8480-6\tmeasure\tmmHg\n\
             diabetes\ticd10:E10-E14\tcondition\n\
             fièvre\tcustom:FEVER\tcondition\n",
            "no\nwithout\n",
            "mother\n",
        )
        .unwrap()
    }

    #[test]
    fn measure_with_unit() {
        let a = annotate("diastolic blood pressure 95 mmHg", &lexicon());
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].concept, CodeRef::loinc("8462-4"));
        assert_eq!(
            a[0].value,
            Some(MeasureValue {
                value: 95.0,
                unit: "mmHg".into()
            })
        );
    }

    #[test]
    fn longest_match_wins() {
        let a = annotate("Diastolic Blood Pressure: 80 mmHg.", &lexicon());
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].concept, CodeRef::loinc("8462-4"));
    }

    #[test]
    fn wrong_unit_drops_value() {
        let a = annotate("blood pressure 12 cmHg", &lexicon());
        assert_eq!(a[0].value, None);
    }

    #[test]
    fn decimal_point_stays_in_number() {
        let a = annotate("blood pressure 95.5 mmHg", &lexicon());
        assert_eq!(a[0].value.as_ref().unwrap().value, 95.5);
    }

    #[test]
    fn diacritics_fold_and_spans_index_the_original() {
        let text = "Patiente avec FIÈVRE.";
        let a = annotate(text, &lexicon());
        assert_eq!(a.len(), 1);
        assert_eq!(&text[a[0].start..a[0].end], "FIÈVRE");
    }

    #[test]
    fn empty_text() {
        assert!(annotate("", &lexicon()).is_empty());
    }

    #[test]
    fn trigger_scope_stops_at_sentence_end() {
        let a = annotate("No cough. Diabetes.", &lexicon());
        assert!(!a[0].negated);
        let a = annotate("no history of diabetes", &lexicon());
        assert!(a[0].negated);
    }
}
