use std::collections::BTreeSet;

use thiserror::Error;

use super::{
    Action, Attribute, CodeSpec, Comparator, ElementKind, Quantity, Rule, RuleElement, Term,
};
use crate::code::{CodeRef, SystemId};
use crate::terminology::Terminology;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("line {line}{}: {message}", rule.as_ref().map(|r| format!(" (rule {r})")).unwrap_or_default())]
    Syntax {
        line: usize,
        rule: Option<String>,
        message: String,
    },
    #[error("line {line}: duplicate rule id `{rule}`")]
    DuplicateId { line: usize, rule: String },
    #[error("rule {rule}: {message}")]
    Invalid { rule: String, message: String },
}

struct Block {
    id: String,
    line: usize,
    action: Option<(Action, RuleElement)>,
    when: Option<(usize, String)>,
    text: Option<String>,
    comment: Option<String>,
    last_was_when: bool,
}

/// Parses and checks a rule document against the terminology.
pub fn parse_rules(text: &str, terminology: &Terminology) -> Result<Vec<Rule>, RuleError> {
    let rules = parse_rules_unchecked(text)?;
    for rule in &rules {
        check_rule(rule, terminology)?;
    }
    Ok(rules)
}

/// Syntax-only parse: codes are not resolved.
pub fn parse_rules_unchecked(text: &str) -> Result<Vec<Rule>, RuleError> {
    let mut rules: Vec<Rule> = Vec::new();
    let mut ids: BTreeSet<String> = BTreeSet::new();
    let mut current: Option<Block> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (keyword, rest) = match trimmed.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (trimmed, ""),
        };
        let syntax = |rule: Option<&Block>, message: String| RuleError::Syntax {
            line,
            rule: rule.map(|b| b.id.clone()),
            message,
        };
        if keyword == "RULE" {
            if let Some(block) = current.take() {
                rules.push(finish(block)?);
            }
            if rest.is_empty() || rest.contains(char::is_whitespace) {
                return Err(syntax(None, "RULE needs a single identifier".into()));
            }
            if !ids.insert(rest.to_string()) {
                return Err(RuleError::DuplicateId {
                    line,
                    rule: rest.to_string(),
                });
            }
            current = Some(Block {
                id: rest.to_string(),
                line,
                action: None,
                when: None,
                text: None,
                comment: None,
                last_was_when: false,
            });
            continue;
        }
        let Some(block) = current.as_mut() else {
            return Err(syntax(None, format!("expected RULE, found `{keyword}`")));
        };
        let was_when = std::mem::replace(&mut block.last_was_when, false);
        match keyword {
            "ACTION" => {
                if block.action.is_some() {
                    return Err(syntax(Some(block), "ACTION given twice".into()));
                }
                let (verb, target) = rest.split_once(char::is_whitespace).ok_or_else(|| {
                    syntax(Some(block), "ACTION needs stop|start and a target".into())
                })?;
                let action = match verb {
                    "stop" => Action::Stop,
                    "start" => Action::Start,
                    other => return Err(syntax(Some(block), format!("unknown action `{other}`"))),
                };
                let target = parse_target(target.trim()).map_err(|m| syntax(Some(block), m))?;
                block.action = Some((action, target));
            }
            "WHEN" => {
                if block.when.is_some() {
                    return Err(syntax(Some(block), "WHEN given twice".into()));
                }
                block.when = Some((line, rest.to_string()));
                block.last_was_when = true;
            }
            "AND" if was_when => {
                if let Some((_, w)) = block.when.as_mut() {
                    w.push_str(" AND ");
                    w.push_str(rest);
                }
                block.last_was_when = true;
            }
            "TEXT" | "COMMENT" => {
                let s = parse_quoted(rest).map_err(|m| syntax(Some(block), m))?;
                let slot = if keyword == "TEXT" {
                    &mut block.text
                } else {
                    &mut block.comment
                };
                if slot.is_some() {
                    return Err(syntax(Some(block), format!("{keyword} given twice")));
                }
                *slot = Some(s);
            }
            other => return Err(syntax(Some(block), format!("unexpected `{other}`"))),
        }
    }
    if let Some(block) = current.take() {
        rules.push(finish(block)?);
    }
    Ok(rules)
}

fn finish(block: Block) -> Result<Rule, RuleError> {
    let missing = |what: &str| RuleError::Syntax {
        line: block.line,
        rule: Some(block.id.clone()),
        message: format!("missing {what}"),
    };
    let (action, target) = block.action.clone().ok_or_else(|| missing("ACTION"))?;
    let (when_line, when) = block.when.clone().ok_or_else(|| missing("WHEN"))?;
    let alert_text = block.text.clone().ok_or_else(|| missing("TEXT"))?;
    let terms = ExprParser::new(&when)
        .terms()
        .map_err(|message| RuleError::Syntax {
            line: when_line,
            rule: Some(block.id.clone()),
            message,
        })?;
    Ok(Rule {
        id: block.id,
        action,
        terms,
        target,
        alert_text,
        comment: block.comment,
    })
}

fn parse_quoted(s: &str) -> Result<String, String> {
    let inner = s
        .strip_prefix('"')
        .ok_or_else(|| "expected a quoted string".to_string())?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e @ ('"' | '\\')) => out.push(e),
                _ => return Err("invalid escape in string".into()),
            },
            '"' => {
                if chars.as_str().trim().is_empty() {
                    return Ok(out);
                }
                return Err("unexpected text after closing quote".into());
            }
            c => out.push(c),
        }
    }
    Err("unterminated string".into())
}

fn parse_target(s: &str) -> Result<RuleElement, String> {
    let mut p = ExprParser::new(s);
    let element = if s.starts_with("drug(") {
        p.element()?
    } else {
        RuleElement {
            kind: ElementKind::Drug,
            codes: p.code_list()?,
            attributes: Vec::new(),
        }
    };
    p.skip_ws();
    if !p.at_end() {
        return Err(format!("unexpected `{}` after target", p.rest()));
    }
    if element.kind != ElementKind::Drug {
        return Err("the target of a rule must be a drug".into());
    }
    Ok(element)
}

struct ExprParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> ExprParser<'a> {
    fn new(src: &'a str) -> Self {
        ExprParser { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    /// Keyword followed by a non-identifier character.
    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        if rest.starts_with(kw)
            && !rest[kw.len()..]
                .chars()
                .next()
                .is_some_and(|c| c.is_alphanumeric() || c == '_')
        {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), String> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(format!("expected `{token}` at `{}`", self.rest()))
        }
    }

    fn terms(&mut self) -> Result<Vec<Term>, String> {
        let mut terms = vec![self.term()?];
        while self.eat_keyword("AND") {
            terms.push(self.term()?);
        }
        self.skip_ws();
        if !self.at_end() {
            return Err(format!("unexpected `{}`", self.rest()));
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term, String> {
        if self.eat_keyword("NOT") {
            self.skip_ws();
            if self.rest().starts_with("ANY") || self.rest().starts_with("NOT") {
                return Err("NOT applies to a single element; groups cannot be negated".into());
            }
            return Ok(Term::Not(self.element()?));
        }
        if self.eat_keyword("ANY") {
            self.expect("(")?;
            let mut group = vec![self.element()?];
            loop {
                if self.eat(")") {
                    break;
                }
                if !(self.eat_keyword("OR") || self.eat(",")) {
                    return Err(format!("expected OR, `,` or `)` at `{}`", self.rest()));
                }
                self.skip_ws();
                if self.rest().starts_with("ANY") || self.rest().starts_with("NOT") {
                    return Err("ANY groups hold plain elements only".into());
                }
                group.push(self.element()?);
            }
            return Ok(Term::AnyOf(group));
        }
        Ok(Term::Required(self.element()?))
    }

    fn element(&mut self) -> Result<RuleElement, String> {
        self.skip_ws();
        let kind = if self.eat("drug(") {
            ElementKind::Drug
        } else if self.eat("cond(") {
            ElementKind::Condition
        } else if self.eat("lab(") {
            ElementKind::Lab
        } else {
            return Err(format!(
                "expected drug(, cond( or lab( at `{}`",
                self.rest()
            ));
        };
        let codes = self.code_list()?;
        let mut attributes = Vec::new();
        while self.eat(",") {
            attributes.push(self.attribute()?);
        }
        self.expect(")")?;
        Ok(RuleElement {
            kind,
            codes,
            attributes,
        })
    }

    fn code_list(&mut self) -> Result<Vec<CodeSpec>, String> {
        let mut codes = vec![self.code_spec()?];
        while self.eat("|") {
            codes.push(self.code_spec()?);
        }
        Ok(codes)
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let rest = self.rest();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            if c.is_whitespace()
                || matches!(c, ',' | ')' | '(' | '|')
                || rest[i..].starts_with("..")
            {
                break;
            }
            end = i + c.len_utf8();
        }
        self.pos += end;
        &rest[..end]
    }

    fn code_ref(&mut self) -> Result<CodeRef, String> {
        let w = self.word();
        if w.is_empty() {
            return Err(format!("expected a code at `{}`", self.rest()));
        }
        w.parse().map_err(|e| format!("{e}"))
    }

    fn code_spec(&mut self) -> Result<CodeSpec, String> {
        let lo = self.code_ref()?;
        if self.rest().starts_with("..") {
            self.pos += 2;
            let hi = self.word();
            if hi.is_empty() || hi.contains(':') {
                return Err("range upper bound must be a bare code of the same system".into());
            }
            return Ok(CodeSpec::Range {
                lo,
                hi: hi.to_string(),
            });
        }
        Ok(CodeSpec::Code(lo))
    }

    fn comparator(&mut self) -> Result<Comparator, String> {
        self.skip_ws();
        for (tok, op) in [
            ("<=", Comparator::Le),
            (">=", Comparator::Ge),
            ("≤", Comparator::Le),
            ("≥", Comparator::Ge),
            ("<", Comparator::Lt),
            (">", Comparator::Gt),
            ("=", Comparator::Eq),
        ] {
            if self.eat(tok) {
                return Ok(op);
            }
        }
        Err(format!("expected a comparator at `{}`", self.rest()))
    }

    fn quantity(&mut self) -> Result<Quantity, String> {
        let op = self.comparator()?;
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .char_indices()
            .take_while(|&(i, c)| c.is_ascii_digit() || (c == '.' && i > 0) || (c == '-' && i == 0))
            .map(|(i, c)| i + c.len_utf8())
            .last()
            .unwrap_or(0);
        let value: f64 = rest[..len]
            .parse()
            .map_err(|_| format!("expected a number at `{rest}`"))?;
        self.pos += len;
        self.skip_ws();
        let rest = self.rest();
        let end = rest.find([',', ')']).unwrap_or(rest.len());
        let unit = rest[..end].trim().to_string();
        self.pos += end;
        Ok(Quantity { op, value, unit })
    }

    fn attribute(&mut self) -> Result<Attribute, String> {
        self.skip_ws();
        let rest = self.rest();
        let name_len = rest
            .char_indices()
            .take_while(|(_, c)| c.is_ascii_alphabetic())
            .count();
        let name = &rest[..name_len];
        self.pos += name_len;
        match name {
            "dose" => Ok(Attribute::Dose(self.quantity()?)),
            "duration" => Ok(Attribute::Duration(self.quantity()?)),
            "value" => Ok(Attribute::Value(self.quantity()?)),
            "indication" => {
                self.expect("=")?;
                Ok(Attribute::Indication(self.code_ref()?))
            }
            _ => Err(format!("unknown attribute at `{rest}`")),
        }
    }
}

fn allowed_systems(kind: ElementKind) -> &'static [SystemId] {
    match kind {
        ElementKind::Drug => &[SystemId::Atc],
        ElementKind::Condition => &[SystemId::Icd10, SystemId::Custom],
        ElementKind::Lab => &[SystemId::Loinc],
    }
}

/// Codes written in an element with ranges expanded, in written order.
pub(crate) fn expand_codes(
    element: &RuleElement,
    terminology: &Terminology,
) -> Result<Vec<CodeRef>, String> {
    let mut out: Vec<CodeRef> = Vec::new();
    for spec in &element.codes {
        let codes = match spec {
            CodeSpec::Code(c) => {
                if !terminology.contains(c) {
                    return Err(format!("unknown code {c}"));
                }
                vec![c.clone()]
            }
            CodeSpec::Range { lo, hi } => {
                let codes = terminology.range(lo, hi).map_err(|e| e.to_string())?;
                if codes.is_empty() {
                    return Err(format!("range {spec} is empty"));
                }
                codes
            }
        };
        for c in codes {
            if !allowed_systems(element.kind).contains(&c.system) {
                return Err(format!(
                    "{c} cannot be used in a {}( element",
                    element.kind.keyword()
                ));
            }
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

fn check_element(element: &RuleElement, terminology: &Terminology) -> Result<(), String> {
    expand_codes(element, terminology)?;
    for attr in &element.attributes {
        match (element.kind, attr) {
            (ElementKind::Drug, Attribute::Dose(q)) => {
                if q.unit != "mg/day" {
                    return Err(format!("dose must be in mg/day, found `{}`", q.unit));
                }
            }
            (ElementKind::Drug, Attribute::Duration(q)) => {
                if !matches!(q.unit.as_str(), "day" | "days") {
                    return Err(format!("duration must be in days, found `{}`", q.unit));
                }
            }
            (ElementKind::Drug, Attribute::Indication(c)) => {
                if !terminology.contains(c) {
                    return Err(format!("unknown indication code {c}"));
                }
            }
            (ElementKind::Lab, Attribute::Value(q)) => {
                if q.unit.is_empty() {
                    return Err("lab value comparator needs a unit".into());
                }
            }
            (kind, attr) => {
                return Err(format!(
                    "attribute `{attr}` is not allowed on {}(",
                    kind.keyword()
                ))
            }
        }
        if let Attribute::Dose(q) | Attribute::Duration(q) | Attribute::Value(q) = attr {
            if !q.value.is_finite() {
                return Err(format!("non-finite threshold in `{attr}`"));
            }
        }
    }
    Ok(())
}

/// Checks codes, attributes and, for stop rules, that the target is related by
/// subsumption to one of the required drug elements.
pub fn check_rule(rule: &Rule, terminology: &Terminology) -> Result<(), RuleError> {
    let invalid = |message: String| RuleError::Invalid {
        rule: rule.id.clone(),
        message,
    };
    for term in &rule.terms {
        for element in term.elements() {
            check_element(element, terminology).map_err(invalid)?;
        }
    }
    check_element(&rule.target, terminology).map_err(invalid)?;
    if rule.target.kind != ElementKind::Drug {
        return Err(invalid("the target must be a drug element".into()));
    }
    if rule.action == Action::Stop {
        let targets = expand_codes(&rule.target, terminology).map_err(invalid)?;
        let related = rule
            .required()
            .filter(|e| e.kind == ElementKind::Drug)
            .any(|e| {
                expand_codes(e, terminology).is_ok_and(|codes| {
                    codes.iter().any(|c| {
                        targets
                            .iter()
                            .any(|t| terminology.subsumed_by(t, c) || terminology.subsumed_by(c, t))
                    })
                })
            });
        if !related {
            return Err(invalid(
                "a stop target must be related to one of the required drug elements".into(),
            ));
        }
    }
    Ok(())
}
