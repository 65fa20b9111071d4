//! Hierarchical code systems and cross-terminology exact-match maps.
//!
//! Terminology files are tab-separated, one code per line:
//!
//! ```text
//! system<TAB>code<TAB>label<TAB>parent1;parent2;...
//! ```
//!
//! Cross-map files hold one exact-match pair per line: `system:code<TAB>system:code`.
//! Blank lines and lines starting with `#` are ignored in both formats.
//!
//! A loaded [`Terminology`] is immutable; reloading builds a new value.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::code::{CodeParseError, CodeRef, SystemId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TerminologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate code {code}")]
    Duplicate { line: usize, code: CodeRef },
    #[error("line {line}: code {code} has unknown parent `{parent}`")]
    DanglingParent {
        line: usize,
        code: CodeRef,
        parent: String,
    },
    #[error("hierarchy cycle through code {0}")]
    Cycle(CodeRef),
    #[error("unknown code {0}")]
    UnknownCode(CodeRef),
    #[error("invalid range {lo}..{hi}: {reason}")]
    InvalidRange {
        lo: CodeRef,
        hi: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Code {
    pub system: SystemId,
    pub id: String,
    pub label: String,
    pub parents: Vec<String>,
}

impl Code {
    pub fn code_ref(&self) -> CodeRef {
        CodeRef::new(self.system, self.id.clone())
    }
}

/// All codes of one system plus a child index for downward traversal.
#[derive(Debug, Clone, Default)]
pub struct CodeSystem {
    codes: BTreeMap<String, Code>,
    children: BTreeMap<String, Vec<String>>,
}

impl CodeSystem {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Code> {
        self.codes.get(id)
    }

    pub fn codes(&self) -> impl Iterator<Item = &Code> {
        self.codes.values()
    }

    fn children_of(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Symmetric exact-match links between codes of different systems.
#[derive(Debug, Clone, Default)]
pub struct CrossMap {
    links: BTreeMap<CodeRef, BTreeSet<CodeRef>>,
}

impl CrossMap {
    pub fn pairs(&self) -> impl Iterator<Item = (&CodeRef, &CodeRef)> {
        self.links
            .iter()
            .flat_map(|(a, targets)| targets.iter().map(move |b| (a, b)))
    }

    fn insert(&mut self, a: CodeRef, b: CodeRef) {
        self.links.entry(a.clone()).or_default().insert(b.clone());
        self.links.entry(b).or_default().insert(a);
    }

    fn linked(&self, code: &CodeRef) -> impl Iterator<Item = &CodeRef> {
        self.links.get(code).into_iter().flatten()
    }
}

/// The set of loaded code systems and the cross-map between them.
#[derive(Debug, Clone, Default)]
pub struct Terminology {
    systems: BTreeMap<SystemId, CodeSystem>,
    crossmap: CrossMap,
}

impl Terminology {
    /// Parses a terminology file. Every invariant (unique ids, resolvable
    /// parents, acyclic hierarchy) is checked before returning.
    pub fn parse(text: &str) -> Result<Self, TerminologyError> {
        let mut systems: BTreeMap<SystemId, CodeSystem> = BTreeMap::new();
        let mut lines_of: BTreeMap<CodeRef, usize> = BTreeMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(TerminologyError::Parse {
                    line,
                    message: format!(
                        "expected 3 or 4 tab-separated fields, found {}",
                        fields.len()
                    ),
                });
            }
            let system: SystemId =
                fields[0]
                    .parse()
                    .map_err(|e: CodeParseError| TerminologyError::Parse {
                        line,
                        message: e.to_string(),
                    })?;
            let id = fields[1].trim();
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(TerminologyError::Parse {
                    line,
                    message: format!("invalid code identifier `{id}`"),
                });
            }
            let parents: Vec<String> = fields
                .get(3)
                .map(|p| {
                    p.split(';')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(String::from)
                        .collect()
                })
                .unwrap_or_default();
            let code = Code {
                system,
                id: id.to_string(),
                label: fields[2].trim().to_string(),
                parents,
            };
            let sys = systems.entry(system).or_default();
            if sys.codes.contains_key(id) {
                return Err(TerminologyError::Duplicate {
                    line,
                    code: code.code_ref(),
                });
            }
            lines_of.insert(code.code_ref(), line);
            sys.codes.insert(id.to_string(), code);
        }

        for sys in systems.values_mut() {
            for code in sys.codes.values() {
                for parent in &code.parents {
                    if !sys.codes.contains_key(parent) {
                        let code_ref = code.code_ref();
                        return Err(TerminologyError::DanglingParent {
                            line: lines_of[&code_ref],
                            code: code_ref,
                            parent: parent.clone(),
                        });
                    }
                    sys.children
                        .entry(parent.clone())
                        .or_default()
                        .push(code.id.clone());
                }
            }
            check_acyclic(sys)?;
        }

        Ok(Terminology {
            systems,
            crossmap: CrossMap::default(),
        })
    }

    /// Parses and attaches a cross-map. Both endpoints of every pair must resolve.
    pub fn load_crossmap(&mut self, text: &str) -> Result<(), TerminologyError> {
        let mut map = CrossMap::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 2 {
                return Err(TerminologyError::Parse {
                    line,
                    message: format!("expected 2 tab-separated fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<CodeRef>().map_err(|e| TerminologyError::Parse {
                    line,
                    message: e.to_string(),
                })
            };
            let a = parse(fields[0])?;
            let b = parse(fields[1])?;
            for c in [&a, &b] {
                if !self.contains(c) {
                    return Err(TerminologyError::UnknownCode(c.clone()));
                }
            }
            map.insert(a, b);
        }
        self.crossmap = map;
        Ok(())
    }

    pub fn system(&self, id: SystemId) -> Option<&CodeSystem> {
        self.systems.get(&id)
    }

    pub fn len(&self) -> usize {
        self.systems.values().map(CodeSystem::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn crossmap(&self) -> &CrossMap {
        &self.crossmap
    }

    pub fn get(&self, code: &CodeRef) -> Option<&Code> {
        self.systems.get(&code.system)?.get(&code.code)
    }

    pub fn contains(&self, code: &CodeRef) -> bool {
        self.get(code).is_some()
    }

    pub fn label(&self, code: &CodeRef) -> Option<&str> {
        self.get(code).map(|c| c.label.as_str())
    }

    fn require(&self, code: &CodeRef) -> Result<&CodeSystem, TerminologyError> {
        self.systems
            .get(&code.system)
            .filter(|s| s.codes.contains_key(&code.code))
            .ok_or_else(|| TerminologyError::UnknownCode(code.clone()))
    }

    /// True iff `ancestor` is reachable from `code` through zero or more parent links.
    /// Codes from different systems are never related.
    pub fn is_a(&self, code: &CodeRef, ancestor: &CodeRef) -> Result<bool, TerminologyError> {
        let sys = self.require(code)?;
        self.require(ancestor)?;
        if code.system != ancestor.system {
            return Ok(false);
        }
        if code.code == ancestor.code {
            return Ok(true);
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([code.code.as_str()]);
        while let Some(id) = queue.pop_front() {
            for parent in &sys.codes[id].parents {
                if *parent == ancestor.code {
                    return Ok(true);
                }
                if seen.insert(parent.as_str()) {
                    queue.push_back(parent);
                }
            }
        }
        Ok(false)
    }

    /// Like [`Terminology::is_a`], but unknown codes are simply unrelated.
    pub fn subsumed_by(&self, code: &CodeRef, ancestor: &CodeRef) -> bool {
        self.is_a(code, ancestor).unwrap_or(false)
    }

    /// Every code `c` with `is_a(c, code)`, including `code` itself.
    pub fn descendants(&self, code: &CodeRef) -> Result<BTreeSet<CodeRef>, TerminologyError> {
        let sys = self.require(code)?;
        let mut out = BTreeSet::from([code.clone()]);
        let mut queue = VecDeque::from([code.code.as_str()]);
        while let Some(id) = queue.pop_front() {
            for child in sys.children_of(id) {
                if out.insert(CodeRef::new(code.system, child.clone())) {
                    queue.push_back(child);
                }
            }
        }
        Ok(out)
    }

    /// Every code `a` with `is_a(code, a)`, including `code` itself.
    pub fn ancestors(&self, code: &CodeRef) -> Result<BTreeSet<CodeRef>, TerminologyError> {
        let sys = self.require(code)?;
        let mut out = BTreeSet::from([code.clone()]);
        let mut queue = VecDeque::from([code.code.as_str()]);
        while let Some(id) = queue.pop_front() {
            for parent in &sys.codes[id].parents {
                if out.insert(CodeRef::new(code.system, parent.clone())) {
                    queue.push_back(parent);
                }
            }
        }
        Ok(out)
    }

    /// Codes of `lo.system` whose identifiers sort between `lo` and `hi` inclusive.
    /// Both endpoints must exist.
    pub fn range(&self, lo: &CodeRef, hi: &str) -> Result<Vec<CodeRef>, TerminologyError> {
        let sys = self.require(lo)?;
        let hi_ref = CodeRef::new(lo.system, hi);
        self.require(&hi_ref)?;
        if lo.code.as_str() > hi {
            return Err(TerminologyError::InvalidRange {
                lo: lo.clone(),
                hi: hi.to_string(),
                reason: "lower bound sorts after upper bound".into(),
            });
        }
        Ok(sys
            .codes
            .range(lo.code.clone()..=hi.to_string())
            .map(|(id, _)| CodeRef::new(lo.system, id.clone()))
            .collect())
    }

    /// Exact-match targets of `code` in `target`, directly or through one
    /// intermediate code of another system.
    pub fn transcode(&self, code: &CodeRef, target: SystemId) -> BTreeSet<CodeRef> {
        let mut out = BTreeSet::new();
        for first in self.crossmap.linked(code) {
            if first.system == target {
                out.insert(first.clone());
                continue;
            }
            for second in self.crossmap.linked(first) {
                if second.system == target && second != code {
                    out.insert(second.clone());
                }
            }
        }
        out
    }
}

fn check_acyclic(sys: &CodeSystem) -> Result<(), TerminologyError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
    for start in sys.codes.keys() {
        if marks.contains_key(start.as_str()) {
            continue;
        }
        // iterative DFS: (node, next parent index)
        let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
        marks.insert(start, Mark::Active);
        while let Some(&(node, next)) = stack.last() {
            let parents = &sys.codes[node].parents;
            if next < parents.len() {
                let parent = parents[next].as_str();
                if let Some(top) = stack.last_mut() {
                    top.1 += 1;
                }
                match marks.get(parent) {
                    Some(Mark::Active) => {
                        let code = &sys.codes[parent];
                        return Err(TerminologyError::Cycle(code.code_ref()));
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(parent, Mark::Active);
                        stack.push((parent, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TREE: &str = "atc\tC07\tBeta blocking agents\t\n\
                        atc\tC07A\tBeta blocking agents\tC07\n\
                        atc\tC07AB\tBeta blocking agents, selective\tC07A\n";

    #[test]
    fn empty_document_has_no_codes() {
        let t = Terminology::parse("").unwrap();
        assert!(t.is_empty());
        let t = Terminology::parse("# comment only\n\n").unwrap();
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn three_level_tree() {
        let t = Terminology::parse(TREE).unwrap();
        assert_eq!(t.system(SystemId::Atc).unwrap().len(), 3);
        assert!(t
            .is_a(&CodeRef::atc("C07AB"), &CodeRef::atc("C07"))
            .unwrap());
        assert!(!t
            .is_a(&CodeRef::atc("C07"), &CodeRef::atc("C07AB"))
            .unwrap());
        assert!(t
            .is_a(&CodeRef::atc("C07A"), &CodeRef::atc("C07A"))
            .unwrap());
    }

    #[test]
    fn descendants_of_root_and_leaf() {
        let t = Terminology::parse(TREE).unwrap();
        let d = t.descendants(&CodeRef::atc("C07")).unwrap();
        let expected: BTreeSet<_> = ["C07", "C07A", "C07AB"]
            .iter()
            .map(|c| CodeRef::atc(c))
            .collect();
        assert_eq!(d, expected);
        let leaf = t.descendants(&CodeRef::atc("C07AB")).unwrap();
        assert_eq!(leaf, BTreeSet::from([CodeRef::atc("C07AB")]));
        assert!(matches!(
            t.descendants(&CodeRef::atc("X99")),
            Err(TerminologyError::UnknownCode(_))
        ));
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let err = Terminology::parse("icd10\tI10\tHypertension\tI10\n").unwrap_err();
        assert_eq!(err, TerminologyError::Cycle(CodeRef::icd10("I10")));
    }

    #[test]
    fn longer_cycle_detected() {
        let text = "atc\tA\ta\tC\natc\tB\tb\tA\natc\tC\tc\tB\n";
        assert!(matches!(
            Terminology::parse(text),
            Err(TerminologyError::Cycle(_))
        ));
    }

    #[test]
    fn dangling_parent_reports_line() {
        let text = "atc\tC07\tx\t\natc\tC07A\ty\tC99\n";
        match Terminology::parse(text) {
            Err(TerminologyError::DanglingParent { line, parent, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(parent, "C99");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "atc\tC07\tx\t\nthis line is wrong\n";
        assert!(matches!(
            Terminology::parse(text),
            Err(TerminologyError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_code_rejected() {
        let text = "atc\tC07\tx\t\natc\tC07\ty\t\n";
        assert!(matches!(
            Terminology::parse(text),
            Err(TerminologyError::Duplicate { line: 2, .. })
        ));
    }

    #[test]
    fn multiple_parents_allowed() {
        let text = "meddra\tSOC1\ta\t\nmeddra\tSOC2\tb\t\nmeddra\tPT\tc\tSOC1;SOC2\n";
        let t = Terminology::parse(text).unwrap();
        let pt = CodeRef::meddra("PT");
        assert!(t.is_a(&pt, &CodeRef::meddra("SOC1")).unwrap());
        assert!(t.is_a(&pt, &CodeRef::meddra("SOC2")).unwrap());
        assert_eq!(t.ancestors(&pt).unwrap().len(), 3);
    }

    #[test]
    fn code_ranges_expand_lexically() {
        let text = "icd10\tE10\tt1\t\nicd10\tE11\tt2\t\nicd10\tE12\tx\t\nicd10\tE14\tu\t\nicd10\tE16\th\t\n";
        let t = Terminology::parse(text).unwrap();
        let r = t.range(&CodeRef::icd10("E10"), "E14").unwrap();
        assert_eq!(r.len(), 4);
        assert!(t.range(&CodeRef::icd10("E14"), "E10").is_err());
        assert!(t.range(&CodeRef::icd10("E10"), "E13").is_err());
    }

    #[test]
    fn transcode_direct_and_pivot() {
        let terms = "mesh\tD006973\tHypertension\t\nicd10\tI10\tEssential hypertension\t\n\
                     atc\tA\ta\t\nmesh\tM\tm\t\nloinc\tB\tb\t\n";
        let mut t = Terminology::parse(terms).unwrap();
        t.load_crossmap("mesh:D006973\ticd10:I10\natc:A\tmesh:M\nmesh:M\tloinc:B\n")
            .unwrap();
        assert_eq!(
            t.transcode(&CodeRef::new(SystemId::Mesh, "D006973"), SystemId::Icd10),
            BTreeSet::from([CodeRef::icd10("I10")])
        );
        assert_eq!(
            t.transcode(&CodeRef::atc("A"), SystemId::Loinc),
            BTreeSet::from([CodeRef::loinc("B")])
        );
        assert!(t
            .transcode(&CodeRef::icd10("I10"), SystemId::Atc)
            .is_empty());
    }

    #[test]
    fn crossmap_rejects_unresolved_endpoint() {
        let mut t = Terminology::parse("icd10\tI10\tx\t\n").unwrap();
        assert!(t.load_crossmap("icd10:I10\tmesh:D1\n").is_err());
    }
}
