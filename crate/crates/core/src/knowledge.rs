//! Every read-only knowledge source a review needs, loaded once and shared.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::categories::{CategoryMap, CategoryMapError};
use crate::code::{CodeParseError, CodeRef};
use crate::drugdb::{DrugDatabase, DrugDbError};
use crate::interactions::{InteractionError, InteractionTable};
use crate::terminology::{Terminology, TerminologyError};
use crate::textextract::{Lexicon, LexiconError};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("{path}: {error}")]
    Io {
        path: PathBuf,
        error: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// Fixture file locations. `in_dir` gives the conventional names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub terminology: PathBuf,
    pub crossmap: PathBuf,
    pub drugdb: PathBuf,
    pub categories: PathBuf,
    pub serious: PathBuf,
    pub elderly: PathBuf,
    pub interactions: PathBuf,
    pub lexicon: PathBuf,
    pub negation: PathBuf,
    pub family: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        FixturePaths {
            terminology: dir.join("terminology.tsv"),
            crossmap: dir.join("crossmap.tsv"),
            drugdb: dir.join("drugs.json"),
            categories: dir.join("categories.tsv"),
            serious: dir.join("serious.txt"),
            elderly: dir.join("elderly.txt"),
            interactions: dir.join("interactions.tsv"),
            lexicon: dir.join("lexicon.tsv"),
            negation: dir.join("negation.txt"),
            family: dir.join("family.txt"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Knowledge {
    pub terminology: Terminology,
    pub drugs: DrugDatabase,
    pub categories: CategoryMap,
    /// Serious-effect list merged with effects flagged serious in the drug database.
    pub serious: BTreeSet<CodeRef>,
    /// Elderly-important effects, in list order.
    pub elderly: Vec<CodeRef>,
    pub interactions: InteractionTable,
    pub lexicon: Lexicon,
}

fn read(path: &Path) -> Result<String, KnowledgeError> {
    std::fs::read_to_string(path).map_err(|error| KnowledgeError::Io {
        path: path.to_path_buf(),
        error,
    })
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> KnowledgeError {
    KnowledgeError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// One code per line; blank lines and `#` comments skipped. Duplicates dropped.
pub fn parse_code_list(text: &str) -> Result<Vec<CodeRef>, CodeParseError> {
    let mut out: Vec<CodeRef> = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let code: CodeRef = line.parse()?;
        if !out.contains(&code) {
            out.push(code);
        }
    }
    Ok(out)
}

impl Knowledge {
    pub fn load(paths: &FixturePaths) -> Result<Self, KnowledgeError> {
        let mut terminology = Terminology::parse(&read(&paths.terminology)?)
            .map_err(|e: TerminologyError| invalid(&paths.terminology, e))?;
        if paths.crossmap.exists() {
            terminology
                .load_crossmap(&read(&paths.crossmap)?)
                .map_err(|e| invalid(&paths.crossmap, e))?;
        }
        let drugs = DrugDatabase::parse(&read(&paths.drugdb)?)
            .map_err(|e: DrugDbError| invalid(&paths.drugdb, e))?;
        drugs
            .validate_codes(&terminology)
            .map_err(|e| invalid(&paths.drugdb, e))?;
        let categories = CategoryMap::parse(&read(&paths.categories)?)
            .map_err(|e: CategoryMapError| invalid(&paths.categories, e))?;
        let serious =
            parse_code_list(&read(&paths.serious)?).map_err(|e| invalid(&paths.serious, e))?;
        let elderly =
            parse_code_list(&read(&paths.elderly)?).map_err(|e| invalid(&paths.elderly, e))?;
        let interactions = InteractionTable::parse(&read(&paths.interactions)?)
            .map_err(|e: InteractionError| invalid(&paths.interactions, e))?;
        let lexicon = Lexicon::parse(
            &read(&paths.lexicon)?,
            &read(&paths.negation)?,
            &read(&paths.family)?,
        )
        .map_err(|e: LexiconError| invalid(&paths.lexicon, e))?;
        for (path, codes) in [(&paths.serious, &serious), (&paths.elderly, &elderly)] {
            if let Some(c) = codes.iter().find(|c| !terminology.contains(c)) {
                return Err(invalid(path, format!("unknown code {c}")));
            }
        }
        if let Some(e) = lexicon
            .entries()
            .iter()
            .find(|e| !terminology.contains(&e.code))
        {
            return Err(invalid(
                &paths.lexicon,
                format!("unknown code {} for `{}`", e.code, e.surface),
            ));
        }
        if let Some(c) = interactions
            .entries()
            .iter()
            .flat_map(|e| [&e.a, &e.b])
            .find(|c| !terminology.contains(c))
        {
            return Err(invalid(&paths.interactions, format!("unknown code {c}")));
        }
        Ok(Knowledge::new(
            terminology,
            drugs,
            categories,
            serious,
            elderly,
            interactions,
            lexicon,
        ))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        Self::load(&FixturePaths::in_dir(dir))
    }

    pub fn new(
        terminology: Terminology,
        drugs: DrugDatabase,
        categories: CategoryMap,
        serious: impl IntoIterator<Item = CodeRef>,
        elderly: Vec<CodeRef>,
        interactions: InteractionTable,
        lexicon: Lexicon,
    ) -> Self {
        let mut serious: BTreeSet<CodeRef> = serious.into_iter().collect();
        let mut elderly = elderly;
        for entry in drugs.entries() {
            for effect in &entry.adverse_effects {
                if effect.serious {
                    serious.insert(effect.pt.clone());
                }
                if effect.elderly && !elderly.contains(&effect.pt) {
                    elderly.push(effect.pt.clone());
                }
            }
        }
        Knowledge {
            terminology,
            drugs,
            categories,
            serious,
            elderly,
            interactions,
            lexicon,
        }
    }

    pub fn is_serious(&self, pt: &CodeRef) -> bool {
        self.serious.contains(pt)
    }

    pub fn is_elderly_important(&self, pt: &CodeRef) -> bool {
        self.elderly.contains(pt)
    }

    /// Anatomical category 1..13 of a code.
    pub fn category_of(&self, code: &CodeRef) -> u8 {
        self.categories.category_of(code, &self.terminology)
    }
}
