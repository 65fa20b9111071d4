//! One JSON file per patient, `<data-dir>/<patient_id>.json`. Writes go to a
//! temporary file first and are renamed into place.

use std::path::{Path, PathBuf};

use medreview_core::PatientRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {error}")]
    Io {
        path: PathBuf,
        error: std::io::Error,
    },
    #[error("{path}: {error}")]
    Json {
        path: PathBuf,
        error: serde_json::Error,
    },
    #[error("patient id `{0}` cannot be used as a file name")]
    BadId(String),
}

#[derive(Debug, Clone)]
pub struct FileStore {
    dir: PathBuf,
}

pub fn valid_patient_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|error| StoreError::Io {
            path: dir.clone(),
            error,
        })?;
        Ok(FileStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_patient_id(id) {
            return Err(StoreError::BadId(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    pub fn save(&self, record: &PatientRecord) -> Result<(), StoreError> {
        let path = self.path_of(&record.patient_id)?;
        let tmp = path.with_extension("json.tmp");
        let io = |error| StoreError::Io {
            path: path.clone(),
            error,
        };
        let mut bytes = serde_json::to_vec_pretty(record).map_err(|error| StoreError::Json {
            path: path.clone(),
            error,
        })?;
        bytes.push(b'\n');
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }

    /// Every stored record, sorted by patient id.
    pub fn load_all(&self) -> Result<Vec<PatientRecord>, StoreError> {
        let io = |error| StoreError::Io {
            path: self.dir.clone(),
            error,
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|path| {
                let text = std::fs::read_to_string(&path).map_err(|error| StoreError::Io {
                    path: path.clone(),
                    error,
                })?;
                serde_json::from_str(&text).map_err(|error| StoreError::Json { path, error })
            })
            .collect()
    }
}
