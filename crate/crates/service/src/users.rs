//! Static bearer tokens. File format: `token<TAB>user<TAB>role`, roles
//! `pharmacist`, `gp` or `observer`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pharmacist,
    Gp,
    /// Read-only access; no chat, no edits.
    Observer,
}

impl Role {
    pub fn can_write(self) -> bool {
        matches!(self, Role::Pharmacist | Role::Gp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub user: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct UsersError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Users {
    by_token: BTreeMap<String, Session>,
}

impl Users {
    pub fn parse(text: &str) -> Result<Self, UsersError> {
        let mut by_token = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let err = |message: String| UsersError {
                line: idx + 1,
                message,
            };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = raw.split('\t').map(str::trim).collect();
            let [token, user, role] = f[..] else {
                return Err(err(format!(
                    "expected 3 tab-separated fields, found {}",
                    f.len()
                )));
            };
            let role = match role {
                "pharmacist" => Role::Pharmacist,
                "gp" => Role::Gp,
                "observer" => Role::Observer,
                other => return Err(err(format!("unknown role `{other}`"))),
            };
            let session = Session {
                user: user.to_string(),
                role,
            };
            if by_token.insert(token.to_string(), session).is_some() {
                return Err(err("duplicate token".into()));
            }
        }
        Ok(Users { by_token })
    }

    pub fn insert(&mut self, token: impl Into<String>, user: impl Into<String>, role: Role) {
        self.by_token.insert(
            token.into(),
            Session {
                user: user.into(),
                role,
            },
        );
    }

    pub fn session(&self, token: &str) -> Option<&Session> {
        self.by_token.get(token)
    }
}
