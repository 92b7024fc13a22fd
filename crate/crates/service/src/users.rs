//! Accounts: password hashes, contact addresses and HOTP state.
//!
//! Persisted as one JSON document (`users.json`), rewritten atomically on
//! every change.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use parking_lot::RwLock;
use rand::RngCore;
use rba_core::verification::{HotpCredential, HotpSecret};
use rba_core::UserId;
use serde::{Deserialize, Serialize};

use crate::config::PasswordHashConfig;

#[derive(Debug, thiserror::Error)]
pub enum UserStoreError {
    #[error("user {0:?} already exists")]
    Duplicate(String),
    #[error("no user {0:?}")]
    NotFound(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("user store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("user store {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("password hashing failed: {0}")]
    Hash(String),
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    /// Argon2id PHC string.
    pub password_hash: String,
    pub contact: Option<String>,
    /// Hex-encoded HOTP key.
    pub hotp_secret: String,
    /// Counter of the last issued code.
    pub hotp_counter: u64,
    pub created_at: i64,
}

impl fmt::Debug for UserRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserRecord")
            .field("username", &self.username)
            .field("contact", &self.contact)
            .field("hotp_counter", &self.hotp_counter)
            .finish_non_exhaustive()
    }
}

impl UserRecord {
    pub fn user_id(&self) -> UserId {
        UserId::from(self.username.as_str())
    }

    pub fn credential(&self) -> Result<HotpCredential, UserStoreError> {
        let corrupt = |message: String| UserStoreError::Invalid { field: "hotp_secret", message };
        let bytes = hex::decode(&self.hotp_secret).map_err(|e| corrupt(e.to_string()))?;
        let secret = HotpSecret::new(bytes).map_err(|e| corrupt(e.to_string()))?;
        Ok(HotpCredential { secret, counter: self.hotp_counter })
    }
}

/// Argon2id with per-user random salts.
#[derive(Clone)]
pub struct PasswordHashing {
    argon: Argon2<'static>,
}

impl PasswordHashing {
    pub fn new(cfg: PasswordHashConfig) -> Result<Self, UserStoreError> {
        let params = Params::new(cfg.memory_kib, cfg.iterations, cfg.parallelism, None)
            .map_err(|e| UserStoreError::Hash(e.to_string()))?;
        Ok(PasswordHashing { argon: Argon2::new(Algorithm::Argon2id, Version::V0x13, params) })
    }

    pub fn hash(&self, password: &str) -> Result<String, UserStoreError> {
        let mut salt = [0u8; 16];
        rand::rng().fill_bytes(&mut salt);
        let salt = SaltString::encode_b64(&salt).map_err(|e| UserStoreError::Hash(e.to_string()))?;
        let hash = self
            .argon
            .hash_password(password.as_bytes(), &salt)
            .map_err(|e| UserStoreError::Hash(e.to_string()))?;
        Ok(hash.to_string())
    }

    /// False for a wrong password and for an unparseable hash.
    pub fn verify(&self, password: &str, phc: &str) -> bool {
        match PasswordHash::new(phc) {
            Ok(parsed) => self.argon.verify_password(password.as_bytes(), &parsed).is_ok(),
            Err(_) => false,
        }
    }
}

pub fn validate_username(name: &str) -> Result<(), UserStoreError> {
    let bad = |m: &str| Err(UserStoreError::Invalid { field: "username", message: m.to_owned() });
    if name.trim().is_empty() {
        return bad("must not be empty");
    }
    if name.len() > 128 {
        return bad("longer than 128 bytes");
    }
    if name.chars().any(char::is_control) || name.trim() != name {
        return bad("contains control characters or surrounding whitespace");
    }
    Ok(())
}

pub fn validate_contact(contact: &str) -> Result<(), UserStoreError> {
    let bad = |m: &str| Err(UserStoreError::Invalid { field: "contact", message: m.to_owned() });
    if contact.trim().is_empty() || contact.len() > 254 {
        return bad("must be 1 to 254 bytes");
    }
    if contact.chars().any(|c| c.is_control() || c == '<' || c == '>') {
        return bad("contains forbidden characters");
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct UserStore {
    path: Option<PathBuf>,
    users: RwLock<BTreeMap<String, UserRecord>>,
}

impl UserStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, starting empty when it does not exist yet.
    pub fn open(path: &Path) -> Result<Self, UserStoreError> {
        let users = match std::fs::read_to_string(path) {
            Ok(text) => {
                let list: Vec<UserRecord> = serde_json::from_str(&text)
                    .map_err(|e| UserStoreError::Corrupt { path: path.to_owned(), message: e.to_string() })?;
                list.into_iter().map(|u| (u.username.clone(), u)).collect()
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(UserStore { path: Some(path.to_owned()), users: RwLock::new(users) })
    }

    pub fn get(&self, username: &str) -> Option<UserRecord> {
        self.users.read().get(username).cloned()
    }

    pub fn len(&self) -> usize {
        self.users.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, record: UserRecord) -> Result<(), UserStoreError> {
        validate_username(&record.username)?;
        if let Some(c) = &record.contact {
            validate_contact(c)?;
        }
        let mut users = self.users.write();
        if users.contains_key(&record.username) {
            return Err(UserStoreError::Duplicate(record.username));
        }
        let mut next = users.clone();
        next.insert(record.username.clone(), record);
        self.persist(&next)?;
        *users = next;
        Ok(())
    }

    /// Applies `change` to one record and persists; on a write failure the
    /// stored record is left as it was.
    pub fn update<F>(&self, username: &str, change: F) -> Result<UserRecord, UserStoreError>
    where
        F: FnOnce(&mut UserRecord),
    {
        let mut users = self.users.write();
        let mut record = users.get(username).cloned().ok_or_else(|| UserStoreError::NotFound(username.to_owned()))?;
        change(&mut record);
        let mut next = users.clone();
        next.insert(username.to_owned(), record.clone());
        self.persist(&next)?;
        *users = next;
        Ok(record)
    }

    fn persist(&self, users: &BTreeMap<String, UserRecord>) -> Result<(), UserStoreError> {
        let Some(path) = &self.path else { return Ok(()) };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let list: Vec<&UserRecord> = users.values().collect();
        let text = serde_json::to_string_pretty(&list).expect("user records serialize");
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// New account record with a fresh HOTP key.
pub fn new_user(
    hasher: &PasswordHashing,
    username: &str,
    password: &str,
    contact: Option<&str>,
    now: i64,
) -> Result<UserRecord, UserStoreError> {
    validate_username(username)?;
    if password.is_empty() {
        return Err(UserStoreError::Invalid { field: "password", message: "must not be empty".into() });
    }
    let credential = HotpCredential::generate();
    Ok(UserRecord {
        username: username.to_owned(),
        password_hash: hasher.hash(password)?,
        contact: contact.map(|c| c.trim().to_owned()),
        hotp_secret: hex::encode(credential.secret.as_bytes()),
        hotp_counter: credential.counter,
        created_at: now,
    })
}
