//! Service configuration file.
//!
//! Every key is optional. A minimal file:
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! data_dir = "/var/lib/rba"
//! admin_token = "replace-with-a-long-random-token"
//! static_dir = "frontend/dist"
//!
//! [risk]
//! threshold_reauth = 0.003
//! threshold_reject = 0.018
//!
//! [messenger]
//! kind = "outbox"
//! dir = "/var/lib/rba/outbox"
//! from = "rba@example.org"
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use rba_core::verification::ChallengePolicy;
use rba_core::RiskConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "RBA_CONFIG";
/// Environment variable that overrides `admin_token`.
pub const ADMIN_TOKEN_ENV: &str = "RBA_ADMIN_TOKEN";

#[derive(Debug, thiserror::Error)]
pub enum ServiceConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid service config: {0}")]
    Parse(String),
    #[error("invalid service config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Holds `history.log` and `users.json`.
    pub data_dir: PathBuf,
    /// Static assets served under `/`.
    pub static_dir: Option<PathBuf>,
    /// `cidr,asn,country` table for address resolution.
    pub resolver_csv: Option<PathBuf>,
    /// Bearer token for `/v1/admin/*`; admin endpoints are off without one.
    pub admin_token: Option<String>,
    /// Take the client address from `X-Forwarded-For` (only behind a trusted proxy).
    pub trust_forwarded_for: bool,
    pub session_ttl_secs: i64,
    /// JSON-lines audit file, one line per decision.
    pub audit_log: Option<PathBuf>,
    pub risk: RiskConfig,
    pub challenge: ChallengeConfig,
    pub messenger: MessengerConfig,
    pub reputation: ReputationConfig,
    pub password_hash: PasswordHashConfig,
    pub rtt: RttConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            static_dir: None,
            resolver_csv: None,
            admin_token: None,
            trust_forwarded_for: false,
            session_ttl_secs: 3600,
            audit_log: None,
            risk: RiskConfig::default(),
            challenge: ChallengeConfig::default(),
            messenger: MessengerConfig::default(),
            reputation: ReputationConfig::default(),
            password_hash: PasswordHashConfig::default(),
            rtt: RttConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChallengeConfig {
    pub ttl_secs: i64,
    pub max_attempts: u32,
}

impl Default for ChallengeConfig {
    fn default() -> Self {
        let p = ChallengePolicy::default();
        ChallengeConfig { ttl_secs: p.ttl_secs, max_attempts: p.max_attempts }
    }
}

impl From<ChallengeConfig> for ChallengePolicy {
    fn from(c: ChallengeConfig) -> Self {
        ChallengePolicy { ttl_secs: c.ttl_secs, max_attempts: c.max_attempts }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MessengerConfig {
    /// `.eml` files in a directory.
    Outbox { dir: PathBuf, from: String },
    /// Plain SMTP relay.
    Smtp { server: String, from: String, timeout_secs: Option<u64> },
}

impl Default for MessengerConfig {
    fn default() -> Self {
        MessengerConfig::Outbox { dir: PathBuf::from("data/outbox"), from: "rba@localhost".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationConfig {
    /// File path or `http(s)://` URL of an IP/CIDR list.
    pub source: Option<String>,
    pub refresh_interval_secs: u64,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        ReputationConfig {
            source: None,
            refresh_interval_secs: rba_core::reputation::DEFAULT_REFRESH_INTERVAL.as_secs(),
        }
    }
}

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PasswordHashConfig {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl Default for PasswordHashConfig {
    fn default() -> Self {
        PasswordHashConfig { memory_kib: 19 * 1024, iterations: 2, parallelism: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RttConfig {
    /// Lifetime of an unclaimed nonce or measurement.
    pub nonce_ttl_secs: u64,
    pub pings: u32,
    /// Wait for all echoes; a slower client gets no RTT.
    pub timeout_ms: u64,
}

impl Default for RttConfig {
    fn default() -> Self {
        RttConfig { nonce_ttl_secs: 60, pings: 5, timeout_ms: 3000 }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ServiceConfigError> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ServiceConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ServiceConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml_str(&text)
    }

    /// Loads the file named by `RBA_CONFIG` or `fallback`, or defaults when
    /// neither is given; then applies `RBA_ADMIN_TOKEN`.
    pub fn from_env(fallback: Option<&Path>) -> Result<Self, ServiceConfigError> {
        let path = std::env::var_os(CONFIG_ENV).map(PathBuf::from).or_else(|| fallback.map(Path::to_owned));
        let mut config = match path {
            Some(p) => Self::load(&p)?,
            None => ServiceConfig::default(),
        };
        if let Ok(token) = std::env::var(ADMIN_TOKEN_ENV) {
            config.admin_token = Some(token);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServiceConfigError> {
        self.risk.validate().map_err(|e| ServiceConfigError::Invalid(e.to_string()))?;
        let invalid = |m: &str| Err(ServiceConfigError::Invalid(m.to_owned()));
        if self.session_ttl_secs <= 0 {
            return invalid("session_ttl_secs must be positive");
        }
        if self.challenge.ttl_secs <= 0 || self.challenge.max_attempts == 0 {
            return invalid("challenge ttl and attempts must be positive");
        }
        if self.rtt.pings == 0 {
            return invalid("rtt.pings must be at least 1");
        }
        if matches!(&self.admin_token, Some(t) if t.len() < 16) {
            return invalid("admin_token must be at least 16 characters");
        }
        Ok(())
    }

    pub fn history_path(&self) -> PathBuf {
        self.data_dir.join("history.log")
    }

    pub fn users_path(&self) -> PathBuf {
        self.data_dir.join("users.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(ServiceConfig::from_toml_str("").unwrap(), ServiceConfig::default());
    }

    #[test]
    fn full_file() {
        let text = r#"
            bind = "0.0.0.0:9000"
            data_dir = "/tmp/rba"
            admin_token = "0123456789abcdef"
            trust_forwarded_for = true

            [risk]
            threshold_reauth = 0.003
            threshold_reject = inf

            [challenge]
            ttl_secs = 120

            [messenger]
            kind = "smtp"
            server = "mail.example.org:25"
            from = "rba@example.org"

            [reputation]
            source = "https://example.org/list.netset"

            [password_hash]
            memory_kib = 8
            iterations = 1
        "#;
        let c = ServiceConfig::from_toml_str(text).unwrap();
        assert_eq!(c.bind.port(), 9000);
        assert!(c.risk.threshold_reject.is_infinite());
        assert_eq!(c.challenge.ttl_secs, 120);
        assert_eq!(c.challenge.max_attempts, 3);
        assert!(matches!(c.messenger, MessengerConfig::Smtp { timeout_secs: None, .. }));
        assert_eq!(c.password_hash.parallelism, 1);
        assert_eq!(c.history_path(), PathBuf::from("/tmp/rba/history.log"));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml_str("session_ttl_secs = 0").is_err());
        assert!(ServiceConfig::from_toml_str("admin_token = \"short\"").is_err());
        assert!(ServiceConfig::from_toml_str("[risk]\nip_weights = [0.5, 0.5, 0.5]").is_err());
        assert!(ServiceConfig::from_toml_str("unknown_key = 1").is_err());
    }
}
