//! The login flow: password check, risk evaluation, challenge round-trip
//! and session issuance.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use rand::RngCore;
use rba_core::features::{FeaturePipeline, IpResolver, NullResolver, PrefixTableResolver, UserAgentParser};
use rba_core::reputation::{ReputationHandle, ReputationSet, ReputationSource};
use rba_core::verification::{ChallengeBook, Messenger, OutboxMessenger, SmtpMessenger};
use rba_core::{HistoryStore, NormalizedFeatures, Outcome, RawLoginAttempt, RiskEngine, RiskScore, UserId};
use serde::{Deserialize, Serialize};

use crate::config::{MessengerConfig, ServiceConfig};
use crate::rtt::RttRegistry;
use crate::users::{new_user, validate_contact, PasswordHashing, UserRecord, UserStore, UserStoreError};

/// Shown for every failed login, whatever the cause.
pub const LOGIN_FAILURE: &str = "Invalid username or password.";
pub const VERIFY_FAILURE: &str = "The verification code is invalid or has expired.";
pub const PASSCODE_REQUIRED: &str = "A verification code was sent to your registered contact address.";

const LOCK_STRIPES: usize = 64;

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now(&self) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> i64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as i64)
    }
}

/// Settable clock for tests.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(now: i64) -> Self {
        ManualClock(AtomicI64::new(now))
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Response body of `/v1/auth` and `/v1/auth/verify`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AuthResponse {
    Success {
        token: String,
        expires_at: i64,
    },
    PasscodeRequired {
        message: String,
    },
    Failure {
        message: String,
        /// Only on verify: whether the current challenge still accepts codes.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        can_retry: Option<bool>,
    },
}

impl AuthResponse {
    fn login_failure() -> Self {
        AuthResponse::Failure { message: LOGIN_FAILURE.into(), can_retry: None }
    }
}

/// What happened to one request, for callers that need more than the response.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub outcome: Outcome,
    pub score: Option<RiskScore>,
    pub response: AuthResponse,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum AdminError {
    #[error(transparent)]
    Users(#[from] UserStoreError),
    #[error(transparent)]
    Reputation(#[from] rba_core::error::ReputationError),
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Users(#[from] UserStoreError),
    #[error(transparent)]
    History(#[from] rba_core::error::StoreError),
    #[error(transparent)]
    Resolver(#[from] rba_core::error::ResolverError),
    #[error("cannot open audit log: {0}")]
    Audit(std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub user: UserId,
    pub issued_at: i64,
    pub expires_at: i64,
}

/// Account data safe to return to admins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserView {
    pub username: String,
    pub contact: Option<String>,
    pub created_at: i64,
}

impl From<&UserRecord> for UserView {
    fn from(r: &UserRecord) -> Self {
        UserView { username: r.username.clone(), contact: r.contact.clone(), created_at: r.created_at }
    }
}

#[derive(Debug, Serialize)]
struct AuditLine<'a> {
    ts: i64,
    event: &'a str,
    user: &'a str,
    ip: &'a str,
    outcome: &'a str,
    score: Option<String>,
}

/// One JSON line per decision, to a file and to the `rba::audit` tracing target.
#[derive(Debug, Default)]
pub struct AuditLog {
    file: Option<Mutex<File>>,
}

impl AuditLog {
    pub fn open(path: Option<&Path>) -> std::io::Result<Self> {
        let file = match path {
            None => None,
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?))
            }
        };
        Ok(AuditLog { file })
    }

    fn record(&self, line: &AuditLine<'_>) {
        tracing::info!(
            target: "rba::audit",
            event = line.event,
            user = line.user,
            ip = line.ip,
            outcome = line.outcome,
            score = line.score.as_deref().unwrap_or("-"),
        );
        if let Some(file) = &self.file {
            let mut text = serde_json::to_string(line).expect("audit line serializes");
            text.push('\n');
            if let Err(e) = file.lock().write_all(text.as_bytes()) {
                tracing::error!(error = %e, "audit log write failed");
            }
        }
    }
}

pub enum Storage {
    /// History and users under the configured `data_dir`.
    Disk,
    /// Nothing persisted.
    Memory,
}

pub fn messenger_from_config(cfg: &MessengerConfig) -> Arc<dyn Messenger> {
    match cfg {
        MessengerConfig::Outbox { dir, from } => Arc::new(OutboxMessenger::new(dir.clone(), from.clone())),
        MessengerConfig::Smtp { server, from, timeout_secs } => {
            let m = SmtpMessenger::new(server.clone(), from.clone());
            Arc::new(match timeout_secs {
                Some(s) => m.with_timeout(Duration::from_secs(*s)),
                None => m,
            })
        }
    }
}

pub struct AuthService {
    config: ServiceConfig,
    engine: RiskEngine,
    pipeline: FeaturePipeline,
    history: HistoryStore,
    users: UserStore,
    hashing: PasswordHashing,
    /// Verified against for unknown users so both paths cost the same.
    dummy_hash: String,
    challenges: ChallengeBook,
    messenger: Arc<dyn Messenger>,
    reputation: ReputationHandle,
    sessions: Mutex<HashMap<String, Session>>,
    rtt: RttRegistry,
    stripes: Vec<Mutex<()>>,
    audit: AuditLog,
    clock: Arc<dyn Clock>,
}

impl AuthService {
    /// Service as configured: disk storage, configured messenger, system clock.
    pub fn from_config(config: ServiceConfig) -> Result<Self, StartupError> {
        let messenger = messenger_from_config(&config.messenger);
        Self::new(config, messenger, Arc::new(SystemClock), Storage::Disk)
    }

    pub fn new(
        config: ServiceConfig,
        messenger: Arc<dyn Messenger>,
        clock: Arc<dyn Clock>,
        storage: Storage,
    ) -> Result<Self, StartupError> {
        let cap = Some(config.risk.history_cap);
        let (history, users) = match storage {
            Storage::Disk => {
                std::fs::create_dir_all(&config.data_dir).map_err(rba_core::error::StoreError::from)?;
                (HistoryStore::open(&config.history_path(), cap)?, UserStore::open(&config.users_path())?)
            }
            Storage::Memory => (HistoryStore::new(cap), UserStore::in_memory()),
        };
        let resolver: Arc<dyn IpResolver> = match &config.resolver_csv {
            Some(path) => Arc::new(PrefixTableResolver::load(path)?),
            None => Arc::new(NullResolver),
        };
        let reputation = ReputationHandle::new(ReputationSet::empty("none"));
        if let Some(source) = config.reputation.source.as_deref().filter(|s| !is_url(s)) {
            // A bad list at startup leaves the empty set active.
            let _ = reputation.refresh(&ReputationSource::File(source.into()));
        }
        let hashing = PasswordHashing::new(config.password_hash)?;
        let mut filler = [0u8; 24];
        rand::rng().fill_bytes(&mut filler);
        let dummy_hash = hashing.hash(&hex::encode(filler))?;
        Ok(AuthService {
            engine: RiskEngine::standard(config.risk.clone()),
            pipeline: FeaturePipeline::new(resolver, UserAgentParser::bundled()),
            history,
            users,
            hashing,
            dummy_hash,
            challenges: ChallengeBook::new(config.challenge.into()),
            messenger,
            reputation,
            sessions: Mutex::new(HashMap::new()),
            rtt: RttRegistry::new(Duration::from_secs(config.rtt.nonce_ttl_secs)),
            stripes: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
            audit: AuditLog::open(config.audit_log.as_deref()).map_err(StartupError::Audit)?,
            clock,
            config,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn history(&self) -> &HistoryStore {
        &self.history
    }

    pub fn rtt(&self) -> &RttRegistry {
        &self.rtt
    }

    pub fn reputation(&self) -> &ReputationHandle {
        &self.reputation
    }

    pub fn now(&self) -> i64 {
        self.clock.now()
    }

    /// Serializes the per-user critical sections (challenge state, history append).
    fn lock_user(&self, username: &str) -> parking_lot::MutexGuard<'_, ()> {
        let mut h = DefaultHasher::new();
        username.hash(&mut h);
        self.stripes[(h.finish() as usize) % LOCK_STRIPES].lock()
    }

    fn audit(&self, event: &str, user: &str, ip: &str, outcome: &str, score: Option<RiskScore>) {
        let line = AuditLine { ts: self.clock.now(), event, user, ip, outcome, score: score.map(|s| s.to_string()) };
        self.audit.record(&line);
    }

    fn issue_session(&self, user: &UserId, now: i64) -> AuthResponse {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        let expires_at = now + self.config.session_ttl_secs;
        let mut sessions = self.sessions.lock();
        if sessions.len() > 10_000 {
            sessions.retain(|_, s| s.expires_at > now);
        }
        sessions.insert(token.clone(), Session { user: user.clone(), issued_at: now, expires_at });
        AuthResponse::Success { token, expires_at }
    }

    pub fn session(&self, token: &str) -> Option<Session> {
        let now = self.clock.now();
        self.sessions.lock().get(token).filter(|s| s.expires_at > now).cloned()
    }

    /// First login round. Unknown users, wrong passwords and rejected
    /// attempts get the same failure; only a malformed attempt is an error.
    pub fn authenticate(&self, raw: &RawLoginAttempt) -> Result<Decision, RequestError> {
        let features = self.pipeline.validate_and_normalize(raw).map_err(|e| RequestError::Invalid(e.to_string()))?;
        let ip = features.ip.to_string();
        let _guard = self.lock_user(&raw.username);
        let now = self.clock.now();

        let record = self.users.get(&raw.username);
        let phc = record.as_ref().map_or(self.dummy_hash.as_str(), |r| r.password_hash.as_str());
        let password_ok = self.hashing.verify(raw.password.expose(), phc);
        let record = match record {
            Some(r) if password_ok => r,
            _ => {
                self.audit("authenticate", &raw.username, &ip, Outcome::WrongCredentials.as_str(), None);
                return Ok(Decision {
                    outcome: Outcome::WrongCredentials,
                    score: None,
                    response: AuthResponse::login_failure(),
                });
            }
        };
        let user = record.user_id();

        let snapshot = self.history.snapshot();
        let reputation = self.reputation.current();
        let ctx = snapshot.scoring_context(&user, reputation.as_ref());
        let (score, outcome) = match self.engine.evaluate(&features, &ctx) {
            Ok(r) => r,
            Err(e) => return Ok(self.internal_failure("authenticate", &raw.username, &ip, &e)),
        };
        drop(snapshot);

        let response = match outcome {
            Outcome::Success => match self.history.append(&user, now, features) {
                Ok(_) => self.issue_session(&user, now),
                Err(e) => return Ok(self.internal_failure("authenticate", &raw.username, &ip, &e)),
            },
            Outcome::Suspicious => match self.start_challenge(&record, features, now) {
                Ok(()) => AuthResponse::PasscodeRequired { message: PASSCODE_REQUIRED.into() },
                Err(e) => {
                    self.audit("authenticate", &raw.username, &ip, "challenge_failed", Some(score));
                    tracing::warn!(user = %raw.username, error = %e, "could not issue challenge");
                    return Ok(Decision { outcome, score: Some(score), response: AuthResponse::login_failure() });
                }
            },
            Outcome::Rejected | Outcome::WrongCredentials => AuthResponse::login_failure(),
        };
        self.audit("authenticate", &raw.username, &ip, outcome.as_str(), Some(score));
        Ok(Decision { outcome, score: Some(score), response })
    }

    fn start_challenge(&self, record: &UserRecord, features: NormalizedFeatures, now: i64) -> Result<(), String> {
        let mut credential = record.credential().map_err(|e| e.to_string())?;
        let before = credential.counter;
        let issued = self.challenges.issue_challenge(
            &record.user_id(),
            record.contact.as_deref(),
            &mut credential,
            features,
            self.messenger.as_ref(),
            now,
        );
        if credential.counter != before {
            // Persist the advanced counter even if delivery failed: a code is never reissued.
            if let Err(e) = self.users.update(&record.username, |u| u.hotp_counter = credential.counter) {
                self.challenges.cancel(&record.user_id());
                return Err(e.to_string());
            }
        }
        issued.map(|_| ()).map_err(|e| e.to_string())
    }

    fn internal_failure(&self, event: &str, user: &str, ip: &str, error: &dyn std::fmt::Display) -> Decision {
        tracing::error!(user, error = %error, "{event} failed internally");
        self.audit(event, user, ip, "error", None);
        Decision { outcome: Outcome::WrongCredentials, score: None, response: AuthResponse::login_failure() }
    }

    /// Second round: the passcode from the verification message. Success
    /// stores the challenged login context in the history.
    pub fn verify(&self, username: &str, passcode: &str) -> Result<Decision, RequestError> {
        if username.trim().is_empty() {
            return Err(RequestError::Invalid("username must not be empty".into()));
        }
        let _guard = self.lock_user(username);
        let now = self.clock.now();
        let failure = |can_retry| Decision {
            outcome: Outcome::WrongCredentials,
            score: None,
            response: AuthResponse::Failure { message: VERIFY_FAILURE.into(), can_retry: Some(can_retry) },
        };
        let Some(record) = self.users.get(username) else {
            self.audit("verify", username, "-", Outcome::WrongCredentials.as_str(), None);
            return Ok(failure(false));
        };
        let user = record.user_id();
        let credential = match record.credential() {
            Ok(c) => c,
            Err(e) => return Ok(self.internal_failure("verify", username, "-", &e)),
        };
        let Some(challenge) = self.challenges.verify(&user, passcode, &credential.secret, now) else {
            self.audit("verify", username, "-", Outcome::WrongCredentials.as_str(), None);
            return Ok(failure(self.challenges.active(&user, now).is_some()));
        };
        let ip = challenge.features.ip.to_string();
        if let Err(e) = self.history.append(&user, now, challenge.features) {
            return Ok(self.internal_failure("verify", username, &ip, &e));
        }
        self.audit("verify", username, &ip, Outcome::Success.as_str(), None);
        Ok(Decision { outcome: Outcome::Success, score: None, response: self.issue_session(&user, now) })
    }

    pub fn create_user(&self, username: &str, password: &str, contact: Option<&str>) -> Result<UserView, AdminError> {
        let record = new_user(&self.hashing, username, password, contact, self.clock.now())?;
        let view = UserView::from(&record);
        self.users.create(record)?;
        Ok(view)
    }

    pub fn set_contact(&self, username: &str, contact: &str) -> Result<UserView, AdminError> {
        validate_contact(contact)?;
        let record = self.users.update(username, |u| u.contact = Some(contact.trim().to_owned()))?;
        Ok(UserView::from(&record))
    }

    pub fn user(&self, username: &str) -> Option<UserView> {
        self.users.get(username).as_ref().map(UserView::from)
    }

    /// Swaps in a new reputation list; a bad list keeps the current one.
    pub fn reload_reputation(&self, source: &ReputationSource) -> Result<usize, AdminError> {
        Ok(self.reputation.refresh(source)?.len())
    }
}

pub fn is_url(source: &str) -> bool {
    source.starts_with("http://") || source.starts_with("https://")
}
