#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use rba_core::features::Secret;
use rba_core::verification::RecordingMessenger;
use rba_core::{NormalizedFeatures, RawLoginAttempt, UserId};
use rba_service::config::PasswordHashConfig;
use rba_service::{AuthService, Decision, ManualClock, ServiceConfig, Storage};

pub const ADMIN_TOKEN: &str = "test-admin-token-0123456789";
pub const CHROME: &str =
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/96.0.4664.110 Safari/537.36";
pub const FIREFOX: &str = "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:95.0) Gecko/20100101 Firefox/95.0";

/// Config with cheap password hashing, a resolver table and an admin token.
pub fn config(dir: &Path) -> ServiceConfig {
    let resolver = dir.join("prefixes.csv");
    std::fs::write(
        &resolver,
        "cidr,asn,country\n10.0.0.0/8,64500,DE\n172.16.0.0/12,64501,FR\n192.0.2.0/24,64502,US\n198.51.100.0/24,64503,JP\n",
    )
    .unwrap();
    ServiceConfig {
        data_dir: dir.join("data"),
        resolver_csv: Some(resolver),
        admin_token: Some(ADMIN_TOKEN.into()),
        audit_log: Some(dir.join("audit.log")),
        password_hash: PasswordHashConfig { memory_kib: 8, iterations: 1, parallelism: 1 },
        ..ServiceConfig::default()
    }
}

pub struct Harness {
    pub service: Arc<AuthService>,
    pub messenger: Arc<RecordingMessenger>,
    pub clock: Arc<ManualClock>,
}

pub fn harness(config: ServiceConfig, storage: Storage) -> Harness {
    let messenger = Arc::new(RecordingMessenger::new());
    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let service = AuthService::new(config, messenger.clone(), clock.clone(), storage).unwrap();
    Harness { service: Arc::new(service), messenger, clock }
}

pub fn attempt(user: &str, password: &str, ip: &str, ua: &str) -> RawLoginAttempt {
    RawLoginAttempt {
        username: user.into(),
        password: Secret::new(password),
        ip: ip.into(),
        ua: ua.into(),
        rtt_samples_ms: Vec::new(),
        passcode: None,
    }
}

impl Harness {
    pub fn login(&self, user: &str, password: &str, ip: &str, ua: &str) -> Decision {
        self.service.authenticate(&attempt(user, password, ip, ua)).unwrap()
    }

    /// The code of the last verification message.
    pub fn last_code(&self) -> String {
        let m = self.messenger.last().expect("a verification message");
        m.subject.rsplit(' ').next().unwrap().to_owned()
    }

    pub fn history_len(&self, user: &str) -> usize {
        self.service.history().user_history(&UserId::from(user)).len()
    }

    /// Other users' logins: `total` in all, `on_ip` of them from `ip`.
    pub fn populate(&self, total: usize, on_ip: usize, ip: &str) {
        for i in 0..total {
            let addr = if i < on_ip { ip.to_owned() } else { format!("172.16.{}.{}", (i / 250) % 250, i % 250 + 1) };
            let features = NormalizedFeatures {
                ip: addr.parse().unwrap(),
                asn: Some(64501),
                country: Some("FR".into()),
                ua_full: format!("background-agent/{}", i % 7),
                browser: None,
                os: None,
                device_type: Default::default(),
                rtt_ms: None,
            };
            self.service.history().append(&UserId::from(format!("bg{}", i % 400)), 0, features).unwrap();
        }
    }
}

/// A service where user `alice` has logged in twice from 10.0.0.1 and a
/// login from 10.9.9.9 (same network, seen ten times elsewhere) is suspicious.
pub fn already_seen_scenario(dir: &Path) -> Harness {
    let mut cfg = config(dir);
    cfg.risk.threshold_reauth = 0.003;
    cfg.risk.threshold_reject = 0.018;
    let h = harness(cfg, Storage::Memory);
    h.populate(10_000, 10, "10.9.9.9");
    h.service.create_user("alice", "correct horse", Some("alice@example.org")).unwrap();
    for _ in 0..2 {
        let d = h.login("alice", "correct horse", "10.0.0.1", CHROME);
        assert_eq!(d.outcome, rba_core::Outcome::Success, "{:?}", d.score);
    }
    h
}
