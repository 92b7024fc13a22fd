//! Brute-force reference scorer for tests.
//!
//! Works on plain records and recomputes every probability by looping over the
//! whole login list: no counters, no feature hierarchy types, no level lookup.
#![allow(dead_code)]

use std::net::IpAddr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rba_core::{DeviceType, NormalizedFeatures, UserId};

#[derive(Debug, Clone, PartialEq)]
pub struct Login {
    pub user: String,
    pub ip: String,
    pub asn: Option<u32>,
    pub country: Option<String>,
    pub ua: String,
    pub browser: Option<String>,
    pub os: Option<String>,
    pub device: Option<String>,
    pub rtt: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct Params {
    pub ip_weights: [f64; 3],
    pub ua_weights: [f64; 4],
    pub alpha: f64,
    pub user_attack_prior: f64,
    pub use_rtt: bool,
    pub attack: Option<(f64, f64)>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            ip_weights: [0.6, 0.3, 0.1],
            ua_weights: [0.5, 0.25, 0.15, 0.1],
            alpha: 1.0,
            user_attack_prior: 1.0,
            use_rtt: true,
            attack: None,
        }
    }
}

fn same<V: PartialEq>(a: &Option<V>, b: &Option<V>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if x == y)
}

/// Score of `attempt` against `earlier`, the full list of logins stored
/// before it. `listed` says whether the attempt IP is on the reputation list.
/// Returns `None` when the user has no earlier login.
pub fn score(attempt: &Login, earlier: &[Login], p: &Params, listed: bool) -> Option<f64> {
    let mine: Vec<&Login> = earlier.iter().filter(|l| l.user == attempt.user).collect();
    if mine.is_empty() {
        return None;
    }
    let n = mine.len() as f64;
    let total = earlier.len() as f64;

    let mut s = 1.0;

    // IP: ip, asn, country.
    let mut m = [0.0; 3];
    for l in &mine {
        if l.ip == attempt.ip {
            m[0] += 1.0;
        }
        if same(&l.asn, &attempt.asn) {
            m[1] += 1.0;
        }
        if same(&l.country, &attempt.country) {
            m[2] += 1.0;
        }
    }
    let user_ip = p.ip_weights[0] * m[0] / n + p.ip_weights[1] * m[1] / n + p.ip_weights[2] * m[2] / n;
    if user_ip == 0.0 {
        return Some(f64::INFINITY);
    }
    let seen = earlier.iter().filter(|l| l.ip == attempt.ip).count() as f64;
    let attack = match p.attack {
        None => 1.0,
        Some((hit, miss)) => {
            if listed {
                hit
            } else {
                miss
            }
        }
    };
    s *= attack * ((seen + p.alpha) / (total + p.alpha)) / user_ip;

    // User agent: full string, browser, os, device.
    let mut m = [0.0; 4];
    for l in &mine {
        if l.ua == attempt.ua {
            m[0] += 1.0;
        }
        if same(&l.browser, &attempt.browser) {
            m[1] += 1.0;
        }
        if same(&l.os, &attempt.os) {
            m[2] += 1.0;
        }
        if same(&l.device, &attempt.device) {
            m[3] += 1.0;
        }
    }
    let mut user_ua = 0.0;
    for i in 0..4 {
        user_ua += p.ua_weights[i] * m[i] / n;
    }
    if user_ua == 0.0 {
        return Some(f64::INFINITY);
    }
    let seen = earlier.iter().filter(|l| l.ua == attempt.ua).count() as f64;
    s *= ((seen + p.alpha) / (total + p.alpha)) / user_ua;

    // RTT, only when measured.
    if p.use_rtt {
        if let Some(rtt) = attempt.rtt {
            let hits = mine.iter().filter(|l| l.rtt == Some(rtt)).count() as f64;
            if hits == 0.0 {
                return Some(f64::INFINITY);
            }
            let seen = earlier.iter().filter(|l| l.rtt == Some(rtt)).count() as f64;
            s *= ((seen + p.alpha) / (total + p.alpha)) / (hits / n);
        }
    }

    Some(s * p.user_attack_prior / (n / total))
}

pub fn user_id(login: &Login) -> UserId {
    UserId::from(login.user.as_str())
}

pub fn to_features(login: &Login) -> NormalizedFeatures {
    let ip: IpAddr = login.ip.parse().expect("generated address");
    NormalizedFeatures {
        ip,
        asn: login.asn,
        country: login.country.clone(),
        ua_full: login.ua.clone(),
        browser: login.browser.clone(),
        os: login.os.clone(),
        device_type: match login.device.as_deref() {
            None => DeviceType::Unknown,
            Some(label) => DeviceType::from_label(label),
        },
        rtt_ms: login.rtt,
    }
}

/// Per-user "home" context from which logins drift.
struct Profile {
    ips: Vec<String>,
    asns: Vec<Option<u32>>,
    countries: Vec<Option<String>>,
    uas: Vec<(String, Option<String>, Option<String>, Option<String>)>,
    rtts: Vec<Option<u32>>,
}

const DEVICES: [&str; 4] = ["desktop", "mobile", "tablet", "bot"];
const COUNTRIES: [&str; 6] = ["DE", "NO", "US", "FR", "BR", "JP"];

fn random_ua(rng: &mut StdRng) -> (String, Option<String>, Option<String>, Option<String>) {
    let browser = ["Firefox", "Chrome", "Safari", "Edge"][rng.random_range(0..4)];
    let major = rng.random_range(60..70);
    let os = ["Windows 10", "Android 11", "iOS 14", "Mac OS X 10.15"][rng.random_range(0..4)];
    let ua = format!("Mozilla/5.0 ({os}) {browser}/{major}.0.{}", rng.random_range(0..3));
    let known = |rng: &mut StdRng, v: String| if rng.random_bool(0.9) { Some(v) } else { None };
    let b = known(rng, format!("{browser} {major}"));
    let o = known(rng, os.to_owned());
    let device = DEVICES[rng.random_range(0..DEVICES.len())].to_owned();
    let d = known(rng, device);
    (ua, b, o, d)
}

fn random_ip(rng: &mut StdRng) -> String {
    if rng.random_bool(0.1) {
        format!("2001:db8:{:x}::{:x}", rng.random_range(0..8u16), rng.random_range(1..16u16))
    } else {
        format!("10.{}.{}.{}", rng.random_range(0..4), rng.random_range(0..4), rng.random_range(1..8))
    }
}

fn profile(rng: &mut StdRng) -> Profile {
    let k = rng.random_range(1..4);
    Profile {
        ips: (0..k).map(|_| random_ip(rng)).collect(),
        asns: (0..k).map(|_| if rng.random_bool(0.9) { Some(rng.random_range(64496..64504)) } else { None }).collect(),
        countries: (0..k)
            .map(|_| if rng.random_bool(0.9) { Some(COUNTRIES[rng.random_range(0..COUNTRIES.len())].to_owned()) } else { None })
            .collect(),
        uas: (0..rng.random_range(1..3)).map(|_| random_ua(rng)).collect(),
        rtts: (0..k).map(|_| if rng.random_bool(0.8) { Some(rng.random_range(1..20) * 10) } else { None }).collect(),
    }
}

fn pick<T: Clone>(rng: &mut StdRng, v: &[T]) -> T {
    v[rng.random_range(0..v.len())].clone()
}

/// `n` logins spread over `users` accounts. Most logins repeat a user's
/// usual context; `churn` is the chance that a feature is drawn fresh.
pub fn dataset(seed: u64, users: usize, n: usize, churn: f64) -> Vec<Login> {
    let mut rng = StdRng::seed_from_u64(seed);
    let profiles: Vec<Profile> = (0..users).map(|_| profile(&mut rng)).collect();
    (0..n)
        .map(|_| {
            let u = rng.random_range(0..users);
            let pr = &profiles[u];
            let fresh = |rng: &mut StdRng| rng.random_bool(churn);
            let ip = if fresh(&mut rng) { random_ip(&mut rng) } else { pick(&mut rng, &pr.ips) };
            let asn = if fresh(&mut rng) { Some(rng.random_range(64496..64520)) } else { pick(&mut rng, &pr.asns) };
            let country = if fresh(&mut rng) {
                Some(COUNTRIES[rng.random_range(0..COUNTRIES.len())].to_owned())
            } else {
                pick(&mut rng, &pr.countries)
            };
            let (ua, browser, os, device) = if fresh(&mut rng) { random_ua(&mut rng) } else { pick(&mut rng, &pr.uas) };
            let rtt = if fresh(&mut rng) { Some(rng.random_range(1..40) * 10) } else { pick(&mut rng, &pr.rtts) };
            Login { user: format!("user{u}"), ip, asn, country, ua, browser, os, device, rtt }
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() / scale <= tol
}
