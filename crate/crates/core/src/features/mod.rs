//! Validation of raw login context and sub-feature derivation.

mod resolver;
mod rtt;
mod useragent;

use std::fmt;
use std::net::IpAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use self::resolver::{IpResolver, NullResolver, PrefixTableResolver};
pub use self::rtt::normalize_rtt;
pub use self::useragent::{ParsedUserAgent, RuleError, UserAgentParser};
use crate::error::FeatureError;
use crate::model::NormalizedFeatures;

/// Password wrapper that keeps the value out of logs.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

/// Login context as received from the client and transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RawLoginAttempt {
    pub username: String,
    pub password: Secret,
    pub ip: String,
    pub ua: String,
    #[serde(default)]
    pub rtt_samples_ms: Vec<f64>,
    #[serde(default)]
    pub passcode: Option<String>,
}

impl RawLoginAttempt {
    /// Raw projection of already normalized features. Normalizing it again
    /// reproduces the input.
    pub fn from_features(username: &str, features: &NormalizedFeatures) -> Self {
        RawLoginAttempt {
            username: username.to_owned(),
            password: Secret::default(),
            ip: features.ip.to_string(),
            ua: features.ua_full.clone(),
            rtt_samples_ms: features.rtt_ms.map(f64::from).into_iter().collect(),
            passcode: None,
        }
    }
}

pub fn resolve_ip(ip: &IpAddr, resolver: &dyn IpResolver) -> (Option<u32>, Option<String>) {
    resolver.resolve(ip)
}

pub fn parse_user_agent(ua: &str) -> ParsedUserAgent {
    UserAgentParser::bundled().parse(ua)
}

/// Resolver plus UA rule table; cheap to clone and share across requests.
#[derive(Clone)]
pub struct FeaturePipeline {
    resolver: Arc<dyn IpResolver>,
    ua_parser: Arc<UserAgentParser>,
}

impl fmt::Debug for FeaturePipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeaturePipeline").finish_non_exhaustive()
    }
}

impl Default for FeaturePipeline {
    fn default() -> Self {
        FeaturePipeline::new(Arc::new(NullResolver), UserAgentParser::bundled())
    }
}

impl FeaturePipeline {
    pub fn new(resolver: Arc<dyn IpResolver>, ua_parser: UserAgentParser) -> Self {
        FeaturePipeline { resolver, ua_parser: Arc::new(ua_parser) }
    }

    /// Validates the attempt and expands it into all sub-features. An
    /// unparseable address refuses the attempt before any scoring.
    pub fn validate_and_normalize(&self, raw: &RawLoginAttempt) -> Result<NormalizedFeatures, FeatureError> {
        if raw.username.trim().is_empty() {
            return Err(FeatureError::EmptyUsername);
        }
        let ip: IpAddr = raw
            .ip
            .trim()
            .parse()
            .map_err(|_| FeatureError::InvalidIp(raw.ip.clone()))?;
        let ip = canonical_ip(ip);
        let rtt_ms = normalize_rtt(&raw.rtt_samples_ms)?;
        let (asn, country) = self.resolver.resolve(&ip);
        let ua_full = raw.ua.trim().to_owned();
        let parsed = self.ua_parser.parse(&ua_full);
        Ok(NormalizedFeatures {
            ip,
            asn,
            country,
            ua_full,
            browser: parsed.browser,
            os: parsed.os,
            device_type: parsed.device_type,
            rtt_ms,
        })
    }
}

/// IPv4-mapped IPv6 addresses are folded to plain IPv4 so both spellings compare equal.
fn canonical_ip(ip: IpAddr) -> IpAddr {
    match ip {
        IpAddr::V6(v6) => v6.to_ipv4_mapped().map(IpAddr::V4).unwrap_or(ip),
        v4 => v4,
    }
}
