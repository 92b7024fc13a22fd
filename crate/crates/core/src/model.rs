//! Domain types shared by every stage of the login flow.

use std::cmp::Ordering;
use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::config::RiskConfig;
use crate::scalar::Scalar;

/// Stable user identifier used as the key of histories and counters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

impl From<String> for UserId {
    fn from(s: String) -> Self {
        UserId(s)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Coarse device class derived from the user-agent string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeviceType {
    Desktop,
    Mobile,
    Tablet,
    Bot,
    Other,
    #[default]
    Unknown,
}

impl DeviceType {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceType::Desktop => "desktop",
            DeviceType::Mobile => "mobile",
            DeviceType::Tablet => "tablet",
            DeviceType::Bot => "bot",
            DeviceType::Other => "other",
            DeviceType::Unknown => "unknown",
        }
    }

    /// Lenient parse used for dataset columns; anything unrecognised is `Other`,
    /// blanks and "unknown" are `Unknown`.
    pub fn from_label(label: &str) -> DeviceType {
        match label.trim().to_ascii_lowercase().as_str() {
            "desktop" => DeviceType::Desktop,
            "mobile" => DeviceType::Mobile,
            "tablet" => DeviceType::Tablet,
            "bot" => DeviceType::Bot,
            "" | "unknown" | "-" => DeviceType::Unknown,
            _ => DeviceType::Other,
        }
    }
}

impl fmt::Display for DeviceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One granularity level of a feature. IP and UA each expand into several
/// levels, ordered from most to least specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Ip,
    Asn,
    Country,
    UaFull,
    Browser,
    Os,
    DeviceType,
    Rtt,
}

impl Level {
    pub const ALL: [Level; 8] = [
        Level::Ip,
        Level::Asn,
        Level::Country,
        Level::UaFull,
        Level::Browser,
        Level::Os,
        Level::DeviceType,
        Level::Rtt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Ip => "ip",
            Level::Asn => "asn",
            Level::Country => "country",
            Level::UaFull => "ua_full",
            Level::Browser => "browser",
            Level::Os => "os",
            Level::DeviceType => "device_type",
            Level::Rtt => "rtt",
        }
    }
}

/// Borrowed view of a single level value. `None` at the call site means unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRef<'a> {
    Ip(IpAddr),
    Asn(u32),
    Text(&'a str),
    Device(DeviceType),
    Rtt(u32),
}

impl FeatureRef<'_> {
    pub fn to_owned_value(self) -> FeatureValue {
        match self {
            FeatureRef::Ip(ip) => FeatureValue::Ip(ip),
            FeatureRef::Asn(asn) => FeatureValue::Asn(asn),
            FeatureRef::Text(s) => FeatureValue::Text(s.to_owned()),
            FeatureRef::Device(d) => FeatureValue::Device(d),
            FeatureRef::Rtt(ms) => FeatureValue::Rtt(ms),
        }
    }
}

/// Owned level value, used as a counter key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureValue {
    Ip(IpAddr),
    Asn(u32),
    Text(String),
    Device(DeviceType),
    Rtt(u32),
}

/// Validated login context with all sub-features materialized.
///
/// Invariants: `rtt_ms` is a multiple of ten; `asn`/`country` are only set when
/// the IP resolved; `browser`/`os`/`device_type` are only known when the UA parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedFeatures {
    pub ip: IpAddr,
    pub asn: Option<u32>,
    pub country: Option<String>,
    pub ua_full: String,
    pub browser: Option<String>,
    pub os: Option<String>,
    pub device_type: DeviceType,
    pub rtt_ms: Option<u32>,
}

impl NormalizedFeatures {
    /// Features of a bare IP with an empty, unparsed user agent.
    pub fn from_ip(ip: IpAddr) -> Self {
        NormalizedFeatures {
            ip,
            asn: None,
            country: None,
            ua_full: String::new(),
            browser: None,
            os: None,
            device_type: DeviceType::Unknown,
            rtt_ms: None,
        }
    }

    /// Value at `level`, or `None` when it is unknown. Unknown values never match.
    pub fn value(&self, level: Level) -> Option<FeatureRef<'_>> {
        match level {
            Level::Ip => Some(FeatureRef::Ip(self.ip)),
            Level::Asn => self.asn.map(FeatureRef::Asn),
            Level::Country => self.country.as_deref().map(FeatureRef::Text),
            Level::UaFull => Some(FeatureRef::Text(&self.ua_full)),
            Level::Browser => self.browser.as_deref().map(FeatureRef::Text),
            Level::Os => self.os.as_deref().map(FeatureRef::Text),
            Level::DeviceType => match self.device_type {
                DeviceType::Unknown => None,
                d => Some(FeatureRef::Device(d)),
            },
            Level::Rtt => self.rtt_ms.map(FeatureRef::Rtt),
        }
    }

    pub fn owned_value(&self, level: Level) -> Option<FeatureValue> {
        self.value(level).map(FeatureRef::to_owned_value)
    }
}

impl AsRef<NormalizedFeatures> for NormalizedFeatures {
    fn as_ref(&self) -> &NormalizedFeatures {
        self
    }
}

/// Risk score: a nonnegative number, possibly `+inf` when the user has never
/// shown anything resembling one of the attempt's feature values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RiskScore<T = f64>(T);

impl<T: Scalar> RiskScore<T> {
    /// Returns `None` for negative or NaN values.
    pub fn new(value: T) -> Option<Self> {
        if value.is_nan() || value < T::zero() {
            None
        } else {
            Some(RiskScore(value))
        }
    }

    pub fn zero() -> Self {
        RiskScore(T::zero())
    }

    pub fn infinite() -> Self {
        RiskScore(T::infinity())
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl<T: Scalar> PartialOrd for RiskScore<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl<T: Scalar> fmt::Display for RiskScore<T> {
    /// Ten decimal places, the precision used by reference score files.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.10}", self.0)
        }
    }
}

/// Result of one login attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Suspicious,
    Rejected,
    WrongCredentials,
}

impl Outcome {
    /// Rank along Success < Suspicious < Rejected. Wrong credentials never come
    /// out of scoring and rank with rejection.
    pub fn severity(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Suspicious => 1,
            Outcome::Rejected | Outcome::WrongCredentials => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Suspicious => "suspicious",
            Outcome::Rejected => "rejected",
            Outcome::WrongCredentials => "wrong_credentials",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a score onto the three scoring outcomes.
///
/// Below the re-authentication threshold is a success. At or above the
/// rejection threshold is a rejection, except that an infinite score never
/// reaches an infinite rejection threshold: that is how rejection is disabled.
pub fn classify<T: Scalar>(score: RiskScore<T>, config: &RiskConfig<T>) -> Outcome {
    let value = score.value();
    if value < config.threshold_reauth {
        return Outcome::Success;
    }
    let reject = config.threshold_reject;
    if reject.is_infinite() {
        return Outcome::Suspicious;
    }
    if value >= reject {
        Outcome::Rejected
    } else {
        Outcome::Suspicious
    }
}
