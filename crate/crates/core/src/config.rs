//! Risk engine configuration.
//!
//! The on-disk form is TOML with one key per field:
//!
//! ```toml
//! threshold_reauth = 0.003
//! threshold_reject = 0.018          # `inf` disables rejection
//! ip_weights = [0.6, 0.3, 0.1]      # ip, asn, country
//! ua_weights = [0.5, 0.25, 0.15, 0.1] # full UA, browser, os, device type
//! global_smoothing_alpha = 1.0
//! user_attack_prior = 1.0
//! attack_data_enabled = false
//! rep_hit_prob = 1.0
//! rep_miss_prob = 0.1
//! history_cap = 100
//! ```
//!
//! Missing keys take the defaults shown above.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::scalar::Scalar;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[serde(bound = "T: Scalar + Serialize + DeserializeOwned")]
pub struct RiskConfig<T = f64> {
    /// Scores strictly below this succeed without re-authentication.
    pub threshold_reauth: T,
    /// Scores at or above this are rejected; `+inf` disables rejection.
    pub threshold_reject: T,
    /// Interpolation weights for ip, asn, country.
    pub ip_weights: [T; 3],
    /// Interpolation weights for full UA, browser, os, device type.
    pub ua_weights: [T; 4],
    /// Additive smoothing on the global (all users) probability.
    pub global_smoothing_alpha: T,
    /// Constant estimate of p(user | attack).
    pub user_attack_prior: T,
    pub attack_data_enabled: bool,
    /// Attack probability of an IP on the reputation list.
    pub rep_hit_prob: T,
    /// Attack probability of an IP not on the reputation list.
    pub rep_miss_prob: T,
    /// Maximum stored entries per user.
    pub history_cap: usize,
}

impl<T: Scalar> Default for RiskConfig<T> {
    fn default() -> Self {
        let c = T::from_config;
        RiskConfig {
            threshold_reauth: c(0.003),
            threshold_reject: c(0.018),
            ip_weights: [c(0.6), c(0.3), c(0.1)],
            ua_weights: [c(0.5), c(0.25), c(0.15), c(0.1)],
            global_smoothing_alpha: c(1.0),
            user_attack_prior: c(1.0),
            attack_data_enabled: false,
            rep_hit_prob: c(1.0),
            rep_miss_prob: c(0.1),
            history_cap: 100,
        }
    }
}

impl<T: Scalar + Serialize + DeserializeOwned> RiskConfig<T> {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: RiskConfig<T> = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("risk config serializes")
    }
}

impl<T: Scalar> RiskConfig<T> {
    /// Same configuration with rejection disabled.
    pub fn without_rejection(mut self) -> Self {
        self.threshold_reject = T::infinity();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &'static str, v: T| {
            if v > T::zero() && !v.is_nan() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("threshold_reauth", self.threshold_reauth)?;
        positive("threshold_reject", self.threshold_reject)?;
        if !self.threshold_reauth.is_finite() {
            return Err(ConfigError::Invalid("threshold_reauth must be finite".into()));
        }
        if self.threshold_reauth > self.threshold_reject {
            return Err(ConfigError::Invalid(format!(
                "threshold_reauth ({}) exceeds threshold_reject ({})",
                self.threshold_reauth, self.threshold_reject
            )));
        }
        check_weights("ip_weights", &self.ip_weights)?;
        check_weights("ua_weights", &self.ua_weights)?;
        if self.global_smoothing_alpha.is_nan()
            || self.global_smoothing_alpha < T::zero()
            || !self.global_smoothing_alpha.is_finite()
        {
            return Err(ConfigError::Invalid("global_smoothing_alpha must be finite and nonnegative".into()));
        }
        positive("user_attack_prior", self.user_attack_prior)?;
        for (name, p) in [("rep_hit_prob", self.rep_hit_prob), ("rep_miss_prob", self.rep_miss_prob)] {
            if !(p > T::zero() && p <= T::one()) {
                return Err(ConfigError::Invalid(format!("{name} must lie in (0, 1], got {p}")));
            }
        }
        if self.history_cap == 0 {
            return Err(ConfigError::Invalid("history_cap must be positive".into()));
        }
        Ok(())
    }
}

fn check_weights<T: Scalar>(name: &str, weights: &[T]) -> Result<(), ConfigError> {
    if weights.iter().any(|w| w.is_nan() || *w < T::zero()) {
        return Err(ConfigError::Invalid(format!("{name} must be nonnegative")));
    }
    let sum: f64 = weights.iter().map(|w| w.to_f64_lossy()).sum();
    // f32 weights cannot hit 1e-9, so allow their own rounding on top.
    let tolerance = WEIGHT_SUM_TOLERANCE.max(T::epsilon().to_f64_lossy() * weights.len() as f64);
    if (sum - 1.0).abs() > tolerance {
        return Err(ConfigError::Invalid(format!("{name} must sum to 1, got {sum}")));
    }
    Ok(())
}
