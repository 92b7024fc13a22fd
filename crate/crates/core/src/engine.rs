//! Risk score computation.
//!
//! For a user `u` and an attempt with feature values `FV^1..FV^d` the score is
//!
//! ```text
//! S = prod_k( p(attack | FV^k) * p(FV^k) / p(FV^k | u, legit) ) * p(u | attack) / p(u | legit)
//! ```
//!
//! * `p(FV^k | u, legit)` interpolates linearly over the feature's granularity
//!   levels: each level contributes its weight times the fraction of the
//!   user's history entries sharing the attempt's value at that level.
//! * `p(FV^k)` counts only the most specific value over all stored logins,
//!   with additive smoothing `alpha`.
//! * `p(u | legit)` is the user's share of all stored logins.
//!
//! A feature whose most specific value is absent (no RTT measured) drops out
//! of the product. A zero user probability makes the score `+inf`.

use crate::config::RiskConfig;
use crate::counters::GlobalCounters;
use crate::error::{ConfigError, EngineError};
use crate::model::{classify, FeatureValue, Level, NormalizedFeatures, Outcome, RiskScore, UserId};
use crate::reputation::IpReputation;
use crate::scalar::Scalar;

/// A feature and its granularity levels, most specific first, with one
/// interpolation weight per level.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHierarchy<T = f64> {
    name: String,
    levels: Vec<Level>,
    weights: Vec<T>,
}

impl<T: Scalar> FeatureHierarchy<T> {
    pub fn new(name: &str, levels: Vec<Level>, weights: Vec<T>) -> Result<Self, ConfigError> {
        if levels.is_empty() || levels.len() != weights.len() {
            return Err(ConfigError::Invalid(format!(
                "feature {name}: {} levels but {} weights",
                levels.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| w.is_nan() || *w < T::zero()) {
            return Err(ConfigError::Invalid(format!("feature {name}: negative weight")));
        }
        let sum: f64 = weights.iter().map(|w| w.to_f64_lossy()).sum();
        let tolerance = 1e-9f64.max(T::epsilon().to_f64_lossy() * weights.len() as f64);
        if (sum - 1.0).abs() > tolerance {
            return Err(ConfigError::Invalid(format!("feature {name}: weights sum to {sum}")));
        }
        Ok(FeatureHierarchy { name: name.to_owned(), levels, weights })
    }

    /// IP address, ASN, country.
    pub fn ip(config: &RiskConfig<T>) -> Self {
        FeatureHierarchy {
            name: "ip".into(),
            levels: vec![Level::Ip, Level::Asn, Level::Country],
            weights: config.ip_weights.to_vec(),
        }
    }

    /// Full UA string, browser, OS, device type.
    pub fn user_agent(config: &RiskConfig<T>) -> Self {
        FeatureHierarchy {
            name: "ua".into(),
            levels: vec![Level::UaFull, Level::Browser, Level::Os, Level::DeviceType],
            weights: config.ua_weights.to_vec(),
        }
    }

    /// Rounded RTT, a single level.
    pub fn rtt() -> Self {
        FeatureHierarchy { name: "rtt".into(), levels: vec![Level::Rtt], weights: vec![T::one()] }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// The most specific level, the only one compared globally.
    pub fn origin(&self) -> Level {
        self.levels[0]
    }
}

/// The features multiplied into a score.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T = f64> {
    features: Vec<FeatureHierarchy<T>>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(features: Vec<FeatureHierarchy<T>>) -> Self {
        FeatureSet { features }
    }

    /// IP, user agent and RTT.
    pub fn standard(config: &RiskConfig<T>) -> Self {
        FeatureSet::new(vec![FeatureHierarchy::ip(config), FeatureHierarchy::user_agent(config), FeatureHierarchy::rtt()])
    }

    /// IP and user agent only.
    pub fn ip_and_user_agent(config: &RiskConfig<T>) -> Self {
        FeatureSet::new(vec![FeatureHierarchy::ip(config), FeatureHierarchy::user_agent(config)])
    }

    pub fn features(&self) -> &[FeatureHierarchy<T>] {
        &self.features
    }
}

/// Interpolated probability that the user produces the attempt's value of
/// `feature`. Unknown values, on either side, never match.
pub fn user_feature_prob<T, E>(
    feature: &FeatureHierarchy<T>,
    attempt: &NormalizedFeatures,
    user_history: &[E],
) -> Result<T, EngineError>
where
    T: Scalar,
    E: AsRef<NormalizedFeatures>,
{
    if user_history.is_empty() {
        return Err(EngineError::EmptyHistory);
    }
    let n = T::from_count(user_history.len() as u64);
    let mut prob = T::zero();
    for (&level, &weight) in feature.levels.iter().zip(&feature.weights) {
        let Some(wanted) = attempt.value(level) else { continue };
        let matches = user_history
            .iter()
            .filter(|e| e.as_ref().value(level) == Some(wanted))
            .count();
        prob = prob + weight * T::from_count(matches as u64) / n;
    }
    Ok(prob)
}

/// Smoothed share of all stored logins carrying `value` at `level`:
/// `(count + alpha) / (total + alpha)`.
pub fn global_feature_prob<T: Scalar>(
    level: Level,
    value: Option<&FeatureValue>,
    counters: &GlobalCounters,
    alpha: T,
) -> Result<T, EngineError> {
    let total = counters.total();
    if total == 0 && alpha == T::zero() {
        return Err(EngineError::EmptyGlobalHistory);
    }
    let count = value.map_or(0, |v| counters.count(level, v));
    Ok((T::from_count(count) + alpha) / (T::from_count(total) + alpha))
}

/// The user's share of all stored logins.
pub fn user_prior<T: Scalar>(user: &UserId, counters: &GlobalCounters) -> Result<T, EngineError> {
    let count = counters.user_count(user);
    if count == 0 {
        return Err(EngineError::UnknownUser);
    }
    Ok(T::from_count(count) / T::from_count(counters.total()))
}

/// Attack probability of one feature value. Only the IP feature consults the
/// reputation list, and only when attack data is enabled.
pub fn attack_prob<T: Scalar>(
    feature: &FeatureHierarchy<T>,
    attempt: &NormalizedFeatures,
    reputation: &dyn IpReputation,
    config: &RiskConfig<T>,
) -> T {
    if !config.attack_data_enabled || feature.origin() != Level::Ip {
        return T::one();
    }
    if reputation.is_listed(&attempt.ip) {
        config.rep_hit_prob
    } else {
        config.rep_miss_prob
    }
}

/// Everything a score is computed against, captured at one point in time.
pub struct ScoringContext<'a, E> {
    pub user: &'a UserId,
    /// The user's stored logins, strictly before this attempt.
    pub history: &'a [E],
    pub counters: &'a GlobalCounters,
    pub reputation: &'a dyn IpReputation,
}

/// Configuration plus feature set; the entry point used by the service and the replay harness.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEngine<T = f64> {
    config: RiskConfig<T>,
    features: FeatureSet<T>,
}

impl<T: Scalar> RiskEngine<T> {
    pub fn new(config: RiskConfig<T>, features: FeatureSet<T>) -> Self {
        RiskEngine { config, features }
    }

    /// Standard IP, UA and RTT features.
    pub fn standard(config: RiskConfig<T>) -> Self {
        let features = FeatureSet::standard(&config);
        RiskEngine::new(config, features)
    }

    pub fn config(&self) -> &RiskConfig<T> {
        &self.config
    }

    pub fn features(&self) -> &FeatureSet<T> {
        &self.features
    }

    /// Risk score of `attempt`. Requires at least one stored login for the user.
    pub fn risk_score<E: AsRef<NormalizedFeatures>>(
        &self,
        attempt: &NormalizedFeatures,
        ctx: &ScoringContext<'_, E>,
    ) -> Result<RiskScore<T>, EngineError> {
        if ctx.history.is_empty() {
            return Err(EngineError::EmptyHistory);
        }
        let prior = user_prior::<T>(ctx.user, ctx.counters)?;
        let mut product = T::one();
        for feature in self.features.features() {
            let origin = feature.origin();
            let Some(value) = attempt.owned_value(origin) else { continue };
            let user_prob = user_feature_prob(feature, attempt, ctx.history)?;
            if user_prob == T::zero() {
                return Ok(RiskScore::infinite());
            }
            let global = global_feature_prob(origin, Some(&value), ctx.counters, self.config.global_smoothing_alpha)?;
            let attack = attack_prob(feature, attempt, ctx.reputation, &self.config);
            product = product * attack * global / user_prob;
        }
        let score = product * self.config.user_attack_prior / prior;
        Ok(RiskScore::new(score).expect("score of nonnegative factors is nonnegative"))
    }

    /// Scores and classifies. A user without stored logins gets score 0 and
    /// succeeds: there is nothing to compare against yet.
    pub fn evaluate<E: AsRef<NormalizedFeatures>>(
        &self,
        attempt: &NormalizedFeatures,
        ctx: &ScoringContext<'_, E>,
    ) -> Result<(RiskScore<T>, Outcome), EngineError> {
        if ctx.history.is_empty() {
            return Ok((RiskScore::zero(), Outcome::Success));
        }
        let score = self.risk_score(attempt, ctx)?;
        Ok((score, classify(score, &self.config)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reputation::{NoReputation, ReputationSet};

    fn ipf(ip: &str, asn: Option<u32>, country: Option<&str>) -> NormalizedFeatures {
        NormalizedFeatures {
            asn,
            country: country.map(str::to_owned),
            ..NormalizedFeatures::from_ip(ip.parse().unwrap())
        }
    }

    fn ip_feature() -> FeatureHierarchy {
        FeatureHierarchy::ip(&RiskConfig::default())
    }

    #[test]
    fn user_prob_fully_matched() {
        let a = ipf("192.0.2.1", Some(1), Some("DE"));
        let history = vec![a.clone(); 4];
        let p: f64 = user_feature_prob(&ip_feature(), &a, &history).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn user_prob_partial_levels() {
        // New IP, ASN matches two of four entries, country all four.
        let history = vec![
            ipf("192.0.2.1", Some(1), Some("DE")),
            ipf("192.0.2.2", Some(1), Some("DE")),
            ipf("192.0.2.3", Some(2), Some("DE")),
            ipf("192.0.2.4", Some(3), Some("DE")),
        ];
        let attempt = ipf("198.51.100.1", Some(1), Some("DE"));
        let p: f64 = user_feature_prob(&ip_feature(), &attempt, &history).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn user_prob_nothing_matches() {
        let history = vec![ipf("192.0.2.1", Some(1), Some("DE"))];
        let attempt = ipf("198.51.100.1", Some(2), Some("FR"));
        assert_eq!(user_feature_prob(&ip_feature(), &attempt, &history).unwrap(), 0.0);
    }

    #[test]
    fn unknown_values_never_match() {
        let history = vec![ipf("192.0.2.1", None, None)];
        let attempt = ipf("198.51.100.1", None, None);
        assert_eq!(user_feature_prob(&ip_feature(), &attempt, &history).unwrap(), 0.0);
    }

    #[test]
    fn user_prob_needs_history() {
        let empty: Vec<NormalizedFeatures> = vec![];
        let r: Result<f64, _> = user_feature_prob(&ip_feature(), &ipf("192.0.2.1", None, None), &empty);
        assert_eq!(r, Err(EngineError::EmptyHistory));
    }

    fn counters_with(ips: &[(&str, &str)]) -> GlobalCounters {
        let logins: Vec<(UserId, NormalizedFeatures)> =
            ips.iter().map(|(u, ip)| (UserId::from(*u), ipf(ip, None, None))).collect();
        GlobalCounters::recount(logins.iter().map(|(u, f)| (u, f)))
    }

    #[test]
    fn global_prob_counts_and_smoothing() {
        let c = counters_with(&[("a", "192.0.2.1"), ("a", "192.0.2.1"), ("b", "192.0.2.2"), ("b", "192.0.2.3")]);
        let seen = FeatureValue::Ip("192.0.2.1".parse().unwrap());
        assert_eq!(global_feature_prob(Level::Ip, Some(&seen), &c, 0.0).unwrap(), 0.5);

        let c4 = counters_with(&[("a", "192.0.2.1"); 4]);
        assert_eq!(global_feature_prob(Level::Ip, Some(&seen), &c4, 0.0).unwrap(), 1.0);

        let hundred: Vec<(&str, &str)> = vec![("a", "192.0.2.9"); 100];
        let c100 = counters_with(&hundred);
        assert_eq!(global_feature_prob(Level::Ip, Some(&seen), &c100, 1.0).unwrap(), 1.0 / 101.0);
    }

    #[test]
    fn global_prob_empty_store() {
        let c = GlobalCounters::new();
        assert_eq!(global_feature_prob::<f64>(Level::Ip, None, &c, 1.0).unwrap(), 1.0);
        assert_eq!(global_feature_prob::<f64>(Level::Ip, None, &c, 0.0), Err(EngineError::EmptyGlobalHistory));
    }

    #[test]
    fn user_prior_ratios() {
        let c = counters_with(&[("a", "192.0.2.1"), ("a", "192.0.2.1"), ("b", "192.0.2.2"), ("b", "192.0.2.3")]);
        assert_eq!(user_prior::<f64>(&"a".into(), &c).unwrap(), 0.5);
        assert_eq!(user_prior::<f64>(&"zed".into(), &c), Err(EngineError::UnknownUser));

        let all = counters_with(&[("a", "192.0.2.1"); 3]);
        assert_eq!(user_prior::<f64>(&"a".into(), &all).unwrap(), 1.0);

        let mut many: Vec<(&str, &str)> = vec![("b", "192.0.2.1"); 999];
        many.push(("a", "192.0.2.1"));
        assert_eq!(user_prior::<f64>(&"a".into(), &counters_with(&many)).unwrap(), 0.001);
    }

    #[test]
    fn attack_prob_modes() {
        let listed = ReputationSet::parse_list("192.0.2.0/24\n", "t").unwrap();
        let attempt = ipf("192.0.2.1", None, None);
        let unlisted = ipf("203.0.113.1", None, None);
        let disabled = RiskConfig::default();
        assert_eq!(attack_prob(&ip_feature(), &attempt, &listed, &disabled), 1.0);

        let enabled = RiskConfig { attack_data_enabled: true, ..RiskConfig::default() };
        assert_eq!(attack_prob(&ip_feature(), &attempt, &listed, &enabled), 1.0);
        assert_eq!(attack_prob(&ip_feature(), &unlisted, &listed, &enabled), 0.1);
        let ua = FeatureHierarchy::user_agent(&enabled);
        assert_eq!(attack_prob(&ua, &unlisted, &listed, &enabled), 1.0);
    }

    #[test]
    fn toy_score_is_one() {
        // User history: two logins equal to the attempt; 2 of 4 global logins carry its IP.
        let cfg = RiskConfig { global_smoothing_alpha: 0.0, ..RiskConfig::default() };
        let engine = RiskEngine::new(cfg.clone(), FeatureSet::new(vec![FeatureHierarchy::ip(&cfg)]));
        let a = ipf("192.0.2.1", Some(1), Some("DE"));
        let history = vec![a.clone(), a.clone()];
        let c = counters_with(&[("u", "192.0.2.1"), ("u", "192.0.2.1"), ("v", "192.0.2.2"), ("v", "192.0.2.3")]);
        let user = UserId::from("u");
        let ctx = ScoringContext { user: &user, history: &history, counters: &c, reputation: &NoReputation };
        let score = engine.risk_score(&a, &ctx).unwrap();
        assert!((score.value() - 1.0_f64).abs() < 1e-12, "{score}");
        assert_eq!(engine.evaluate(&a, &ctx).unwrap().1, Outcome::Rejected);

        let lenient = RiskEngine::new(cfg.clone().without_rejection(), engine.features().clone());
        assert_eq!(lenient.evaluate(&a, &ctx).unwrap().1, Outcome::Suspicious);
    }

    #[test]
    fn unseen_everywhere_is_infinite() {
        let cfg = RiskConfig::<f64>::default();
        let engine = RiskEngine::standard(cfg);
        let history = vec![ipf("192.0.2.1", Some(1), Some("DE"))];
        let mut attempt = ipf("198.51.100.1", Some(2), Some("FR"));
        attempt.ua_full = "x".into();
        let c = counters_with(&[("u", "192.0.2.1")]);
        let user = UserId::from("u");
        let ctx = ScoringContext { user: &user, history: &history, counters: &c, reputation: &NoReputation };
        assert!(engine.risk_score(&attempt, &ctx).unwrap().is_infinite());
    }

    #[test]
    fn first_login_scores_zero() {
        let engine = RiskEngine::standard(RiskConfig::<f64>::default());
        let none: Vec<NormalizedFeatures> = vec![];
        let user = UserId::from("new");
        let c = GlobalCounters::new();
        let ctx = ScoringContext { user: &user, history: &none, counters: &c, reputation: &NoReputation };
        let (score, outcome) = engine.evaluate(&ipf("192.0.2.1", None, None), &ctx).unwrap();
        assert_eq!(score.value(), 0.0);
        assert_eq!(outcome, Outcome::Success);
        assert_eq!(engine.risk_score(&ipf("192.0.2.1", None, None), &ctx), Err(EngineError::EmptyHistory));
    }

    #[test]
    fn absent_rtt_drops_out() {
        let cfg = RiskConfig::<f64>::default();
        let full = RiskEngine::standard(cfg.clone());
        let reduced = RiskEngine::new(cfg.clone(), FeatureSet::ip_and_user_agent(&cfg));
        let mut seen = ipf("192.0.2.1", Some(1), Some("DE"));
        seen.rtt_ms = Some(40);
        let history = vec![seen.clone(), ipf("192.0.2.2", Some(1), Some("DE"))];
        let user = UserId::from("u");
        let counters = GlobalCounters::recount(history.iter().map(|f| (&user, f)));
        let ctx = ScoringContext { user: &user, history: &history, counters: &counters, reputation: &NoReputation };
        let attempt = ipf("192.0.2.2", Some(1), Some("DE"));
        assert_eq!(full.risk_score(&attempt, &ctx).unwrap(), reduced.risk_score(&attempt, &ctx).unwrap());
    }

    #[test]
    fn single_precision_engine() {
        let cfg = RiskConfig::<f32>::default();
        let engine = RiskEngine::standard(cfg);
        let a = ipf("192.0.2.1", Some(1), Some("DE"));
        let history = vec![a.clone(), ipf("192.0.2.2", Some(1), Some("DE"))];
        let user = UserId::from("u");
        let counters = GlobalCounters::recount(history.iter().map(|f| (&user, f)));
        let ctx = ScoringContext { user: &user, history: &history, counters: &counters, reputation: &NoReputation };
        let s32 = engine.risk_score(&a, &ctx).unwrap().value();
        let e64 = RiskEngine::standard(RiskConfig::<f64>::default());
        let s64 = e64.risk_score(&a, &ctx).unwrap().value();
        assert!((f64::from(s32) - s64).abs() / s64 < 1e-6);
    }

    #[test]
    fn hierarchy_validation() {
        assert!(FeatureHierarchy::<f64>::new("x", vec![Level::Ip], vec![0.5]).is_err());
        assert!(FeatureHierarchy::<f64>::new("x", vec![Level::Ip, Level::Asn], vec![1.0]).is_err());
        assert!(FeatureHierarchy::<f64>::new("x", vec![Level::Ip, Level::Asn], vec![1.5, -0.5]).is_err());
        let f = FeatureHierarchy::<f64>::new("net", vec![Level::Asn, Level::Country], vec![0.7, 0.3]).unwrap();
        assert_eq!(f.origin(), Level::Asn);
    }
}
