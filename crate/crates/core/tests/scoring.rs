mod oracle;

use oracle::{dataset, rel_close, to_features, user_id, Login, Params};
use proptest::prelude::*;
use rba_core::engine::FeatureHierarchy;
use rba_core::net::Cidr;
use rba_core::replay::{replay, DatasetRow, ReplayOptions};
use rba_core::{
    FeatureSet, HistoryStore, IpReputation, NoReputation, RiskConfig, RiskEngine, ReputationSet, ScoringContext,
};

fn engine_for(p: &Params) -> RiskEngine {
    let cfg = RiskConfig {
        ip_weights: p.ip_weights,
        ua_weights: p.ua_weights,
        global_smoothing_alpha: p.alpha,
        user_attack_prior: p.user_attack_prior,
        attack_data_enabled: p.attack.is_some(),
        rep_hit_prob: p.attack.map_or(1.0, |a| a.0),
        rep_miss_prob: p.attack.map_or(0.1, |a| a.1),
        ..RiskConfig::default()
    };
    ReplayOptions { include_rtt: p.use_rtt, history_cap: None }.engine(cfg)
}

/// Scores every login against the logins before it, with both the engine and
/// the oracle, and returns how many scored pairs were compared.
fn check_against_oracle(logins: &[Login], p: &Params, reputation: &ReputationSet) -> usize {
    let engine = engine_for(p);
    let store = HistoryStore::new(None);
    let mut compared = 0;
    for (i, login) in logins.iter().enumerate() {
        let features = to_features(login);
        let user = user_id(login);
        let snapshot = store.snapshot();
        let ctx = snapshot.scoring_context(&user, reputation);
        let listed = reputation.is_listed(&features.ip);
        match oracle::score(login, &logins[..i], p, listed) {
            None => assert!(ctx.history.is_empty()),
            Some(expected) => {
                let got = engine.risk_score(&features, &ctx).unwrap().value();
                assert!(rel_close(got, expected, 1e-10), "login {i}: engine {got} oracle {expected}");
                compared += 1;
            }
        }
        store.append(&user, i as i64, features).unwrap();
    }
    compared
}

#[test]
fn engine_matches_oracle_on_random_histories() {
    let none = ReputationSet::empty("none");
    for seed in 0..10 {
        let logins = dataset(seed, 10, 300, 0.2);
        assert!(check_against_oracle(&logins, &Params::default(), &none) > 250);
    }
}

#[test]
fn engine_matches_oracle_with_odd_parameters() {
    let p = Params {
        ip_weights: [0.2, 0.2, 0.6],
        ua_weights: [0.1, 0.2, 0.3, 0.4],
        alpha: 0.5,
        user_attack_prior: 0.25,
        use_rtt: false,
        attack: Some((0.9, 0.05)),
    };
    let listed = ReputationSet::from_prefixes("test", ["10.1.0.0/16".parse::<Cidr>().unwrap(), "2001:db8:3::/48".parse().unwrap()]);
    for seed in 100..105 {
        let logins = dataset(seed, 25, 400, 0.4);
        check_against_oracle(&logins, &p, &listed);
    }
}

#[test]
fn engine_matches_oracle_with_many_users() {
    let none = ReputationSet::empty("none");
    let logins = dataset(7, 50, 500, 0.3);
    check_against_oracle(&logins, &Params::default(), &none);
}

fn rows(logins: &[Login]) -> Vec<DatasetRow> {
    logins
        .iter()
        .enumerate()
        .map(|(i, l)| DatasetRow {
            global_index: i as u64 * 3 + 1,
            user: user_id(l),
            timestamp: String::new(),
            features: to_features(l),
            login_successful: true,
        })
        .collect()
}

#[test]
fn replay_matches_oracle() {
    for use_rtt in [false, true] {
        let p = Params { use_rtt, ..Params::default() };
        let logins = dataset(42, 10, 250, 0.25);
        let out = replay(&rows(&logins), 0, usize::MAX, &engine_for(&p), &ReplayOptions { include_rtt: use_rtt, history_cap: None }).unwrap();
        let mut expected = Vec::new();
        for (i, l) in logins.iter().enumerate() {
            if let Some(s) = oracle::score(l, &logins[..i], &p, false) {
                expected.push((i as u64 * 3 + 1, s));
            }
        }
        assert_eq!(out.len(), expected.len());
        for (row, (idx, s)) in out.iter().zip(expected) {
            assert_eq!(row.global_index, idx);
            assert!(rel_close(row.score.value(), s, 1e-10), "{idx}: {} vs {s}", row.score);
        }
    }
}

#[test]
fn single_feature_two_row_replay_scores_one() {
    let cfg = RiskConfig { global_smoothing_alpha: 0.0, ..RiskConfig::default() };
    let engine = RiskEngine::new(cfg.clone(), FeatureSet::new(vec![FeatureHierarchy::ip(&cfg)]));
    let login = dataset(1, 1, 1, 0.0).remove(0);
    let login = Login { asn: Some(64500), country: Some("DE".into()), ..login };
    let out = replay(&rows(&[login.clone(), login]), 0, 2, &engine, &ReplayOptions::default()).unwrap();
    assert_eq!(out.len(), 1);
    assert!((out[0].score.value() - 1.0_f64).abs() < 1e-12);
}

#[derive(Debug)]
struct Scenario {
    logins: Vec<Login>,
    attempt: Login,
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (any::<u64>(), 20usize..120, 0.0f64..0.8).prop_map(|(seed, n, churn)| {
        let mut logins = dataset(seed, 4, n + 1, churn);
        let mut attempt = logins.pop().unwrap();
        attempt.user = logins[0].user.clone();
        Scenario { logins, attempt }
    })
}

fn score_with<E: AsRef<rba_core::NormalizedFeatures>>(
    engine: &RiskEngine,
    attempt: &Login,
    history: &[E],
    counters: &rba_core::GlobalCounters,
    reputation: &dyn IpReputation,
) -> f64 {
    let user = user_id(attempt);
    let ctx = ScoringContext { user: &user, history, counters, reputation };
    engine.risk_score(&to_features(attempt), &ctx).unwrap().value()
}

fn stored(logins: &[Login]) -> (Vec<rba_core::NormalizedFeatures>, rba_core::GlobalCounters, Vec<rba_core::UserId>) {
    let features: Vec<_> = logins.iter().map(to_features).collect();
    let users: Vec<_> = logins.iter().map(user_id).collect();
    let counters = rba_core::GlobalCounters::recount(users.iter().zip(features.iter()));
    (features, counters, users)
}

fn user_history(attempt: &Login, logins: &[Login]) -> Vec<rba_core::NormalizedFeatures> {
    logins.iter().filter(|l| l.user == attempt.user).map(to_features).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_ignores_history_order(s in scenario(), rotate in 0usize..50) {
        let engine = engine_for(&Params::default());
        let (_, counters, _) = stored(&s.logins);
        let mut history = user_history(&s.attempt, &s.logins);
        let before = score_with(&engine, &s.attempt, &history, &counters, &NoReputation);
        history.reverse();
        let k = rotate % history.len();
        history.rotate_left(k);
        let after = score_with(&engine, &s.attempt, &history, &counters, &NoReputation);
        prop_assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn own_features_never_raise_the_score(s in scenario()) {
        let engine = engine_for(&Params::default());
        let (_, counters, _) = stored(&s.logins);
        let mut history = user_history(&s.attempt, &s.logins);
        let before = score_with(&engine, &s.attempt, &history, &counters, &NoReputation);
        history.push(to_features(&s.attempt));
        let after = score_with(&engine, &s.attempt, &history, &counters, &NoReputation);
        prop_assert!(after <= before * (1.0 + 1e-12), "{} > {}", after, before);
    }

    #[test]
    fn reputation_is_inert_when_attack_data_is_off(s in scenario()) {
        let engine = engine_for(&Params::default());
        let (_, counters, _) = stored(&s.logins);
        let history = user_history(&s.attempt, &s.logins);
        let ip = to_features(&s.attempt).ip;
        let everything = ReputationSet::from_prefixes("all", [Cidr::host(ip)]);
        let a = score_with(&engine, &s.attempt, &history, &counters, &NoReputation);
        let b = score_with(&engine, &s.attempt, &history, &counters, &everything);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn missing_rtt_equals_reduced_feature_set(s in scenario()) {
        let with_rtt = engine_for(&Params::default());
        let without = engine_for(&Params { use_rtt: false, ..Params::default() });
        let (_, counters, _) = stored(&s.logins);
        let history = user_history(&s.attempt, &s.logins);
        let attempt = Login { rtt: None, ..s.attempt.clone() };
        let a = score_with(&with_rtt, &attempt, &history, &counters, &NoReputation);
        let b = score_with(&without, &attempt, &history, &counters, &NoReputation);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn f32_engine_tracks_f64(s in scenario()) {
        let (_, counters, _) = stored(&s.logins);
        let history = user_history(&s.attempt, &s.logins);
        let user = user_id(&s.attempt);
        let ctx = ScoringContext { user: &user, history: &history, counters: &counters, reputation: &NoReputation };
        let attempt = to_features(&s.attempt);
        let a = rba_core::RiskEngineF64::standard(RiskConfig::default()).risk_score(&attempt, &ctx).unwrap().value();
        let b = rba_core::RiskEngineF32::standard(RiskConfig::default()).risk_score(&attempt, &ctx).unwrap().value();
        prop_assert!(rel_close(a, b as f64, 1e-4), "{} vs {}", a, b);
    }
}
