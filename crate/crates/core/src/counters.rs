use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{FeatureValue, Level, NormalizedFeatures, UserId};

fn level_index(level: Level) -> usize {
    level as usize
}

/// Occurrence counts over every stored login: one value-to-count table per
/// level, per-user login counts and the total. Zero counts are dropped, so two
/// counter sets describing the same logins compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalCounters {
    values: [HashMap<FeatureValue, u64>; Level::ALL.len()],
    users: HashMap<UserId, u64>,
    total: u64,
}

impl GlobalCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Brute-force recount of a set of logins.
    pub fn recount<'a, I>(logins: I) -> Self
    where
        I: IntoIterator<Item = (&'a UserId, &'a NormalizedFeatures)>,
    {
        let mut counters = GlobalCounters::new();
        for (user, features) in logins {
            counters.add(user, features);
        }
        counters
    }

    pub fn add(&mut self, user: &UserId, features: &NormalizedFeatures) {
        for level in Level::ALL {
            if let Some(v) = features.owned_value(level) {
                *self.values[level_index(level)].entry(v).or_insert(0) += 1;
            }
        }
        *self.users.entry(user.clone()).or_insert(0) += 1;
        self.total += 1;
    }

    /// Reverses an earlier [`add`](Self::add) of the same login.
    pub fn remove(&mut self, user: &UserId, features: &NormalizedFeatures) {
        for level in Level::ALL {
            if let Some(v) = features.owned_value(level) {
                decrement(&mut self.values[level_index(level)], &v);
            }
        }
        decrement(&mut self.users, user);
        self.total = self.total.checked_sub(1).expect("removing a login that was never counted");
    }

    pub fn count(&self, level: Level, value: &FeatureValue) -> u64 {
        self.values[level_index(level)].get(value).copied().unwrap_or(0)
    }

    pub fn user_count(&self, user: &UserId) -> u64 {
        self.users.get(user).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn user_counts(&self) -> impl Iterator<Item = (&UserId, u64)> {
        self.users.iter().map(|(u, c)| (u, *c))
    }

    /// Number of distinct values seen at `level`.
    pub fn distinct(&self, level: Level) -> usize {
        self.values[level_index(level)].len()
    }

    /// Internal consistency: per-value counts bounded by the total and
    /// per-user counts summing to it.
    pub fn is_consistent(&self) -> bool {
        let user_sum: u64 = self.users.values().sum();
        user_sum == self.total && self.values.iter().all(|m| m.values().all(|&c| c > 0 && c <= self.total))
    }
}

fn decrement<K: std::hash::Hash + Eq>(map: &mut HashMap<K, u64>, key: &K) {
    let slot = map.get_mut(key).expect("decrementing an uncounted value");
    *slot -= 1;
    if *slot == 0 {
        map.remove(key);
    }
}
