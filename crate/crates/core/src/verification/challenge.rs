//! Pending re-authentication challenges, at most one per user.

use std::collections::HashMap;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::hotp::{codes_match, hotp, HotpSecret};
use super::messenger::{Messenger, OutgoingMessage};
use crate::error::VerificationError;
use crate::model::{NormalizedFeatures, UserId};

pub const DEFAULT_CHALLENGE_TTL_SECS: i64 = 600;
pub const DEFAULT_CHALLENGE_ATTEMPTS: u32 = 3;

/// A user's HOTP key and the counter of the last issued code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HotpCredential {
    pub secret: HotpSecret,
    pub counter: u64,
}

impl HotpCredential {
    pub fn generate() -> Self {
        HotpCredential { secret: HotpSecret::generate(), counter: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengePolicy {
    pub ttl_secs: i64,
    pub max_attempts: u32,
}

impl Default for ChallengePolicy {
    fn default() -> Self {
        ChallengePolicy { ttl_secs: DEFAULT_CHALLENGE_TTL_SECS, max_attempts: DEFAULT_CHALLENGE_ATTEMPTS }
    }
}

/// An outstanding verification code and the login context it unlocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingChallenge {
    pub user: UserId,
    pub counter: u64,
    pub issued_at: i64,
    pub expires_at: i64,
    pub remaining_attempts: u32,
    pub features: NormalizedFeatures,
}

impl PendingChallenge {
    pub fn is_usable(&self, now: i64) -> bool {
        now < self.expires_at && self.remaining_attempts > 0
    }
}

/// Subject and body of a verification message; both carry the code.
pub fn verification_message(contact: &str, code: &str, features: &NormalizedFeatures) -> OutgoingMessage {
    let or_unknown = |v: Option<&str>| v.unwrap_or("unknown").to_owned();
    let location = features.country.clone().unwrap_or_else(|| "unknown".into());
    let body = format!(
        "Your verification code is: {code}\n\
         \n\
         Someone signed in to your account from a device or location we did not recognise.\n\
         If this was you, enter the code above to finish signing in.\n\
         \n\
         IP address: {ip}\n\
         Location: {location}\n\
         Browser: {browser}\n\
         Operating system: {os}\n\
         \n\
         If this was not you, do not share this code and change your password.\n",
        ip = features.ip,
        browser = or_unknown(features.browser.as_deref()),
        os = or_unknown(features.os.as_deref()),
    );
    OutgoingMessage { to: contact.to_owned(), subject: format!("Your verification code: {code}"), body }
}

#[derive(Debug, Default)]
pub struct ChallengeBook {
    policy: ChallengePolicy,
    active: Mutex<HashMap<UserId, PendingChallenge>>,
}

impl ChallengeBook {
    pub fn new(policy: ChallengePolicy) -> Self {
        ChallengeBook { policy, active: Mutex::new(HashMap::new()) }
    }

    pub fn policy(&self) -> ChallengePolicy {
        self.policy
    }

    /// Advances the user's HOTP counter, sends the new code and makes it the
    /// user's only active challenge. Any earlier challenge is invalidated
    /// first; if delivery fails no challenge remains.
    pub fn issue_challenge(
        &self,
        user: &UserId,
        contact: Option<&str>,
        credential: &mut HotpCredential,
        features: NormalizedFeatures,
        messenger: &dyn Messenger,
        now: i64,
    ) -> Result<PendingChallenge, VerificationError> {
        let contact = contact.map(str::trim).filter(|c| !c.is_empty());
        let Some(contact) = contact else {
            return Err(VerificationError::NoContact(user.to_string()));
        };
        self.active.lock().remove(user);
        credential.counter += 1;
        let code = hotp(&credential.secret, credential.counter);
        messenger.send(&verification_message(contact, &code, &features))?;
        let challenge = PendingChallenge {
            user: user.clone(),
            counter: credential.counter,
            issued_at: now,
            expires_at: now + self.policy.ttl_secs,
            remaining_attempts: self.policy.max_attempts,
            features,
        };
        self.active.lock().insert(user.clone(), challenge.clone());
        Ok(challenge)
    }

    /// Checks a submitted code. A match consumes and returns the challenge; a
    /// mismatch uses up one attempt. Expired or exhausted challenges are dropped.
    pub fn verify(&self, user: &UserId, code: &str, secret: &HotpSecret, now: i64) -> Option<PendingChallenge> {
        let mut active = self.active.lock();
        let challenge = active.get_mut(user)?;
        if !challenge.is_usable(now) {
            active.remove(user);
            return None;
        }
        if codes_match(&hotp(secret, challenge.counter), code.trim()) {
            return active.remove(user);
        }
        challenge.remaining_attempts -= 1;
        if challenge.remaining_attempts == 0 {
            active.remove(user);
        }
        None
    }

    pub fn verify_code(&self, user: &UserId, code: &str, secret: &HotpSecret, now: i64) -> bool {
        self.verify(user, code, secret, now).is_some()
    }

    pub fn active(&self, user: &UserId, now: i64) -> Option<PendingChallenge> {
        self.active.lock().get(user).filter(|c| c.is_usable(now)).cloned()
    }

    pub fn cancel(&self, user: &UserId) {
        self.active.lock().remove(user);
    }

    /// Drops expired challenges.
    pub fn purge_expired(&self, now: i64) {
        self.active.lock().retain(|_, c| c.is_usable(now));
    }
}
