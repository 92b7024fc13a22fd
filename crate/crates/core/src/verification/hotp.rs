//! HMAC-based one-time passwords (RFC 4226).

use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha1::Sha1;
use subtle::ConstantTimeEq;

use crate::error::VerificationError;

pub const CODE_DIGITS: u32 = 6;
const MIN_SECRET_LEN: usize = 16;
const GENERATED_SECRET_LEN: usize = 20;

/// Shared HOTP key, at least 128 bits.
#[derive(Clone, PartialEq, Eq)]
pub struct HotpSecret(Vec<u8>);

impl HotpSecret {
    pub fn new(bytes: Vec<u8>) -> Result<Self, VerificationError> {
        if bytes.len() < MIN_SECRET_LEN {
            return Err(VerificationError::ShortSecret(bytes.len()));
        }
        Ok(HotpSecret(bytes))
    }

    /// Fresh random 160-bit key.
    pub fn generate() -> Self {
        let mut bytes = vec![0u8; GENERATED_SECRET_LEN];
        rand::rng().fill_bytes(&mut bytes);
        HotpSecret(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for HotpSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HotpSecret({} bytes)", self.0.len())
    }
}

/// Truncated HMAC-SHA-1 of the big-endian counter, reduced to `digits`
/// decimal digits and zero padded.
pub fn hotp_digits(secret: &HotpSecret, counter: u64, digits: u32) -> String {
    assert!((1..=9).contains(&digits), "HOTP supports 1 to 9 digits");
    let mut mac = Hmac::<Sha1>::new_from_slice(secret.as_bytes()).expect("HMAC accepts any key length");
    mac.update(&counter.to_be_bytes());
    let hash = mac.finalize().into_bytes();
    let offset = (hash[hash.len() - 1] & 0x0f) as usize;
    let binary = u32::from_be_bytes([hash[offset], hash[offset + 1], hash[offset + 2], hash[offset + 3]]) & 0x7fff_ffff;
    let code = binary % 10u32.pow(digits);
    format!("{code:0width$}", width = digits as usize)
}

/// Six-digit code for `counter`.
pub fn hotp(secret: &HotpSecret, counter: u64) -> String {
    hotp_digits(secret, counter, CODE_DIGITS)
}

/// Compares codes without an early exit on the first differing byte.
pub fn codes_match(expected: &str, submitted: &str) -> bool {
    expected.len() == submitted.len() && bool::from(expected.as_bytes().ct_eq(submitted.as_bytes()))
}
