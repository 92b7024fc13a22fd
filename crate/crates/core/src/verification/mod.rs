//! Second-factor verification for suspicious logins.

mod challenge;
mod hotp;
mod messenger;

pub use self::challenge::{
    verification_message, ChallengeBook, ChallengePolicy, HotpCredential, PendingChallenge,
    DEFAULT_CHALLENGE_ATTEMPTS, DEFAULT_CHALLENGE_TTL_SECS,
};
pub use self::hotp::{codes_match, hotp, hotp_digits, HotpSecret, CODE_DIGITS};
pub use self::messenger::{Messenger, OutboxMessenger, OutgoingMessage, RecordingMessenger, SmtpMessenger};
