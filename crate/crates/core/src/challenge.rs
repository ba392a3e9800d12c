//! The visual challenge payload: what a terminal encodes into the QR
//! code it displays and a device decodes from its camera. The payload
//! binds a service id, terminal id, single-use nonce, and timestamp
//! into one pipe-delimited line, and [`NonceSource`] covers the two
//! ways nonces come to exist: drawn server-side, or derived offline by
//! the terminal as an HOTP stream the service can verify without ever
//! talking to the terminal.

use crate::otp::{hotp_generate, OtpKey};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Wire magic; also what a device's decoder keys on to recognize ours.
pub const PAYLOAD_MAGIC: &str = "GAUTH";
/// Protocol version token in every payload.
pub const PAYLOAD_VERSION: &str = "v1";
/// Option flag: the service wants continuous re-authentication.
pub const FLAG_CONTINUOUS: char = 'C';

/// Character budget of the smallest supported code (a 25-module QR
/// symbol): 26 characters of 8 bits. Payload *content* must fit it at
/// default field sizes; the self-describing framing is display
/// decoration a space-tight deployment strips.
pub const MIN_CODE_CAPACITY_BITS: usize = 208;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("payload does not start with {PAYLOAD_MAGIC}")]
    BadMagic,
    #[error("unsupported payload version {0:?}")]
    BadVersion(String),
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("field {field} is malformed: {reason}")]
    BadField { field: &'static str, reason: String },
    #[error("unexpected trailing segment {0:?}")]
    UnexpectedSegment(String),
}

fn bad_field(field: &'static str, reason: impl Into<String>) -> PayloadError {
    PayloadError::BadField {
        field,
        reason: reason.into(),
    }
}

/// Service identifier: exactly four decimal digits, leading zeros kept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sid(String);

impl Sid {
    pub fn new(text: &str) -> Result<Self, PayloadError> {
        if text.len() == 4 && text.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Self(text.to_string()))
        } else {
            Err(bad_field(
                "sid",
                format!("{text:?} is not 4 decimal digits"),
            ))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Terminal identifier: 1 to 16 alphanumeric characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tid(String);

impl Tid {
    pub fn new(text: &str) -> Result<Self, PayloadError> {
        let ok =
            !text.is_empty() && text.len() <= 16 && text.bytes().all(|b| b.is_ascii_alphanumeric());
        if ok {
            Ok(Self(text.to_string()))
        } else {
            Err(bad_field(
                "tid",
                format!("{text:?} is not 1-16 alphanumeric characters"),
            ))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Single-use challenge nonce: exactly six decimal digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Nonce(String);

impl Nonce {
    pub fn new(text: &str) -> Result<Self, PayloadError> {
        if text.len() == 6 && text.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Self(text.to_string()))
        } else {
            Err(bad_field(
                "nonce",
                format!("{text:?} is not 6 decimal digits"),
            ))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Wall-clock seconds, bounded to the 11-digit wire field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const MAX: u64 = 99_999_999_999;

    pub fn from_secs(secs: u64) -> Result<Self, PayloadError> {
        if secs <= Self::MAX {
            Ok(Self(secs))
        } else {
            Err(bad_field("ts", format!("{secs} exceeds 11 digits")))
        }
    }

    pub fn parse(text: &str) -> Result<Self, PayloadError> {
        if text.len() != 11 || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad_field(
                "ts",
                format!("{text:?} is not 11 decimal digits"),
            ));
        }
        Ok(Self(text.parse().expect("11 digits fit u64")))
    }

    pub fn secs(&self) -> u64 {
        self.0
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:011}", self.0)
    }
}

/// Option flags carried verbatim so unknown flags survive a round trip.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PayloadOptions {
    flags: String,
}

impl PayloadOptions {
    pub fn new(continuous: bool) -> Self {
        Self {
            flags: if continuous {
                FLAG_CONTINUOUS.to_string()
            } else {
                String::new()
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self, PayloadError> {
        if text.bytes().all(|b| b.is_ascii_alphanumeric()) {
            Ok(Self {
                flags: text.to_string(),
            })
        } else {
            Err(bad_field(
                "opt",
                format!("{text:?} contains non-alphanumeric flags"),
            ))
        }
    }

    /// Whether the service asked for continuous re-authentication.
    pub fn continuous(&self) -> bool {
        self.flags.contains(FLAG_CONTINUOUS)
    }

    pub fn flags(&self) -> &str {
        &self.flags
    }
}

/// Everything a displayed challenge carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengePayload {
    pub sid: Sid,
    pub tid: Tid,
    pub nonce: Nonce,
    pub ts: Timestamp,
    pub options: PayloadOptions,
}

impl ChallengePayload {
    /// Bits of payload content: the field characters themselves, at 8
    /// bits each. A terminal that mirrors the nonce into its tid (the
    /// compact deployment) pays nothing extra for the tid.
    pub fn content_bits(&self) -> usize {
        let tid_chars = if self.tid.as_str() == self.nonce.as_str() {
            0
        } else {
            self.tid.as_str().len()
        };
        8 * (4 + 6 + 11 + tid_chars + self.options.flags().len())
    }
}

/// Encodes a payload into its canonical single-line form, for example
/// `GAUTH|v1|sid=1234|tid=T01|nonce=654321|ts=00001700000|opt=C`.
pub fn encode_payload(payload: &ChallengePayload) -> String {
    format!(
        "{PAYLOAD_MAGIC}|{PAYLOAD_VERSION}|sid={}|tid={}|nonce={}|ts={}|opt={}",
        payload.sid.as_str(),
        payload.tid.as_str(),
        payload.nonce.as_str(),
        payload.ts,
        payload.options.flags(),
    )
}

/// Decodes the canonical form. Parsing is strict: segments must appear
/// in canonical order and the first offending field is named in the
/// error. Unknown option flags are preserved but otherwise ignored.
pub fn decode_payload(text: &str) -> Result<ChallengePayload, PayloadError> {
    let mut segments = text.split('|');
    if segments.next() != Some(PAYLOAD_MAGIC) {
        return Err(PayloadError::BadMagic);
    }
    match segments.next() {
        Some(PAYLOAD_VERSION) => {}
        other => return Err(PayloadError::BadVersion(other.unwrap_or("").to_string())),
    }

    let mut field = |name: &'static str| -> Result<&str, PayloadError> {
        let segment = segments.next().ok_or(PayloadError::MissingField(name))?;
        segment
            .strip_prefix(name)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| bad_field(name, format!("expected {name}=..., got {segment:?}")))
    };

    let sid = Sid::new(field("sid")?)?;
    let tid = Tid::new(field("tid")?)?;
    let nonce = Nonce::new(field("nonce")?)?;
    let ts = Timestamp::parse(field("ts")?)?;
    let options = PayloadOptions::parse(field("opt")?)?;

    if let Some(extra) = segments.next() {
        return Err(PayloadError::UnexpectedSegment(extra.to_string()));
    }
    Ok(ChallengePayload {
        sid,
        tid,
        nonce,
        ts,
        options,
    })
}

/// Where challenge nonces come from.
///
/// `ServiceRandom` draws from a seeded generator on the service; the
/// service remembers what it issued. `TerminalHotp` lets a terminal mint
/// nonces offline from a key it shares with the service, which verifies
/// them as an HOTP window without any terminal round trip.
#[derive(Debug)]
pub enum NonceSource {
    ServiceRandom { rng: Box<ChaCha8Rng> },
    TerminalHotp { key: OtpKey, counter: u64 },
}

impl NonceSource {
    /// Yields the next six-digit nonce, consuming generator state.
    pub fn next_nonce(&mut self) -> Nonce {
        let digits = match self {
            NonceSource::ServiceRandom { rng } => {
                format!("{:06}", rng.random_range(0..1_000_000u32))
            }
            NonceSource::TerminalHotp { key, counter } => {
                let code = hotp_generate(key, *counter, 6);
                *counter += 1;
                code.as_str().to_string()
            }
        };
        Nonce::new(&digits).expect("generated nonces are always 6 digits")
    }

    /// The counter the next terminal-minted nonce will use, if HOTP-based.
    pub fn hotp_counter(&self) -> Option<u64> {
        match self {
            NonceSource::ServiceRandom { .. } => None,
            NonceSource::TerminalHotp { counter, .. } => Some(*counter),
        }
    }
}
