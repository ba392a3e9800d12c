//! One-time-password primitives: HOTP (counter-based) and TOTP
//! (time-based), both HMAC-SHA1 with dynamic truncation. TOTP codes
//! prove user presence at authentication time; HOTP doubles as the
//! terminals' offline nonce generator, so verification with a lookahead
//! window and counter resynchronization lives here too.

use hmac::{Hmac, KeyInit, Mac};
use sha1::Sha1;

/// Floor for key material; shorter secrets make truncated codes guessable.
pub const MIN_KEY_BYTES: usize = 10;
/// User-facing codes are six digits; machine nonces may go up to eight.
pub const MIN_CODE_WIDTH: usize = 6;
pub const MAX_CODE_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OtpError {
    #[error("key must be at least {MIN_KEY_BYTES} bytes, got {0}")]
    KeyTooShort(usize),
    #[error("key is not valid base-32 text")]
    BadKeyEncoding,
    #[error("malformed code {0:?}: expected {MIN_CODE_WIDTH}-{MAX_CODE_WIDTH} decimal digits")]
    MalformedCode(String),
    #[error("time {time} precedes the configured epoch {t0}")]
    TimeBeforeEpoch { time: u64, t0: u64 },
}

/// Shared secret for one party's OTP stream. Immutable once created.
#[derive(Clone, PartialEq, Eq)]
pub struct OtpKey {
    bytes: Vec<u8>,
}

impl OtpKey {
    pub fn new(bytes: Vec<u8>) -> Result<Self, OtpError> {
        if bytes.len() < MIN_KEY_BYTES {
            return Err(OtpError::KeyTooShort(bytes.len()));
        }
        Ok(Self { bytes })
    }

    /// Imports a key from the base-32 provisioning format used by
    /// authenticator apps. Case and trailing `=` padding are tolerated.
    pub fn from_base32(text: &str) -> Result<Self, OtpError> {
        let normalized: String = text
            .trim()
            .trim_end_matches('=')
            .chars()
            .map(|c| c.to_ascii_uppercase())
            .collect();
        let bytes = data_encoding::BASE32_NOPAD
            .decode(normalized.as_bytes())
            .map_err(|_| OtpError::BadKeyEncoding)?;
        Self::new(bytes)
    }

    /// Exports the key as unpadded upper-case base-32.
    pub fn to_base32(&self) -> String {
        data_encoding::BASE32_NOPAD.encode(&self.bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

impl std::fmt::Debug for OtpKey {
    // Key material stays out of logs and traces.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OtpKey({} bytes)", self.bytes.len())
    }
}

/// A generated code: fixed-width decimal digits, leading zeros kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtpCode {
    digits: String,
}

impl OtpCode {
    pub fn as_str(&self) -> &str {
        &self.digits
    }

    pub fn width(&self) -> usize {
        self.digits.len()
    }
}

impl std::fmt::Display for OtpCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.digits)
    }
}

/// Time-slicing parameters for TOTP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TotpParams {
    /// Seconds per step.
    pub step_secs: u64,
    /// Epoch the step counter starts from.
    pub t0: u64,
    /// Steps of clock skew tolerated on either side during verification.
    pub skew_steps: u32,
}

impl Default for TotpParams {
    fn default() -> Self {
        Self {
            step_secs: 30,
            t0: 0,
            skew_steps: 1,
        }
    }
}

/// Verifier-side HOTP state: the next expected counter value plus how
/// far ahead the window may search when the generator has run ahead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HotpCounter {
    value: u64,
    lookahead: u64,
}

impl HotpCounter {
    pub const DEFAULT_LOOKAHEAD: u64 = 3;

    pub fn new(value: u64) -> Self {
        Self {
            value,
            lookahead: Self::DEFAULT_LOOKAHEAD,
        }
    }

    pub fn with_lookahead(value: u64, lookahead: u64) -> Self {
        Self { value, lookahead }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn lookahead(&self) -> u64 {
        self.lookahead
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotpOutcome {
    /// Matched at `step_offset` steps from the current one (0 = exact).
    Accepted {
        step_offset: i32,
    },
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HotpOutcome {
    /// Matched at `matched_counter`; the verifier counter moved past it.
    Accepted {
        matched_counter: u64,
    },
    Rejected,
}

/// Generates the HOTP code for `counter` at `width` digits (6 to 8).
pub fn hotp_generate(key: &OtpKey, counter: u64, width: usize) -> OtpCode {
    assert!(
        (MIN_CODE_WIDTH..=MAX_CODE_WIDTH).contains(&width),
        "code width {width} outside {MIN_CODE_WIDTH}..={MAX_CODE_WIDTH}"
    );
    let mut mac =
        Hmac::<Sha1>::new_from_slice(key.as_bytes()).expect("HMAC accepts keys of any length");
    mac.update(&counter.to_be_bytes());
    let digest = mac.finalize().into_bytes();

    // Dynamic truncation: low nibble of the last byte picks a 4-byte
    // window, masked to 31 bits so the value is sign-free everywhere.
    let offset = (digest[19] & 0x0f) as usize;
    let bin = (u32::from(digest[offset] & 0x7f) << 24)
        | (u32::from(digest[offset + 1]) << 16)
        | (u32::from(digest[offset + 2]) << 8)
        | u32::from(digest[offset + 3]);
    let code = bin % 10u32.pow(width as u32);
    OtpCode {
        digits: format!("{code:0width$}"),
    }
}

/// Generates the TOTP code for `unix_time`: HOTP at the step counter
/// `(unix_time - t0) / step_secs`.
pub fn totp_generate(
    key: &OtpKey,
    unix_time: u64,
    params: &TotpParams,
    width: usize,
) -> Result<OtpCode, OtpError> {
    if unix_time < params.t0 {
        return Err(OtpError::TimeBeforeEpoch {
            time: unix_time,
            t0: params.t0,
        });
    }
    let step = (unix_time - params.t0) / params.step_secs;
    Ok(hotp_generate(key, step, width))
}

/// Verifies a TOTP candidate against the window of steps within
/// `params.skew_steps` of the current one, reporting which offset
/// matched. Offsets are tried nearest-first (0, -1, +1, ...), every
/// window position is evaluated, and digit comparison is constant-time,
/// so accept and reject take the same work.
pub fn totp_verify(
    key: &OtpKey,
    candidate: &str,
    unix_time: u64,
    params: &TotpParams,
) -> Result<TotpOutcome, OtpError> {
    let width = validate_code_text(candidate)?;
    if unix_time < params.t0 {
        return Err(OtpError::TimeBeforeEpoch {
            time: unix_time,
            t0: params.t0,
        });
    }
    let current = ((unix_time - params.t0) / params.step_secs) as i64;
    let mut matched: Option<i32> = None;
    for offset in offsets_nearest_first(params.skew_steps) {
        let step = current + i64::from(offset);
        if step < 0 {
            continue;
        }
        let expected = hotp_generate(key, step as u64, width);
        if constant_time_digits_eq(expected.as_str(), candidate) && matched.is_none() {
            matched = Some(offset);
        }
    }
    Ok(match matched {
        Some(step_offset) => TotpOutcome::Accepted { step_offset },
        None => TotpOutcome::Rejected,
    })
}

/// Verifies an HOTP candidate against the counters `[value, value +
/// lookahead]`. On acceptance the counter resynchronizes to one past the
/// match so the same code can never be accepted twice; rejection leaves
/// it untouched.
pub fn hotp_verify_window(
    key: &OtpKey,
    candidate: &str,
    counter: &mut HotpCounter,
) -> Result<HotpOutcome, OtpError> {
    let width = validate_code_text(candidate)?;
    let mut matched: Option<u64> = None;
    for c in counter.value..=counter.value.saturating_add(counter.lookahead) {
        let expected = hotp_generate(key, c, width);
        if constant_time_digits_eq(expected.as_str(), candidate) && matched.is_none() {
            matched = Some(c);
        }
    }
    Ok(match matched {
        Some(matched_counter) => {
            counter.value = matched_counter + 1;
            HotpOutcome::Accepted { matched_counter }
        }
        None => HotpOutcome::Rejected,
    })
}

/// Offsets `0, -1, +1, -2, +2, ...` out to `skew` on each side.
fn offsets_nearest_first(skew: u32) -> impl Iterator<Item = i32> {
    std::iter::once(0).chain((1..=skew as i32).flat_map(|s| [-s, s]))
}

fn validate_code_text(candidate: &str) -> Result<usize, OtpError> {
    let width = candidate.len();
    let all_digits = candidate.bytes().all(|b| b.is_ascii_digit());
    if !all_digits || !(MIN_CODE_WIDTH..=MAX_CODE_WIDTH).contains(&width) {
        return Err(OtpError::MalformedCode(candidate.to_string()));
    }
    Ok(width)
}

/// Equality over same-width digit strings without data-dependent
/// branches: XOR-accumulates every byte pair before deciding.
pub(crate) fn constant_time_digits_eq(a: &str, b: &str) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.bytes()
        .zip(b.bytes())
        .fold(0u8, |acc, (x, y)| acc | (x ^ y))
        == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_time_compare_agrees_with_eq() {
        assert!(constant_time_digits_eq("755224", "755224"));
        assert!(!constant_time_digits_eq("755224", "755225"));
        assert!(!constant_time_digits_eq("755224", "75522"));
        assert!(constant_time_digits_eq("", ""));
    }

    #[test]
    fn verify_window_never_looks_below_step_zero() {
        let key = OtpKey::new(b"12345678901234567890".to_vec()).unwrap();
        let params = TotpParams::default();
        // At t=0 the only steps in a skew-1 window are 0 and +1.
        let step0 = hotp_generate(&key, 0, 6);
        let step1 = hotp_generate(&key, 1, 6);
        assert_eq!(
            totp_verify(&key, step0.as_str(), 0, &params).unwrap(),
            TotpOutcome::Accepted { step_offset: 0 }
        );
        assert_eq!(
            totp_verify(&key, step1.as_str(), 0, &params).unwrap(),
            TotpOutcome::Accepted { step_offset: 1 }
        );
    }

    #[test]
    fn offsets_iterate_nearest_first() {
        let order: Vec<i32> = offsets_nearest_first(2).collect();
        assert_eq!(order, vec![0, -1, 1, -2, 2]);
    }

    #[test]
    #[should_panic(expected = "outside")]
    fn width_outside_range_panics() {
        let key = OtpKey::new(b"12345678901234567890".to_vec()).unwrap();
        hotp_generate(&key, 0, 5);
    }
}
