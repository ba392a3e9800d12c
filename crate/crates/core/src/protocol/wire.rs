//! Network frames between device and service: the authentication
//! request and its acknowledgement. Frames are single newline-terminated
//! UTF-8 lines of pipe-delimited `key=value` segments in fixed order,
//! strict to parse, and deliberately opaque about failure: an ack says
//! OK or FAIL and nothing else crosses the wire about why.

use crate::challenge::{Nonce, Sid, Tid, Timestamp};

pub const REQUEST_MAGIC: &str = "AUTHREQ";
pub const ACK_MAGIC: &str = "AUTHACK";
pub const WIRE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("frame does not start with {0}")]
    BadMagic(&'static str),
    #[error("unsupported frame version {0:?}")]
    BadVersion(String),
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("field {field} is malformed: {reason}")]
    BadField { field: &'static str, reason: String },
    #[error("unexpected trailing segment {0:?}")]
    UnexpectedSegment(String),
}

fn bad_field(field: &'static str, reason: impl Into<String>) -> WireError {
    WireError::BadField {
        field,
        reason: reason.into(),
    }
}

/// User identifier: 1 to 32 characters of `[A-Za-z0-9._-]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Uid(String);

impl Uid {
    pub fn new(text: &str) -> Result<Self, WireError> {
        let ok = !text.is_empty()
            && text.len() <= 32
            && text
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || b == b'-');
        if ok {
            Ok(Self(text.to_string()))
        } else {
            Err(bad_field("uid", format!("{text:?} is not a valid user id")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Uid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The single message a device sends to authenticate: who, proof of
/// when (OTP), and the challenge it answers (sid, tid, nonce).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub uid: Uid,
    /// Candidate one-time password, kept as received text.
    pub otp: String,
    pub sid: Sid,
    pub tid: Tid,
    pub nonce: Nonce,
    /// Sender's wall clock at send time.
    pub ts: Timestamp,
    /// True for continuous-mode re-authentication.
    pub reauth: bool,
    /// Sender's Lamport stamp for the message.
    pub lts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckStatus {
    Ok,
    Fail,
}

/// The service's answer. Failure carries no reason by design; reasons
/// live in the service's own log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthAck {
    pub status: AckStatus,
    /// Whether the session requires continuous re-authentication.
    pub continuous_required: bool,
    /// Re-authentication period in seconds; present iff
    /// `continuous_required`.
    pub t_reauth_secs: Option<u64>,
    /// Service's Lamport stamp for the message.
    pub lts: u64,
}

/// Encodes a request as one newline-terminated line.
pub fn encode_auth_request(req: &AuthRequest) -> String {
    format!(
        "{REQUEST_MAGIC}|{WIRE_VERSION}|uid={}|otp={}|sid={}|tid={}|nonce={}|ts={}|reauth={}|lts={:011}\n",
        req.uid,
        req.otp,
        req.sid.as_str(),
        req.tid.as_str(),
        req.nonce.as_str(),
        req.ts,
        u8::from(req.reauth),
        req.lts,
    )
}

/// Encodes an ack as one newline-terminated line. The `treauth` segment
/// appears only when continuous re-authentication is required.
pub fn encode_auth_ack(ack: &AuthAck) -> String {
    let status = match ack.status {
        AckStatus::Ok => "OK",
        AckStatus::Fail => "FAIL",
    };
    match ack.t_reauth_secs {
        Some(t) => format!(
            "{ACK_MAGIC}|{WIRE_VERSION}|status={status}|cont=1|treauth={t}|lts={:011}\n",
            ack.lts
        ),
        None => format!(
            "{ACK_MAGIC}|{WIRE_VERSION}|status={status}|cont=0|lts={:011}\n",
            ack.lts
        ),
    }
}

struct FrameReader<'a> {
    segments: std::str::Split<'a, char>,
}

impl<'a> FrameReader<'a> {
    fn open(line: &'a str, magic: &'static str) -> Result<Self, WireError> {
        let body = line.strip_suffix('\n').unwrap_or(line);
        let mut segments = body.split('|');
        if segments.next() != Some(magic) {
            return Err(WireError::BadMagic(magic));
        }
        match segments.next() {
            Some(WIRE_VERSION) => {}
            other => return Err(WireError::BadVersion(other.unwrap_or("").to_string())),
        }
        Ok(Self { segments })
    }

    fn field(&mut self, name: &'static str) -> Result<&'a str, WireError> {
        let segment = self.segments.next().ok_or(WireError::MissingField(name))?;
        segment
            .strip_prefix(name)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| bad_field(name, format!("expected {name}=..., got {segment:?}")))
    }

    fn close(mut self) -> Result<(), WireError> {
        match self.segments.next() {
            None => Ok(()),
            Some(extra) => Err(WireError::UnexpectedSegment(extra.to_string())),
        }
    }
}

fn parse_flag(field: &'static str, text: &str) -> Result<bool, WireError> {
    match text {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(bad_field(field, format!("expected 0 or 1, got {text:?}"))),
    }
}

fn parse_lts(text: &str) -> Result<u64, WireError> {
    if text.is_empty() || text.len() > 20 || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad_field("lts", format!("{text:?} is not a decimal stamp")));
    }
    text.parse()
        .map_err(|_| bad_field("lts", format!("{text:?} overflows")))
}

/// Decodes a request line; strict field order, first bad field named.
pub fn decode_auth_request(line: &str) -> Result<AuthRequest, WireError> {
    let mut frame = FrameReader::open(line, REQUEST_MAGIC)?;
    let uid = Uid::new(frame.field("uid")?)?;
    let otp = frame.field("otp")?;
    let otp_ok = (6..=8).contains(&otp.len()) && otp.bytes().all(|b| b.is_ascii_digit());
    if !otp_ok {
        return Err(bad_field("otp", format!("{otp:?} is not a 6-8 digit code")));
    }
    let otp = otp.to_string();
    let sid = Sid::new(frame.field("sid")?).map_err(|e| bad_field("sid", e.to_string()))?;
    let tid = Tid::new(frame.field("tid")?).map_err(|e| bad_field("tid", e.to_string()))?;
    let nonce = Nonce::new(frame.field("nonce")?).map_err(|e| bad_field("nonce", e.to_string()))?;
    let ts = Timestamp::parse(frame.field("ts")?).map_err(|e| bad_field("ts", e.to_string()))?;
    let reauth = parse_flag("reauth", frame.field("reauth")?)?;
    let lts = parse_lts(frame.field("lts")?)?;
    frame.close()?;
    Ok(AuthRequest {
        uid,
        otp,
        sid,
        tid,
        nonce,
        ts,
        reauth,
        lts,
    })
}

/// Decodes an ack line, enforcing that `treauth` appears exactly when
/// `cont=1`.
pub fn decode_auth_ack(line: &str) -> Result<AuthAck, WireError> {
    let mut frame = FrameReader::open(line, ACK_MAGIC)?;
    let status = match frame.field("status")? {
        "OK" => AckStatus::Ok,
        "FAIL" => AckStatus::Fail,
        other => return Err(bad_field("status", format!("{other:?}"))),
    };
    let continuous_required = parse_flag("cont", frame.field("cont")?)?;
    let t_reauth_secs = if continuous_required {
        let t = frame.field("treauth")?;
        let ok = !t.is_empty() && t.len() <= 6 && t.bytes().all(|b| b.is_ascii_digit());
        if !ok {
            return Err(bad_field("treauth", format!("{t:?} is not seconds")));
        }
        Some(t.parse().expect("validated digits"))
    } else {
        None
    };
    let lts = parse_lts(frame.field("lts")?)?;
    frame.close()?;
    Ok(AuthAck {
        status,
        continuous_required,
        t_reauth_secs,
        lts,
    })
}
