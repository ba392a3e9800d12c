//! The wearable's side of the protocol: a credential store plus the
//! scan-to-request reflex. A scan either matches a stored credential
//! and yields exactly one authentication request, or it matches nothing
//! and the device stays silent; nothing in between ever goes on the
//! wire. While a continuous session runs, the device is pinned to the
//! terminal it authenticated and ignores challenges from any other.

use crate::challenge::{ChallengePayload, Sid, Tid, Timestamp};
use crate::otp::{totp_generate, OtpKey, TotpParams};
use crate::protocol::clock::LamportClock;
use crate::protocol::wire::{AckStatus, AuthAck, AuthRequest, Uid};

/// Opaque digest identifying a service's certificate; devices pin it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServiceFingerprint(String);

impl ServiceFingerprint {
    pub fn new(digest: impl Into<String>) -> Self {
        Self(digest.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// One enrolled account: everything the device needs to answer a
/// challenge from this service.
#[derive(Debug, Clone)]
pub struct Credential {
    pub service_fingerprint: ServiceFingerprint,
    pub sid: Sid,
    pub service_uri: String,
    pub uid: Uid,
    pub k_u: OtpKey,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssociateError {
    #[error("credential for uid {uid} at this service already exists")]
    Duplicate { uid: String },
}

/// What a scan led to. `NoMatch` means the device stays silent; the
/// reason is local diagnostics only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanDecision {
    NoMatch(NoMatchReason),
    /// Send this request to the credential's service. The fingerprint
    /// is what the device expects the channel to present.
    Respond {
        request: AuthRequest,
        service_uri: String,
        expected_fingerprint: ServiceFingerprint,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoMatchReason {
    /// No stored credential for the payload's service id.
    UnknownService,
    /// Pinned to another terminal while a session is live.
    OtherTerminal,
}

/// A device's credential store and session focus.
#[derive(Debug, Default)]
pub struct DeviceAgent {
    credentials: Vec<Credential>,
    /// Set while a continuous session runs: only this terminal's
    /// challenges are answered.
    pinned: Option<(Sid, Tid)>,
    /// The scan awaiting its ack, so an OK can pin the right terminal.
    in_flight: Option<(Sid, Tid)>,
    clock: LamportClock,
    totp: TotpParams,
}

impl DeviceAgent {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a credential after out-of-band enrollment. A second
    /// credential for the same (service fingerprint, uid) is refused.
    pub fn associate(&mut self, credential: Credential) -> Result<(), AssociateError> {
        let duplicate = self.credentials.iter().any(|c| {
            c.service_fingerprint == credential.service_fingerprint && c.uid == credential.uid
        });
        if duplicate {
            return Err(AssociateError::Duplicate {
                uid: credential.uid.as_str().to_string(),
            });
        }
        self.credentials.push(credential);
        Ok(())
    }

    pub fn credentials(&self) -> &[Credential] {
        &self.credentials
    }

    /// Reacts to a decoded challenge. On a match this mints a fresh
    /// TOTP and builds the one request this scan is allowed to send;
    /// the first credential enrolled for the service id answers when
    /// several match.
    pub fn on_scan(&mut self, payload: &ChallengePayload, now_secs: u64) -> ScanDecision {
        if let Some((_, pinned_tid)) = &self.pinned {
            if *pinned_tid != payload.tid {
                return ScanDecision::NoMatch(NoMatchReason::OtherTerminal);
            }
        }
        let Some(credential) = self.credentials.iter().find(|c| c.sid == payload.sid) else {
            return ScanDecision::NoMatch(NoMatchReason::UnknownService);
        };

        self.clock.update(payload.ts.secs(), now_secs);
        let lts = self.clock.tick(now_secs);
        let otp = totp_generate(&credential.k_u, now_secs, &self.totp, 6)
            .expect("device clock is past the epoch");
        let request = AuthRequest {
            uid: credential.uid.clone(),
            otp: otp.as_str().to_string(),
            sid: payload.sid.clone(),
            tid: payload.tid.clone(),
            nonce: payload.nonce.clone(),
            ts: Timestamp::from_secs(now_secs).expect("sim time fits 11 digits"),
            reauth: self.pinned.is_some(),
            lts,
        };
        self.in_flight = Some((payload.sid.clone(), payload.tid.clone()));
        ScanDecision::Respond {
            request,
            service_uri: credential.service_uri.clone(),
            expected_fingerprint: credential.service_fingerprint.clone(),
        }
    }

    /// Consumes the service's answer: merges its stamp and, when an OK
    /// ack asks for continuous authentication, pins the terminal that
    /// was just authenticated. A FAIL against the pinned terminal drops
    /// the pin: the session it referred to is no longer good, and the
    /// next scan will start over as a fresh login.
    pub fn on_ack(&mut self, ack: &AuthAck, now_secs: u64) {
        self.clock.update(ack.lts, now_secs);
        let in_flight = self.in_flight.take();
        match ack.status {
            AckStatus::Ok if ack.continuous_required => {
                if let Some(pin) = in_flight {
                    self.pinned = Some(pin);
                }
            }
            AckStatus::Ok => {}
            AckStatus::Fail => {
                if in_flight.is_some() && in_flight == self.pinned {
                    self.pinned = None;
                }
            }
        }
    }

    /// Leaves continuous mode (session ended or user logged out).
    pub fn end_continuous(&mut self) {
        self.pinned = None;
    }

    pub fn pinned_terminal(&self) -> Option<&Tid> {
        self.pinned.as_ref().map(|(_, tid)| tid)
    }

    pub fn clock(&self) -> &LamportClock {
        &self.clock
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::challenge::{Nonce, PayloadOptions};

    fn test_key() -> OtpKey {
        OtpKey::new(b"12345678901234567890".to_vec()).unwrap()
    }

    fn credential(sid: &str, uid: &str) -> Credential {
        Credential {
            service_fingerprint: ServiceFingerprint::new("fp-1"),
            sid: Sid::new(sid).unwrap(),
            service_uri: "gauth://service".to_string(),
            uid: Uid::new(uid).unwrap(),
            k_u: test_key(),
        }
    }

    fn payload(sid: &str, tid: &str) -> ChallengePayload {
        ChallengePayload {
            sid: Sid::new(sid).unwrap(),
            tid: Tid::new(tid).unwrap(),
            nonce: Nonce::new("654321").unwrap(),
            ts: Timestamp::from_secs(1_700_000).unwrap(),
            options: PayloadOptions::new(true),
        }
    }

    #[test]
    fn duplicate_association_is_refused() {
        let mut device = DeviceAgent::new();
        device.associate(credential("1234", "alice")).unwrap();
        assert!(device.associate(credential("1234", "alice")).is_err());
        // Same service, different account is fine.
        device.associate(credential("1234", "bob")).unwrap();
    }

    #[test]
    fn unknown_service_id_yields_silence() {
        let mut device = DeviceAgent::new();
        device.associate(credential("1234", "alice")).unwrap();
        assert_eq!(
            device.on_scan(&payload("9999", "T01"), 1_700_010),
            ScanDecision::NoMatch(NoMatchReason::UnknownService)
        );
    }

    #[test]
    fn matching_scan_builds_one_fresh_request() {
        let mut device = DeviceAgent::new();
        device.associate(credential("1234", "alice")).unwrap();
        let ScanDecision::Respond { request, .. } =
            device.on_scan(&payload("1234", "T01"), 1_700_010)
        else {
            panic!("expected a response");
        };
        assert_eq!(request.uid.as_str(), "alice");
        assert_eq!(request.nonce.as_str(), "654321");
        assert_eq!(request.tid.as_str(), "T01");
        assert!(!request.reauth);
        let expected = totp_generate(&test_key(), 1_700_010, &TotpParams::default(), 6).unwrap();
        assert_eq!(request.otp, expected.as_str());
        // The challenge stamp was merged before the request was stamped.
        assert!(request.lts > 1_700_010);
    }

    #[test]
    fn ok_continuous_ack_pins_the_terminal() {
        let mut device = DeviceAgent::new();
        device.associate(credential("1234", "alice")).unwrap();
        let _ = device.on_scan(&payload("1234", "T01"), 1_700_010);
        device.on_ack(
            &AuthAck {
                status: AckStatus::Ok,
                continuous_required: true,
                t_reauth_secs: Some(5),
                lts: 1_700_011,
            },
            1_700_011,
        );
        assert_eq!(device.pinned_terminal().unwrap().as_str(), "T01");

        // Another terminal's challenge is ignored while pinned, even
        // for the right service.
        assert_eq!(
            device.on_scan(&payload("1234", "T02"), 1_700_012),
            ScanDecision::NoMatch(NoMatchReason::OtherTerminal)
        );
        // The pinned terminal's challenges are re-authentication.
        let ScanDecision::Respond { request, .. } =
            device.on_scan(&payload("1234", "T01"), 1_700_015)
        else {
            panic!("expected a response");
        };
        assert!(request.reauth);

        device.end_continuous();
        assert!(device.pinned_terminal().is_none());
    }

    #[test]
    fn failed_ack_does_not_pin() {
        let mut device = DeviceAgent::new();
        device.associate(credential("1234", "alice")).unwrap();
        let _ = device.on_scan(&payload("1234", "T01"), 1_700_010);
        device.on_ack(
            &AuthAck {
                status: AckStatus::Fail,
                continuous_required: false,
                t_reauth_secs: None,
                lts: 1_700_011,
            },
            1_700_011,
        );
        assert!(device.pinned_terminal().is_none());
    }

    #[test]
    fn failed_reauth_against_the_pinned_terminal_unpins() {
        let ok = AuthAck {
            status: AckStatus::Ok,
            continuous_required: true,
            t_reauth_secs: Some(5),
            lts: 1_700_011,
        };
        let fail = AuthAck {
            status: AckStatus::Fail,
            continuous_required: false,
            t_reauth_secs: None,
            lts: 1_700_020,
        };

        let mut device = DeviceAgent::new();
        device.associate(credential("1234", "alice")).unwrap();
        let _ = device.on_scan(&payload("1234", "T01"), 1_700_010);
        device.on_ack(&ok, 1_700_011);
        assert!(device.pinned_terminal().is_some());

        // The session died server-side; the refused re-auth tells the
        // device to forget the pin so the next scan is a fresh login.
        let ScanDecision::Respond { request, .. } =
            device.on_scan(&payload("1234", "T01"), 1_700_019)
        else {
            panic!("expected a response");
        };
        assert!(request.reauth);
        device.on_ack(&fail, 1_700_020);
        assert!(device.pinned_terminal().is_none());

        let ScanDecision::Respond { request, .. } =
            device.on_scan(&payload("1234", "T01"), 1_700_025)
        else {
            panic!("expected a response");
        };
        assert!(!request.reauth, "after unpinning the scan is a login again");
    }
}
