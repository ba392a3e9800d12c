//! The service: the only party that decides. It keeps the user and
//! terminal registries, issues or verifies nonces depending on who
//! drives the terminal's UI, gates every authentication on OTP validity
//! AND nonce validity, and owns the continuous-session lifecycle.
//! Failures get precise internal reasons for the audit log while the
//! wire ack stays a bare OK/FAIL.

use std::collections::HashMap;

use crate::challenge::{ChallengePayload, Nonce, NonceSource, PayloadOptions, Sid, Tid, Timestamp};
use crate::continuous::{EndReason, Phase, ReauthEffect, ReauthPolicy, SessionState};
use crate::otp::{
    constant_time_digits_eq, hotp_verify_window, totp_verify, HotpCounter, HotpOutcome, OtpKey,
    TotpOutcome, TotpParams,
};
use crate::protocol::clock::LamportClock;
use crate::protocol::device::ServiceFingerprint;
use crate::protocol::wire::{AckStatus, AuthAck, AuthRequest, Uid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Online-guessing brake: after `max_failures` consecutive credential
/// failures within `window_secs` from one (uid, origin) pair, that pair
/// is refused for `refusal_secs`. Keying by origin as well keeps an
/// attacker from locking the real user out by spamming failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThrottleConfig {
    pub max_failures: u32,
    pub window_secs: u64,
    pub refusal_secs: u64,
}

impl Default for ThrottleConfig {
    fn default() -> Self {
        Self {
            max_failures: 5,
            window_secs: 60,
            refusal_secs: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub sid: Sid,
    pub fingerprint: ServiceFingerprint,
    /// Wall-clock seconds at simulation tick zero.
    pub epoch_secs: u64,
    pub totp: TotpParams,
    /// Lifetime of an unanswered service-issued nonce.
    pub pending_nonce_expiry_secs: u64,
    /// `None` disables the online-guessing brake.
    pub throttle: Option<ThrottleConfig>,
    /// Seed for the service-side nonce generator.
    pub nonce_seed: u64,
}

impl ServiceConfig {
    pub fn new(sid: Sid, fingerprint: ServiceFingerprint) -> Self {
        Self {
            sid,
            fingerprint,
            epoch_secs: 1_700_000_000,
            totp: TotpParams::default(),
            pending_nonce_expiry_secs: 120,
            throttle: Some(ThrottleConfig::default()),
            nonce_seed: 0,
        }
    }
}

/// Who renders the terminal's screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UiMode {
    /// The service pushes both challenges and session UI to the screen.
    ServiceDriven,
    /// The terminal renders on its own, minting nonces from a shared
    /// HOTP key; the service only reports outcomes back.
    TerminalDriven,
}

/// A terminal known to the service.
#[derive(Debug)]
pub struct TerminalRegistration {
    pub tid: Tid,
    pub sid: Sid,
    pub ui_mode: UiMode,
    /// Nonce key, present exactly when the terminal drives its UI.
    pub k_n: Option<OtpKey>,
    /// Verifier window state for terminal-minted nonces.
    pub nonce_counter: HotpCounter,
    /// Continuous-authentication policy; `None` means one-shot logins.
    pub reauth_policy: Option<ReauthPolicy>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegisterError {
    #[error("uid {0} is already registered")]
    DuplicateUser(String),
    #[error("tid {0} is already registered")]
    DuplicateTerminal(String),
    #[error("terminal {0} belongs to a different service")]
    ForeignTerminal(String),
    #[error("terminal-driven registration requires a nonce key, service-driven forbids one")]
    NonceKeyMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IssueError {
    #[error("terminal {0} is not registered")]
    UnknownTerminal(String),
    #[error("terminal {0} mints its own nonces")]
    TerminalDrivenUi(String),
}

/// Internal refusal reasons; audit-log material, never on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    Throttled,
    WrongService,
    UnknownTerminal,
    UnknownUid,
    BadOtp,
    /// Re-auth flagged request for a terminal with no session.
    NoSession,
    /// Someone else's session is live on that terminal.
    SessionOccupied,
    /// No challenge outstanding for the terminal.
    NoPendingChallenge,
    NonceMismatch,
    /// Exact nonce already spent: the replay signature.
    NonceConsumed,
    NonceExpired,
    /// Terminal-minted nonce outside the verifier window.
    NonceOutsideWindow,
}

impl FailReason {
    /// Only credential failures feed the guessing throttle; nonce
    /// staleness is what an honest device shown an old code produces.
    fn counts_toward_throttle(self) -> bool {
        matches!(self, FailReason::UnknownUid | FailReason::BadOtp)
    }

    /// Stable kebab-case tag for traces and CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            FailReason::Throttled => "throttled",
            FailReason::WrongService => "wrong-service",
            FailReason::UnknownTerminal => "unknown-terminal",
            FailReason::UnknownUid => "unknown-uid",
            FailReason::BadOtp => "bad-otp",
            FailReason::NoSession => "no-session",
            FailReason::SessionOccupied => "session-occupied",
            FailReason::NoPendingChallenge => "no-pending-challenge",
            FailReason::NonceMismatch => "nonce-mismatch",
            FailReason::NonceConsumed => "nonce-consumed",
            FailReason::NonceExpired => "nonce-expired",
            FailReason::NonceOutsideWindow => "nonce-outside-window",
        }
    }
}

/// What a verification decided, with enough detail to drive UI and
/// session machinery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    Accepted {
        uid: Uid,
        tid: Tid,
        /// `Some` when a continuous session absorbed the answer.
        reauth_effect: Option<ReauthEffect>,
        /// True when this acceptance opened a new session.
        session_started: bool,
    },
    Refused(FailReason),
}

/// One audit line: the distinct reason stays here, not on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub at_ms: u64,
    pub origin: String,
    pub uid: String,
    pub tid: String,
    pub outcome: Result<(), FailReason>,
}

#[derive(Debug, Clone, Default)]
struct ThrottleState {
    streak: u32,
    streak_started_ms: u64,
    refuse_until_ms: Option<u64>,
}

#[derive(Debug, Clone)]
struct PendingNonce {
    nonce: Nonce,
    issued_at_ms: u64,
    consumed: bool,
}

pub struct Service {
    config: ServiceConfig,
    users: HashMap<Uid, OtpKey>,
    terminals: HashMap<Tid, TerminalRegistration>,
    pending: HashMap<Tid, PendingNonce>,
    sessions: HashMap<Tid, SessionState>,
    throttle: HashMap<(String, String), ThrottleState>,
    nonce_source: NonceSource,
    clock: LamportClock,
    audit: Vec<AuditEntry>,
}

impl Service {
    pub fn new(config: ServiceConfig) -> Self {
        let nonce_source = NonceSource::ServiceRandom {
            rng: Box::new(ChaCha8Rng::seed_from_u64(config.nonce_seed)),
        };
        Self {
            config,
            users: HashMap::new(),
            terminals: HashMap::new(),
            pending: HashMap::new(),
            sessions: HashMap::new(),
            throttle: HashMap::new(),
            nonce_source,
            clock: LamportClock::new(),
            audit: Vec::new(),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &ServiceFingerprint {
        &self.config.fingerprint
    }

    pub fn clock(&self) -> &LamportClock {
        &self.clock
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// Wall-clock seconds for a simulation tick.
    pub fn wall_secs(&self, now_ms: u64) -> u64 {
        self.config.epoch_secs + now_ms / 1000
    }

    pub fn register_user(&mut self, uid: Uid, k_u: OtpKey) -> Result<(), RegisterError> {
        if self.users.contains_key(&uid) {
            return Err(RegisterError::DuplicateUser(uid.as_str().to_string()));
        }
        self.users.insert(uid, k_u);
        Ok(())
    }

    pub fn register_terminal(&mut self, reg: TerminalRegistration) -> Result<(), RegisterError> {
        if reg.sid != self.config.sid {
            return Err(RegisterError::ForeignTerminal(reg.tid.as_str().to_string()));
        }
        if self.terminals.contains_key(&reg.tid) {
            return Err(RegisterError::DuplicateTerminal(
                reg.tid.as_str().to_string(),
            ));
        }
        let key_matches_mode = match reg.ui_mode {
            UiMode::TerminalDriven => reg.k_n.is_some(),
            UiMode::ServiceDriven => reg.k_n.is_none(),
        };
        if !key_matches_mode {
            return Err(RegisterError::NonceKeyMismatch);
        }
        self.terminals.insert(reg.tid.clone(), reg);
        Ok(())
    }

    pub fn terminal(&self, tid: &Tid) -> Option<&TerminalRegistration> {
        self.terminals.get(tid)
    }

    pub fn session(&self, tid: &Tid) -> Option<&SessionState> {
        self.sessions.get(tid)
    }

    pub fn session_mut(&mut self, tid: &Tid) -> Option<&mut SessionState> {
        self.sessions.get_mut(tid)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionState> {
        self.sessions.values()
    }

    /// Issues a fresh challenge for a service-driven terminal, retiring
    /// whatever nonce was pending there.
    pub fn issue_challenge(
        &mut self,
        tid: &Tid,
        now_ms: u64,
    ) -> Result<ChallengePayload, IssueError> {
        let reg = self
            .terminals
            .get(tid)
            .ok_or_else(|| IssueError::UnknownTerminal(tid.as_str().to_string()))?;
        if reg.ui_mode == UiMode::TerminalDriven {
            return Err(IssueError::TerminalDrivenUi(tid.as_str().to_string()));
        }
        let continuous = reg.reauth_policy.is_some();
        let nonce = self.nonce_source.next_nonce();
        self.pending.insert(
            tid.clone(),
            PendingNonce {
                nonce: nonce.clone(),
                issued_at_ms: now_ms,
                consumed: false,
            },
        );
        Ok(ChallengePayload {
            sid: self.config.sid.clone(),
            tid: tid.clone(),
            nonce,
            ts: Timestamp::from_secs(self.wall_secs(now_ms)).expect("sim time fits 11 digits"),
            options: PayloadOptions::new(continuous),
        })
    }

    /// Verifies one authentication request and answers it. The gate is
    /// strict: the OTP and the nonce must both be valid, the nonce is
    /// spent by acceptance, and the ack never explains a refusal.
    pub fn handle_auth_request(
        &mut self,
        req: &AuthRequest,
        origin: &str,
        now_ms: u64,
    ) -> (AuthAck, VerifyOutcome) {
        let now_secs = self.wall_secs(now_ms);
        self.clock.update(req.lts, now_secs);

        let outcome = self.verify(req, origin, now_ms, now_secs);
        self.settle_throttle(req, origin, now_ms, &outcome);
        self.audit.push(AuditEntry {
            at_ms: now_ms,
            origin: origin.to_string(),
            uid: req.uid.as_str().to_string(),
            tid: req.tid.as_str().to_string(),
            outcome: match &outcome {
                VerifyOutcome::Accepted { .. } => Ok(()),
                VerifyOutcome::Refused(reason) => Err(*reason),
            },
        });

        let lts = self.clock.tick(now_secs);
        let ack = match &outcome {
            VerifyOutcome::Accepted { tid, .. } => {
                let policy = self
                    .terminals
                    .get(tid)
                    .and_then(|reg| reg.reauth_policy.as_ref());
                AuthAck {
                    status: AckStatus::Ok,
                    continuous_required: policy.is_some(),
                    t_reauth_secs: policy.map(|p| p.t_reauth_secs()),
                    lts,
                }
            }
            VerifyOutcome::Refused(_) => AuthAck {
                status: AckStatus::Fail,
                continuous_required: false,
                t_reauth_secs: None,
                lts,
            },
        };
        (ack, outcome)
    }

    fn verify(
        &mut self,
        req: &AuthRequest,
        origin: &str,
        now_ms: u64,
        now_secs: u64,
    ) -> VerifyOutcome {
        use VerifyOutcome::Refused;

        if self.throttled(req, origin, now_ms) {
            return Refused(FailReason::Throttled);
        }
        if req.sid != self.config.sid {
            return Refused(FailReason::WrongService);
        }
        if !self.terminals.contains_key(&req.tid) {
            return Refused(FailReason::UnknownTerminal);
        }
        let Some(k_u) = self.users.get(&req.uid) else {
            return Refused(FailReason::UnknownUid);
        };
        match totp_verify(k_u, &req.otp, now_secs, &self.config.totp) {
            Ok(TotpOutcome::Accepted { .. }) => {}
            Ok(TotpOutcome::Rejected) | Err(_) => return Refused(FailReason::BadOtp),
        }

        // Session occupancy comes before the nonce so a refused request
        // cannot spend the session's outstanding challenge.
        let session_phase = self.sessions.get(&req.tid).map(|s| s.phase());
        match session_phase {
            Some(_) => {
                let session = &self.sessions[&req.tid];
                if session.uid != req.uid {
                    return Refused(FailReason::SessionOccupied);
                }
            }
            None if req.reauth => return Refused(FailReason::NoSession),
            None => {}
        }

        if let Some(reason) = self.check_and_spend_nonce(req, now_ms) {
            return Refused(reason);
        }

        // Both factors passed: apply the session consequences.
        let (reauth_effect, session_started) = match self.sessions.get_mut(&req.tid) {
            Some(session) => (Some(session.on_reauth_accepted(now_ms)), false),
            None => {
                let policy = self.terminals[&req.tid].reauth_policy;
                match policy {
                    Some(policy) => {
                        let session =
                            SessionState::start(req.uid.clone(), req.tid.clone(), policy, now_ms);
                        self.sessions.insert(req.tid.clone(), session);
                        (None, true)
                    }
                    None => (None, false),
                }
            }
        };
        VerifyOutcome::Accepted {
            uid: req.uid.clone(),
            tid: req.tid.clone(),
            reauth_effect,
            session_started,
        }
    }

    /// Nonce side of the gate. Consumes (or advances past) the nonce
    /// exactly when it is valid; every refusal leaves verifier state
    /// untouched.
    fn check_and_spend_nonce(&mut self, req: &AuthRequest, now_ms: u64) -> Option<FailReason> {
        let reg = self.terminals.get_mut(&req.tid).expect("checked above");
        match reg.ui_mode {
            UiMode::ServiceDriven => {
                let Some(pending) = self.pending.get_mut(&req.tid) else {
                    return Some(FailReason::NoPendingChallenge);
                };
                if !constant_time_digits_eq(pending.nonce.as_str(), req.nonce.as_str()) {
                    return Some(FailReason::NonceMismatch);
                }
                if pending.consumed {
                    return Some(FailReason::NonceConsumed);
                }
                let age_ms = now_ms.saturating_sub(pending.issued_at_ms);
                if age_ms > self.config.pending_nonce_expiry_secs * 1000 {
                    return Some(FailReason::NonceExpired);
                }
                pending.consumed = true;
                None
            }
            UiMode::TerminalDriven => {
                let k_n = reg.k_n.as_ref().expect("terminal-driven has a nonce key");
                match hotp_verify_window(k_n, req.nonce.as_str(), &mut reg.nonce_counter) {
                    Ok(HotpOutcome::Accepted { .. }) => None,
                    Ok(HotpOutcome::Rejected) | Err(_) => Some(FailReason::NonceOutsideWindow),
                }
            }
        }
    }

    fn throttled(&mut self, req: &AuthRequest, origin: &str, now_ms: u64) -> bool {
        if self.config.throttle.is_none() {
            return false;
        }
        let key = (req.uid.as_str().to_string(), origin.to_string());
        match self.throttle.get(&key).and_then(|s| s.refuse_until_ms) {
            Some(until) => now_ms < until,
            None => false,
        }
    }

    fn settle_throttle(
        &mut self,
        req: &AuthRequest,
        origin: &str,
        now_ms: u64,
        outcome: &VerifyOutcome,
    ) {
        let Some(throttle) = self.config.throttle else {
            return;
        };
        let key = (req.uid.as_str().to_string(), origin.to_string());
        match outcome {
            VerifyOutcome::Accepted { .. } => {
                self.throttle.remove(&key);
            }
            VerifyOutcome::Refused(reason) if reason.counts_toward_throttle() => {
                let state = self.throttle.entry(key).or_default();
                let window_ms = throttle.window_secs * 1000;
                if state.streak == 0 || now_ms.saturating_sub(state.streak_started_ms) > window_ms {
                    state.streak = 1;
                    state.streak_started_ms = now_ms;
                } else {
                    state.streak += 1;
                }
                if state.streak >= throttle.max_failures {
                    state.refuse_until_ms = Some(now_ms + throttle.refusal_secs * 1000);
                    state.streak = 0;
                }
            }
            VerifyOutcome::Refused(_) => {}
        }
    }

    /// Ends any session on the terminal and retires its pending nonce.
    /// Returns the closed session for final accounting; idempotent.
    pub fn end_session(
        &mut self,
        tid: &Tid,
        reason: EndReason,
        now_ms: u64,
    ) -> Option<SessionState> {
        self.pending.remove(tid);
        let mut session = self.sessions.remove(tid)?;
        session.end(reason, now_ms);
        Some(session)
    }

    /// True when any session is in the given phase.
    pub fn any_session_in(&self, phase: Phase) -> bool {
        self.sessions.values().any(|s| s.phase() == phase)
    }
}
