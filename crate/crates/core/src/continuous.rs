//! Service-side lifecycle of a continuously authenticated session.
//!
//! While a session is active the service expects a fresh answer every
//! `t_reauth`; deadlines sit on a fixed grid anchored at session start,
//! so an always-present device produces a strict cadence. Missing the
//! lock timeout after a deadline locks the session; the lock screen
//! keeps the last challenge so the returning user is re-admitted by
//! scanning it, with no new login ceremony. A session locked for a
//! whole grace period is logged out. Every transition out of `Active`
//! after the user walked away is accounted as a window of exposure:
//! the stretch a deserted terminal stayed usable.

use crate::challenge::ChallengePayload;
use crate::challenge::Tid;
use crate::protocol::wire::Uid;

/// Timing policy for one terminal's continuous sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReauthPolicy {
    /// Period between re-authentication challenges.
    pub t_reauth_ms: u64,
    /// How long after a challenge the service waits before locking.
    pub lock_timeout_ms: u64,
    /// Lock-to-logout grace, in re-authentication periods.
    pub locked_grace_periods: u32,
}

impl Default for ReauthPolicy {
    fn default() -> Self {
        Self {
            t_reauth_ms: 5_000,
            lock_timeout_ms: 1_000,
            locked_grace_periods: 10,
        }
    }
}

impl ReauthPolicy {
    pub fn t_reauth_secs(&self) -> u64 {
        self.t_reauth_ms / 1000
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Active,
    Locked,
    LoggedOut,
}

/// Why a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    UserLogout,
    LockExpired,
}

/// A challenge slot armed at a deadline. The sequence number guards the
/// lock timer: a timer outlived by newer activity must not fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmedChallenge {
    pub seq: u64,
    pub lock_at_ms: u64,
    pub next_deadline_ms: u64,
}

/// One measured window of exposure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExposureRecord {
    pub walk_away_ms: u64,
    /// When the session left `Active` (lock or logout).
    pub detect_ms: u64,
}

impl ExposureRecord {
    /// The window of exposure W: how long the deserted session stayed
    /// usable.
    pub fn window_ms(&self) -> u64 {
        self.detect_ms - self.walk_away_ms
    }
}

/// Full state of one session.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub uid: Uid,
    pub tid: Tid,
    pub policy: ReauthPolicy,
    phase: Phase,
    /// Grid anchor: deadlines are `anchor + k * t_reauth`.
    anchor_ms: u64,
    next_deadline_ms: Option<u64>,
    challenge_seq: u64,
    issued_at_ms: u64,
    last_accept_ms: Option<u64>,
    locked_at_ms: Option<u64>,
    last_challenge: Option<ChallengePayload>,
    pending_walk_away_ms: Option<u64>,
    exposure: Vec<ExposureRecord>,
    end_reason: Option<EndReason>,
}

/// What an accepted re-authentication changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReauthEffect {
    /// Session was active and stays active.
    Refreshed,
    /// Session was locked; the user is transparently re-admitted and
    /// the deadline grid resumes at `next_deadline_ms`.
    Unlocked { next_deadline_ms: u64 },
}

impl SessionState {
    /// Opens a session that just authenticated. The first
    /// re-authentication deadline is one period out.
    pub fn start(uid: Uid, tid: Tid, policy: ReauthPolicy, now_ms: u64) -> Self {
        Self {
            uid,
            tid,
            policy,
            phase: Phase::Active,
            anchor_ms: now_ms,
            next_deadline_ms: Some(now_ms + policy.t_reauth_ms),
            challenge_seq: 0,
            issued_at_ms: now_ms,
            last_accept_ms: Some(now_ms),
            locked_at_ms: None,
            last_challenge: None,
            pending_walk_away_ms: None,
            exposure: Vec::new(),
            end_reason: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Sequence number of the most recently armed challenge.
    pub fn challenge_seq(&self) -> u64 {
        self.challenge_seq
    }

    pub fn next_deadline_ms(&self) -> Option<u64> {
        self.next_deadline_ms
    }

    pub fn last_challenge(&self) -> Option<&ChallengePayload> {
        self.last_challenge.as_ref()
    }

    pub fn exposure(&self) -> &[ExposureRecord] {
        &self.exposure
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.end_reason
    }

    pub fn locked_at_ms(&self) -> Option<u64> {
        self.locked_at_ms
    }

    /// Handles a deadline tick. Only a matching, still-active deadline
    /// arms a new challenge slot; anything stale (session locked or
    /// ended meanwhile, or a superseded duplicate) is a no-op.
    pub fn arm_deadline(&mut self, at_ms: u64) -> Option<ArmedChallenge> {
        if self.phase != Phase::Active || self.next_deadline_ms != Some(at_ms) {
            return None;
        }
        self.challenge_seq += 1;
        self.issued_at_ms = at_ms;
        let next = at_ms + self.policy.t_reauth_ms;
        self.next_deadline_ms = Some(next);
        Some(ArmedChallenge {
            seq: self.challenge_seq,
            lock_at_ms: at_ms + self.policy.lock_timeout_ms,
            next_deadline_ms: next,
        })
    }

    /// Remembers the challenge now on display; the lock screen keeps
    /// showing it so a returning user can be re-admitted.
    pub fn record_challenge(&mut self, payload: ChallengePayload) {
        self.last_challenge = Some(payload);
    }

    /// Fires a lock timer for challenge slot `seq`. Locks only if that
    /// slot is still the current one and no answer arrived since it was
    /// issued.
    pub fn try_lock(&mut self, seq: u64, now_ms: u64) -> bool {
        let answered = self
            .last_accept_ms
            .is_some_and(|accept| accept >= self.issued_at_ms);
        if self.phase != Phase::Active || seq != self.challenge_seq || answered {
            return false;
        }
        self.phase = Phase::Locked;
        self.locked_at_ms = Some(now_ms);
        self.next_deadline_ms = None;
        self.resolve_exposure(now_ms);
        true
    }

    /// Fires the lock-grace timer. Ends the session only if it is still
    /// locked from the same lock instant.
    pub fn try_grace_logout(&mut self, locked_at_ms: u64, now_ms: u64) -> bool {
        if self.phase == Phase::Locked && self.locked_at_ms == Some(locked_at_ms) {
            self.end(EndReason::LockExpired, now_ms);
            true
        } else {
            false
        }
    }

    /// Applies an accepted re-authentication for this session's user.
    pub fn on_reauth_accepted(&mut self, now_ms: u64) -> ReauthEffect {
        debug_assert!(
            self.phase != Phase::LoggedOut,
            "verify rejects ended sessions"
        );
        self.last_accept_ms = Some(now_ms);
        match self.phase {
            Phase::Locked => {
                self.phase = Phase::Active;
                self.locked_at_ms = None;
                let next = self.resume_grid(now_ms);
                self.next_deadline_ms = Some(next);
                ReauthEffect::Unlocked {
                    next_deadline_ms: next,
                }
            }
            _ => ReauthEffect::Refreshed,
        }
    }

    /// Notes that the user left the terminal. Only meaningful while the
    /// session is active (a locked terminal exposes nothing).
    pub fn walk_away(&mut self, now_ms: u64) {
        if self.phase == Phase::Active {
            self.pending_walk_away_ms = Some(now_ms);
        }
    }

    /// Cancels exposure accounting (the user came back before the
    /// session left `Active`).
    pub fn returned(&mut self) {
        self.pending_walk_away_ms = None;
    }

    /// Ends the session. Idempotent: a second end keeps the first
    /// reason.
    pub fn end(&mut self, reason: EndReason, now_ms: u64) {
        if self.phase == Phase::LoggedOut {
            return;
        }
        if self.phase == Phase::Active {
            self.resolve_exposure(now_ms);
        }
        self.phase = Phase::LoggedOut;
        self.next_deadline_ms = None;
        self.locked_at_ms = None;
        self.end_reason = Some(reason);
    }

    /// First grid point strictly after `now_ms`.
    fn resume_grid(&self, now_ms: u64) -> u64 {
        let t = self.policy.t_reauth_ms;
        let periods = (now_ms - self.anchor_ms) / t + 1;
        self.anchor_ms + periods * t
    }

    fn resolve_exposure(&mut self, now_ms: u64) {
        if let Some(walk_away_ms) = self.pending_walk_away_ms.take() {
            self.exposure.push(ExposureRecord {
                walk_away_ms,
                detect_ms: now_ms,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(now_ms: u64) -> SessionState {
        SessionState::start(
            Uid::new("alice").unwrap(),
            Tid::new("T01").unwrap(),
            ReauthPolicy::default(),
            now_ms,
        )
    }

    #[test]
    fn deadlines_sit_on_the_start_anchored_grid() {
        let mut s = session(100_000);
        assert_eq!(s.next_deadline_ms(), Some(105_000));
        let armed = s.arm_deadline(105_000).unwrap();
        assert_eq!(armed.lock_at_ms, 106_000);
        assert_eq!(armed.next_deadline_ms, 110_000);
        // An answer lands mid-period; the grid does not re-anchor.
        s.on_reauth_accepted(105_400);
        assert_eq!(s.next_deadline_ms(), Some(110_000));
    }

    #[test]
    fn answered_challenges_do_not_lock() {
        let mut s = session(0);
        let armed = s.arm_deadline(5_000).unwrap();
        s.on_reauth_accepted(5_300);
        assert!(!s.try_lock(armed.seq, 6_000));
        assert_eq!(s.phase(), Phase::Active);
    }

    #[test]
    fn missed_challenge_locks_at_the_timeout() {
        let mut s = session(0);
        let armed = s.arm_deadline(5_000).unwrap();
        assert!(s.try_lock(armed.seq, 6_000));
        assert_eq!(s.phase(), Phase::Locked);
        // Deadlines pause while locked.
        assert_eq!(s.next_deadline_ms(), None);
        assert!(s.arm_deadline(10_000).is_none());
    }

    #[test]
    fn stale_lock_timers_are_ignored() {
        let mut s = session(0);
        let first = s.arm_deadline(5_000).unwrap();
        s.on_reauth_accepted(5_300);
        let second = s.arm_deadline(10_000).unwrap();
        assert_ne!(first.seq, second.seq);
        // The first slot's timer fires late; the second is current.
        assert!(!s.try_lock(first.seq, 10_500));
        assert_eq!(s.phase(), Phase::Active);
    }

    #[test]
    fn unlock_resumes_the_grid_at_the_next_point() {
        let mut s = session(0);
        let armed = s.arm_deadline(5_000).unwrap();
        s.try_lock(armed.seq, 6_000);
        // Re-admitted mid-period 8.2 s in: next grid point is 10 s.
        let effect = s.on_reauth_accepted(8_200);
        assert_eq!(
            effect,
            ReauthEffect::Unlocked {
                next_deadline_ms: 10_000
            }
        );
        assert_eq!(s.phase(), Phase::Active);
    }

    #[test]
    fn walk_away_right_after_an_answer_exposes_a_full_period_plus_timeout() {
        // T=5s, L=1s: leave at the moment of a successful answer and
        // the deserted session stays usable for exactly 6 s.
        let mut s = session(0);
        let armed = s.arm_deadline(5_000).unwrap();
        s.on_reauth_accepted(5_000);
        assert!(!s.try_lock(armed.seq, 6_000));
        s.walk_away(5_000);
        let armed = s.arm_deadline(10_000).unwrap();
        assert!(s.try_lock(armed.seq, 11_000));
        let record = s.exposure().last().unwrap();
        assert_eq!(record.window_ms(), 6_000);
    }

    #[test]
    fn walk_away_late_in_the_period_exposes_the_remainder_plus_timeout() {
        // Leaving 4 s into a 5 s period exposes 1 s + the 1 s timeout.
        let mut s = session(0);
        s.walk_away(4_000);
        let armed = s.arm_deadline(5_000).unwrap();
        assert!(s.try_lock(armed.seq, 6_000));
        let record = s.exposure().last().unwrap();
        assert_eq!(record.window_ms(), 2_000);
    }

    #[test]
    fn returning_before_detection_cancels_the_exposure_sample() {
        let mut s = session(0);
        s.walk_away(1_000);
        s.returned();
        let armed = s.arm_deadline(5_000).unwrap();
        s.try_lock(armed.seq, 6_000);
        assert!(s.exposure().is_empty());
    }

    #[test]
    fn grace_logout_fires_only_for_the_same_lock() {
        let mut s = session(0);
        let armed = s.arm_deadline(5_000).unwrap();
        s.try_lock(armed.seq, 6_000);
        let locked_at = s.locked_at_ms().unwrap();

        // User comes back, session unlocks, then locks again later.
        s.on_reauth_accepted(8_000);
        let armed = s.arm_deadline(10_000).unwrap();
        s.try_lock(armed.seq, 11_000);

        // The stale grace timer must not log the session out.
        assert!(!s.try_grace_logout(locked_at, 56_000));
        assert_eq!(s.phase(), Phase::Locked);
        assert!(s.try_grace_logout(11_000, 61_000));
        assert_eq!(s.phase(), Phase::LoggedOut);
        assert_eq!(s.end_reason(), Some(EndReason::LockExpired));
    }

    #[test]
    fn end_is_idempotent_and_keeps_the_first_reason() {
        let mut s = session(0);
        s.end(EndReason::UserLogout, 30_000);
        s.end(EndReason::LockExpired, 31_000);
        assert_eq!(s.end_reason(), Some(EndReason::UserLogout));
        assert!(s.arm_deadline(35_000).is_none());
    }

    #[test]
    fn logout_while_deserted_still_closes_the_exposure_window() {
        let mut s = session(0);
        s.walk_away(3_000);
        s.end(EndReason::UserLogout, 4_500);
        assert_eq!(s.exposure()[0].window_ms(), 1_500);
    }
}
