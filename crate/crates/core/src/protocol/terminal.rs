//! The terminal: a screen with an identity. It either renders exactly
//! what the service pushes to it, or mints its own single-use codes
//! from a shared key and learns outcomes after the fact. Either way it
//! never sees user secrets; the displayed payload is public.

use crate::challenge::{ChallengePayload, NonceSource, PayloadOptions, Sid, Tid, Timestamp};
use crate::otp::OtpKey;
use crate::protocol::service::UiMode;
use crate::protocol::wire::Uid;

/// What the screen is showing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Screen {
    /// Login challenge up, nobody admitted.
    Login,
    /// A user's session is on screen.
    Session(Uid),
    /// Session hidden behind the lock screen; the last challenge stays
    /// visible so the returning user can re-admit without any input.
    Locked(Uid),
}

/// Instruction from the service to the screen. Service-driven
/// terminals receive `Display` pushes; terminal-driven ones only get
/// the outcome notifications and redraw on their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminalDirective {
    Display(ChallengePayload),
    Admit(Uid),
    Lock,
    Unlock,
    EndSession,
}

#[derive(Debug)]
pub struct Terminal {
    tid: Tid,
    sid: Sid,
    ui_mode: UiMode,
    continuous: bool,
    nonce_source: Option<NonceSource>,
    screen: Screen,
    displayed: Option<ChallengePayload>,
}

impl Terminal {
    pub fn service_driven(tid: Tid, sid: Sid, continuous: bool) -> Self {
        Self {
            tid,
            sid,
            ui_mode: UiMode::ServiceDriven,
            continuous,
            nonce_source: None,
            screen: Screen::Login,
            displayed: None,
        }
    }

    pub fn terminal_driven(tid: Tid, sid: Sid, continuous: bool, k_n: OtpKey) -> Self {
        Self {
            tid,
            sid,
            ui_mode: UiMode::TerminalDriven,
            continuous,
            nonce_source: Some(NonceSource::TerminalHotp {
                key: k_n,
                counter: 0,
            }),
            screen: Screen::Login,
            displayed: None,
        }
    }

    pub fn tid(&self) -> &Tid {
        &self.tid
    }

    pub fn ui_mode(&self) -> UiMode {
        self.ui_mode
    }

    pub fn screen(&self) -> &Screen {
        &self.screen
    }

    /// The payload currently on the glass, if any.
    pub fn displayed(&self) -> Option<&ChallengePayload> {
        self.displayed.as_ref()
    }

    /// Mints and displays a fresh challenge. Terminal-driven mode only;
    /// service-driven screens wait for a `Display` directive.
    pub fn mint_challenge(&mut self, wall_secs: u64) -> ChallengePayload {
        let source = self
            .nonce_source
            .as_mut()
            .expect("only terminal-driven terminals mint challenges");
        let nonce = source.next_nonce();
        let payload = ChallengePayload {
            sid: self.sid.clone(),
            tid: self.tid.clone(),
            nonce,
            ts: Timestamp::from_secs(wall_secs).expect("sim time fits 11 digits"),
            options: PayloadOptions::new(self.continuous),
        };
        self.displayed = Some(payload.clone());
        payload
    }

    /// Applies a service directive to the screen. Locking never clears
    /// the displayed challenge: the lock screen must stay answerable.
    pub fn apply(&mut self, directive: TerminalDirective) {
        match directive {
            TerminalDirective::Display(payload) => {
                self.displayed = Some(payload);
            }
            TerminalDirective::Admit(uid) => {
                self.screen = Screen::Session(uid);
            }
            TerminalDirective::Lock => {
                if let Screen::Session(uid) = self.screen.clone() {
                    self.screen = Screen::Locked(uid);
                }
            }
            TerminalDirective::Unlock => {
                if let Screen::Locked(uid) = self.screen.clone() {
                    self.screen = Screen::Session(uid);
                }
            }
            TerminalDirective::EndSession => {
                self.screen = Screen::Login;
                self.displayed = None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> OtpKey {
        OtpKey::new(b"12345678901234567890".to_vec()).unwrap()
    }

    fn tid() -> Tid {
        Tid::new("T01").unwrap()
    }

    fn sid() -> Sid {
        Sid::new("1234").unwrap()
    }

    #[test]
    fn terminal_driven_mints_hotp_nonces_in_sequence() {
        let mut term = Terminal::terminal_driven(tid(), sid(), true, key());
        let first = term.mint_challenge(1_700_000_000);
        let second = term.mint_challenge(1_700_000_005);
        assert_eq!(first.nonce.as_str(), "755224");
        assert_eq!(second.nonce.as_str(), "287082");
        assert_eq!(term.displayed().unwrap().nonce.as_str(), "287082");
        assert!(first.options.continuous());
    }

    #[test]
    fn lock_keeps_the_challenge_on_the_glass() {
        let mut term = Terminal::terminal_driven(tid(), sid(), true, key());
        let payload = term.mint_challenge(1_700_000_000);
        term.apply(TerminalDirective::Admit(Uid::new("alice").unwrap()));
        term.apply(TerminalDirective::Lock);
        assert_eq!(term.screen(), &Screen::Locked(Uid::new("alice").unwrap()));
        assert_eq!(term.displayed(), Some(&payload));
        term.apply(TerminalDirective::Unlock);
        assert_eq!(term.screen(), &Screen::Session(Uid::new("alice").unwrap()));
    }

    #[test]
    fn session_end_clears_the_screen() {
        let mut term = Terminal::service_driven(tid(), sid(), true);
        term.apply(TerminalDirective::Display(ChallengePayload {
            sid: sid(),
            tid: tid(),
            nonce: crate::challenge::Nonce::new("654321").unwrap(),
            ts: Timestamp::from_secs(1_700_000_000).unwrap(),
            options: PayloadOptions::new(true),
        }));
        term.apply(TerminalDirective::Admit(Uid::new("alice").unwrap()));
        term.apply(TerminalDirective::EndSession);
        assert_eq!(term.screen(), &Screen::Login);
        assert!(term.displayed().is_none());
    }

    #[test]
    fn lock_before_admit_is_a_no_op() {
        let mut term = Terminal::service_driven(tid(), sid(), false);
        term.apply(TerminalDirective::Lock);
        assert_eq!(term.screen(), &Screen::Login);
    }
}
