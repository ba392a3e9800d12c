//! The three-party protocol: device, terminal, service.
//!
//! A login is one scan and one round trip. The terminal shows a signed
//! challenge payload ([`crate::challenge`]); the device recognizes the
//! service, mints a time-based code, and sends a single authentication
//! request; the service checks both factors, spends the nonce, and
//! answers with a bare OK/FAIL ack. Logical timestamps
//! ([`clock::LamportClock`]) ride on every message so either side can
//! order events without trusting the other's wall clock.

pub mod clock;
pub mod device;
pub mod service;
pub mod terminal;
pub mod wire;

pub use clock::LamportClock;
pub use device::{
    AssociateError, Credential, DeviceAgent, NoMatchReason, ScanDecision, ServiceFingerprint,
};
pub use service::{
    AuditEntry, FailReason, IssueError, RegisterError, Service, ServiceConfig,
    TerminalRegistration, ThrottleConfig, UiMode, VerifyOutcome,
};
pub use terminal::{Screen, Terminal, TerminalDirective};
pub use wire::{AckStatus, AuthAck, AuthRequest, Uid, WireError};
