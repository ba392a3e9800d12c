//! Core library for a hands-free challenge-response authentication
//! protocol: a device authenticates its wearer to a terminal-bound
//! service by scanning visual challenges and answering them over the
//! network with one-time passwords, once at login and then continuously
//! while the session lasts.
//!
//! The crate is split along the protocol's own seams: [`otp`] holds the
//! one-time-password primitives, [`challenge`] the visual payload and
//! nonce sources, [`protocol`] the three parties and wire messages,
//! [`continuous`] the session lifecycle and exposure accounting,
//! [`optics`] the empirical scan-channel model, and [`simnet`] a
//! deterministic discrete-event simulator that ties them together.
//! [`scenario`] parses the plain-text scenario files the simulator runs.

pub mod challenge;
pub mod continuous;
pub mod optics;
pub mod otp;
pub mod protocol;
pub mod scenario;
pub mod simnet;
