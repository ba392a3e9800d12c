//! Deterministic discrete-event simulation of the authentication
//! system: network latency, device pipeline timing, optics rolls,
//! battery drain, and the event loop that drives all parties from a
//! scenario description.
//!
//! Everything here is millisecond-grained and seeded; two runs with
//! the same scenario and seed produce byte-identical traces.

pub mod battery;
pub mod devicetime;
pub mod events;
pub mod latency;
pub mod metrics;
pub mod runtime;
pub mod trace;

pub use battery::{battery_step, BatteryModel};
pub use devicetime::{end_to_end_auth_time, DeviceTimeModel};
pub use events::{EventQueue, SimMs};
pub use latency::LatencyModel;
pub use metrics::{AuthRecord, ExposureEvent, RunMetrics};
pub use runtime::{run, run_with_options, RunError, RunReport};
pub use trace::{Trace, TraceLine};
