//! What a run measured, reconciled against what its trace shows. Every
//! authentication attempt that reaches the service ends up in exactly
//! one bucket: accepted, or refused with a named reason.

use std::collections::BTreeMap;

use crate::simnet::events::SimMs;

/// One authentication that reached the service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRecord {
    /// login | reauth | unlock | adversary
    pub kind: &'static str,
    pub tid: String,
    pub uid: String,
    pub origin: String,
    /// When the triggering action or deadline occurred.
    pub started_ms: SimMs,
    /// When the request reached the service.
    pub arrived_ms: SimMs,
    /// Experienced latency: device pipeline plus network.
    pub latency_ms: u64,
    /// "accept" or the refusal reason's label.
    pub outcome: String,
}

impl AuthRecord {
    pub fn accepted(&self) -> bool {
        self.outcome == "accept"
    }
}

/// One resolved walk-away exposure, tagged with where it happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureEvent {
    pub tid: String,
    pub uid: String,
    pub walk_away_ms: SimMs,
    /// When the screen locked (or the session ended, if earlier).
    pub detect_ms: SimMs,
}

impl ExposureEvent {
    /// How long the unattended session stayed usable.
    pub fn window_ms(&self) -> u64 {
        self.detect_ms - self.walk_away_ms
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunMetrics {
    pub auths: Vec<AuthRecord>,
    /// Adversarial presentations, bursts included (each presentation
    /// counts even though the trace collapses bursts to one line).
    pub adversary_presentations: u64,
    pub adversary_accepts: u64,
    /// Device camera passes that failed to decode.
    pub failed_scans: u64,
    /// Scans that decoded but matched no stored credential.
    pub no_matches: u64,
    pub locks: u64,
    pub unlocks: u64,
    pub user_logouts: u64,
    pub grace_logouts: u64,
    pub exposure: Vec<ExposureEvent>,
    /// (minute index, battery percent) samples plus the final level.
    pub battery_trajectory: Vec<(u64, f64)>,
    pub final_battery: f64,
}

impl RunMetrics {
    pub fn accepts(&self) -> u64 {
        self.auths.iter().filter(|a| a.accepted()).count() as u64 + self.adversary_accepts
    }

    /// Refusal counts by reason label, adversarial bursts included.
    pub fn refusals(&self) -> BTreeMap<String, u64> {
        let mut out: BTreeMap<String, u64> = BTreeMap::new();
        for auth in self.auths.iter().filter(|a| !a.accepted()) {
            *out.entry(auth.outcome.clone()).or_default() += 1;
        }
        out
    }

    /// Total attempts that reached the service.
    pub fn attempts(&self) -> u64 {
        self.auths.len() as u64 + self.adversary_presentations
    }

    pub fn login_latencies_ms(&self) -> Vec<u64> {
        self.kind_latencies("login")
    }

    pub fn reauth_latencies_ms(&self) -> Vec<u64> {
        self.kind_latencies("reauth")
    }

    fn kind_latencies(&self, kind: &str) -> Vec<u64> {
        self.auths
            .iter()
            .filter(|a| a.kind == kind && a.accepted())
            .map(|a| a.latency_ms)
            .collect()
    }

    /// Accepted re-auths whose deadline falls in
    /// (origin + 60s·m, origin + 60s·(m+1)], bucketed by m.
    pub fn reauths_per_minute(&self, origin_ms: SimMs, minutes: u64) -> Vec<u64> {
        let mut buckets = vec![0u64; minutes as usize];
        for auth in self
            .auths
            .iter()
            .filter(|a| a.kind == "reauth" && a.accepted())
        {
            if auth.started_ms <= origin_ms {
                continue;
            }
            let offset = auth.started_ms - origin_ms;
            // Left-exclusive buckets: a deadline exactly on a minute
            // boundary belongs to the minute it closes.
            let bucket = (offset - 1) / 60_000;
            if (bucket as usize) < buckets.len() {
                buckets[bucket as usize] += 1;
            }
        }
        buckets
    }

    pub fn max_exposure_ms(&self) -> Option<u64> {
        self.exposure.iter().map(|e| e.window_ms()).max()
    }

    pub fn mean_exposure_ms(&self) -> Option<f64> {
        if self.exposure.is_empty() {
            return None;
        }
        let sum: u64 = self.exposure.iter().map(|e| e.window_ms()).sum();
        Some(sum as f64 / self.exposure.len() as f64)
    }

    /// Battery samples never increase along the trajectory.
    pub fn battery_monotone(&self) -> bool {
        self.battery_trajectory
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 + 1e-12)
    }
}
