//! Network latency as measured: per-location mean, min, max, and
//! standard deviation. Samples come from a normal distribution clamped
//! to [min, max]; because clamping shifts the mean, the pre-clamp
//! center is calibrated by bisection so the post-clamp mean lands on
//! the measured one. The European row's far-out max is a clamp bound,
//! not a modeled tail.

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatencyError {
    #[error("latency bounds must satisfy min ≤ mean ≤ max, got {min}/{mean}/{max}")]
    BadBounds { mean: f64, min: f64, max: f64 },
    #[error("stddev must be non-negative, got {0}")]
    BadStddev(f64),
}

/// One measured location's round-trip profile, in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    pub label: String,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub stddev_ms: f64,
    /// Pre-clamp center solving E[clamp(N(c, stddev), min, max)] = mean.
    calibrated_center_ms: f64,
}

impl LatencyModel {
    pub fn new(
        label: impl Into<String>,
        mean_ms: f64,
        min_ms: f64,
        max_ms: f64,
        stddev_ms: f64,
    ) -> Result<Self, LatencyError> {
        if !(min_ms <= mean_ms && mean_ms <= max_ms) {
            return Err(LatencyError::BadBounds {
                mean: mean_ms,
                min: min_ms,
                max: max_ms,
            });
        }
        if stddev_ms < 0.0 {
            return Err(LatencyError::BadStddev(stddev_ms));
        }
        let calibrated_center_ms = calibrate_center(mean_ms, min_ms, max_ms, stddev_ms);
        Ok(Self {
            label: label.into(),
            mean_ms,
            min_ms,
            max_ms,
            stddev_ms,
            calibrated_center_ms,
        })
    }

    /// Bench profile measured against a service on the same network.
    pub fn local() -> Self {
        Self::new("local", 329.0, 265.0, 421.0, 70.0).expect("measured profile is valid")
    }

    /// Bench profile against a west-coast cloud region.
    pub fn aws_oregon() -> Self {
        Self::new("aws-oregon", 523.0, 451.0, 609.0, 134.0).expect("measured profile is valid")
    }

    /// Bench profile against a European cloud region; one long-tail
    /// outlier dominates its max.
    pub fn cloud_europe() -> Self {
        Self::new("cloud-europe", 703.0, 584.0, 2115.0, 476.0).expect("measured profile is valid")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "local" => Some(Self::local()),
            "aws" | "aws-oregon" => Some(Self::aws_oregon()),
            "europe" | "cloud-europe" => Some(Self::cloud_europe()),
            _ => None,
        }
    }

    /// One round-trip sample, always inside [min, max].
    pub fn sample_ms<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.stddev_ms == 0.0 {
            return self.mean_ms;
        }
        let normal = Normal::new(self.calibrated_center_ms, self.stddev_ms)
            .expect("stddev checked positive");
        normal.sample(rng).clamp(self.min_ms, self.max_ms)
    }

    /// Whole-millisecond sample for the event queue.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample_ms(rng).round() as u64
    }

    pub fn calibrated_center_ms(&self) -> f64 {
        self.calibrated_center_ms
    }
}

/// Standard normal CDF via the error function.
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Standard normal density.
fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mean of N(center, sd) clamped to [a, b]: the two point masses at the
/// bounds plus the interior truncated mass.
fn clamped_mean(center: f64, sd: f64, a: f64, b: f64) -> f64 {
    let alpha = (a - center) / sd;
    let beta = (b - center) / sd;
    a * phi(alpha)
        + b * (1.0 - phi(beta))
        + center * (phi(beta) - phi(alpha))
        + sd * (pdf(alpha) - pdf(beta))
}

/// Solves clamped_mean(center) = target for the center. The clamped
/// mean is strictly increasing in the center, so bisection converges.
fn calibrate_center(target: f64, a: f64, b: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return target;
    }
    let mut lo = a - 12.0 * sd;
    let mut hi = b + 12.0 * sd;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clamped_mean(mid, sd, a, b) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
