//! Calibration checks: drive each channel model and compare what comes
//! out against the values it was configured with. Optics and latency
//! are Monte-Carlo with fixed seeds, battery is analytic; every check
//! prints one row per cell and an ok/FAIL marker.

use gauth_core::optics::{
    scan_attempt, AccuracyTable, BucketPolicy, CodeDensity, DistanceClass, ScanGeometry,
    ScanResult, BITS_LADDER, CALIBRATED_ANGLES,
};
use gauth_core::simnet::battery::{battery_step, BatteryModel};
use gauth_core::simnet::latency::LatencyModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OPTICS_TRIALS: u32 = 10_000;
const OPTICS_TOLERANCE_PP: f64 = 1.5;
const LATENCY_SAMPLES: u32 = 100_000;
const LATENCY_TOLERANCE: f64 = 0.03;

/// 18 cells of decode frequency vs the configured table, within
/// 1.5 percentage points each.
pub fn optics() -> bool {
    let table = AccuracyTable::bench_defaults();
    let mut all_ok = true;
    println!("optics: {OPTICS_TRIALS} scan attempts per cell");
    for bits in BITS_LADDER {
        let density = CodeDensity::for_bits(bits);
        for angle in CALIBRATED_ANGLES {
            for (di, class) in DistanceClass::ALL.into_iter().enumerate() {
                let configured = table
                    .probability(bits, class, angle)
                    .expect("bench table is complete");
                let geometry = ScanGeometry::new(class.representative_cm(), angle as f64, 60.0)
                    .expect("bench geometry is valid");
                let mut rng =
                    ChaCha8Rng::seed_from_u64(bits as u64 * 1_000 + di as u64 * 10 + angle as u64);
                let mut decoded = 0u32;
                for _ in 0..OPTICS_TRIALS {
                    let outcome =
                        scan_attempt(&geometry, &density, &table, &mut rng, BucketPolicy::Strict)
                            .expect("calibrated cell resolves");
                    if outcome == ScanResult::Decoded {
                        decoded += 1;
                    }
                }
                let empirical = decoded as f64 / OPTICS_TRIALS as f64;
                let delta_pp = (empirical - configured).abs() * 100.0;
                let ok = delta_pp <= OPTICS_TOLERANCE_PP;
                all_ok &= ok;
                println!(
                    "bits={bits:<4} distance={:<8} ({:>3.0} cm) angle={angle:<2} configured={:6.2}% empirical={:6.2}% delta={delta_pp:.2}pp {}",
                    class.label(),
                    class.representative_cm(),
                    configured * 100.0,
                    empirical * 100.0,
                    if ok { "ok" } else { "FAIL" }
                );
            }
        }
    }
    let zero_mean = table.average_accuracy(0).expect("bench table is complete");
    let mean_ok = (zero_mean - 87.8).abs() <= 0.1;
    all_ok &= mean_ok;
    println!(
        "zero-angle table mean: {zero_mean:.2}% (target 87.80% +/- 0.10pp) {}",
        if mean_ok { "ok" } else { "FAIL" }
    );
    all_ok
}

/// Empirical means of the three network profiles within 3% of their
/// configured means, with every sample inside [min, max].
pub fn latency() -> bool {
    let mut all_ok = true;
    println!("latency: {LATENCY_SAMPLES} round-trip samples per profile");
    for (i, model) in [
        LatencyModel::local(),
        LatencyModel::aws_oregon(),
        LatencyModel::cloud_europe(),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(11 + i as u64);
        let mut sum = 0.0f64;
        let mut low = f64::INFINITY;
        let mut high = f64::NEG_INFINITY;
        let mut outside = 0u32;
        for _ in 0..LATENCY_SAMPLES {
            let sample = model.sample_ms(&mut rng);
            sum += sample;
            low = low.min(sample);
            high = high.max(sample);
            if sample < model.min_ms || sample > model.max_ms {
                outside += 1;
            }
        }
        let mean = sum / LATENCY_SAMPLES as f64;
        let delta = (mean - model.mean_ms).abs() / model.mean_ms;
        let ok = delta <= LATENCY_TOLERANCE && outside == 0;
        all_ok &= ok;
        println!(
            "profile={:<12} configured mean={:>6.1} ms empirical mean={:>6.1} ms delta={:.2}% observed=[{low:.0}, {high:.0}] outside-bounds={outside} {}",
            model.label,
            model.mean_ms,
            mean,
            delta * 100.0,
            if ok { "ok" } else { "FAIL" }
        );
    }
    all_ok
}

/// Analytic drain rates: exactly 2%/min at a five-second period, and
/// inside the 0.80..0.90 band at fifteen seconds.
pub fn battery() -> bool {
    let model = BatteryModel::new(100.0);

    let drain5 = model.drain_per_min(5.0);
    let five_ok = drain5 == 2.0;
    println!(
        "period=5 s  drain={drain5:.6} %/min (target exactly 2.000000) {}",
        if five_ok { "ok" } else { "FAIL" }
    );

    let drain15 = model.drain_per_min(15.0);
    let fifteen_ok = (0.80..=0.90).contains(&drain15);
    println!(
        "period=15 s drain={drain15:.6} %/min (target within 0.80..0.90) {}",
        if fifteen_ok { "ok" } else { "FAIL" }
    );

    let after_min = battery_step(&model, 5.0, 1.0);
    let step_ok = after_min == 98.0;
    println!(
        "one minute at period=5 s: 100.00% -> {after_min:.2}% {}",
        if step_ok { "ok" } else { "FAIL" }
    );

    let empty_min = 100.0 / drain5;
    println!("time to empty from 100% at period=5 s: {empty_min:.1} min");

    five_ok && fifteen_ok && step_ok
}
