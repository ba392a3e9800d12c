//! How long the wearable takes to do its part, component by component,
//! as measured on the bench: voice activation, camera capture with
//! autofocus, code decoding, and code generation. The network share
//! comes from the latency model.

use rand::Rng;

use crate::simnet::latency::LatencyModel;

/// Per-component device times in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTimeModel {
    pub voice_activation_ms: u64,
    pub capture_autofocus_ms: u64,
    pub qr_decode_ms: u64,
    pub otp_generation_ms: u64,
    pub network: LatencyModel,
}

impl DeviceTimeModel {
    pub fn bench_defaults(network: LatencyModel) -> Self {
        Self {
            voice_activation_ms: 1_700,
            capture_autofocus_ms: 1_800,
            qr_decode_ms: 200,
            otp_generation_ms: 400,
            network,
        }
    }

    /// Device-side processing before the request leaves, excluding the
    /// voice trigger. This is the re-authentication pipeline.
    pub fn reauth_pipeline_ms(&self) -> u64 {
        self.capture_autofocus_ms + self.qr_decode_ms + self.otp_generation_ms
    }

    /// Full one-time pipeline: the voice trigger plus everything else.
    pub fn one_time_pipeline_ms(&self) -> u64 {
        self.voice_activation_ms + self.reauth_pipeline_ms()
    }
}

/// End-to-end authentication time in seconds: the device pipeline for
/// the requested flavor plus one network round-trip sample.
pub fn end_to_end_auth_time<R: Rng + ?Sized>(
    dt: &DeviceTimeModel,
    one_time: bool,
    rng: &mut R,
) -> f64 {
    let pipeline_ms = if one_time {
        dt.one_time_pipeline_ms()
    } else {
        dt.reauth_pipeline_ms()
    };
    (pipeline_ms as f64 + dt.network.sample_ms(rng)) / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_time_sums_every_component() {
        let dt = DeviceTimeModel::bench_defaults(LatencyModel::local());
        assert_eq!(dt.one_time_pipeline_ms(), 4_100);
        assert_eq!(dt.reauth_pipeline_ms(), 2_400);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| end_to_end_auth_time(&dt, true, &mut rng))
            .sum::<f64>()
            / n as f64;
        // 4.1 s of device work plus the 0.329 s measured local network.
        assert!((mean - 4.429).abs() < 0.02, "one-time mean {mean:.3}");

        let mean: f64 = (0..n)
            .map(|_| end_to_end_auth_time(&dt, false, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.729).abs() < 0.02, "re-auth mean {mean:.3}");
    }

    #[test]
    fn zero_components_sum_to_zero() {
        let dt = DeviceTimeModel {
            voice_activation_ms: 0,
            capture_autofocus_ms: 0,
            qr_decode_ms: 0,
            otp_generation_ms: 0,
            network: LatencyModel::new("none", 0.0, 0.0, 0.0, 0.0).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(end_to_end_auth_time(&dt, true, &mut rng), 0.0);
        assert_eq!(end_to_end_auth_time(&dt, false, &mut rng), 0.0);
    }
}
