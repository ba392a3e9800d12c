//! Cross-checks the OTP implementation against an independently coded
//! HMAC-SHA1 + dynamic-truncation oracle and the published RFC 4226 /
//! RFC 6238 test vectors. The oracle below shares no code with the
//! library: SHA-1 and HMAC are written out from their definitions so a
//! defect in the implementation path cannot hide in the expectations.

use gauth_core::otp::{
    hotp_generate, hotp_verify_window, totp_generate, totp_verify, HotpCounter, HotpOutcome,
    OtpKey, TotpOutcome, TotpParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference implementations used only by this test.
mod oracle {
    pub fn sha1(message: &[u8]) -> [u8; 20] {
        let mut h: [u32; 5] = [
            0x6745_2301,
            0xEFCD_AB89,
            0x98BA_DCFE,
            0x1032_5476,
            0xC3D2_E1F0,
        ];
        let bit_len = (message.len() as u64) * 8;
        let mut padded = message.to_vec();
        padded.push(0x80);
        while padded.len() % 64 != 56 {
            padded.push(0);
        }
        padded.extend_from_slice(&bit_len.to_be_bytes());
        for block in padded.chunks_exact(64) {
            let mut w = [0u32; 80];
            for i in 0..16 {
                w[i] = u32::from_be_bytes([
                    block[4 * i],
                    block[4 * i + 1],
                    block[4 * i + 2],
                    block[4 * i + 3],
                ]);
            }
            for i in 16..80 {
                w[i] = (w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16]).rotate_left(1);
            }
            let (mut a, mut b, mut c, mut d, mut e) = (h[0], h[1], h[2], h[3], h[4]);
            for (i, wi) in w.iter().enumerate() {
                let (f, k) = match i {
                    0..=19 => ((b & c) | (!b & d), 0x5A82_7999u32),
                    20..=39 => (b ^ c ^ d, 0x6ED9_EBA1),
                    40..=59 => ((b & c) | (b & d) | (c & d), 0x8F1B_BCDC),
                    _ => (b ^ c ^ d, 0xCA62_C1D6),
                };
                let temp = a
                    .rotate_left(5)
                    .wrapping_add(f)
                    .wrapping_add(e)
                    .wrapping_add(k)
                    .wrapping_add(*wi);
                e = d;
                d = c;
                c = b.rotate_left(30);
                b = a;
                a = temp;
            }
            h[0] = h[0].wrapping_add(a);
            h[1] = h[1].wrapping_add(b);
            h[2] = h[2].wrapping_add(c);
            h[3] = h[3].wrapping_add(d);
            h[4] = h[4].wrapping_add(e);
        }
        let mut out = [0u8; 20];
        for (i, word) in h.iter().enumerate() {
            out[4 * i..4 * i + 4].copy_from_slice(&word.to_be_bytes());
        }
        out
    }

    pub fn hmac_sha1(key: &[u8], msg: &[u8]) -> [u8; 20] {
        let mut block = [0u8; 64];
        if key.len() > 64 {
            block[..20].copy_from_slice(&sha1(key));
        } else {
            block[..key.len()].copy_from_slice(key);
        }
        let mut inner = Vec::with_capacity(64 + msg.len());
        inner.extend(block.iter().map(|b| b ^ 0x36));
        inner.extend_from_slice(msg);
        let inner_hash = sha1(&inner);
        let mut outer = Vec::with_capacity(64 + 20);
        outer.extend(block.iter().map(|b| b ^ 0x5c));
        outer.extend_from_slice(&inner_hash);
        sha1(&outer)
    }

    /// HOTP as defined: HMAC over the big-endian counter, dynamic
    /// truncation to a 31-bit integer, reduced mod 10^width.
    pub fn hotp(key: &[u8], counter: u64, width: u32) -> String {
        let mac = hmac_sha1(key, &counter.to_be_bytes());
        let offset = (mac[19] & 0x0f) as usize;
        let bin = (u32::from(mac[offset] & 0x7f) << 24)
            | (u32::from(mac[offset + 1]) << 16)
            | (u32::from(mac[offset + 2]) << 8)
            | u32::from(mac[offset + 3]);
        let code = bin % 10u32.pow(width);
        format!("{code:0width$}", width = width as usize)
    }

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// FIPS 180 examples pin the hash; without these the oracle proves nothing.
    #[test]
    fn sha1_matches_published_digests() {
        assert_eq!(
            hex(&sha1(b"abc")),
            "a9993e364706816aba3e25717850c26c9cd0d89d"
        );
        assert_eq!(hex(&sha1(b"")), "da39a3ee5e6b4b0d3255bfef95601890afd80709");
        assert_eq!(
            hex(&sha1(
                b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"
            )),
            "84983e441c3bd26ebaae4aa1f95129e5e54670f1"
        );
    }

    /// RFC 2202 cases 1-3 cover short keys, text, and repeated bytes.
    #[test]
    fn hmac_matches_rfc2202() {
        assert_eq!(
            hex(&hmac_sha1(&[0x0b; 20], b"Hi There")),
            "b617318655057264e28bc0b6fb378c8ef146be00"
        );
        assert_eq!(
            hex(&hmac_sha1(b"Jefe", b"what do ya want for nothing?")),
            "effcdf6ae5eb2fa2d27416d5f184df9c259a7c79"
        );
        assert_eq!(
            hex(&hmac_sha1(&[0xaa; 20], &[0xdd; 50])),
            "125d7342b9ac11cd91a39af48aa17b4f63f175d3"
        );
    }
}

/// The 20-byte ASCII key used by both RFC vector suites.
const RFC_KEY: &[u8] = b"12345678901234567890";

/// RFC 4226 appendix values, width 6.
const HOTP_VECTORS: [(u64, &str); 10] = [
    (0, "755224"),
    (1, "287082"),
    (2, "359152"),
    (3, "969429"),
    (4, "338314"),
    (5, "254676"),
    (6, "287922"),
    (7, "162583"),
    (8, "399871"),
    (9, "520489"),
];

/// RFC 6238 appendix values for the SHA-1 mode, width 8, step 30, t0 0.
const TOTP8_VECTORS: [(u64, &str); 6] = [
    (59, "94287082"),
    (1111111109, "07081804"),
    (1111111111, "14050471"),
    (1234567890, "89005924"),
    (2000000000, "69279037"),
    (20000000000, "65353130"),
];

/// Width-6 reductions of the same truncated values (mod 10^6 of the
/// 31-bit integer, i.e. the last six digits of the width-8 codes).
const TOTP6_VECTORS: [(u64, &str); 6] = [
    (59, "287082"),
    (1111111109, "081804"),
    (1111111111, "050471"),
    (1234567890, "005924"),
    (2000000000, "279037"),
    (20000000000, "353130"),
];

fn rfc_key() -> OtpKey {
    OtpKey::new(RFC_KEY.to_vec()).unwrap()
}

#[test]
fn hotp_matches_frozen_vectors() {
    let key = rfc_key();
    for (counter, expected) in HOTP_VECTORS {
        assert_eq!(
            hotp_generate(&key, counter, 6).as_str(),
            expected,
            "counter {counter}"
        );
    }
}

#[test]
fn totp_matches_frozen_vectors() {
    let key = rfc_key();
    let params = TotpParams::default();
    for (time, expected) in TOTP8_VECTORS {
        assert_eq!(
            totp_generate(&key, time, &params, 8).unwrap().as_str(),
            expected,
            "time {time} width 8"
        );
    }
    for (time, expected) in TOTP6_VECTORS {
        assert_eq!(
            totp_generate(&key, time, &params, 6).unwrap().as_str(),
            expected,
            "time {time} width 6"
        );
    }
}

#[test]
fn hotp_matches_oracle_on_random_keys() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0720);
    for case in 0..60 {
        // Lengths past 64 bytes exercise the HMAC key-hashing branch.
        let len = rng.random_range(10..100);
        let key_bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let counter: u64 = rng.random();
        let width = rng.random_range(6..=8u32);
        let key = OtpKey::new(key_bytes.clone()).unwrap();
        assert_eq!(
            hotp_generate(&key, counter, width as usize).as_str(),
            oracle::hotp(&key_bytes, counter, width),
            "case {case}: key len {len}, counter {counter}, width {width}"
        );
    }
}

#[test]
fn totp_is_hotp_at_the_step_counter() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0721);
    let params = TotpParams::default();
    for _ in 0..40 {
        let key_bytes: Vec<u8> = (0..20).map(|_| rng.random()).collect();
        let time: u64 = rng.random_range(30..4_000_000_000);
        let key = OtpKey::new(key_bytes.clone()).unwrap();
        let generated = totp_generate(&key, time, &params, 6).unwrap();
        assert_eq!(generated.as_str(), oracle::hotp(&key_bytes, time / 30, 6));
    }
}

#[test]
fn totp_verify_accepts_within_skew_and_reports_offset() {
    let key = rfc_key();
    let params = TotpParams::default();
    // Step counter 2 at t=60..89; neighbours are steps 1 and 3.
    let current = oracle::hotp(RFC_KEY, 2, 6);
    let previous = oracle::hotp(RFC_KEY, 1, 6);
    let next = oracle::hotp(RFC_KEY, 3, 6);
    let far = oracle::hotp(RFC_KEY, 5, 6);

    let at = |code: &str| totp_verify(&key, code, 75, &params).unwrap();
    assert_eq!(at(&current), TotpOutcome::Accepted { step_offset: 0 });
    assert_eq!(at(&previous), TotpOutcome::Accepted { step_offset: -1 });
    assert_eq!(at(&next), TotpOutcome::Accepted { step_offset: 1 });
    assert_eq!(at(&far), TotpOutcome::Rejected);
}

#[test]
fn totp_verify_rejects_malformed_candidates_distinctly() {
    let key = rfc_key();
    let params = TotpParams::default();
    for bad in ["", "12345", "1234567890", "12a456", "12 456", "½23456"] {
        assert!(
            totp_verify(&key, bad, 75, &params).is_err(),
            "candidate {bad:?} must be a malformed-code error, not a mismatch"
        );
    }
}

#[test]
fn totp_generate_rejects_time_before_epoch() {
    let key = rfc_key();
    let params = TotpParams {
        t0: 1000,
        ..TotpParams::default()
    };
    assert!(totp_generate(&key, 999, &params, 6).is_err());
    assert!(totp_generate(&key, 1000, &params, 6).is_ok());
}

#[test]
fn hotp_window_accepts_lookahead_and_resynchronizes() {
    let key = rfc_key();
    let mut counter = HotpCounter::new(0);

    // Value 3 is inside the default lookahead of 3 from value 0.
    let skipped = oracle::hotp(RFC_KEY, 3, 6);
    let outcome = hotp_verify_window(&key, &skipped, &mut counter).unwrap();
    assert_eq!(outcome, HotpOutcome::Accepted { matched_counter: 3 });
    assert_eq!(counter.value(), 4, "resync to one past the match");

    // The same code again now sits behind the window.
    let outcome = hotp_verify_window(&key, &skipped, &mut counter).unwrap();
    assert_eq!(outcome, HotpOutcome::Rejected);
    assert_eq!(counter.value(), 4, "reject leaves the counter unchanged");

    // Value 8 is one past the window [4, 7].
    let beyond = oracle::hotp(RFC_KEY, 8, 6);
    assert_eq!(
        hotp_verify_window(&key, &beyond, &mut counter).unwrap(),
        HotpOutcome::Rejected
    );
    assert_eq!(counter.value(), 4);
}

#[test]
fn key_shorter_than_ten_bytes_is_refused() {
    assert!(OtpKey::new(vec![7u8; 9]).is_err());
    assert!(OtpKey::new(vec![7u8; 10]).is_ok());
}

#[test]
fn base32_round_trips_and_matches_the_provisioning_alphabet() {
    // The RFC key in the provisioning encoding used by authenticator apps.
    let key = rfc_key();
    let text = key.to_base32();
    assert_eq!(text, "GEZDGNBVGY3TQOJQGEZDGNBVGY3TQOJQ");
    let back = OtpKey::from_base32(&text).unwrap();
    assert_eq!(back.as_bytes(), RFC_KEY);

    // Lower case and padding are tolerated on import.
    let relaxed = OtpKey::from_base32("gezdgnbvgy3tqojqgezdgnbvgy3tqojq").unwrap();
    assert_eq!(relaxed.as_bytes(), RFC_KEY);
    assert!(OtpKey::from_base32("not!base32").is_err());
}

#[test]
fn generated_codes_always_have_requested_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0722);
    for _ in 0..200 {
        let key_bytes: Vec<u8> = (0..16).map(|_| rng.random()).collect();
        let key = OtpKey::new(key_bytes).unwrap();
        let counter: u64 = rng.random();
        for width in 6..=8usize {
            let code = hotp_generate(&key, counter, width);
            assert_eq!(code.width(), width);
            assert!(code.as_str().bytes().all(|b| b.is_ascii_digit()));
        }
    }
}
