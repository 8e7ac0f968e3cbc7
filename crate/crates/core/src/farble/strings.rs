use std::collections::HashSet;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::keyrand::{keystream_bytes, uniform_range, FarbleSeed};

pub const GL_CHARSET: &[u8; 63] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789 ";

/// Length of a spoofed media device identifier (32 bytes, unpadded base64url).
pub const DEVICE_ID_LEN: usize = 43;

const GL_MIN_LEN: i64 = 8;
const GL_MAX_LEN: i64 = 32;
// Each string owns 64 uniform draws (512 keystream bytes).
const GL_REGION_DRAWS: u64 = 64;
// Largest multiple of the charset size that fits in a byte.
const GL_ACCEPT_BELOW: u8 = 252;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlStringSet {
    pub vendor: String,
    pub renderer: String,
    pub unmasked_vendor: String,
    pub unmasked_renderer: String,
}

fn gl_string(seed: &FarbleSeed, region: u64) -> String {
    let first = region * GL_REGION_DRAWS;
    let len = uniform_range(seed, first, GL_MIN_LEN, GL_MAX_LEN).expect("static range") as usize;
    // Remaining region bytes feed rejection sampling over the charset.
    let pool = keystream_bytes(seed, 8 * (first + 1), 8 * (GL_REGION_DRAWS as usize - 1));
    let mut out: String = pool
        .iter()
        .filter(|&&b| b < GL_ACCEPT_BELOW)
        .take(len)
        .map(|&b| GL_CHARSET[(b % 63) as usize] as char)
        .collect();
    // 504 pool bytes make a shortfall practically impossible; fall back to modulo.
    let mut extra = pool.iter();
    while out.len() < len {
        let b = extra.next().copied().unwrap_or(0);
        out.push(GL_CHARSET[(b % 63) as usize] as char);
    }
    out
}

/// Random WebGL vendor/renderer strings, one keystream region per field.
pub fn spoof_gl_strings(seed: &FarbleSeed) -> GlStringSet {
    GlStringSet {
        vendor: gl_string(seed, 0),
        renderer: gl_string(seed, 1),
        unmasked_vendor: gl_string(seed, 2),
        unmasked_renderer: gl_string(seed, 3),
    }
}

/// `count` distinct device identifiers; the k-th candidate encodes keystream
/// bytes `[32k, 32k + 32)`.
pub fn spoof_device_ids(seed: &FarbleSeed, count: usize) -> Vec<String> {
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut k = 0u64;
    while out.len() < count {
        let id = URL_SAFE_NO_PAD.encode(keystream_bytes(seed, 32 * k, 32));
        k += 1;
        if seen.insert(id.clone()) {
            out.push(id);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrand::{derive_seed, Origin, SessionKey};

    fn seed(origin: &str) -> FarbleSeed {
        derive_seed(
            &SessionKey::from_bytes([3; 32]),
            &Origin::parse(origin).unwrap(),
            "webgl",
        )
        .unwrap()
    }

    fn well_formed(s: &str) -> bool {
        (8..=32).contains(&s.len()) && s.bytes().all(|b| GL_CHARSET.contains(&b))
    }

    #[test]
    fn gl_strings_are_stable_and_well_formed() {
        let s = seed("https://a.example");
        let set = spoof_gl_strings(&s);
        assert_eq!(spoof_gl_strings(&s), set);
        for f in [
            &set.vendor,
            &set.renderer,
            &set.unmasked_vendor,
            &set.unmasked_renderer,
        ] {
            assert!(well_formed(f), "{f:?}");
        }
    }

    #[test]
    fn gl_strings_differ_across_origins() {
        let a = spoof_gl_strings(&seed("https://a.example"));
        let b = spoof_gl_strings(&seed("https://b.example"));
        assert_ne!(a, b);
        assert_ne!(a.vendor, b.vendor);
    }

    #[test]
    fn gl_lengths_cover_range() {
        let mut lens = HashSet::new();
        for i in 0..400 {
            let set = spoof_gl_strings(&seed(&format!("https://h{i}.example")));
            for f in [
                set.vendor,
                set.renderer,
                set.unmasked_vendor,
                set.unmasked_renderer,
            ] {
                assert!(well_formed(&f));
                lens.insert(f.len());
            }
        }
        assert_eq!(lens.len(), 25);
    }

    #[test]
    fn device_ids() {
        let s = seed("https://a.example");
        assert!(spoof_device_ids(&s, 0).is_empty());
        assert_eq!(spoof_device_ids(&s, 3), spoof_device_ids(&s, 3));
        let many = spoof_device_ids(&s, 100);
        assert_eq!(many.iter().collect::<HashSet<_>>().len(), 100);
        for id in &many {
            assert_eq!(id.len(), DEVICE_ID_LEN);
            assert!(id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_'));
        }
        // prefix-stable
        assert_eq!(&many[..3], spoof_device_ids(&s, 3).as_slice());
    }
}
