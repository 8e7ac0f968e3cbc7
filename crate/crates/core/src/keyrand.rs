//! Keyed, domain-separated randomness.
//!
//! Every perturbation in the crate draws from a [`FarbleSeed`], which is a
//! SHA-256 digest of the session key, the normalized origin and a domain tag.
//! Seeds are expanded with SHA-256 in counter mode, so any byte of the stream
//! can be computed without state:
//!
//! ```text
//! seed       = SHA-256(session ‖ 0x00 ‖ origin ‖ 0x00 ‖ tag)
//! block(n)   = SHA-256(seed ‖ LE64(n))
//! stream[i]  = block(i / 32)[i % 32]
//! uniform(k) = (LE64(stream[8k .. 8k+8]) >> 11) · 2^-53
//! ```

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SESSION_KEY_LEN: usize = 32;
pub const SEED_LEN: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("entropy source unavailable: {0}")]
    Entropy(String),
    #[error("session key must be {SESSION_KEY_LEN} bytes (64 hex characters), got {0}")]
    KeyLength(usize),
    #[error("session key is not valid hex: {0}")]
    KeyHex(String),
    #[error("invalid origin {input:?}: {reason}")]
    Origin { input: String, reason: String },
    #[error("domain tag {0:?} contains a NUL byte")]
    TagNul(String),
    #[error("empty range: lo {lo} > hi {hi}")]
    Range { lo: i64, hi: i64 },
}

/// Root secret for one engine session.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey([u8; SESSION_KEY_LEN]);

impl SessionKey {
    pub const fn from_bytes(bytes: [u8; SESSION_KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SESSION_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl FromStr for SessionKey {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = hex::decode(s.trim()).map_err(|e| KeyError::KeyHex(e.to_string()))?;
        let bytes: [u8; SESSION_KEY_LEN] = raw
            .as_slice()
            .try_into()
            .map_err(|_| KeyError::KeyLength(raw.len()))?;
        Ok(Self(bytes))
    }
}

// Keys never end up in logs.
impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

/// Source of key material for [`new_session_key_from`].
pub trait EntropySource {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), KeyError>;
}

/// The operating system CSPRNG.
#[derive(Debug, Default, Clone, Copy)]
pub struct OsEntropy;

impl EntropySource for OsEntropy {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), KeyError> {
        getrandom::fill(buf).map_err(|e| KeyError::Entropy(e.to_string()))
    }
}

/// Repeats a fixed byte; for reproducible test sessions only.
#[derive(Debug, Clone, Copy)]
pub struct FixedEntropy(pub u8);

impl EntropySource for FixedEntropy {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), KeyError> {
        buf.fill(self.0);
        Ok(())
    }
}

/// Fresh session key from the OS entropy source.
pub fn new_session_key() -> Result<SessionKey, KeyError> {
    new_session_key_from(&mut OsEntropy)
}

pub fn new_session_key_from(source: &mut impl EntropySource) -> Result<SessionKey, KeyError> {
    let mut bytes = [0u8; SESSION_KEY_LEN];
    source.fill(&mut bytes)?;
    Ok(SessionKey(bytes))
}

/// A web origin serialized as `scheme://host[:port]`.
///
/// Parsing accepts any absolute URL with a tuple origin and drops path, query,
/// fragment, credentials and default ports. Hosts are lowercased (and
/// IDNA-encoded), so parsing a serialized origin returns it unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Origin(String);

impl Origin {
    pub fn parse(input: &str) -> Result<Self, KeyError> {
        let err = |reason: &str| KeyError::Origin {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let url = url::Url::parse(input.trim()).map_err(|e| err(&e.to_string()))?;
        match url.origin() {
            url::Origin::Tuple(..) => Ok(Self(url.origin().ascii_serialization())),
            url::Origin::Opaque(_) => Err(err("opaque origin (no scheme/host/port tuple)")),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Origin {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-(session, origin, domain) seed.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FarbleSeed {
    bytes: [u8; SEED_LEN],
    tag: String,
}

impl FarbleSeed {
    /// Builds a seed from raw bytes, e.g. a published test vector.
    pub fn from_bytes(bytes: [u8; SEED_LEN], tag: impl Into<String>) -> Self {
        Self {
            bytes,
            tag: tag.into(),
        }
    }

    pub fn as_bytes(&self) -> &[u8; SEED_LEN] {
        &self.bytes
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Sub-seed for an independent stream inside one domain:
    /// `SHA-256(seed ‖ 0x00 ‖ label)`, tagged `tag/label`.
    pub fn child(&self, label: &str) -> FarbleSeed {
        debug_assert!(!label.as_bytes().contains(&0));
        let mut h = Sha256::new();
        h.update(self.bytes);
        h.update([0u8]);
        h.update(label.as_bytes());
        FarbleSeed {
            bytes: h.finalize().into(),
            tag: format!("{}/{}", self.tag, label),
        }
    }

    /// Seed bound to a content digest: `SHA-256(seed ‖ digest)`.
    pub(crate) fn bind(&self, digest: &[u8; 32]) -> FarbleSeed {
        let mut h = Sha256::new();
        h.update(self.bytes);
        h.update(digest);
        FarbleSeed {
            bytes: h.finalize().into(),
            tag: self.tag.clone(),
        }
    }
}

impl fmt::Debug for FarbleSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FarbleSeed({}, {}..)",
            self.tag,
            hex::encode(&self.bytes[..4])
        )
    }
}

pub fn derive_seed(
    session: &SessionKey,
    origin: &Origin,
    tag: &str,
) -> Result<FarbleSeed, KeyError> {
    if tag.as_bytes().contains(&0) {
        return Err(KeyError::TagNul(tag.to_string()));
    }
    let mut h = Sha256::new();
    h.update(session.as_bytes());
    h.update([0u8]);
    h.update(origin.as_str().as_bytes());
    h.update([0u8]);
    h.update(tag.as_bytes());
    Ok(FarbleSeed {
        bytes: h.finalize().into(),
        tag: tag.to_string(),
    })
}

fn block(seed: &FarbleSeed, counter: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.bytes);
    h.update(counter.to_le_bytes());
    h.finalize().into()
}

/// Writes `out.len()` stream bytes starting at `offset`.
pub fn keystream_fill(seed: &FarbleSeed, offset: u64, out: &mut [u8]) {
    let mut pos = offset;
    let mut written = 0;
    while written < out.len() {
        let blk = block(seed, pos / 32);
        let start = (pos % 32) as usize;
        let take = (32 - start).min(out.len() - written);
        out[written..written + take].copy_from_slice(&blk[start..start + take]);
        written += take;
        pos += take as u64;
    }
}

pub fn keystream_bytes(seed: &FarbleSeed, offset: u64, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    keystream_fill(seed, offset, &mut out);
    out
}

/// Sequential reader over the keystream; avoids rehashing a block per byte.
pub(crate) struct Keystream<'a> {
    seed: &'a FarbleSeed,
    counter: u64,
    block: [u8; 32],
    pos: usize,
}

impl<'a> Keystream<'a> {
    pub(crate) fn new(seed: &'a FarbleSeed) -> Self {
        Self {
            seed,
            counter: 0,
            block: block(seed, 0),
            pos: 0,
        }
    }

    pub(crate) fn next_byte(&mut self) -> u8 {
        if self.pos == 32 {
            self.counter += 1;
            self.block = block(self.seed, self.counter);
            self.pos = 0;
        }
        let b = self.block[self.pos];
        self.pos += 1;
        b
    }

    /// Next 8 bytes as a uniform draw; matches `uniform01` at consecutive indices.
    pub(crate) fn next_unit(&mut self) -> f64 {
        let mut raw = [0u8; 8];
        for b in &mut raw {
            *b = self.next_byte();
        }
        unit_from_le(raw)
    }
}

fn unit_from_le(raw: [u8; 8]) -> f64 {
    let u = u64::from_le_bytes(raw);
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform real in `[0, 1)` with 53 bits of resolution.
pub fn uniform01(seed: &FarbleSeed, index: u64) -> f64 {
    let mut raw = [0u8; 8];
    keystream_fill(seed, index.wrapping_mul(8), &mut raw);
    unit_from_le(raw)
}

/// Uniform integer in the closed range `[lo, hi]`.
pub fn uniform_range(seed: &FarbleSeed, index: u64, lo: i64, hi: i64) -> Result<i64, KeyError> {
    if lo > hi {
        return Err(KeyError::Range { lo, hi });
    }
    let span = (hi as i128 - lo as i128 + 1) as f64;
    let step = (uniform01(seed, index) * span).floor() as i128;
    Ok((lo as i128 + step).min(hi as i128) as i64)
}
