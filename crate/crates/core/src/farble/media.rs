use sha2::{Digest, Sha256};

use super::FarbleError;
use crate::keyrand::{FarbleSeed, Keystream};
use crate::real::Real;

/// Half-width of the audio perturbation.
pub const AUDIO_EPSILON: f64 = 1e-7;

/// Row-major RGBA pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitmapBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BitmapBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, FarbleError> {
        let expected = 4 * width as u64 * height as u64;
        if data.len() as u64 != expected {
            return Err(FarbleError::BitmapLength {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Parses `LE32 width ‖ LE32 height ‖ RGBA bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FarbleError> {
        if bytes.len() < 8 {
            return Err(FarbleError::Format {
                what: "bitmap",
                reason: format!("{} bytes is shorter than the 8-byte header", bytes.len()),
            });
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        Self::new(width, height, bytes[8..].to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.data.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }
}

/// Planar PCM samples, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSamples<T> {
    sample_rate: u32,
    channels: Vec<Vec<T>>,
}

impl<T: Real> AudioSamples<T> {
    pub fn new(sample_rate: u32, channels: Vec<Vec<T>>) -> Result<Self, FarbleError> {
        let frames = channels.first().map_or(0, Vec::len);
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != frames {
                return Err(FarbleError::ChannelLength {
                    channel: c,
                    expected: frames,
                    actual: ch.len(),
                });
            }
            if let Some(i) = ch.iter().position(|s| !s.is_finite()) {
                return Err(FarbleError::NonFiniteSample {
                    channel: c,
                    index: i,
                });
            }
        }
        Ok(Self {
            sample_rate,
            channels,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    /// Parses `LE32 rate ‖ LE32 channels ‖ LE32 frames ‖ f32 LE samples`,
    /// samples interleaved by frame.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FarbleError> {
        let bad = |reason: String| FarbleError::Format {
            what: "audio",
            reason,
        };
        if bytes.len() < 12 {
            return Err(bad(format!(
                "{} bytes is shorter than the 12-byte header",
                bytes.len()
            )));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let (rate, nch, frames) = (word(0), word(1) as usize, word(2) as usize);
        let expected = 12u64 + 4 * nch as u64 * frames as u64;
        if bytes.len() as u64 != expected {
            return Err(bad(format!(
                "expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut channels = vec![Vec::with_capacity(frames); nch];
        for (i, chunk) in bytes[12..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            channels[i % nch].push(T::from_f32(v).unwrap_or_else(T::nan));
        }
        Self::new(rate, channels)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let frames = self.frames();
        let mut out = Vec::with_capacity(12 + 4 * frames * self.channels.len());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&(self.channels.len() as u32).to_le_bytes());
        out.extend_from_slice(&(frames as u32).to_le_bytes());
        for f in 0..frames {
            for ch in &self.channels {
                let v = ch[f].to_f32().unwrap_or(f32::NAN);
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

fn bitmap_digest(seed: &FarbleSeed, input: &BitmapBuffer) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.as_bytes());
    h.update(input.width.to_le_bytes());
    h.update(input.height.to_le_bytes());
    h.update(&input.data);
    h.finalize().into()
}

/// Flips the least significant bit of R, G and B bytes under a content-bound
/// mask. The k-th colour byte (alpha bytes are not counted) is XORed with bit
/// `k % 8` of keystream byte `k / 8`.
pub fn farble_bitmap(seed: &FarbleSeed, input: &BitmapBuffer) -> BitmapBuffer {
    let bound = seed.bind(&bitmap_digest(seed, input));
    let mut stream = Keystream::new(&bound);
    let mut data = input.data.clone();
    let mut bits = 0u8;
    let mut k = 0usize;
    for px in data.chunks_exact_mut(4) {
        for byte in &mut px[..3] {
            if k.is_multiple_of(8) {
                bits = stream.next_byte();
            }
            *byte ^= (bits >> (k % 8)) & 1;
            k += 1;
        }
    }
    BitmapBuffer {
        width: input.width,
        height: input.height,
        data,
    }
}

fn audio_digest<T: Real>(seed: &FarbleSeed, input: &AudioSamples<T>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.as_bytes());
    h.update(input.sample_rate.to_le_bytes());
    h.update((input.channels.len() as u32).to_le_bytes());
    h.update((input.frames() as u32).to_le_bytes());
    for ch in &input.channels {
        for s in ch {
            h.update(s.as_f64().to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Adds keyed noise in `(-ε, ε)` to every sample, ε = [`AUDIO_EPSILON`].
///
/// The content hash covers channel-major samples widened to `f64`, so `f32`
/// and `f64` buffers holding the same values hash identically. Sample `f` of
/// channel `c` uses draw `c · frames + f`.
pub fn farble_audio<T: Real>(seed: &FarbleSeed, input: &AudioSamples<T>) -> AudioSamples<T> {
    let bound = seed.bind(&audio_digest(seed, input));
    let mut stream = Keystream::new(&bound);
    let eps = T::lit(AUDIO_EPSILON);
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let channels = input
        .channels
        .iter()
        .map(|ch| {
            ch.iter()
                .map(|&s| {
                    let u = T::lit(stream.next_unit());
                    (s + (u - half) * two * eps).max(-T::one()).min(T::one())
                })
                .collect()
        })
        .collect();
    AudioSamples {
        sample_rate: input.sample_rate,
        channels,
    }
}
