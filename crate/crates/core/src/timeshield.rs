//! Timestamp rounding with keyed per-bucket jitter, and context-relative
//! sensor timestamps.
//!
//! A timestamp `t` falls in bucket `b = floor(t / q)`. With randomization off
//! the result is `b·q`; with it on, `b·q + u_b·q` where `u_b` is the keyed
//! uniform draw at index `b`. Every timestamp inside a bucket maps to the same
//! value and buckets never overlap, so the transform is monotone and never
//! moves a value by a full quantum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyrand::{uniform01, FarbleSeed};
use crate::real::Real;

pub const DEFAULT_QUANTUM_MS: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum TimeError {
    #[error("timestamp must be finite and >= 0, got {0}")]
    Negative(f64),
    #[error("quantum must be finite and > 0, got {0}")]
    Quantum(f64),
    #[error("reading at {raw} ms precedes context epoch {epoch} ms")]
    BeforeEpoch { raw: f64, epoch: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShieldConfig<T> {
    quantum_ms: T,
    randomize: bool,
}

impl<T: Real> ShieldConfig<T> {
    pub fn new(quantum_ms: T, randomize: bool) -> Result<Self, TimeError> {
        if !quantum_ms.is_finite() || quantum_ms <= T::zero() {
            return Err(TimeError::Quantum(quantum_ms.as_f64()));
        }
        Ok(Self {
            quantum_ms,
            randomize,
        })
    }

    pub fn quantum_ms(&self) -> T {
        self.quantum_ms
    }

    pub fn randomize(&self) -> bool {
        self.randomize
    }
}

impl<T: Real> Default for ShieldConfig<T> {
    fn default() -> Self {
        Self {
            quantum_ms: T::lit(DEFAULT_QUANTUM_MS),
            randomize: true,
        }
    }
}

/// Monotonic clock reading taken when a page context was created.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextEpoch<T> {
    epoch_ms: T,
}

impl<T: Real> ContextEpoch<T> {
    pub fn new(epoch_ms: T) -> Self {
        Self { epoch_ms }
    }

    pub fn epoch_ms(&self) -> T {
        self.epoch_ms
    }
}

impl<T: Real> Default for ContextEpoch<T> {
    fn default() -> Self {
        Self::new(T::zero())
    }
}

/// Bucket index of `t`, corrected for division rounding so that
/// `b·q <= t < (b+1)·q` holds exactly.
fn bucket<T: Real>(t: T, q: T) -> T {
    let mut b = (t / q).floor();
    if b * q > t {
        b -= T::one();
    } else if (b + T::one()) * q <= t {
        b += T::one();
    }
    b
}

pub fn shield_timestamp<T: Real>(
    seed: &FarbleSeed,
    t_ms: T,
    cfg: &ShieldConfig<T>,
) -> Result<T, TimeError> {
    if !t_ms.is_finite() || t_ms < T::zero() {
        return Err(TimeError::Negative(t_ms.as_f64()));
    }
    let q = cfg.quantum_ms;
    let b = bucket(t_ms, q);
    let base = b * q;
    if !cfg.randomize {
        return Ok(base);
    }
    let index = b.to_u64().unwrap_or(u64::MAX);
    let out = base + T::from_unit(uniform01(seed, index)) * q;
    // Rounding may land exactly on the next bucket's base; stay inside ours.
    Ok(if out >= base + q { base } else { out })
}

/// Time since context creation, shielded. The device boot offset present in
/// both arguments cancels out.
pub fn sensor_timestamp<T: Real>(
    seed: &FarbleSeed,
    epoch: &ContextEpoch<T>,
    raw_monotonic_ms: T,
    cfg: &ShieldConfig<T>,
) -> Result<T, TimeError> {
    if raw_monotonic_ms.is_nan() || raw_monotonic_ms < epoch.epoch_ms {
        return Err(TimeError::BeforeEpoch {
            raw: raw_monotonic_ms.as_f64(),
            epoch: epoch.epoch_ms.as_f64(),
        });
    }
    shield_timestamp(seed, raw_monotonic_ms - epoch.epoch_ms, cfg)
}
