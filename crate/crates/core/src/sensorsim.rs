//! Synthetic readings for a stationary device.
//!
//! A [`DeviceState`] is derived entirely from a seed: an initial attitude, an
//! Earth-field baseline and a bank of sines per magnetometer axis. Sampling is
//! a pure function of the state, the sensor kind and the time, so every
//! consumer holding the same seed (e.g. several same-origin tabs) observes
//! the same readings.
//!
//! Frames: `orientation` rotates device coordinates into world coordinates
//! (x east, y north, z up). Gravity is the world vector `(0, 0, -g)` expressed
//! in the device frame.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyrand::{uniform01, uniform_range, FarbleSeed};
use crate::real::Real;
use crate::timeshield::{sensor_timestamp, ContextEpoch, ShieldConfig, TimeError};

/// Model constants. None of these are measured optima; they produce signals
/// in the range of a phone lying on a table.
pub mod constants {
    pub const STANDARD_GRAVITY: f64 = 9.80665;
    pub const MAG_FIELD_MIN_UT: f64 = 25.0;
    pub const MAG_FIELD_MAX_UT: f64 = 65.0;
    pub const MAG_TERMS_MIN: i64 = 20;
    pub const MAG_TERMS_MAX: i64 = 30;
    pub const MAG_AMPLITUDE_UT: (f64, f64) = (0.05, 0.5);
    pub const MAG_PERIOD_S: (f64, f64) = (2.0, 600.0);
    /// Bound on the norm of the gravity noise vector, m/s².
    pub const GRAVITY_NOISE: f64 = 0.01;
    /// Bound on the norm of linear acceleration, m/s².
    pub const LINEAR_NOISE: f64 = 0.1;
    /// Bound on the norm of angular velocity, rad/s.
    pub const GYRO_NOISE: f64 = 0.01;
    /// Bound on the orientation jitter angle, degrees.
    pub const ORIENTATION_NOISE_DEG: f64 = 0.1;
    pub const AMBIENT_STEP_LUX: f64 = 50.0;
    /// Ambient light is `k · 50` lux for k drawn from this range.
    pub const AMBIENT_STEPS: (i64, i64) = (2, 20);
}

use constants::*;

#[derive(Debug, Error, PartialEq)]
pub enum SensorError {
    #[error("unknown sensor kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Magnetometer,
    Accelerometer,
    LinearAcceleration,
    Gravity,
    Gyroscope,
    OrientationAbs,
    OrientationRel,
    AmbientLight,
}

impl SensorKind {
    pub const ALL: [SensorKind; 8] = [
        SensorKind::Magnetometer,
        SensorKind::Accelerometer,
        SensorKind::LinearAcceleration,
        SensorKind::Gravity,
        SensorKind::Gyroscope,
        SensorKind::OrientationAbs,
        SensorKind::OrientationRel,
        SensorKind::AmbientLight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Magnetometer => "magnetometer",
            SensorKind::Accelerometer => "accelerometer",
            SensorKind::LinearAcceleration => "linear_acceleration",
            SensorKind::Gravity => "gravity",
            SensorKind::Gyroscope => "gyroscope",
            SensorKind::OrientationAbs => "orientation_abs",
            SensorKind::OrientationRel => "orientation_rel",
            SensorKind::AmbientLight => "ambient_light",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorKind {
    type Err = SensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SensorError::UnknownKind(s.to_string()))
    }
}

pub type Vec3<T> = [T; 3];

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quaternion<T> {
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    pub fn norm(&self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn conj(self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// `q v q*`.
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let p = Quaternion {
            w: T::zero(),
            x: v[0],
            y: v[1],
            z: v[2],
        };
        let r = self * p * self.conj();
        [r.x, r.y, r.z]
    }

    /// Rotation by the vector's length (radians) about its direction.
    pub fn from_rotation_vector(v: Vec3<T>) -> Self {
        let angle = norm3(v);
        if angle == T::zero() {
            return Self::identity();
        }
        let half = angle / T::lit(2.0);
        let s = half.sin() / angle;
        Self {
            w: half.cos(),
            x: v[0] * s,
            y: v[1] * s,
            z: v[2] * s,
        }
    }
}

/// Hamilton product `self ⊗ rhs`.
impl<T: Real> std::ops::Mul for Quaternion<T> {
    type Output = Self;

    fn mul(self, r: Self) -> Self {
        let a = self;
        Self {
            w: a.w * r.w - a.x * r.x - a.y * r.y - a.z * r.z,
            x: a.w * r.x + a.x * r.w + a.y * r.z - a.z * r.y,
            y: a.w * r.y - a.x * r.z + a.y * r.w + a.z * r.x,
            z: a.w * r.z + a.x * r.y - a.y * r.x + a.z * r.w,
        }
    }
}

pub fn norm3<T: Real>(v: Vec3<T>) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTerm<T> {
    pub amplitude: T,
    pub period_s: T,
    pub phase: T,
}

/// Sum of sines driving one magnetometer axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineBank<T> {
    terms: Vec<SineTerm<T>>,
}

impl<T: Real> SineBank<T> {
    fn generate(seed: &FarbleSeed) -> Self {
        let count =
            uniform_range(seed, 0, MAG_TERMS_MIN, MAG_TERMS_MAX).expect("static range") as usize;
        let lerp = |u: f64, (lo, hi): (f64, f64)| T::lit(lo + (hi - lo) * u);
        let mut terms: Vec<SineTerm<T>> = Vec::with_capacity(count);
        let mut index = 1;
        while terms.len() < count {
            let term = SineTerm {
                amplitude: lerp(uniform01(seed, index), MAG_AMPLITUDE_UT),
                period_s: lerp(uniform01(seed, index + 1), MAG_PERIOD_S),
                phase: T::from_unit(uniform01(seed, index + 2)) * T::TAU(),
            };
            index += 3;
            if !terms.contains(&term) {
                terms.push(term);
            }
        }
        Self { terms }
    }

    pub fn terms(&self) -> &[SineTerm<T>] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, t_s: T) -> T {
        self.terms.iter().fold(T::zero(), |acc, term| {
            acc + term.amplitude * (T::TAU() * t_s / term.period_s + term.phase).sin()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensorValue<T> {
    Vector(Vec3<T>),
    Scalar(T),
    Quaternion(Quaternion<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading<T> {
    pub kind: SensorKind,
    pub value: SensorValue<T>,
    pub timestamp_ms: T,
}

/// Stationary device model; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState<T> {
    seed: FarbleSeed,
    time_seed: FarbleSeed,
    shield: ShieldConfig<T>,
    epoch: ContextEpoch<T>,
    orientation: Quaternion<T>,
    relative_yaw: Quaternion<T>,
    mag_baseline: Vec3<T>,
    mag_banks: [SineBank<T>; 3],
    ambient_lux: T,
}

/// Builds the state for `seed`. Timestamps default to a sub-seed of `seed`,
/// the default shield and a context epoch of zero; use
/// [`DeviceState::with_clock`] to share the engine-wide time seed.
pub fn init_device_state<T: Real>(seed: &FarbleSeed) -> DeviceState<T> {
    // Uniform rotation (Shoemake's subgroup algorithm).
    let o = seed.child("orientation");
    let (u1, u2, u3) = (uniform01(&o, 0), uniform01(&o, 1), uniform01(&o, 2));
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let orientation = Quaternion {
        w: T::lit(a * (tau * u2).sin()),
        x: T::lit(a * (tau * u2).cos()),
        y: T::lit(b * (tau * u3).sin()),
        z: T::lit(b * (tau * u3).cos()),
    }
    .normalized();

    let yaw = T::lit(tau * uniform01(&o, 3));
    let relative_yaw = Quaternion::from_rotation_vector([T::zero(), T::zero(), yaw]);

    let m = seed.child("mag.baseline");
    let z = 2.0 * uniform01(&m, 0) - 1.0;
    let phi = tau * uniform01(&m, 1);
    let magnitude = MAG_FIELD_MIN_UT + (MAG_FIELD_MAX_UT - MAG_FIELD_MIN_UT) * uniform01(&m, 2);
    let r = (1.0 - z * z).max(0.0).sqrt();
    let mag_baseline = [
        T::lit(magnitude * r * phi.cos()),
        T::lit(magnitude * r * phi.sin()),
        T::lit(magnitude * z),
    ];

    let mag_banks = [
        SineBank::generate(&seed.child("mag.x")),
        SineBank::generate(&seed.child("mag.y")),
        SineBank::generate(&seed.child("mag.z")),
    ];

    let steps = uniform_range(&seed.child("ambient"), 0, AMBIENT_STEPS.0, AMBIENT_STEPS.1)
        .expect("static range");
    DeviceState {
        seed: seed.clone(),
        time_seed: seed.child("time"),
        shield: ShieldConfig::default(),
        epoch: ContextEpoch::default(),
        orientation,
        relative_yaw,
        mag_baseline,
        mag_banks,
        ambient_lux: T::lit(steps as f64 * AMBIENT_STEP_LUX),
    }
}

impl<T: Real> DeviceState<T> {
    pub fn with_clock(
        mut self,
        time_seed: FarbleSeed,
        shield: ShieldConfig<T>,
        epoch: ContextEpoch<T>,
    ) -> Self {
        self.time_seed = time_seed;
        self.shield = shield;
        self.epoch = epoch;
        self
    }

    pub fn seed(&self) -> &FarbleSeed {
        &self.seed
    }

    pub fn orientation(&self) -> Quaternion<T> {
        self.orientation
    }

    pub fn mag_baseline(&self) -> Vec3<T> {
        self.mag_baseline
    }

    pub fn mag_banks(&self) -> &[SineBank<T>; 3] {
        &self.mag_banks
    }

    pub fn ambient_lux(&self) -> T {
        self.ambient_lux
    }

    pub fn epoch(&self) -> ContextEpoch<T> {
        self.epoch
    }

    /// Noise vector for `stream` at context time `rel_ms`, each component
    /// uniform in `[-bound/√3, bound/√3)` so its norm stays under `bound`.
    fn noise(&self, stream: &str, rel_ms: T, bound: f64) -> Vec3<T> {
        let s = self.seed.child(stream);
        // Keyed by the microsecond tick so equal times share draws.
        let tick = (rel_ms * T::lit(1000.0))
            .round()
            .to_u64()
            .unwrap_or(u64::MAX);
        let scale = bound / 3f64.sqrt();
        let draw = |axis: u64| {
            T::lit((2.0 * uniform01(&s, tick.wrapping_mul(4).wrapping_add(axis)) - 1.0) * scale)
        };
        [draw(0), draw(1), draw(2)]
    }

    fn gravity(&self, rel_ms: T) -> Vec3<T> {
        let g = self
            .orientation
            .conj()
            .rotate([T::zero(), T::zero(), -T::lit(STANDARD_GRAVITY)]);
        let n = self.noise("noise.gravity", rel_ms, GRAVITY_NOISE);
        [g[0] + n[0], g[1] + n[1], g[2] + n[2]]
    }

    fn magnetometer(&self, rel_ms: T) -> Vec3<T> {
        let t_s = rel_ms / T::lit(1000.0);
        let mut out = self.mag_baseline;
        for (axis, bank) in out.iter_mut().zip(&self.mag_banks) {
            *axis += bank.eval(t_s);
        }
        out
    }

    fn attitude(&self, rel_ms: T, stream: &str) -> Quaternion<T> {
        let jitter = self.noise(stream, rel_ms, ORIENTATION_NOISE_DEG.to_radians());
        (self.orientation * Quaternion::from_rotation_vector(jitter)).normalized()
    }

    /// Reading of `kind` at monotonic clock time `raw_ms`.
    pub fn sample(&self, kind: SensorKind, raw_ms: T) -> Result<SensorReading<T>, SensorError> {
        let timestamp_ms = sensor_timestamp(&self.time_seed, &self.epoch, raw_ms, &self.shield)?;
        let rel = raw_ms - self.epoch.epoch_ms();
        let value = match kind {
            SensorKind::Magnetometer => SensorValue::Vector(self.magnetometer(rel)),
            SensorKind::Gravity => SensorValue::Vector(self.gravity(rel)),
            SensorKind::LinearAcceleration => {
                SensorValue::Vector(self.noise("noise.linear", rel, LINEAR_NOISE))
            }
            SensorKind::Accelerometer => {
                let g = self.gravity(rel);
                let l = self.noise("noise.linear", rel, LINEAR_NOISE);
                SensorValue::Vector([g[0] + l[0], g[1] + l[1], g[2] + l[2]])
            }
            SensorKind::Gyroscope => SensorValue::Vector(self.noise("noise.gyro", rel, GYRO_NOISE)),
            SensorKind::OrientationAbs => {
                SensorValue::Quaternion(self.attitude(rel, "noise.orientation"))
            }
            SensorKind::OrientationRel => SensorValue::Quaternion(
                (self.relative_yaw * self.attitude(rel, "noise.orientation")).normalized(),
            ),
            SensorKind::AmbientLight => SensorValue::Scalar(self.ambient_lux),
        };
        Ok(SensorReading {
            kind,
            value,
            timestamp_ms,
        })
    }
}
