//! Browser fingerprinting countermeasures as a library.
//!
//! - [`keyrand`]: per-session, per-origin keyed randomness (SHA-256 based).
//! - [`farble`]: deterministic small lies for canvas, audio, WebGL strings,
//!   device ids and geolocation, plus the protection profiles.
//! - [`timeshield`]: timestamp quantization with keyed jitter.
//! - [`sensorsim`]: a stationary synthetic device for motion and light sensors.
//! - [`fpd`]: fingerprinting detection from API call counts.
//! - [`nbs`]: blocking of requests from public pages into local networks.
//!
//! Numeric code is generic over the scalar through [`real::Real`]; the
//! aliases below fix it to `f64` (and `f32` with an `F32` suffix).

pub mod farble;
pub mod fpd;
pub mod keyrand;
pub mod nbs;
pub mod real;
pub mod sensorsim;
pub mod timeshield;

use keyrand::{derive_seed, FarbleSeed, KeyError, Origin, SessionKey};
use real::Real;

/// Engine version reported by the command-line tool.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Domain tags used to derive per-feature seeds.
pub mod tags {
    pub const CANVAS: &str = "canvas";
    pub const AUDIO: &str = "audio";
    pub const WEBGL: &str = "webgl";
    pub const DEVICE_IDS: &str = "device_ids";
    pub const GEO: &str = "geo";
    pub const SENSOR: &str = "sensor";
    pub const SENSOR_MAG: &str = "sensor.mag";
    pub const TIME: &str = "time";

    pub const ALL: [&str; 8] = [
        CANVAS, AUDIO, WEBGL, DEVICE_IDS, GEO, SENSOR, SENSOR_MAG, TIME,
    ];
}

pub type AudioSamples = farble::AudioSamples<f64>;
pub type AudioSamplesF32 = farble::AudioSamples<f32>;
pub type GeoCoordinate = farble::GeoCoordinate<f64>;
pub type GeoCoordinateF32 = farble::GeoCoordinate<f32>;
pub type ShieldConfig = timeshield::ShieldConfig<f64>;
pub type ShieldConfigF32 = timeshield::ShieldConfig<f32>;
pub type ContextEpoch = timeshield::ContextEpoch<f64>;
pub type ContextEpochF32 = timeshield::ContextEpoch<f32>;
pub type DeviceState = sensorsim::DeviceState<f64>;
pub type DeviceStateF32 = sensorsim::DeviceState<f32>;
pub type SensorReading = sensorsim::SensorReading<f64>;
pub type SensorReadingF32 = sensorsim::SensorReading<f32>;
pub type SineBank = sensorsim::SineBank<f64>;
pub type SineBankF32 = sensorsim::SineBank<f32>;

/// A session key bound to one origin; hands out the per-feature seeds.
#[derive(Debug, Clone)]
pub struct OriginContext {
    session: SessionKey,
    origin: Origin,
}

impl OriginContext {
    pub fn new(session: SessionKey, origin: Origin) -> Self {
        Self { session, origin }
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn seed(&self, tag: &str) -> Result<FarbleSeed, KeyError> {
        derive_seed(&self.session, &self.origin, tag)
    }

    /// Device model for this origin. Its timestamps use the origin's `time`
    /// seed so they agree with [`timeshield::shield_timestamp`] output.
    pub fn device_state<T: Real>(
        &self,
        shield: timeshield::ShieldConfig<T>,
        epoch: timeshield::ContextEpoch<T>,
    ) -> Result<sensorsim::DeviceState<T>, KeyError> {
        let state = sensorsim::init_device_state(&self.seed(tags::SENSOR)?);
        Ok(state.with_clock(self.seed(tags::TIME)?, shield, epoch))
    }
}
