//! Little lies: deterministic per-origin perturbation of media payloads and
//! reported values.
//!
//! Media transforms run in two passes. The first pass hashes the complete
//! payload; the second draws its perturbation from a seed bound to that hash.
//! Equal content is therefore perturbed identically while two different
//! payloads of the same shape get unrelated masks, so a page cannot learn the
//! mask from a probe canvas and subtract it from another one.

mod geo;
mod media;
mod profile;
mod strings;

pub use geo::{degrade_geolocation, haversine_m, GeoCoordinate, EARTH_RADIUS_M};
pub use media::{farble_audio, farble_bitmap, AudioSamples, BitmapBuffer, AUDIO_EPSILON};
pub use profile::{
    resolve_protection, EndpointGroup, ProfileCatalog, ProfileId, ProtectionAction,
    ProtectionProfile, PROFILE_SCHEMA_VERSION,
};
pub use strings::{spoof_device_ids, spoof_gl_strings, GlStringSet, DEVICE_ID_LEN, GL_CHARSET};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FarbleError {
    #[error("bitmap {width}x{height} needs {expected} bytes, got {actual}")]
    BitmapLength {
        width: u32,
        height: u32,
        expected: u64,
        actual: usize,
    },
    #[error("audio channel {channel} has {actual} frames, expected {expected}")]
    ChannelLength {
        channel: usize,
        expected: usize,
        actual: usize,
    },
    #[error("audio sample {index} in channel {channel} is not finite")]
    NonFiniteSample { channel: usize, index: usize },
    #[error("invalid coordinate: {0}")]
    Coordinate(String),
    #[error("precision must be a positive finite number of meters, got {0}")]
    Precision(f64),
    #[error("malformed {what} file: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("profile catalog: {0}")]
    Profile(String),
}
