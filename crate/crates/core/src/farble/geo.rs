use serde::{Deserialize, Serialize};

use super::FarbleError;
use crate::keyrand::{uniform01, FarbleSeed};
use crate::real::Real;

/// Mean Earth radius used both for grid sizing and distance checks.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoordinate<T> {
    pub latitude: T,
    pub longitude: T,
    pub accuracy: T,
}

impl<T: Real> GeoCoordinate<T> {
    /// Validates ranges; a longitude of exactly -180 is folded to 180.
    pub fn new(latitude: T, longitude: T, accuracy: T) -> Result<Self, FarbleError> {
        let deg = |v: f64| T::lit(v);
        if !latitude.is_finite() || latitude < deg(-90.0) || latitude > deg(90.0) {
            return Err(FarbleError::Coordinate(format!(
                "latitude {latitude} outside [-90, 90]"
            )));
        }
        if !longitude.is_finite() || longitude < deg(-180.0) || longitude > deg(180.0) {
            return Err(FarbleError::Coordinate(format!(
                "longitude {longitude} outside (-180, 180]"
            )));
        }
        if !accuracy.is_finite() || accuracy < T::zero() {
            return Err(FarbleError::Coordinate(format!(
                "accuracy {accuracy} must be >= 0"
            )));
        }
        let longitude = if longitude == deg(-180.0) {
            deg(180.0)
        } else {
            longitude
        };
        Ok(Self {
            latitude,
            longitude,
            accuracy,
        })
    }
}

/// Great-circle distance in meters.
pub fn haversine_m<T: Real>(a: &GeoCoordinate<T>, b: &GeoCoordinate<T>) -> T {
    let (lat1, lat2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.longitude - a.longitude).to_radians();
    let two = T::lit(2.0);
    let h = (dlat / two).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / two).sin().powi(2);
    two * T::lit(EARTH_RADIUS_M) * h.sqrt().min(T::one()).asin()
}

/// Snaps to a `precision_m` grid and reports a keyed point inside the cell.
///
/// Latitude cells start at the south pole. Longitude cells start at -180 and
/// are sized at the latitude cell's centre, so every point of a latitude band
/// shares one longitude grid. The reported point sits at a seed-dependent
/// fraction in `[0.25, 0.75)` of the cell along each axis; since it stays in
/// the interior of its own cell, degrading it again is a no-op.
pub fn degrade_geolocation<T: Real>(
    seed: &FarbleSeed,
    c: &GeoCoordinate<T>,
    precision_m: T,
) -> Result<GeoCoordinate<T>, FarbleError> {
    if !precision_m.is_finite() || precision_m <= T::zero() {
        return Err(FarbleError::Precision(precision_m.as_f64()));
    }
    let c = GeoCoordinate::new(c.latitude, c.longitude, c.accuracy)?;
    let lit = T::lit;
    let quarter = lit(0.25);
    let half = lit(0.5);
    let frac_lat = quarter + half * T::from_unit(uniform01(seed, 0));
    let frac_lon = quarter + half * T::from_unit(uniform01(seed, 1));

    let m_per_deg = lit(EARTH_RADIUS_M) * T::PI() / lit(180.0);
    let lat_cell = precision_m / m_per_deg;
    let lat_cells = (lit(180.0) / lat_cell).ceil().max(T::one());
    let lat_idx = ((c.latitude + lit(90.0)) / lat_cell)
        .floor()
        .min(lat_cells - T::one());
    let latitude = (lit(-90.0) + (lat_idx + frac_lat) * lat_cell).min(lit(90.0));
    let centre = (lit(-90.0) + (lat_idx + half) * lat_cell).min(lit(90.0));

    let full = lit(360.0);
    let lon_cell = {
        let cos = centre.to_radians().cos();
        if cos <= T::epsilon() {
            full
        } else {
            (precision_m / (m_per_deg * cos)).min(full)
        }
    };
    let lon_cells = (full / lon_cell).ceil();
    let mut lon_idx = ((c.longitude + lit(180.0)) / lon_cell).floor();
    if lon_idx >= lon_cells {
        // +180 on a grid that tiles exactly; it is the same meridian as -180.
        lon_idx = T::zero();
    }
    let longitude = (lit(-180.0) + (lon_idx + frac_lon) * lon_cell).min(lit(180.0));

    Ok(GeoCoordinate {
        latitude,
        longitude,
        accuracy: c.accuracy.max(precision_m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrand::{derive_seed, Origin, SessionKey};

    fn seed(origin: &str) -> FarbleSeed {
        derive_seed(
            &SessionKey::from_bytes([1; 32]),
            &Origin::parse(origin).unwrap(),
            "geo",
        )
        .unwrap()
    }

    fn coord(lat: f64, lon: f64) -> GeoCoordinate<f64> {
        GeoCoordinate::new(lat, lon, 5.0).unwrap()
    }

    #[test]
    fn one_meter_precision_stays_close() {
        let s = seed("https://a.example");
        for &(lat, lon) in &[
            (49.2265, 16.5958),
            (-33.86, 151.2),
            (0.0, 0.0),
            (89.9999, 10.0),
            (12.0, 179.99999),
        ] {
            let c = coord(lat, lon);
            let d = degrade_geolocation(&s, &c, 1.0).unwrap();
            assert!(haversine_m(&c, &d) <= 2.0, "{lat},{lon} -> {d:?}");
            assert_eq!(d.accuracy, 5.0);
        }
    }

    #[test]
    fn deterministic_and_idempotent() {
        let s = seed("https://a.example");
        for &p in &[1.0, 37.0, 1000.0, 100_000.0, 5_000_000.0] {
            for &(lat, lon) in &[(49.2, 16.6), (-89.99, -179.0), (90.0, 180.0), (0.0, -180.0)] {
                let d = degrade_geolocation(&s, &coord(lat, lon), p).unwrap();
                assert_eq!(degrade_geolocation(&s, &coord(lat, lon), p).unwrap(), d);
                assert_eq!(
                    degrade_geolocation(&s, &d, p).unwrap(),
                    d,
                    "p={p} ({lat},{lon})"
                );
                assert!((-90.0..=90.0).contains(&d.latitude));
                assert!(d.longitude > -180.0 && d.longitude <= 180.0);
                assert_eq!(d.accuracy, p.max(5.0));
            }
        }
    }

    #[test]
    fn coarse_grid_merges_nearby_points() {
        // 100 km cells: latitude cell = 0.899320 deg. Brno (49.1950, 16.6068)
        // sits in band floor((49.1950 + 90) / 0.899320) = 154, which spans
        // [48.4953, 49.3947]; the longitude cell there is 1.3693 deg wide,
        // so cell floor(196.6068 / 1.3693) = 143 spans [15.8071, 17.1764].
        // Moving 1 km east (+0.013762 deg) keeps both points in that cell.
        let s = seed("https://a.example");
        let a = coord(49.1950, 16.6068);
        let b = coord(49.1950, 16.6068 + 0.013_762);
        assert!((haversine_m(&a, &b) - 1000.0).abs() < 5.0);
        let da = degrade_geolocation(&s, &a, 100_000.0).unwrap();
        let db = degrade_geolocation(&s, &b, 100_000.0).unwrap();
        assert_eq!(da, db);
        // A point in the neighbouring band maps elsewhere.
        let other = degrade_geolocation(&s, &coord(49.5, 16.6068), 100_000.0).unwrap();
        assert_ne!(other, da);
    }

    #[test]
    fn anchor_depends_on_origin() {
        let c = coord(49.1950, 16.6068);
        let a = degrade_geolocation(&seed("https://a.example"), &c, 10_000.0).unwrap();
        let b = degrade_geolocation(&seed("https://b.example"), &c, 10_000.0).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_invalid() {
        let s = seed("https://a.example");
        assert!(GeoCoordinate::new(91.0, 0.0, 0.0).is_err());
        assert!(GeoCoordinate::new(0.0, 180.5, 0.0).is_err());
        assert!(GeoCoordinate::new(0.0, 0.0, -1.0).is_err());
        assert!(GeoCoordinate::new(f64::NAN, 0.0, 0.0).is_err());
        let bad = GeoCoordinate {
            latitude: 100.0,
            longitude: 0.0,
            accuracy: 0.0,
        };
        assert!(degrade_geolocation(&s, &bad, 10.0).is_err());
        assert_eq!(
            degrade_geolocation(&s, &coord(0.0, 0.0), 0.0),
            Err(FarbleError::Precision(0.0))
        );
        assert_eq!(
            GeoCoordinate::new(0.0, -180.0, 0.0).unwrap().longitude,
            180.0
        );
    }

    #[test]
    fn works_for_f32() {
        let s = seed("https://a.example");
        let c = GeoCoordinate::new(49.2f32, 16.6, 0.0).unwrap();
        let d = degrade_geolocation(&s, &c, 1000.0f32).unwrap();
        assert!(haversine_m(&c, &d) < 1500.0);
        assert_eq!(degrade_geolocation(&s, &d, 1000.0).unwrap(), d);
    }
}
