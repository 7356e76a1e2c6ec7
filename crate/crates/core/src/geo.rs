//! Spherical-earth geodesy in nautical miles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean earth radius in nautical miles.
pub const EARTH_RADIUS_NM: f64 = 3440.065;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn validate(&self) -> Result<()> {
        if (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon) {
            Ok(())
        } else {
            Err(Error::BadCoordinate { lat: self.lat, lon: self.lon })
        }
    }
}

/// Great-circle distance by the haversine formula.
pub fn haversine_distance(a: LatLon, b: LatLon) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_NM * h.sqrt().min(1.0).asin())
}

/// Forward azimuth from `a` to `b`, degrees in [0, 360).
pub fn initial_bearing(a: LatLon, b: LatLon) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if a == b {
        return Err(Error::UndefinedBearing);
    }
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    if x == 0.0 && y == 0.0 {
        return Err(Error::UndefinedBearing);
    }
    Ok(crate::track::wrap360(y.atan2(x).to_degrees()))
}

/// Point reached from `start` after `dist_nm` along initial course `bearing_deg`.
pub fn destination(start: LatLon, bearing_deg: f64, dist_nm: f64) -> LatLon {
    let delta = dist_nm / EARTH_RADIUS_NM;
    let theta = bearing_deg.to_radians();
    let phi1 = start.lat.to_radians();
    let lambda1 = start.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 =
        lambda1 + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    LatLon { lat: phi2.to_degrees(), lon: crate::track::wrap180(lambda2.to_degrees()) }
}

/// Distance of `p` from the great circle through `a` and `b`, unsigned.
pub fn cross_track_distance(p: LatLon, a: LatLon, b: LatLon) -> Result<f64> {
    let d_ap = haversine_distance(a, p)? / EARTH_RADIUS_NM;
    if d_ap == 0.0 {
        return Ok(0.0);
    }
    let theta_ap = initial_bearing(a, p)?.to_radians();
    let theta_ab = initial_bearing(a, b)?.to_radians();
    Ok((d_ap.sin() * (theta_ap - theta_ab).sin()).asin().abs() * EARTH_RADIUS_NM)
}

/// Local flat projection around a reference point: (east, north) in nautical miles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equirectangular {
    pub origin: LatLon,
    cos_ref: f64,
}

impl Equirectangular {
    pub fn new(origin: LatLon) -> Self {
        Equirectangular { origin, cos_ref: origin.lat.to_radians().cos() }
    }

    pub fn project(&self, p: LatLon) -> (f64, f64) {
        let nm_per_deg = EARTH_RADIUS_NM.to_radians();
        (
            (p.lon - self.origin.lon) * self.cos_ref * nm_per_deg,
            (p.lat - self.origin.lat) * nm_per_deg,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_coordinates_rejected() {
        let ok = LatLon::new(0.0, 0.0);
        assert!(haversine_distance(LatLon::new(91.0, 0.0), ok).is_err());
        assert!(initial_bearing(ok, LatLon::new(0.0, 181.0)).is_err());
        assert!(matches!(initial_bearing(ok, ok), Err(Error::UndefinedBearing)));
    }

    #[test]
    fn destination_inverts_distance_and_bearing() {
        let a = LatLon::new(1.359, 103.989);
        let b = destination(a, 37.0, 25.0);
        assert!((haversine_distance(a, b).unwrap() - 25.0).abs() < 1e-9);
        assert!((initial_bearing(a, b).unwrap() - 37.0).abs() < 1e-9);
    }

    #[test]
    fn cross_track_of_point_on_route_is_zero() {
        let a = LatLon::new(1.0, 103.0);
        let b = destination(a, 90.0, 30.0);
        let mid = destination(a, 90.0, 10.0);
        assert!(cross_track_distance(mid, a, b).unwrap() < 1e-6);
        let off = destination(mid, 0.0, 2.0);
        assert!((cross_track_distance(off, a, b).unwrap() - 2.0).abs() < 1e-3);
    }
}
