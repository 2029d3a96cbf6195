//! Equirectangular projection about a local origin. Good to well under a
//! metre at the few-kilometre scale of a mission.

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// `(north, east)` in metres of `(lat, lon)` relative to `origin`.
pub fn latlon_to_local(lat: f64, lon: f64, origin: (f64, f64)) -> (f64, f64) {
    let (olat, olon) = origin;
    let north = EARTH_RADIUS_M * (lat - olat).to_radians();
    let east = EARTH_RADIUS_M * olat.to_radians().cos() * wrap_lon(lon - olon).to_radians();
    (north, east)
}

pub fn local_to_latlon(north: f64, east: f64, origin: (f64, f64)) -> (f64, f64) {
    let (olat, olon) = origin;
    let lat = olat + (north / EARTH_RADIUS_M).to_degrees();
    let lon = olon + (east / (EARTH_RADIUS_M * olat.to_radians().cos())).to_degrees();
    (lat, wrap_lon(lon))
}

fn wrap_lon(d: f64) -> f64 {
    if (-180.0..=180.0).contains(&d) {
        d
    } else {
        (d + 180.0).rem_euclid(360.0) - 180.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_maps_to_zero() {
        assert_eq!(latlon_to_local(44.2, -76.5, (44.2, -76.5)), (0.0, 0.0));
    }

    #[test]
    fn equator_millidegree() {
        // 6371000 * 0.001 * pi / 180, evaluated separately.
        let (n, e) = latlon_to_local(0.001, 0.0, (0.0, 0.0));
        assert!((n - 111.194_926_644_558_75).abs() < 1e-6);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn roundtrip() {
        let origin = (44.2253, -76.4951);
        for (n, e) in [(0.0, 0.0), (120.0, -35.5), (-9000.0, 7000.0)] {
            let (lat, lon) = local_to_latlon(n, e, origin);
            let (n2, e2) = latlon_to_local(lat, lon, origin);
            let (lat2, lon2) = local_to_latlon(n2, e2, origin);
            assert!((lat - lat2).abs() < 1e-9 && (lon - lon2).abs() < 1e-9);
            assert!((n - n2).abs() < 1e-6 && (e - e2).abs() < 1e-6);
        }
    }
}
