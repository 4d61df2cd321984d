use serde::{Deserialize, Serialize};

use crate::road_graph::GeoPoint;

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Origin of the local equirectangular projection, in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lon: f64,
    pub lat: f64,
}

/// Origin used for networks that start out planar (synthetic worlds).
pub const DEFAULT_ORIGIN: GeoOrigin = GeoOrigin {
    lon: -71.0935,
    lat: 42.3601,
};

impl GeoOrigin {
    /// Centre of the bounding box of `(lon, lat)` pairs.
    pub fn bbox_centroid(coords: impl IntoIterator<Item = (f64, f64)>) -> Option<GeoOrigin> {
        let mut it = coords.into_iter();
        let (lon, lat) = it.next()?;
        let (mut min_lon, mut max_lon, mut min_lat, mut max_lat) = (lon, lon, lat, lat);
        for (lon, lat) in it {
            min_lon = min_lon.min(lon);
            max_lon = max_lon.max(lon);
            min_lat = min_lat.min(lat);
            max_lat = max_lat.max(lat);
        }
        Some(GeoOrigin {
            lon: 0.5 * (min_lon + max_lon),
            lat: 0.5 * (min_lat + max_lat),
        })
    }

    pub fn project(&self, lon: f64, lat: f64) -> GeoPoint {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        GeoPoint {
            x: (lon - self.lon) * k * self.lat.to_radians().cos(),
            y: (lat - self.lat) * k,
        }
    }

    pub fn unproject(&self, p: GeoPoint) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        (
            self.lon + p.x / (k * self.lat.to_radians().cos()),
            self.lat + p.y / k,
        )
    }
}
