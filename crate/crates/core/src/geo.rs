//! Geodesic and planar geometry primitives.
//!
//! Distances are great-circle (haversine) on a spherical Earth. Containment
//! is planar even-odd on (longitude, latitude) pairs, which is how GeoJSON
//! consumers treat polygons; rings crossing the antimeridian must be split
//! in the data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius (IUGG), kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Propagation speed of light in fiber (about 2c/3), km per second.
pub const FIBER_KM_PER_S: f64 = 200_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("region `{0}` has no boundary polygons")]
    NoBoundary(String),
    #[error("latitude threshold {0} outside (0, 90)")]
    BadThreshold(f64),
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::LongitudeOutOfRange(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lat: f64,
            lon: f64,
        }
        let raw = Raw::deserialize(d)?;
        GeoPoint::new(raw.lat, raw.lon).map_err(serde::de::Error::custom)
    }
}

/// Great-circle distance in kilometers.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// One-way fiber latency in milliseconds at [`FIBER_KM_PER_S`].
pub fn latency_ms(a: GeoPoint, b: GeoPoint) -> f64 {
    latency_ms_at(a, b, FIBER_KM_PER_S)
}

pub fn latency_ms_at(a: GeoPoint, b: GeoPoint, km_per_s: f64) -> f64 {
    haversine_km(a, b) / km_per_s * 1000.0
}

/// A closed ring of `[lon, lat]` vertices (first == last).
pub type Ring = Vec<[f64; 2]>;

/// A polygon: exterior ring followed by zero or more holes. Containment
/// uses the even-odd rule over all rings, so holes need no special casing.
pub type Polygon = Vec<Ring>;

pub type MultiPolygon = Vec<Polygon>;

/// Axis-aligned lon/lat bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn of(polys: &MultiPolygon) -> Option<BBox> {
        let mut it = polys.iter().flatten().flatten();
        let first = it.next()?;
        let mut b = BBox {
            min_lon: first[0],
            min_lat: first[1],
            max_lon: first[0],
            max_lat: first[1],
        };
        for v in it {
            b.min_lon = b.min_lon.min(v[0]);
            b.max_lon = b.max_lon.max(v[0]);
            b.min_lat = b.min_lat.min(v[1]);
            b.max_lat = b.max_lat.max(v[1]);
        }
        Some(b)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox {
            min_lon: self.min_lon.max(other.min_lon),
            min_lat: self.min_lat.max(other.min_lat),
            max_lon: self.max_lon.min(other.max_lon),
            max_lat: self.max_lat.min(other.max_lat),
        };
        (b.min_lon <= b.max_lon && b.min_lat <= b.max_lat).then_some(b)
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if cross != 0.0 {
        return false;
    }
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Even-odd containment; points on any ring edge count as inside.
pub fn point_in_polygon(lon: f64, lat: f64, polygon: &Polygon) -> bool {
    let p = [lon, lat];
    let mut inside = false;
    for ring in polygon {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > lat) != (b[1] > lat) {
                let x = a[0] + (lat - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

pub fn point_in_multipolygon(p: GeoPoint, polys: &MultiPolygon) -> bool {
    polys.iter().any(|poly| point_in_polygon(p.lon, p.lat, poly))
}

/// True iff some part of the boundary reaches latitude `>= threshold` or
/// `<= -threshold`. Tangency counts.
pub fn polygons_reach_band(polys: &MultiPolygon, threshold_deg: f64) -> Result<bool, GeoError> {
    if !(threshold_deg > 0.0 && threshold_deg < 90.0) {
        return Err(GeoError::BadThreshold(threshold_deg));
    }
    let hits = |lat: f64| lat >= threshold_deg || lat <= -threshold_deg;
    for ring in polys.iter().flatten() {
        for w in ring.windows(2) {
            let (a, b) = (w[0][1], w[1][1]);
            if hits(a) || hits(b) {
                return Ok(true);
            }
            // Planar edges are monotone in latitude, so an edge touches a
            // parallel only between its endpoint latitudes.
            let (lo, hi) = (a.min(b), a.max(b));
            if (lo..=hi).contains(&threshold_deg) || (lo..=hi).contains(&-threshold_deg) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Approximate spherical area of a ring in km² (unsigned).
pub fn ring_area_km2(ring: &Ring) -> f64 {
    if ring.len() < 4 {
        return 0.0;
    }
    let mut total = 0.0;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        total += (b[0] - a[0]).to_radians() * (2.0 + a[1].to_radians().sin() + b[1].to_radians().sin());
    }
    (total * EARTH_RADIUS_KM * EARTH_RADIUS_KM / 2.0).abs()
}

/// Exterior minus holes, summed across polygons.
pub fn multipolygon_area_km2(polys: &MultiPolygon) -> f64 {
    polys
        .iter()
        .map(|poly| {
            let mut rings = poly.iter();
            let outer = rings.next().map(ring_area_km2).unwrap_or(0.0);
            outer - rings.map(ring_area_km2).sum::<f64>()
        })
        .sum()
}
