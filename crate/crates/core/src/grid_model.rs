//! Registry of Wide Area Synchronous Grids (WASGs) and aggregation of
//! administrative statistics onto them.
//!
//! Member codes (ISO 3166 / ISO 3166-2) drive statistics aggregation;
//! boundary polygons drive point resolution.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{self, BBox, GeoPoint, MultiPolygon};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("malformed WASG document: {0}")]
    MalformedDocument(String),
    #[error("duplicate abbreviation `{abbrev}` (features `{first}` and `{second}`)")]
    DuplicateAbbrev {
        abbrev: String,
        first: String,
        second: String,
    },
    #[error("duplicate WASG id `{0}`")]
    DuplicateId(String),
    #[error("member code `{code}` appears in `{first}` and `{second}`")]
    DuplicateMember {
        code: String,
        first: String,
        second: String,
    },
    #[error("feature `{feature}`: ring {ring} is not closed or has fewer than 4 vertices")]
    OpenRing { feature: String, ring: usize },
    #[error("feature `{feature}`: {reason}")]
    InvalidStats { feature: String, reason: String },
    #[error("no statistics for member codes: {}", .0.join(", "))]
    MissingStats(Vec<String>),
}

/// One synchronous grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WasgRegion {
    pub id: String,
    pub name: String,
    pub abbrev: String,
    pub members: BTreeSet<String>,
    /// `[lon, lat]` rings, WGS84 degrees.
    pub boundary: MultiPolygon,
    pub population: u64,
    pub internet_users: u64,
    pub area_km2: f64,
}

impl WasgRegion {
    pub fn contains(&self, p: GeoPoint) -> Result<bool, geo::GeoError> {
        if self.boundary.is_empty() {
            return Err(geo::GeoError::NoBoundary(self.id.clone()));
        }
        Ok(geo::point_in_multipolygon(p, &self.boundary))
    }

    /// Whether the region reaches the polar band beyond `threshold_deg`.
    pub fn band_overlap(&self, threshold_deg: f64) -> Result<bool, geo::GeoError> {
        if self.boundary.is_empty() {
            return Err(geo::GeoError::NoBoundary(self.id.clone()));
        }
        geo::polygons_reach_band(&self.boundary, threshold_deg)
    }

    pub fn bbox(&self) -> Option<BBox> {
        BBox::of(&self.boundary)
    }
}

/// `true` iff `p` is inside or on the boundary of `region`.
pub fn point_in_region(p: GeoPoint, region: &WasgRegion) -> Result<bool, geo::GeoError> {
    region.contains(p)
}

pub fn band_overlap(region: &WasgRegion, threshold_deg: f64) -> Result<bool, geo::GeoError> {
    region.band_overlap(threshold_deg)
}

/// Immutable set of WASGs, ordered by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WasgRegistry {
    regions: Vec<WasgRegion>,
    by_id: BTreeMap<String, usize>,
    by_member: BTreeMap<String, usize>,
}

impl WasgRegistry {
    pub fn new(regions: Vec<WasgRegion>) -> Result<Self, GridError> {
        let mut regions = regions;
        regions.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = BTreeMap::new();
        let mut by_member: BTreeMap<String, usize> = BTreeMap::new();
        let mut abbrevs: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, r) in regions.iter().enumerate() {
            validate_region(r)?;
            if by_id.insert(r.id.clone(), i).is_some() {
                return Err(GridError::DuplicateId(r.id.clone()));
            }
            if let Some(&j) = abbrevs.get(r.abbrev.as_str()) {
                return Err(GridError::DuplicateAbbrev {
                    abbrev: r.abbrev.clone(),
                    first: regions[j].id.clone(),
                    second: r.id.clone(),
                });
            }
            abbrevs.insert(&r.abbrev, i);
            for code in &r.members {
                if let Some(&j) = by_member.get(code) {
                    return Err(GridError::DuplicateMember {
                        code: code.clone(),
                        first: regions[j].id.clone(),
                        second: r.id.clone(),
                    });
                }
                by_member.insert(code.clone(), i);
            }
        }
        Ok(Self {
            regions,
            by_id,
            by_member,
        })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[WasgRegion] {
        &self.regions
    }

    pub fn get(&self, id: &str) -> Option<&WasgRegion> {
        self.by_id.get(id).map(|&i| &self.regions[i])
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// WASG owning an ISO country or subdivision code.
    pub fn region_of_member(&self, code: &str) -> Option<&WasgRegion> {
        self.by_member.get(code).map(|&i| &self.regions[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().map(|r| r.id.as_str())
    }

    /// Canonical GeoJSON FeatureCollection; `load_registry` of the output
    /// reproduces `self`.
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .regions
            .iter()
            .map(|r| {
                let geometry = if r.boundary.is_empty() {
                    Value::Null
                } else {
                    json!({"type": "MultiPolygon", "coordinates": r.boundary})
                };
                json!({
                    "type": "Feature",
                    "geometry": geometry,
                    "properties": {
                        "id": r.id,
                        "name": r.name,
                        "abbrev": r.abbrev,
                        "members": r.members,
                        "population": r.population,
                        "internet_users": r.internet_users,
                        "area_km2": r.area_km2,
                    }
                })
            })
            .collect();
        json!({"type": "FeatureCollection", "features": features})
    }
}

fn validate_region(r: &WasgRegion) -> Result<(), GridError> {
    for (ri, ring) in r.boundary.iter().flatten().enumerate() {
        if ring.len() < 4 || ring.first() != ring.last() {
            return Err(GridError::OpenRing {
                feature: r.id.clone(),
                ring: ri,
            });
        }
    }
    if r.internet_users > r.population {
        return Err(GridError::InvalidStats {
            feature: r.id.clone(),
            reason: format!(
                "internet_users {} exceeds population {}",
                r.internet_users, r.population
            ),
        });
    }
    if !r.boundary.is_empty() && !(r.area_km2 > 0.0) {
        return Err(GridError::InvalidStats {
            feature: r.id.clone(),
            reason: "area_km2 must be positive when a boundary is present".into(),
        });
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<RawFeature>,
}

#[derive(Deserialize)]
struct RawFeature {
    geometry: Option<RawGeometry>,
    properties: RawProps,
}

#[derive(Deserialize)]
#[serde(tag = "type", content = "coordinates")]
enum RawGeometry {
    Polygon(geo::Polygon),
    MultiPolygon(MultiPolygon),
}

#[derive(Deserialize)]
struct RawProps {
    id: String,
    #[serde(default)]
    name: Option<String>,
    abbrev: String,
    #[serde(default)]
    members: Vec<String>,
    #[serde(default)]
    population: u64,
    #[serde(default)]
    internet_users: u64,
    #[serde(default)]
    area_km2: Option<f64>,
}

/// Parses a WASG GeoJSON FeatureCollection. Missing `area_km2` is computed
/// from the boundary.
pub fn load_registry(doc: &str) -> Result<WasgRegistry, GridError> {
    let raw: RawCollection =
        serde_json::from_str(doc).map_err(|e| GridError::MalformedDocument(e.to_string()))?;
    if raw.kind != "FeatureCollection" {
        return Err(GridError::MalformedDocument(format!(
            "expected FeatureCollection, found `{}`",
            raw.kind
        )));
    }
    let mut regions = Vec::with_capacity(raw.features.len());
    for f in raw.features {
        let p = f.properties;
        let boundary = match f.geometry {
            None => Vec::new(),
            Some(RawGeometry::Polygon(poly)) => vec![poly],
            Some(RawGeometry::MultiPolygon(mp)) => mp,
        };
        let area_km2 = p
            .area_km2
            .unwrap_or_else(|| geo::multipolygon_area_km2(&boundary));
        let mut members = BTreeSet::new();
        for m in p.members {
            if !members.insert(m.clone()) {
                return Err(GridError::DuplicateMember {
                    code: m,
                    first: p.id.clone(),
                    second: p.id.clone(),
                });
            }
        }
        regions.push(WasgRegion {
            name: p.name.unwrap_or_else(|| p.id.clone()),
            id: p.id,
            abbrev: p.abbrev,
            members,
            boundary,
            population: p.population,
            internet_users: p.internet_users,
            area_km2,
        });
    }
    WasgRegistry::new(regions)
}

/// One row of an administrative statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminStatRecord {
    pub code: String,
    pub population: u64,
    pub internet_users: Option<u64>,
    pub penetration: Option<f64>,
    pub area_km2: f64,
}

impl AdminStatRecord {
    /// `US-CA` -> `US`; `None` for country codes.
    pub fn parent_country(&self) -> Option<&str> {
        self.code.split_once('-').map(|(c, _)| c)
    }

    fn own_penetration(&self) -> Option<f64> {
        match (self.internet_users, self.penetration) {
            (_, Some(p)) => Some(p),
            (Some(u), None) if self.population > 0 => Some(u as f64 / self.population as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StatTotals {
    pub population: u64,
    pub internet_users: u64,
    pub area_km2: f64,
}

impl StatTotals {
    fn add(&mut self, pop: u64, users: u64, area: f64) {
        self.population += pop;
        self.internet_users += users;
        self.area_km2 += area;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsMode {
    /// Member codes without a record are an error.
    Strict,
    /// Missing member codes are reported and excluded.
    Lenient,
}

/// Per-WASG statistics. `wasg + uncovered + superseded` equals the sum over
/// all input records (with derived user counts), exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StatsAggregation {
    pub per_wasg: BTreeMap<String, StatTotals>,
    /// Records in no WASG and not superseded by subdivision records.
    pub uncovered: StatTotals,
    pub uncovered_codes: Vec<String>,
    /// Country records whose subdivisions are listed individually. They
    /// supply penetration only and are excluded from world totals.
    pub superseded: StatTotals,
    pub superseded_codes: Vec<String>,
    /// WASG member codes with no statistics record.
    pub missing: Vec<String>,
}

impl StatsAggregation {
    /// WASG totals plus the uncovered remainder.
    pub fn world(&self) -> StatTotals {
        let mut w = self.uncovered;
        for t in self.per_wasg.values() {
            w.add(t.population, t.internet_users, t.area_km2);
        }
        w
    }
}

/// Resolved user count for a record: explicit value, else population times
/// its own penetration, else population times the parent country's
/// penetration.
fn resolved_users(rec: &AdminStatRecord, by_code: &BTreeMap<&str, &AdminStatRecord>) -> u64 {
    if let Some(u) = rec.internet_users {
        return u;
    }
    let pen = rec.penetration.or_else(|| {
        rec.parent_country()
            .and_then(|c| by_code.get(c))
            .and_then(|p| p.own_penetration())
    });
    pen.map(|p| (rec.population as f64 * p).round() as u64).unwrap_or(0)
}

pub fn aggregate_stats(
    registry: &WasgRegistry,
    stats: &[AdminStatRecord],
    mode: StatsMode,
) -> Result<StatsAggregation, GridError> {
    let by_code: BTreeMap<&str, &AdminStatRecord> =
        stats.iter().map(|r| (r.code.as_str(), r)).collect();
    let parents_with_children: BTreeSet<&str> = stats
        .iter()
        .filter_map(|r| r.parent_country())
        .filter(|c| by_code.contains_key(c))
        .collect();

    let mut agg = StatsAggregation::default();
    for r in registry.regions() {
        agg.per_wasg.insert(r.id.clone(), StatTotals::default());
        for m in &r.members {
            if !by_code.contains_key(m.as_str()) {
                agg.missing.push(m.clone());
            }
        }
    }
    agg.missing.sort();
    if mode == StatsMode::Strict && !agg.missing.is_empty() {
        return Err(GridError::MissingStats(agg.missing));
    }
    if !agg.missing.is_empty() {
        log::warn!("{} WASG member codes have no statistics", agg.missing.len());
    }

    // Sum in code order so floating area totals do not depend on input order.
    for (code, rec) in &by_code {
        let users = resolved_users(rec, &by_code);
        match registry.region_of_member(code) {
            Some(region) => agg
                .per_wasg
                .get_mut(&region.id)
                .expect("registry region")
                .add(rec.population, users, rec.area_km2),
            None if parents_with_children.contains(code) => {
                agg.superseded.add(rec.population, users, rec.area_km2);
                agg.superseded_codes.push(code.to_string());
            }
            None => {
                agg.uncovered.add(rec.population, users, rec.area_km2);
                agg.uncovered_codes.push(code.to_string());
            }
        }
    }
    Ok(agg)
}
