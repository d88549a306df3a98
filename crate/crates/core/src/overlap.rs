//! Mapping of components and links onto WASGs, and the distribution
//! statistics built from that mapping.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::geo::{self, BBox, GeoPoint};
use crate::grid_model::{StatsAggregation, WasgRegistry};
use crate::ingest::{ComponentKind, InfraComponent, IpLink, LinkCategory, RouterNode};

#[derive(Debug, Error, PartialEq)]
pub enum OverlapError {
    #[error("link L{link} references unknown node N{node}")]
    UnknownNode { link: u64, node: u64 },
}

/// Point-to-WASG lookup over registry polygons.
pub struct ZoneResolver<'a> {
    registry: &'a WasgRegistry,
    // (region index, bbox, area) for regions with a boundary
    index: Vec<(usize, BBox, f64)>,
}

/// Outcome of resolving one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution<'a> {
    pub zone: Option<&'a str>,
    /// Regions other than `zone` that also contain the point.
    pub also_in: Vec<&'a str>,
}

impl<'a> ZoneResolver<'a> {
    pub fn new(registry: &'a WasgRegistry) -> Self {
        let index = registry
            .regions()
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let bbox = r.bbox()?;
                Some((i, bbox, geo::multipolygon_area_km2(&r.boundary)))
            })
            .collect();
        Self { registry, index }
    }

    /// Containing region; overlapping regions resolve to the smallest by
    /// area, then by id.
    pub fn resolve(&self, p: GeoPoint) -> Resolution<'a> {
        let regions = self.registry.regions();
        let mut hits: Vec<(f64, &'a str)> = self
            .index
            .iter()
            .filter(|(_, bbox, _)| bbox.contains(p.lon(), p.lat()))
            .filter(|(i, _, _)| geo::point_in_multipolygon(p, &regions[*i].boundary))
            .map(|&(i, _, area)| (area, regions[i].id.as_str()))
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let mut ids = hits.into_iter().map(|(_, id)| id);
        Resolution {
            zone: ids.next(),
            also_in: ids.collect(),
        }
    }

    pub fn zone_of(&self, p: GeoPoint) -> Option<String> {
        self.resolve(p).zone.map(str::to_string)
    }
}

/// Fills `zone` for every component. Output order equals input order.
pub fn resolve_components(components: &[InfraComponent], registry: &WasgRegistry) -> Vec<InfraComponent> {
    let resolver = ZoneResolver::new(registry);
    components
        .par_iter()
        .map(|c| {
            let res = resolver.resolve(c.geo);
            if !res.also_in.is_empty() {
                log::warn!(
                    "component `{}` lies in overlapping WASGs {:?}; assigned to `{}`",
                    c.id,
                    res.also_in,
                    res.zone.unwrap_or_default()
                );
            }
            InfraComponent {
                zone: res.zone.map(str::to_string),
                ..c.clone()
            }
        })
        .collect()
}

/// Zone per router node id; ungeolocated nodes map to `None`.
pub fn resolve_nodes(nodes: &[RouterNode], registry: &WasgRegistry) -> HashMap<u64, Option<String>> {
    let resolver = ZoneResolver::new(registry);
    nodes
        .par_iter()
        .map(|n| (n.node_id, n.geo.and_then(|p| resolver.zone_of(p))))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkCategoryCounts {
    pub both_mapped: u64,
    pub one_mapped: u64,
    pub none_mapped: u64,
}

impl LinkCategoryCounts {
    pub fn total(&self) -> u64 {
        self.both_mapped + self.one_mapped + self.none_mapped
    }

    fn bump(&mut self, c: LinkCategory) {
        match c {
            LinkCategory::BothMapped => self.both_mapped += 1,
            LinkCategory::OneMapped => self.one_mapped += 1,
            LinkCategory::NoneMapped => self.none_mapped += 1,
        }
    }
}

/// Annotates links with endpoint zones and their mapping category.
pub fn categorize_links(
    links: &[IpLink],
    node_zones: &HashMap<u64, Option<String>>,
) -> Result<(Vec<IpLink>, LinkCategoryCounts), OverlapError> {
    let mut counts = LinkCategoryCounts::default();
    let mut out = Vec::with_capacity(links.len());
    for l in links {
        let zone = |n: u64| {
            node_zones
                .get(&n)
                .cloned()
                .ok_or(OverlapError::UnknownNode { link: l.link_id, node: n })
        };
        let (zone_a, zone_b) = (zone(l.a)?, zone(l.b)?);
        let category = LinkCategory::from_zones(zone_a.as_deref(), zone_b.as_deref());
        counts.bump(category);
        out.push(IpLink {
            zone_a,
            zone_b,
            category: Some(category),
            ..l.clone()
        });
    }
    Ok((out, counts))
}

/// Unordered WASG pair, stored with `first <= second`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WasgPair(String, String);

impl WasgPair {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            WasgPair(a.to_string(), b.to_string())
        } else {
            WasgPair(b.to_string(), a.to_string())
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }

    pub fn is_intra(&self) -> bool {
        self.0 == self.1
    }
}

fn serialize_pairs<S: Serializer>(pairs: &BTreeMap<WasgPair, u64>, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Row<'a> {
        a: &'a str,
        b: &'a str,
        links: u64,
    }
    s.collect_seq(pairs.iter().map(|(p, &links)| Row {
        a: p.first(),
        b: p.second(),
        links,
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PairCounts {
    /// Links with both endpoints mapped, keyed by WASG pair (same-WASG
    /// links under `(X, X)`).
    #[serde(serialize_with = "serialize_pairs")]
    pub pairs: BTreeMap<WasgPair, u64>,
    /// Links with exactly one mapped endpoint, keyed by that endpoint's WASG.
    pub one_end: BTreeMap<String, u64>,
}

impl PairCounts {
    pub fn get(&self, a: &str, b: &str) -> u64 {
        self.pairs.get(&WasgPair::new(a, b)).copied().unwrap_or(0)
    }

    /// Pairs sorted by descending link count, ties by pair.
    pub fn ranked(&self) -> Vec<(&WasgPair, u64)> {
        let mut v: Vec<_> = self.pairs.iter().map(|(p, &c)| (p, c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

/// Counts annotated links per WASG pair and per single mapped endpoint.
pub fn pair_counts(links: &[IpLink]) -> PairCounts {
    let mut out = PairCounts::default();
    for l in links {
        match (l.zone_a.as_deref(), l.zone_b.as_deref()) {
            (Some(a), Some(b)) => *out.pairs.entry(WasgPair::new(a, b)).or_default() += 1,
            (Some(z), None) | (None, Some(z)) => *out.one_end.entry(z.to_string()).or_default() += 1,
            (None, None) => {}
        }
    }
    out
}

/// Datacenter regions collapsed onto the grids that power them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AzCollapse {
    /// Distinct grid-level zones; each unzoned datacenter counts as one.
    pub zone_count: usize,
    /// WASG id -> datacenter ids sharing it.
    pub groups: BTreeMap<String, Vec<String>>,
    /// Datacenters in no WASG, each its own zone.
    pub unzoned: Vec<String>,
    /// Sum of `attrs["az_count"]` (1 when absent).
    pub availability_zones: u64,
}

pub fn az_collapse(datacenters: &[InfraComponent]) -> AzCollapse {
    let mut out = AzCollapse::default();
    for dc in datacenters.iter().filter(|c| c.kind == ComponentKind::Datacenter) {
        out.availability_zones += dc.attrs.get("az_count").and_then(|v| v.as_u64()).unwrap_or(1);
        match &dc.zone {
            Some(z) => out.groups.entry(z.clone()).or_default().push(dc.id.clone()),
            None => out.unzoned.push(dc.id.clone()),
        }
    }
    for ids in out.groups.values_mut() {
        ids.sort();
    }
    out.unzoned.sort();
    out.zone_count = out.groups.len() + out.unzoned.len();
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WasgEntry {
    pub counts: BTreeMap<ComponentKind, u64>,
    pub population: u64,
    pub internet_users: u64,
    pub area_km2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub wasg: String,
    pub value: f64,
    pub cumulative_fraction: f64,
}

/// WASGs in decreasing order of one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    /// Denominator: WASG total plus whatever lies in no WASG.
    pub total: f64,
    pub entries: Vec<RankEntry>,
}

impl Ranking {
    fn build(values: Vec<(String, f64)>, uncovered: f64) -> Self {
        let mut values = values;
        values.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total = values.iter().map(|v| v.1).sum::<f64>() + uncovered;
        let mut acc = 0.0;
        let entries = values
            .into_iter()
            .map(|(wasg, value)| {
                acc += value;
                RankEntry {
                    wasg,
                    value,
                    cumulative_fraction: if total > 0.0 { acc / total } else { 0.0 },
                }
            })
            .collect();
        Ranking { total, entries }
    }

    /// Smallest number of top WASGs whose cumulative share reaches `f`.
    pub fn smallest_k(&self, f: f64) -> Option<usize> {
        if f <= 0.0 {
            return Some(0);
        }
        self.entries
            .iter()
            .position(|e| e.cumulative_fraction >= f - 1e-12)
            .map(|i| i + 1)
    }
}

/// Aggregate component, link and demographic distribution across WASGs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OverlapReport {
    pub per_wasg: BTreeMap<String, WasgEntry>,
    pub totals: BTreeMap<ComponentKind, u64>,
    pub uncovered: BTreeMap<ComponentKind, u64>,
    pub link_categories: LinkCategoryCounts,
    pub pair_counts: PairCounts,
    pub az_collapse: AzCollapse,
    /// Metric name -> ranking. Metrics are component kind names,
    /// `infrastructure` (all kinds except demand points), `population`,
    /// `internet_users` and `area_km2`.
    pub rankings: BTreeMap<String, Ranking>,
}

impl OverlapReport {
    pub fn smallest_k(&self, metric: &str, f: f64) -> Option<usize> {
        self.rankings.get(metric)?.smallest_k(f)
    }
}

/// Builds the report from resolved components, annotated links and
/// (optionally) aggregated statistics.
pub fn distribution_report(
    components: &[InfraComponent],
    links: &[IpLink],
    registry: &WasgRegistry,
    stats: Option<&StatsAggregation>,
) -> OverlapReport {
    let mut rep = OverlapReport::default();
    for id in registry.ids() {
        rep.per_wasg.insert(id.to_string(), WasgEntry::default());
    }
    for c in components {
        *rep.totals.entry(c.kind).or_default() += 1;
        match c.zone.as_ref().and_then(|z| rep.per_wasg.get_mut(z)) {
            Some(e) => *e.counts.entry(c.kind).or_default() += 1,
            None => *rep.uncovered.entry(c.kind).or_default() += 1,
        }
    }
    for r in registry.regions() {
        let e = rep.per_wasg.get_mut(&r.id).expect("registry id");
        match stats.and_then(|s| s.per_wasg.get(&r.id)) {
            Some(t) => {
                e.population = t.population;
                e.internet_users = t.internet_users;
                e.area_km2 = t.area_km2;
            }
            None => {
                e.population = r.population;
                e.internet_users = r.internet_users;
                e.area_km2 = r.area_km2;
            }
        }
    }
    for l in links {
        let cat = l
            .category
            .unwrap_or_else(|| LinkCategory::from_zones(l.zone_a.as_deref(), l.zone_b.as_deref()));
        rep.link_categories.bump(cat);
    }
    rep.pair_counts = pair_counts(links);
    rep.az_collapse = az_collapse(components);

    let kinds: BTreeSet<ComponentKind> = rep.totals.keys().copied().collect();
    for kind in &kinds {
        let vals = rep
            .per_wasg
            .iter()
            .map(|(id, e)| (id.clone(), e.counts.get(kind).copied().unwrap_or(0) as f64))
            .collect();
        let unc = rep.uncovered.get(kind).copied().unwrap_or(0) as f64;
        rep.rankings.insert(kind.to_string(), Ranking::build(vals, unc));
    }
    let infra = |m: &BTreeMap<ComponentKind, u64>| {
        m.iter()
            .filter(|(k, _)| **k != ComponentKind::DemandPoint)
            .map(|(_, v)| *v)
            .sum::<u64>() as f64
    };
    let vals = rep.per_wasg.iter().map(|(id, e)| (id.clone(), infra(&e.counts))).collect();
    rep.rankings
        .insert("infrastructure".into(), Ranking::build(vals, infra(&rep.uncovered)));

    let unc = stats.map(|s| s.uncovered).unwrap_or_default();
    let metric = |f: &dyn Fn(&WasgEntry) -> f64| -> Vec<(String, f64)> {
        rep.per_wasg.iter().map(|(id, e)| (id.clone(), f(e))).collect()
    };
    let pop = metric(&|e| e.population as f64);
    let users = metric(&|e| e.internet_users as f64);
    let area = metric(&|e| e.area_km2);
    rep.rankings
        .insert("population".into(), Ranking::build(pop, unc.population as f64));
    rep.rankings
        .insert("internet_users".into(), Ranking::build(users, unc.internet_users as f64));
    rep.rankings.insert("area_km2".into(), Ranking::build(area, unc.area_km2));
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolygonOverlap {
    pub a: String,
    pub b: String,
    /// Estimated share of the smaller region's area also inside the other.
    pub fraction: f64,
}

/// Overlap share above which the sampler warns.
pub const OVERLAP_WARN_FRACTION: f64 = 0.001;

/// Monte Carlo estimate of pairwise polygon overlap. Only pairs with
/// intersecting bounding boxes are sampled; points are drawn uniformly in
/// the box intersection.
pub fn sample_polygon_overlaps(registry: &WasgRegistry, samples: usize, seed: u64) -> Vec<PolygonOverlap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions: Vec<_> = registry
        .regions()
        .iter()
        .filter_map(|r| Some((r, r.bbox()?)))
        .collect();
    let mut out = Vec::new();
    for (i, (ra, ba)) in regions.iter().enumerate() {
        for (rb, bb) in &regions[i + 1..] {
            // Boxes that merely touch share a boundary, not area.
            let Some(inter) = ba
                .intersection(bb)
                .filter(|i| i.min_lon < i.max_lon && i.min_lat < i.max_lat)
            else {
                continue;
            };
            let (mut in_a, mut in_b, mut both) = (0u64, 0u64, 0u64);
            for _ in 0..samples {
                let lon = rng.gen_range(inter.min_lon..=inter.max_lon);
                let lat = rng.gen_range(inter.min_lat..=inter.max_lat);
                let p = GeoPoint::new(lat, lon).expect("inside a valid bbox");
                let (x, y) = (
                    geo::point_in_multipolygon(p, &ra.boundary),
                    geo::point_in_multipolygon(p, &rb.boundary),
                );
                in_a += x as u64;
                in_b += y as u64;
                both += (x && y) as u64;
            }
            let denom = in_a.min(in_b);
            let fraction = if denom == 0 { 0.0 } else { both as f64 / denom as f64 };
            if both > 0 {
                out.push(PolygonOverlap {
                    a: ra.id.clone(),
                    b: rb.id.clone(),
                    fraction,
                });
            }
        }
    }
    out
}
