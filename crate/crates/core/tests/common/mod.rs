//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;

use gridzone::geo::GeoPoint;
use gridzone::grid_model::{load_registry, WasgRegistry};
use gridzone::ingest::{ComponentKind, InfraComponent, IpLink, RouterNode};
use gridzone::placement::{
    Candidate, DemandPoint, LatencyBounds, LocationRule, Objective, PlacementProblem, Predicate, SelectCount, SelectMode,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Axis-aligned WASG: `(id, lon0, lat0, lon1, lat1)`.
pub type Rect = (String, f64, f64, f64, f64);

pub struct Synthetic {
    pub registry: WasgRegistry,
    pub rects: Vec<Rect>,
    pub components: Vec<InfraComponent>,
    pub nodes: Vec<RouterNode>,
    pub links: Vec<IpLink>,
}

/// Ten disjoint rectangular grids at staggered latitudes, with gaps
/// between them so that some items fall in no grid.
pub fn synthetic_rects() -> Vec<Rect> {
    (0..10)
        .map(|i| {
            let lon0 = -178.0 + 36.0 * i as f64;
            let lat0 = -70.0 + 9.0 * i as f64;
            (format!("W{i}"), lon0, lat0, lon0 + 30.0, lat0 + 60.0)
        })
        .collect()
}

pub fn registry_of(rects: &[Rect]) -> WasgRegistry {
    let features: Vec<_> = rects
        .iter()
        .enumerate()
        .map(|(i, (id, x0, y0, x1, y1))| {
            json!({"type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]},
                "properties": {"id": id, "abbrev": id, "members": [format!("C{i}")],
                               "population": 1000 * (i + 1), "internet_users": 700 * (i + 1)}})
        })
        .collect();
    load_registry(&json!({"type": "FeatureCollection", "features": features}).to_string()).unwrap()
}

/// Containment oracle for the rectangles (strict interior is enough: random
/// points land on an edge with probability zero).
pub fn rect_zone(rects: &[Rect], lon: f64, lat: f64) -> Option<String> {
    rects
        .iter()
        .find(|(_, x0, y0, x1, y1)| lon >= *x0 && lon <= *x1 && lat >= *y0 && lat <= *y1)
        .map(|r| r.0.clone())
}

fn random_point(r: &mut ChaCha8Rng) -> GeoPoint {
    GeoPoint::new(r.gen_range(-85.0..85.0), r.gen_range(-180.0..180.0)).unwrap()
}

/// 10 WASGs, 500 components, 400 routers and 2000 links.
pub fn synthetic(seed: u64) -> Synthetic {
    let mut r = rng(seed);
    let rects = synthetic_rects();
    let registry = registry_of(&rects);
    let kinds = [
        ComponentKind::Ixp,
        ComponentKind::DnsRoot,
        ComponentKind::Datacenter,
        ComponentKind::Router,
        ComponentKind::DemandPoint,
    ];
    let components = (0..500)
        .map(|i| {
            let kind = kinds[r.gen_range(0..kinds.len())];
            let mut attrs = BTreeMap::new();
            if kind == ComponentKind::Datacenter {
                attrs.insert("az_count".to_string(), json!(r.gen_range(1..=6)));
            }
            InfraComponent {
                id: format!("c{i:03}"),
                kind,
                geo: random_point(&mut r),
                zone: None,
                weight: 1.0,
                attrs,
            }
        })
        .collect();
    let nodes: Vec<RouterNode> = (1..=400u64)
        .map(|id| RouterNode {
            node_id: id,
            interfaces: vec![IpAddr::V4(Ipv4Addr::new(10, (id >> 8) as u8, id as u8, 1))],
            geo: if r.gen_bool(0.9) { Some(random_point(&mut r)) } else { None },
        })
        .collect();
    let links = (1..=2000u64)
        .map(|id| {
            let a = r.gen_range(1..=400u64);
            let mut b = r.gen_range(1..=400u64);
            while b == a {
                b = r.gen_range(1..=400u64);
            }
            IpLink {
                link_id: id,
                a,
                b,
                zone_a: None,
                zone_b: None,
                category: None,
            }
        })
        .collect();
    Synthetic {
        registry,
        rects,
        components,
        nodes,
        links,
    }
}

/// Random undirected graph on `n` nodes named `v00..`. When `connected`, a
/// random spanning tree is laid down first.
pub fn random_graph(r: &mut ChaCha8Rng, n: usize, connected: bool, max_cap: u64) -> (Vec<String>, Vec<(usize, usize, u64)>) {
    let names = (0..n).map(|i| format!("v{i:02}")).collect();
    let mut edges = Vec::new();
    if connected {
        for v in 1..n {
            edges.push((r.gen_range(0..v), v, r.gen_range(1..=max_cap)));
        }
    }
    let extra = r.gen_range(0..=n * 2);
    for _ in 0..extra {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        if a != b {
            edges.push((a, b, r.gen_range(1..=max_cap)));
        }
    }
    (names, edges)
}

fn cap_matrix(n: usize, edges: &[(usize, usize, u64)], removed: &BTreeSet<usize>) -> Vec<Vec<u64>> {
    let mut cap = vec![vec![0u64; n]; n];
    for &(a, b, c) in edges {
        if a != b && !removed.contains(&a) && !removed.contains(&b) {
            cap[a][b] += c;
            cap[b][a] += c;
        }
    }
    cap
}

/// Depth-first augmenting paths on a dense residual matrix.
pub fn oracle_max_flow(n: usize, edges: &[(usize, usize, u64)], removed: &BTreeSet<usize>, s: usize, t: usize) -> u64 {
    let mut cap = cap_matrix(n, edges, removed);
    fn augment(cap: &mut [Vec<u64>], seen: &mut [bool], u: usize, t: usize, limit: u64) -> u64 {
        if u == t {
            return limit;
        }
        seen[u] = true;
        for v in 0..cap.len() {
            if !seen[v] && cap[u][v] > 0 {
                let got = augment(cap, seen, v, t, limit.min(cap[u][v]));
                if got > 0 {
                    cap[u][v] -= got;
                    cap[v][u] += got;
                    return got;
                }
            }
        }
        0
    }
    let mut total = 0;
    loop {
        let mut seen = vec![false; n];
        let got = augment(&mut cap, &mut seen, s, t, u64::MAX);
        if got == 0 {
            return total;
        }
        total += got;
    }
}

/// Minimum over every vertex set containing `s` but not `t` of the
/// capacity crossing it.
pub fn oracle_min_cut(n: usize, edges: &[(usize, usize, u64)], s: usize, t: usize) -> u64 {
    let mut best = u64::MAX;
    for mask in 0u32..(1 << n) {
        if mask & (1 << s) == 0 || mask & (1 << t) != 0 {
            continue;
        }
        let cut: u64 = edges
            .iter()
            .filter(|(a, b, _)| ((mask >> a) & 1) != ((mask >> b) & 1))
            .map(|e| e.2)
            .sum();
        best = best.min(cut);
    }
    best
}

/// Great-circle distance via the atan2 (Vincenty special case) form.
pub fn oracle_great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const R: f64 = 6371.0088;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let y = ((p2.cos() * dl.sin()).powi(2) + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2)).sqrt();
    let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    R * y.atan2(x)
}

pub const EARTH_HALF_CIRCUMFERENCE_KM: f64 = PI * 6371.0088;

/// Upward ray cast (+lat) with the half-open crossing rule.
pub fn oracle_inside(ring: &[[f64; 2]], lon: f64, lat: f64) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let ([x1, y1], [x2, y2]) = (w[0], w[1]);
        if (x1 > lon) != (x2 > lon) {
            let y = y1 + (lon - x1) * (y2 - y1) / (x2 - x1);
            if y > lat {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn distance_to_ring(ring: &[[f64; 2]], lon: f64, lat: f64) -> f64 {
    ring.windows(2)
        .map(|w| {
            let ([x1, y1], [x2, y2]) = (w[0], w[1]);
            let (dx, dy) = (x2 - x1, y2 - y1);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 { 0.0 } else { (((lon - x1) * dx + (lat - y1) * dy) / len2).clamp(0.0, 1.0) };
            ((lon - x1 - t * dx).powi(2) + (lat - y1 - t * dy).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Star-shaped simple polygon around a random centre, closed.
pub fn random_ring(r: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let (cx, cy) = (r.gen_range(-150.0..150.0), r.gen_range(-60.0..60.0));
    let k = r.gen_range(3..12);
    let mut angles: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    let mut ring: Vec<[f64; 2]> = angles
        .iter()
        .map(|a| {
            let rad = r.gen_range(1.0..20.0);
            [cx + rad * a.cos(), cy + rad * a.sin()]
        })
        .collect();
    ring.push(ring[0]);
    ring
}

/// A random placement instance: ≤ 20 candidates in ≤ 5 zones, n ≤ 4,
/// integer latencies and costs.
pub fn random_problem(r: &mut ChaCha8Rng, objective: Objective) -> PlacementProblem {
    let n_cap = if objective.is_pairwise() { 2 } else { 1 };
    let m = r.gen_range(n_cap..=20usize);
    let zones = r.gen_range(1..=5usize);
    let candidates: Vec<Candidate> = (0..m)
        .map(|i| Candidate {
            id: format!("c{i:02}"),
            geo: GeoPoint::new(r.gen_range(-60.0..60.0), r.gen_range(-170.0..170.0)).unwrap(),
            zone: if r.gen_bool(0.85) { Some(format!("Z{}", r.gen_range(0..zones))) } else { None },
            cost: Some(r.gen_range(0..50) as f64),
            country: Some(["US", "DE", "BR"][r.gen_range(0..3)].to_string()),
        })
        .collect();
    let u = r.gen_range(1..=4usize);
    let demands: Vec<DemandPoint> = (0..u)
        .map(|j| DemandPoint {
            id: format!("d{j}"),
            geo: GeoPoint::new(r.gen_range(-60.0..60.0), r.gen_range(-170.0..170.0)).unwrap(),
            weight: r.gen_range(0..5) as f64,
        })
        .collect();
    let latency_override = Some((0..u).map(|_| (0..m).map(|_| r.gen_range(1..100) as f64).collect()).collect());
    let n = r.gen_range(n_cap..=4usize).min(m);
    let mut location_rules = Vec::new();
    if r.gen_bool(0.3) {
        let predicate = match r.gen_range(0..3) {
            0 => Predicate::Bbox {
                min_lat: -60.0,
                min_lon: r.gen_range(-170.0..0.0),
                max_lat: 60.0,
                max_lon: r.gen_range(0.0..170.0),
            },
            1 => Predicate::CountryCodes(["DE".to_string()].into()),
            _ => Predicate::Hemisphere(gridzone::placement::Hemisphere::North),
        };
        location_rules.push(LocationRule {
            predicate,
            min_count: r.gen_range(1..=2),
        });
    }
    let latency_bounds = if r.gen_bool(0.3) {
        Some(LatencyBounds::Uniform(r.gen_range(30..100) as f64))
    } else {
        None
    };
    PlacementProblem {
        candidates,
        demands,
        select_count: SelectCount {
            mode: if r.gen_bool(0.7) { SelectMode::Exactly } else { SelectMode::AtMost },
            n,
        },
        zone_cap: r.gen_range(1..=2),
        location_rules,
        latency_bounds,
        objective,
        latency_override,
    }
}

pub const OBJECTIVES: [Objective; 5] = [
    Objective::MinWeightedSumAll,
    Objective::MinWeightedNearest,
    Objective::MinCost,
    Objective::MinPairwiseDistanceSum,
    Objective::MaxPairwiseDistanceSum,
];

fn oracle_haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
    let h = ((p2 - p1) / 2.0).sin().powi(2) + p1.cos() * p2.cos() * ((b.lon() - a.lon()).to_radians() / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().min(1.0).asin()
}

/// Feasibility and objective of `set` (indices into `p.candidates`),
/// computed straight from the problem statement. `None` if infeasible.
pub fn oracle_value(p: &PlacementProblem, set: &[usize]) -> Option<f64> {
    let lat = |j: usize, i: usize| p.latency_override.as_ref().unwrap()[j][i];
    let n = p.select_count.n;
    let ok_size = match p.select_count.mode {
        SelectMode::Exactly => set.len() == n,
        SelectMode::AtMost => set.len() <= n,
    };
    if !ok_size {
        return None;
    }
    let mut per_zone: BTreeMap<String, usize> = BTreeMap::new();
    for &i in set {
        let z = p.candidates[i].zone.clone().unwrap_or_else(|| format!("solo-{i}"));
        *per_zone.entry(z).or_default() += 1;
    }
    if per_zone.values().any(|&c| c > p.zone_cap) {
        return None;
    }
    for rule in &p.location_rules {
        let hits = set
            .iter()
            .filter(|&&i| {
                let c = &p.candidates[i];
                match &rule.predicate {
                    Predicate::Bbox {
                        min_lat,
                        min_lon,
                        max_lat,
                        max_lon,
                    } => c.geo.lat() >= *min_lat && c.geo.lat() <= *max_lat && c.geo.lon() >= *min_lon && c.geo.lon() <= *max_lon,
                    Predicate::CountryCodes(cc) => c.country.as_ref().is_some_and(|x| cc.contains(x)),
                    Predicate::Hemisphere(gridzone::placement::Hemisphere::North) => c.geo.lat() >= 0.0,
                    Predicate::Hemisphere(_) => unreachable!("generator only uses north"),
                }
            })
            .count();
        if hits < rule.min_count {
            return None;
        }
    }
    let bound = |_j: usize| match &p.latency_bounds {
        Some(LatencyBounds::Uniform(b)) => *b,
        Some(LatencyBounds::PerDemand(_)) => unreachable!("generator uses uniform bounds"),
        None => f64::INFINITY,
    };
    let u = p.demands.len();
    match p.objective {
        Objective::MinWeightedNearest => {
            let mut total = 0.0;
            for j in 0..u {
                let best = set
                    .iter()
                    .map(|&i| lat(j, i))
                    .filter(|&l| l <= bound(j))
                    .fold(f64::INFINITY, f64::min);
                if !best.is_finite() {
                    return None;
                }
                total += p.demands[j].weight * best;
            }
            Some(total)
        }
        _ => {
            if set.iter().any(|&i| (0..u).any(|j| lat(j, i) > bound(j))) {
                return None;
            }
            Some(match p.objective {
                Objective::MinWeightedSumAll => {
                    set.iter().map(|&i| (0..u).map(|j| p.demands[j].weight * lat(j, i)).sum::<f64>()).sum()
                }
                Objective::MinCost => set.iter().map(|&i| p.candidates[i].cost.unwrap()).sum(),
                _ => {
                    let mut s = 0.0;
                    for (x, &a) in set.iter().enumerate() {
                        for &b in &set[x + 1..] {
                            s += oracle_haversine_km(p.candidates[a].geo, p.candidates[b].geo);
                        }
                    }
                    s
                }
            })
        }
    }
}

/// Exhaustive search over every subset of size ≤ n in lexicographic order
/// of sorted ids; the first optimum (beyond a 1e-9 relative margin) wins.
pub fn oracle_optimum(p: &PlacementProblem) -> Option<(f64, BTreeSet<String>)> {
    let mut order: Vec<usize> = (0..p.candidates.len()).collect();
    order.sort_by(|&a, &b| p.candidates[a].id.cmp(&p.candidates[b].id));
    let maximize = p.objective == Objective::MaxPairwiseDistanceSum;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stack: Vec<usize> = Vec::new();
    fn walk(
        p: &PlacementProblem,
        order: &[usize],
        pos: usize,
        stack: &mut Vec<usize>,
        maximize: bool,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if let Some(v) = oracle_value(p, stack) {
            let better = match best {
                None => true,
                Some((b, _)) => {
                    let tol = 1e-9 * b.abs().max(1.0);
                    if maximize {
                        v > *b + tol
                    } else {
                        v < *b - tol
                    }
                }
            };
            if better {
                *best = Some((v, stack.clone()));
            }
        }
        if stack.len() == p.select_count.n {
            return;
        }
        for k in pos..order.len() {
            stack.push(order[k]);
            walk(p, order, k + 1, stack, maximize, best);
            stack.pop();
        }
    }
    walk(p, &order, 0, &mut stack, maximize, &mut best);
    best.map(|(v, s)| (v, s.into_iter().map(|i| p.candidates[i].id.clone()).collect()))
}

pub fn ids(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}
