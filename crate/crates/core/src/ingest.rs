//! Parsers for infrastructure datasets: ITDK-style router topology,
//! located component lists and administrative statistics tables.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read, Write};
use std::net::{IpAddr, Ipv4Addr};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::grid_model::AdminStatRecord;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file} line {line}: {reason}")]
    MalformedLine {
        file: &'static str,
        line: usize,
        reason: String,
    },
    #[error("link L{link}: endpoint N{node} is not a known node")]
    DanglingLinkEndpoint { link: u64, node: u64 },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(file: &'static str, line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedLine {
        file,
        line,
        reason: reason.into(),
    }
}

/// Class of a located Internet asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Router,
    Ixp,
    DnsRoot,
    Datacenter,
    DemandPoint,
    Custom,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 6] = [
        ComponentKind::Router,
        ComponentKind::Ixp,
        ComponentKind::DnsRoot,
        ComponentKind::Datacenter,
        ComponentKind::DemandPoint,
        ComponentKind::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentKind::Router => "router",
            ComponentKind::Ixp => "ixp",
            ComponentKind::DnsRoot => "dns_root",
            ComponentKind::Datacenter => "datacenter",
            ComponentKind::DemandPoint => "demand_point",
            ComponentKind::Custom => "custom",
        }
    }
}

impl FromStr for ComponentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown component kind `{s}`"))
    }
}

impl std::fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfraComponent {
    pub id: String,
    pub kind: ComponentKind,
    pub geo: GeoPoint,
    /// Resolved WASG id, filled by the overlap stage.
    pub zone: Option<String>,
    /// Users at a demand point; 1 otherwise.
    pub weight: f64,
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterNode {
    pub node_id: u64,
    pub interfaces: Vec<IpAddr>,
    pub geo: Option<GeoPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkCategory {
    BothMapped,
    OneMapped,
    NoneMapped,
}

impl LinkCategory {
    pub fn from_zones(a: Option<&str>, b: Option<&str>) -> Self {
        match (a.is_some(), b.is_some()) {
            (true, true) => LinkCategory::BothMapped,
            (false, false) => LinkCategory::NoneMapped,
            _ => LinkCategory::OneMapped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpLink {
    pub link_id: u64,
    pub a: u64,
    pub b: u64,
    pub zone_a: Option<String>,
    pub zone_b: Option<String>,
    pub category: Option<LinkCategory>,
}

/// Counts of what cleaning removed. `nodes_in - nodes_removed` equals the
/// number of returned nodes, likewise for links.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleaningReport {
    pub nodes_in: u64,
    pub nodes_removed: u64,
    pub interfaces_removed: u64,
    pub ipv6_interfaces: u64,
    pub links_in: u64,
    pub links_removed: u64,
    /// Links dropped because an endpoint was removed during cleaning.
    pub links_to_removed_nodes: u64,
    /// Links dropped because an endpoint never appeared in the nodes file.
    pub links_dangling: u64,
    /// Links without two distinct node references.
    pub links_degenerate: u64,
    pub nodes_geolocated: u64,
    pub geo_unmatched: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<RouterNode>,
    pub links: Vec<IpLink>,
    pub report: CleaningReport,
}

/// Zero-based field positions of latitude and longitude after the
/// `node.geo N<id>:` prefix. ITDK uses
/// `continent country region city lat lon ...`, tab separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeoColumns {
    pub lat: usize,
    pub lon: usize,
}

impl Default for GeoColumns {
    fn default() -> Self {
        Self { lat: 4, lon: 5 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TopologyOptions {
    pub geo_columns: GeoColumns,
    /// Fail on links naming nodes absent from the nodes file.
    pub strict: bool,
}

/// 224.0.0.0 - 239.255.255.255.
pub fn is_non_routable(ip: &Ipv4Addr) -> bool {
    ip.is_multicast()
}

fn parse_node_ref(tok: &str) -> Option<u64> {
    let tok = tok.strip_prefix('N')?;
    let id = tok.split(':').next()?;
    id.parse().ok()
}

fn parse_prefixed_id(head: &str, keyword: &str, letter: char) -> Option<u64> {
    let rest = head.strip_prefix(keyword)?.trim_start();
    let rest = rest.strip_prefix(letter)?;
    rest.strip_suffix(':')?.parse().ok()
}

fn content_lines<R: BufRead>(r: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    r.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// Parses the nodes file, dropping multicast interfaces and nodes left
/// without interfaces.
fn parse_nodes<R: BufRead>(
    r: R,
    report: &mut CleaningReport,
) -> Result<(Vec<RouterNode>, HashSet<u64>), IngestError> {
    let mut nodes = Vec::new();
    let mut removed = HashSet::new();
    let mut seen = HashSet::new();
    for (line_no, line) in content_lines(r) {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, rest) = line
            .split_once(':')
            .ok_or_else(|| malformed("nodes", line_no, "missing `:`"))?;
        let node_id = parse_prefixed_id(&format!("{head}:"), "node", 'N')
            .ok_or_else(|| malformed("nodes", line_no, format!("bad node header `{head}`")))?;
        if !seen.insert(node_id) {
            return Err(malformed("nodes", line_no, format!("duplicate node N{node_id}")));
        }
        report.nodes_in += 1;
        let mut interfaces = Vec::new();
        for tok in rest.split_whitespace() {
            let ip: IpAddr = tok
                .parse()
                .map_err(|_| malformed("nodes", line_no, format!("bad address `{tok}`")))?;
            match ip {
                IpAddr::V4(v4) if is_non_routable(&v4) => report.interfaces_removed += 1,
                IpAddr::V4(_) => interfaces.push(ip),
                IpAddr::V6(_) => {
                    report.ipv6_interfaces += 1;
                    interfaces.push(ip);
                }
            }
        }
        if interfaces.is_empty() {
            report.nodes_removed += 1;
            removed.insert(node_id);
            continue;
        }
        nodes.push(RouterNode {
            node_id,
            interfaces,
            geo: None,
        });
    }
    if report.ipv6_interfaces > 0 {
        log::warn!(
            "{} IPv6 interfaces passed through without validation",
            report.ipv6_interfaces
        );
    }
    Ok((nodes, removed))
}

fn parse_geo<R: BufRead>(
    r: R,
    cols: GeoColumns,
) -> Result<HashMap<u64, GeoPoint>, IngestError> {
    let mut out = HashMap::new();
    for (line_no, line) in content_lines(r) {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, rest) = line
            .split_once(':')
            .ok_or_else(|| malformed("geo", line_no, "missing `:`"))?;
        let node_id = parse_prefixed_id(&format!("{}:", head.trim()), "node.geo", 'N')
            .ok_or_else(|| malformed("geo", line_no, format!("bad geo header `{head}`")))?;
        let rest = rest.trim_start_matches([' ', '\t']);
        let fields: Vec<&str> = if rest.contains('\t') {
            rest.split('\t').collect()
        } else {
            rest.split_whitespace().collect()
        };
        let get = |i: usize, what: &str| -> Result<f64, IngestError> {
            fields
                .get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| malformed("geo", line_no, format!("missing or bad {what} in column {i}")))
        };
        let lat = get(cols.lat, "latitude")?;
        let lon = get(cols.lon, "longitude")?;
        let p = GeoPoint::new(lat, lon).map_err(|e| malformed("geo", line_no, e.to_string()))?;
        out.insert(node_id, p);
    }
    Ok(out)
}

fn parse_links<R: BufRead>(
    r: R,
    kept: &HashSet<u64>,
    known: &HashSet<u64>,
    strict: bool,
    report: &mut CleaningReport,
) -> Result<Vec<IpLink>, IngestError> {
    let mut links = Vec::new();
    for (line_no, line) in content_lines(r) {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, rest) = line
            .split_once(':')
            .ok_or_else(|| malformed("links", line_no, "missing `:`"))?;
        let link_id = parse_prefixed_id(&format!("{head}:"), "link", 'L')
            .ok_or_else(|| malformed("links", line_no, format!("bad link header `{head}`")))?;
        report.links_in += 1;
        let mut refs = Vec::with_capacity(2);
        for tok in rest.split_whitespace() {
            let n = parse_node_ref(tok)
                .ok_or_else(|| malformed("links", line_no, format!("bad node reference `{tok}`")))?;
            if !refs.contains(&n) {
                refs.push(n);
                if refs.len() == 2 {
                    break;
                }
            }
        }
        if refs.len() < 2 {
            report.links_removed += 1;
            report.links_degenerate += 1;
            continue;
        }
        let (a, b) = (refs[0], refs[1]);
        if let Some(&missing) = [a, b].iter().find(|n| !known.contains(n)) {
            if strict {
                return Err(IngestError::DanglingLinkEndpoint {
                    link: link_id,
                    node: missing,
                });
            }
            report.links_removed += 1;
            report.links_dangling += 1;
            continue;
        }
        if !kept.contains(&a) || !kept.contains(&b) {
            report.links_removed += 1;
            report.links_to_removed_nodes += 1;
            continue;
        }
        links.push(IpLink {
            link_id,
            a,
            b,
            zone_a: None,
            zone_b: None,
            category: None,
        });
    }
    Ok(links)
}

/// Parses and cleans an ITDK-style topology. Nodes without geolocation are
/// retained.
pub fn parse_topology<N: BufRead, G: BufRead, L: BufRead>(
    nodes_doc: N,
    geo_doc: Option<G>,
    links_doc: L,
    opts: TopologyOptions,
) -> Result<Topology, IngestError> {
    let mut report = CleaningReport::default();
    let (mut nodes, removed) = parse_nodes(nodes_doc, &mut report)?;
    let kept: HashSet<u64> = nodes.iter().map(|n| n.node_id).collect();

    if let Some(g) = geo_doc {
        let mut geo = parse_geo(g, opts.geo_columns)?;
        for n in &mut nodes {
            if let Some(p) = geo.remove(&n.node_id) {
                n.geo = Some(p);
                report.nodes_geolocated += 1;
            }
        }
        report.geo_unmatched = geo.len() as u64;
    }

    // Links to nodes removed by cleaning are dropped quietly; links to ids
    // never seen in the nodes file are dangling.
    let known: HashSet<u64> = kept.union(&removed).copied().collect();
    let links = parse_links(links_doc, &kept, &known, opts.strict, &mut report)?;
    Ok(Topology {
        nodes,
        links,
        report,
    })
}

fn row_err(row: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        row,
        reason: reason.into(),
    }
}

fn opt_field(rec: &csv::StringRecord, idx: Option<usize>) -> Option<&str> {
    idx.and_then(|i| rec.get(i)).map(str::trim).filter(|s| !s.is_empty())
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Rows of a component CSV that had no coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkippedRows {
    /// `(row, id)`; rows are 1-based data rows after the header.
    pub rows: Vec<(usize, String)>,
}

/// Parses a component CSV (`id,kind,lat,lon,weight,attrs_json`).
///
/// An empty `kind` cell takes `default_kind`. Rows with empty `lat`/`lon`
/// are skipped and reported; out-of-range coordinates are an error.
pub fn parse_components<R: Read>(
    doc: R,
    default_kind: Option<ComponentKind>,
) -> Result<(Vec<InfraComponent>, SkippedRows), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(doc);
    let headers = rdr
        .headers()
        .map_err(|e| row_err(0, e.to_string()))?
        .clone();
    let need = |n: &str| column(&headers, n).ok_or_else(|| row_err(0, format!("missing column `{n}`")));
    let (c_id, c_lat, c_lon) = (need("id")?, need("lat")?, need("lon")?);
    let (c_kind, c_weight, c_attrs) = (
        column(&headers, "kind"),
        column(&headers, "weight"),
        column(&headers, "attrs_json"),
    );

    let mut out = Vec::new();
    let mut skipped = SkippedRows::default();
    let mut ids = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| row_err(row, e.to_string()))?;
        let id = opt_field(&rec, Some(c_id))
            .ok_or_else(|| row_err(row, "empty id"))?
            .to_string();
        let kind = match opt_field(&rec, c_kind) {
            Some(k) => k.parse().map_err(|e: String| row_err(row, e))?,
            None => default_kind.ok_or_else(|| row_err(row, "no kind given"))?,
        };
        let (lat, lon) = match (opt_field(&rec, Some(c_lat)), opt_field(&rec, Some(c_lon))) {
            (Some(la), Some(lo)) => (la, lo),
            _ => {
                skipped.rows.push((row, id));
                continue;
            }
        };
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| row_err(row, format!("bad {what} `{s}`")))
        };
        let geo = GeoPoint::new(num(lat, "lat")?, num(lon, "lon")?)
            .map_err(|e| row_err(row, e.to_string()))?;
        let weight = match opt_field(&rec, c_weight) {
            Some(w) => num(w, "weight")?,
            None => 1.0,
        };
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(row_err(row, format!("weight {weight} must be non-negative")));
        }
        let attrs: BTreeMap<String, Value> = match opt_field(&rec, c_attrs) {
            Some(js) => serde_json::from_str(js).map_err(|e| row_err(row, format!("attrs_json: {e}")))?,
            None => BTreeMap::new(),
        };
        if let Some(az) = attrs.get("az_count") {
            if az.as_u64().is_none_or(|n| n < 1) {
                return Err(row_err(row, "az_count must be an integer >= 1"));
            }
        }
        if !ids.insert(id.clone()) {
            return Err(IngestError::DuplicateId(id));
        }
        out.push(InfraComponent {
            id,
            kind,
            geo,
            zone: None,
            weight,
            attrs,
        });
    }
    if !skipped.rows.is_empty() {
        log::warn!("{} component rows without coordinates skipped", skipped.rows.len());
    }
    Ok((out, skipped))
}

/// Canonical CSV form of components; `parse_components` reproduces them.
pub fn write_components_csv<W: Write>(w: W, components: &[InfraComponent]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| IngestError::Io(e.into());
    wtr.write_record(["id", "kind", "lat", "lon", "weight", "attrs_json"])
        .map_err(io)?;
    for c in components {
        let attrs = if c.attrs.is_empty() {
            String::new()
        } else {
            serde_json::to_string(&c.attrs).expect("json values serialize")
        };
        wtr.write_record([
            c.id.as_str(),
            c.kind.as_str(),
            &c.geo.lat().to_string(),
            &c.geo.lon().to_string(),
            &c.weight.to_string(),
            &attrs,
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses `code,population,internet_users,penetration,area_km2`.
pub fn parse_stats<R: Read>(doc: R) -> Result<Vec<AdminStatRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(doc);
    let headers = rdr
        .headers()
        .map_err(|e| row_err(0, e.to_string()))?
        .clone();
    let need = |n: &str| column(&headers, n).ok_or_else(|| row_err(0, format!("missing column `{n}`")));
    let cols = [
        need("code")?,
        need("population")?,
        need("internet_users")?,
        need("penetration")?,
        need("area_km2")?,
    ];
    let mut out = Vec::new();
    let mut codes = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| row_err(row, e.to_string()))?;
        let f = |k: usize| opt_field(&rec, Some(cols[k]));
        let code = f(0).ok_or_else(|| row_err(row, "empty code"))?.to_string();
        let int = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| row_err(row, format!("{what} `{s}` is not a non-negative integer")))
        };
        let population = int(f(1).ok_or_else(|| row_err(row, "empty population"))?, "population")?;
        let internet_users = f(2).map(|s| int(s, "internet_users")).transpose()?;
        let penetration = f(3)
            .map(|s| s.parse::<f64>().map_err(|_| row_err(row, format!("bad penetration `{s}`"))))
            .transpose()?;
        let area_km2 = match f(4) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| row_err(row, format!("bad area_km2 `{s}`")))?,
            None => 0.0,
        };
        if let Some(p) = penetration {
            if !(0.0..=1.0).contains(&p) {
                return Err(row_err(row, format!("penetration {p} outside [0, 1]")));
            }
        }
        if internet_users.is_none() && penetration.is_none() && !code.contains('-') {
            return Err(row_err(row, "country record needs internet_users or penetration"));
        }
        if internet_users.is_some_and(|u| u > population) {
            return Err(row_err(row, "internet_users exceeds population"));
        }
        if !(area_km2 >= 0.0) {
            return Err(row_err(row, "negative area_km2"));
        }
        if !codes.insert(code.clone()) {
            return Err(IngestError::DuplicateId(code));
        }
        out.push(AdminStatRecord {
            code,
            population,
            internet_users,
            penetration,
            area_km2,
        });
    }
    Ok(out)
}
