//! Command-line front end. Every command writes one report (JSON unless
//! `--format` says otherwise) to `--out` or stdout. Failures print a single
//! `error: <kind>: <message>` line on stderr.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::connectivity::{build_graph, flow_reduction, gomory_hu, WasgGraph};
use crate::failure::{resolve_scenario, unavailability, FailureInputs, FailureScenario, ScenarioMode, UserTotals};
use crate::grid_model::{aggregate_stats, load_registry, StatsAggregation, StatsMode, WasgRegistry};
use crate::ingest::{parse_components, parse_stats, parse_topology, ComponentKind, InfraComponent, IpLink, Topology, TopologyOptions};
use crate::overlap::{
    categorize_links, distribution_report, resolve_components, resolve_nodes, sample_polygon_overlaps, OVERLAP_WARN_FRACTION,
};
use crate::placement::{self, build_ilp, solve_problem, PlacementError, PlacementProblem, PlacementSolution};

#[derive(Debug, Parser)]
#[command(name = "gridzone", version, about = "Power-grid failure zones for Internet infrastructure")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load every given dataset and report invariant violations.
    /// Exit 0 clean, 1 warnings, 2 violations.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Points sampled per bounding-box intersection by the overlap check.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Distribution of infrastructure and users across WASGs.
    Overlap {
        #[command(flatten)]
        common: Common,
        /// Ranking to query, e.g. `ixp`, `infrastructure`, `internet_users`.
        #[arg(long, requires = "cumulative")]
        metric: Option<String>,
        /// Report the fewest WASGs holding at least this share of `--metric`.
        #[arg(long, requires = "metric")]
        cumulative: Option<f64>,
    },
    /// Unavailable share of each metric under failure scenarios.
    Failure {
        #[command(flatten)]
        common: Common,
    },
    /// Reduction in pairwise max-flow between surviving WASGs.
    Connectivity {
        #[command(flatten)]
        common: Common,
        /// Edge list `u,v,capacity` used instead of building from links.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        graph_out: Option<PathBuf>,
        /// Gomory-Hu tree of the intact graph, as an edge list.
        #[arg(long)]
        tree_out: Option<PathBuf>,
    },
    /// Grid-aware site selection.
    Place {
        #[command(flatten)]
        common: Common,
        /// Write the 0-1 model in LP format.
        #[arg(long)]
        dump_model: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Geojson,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub wasg: Option<PathBuf>,
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// `<kind>=<path>`, or a bare path whose rows carry their own kind.
    #[arg(long = "components", value_name = "KIND=PATH")]
    pub components: Vec<String>,
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub geo: Option<PathBuf>,
    #[arg(long)]
    pub links: Option<PathBuf>,
    /// A scenario object or an array of them.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Reject dangling links and missing statistics; warnings fail validation.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Placement search budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub time_limit: f64,
}

/// A failed command: short machine-readable kind plus a message.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            exit_code: 2,
        }
    }
}

trait Kind<T> {
    fn kind(self, kind: &'static str, path: &Path) -> Result<T, Failure>;
}

impl<T, E: std::fmt::Display> Kind<T> for Result<T, E> {
    fn kind(self, kind: &'static str, path: &Path) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(kind, format!("{}: {e}", path.display())))
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::new("usage", msg)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).kind("io", path)
}

fn open(path: &Path) -> Result<BufReader<fs::File>, Failure> {
    fs::File::open(path).map(BufReader::new).kind("io", path)
}

/// Parses arguments and runs one command, returning the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return 2;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}: {}", f.kind, f.message.replace('\n', " "));
            f.exit_code
        }
    }
}

pub fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Validate { common, samples } => validate(&common, samples),
        Command::Overlap {
            common,
            metric,
            cumulative,
        } => overlap(&common, metric.as_deref(), cumulative),
        Command::Failure { common } => failure(&common),
        Command::Connectivity {
            common,
            graph,
            graph_out,
            tree_out,
        } => connectivity(&common, graph.as_deref(), graph_out.as_deref(), tree_out.as_deref()),
        Command::Place { common, dump_model } => place(&common, dump_model.as_deref()),
    }
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(p) => fs::write(p, text).kind("io", p),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::new("io", format!("stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn no_format(cmd: &str, f: Format) -> Failure {
    usage(format!("{cmd} does not support --format {f:?}").to_lowercase())
}

fn load_wasg(common: &Common) -> Result<Option<WasgRegistry>, Failure> {
    common
        .wasg
        .as_deref()
        .map(|p| load_registry(&read(p)?).kind("grid", p))
        .transpose()
}

fn need_wasg(common: &Common, cmd: &str) -> Result<WasgRegistry, Failure> {
    load_wasg(common)?.ok_or_else(|| usage(format!("{cmd} needs --wasg")))
}

fn stats_mode(common: &Common) -> StatsMode {
    if common.strict {
        StatsMode::Strict
    } else {
        StatsMode::Lenient
    }
}

fn load_stats(common: &Common, registry: &WasgRegistry) -> Result<Option<StatsAggregation>, Failure> {
    let Some(p) = common.stats.as_deref() else {
        return Ok(None);
    };
    let records = parse_stats(open(p)?).kind("ingest", p)?;
    let agg = aggregate_stats(registry, &records, stats_mode(common)).kind("grid", p)?;
    if !agg.missing.is_empty() {
        log::warn!("no statistics for {} member codes", agg.missing.len());
    }
    Ok(Some(agg))
}

fn component_spec(spec: &str) -> Result<(Option<ComponentKind>, PathBuf), Failure> {
    if let Some((k, path)) = spec.split_once('=') {
        if let Ok(kind) = k.parse::<ComponentKind>() {
            return Ok((Some(kind), PathBuf::from(path)));
        }
        if !Path::new(spec).exists() {
            return Err(usage(format!("--components {spec}: unknown kind `{k}`")));
        }
    }
    Ok((None, PathBuf::from(spec)))
}

fn load_components(common: &Common) -> Result<Vec<InfraComponent>, Failure> {
    let mut all = Vec::new();
    let mut seen = BTreeSet::new();
    for spec in &common.components {
        let (kind, path) = component_spec(spec)?;
        let (comps, skipped) = parse_components(open(&path)?, kind).kind("ingest", &path)?;
        if !skipped.rows.is_empty() {
            log::warn!("{}: {} rows without coordinates skipped", path.display(), skipped.rows.len());
        }
        for c in comps {
            if !seen.insert(c.id.clone()) {
                return Err(Failure::new("ingest", format!("{}: duplicate id `{}`", path.display(), c.id)));
            }
            all.push(c);
        }
    }
    Ok(all)
}

fn load_topology(common: &Common) -> Result<Option<Topology>, Failure> {
    let (nodes, links) = match (&common.nodes, &common.links) {
        (None, None) => {
            if common.geo.is_some() {
                return Err(usage("--geo needs --nodes and --links"));
            }
            return Ok(None);
        }
        (Some(n), Some(l)) => (n, l),
        _ => return Err(usage("--nodes and --links go together")),
    };
    let geo = common.geo.as_deref().map(open).transpose()?;
    let opts = TopologyOptions {
        strict: common.strict,
        ..Default::default()
    };
    let topo = parse_topology(open(nodes)?, geo, open(links)?, opts).kind("ingest", nodes)?;
    Ok(Some(topo))
}

/// Topology links annotated with WASG endpoints, plus per-router zones.
fn zoned_links(topo: &Topology, registry: &WasgRegistry) -> Result<(Vec<IpLink>, Vec<Option<String>>), Failure> {
    let zones = resolve_nodes(&topo.nodes, registry);
    let (links, _) = categorize_links(&topo.links, &zones).map_err(|e| Failure::new("overlap", e.to_string()))?;
    let per_router = topo.nodes.iter().map(|n| zones[&n.node_id].clone()).collect();
    Ok((links, per_router))
}

fn load_scenarios(path: &Path) -> Result<(Vec<FailureScenario>, bool), Failure> {
    let doc = read(path)?;
    let v: Value = serde_json::from_str(&doc).kind("failure", path)?;
    let (items, many) = match v {
        Value::Array(items) => (items, true),
        other => (vec![other], false),
    };
    let scenarios = items
        .into_iter()
        .map(|item| FailureScenario::from_json(&item.to_string()).kind("failure", path))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((scenarios, many))
}

fn need_scenarios(common: &Common, cmd: &str) -> Result<(Vec<FailureScenario>, bool), Failure> {
    let p = common
        .scenario
        .as_deref()
        .ok_or_else(|| usage(format!("{cmd} needs --scenario")))?;
    load_scenarios(p)
}

#[derive(Debug, Serialize)]
struct Finding {
    severity: &'static str,
    source: String,
    message: String,
}

#[derive(Debug, Default, Serialize)]
struct ValidationReport {
    status: &'static str,
    findings: Vec<Finding>,
    polygon_overlaps: Vec<crate::overlap::PolygonOverlap>,
}

fn validate(common: &Common, samples: usize) -> Result<i32, Failure> {
    if common.format != Format::Json {
        return Err(no_format("validate", common.format));
    }
    let mut rep = ValidationReport::default();
    let mut note = |severity: &'static str, source: &Path, message: String| {
        rep.findings.push(Finding {
            severity,
            source: source.display().to_string(),
            message,
        });
    };

    let mut registry = None;
    if let Some(p) = common.wasg.as_deref() {
        match load_registry(&read(p)?) {
            Ok(r) => registry = Some(r),
            Err(e) => note("violation", p, e.to_string()),
        }
    }
    let mut overlaps = Vec::new();
    if let (Some(r), Some(p)) = (&registry, common.wasg.as_deref()) {
        overlaps = sample_polygon_overlaps(r, samples, common.seed);
        for o in overlaps.iter().filter(|o| o.fraction > OVERLAP_WARN_FRACTION) {
            note(
                "warning",
                p,
                format!("regions `{}` and `{}` overlap ({:.4} of the smaller)", o.a, o.b, o.fraction),
            );
        }
    }
    if let Some(p) = common.stats.as_deref() {
        match parse_stats(open(p)?) {
            Err(e) => note("violation", p, e.to_string()),
            Ok(records) => {
                if let Some(r) = &registry {
                    match aggregate_stats(r, &records, stats_mode(common)) {
                        Err(e) => note("violation", p, e.to_string()),
                        Ok(agg) if !agg.missing.is_empty() => {
                            note("warning", p, format!("no statistics for {}", agg.missing.join(", ")))
                        }
                        Ok(_) => {}
                    }
                }
            }
        }
    }
    let mut ids = BTreeSet::new();
    for spec in &common.components {
        let (kind, path) = component_spec(spec)?;
        match parse_components(open(&path)?, kind) {
            Err(e) => note("violation", &path, e.to_string()),
            Ok((comps, skipped)) => {
                for c in comps {
                    if !ids.insert(c.id.clone()) {
                        note("violation", &path, format!("duplicate id `{}`", c.id));
                    }
                }
                for (row, id) in skipped.rows {
                    note("warning", &path, format!("row {row} (`{id}`) has no coordinates"));
                }
            }
        }
    }
    match load_topology(common) {
        Err(f) if f.kind == "ingest" => note("violation", common.nodes.as_deref().unwrap_or(Path::new("-")), f.message),
        Err(f) => return Err(f),
        Ok(Some(t)) if t.report.links_dangling > 0 => note(
            "warning",
            common.links.as_deref().unwrap_or(Path::new("-")),
            format!("{} links name unknown nodes", t.report.links_dangling),
        ),
        Ok(_) => {}
    }
    if let Some(p) = common.scenario.as_deref() {
        match load_scenarios(p) {
            Err(f) => note("violation", p, f.message),
            Ok((scenarios, _)) => {
                if let Some(r) = &registry {
                    for s in &scenarios {
                        if let Err(e) = resolve_scenario(s, r) {
                            note("violation", p, format!("scenario `{}`: {e}", s.name));
                        }
                    }
                }
            }
        }
    }
    if let Some(p) = common.problem.as_deref() {
        if let Err(e) = PlacementProblem::from_json(&read(p)?).and_then(|pr| placement::precheck(&pr)) {
            note("violation", p, e.to_string());
        }
    }

    rep.polygon_overlaps = overlaps;
    let violations = rep.findings.iter().any(|f| f.severity == "violation");
    let warnings = rep.findings.iter().any(|f| f.severity == "warning");
    let code = if violations || (warnings && common.strict) {
        2
    } else if warnings {
        1
    } else {
        0
    };
    rep.status = ["clean", "warnings", "violations"][code as usize];
    for f in &rep.findings {
        log::warn!("{} {}: {}", f.severity, f.source, f.message);
    }
    emit(common, &to_json(&rep))?;
    Ok(code)
}

fn overlap(common: &Common, metric: Option<&str>, cumulative: Option<f64>) -> Result<i32, Failure> {
    let registry = need_wasg(common, "overlap")?;
    let stats = load_stats(common, &registry)?;
    let components = resolve_components(&load_components(common)?, &registry);
    let links = match load_topology(common)? {
        Some(t) => zoned_links(&t, &registry)?.0,
        None => Vec::new(),
    };
    let report = distribution_report(&components, &links, &registry, stats.as_ref());

    if let (Some(metric), Some(f)) = (metric, cumulative) {
        if !(0.0..=1.0).contains(&f) {
            return Err(usage(format!("--cumulative {f} outside [0, 1]")));
        }
        // plural kind names (`ixps`, `dns_roots`) match the failure metrics
        let ranking = report.rankings.get(metric).or_else(|| report.rankings.get(metric.strip_suffix('s')?));
        let ranking = ranking.ok_or_else(|| {
            let known: Vec<&str> = report.rankings.keys().map(String::as_str).collect();
            usage(format!("unknown metric `{metric}` (have {})", known.join(", ")))
        })?;
        let k = ranking.smallest_k(f);
        let top: Vec<&str> = ranking
            .entries
            .iter()
            .take(k.unwrap_or(0))
            .map(|e| e.wasg.as_str())
            .collect();
        let out = json!({"metric": metric, "cumulative": f, "smallest_k": k, "wasgs": top});
        emit(common, &to_json(&out))?;
        return Ok(0);
    }

    let text = match common.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let kinds: Vec<ComponentKind> = report.totals.keys().copied().collect();
            let mut header = vec!["wasg"];
            header.extend(kinds.iter().map(|k| k.as_str()));
            header.extend(["population", "internet_users", "area_km2"]);
            let rows = report
                .per_wasg
                .iter()
                .map(|(id, e)| {
                    let mut row = vec![id.clone()];
                    row.extend(kinds.iter().map(|k| e.counts.get(k).copied().unwrap_or(0).to_string()));
                    row.extend([e.population.to_string(), e.internet_users.to_string(), e.area_km2.to_string()]);
                    row
                })
                .collect();
            csv_text(&header, rows)
        }
        Format::Geojson => {
            let mut fc = registry.to_geojson();
            for f in fc["features"].as_array_mut().expect("feature array") {
                let id = f["properties"]["id"].as_str().expect("feature id").to_string();
                let e = &report.per_wasg[&id];
                f["properties"]["counts"] = serde_json::to_value(&e.counts).expect("counts serialize");
            }
            to_json(&fc)
        }
    };
    emit(common, &text)?;
    Ok(0)
}

fn failure(common: &Common) -> Result<i32, Failure> {
    let registry = need_wasg(common, "failure")?;
    let (scenarios, many) = need_scenarios(common, "failure")?;
    let stats = load_stats(common, &registry)?;
    let users = match &stats {
        Some(s) => UserTotals::from_stats(s),
        None => UserTotals::from_registry(&registry),
    };
    let components = resolve_components(&load_components(common)?, &registry);
    let (links, routers) = match load_topology(common)? {
        Some(t) => {
            let (l, r) = zoned_links(&t, &registry)?;
            (l, Some(r))
        }
        None => (Vec::new(), None),
    };
    let inputs = FailureInputs {
        components: &components,
        router_zones: routers.as_deref(),
        links: &links,
        users: &users,
    };
    let scenario_path = common.scenario.as_deref().expect("checked above");
    let mut reports = Vec::new();
    for s in &scenarios {
        let failed = resolve_scenario(s, &registry).kind("failure", scenario_path)?;
        reports.push(unavailability(&s.name, &failed, inputs));
    }

    let text = match common.format {
        Format::Json if many => to_json(&reports),
        Format::Json => to_json(&reports[0]),
        Format::Csv => {
            let mut rows = Vec::new();
            for r in &reports {
                for (m, d) in &r.details {
                    rows.push(vec![
                        r.scenario.clone(),
                        m.clone(),
                        d.unavailable.to_string(),
                        d.total.to_string(),
                        d.zoned.to_string(),
                        d.fraction.to_string(),
                        d.fraction_of_zoned.to_string(),
                    ]);
                }
            }
            csv_text(
                &["scenario", "metric", "unavailable", "total", "zoned", "fraction", "fraction_of_zoned"],
                rows,
            )
        }
        Format::Geojson => {
            let mut fc = registry.to_geojson();
            for f in fc["features"].as_array_mut().expect("feature array") {
                let id = f["properties"]["id"].as_str().expect("feature id").to_string();
                let hit: Vec<&str> = reports
                    .iter()
                    .filter(|r| r.failed_wasgs.contains(&id))
                    .map(|r| r.scenario.as_str())
                    .collect();
                f["properties"]["failed_in"] = json!(hit);
            }
            to_json(&fc)
        }
    };
    emit(common, &text)?;
    Ok(0)
}

fn connectivity(
    common: &Common,
    graph_path: Option<&Path>,
    graph_out: Option<&Path>,
    tree_out: Option<&Path>,
) -> Result<i32, Failure> {
    if common.format == Format::Geojson {
        return Err(no_format("connectivity", common.format));
    }
    let registry = load_wasg(common)?;
    let (scenarios, many) = need_scenarios(common, "connectivity")?;
    let scenario_path = common.scenario.as_deref().expect("checked above");

    let graph = match (graph_path, &registry) {
        (Some(p), _) => WasgGraph::read_csv(open(p)?).kind("connectivity", p)?,
        (None, Some(r)) => {
            let topo = load_topology(common)?.ok_or_else(|| usage("connectivity needs --graph or --nodes/--links"))?;
            let (links, _) = zoned_links(&topo, r)?;
            let pairs = crate::overlap::pair_counts(&links);
            build_graph(&pairs, r.ids())
        }
        (None, None) => return Err(usage("connectivity needs --graph or --wasg with --nodes/--links")),
    };
    if let Some(p) = graph_out {
        let f = fs::File::create(p).kind("io", p)?;
        graph.write_csv(f).kind("io", p)?;
    }
    if let Some(p) = tree_out {
        let f = fs::File::create(p).kind("io", p)?;
        gomory_hu(&graph).write_csv(f).kind("io", p)?;
    }

    let mut results = Vec::new();
    for s in &scenarios {
        let failed = match (&registry, &s.mode) {
            (Some(r), _) => resolve_scenario(s, r).kind("failure", scenario_path)?,
            (None, ScenarioMode::Regional { failed }) => failed.clone(),
            (None, ScenarioMode::LatitudeBand { .. }) => {
                return Err(usage(format!("scenario `{}` is a latitude band and needs --wasg", s.name)))
            }
        };
        results.push(flow_reduction(&graph, &s.name, &failed).kind("connectivity", scenario_path)?);
    }

    let text = match common.format {
        Format::Json if many => to_json(&results),
        Format::Json => to_json(&results[0]),
        Format::Csv => {
            let rows = results
                .iter()
                .flat_map(|r| {
                    r.pairs.iter().map(|p| {
                        vec![
                            r.scenario.clone(),
                            p.a.clone(),
                            p.b.clone(),
                            p.before.to_string(),
                            p.after.to_string(),
                            p.reduction.to_string(),
                        ]
                    })
                })
                .collect();
            csv_text(&["scenario", "a", "b", "before", "after", "reduction"], rows)
        }
        Format::Geojson => unreachable!("rejected above"),
    };
    emit(common, &text)?;
    Ok(0)
}

fn solution_text(common: &Common, problem: &PlacementProblem, sol: &PlacementSolution) -> String {
    match common.format {
        Format::Json => to_json(sol),
        Format::Csv => {
            let mut serves: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
            for (d, c) in &sol.assignment {
                serves.entry(c.as_str()).or_default().push(d.as_str());
            }
            let rows = problem
                .candidates
                .iter()
                .filter(|c| sol.chosen.contains(&c.id))
                .map(|c| {
                    vec![
                        c.id.clone(),
                        c.geo.lat().to_string(),
                        c.geo.lon().to_string(),
                        c.zone.clone().unwrap_or_default(),
                        serves.get(c.id.as_str()).map(|v| v.join(";")).unwrap_or_default(),
                    ]
                })
                .collect::<Vec<_>>();
            let mut rows = rows;
            rows.sort();
            csv_text(&["id", "lat", "lon", "zone", "serves"], rows)
        }
        Format::Geojson => {
            let mut cands: Vec<_> = problem.candidates.iter().filter(|c| sol.chosen.contains(&c.id)).collect();
            cands.sort_by(|a, b| a.id.cmp(&b.id));
            let mut features: Vec<Value> = cands
                .into_iter()
                .map(|c| {
                    json!({"type": "Feature",
                        "geometry": {"type": "Point", "coordinates": [c.geo.lon(), c.geo.lat()]},
                        "properties": {"role": "site", "id": c.id, "zone": c.zone}})
                })
                .collect();
            for d in &problem.demands {
                features.push(json!({"type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [d.geo.lon(), d.geo.lat()]},
                    "properties": {"role": "demand", "id": d.id, "weight": d.weight,
                                   "served_by": sol.assignment.get(&d.id)}}));
            }
            to_json(&json!({"type": "FeatureCollection", "features": features}))
        }
    }
}

fn place(common: &Common, dump_model: Option<&Path>) -> Result<i32, Failure> {
    let path = common.problem.as_deref().ok_or_else(|| usage("place needs --problem"))?;
    let problem = PlacementProblem::from_json(&read(path)?).kind("placement", path)?;
    if !(common.time_limit >= 0.0 && common.time_limit.is_finite()) {
        return Err(usage(format!("--time-limit {} must be a non-negative number", common.time_limit)));
    }
    let limit = Duration::from_secs_f64(common.time_limit);
    if let Some(p) = dump_model {
        let model = build_ilp(&problem).kind("placement", path)?;
        fs::write(p, model.to_lp()).kind("io", p)?;
    }
    match solve_problem(&problem, limit) {
        Ok(sol) => {
            if sol.proof == placement::Proof::Infeasible {
                log::warn!("{}: no selection satisfies every constraint", path.display());
            }
            emit(common, &solution_text(common, &problem, &sol))?;
            Ok(0)
        }
        Err(PlacementError::TimeLimitExceeded { incumbent, limit, nodes }) => {
            if let Some(sol) = &incumbent {
                emit(common, &solution_text(common, &problem, sol))?;
            }
            Err(Failure {
                kind: "time_limit",
                message: format!(
                    "{}: stopped after {limit:?} and {nodes} nodes; {}",
                    path.display(),
                    if incumbent.is_some() { "best selection so far written" } else { "no feasible selection found" }
                ),
                exit_code: 3,
            })
        }
        Err(e) => Err(Failure::new("placement", format!("{}: {e}", path.display()))),
    }
}
