//! Grid-aware placement: choose sites so that deployments survive the loss
//! of any one synchronous grid, subject to location, latency and cost
//! requirements.
//!
//! A [`PlacementProblem`] compiles into an [`IlpModel`], an explicit 0-1
//! program that can be dumped in LP form for inspection. The built-in
//! engine solves it exactly by depth-first branch-and-bound over the
//! selection variables; assignment and pair variables are derived from the
//! selection in closed form.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_km, latency_ms, GeoPoint};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("unsatisfiable: {0}")]
    UnsatisfiableStructure(String),
    #[error("time limit of {limit:?} reached after {nodes} nodes")]
    TimeLimitExceeded {
        limit: Duration,
        nodes: u64,
        /// Best feasible selection found, flagged [`Proof::Incumbent`].
        incumbent: Option<Box<PlacementSolution>>,
    },
    #[error("malformed problem document: {0}")]
    Malformed(String),
}

fn invalid(msg: impl Into<String>) -> PlacementError {
    PlacementError::InvalidProblem(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    #[serde(flatten)]
    pub geo: GeoPoint,
    /// Hosting WASG. Candidates without one are their own zone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    /// ISO 3166 code, used by `country_codes` location rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPoint {
    pub id: String,
    #[serde(flatten)]
    pub geo: GeoPoint,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    #[default]
    Exactly,
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectCount {
    #[serde(default)]
    pub mode: SelectMode,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hemisphere {
    North,
    South,
    East,
    West,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Bbox {
        min_lat: f64,
        min_lon: f64,
        max_lat: f64,
        max_lon: f64,
    },
    CountryCodes(BTreeSet<String>),
    /// The equator and prime meridian belong to both sides.
    Hemisphere(Hemisphere),
}

impl Predicate {
    pub fn matches(&self, c: &Candidate) -> bool {
        let (lat, lon) = (c.geo.lat(), c.geo.lon());
        match self {
            Predicate::Bbox {
                min_lat,
                min_lon,
                max_lat,
                max_lon,
            } => (*min_lat..=*max_lat).contains(&lat) && (*min_lon..=*max_lon).contains(&lon),
            Predicate::CountryCodes(codes) => c.country.as_ref().is_some_and(|cc| codes.contains(cc)),
            Predicate::Hemisphere(Hemisphere::North) => lat >= 0.0,
            Predicate::Hemisphere(Hemisphere::South) => lat <= 0.0,
            Predicate::Hemisphere(Hemisphere::East) => lon >= 0.0,
            Predicate::Hemisphere(Hemisphere::West) => lon <= 0.0,
        }
    }
}

/// At least `min_count` selected candidates must satisfy `predicate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRule {
    pub predicate: Predicate,
    pub min_count: usize,
}

/// Maximum one-way latency (ms), for every demand or per demand id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatencyBounds {
    Uniform(f64),
    PerDemand(BTreeMap<String, f64>),
}

impl LatencyBounds {
    fn bound_for(&self, demand: &str) -> Option<f64> {
        match self {
            LatencyBounds::Uniform(b) => Some(*b),
            LatencyBounds::PerDemand(m) => m.get(demand).copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum over selected sites and all demands of weight times latency.
    MinWeightedSumAll,
    /// Each demand is served by its nearest selected site.
    MinWeightedNearest,
    MinCost,
    /// Sum of great-circle distances between selected sites.
    MinPairwiseDistanceSum,
    MaxPairwiseDistanceSum,
}

impl Objective {
    pub fn is_pairwise(&self) -> bool {
        matches!(
            self,
            Objective::MinPairwiseDistanceSum | Objective::MaxPairwiseDistanceSum
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::MinWeightedSumAll => "min_weighted_sum_all",
            Objective::MinWeightedNearest => "min_weighted_nearest",
            Objective::MinCost => "min_cost",
            Objective::MinPairwiseDistanceSum => "min_pairwise_distance_sum",
            Objective::MaxPairwiseDistanceSum => "max_pairwise_distance_sum",
        }
    }
}

fn default_zone_cap() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub demands: Vec<DemandPoint>,
    pub select_count: SelectCount,
    /// At most this many selected sites per WASG.
    #[serde(default = "default_zone_cap")]
    pub zone_cap: usize,
    #[serde(default)]
    pub location_rules: Vec<LocationRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_bounds: Option<LatencyBounds>,
    pub objective: Objective,
    /// Measured one-way latencies, `[demand][candidate]` in input order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_override: Option<Vec<Vec<f64>>>,
}

impl PlacementProblem {
    pub fn from_json(doc: &str) -> Result<Self, PlacementError> {
        serde_json::from_str(doc).map_err(|e| PlacementError::Malformed(e.to_string()))
    }

    /// Checks the problem's own invariants (not satisfiability).
    pub fn validate(&self) -> Result<(), PlacementError> {
        let mut ids = BTreeSet::new();
        for c in &self.candidates {
            if !ids.insert(c.id.as_str()) {
                return Err(invalid(format!("duplicate candidate id `{}`", c.id)));
            }
            if let Some(cost) = c.cost {
                if !(cost >= 0.0 && cost.is_finite()) {
                    return Err(invalid(format!("candidate `{}` has cost {cost}", c.id)));
                }
            }
        }
        let mut dids = BTreeSet::new();
        for d in &self.demands {
            if !dids.insert(d.id.as_str()) {
                return Err(invalid(format!("duplicate demand id `{}`", d.id)));
            }
            if !(d.weight >= 0.0 && d.weight.is_finite()) {
                return Err(invalid(format!("demand `{}` has weight {}", d.id, d.weight)));
            }
        }
        let n = self.select_count.n;
        if n == 0 {
            return Err(invalid("select_count.n must be positive"));
        }
        if n > self.candidates.len() {
            return Err(invalid(format!(
                "select_count.n = {n} exceeds {} candidates",
                self.candidates.len()
            )));
        }
        if self.zone_cap == 0 {
            return Err(invalid("zone_cap must be positive"));
        }
        if self.objective == Objective::MinCost {
            if let Some(c) = self.candidates.iter().find(|c| c.cost.is_none()) {
                return Err(invalid(format!("min_cost needs a cost on candidate `{}`", c.id)));
            }
        }
        if self.objective.is_pairwise() && n < 2 {
            return Err(invalid("pairwise objectives need select_count.n >= 2"));
        }
        for (r, rule) in self.location_rules.iter().enumerate() {
            if let Predicate::Bbox {
                min_lat,
                min_lon,
                max_lat,
                max_lon,
            } = rule.predicate
            {
                if !(min_lat <= max_lat && min_lon <= max_lon) {
                    return Err(invalid(format!("location rule {r}: empty bbox")));
                }
            }
        }
        match &self.latency_bounds {
            Some(LatencyBounds::Uniform(b)) if !(*b >= 0.0) => {
                return Err(invalid(format!("latency bound {b} must be non-negative")));
            }
            Some(LatencyBounds::PerDemand(m)) => {
                for (k, b) in m {
                    if !dids.contains(k.as_str()) {
                        return Err(invalid(format!("latency bound for unknown demand `{k}`")));
                    }
                    if !(*b >= 0.0) {
                        return Err(invalid(format!("latency bound {b} for `{k}` must be non-negative")));
                    }
                }
            }
            _ => {}
        }
        if let Some(m) = &self.latency_override {
            if m.len() != self.demands.len() || m.iter().any(|row| row.len() != self.candidates.len()) {
                return Err(invalid("latency_override must be demands x candidates"));
            }
            if m.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(invalid("latency_override entries must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// One-way latency in ms from demand `j` to candidate `i` (input order).
    pub fn latency(&self, j: usize, i: usize) -> f64 {
        match &self.latency_override {
            Some(m) => m[j][i],
            None => latency_ms(self.demands[j].geo, self.candidates[i].geo),
        }
    }
}

/// Which rule produced a constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", content = "about", rename_all = "snake_case")]
pub enum Provenance {
    Cardinality,
    ZoneCap(String),
    Location(usize),
    LatencyBound(String),
    Assignment(String),
    AssignmentLink(String),
    PairLink,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Cardinality => write!(f, "cardinality"),
            Provenance::ZoneCap(z) => write!(f, "zone_cap {z}"),
            Provenance::Location(r) => write!(f, "location rule {r}"),
            Provenance::LatencyBound(d) => write!(f, "latency_bound {d}"),
            Provenance::Assignment(d) => write!(f, "assignment {d}"),
            Provenance::AssignmentLink(d) => write!(f, "assignment_link {d}"),
            Provenance::PairLink => write!(f, "pair_link"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn symbol(&self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub name: String,
    /// `(variable index, coefficient)`
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub provenance: Provenance,
}

impl Constraint {
    fn holds(&self, values: &[f64]) -> bool {
        let lhs: f64 = self.terms.iter().map(|&(v, c)| c * values[v]).sum();
        let tol = 1e-9 * (1.0 + self.rhs.abs());
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
            Sense::Ge => lhs >= self.rhs - tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearObjective {
    pub maximize: bool,
    pub terms: Vec<(usize, f64)>,
}

/// Search-ready form of a problem. Candidates are in id order.
#[derive(Debug, Clone, PartialEq)]
struct Instance {
    ids: Vec<String>,
    /// Input index of each search-order candidate.
    input_index: Vec<usize>,
    demand_ids: Vec<String>,
    zone: Vec<usize>,
    zone_names: Vec<String>,
    cap: usize,
    n_min: usize,
    n_max: usize,
    /// Not excluded by a global latency bound.
    allowed: Vec<bool>,
    rules: Vec<(Vec<bool>, usize)>,
    objective: Objective,
    /// Per-candidate cost for separable objectives.
    unit_cost: Vec<f64>,
    weight: Vec<f64>,
    /// `[demand][candidate]`, search order.
    latency: Vec<Vec<f64>>,
    /// Demand may be served by candidate.
    assignable: Vec<Vec<bool>>,
    /// Pairwise great-circle km, search order.
    dist: Vec<Vec<f64>>,
}

impl Instance {
    fn m(&self) -> usize {
        self.ids.len()
    }

    /// Objective of a selection, summed in a fixed order. `None` when a
    /// demand has no admissible selected site.
    fn evaluate(&self, chosen: &[usize]) -> Option<f64> {
        match self.objective {
            Objective::MinWeightedSumAll | Objective::MinCost => Some(chosen.iter().map(|&i| self.unit_cost[i]).sum()),
            Objective::MinWeightedNearest => {
                let mut total = 0.0;
                for j in 0..self.weight.len() {
                    let best = self.nearest(j, chosen)?;
                    total += self.weight[j] * self.latency[j][best];
                }
                Some(total)
            }
            Objective::MinPairwiseDistanceSum | Objective::MaxPairwiseDistanceSum => {
                let mut total = 0.0;
                for (x, &a) in chosen.iter().enumerate() {
                    for &b in &chosen[x + 1..] {
                        total += self.dist[a][b];
                    }
                }
                Some(total)
            }
        }
    }

    /// Cheapest admissible selected site for demand `j`, ties by id.
    fn nearest(&self, j: usize, chosen: &[usize]) -> Option<usize> {
        chosen
            .iter()
            .copied()
            .filter(|&i| self.assignable[j][i])
            .min_by(|&a, &b| self.latency[j][a].total_cmp(&self.latency[j][b]).then(a.cmp(&b)))
    }

    /// Internal minimization key.
    fn key(&self, value: f64) -> f64 {
        if self.objective == Objective::MaxPairwiseDistanceSum {
            -value
        } else {
            value
        }
    }
}

fn compile(problem: &PlacementProblem) -> Result<Instance, PlacementError> {
    problem.validate()?;
    let mut order: Vec<usize> = (0..problem.candidates.len()).collect();
    order.sort_by(|&a, &b| problem.candidates[a].id.cmp(&problem.candidates[b].id));
    let cands: Vec<&Candidate> = order.iter().map(|&i| &problem.candidates[i]).collect();
    let m = cands.len();

    let mut zone_names: Vec<String> = Vec::new();
    let mut zone_ix: HashMap<String, usize> = HashMap::new();
    let zone: Vec<usize> = cands
        .iter()
        .map(|c| {
            let key = match &c.zone {
                Some(z) => z.clone(),
                // cannot collide with a real WASG id used as a map key below
                None => format!("\u{0}unzoned:{}", c.id),
            };
            *zone_ix.entry(key.clone()).or_insert_with(|| {
                zone_names.push(c.zone.clone().unwrap_or_else(|| format!("(unzoned {})", c.id)));
                zone_names.len() - 1
            })
        })
        .collect();

    let (n_min, n_max) = match problem.select_count.mode {
        SelectMode::Exactly => (problem.select_count.n, problem.select_count.n),
        SelectMode::AtMost => (0, problem.select_count.n),
    };

    let mut zone_sizes = vec![0usize; zone_names.len()];
    for &z in &zone {
        zone_sizes[z] += 1;
    }
    let reachable: usize = zone_sizes.iter().map(|&s| s.min(problem.zone_cap)).sum();
    if reachable < n_min {
        return Err(PlacementError::UnsatisfiableStructure(format!(
            "{} zones with cap {} admit at most {reachable} selections, {n_min} required",
            zone_names.len(),
            problem.zone_cap
        )));
    }

    let mut rules = Vec::new();
    for (r, rule) in problem.location_rules.iter().enumerate() {
        let hits: Vec<bool> = cands.iter().map(|c| rule.predicate.matches(c)).collect();
        let mut per_zone = vec![0usize; zone_names.len()];
        for i in (0..m).filter(|&i| hits[i]) {
            per_zone[zone[i]] += 1;
        }
        let most = per_zone.iter().map(|&s| s.min(problem.zone_cap)).sum::<usize>().min(n_max);
        if most < rule.min_count {
            return Err(PlacementError::UnsatisfiableStructure(format!(
                "location rule {r} needs {} sites but at most {most} can match",
                rule.min_count
            )));
        }
        rules.push((hits, rule.min_count));
    }

    let demand_ids: Vec<String> = problem.demands.iter().map(|d| d.id.clone()).collect();
    let weight: Vec<f64> = problem.demands.iter().map(|d| d.weight).collect();
    let latency: Vec<Vec<f64>> = (0..problem.demands.len())
        .map(|j| order.iter().map(|&i| problem.latency(j, i)).collect())
        .collect();
    let bound = |j: usize| {
        problem
            .latency_bounds
            .as_ref()
            .and_then(|b| b.bound_for(&problem.demands[j].id))
    };
    let within = |j: usize, i: usize| bound(j).is_none_or(|b| latency[j][i] <= b);

    let nearest = problem.objective == Objective::MinWeightedNearest;
    let allowed: Vec<bool> = (0..m)
        .map(|i| nearest || (0..latency.len()).all(|j| within(j, i)))
        .collect();
    let assignable: Vec<Vec<bool>> = (0..latency.len())
        .map(|j| (0..m).map(|i| !nearest || within(j, i)).collect())
        .collect();

    let unit_cost: Vec<f64> = match problem.objective {
        Objective::MinWeightedSumAll => (0..m)
            .map(|i| (0..weight.len()).map(|j| weight[j] * latency[j][i]).sum())
            .collect(),
        Objective::MinCost => cands.iter().map(|c| c.cost.unwrap_or(0.0)).collect(),
        _ => vec![0.0; m],
    };
    let dist = if problem.objective.is_pairwise() {
        (0..m)
            .map(|a| (0..m).map(|b| haversine_km(cands[a].geo, cands[b].geo)).collect())
            .collect()
    } else {
        Vec::new()
    };

    Ok(Instance {
        ids: cands.iter().map(|c| c.id.clone()).collect(),
        input_index: order,
        demand_ids,
        zone,
        zone_names,
        cap: problem.zone_cap,
        n_min,
        n_max,
        allowed,
        rules,
        objective: problem.objective,
        unit_cost,
        weight,
        latency,
        assignable,
        dist,
    })
}

/// Explicit 0-1 program for a placement problem.
///
/// Variables: `x{i}` selects candidate `i` (id order); `y{j}_{i}` assigns
/// demand `j` to candidate `i` (nearest objective); `z{a}_{b}` marks both
/// `a` and `b` selected (pairwise objectives).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IlpModel {
    pub objective_kind: Objective,
    /// Candidate ids in variable order.
    pub candidates: Vec<String>,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: LinearObjective,
    #[serde(skip)]
    instance: Instance,
    #[serde(skip)]
    y_index: Vec<Vec<usize>>,
    #[serde(skip)]
    z_index: BTreeMap<(usize, usize), usize>,
}

impl IlpModel {
    pub fn count_by(&self, pred: impl Fn(&Provenance) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(&c.provenance)).count()
    }

    /// Variable values implied by a selection of candidate ids.
    pub fn values_for(&self, chosen: &BTreeSet<String>) -> Vec<f64> {
        let inst = &self.instance;
        let sel: Vec<usize> = (0..inst.m()).filter(|&i| chosen.contains(&inst.ids[i])).collect();
        let mut v = vec![0.0; self.variables.len()];
        for &i in &sel {
            v[i] = 1.0;
        }
        for (j, row) in self.y_index.iter().enumerate() {
            if let Some(best) = inst.nearest(j, &sel) {
                v[row[best]] = 1.0;
            }
        }
        for (&(a, b), &zi) in &self.z_index {
            if sel.contains(&a) && sel.contains(&b) {
                v[zi] = 1.0;
            }
        }
        v
    }

    /// Names of constraints violated by `values`.
    pub fn violations(&self, values: &[f64]) -> Vec<&str> {
        self.constraints
            .iter()
            .filter(|c| !c.holds(values))
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// LP-format text with provenance comments.
    pub fn to_lp(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ placement model, objective {}", self.objective_kind.as_str());
        for (i, id) in self.candidates.iter().enumerate() {
            let _ = writeln!(s, "\\ x{i} = {id} (zone {})", self.instance.zone_names[self.instance.zone[i]]);
        }
        for (j, id) in self.instance.demand_ids.iter().enumerate() {
            let _ = writeln!(s, "\\ demand {j} = {id}");
        }
        let expr = |terms: &[(usize, f64)]| -> String {
            if terms.is_empty() {
                return "0".into();
            }
            let mut e = String::new();
            for (k, &(v, c)) in terms.iter().enumerate() {
                let name = &self.variables[v].name;
                let sign = if c < 0.0 { "-" } else if k > 0 { "+" } else { "" };
                let mag = c.abs();
                if k > 0 {
                    e.push(' ');
                }
                if mag == 1.0 {
                    let _ = write!(e, "{sign}{}{name}", if sign.is_empty() { "" } else { " " });
                } else {
                    let _ = write!(e, "{sign}{}{mag} {name}", if sign.is_empty() { "" } else { " " });
                }
            }
            e
        };
        let _ = writeln!(s, "{}", if self.objective.maximize { "Maximize" } else { "Minimize" });
        let _ = writeln!(s, " obj: {}", expr(&self.objective.terms));
        let _ = writeln!(s, "Subject To");
        for c in &self.constraints {
            let _ = writeln!(
                s,
                " {}: {} {} {} \\ {}",
                c.name,
                expr(&c.terms),
                c.sense.symbol(),
                c.rhs,
                c.provenance
            );
        }
        let cont: Vec<&Variable> = self.variables.iter().filter(|v| v.kind == VarKind::Continuous).collect();
        if !cont.is_empty() {
            let _ = writeln!(s, "Bounds");
            for v in cont {
                let _ = writeln!(s, " {} <= {} <= {}", v.lower, v.name, v.upper);
            }
        }
        let _ = writeln!(s, "Binaries");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Binary) {
            let _ = writeln!(s, " {}", v.name);
        }
        let _ = writeln!(s, "End");
        s
    }
}

/// Validation plus the structural satisfiability checks, without building
/// the model.
pub fn precheck(problem: &PlacementProblem) -> Result<(), PlacementError> {
    compile(problem).map(|_| ())
}

/// Generates the 0-1 program for `problem`.
pub fn build_ilp(problem: &PlacementProblem) -> Result<IlpModel, PlacementError> {
    let inst = compile(problem)?;
    let m = inst.m();
    let mut variables: Vec<Variable> = (0..m)
        .map(|i| Variable {
            name: format!("x{i}"),
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
        })
        .collect();
    let mut constraints: Vec<Constraint> = Vec::new();
    let mut push = |terms: Vec<(usize, f64)>, sense: Sense, rhs: f64, provenance: Provenance| {
        let name = format!("c{}", constraints.len());
        constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
            provenance,
        });
    };

    let all: Vec<(usize, f64)> = (0..m).map(|i| (i, 1.0)).collect();
    let sense = if inst.n_min == inst.n_max { Sense::Eq } else { Sense::Le };
    push(all, sense, inst.n_max as f64, Provenance::Cardinality);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); inst.zone_names.len()];
    for i in 0..m {
        members[inst.zone[i]].push(i);
    }
    for (z, ms) in members.iter().enumerate() {
        if ms.len() <= inst.cap {
            continue;
        }
        let zname = inst.zone_names[z].clone();
        if inst.cap == 1 {
            for (x, &a) in ms.iter().enumerate() {
                for &b in &ms[x + 1..] {
                    push(vec![(a, 1.0), (b, 1.0)], Sense::Le, 1.0, Provenance::ZoneCap(zname.clone()));
                }
            }
        } else {
            let terms = ms.iter().map(|&i| (i, 1.0)).collect();
            push(terms, Sense::Le, inst.cap as f64, Provenance::ZoneCap(zname));
        }
    }

    for (r, (hits, min)) in inst.rules.iter().enumerate() {
        let terms = (0..m).filter(|&i| hits[i]).map(|i| (i, 1.0)).collect();
        push(terms, Sense::Ge, *min as f64, Provenance::Location(r));
    }

    for i in (0..m).filter(|&i| !inst.allowed[i]) {
        let j = (0..inst.latency.len())
            .find(|&j| {
                problem
                    .latency_bounds
                    .as_ref()
                    .and_then(|b| b.bound_for(&inst.demand_ids[j]))
                    .is_some_and(|b| inst.latency[j][i] > b)
            })
            .expect("excluded by some bound");
        push(vec![(i, 1.0)], Sense::Le, 0.0, Provenance::LatencyBound(inst.demand_ids[j].clone()));
    }

    let mut objective = LinearObjective {
        maximize: inst.objective == Objective::MaxPairwiseDistanceSum,
        terms: Vec::new(),
    };
    let mut y_index = Vec::new();
    let mut z_index = BTreeMap::new();
    match inst.objective {
        Objective::MinWeightedSumAll | Objective::MinCost => {
            objective.terms = (0..m).map(|i| (i, inst.unit_cost[i])).collect();
        }
        Objective::MinWeightedNearest => {
            for j in 0..inst.weight.len() {
                let row: Vec<usize> = (0..m)
                    .map(|i| {
                        variables.push(Variable {
                            name: format!("y{j}_{i}"),
                            kind: VarKind::Continuous,
                            lower: 0.0,
                            upper: 1.0,
                        });
                        variables.len() - 1
                    })
                    .collect();
                let did = inst.demand_ids[j].clone();
                push(
                    row.iter().map(|&y| (y, 1.0)).collect(),
                    Sense::Eq,
                    1.0,
                    Provenance::Assignment(did.clone()),
                );
                for i in 0..m {
                    push(
                        vec![(row[i], 1.0), (i, -1.0)],
                        Sense::Le,
                        0.0,
                        Provenance::AssignmentLink(did.clone()),
                    );
                    if !inst.assignable[j][i] {
                        push(vec![(row[i], 1.0)], Sense::Le, 0.0, Provenance::LatencyBound(did.clone()));
                    }
                    objective.terms.push((row[i], inst.weight[j] * inst.latency[j][i]));
                }
                y_index.push(row);
            }
        }
        Objective::MinPairwiseDistanceSum | Objective::MaxPairwiseDistanceSum => {
            for a in 0..m {
                for b in a + 1..m {
                    variables.push(Variable {
                        name: format!("z{a}_{b}"),
                        kind: VarKind::Binary,
                        lower: 0.0,
                        upper: 1.0,
                    });
                    let z = variables.len() - 1;
                    z_index.insert((a, b), z);
                    push(vec![(z, 1.0), (a, -1.0)], Sense::Le, 0.0, Provenance::PairLink);
                    push(vec![(z, 1.0), (b, -1.0)], Sense::Le, 0.0, Provenance::PairLink);
                    push(vec![(a, 1.0), (b, 1.0), (z, -1.0)], Sense::Le, 1.0, Provenance::PairLink);
                    objective.terms.push((z, inst.dist[a][b]));
                }
            }
        }
    }

    Ok(IlpModel {
        objective_kind: inst.objective,
        candidates: inst.ids.clone(),
        variables,
        constraints,
        objective,
        instance: inst,
        y_index,
        z_index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Proof {
    Optimal,
    Infeasible,
    /// Search stopped at the time limit; best selection found so far.
    Incumbent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub nodes: u64,
    /// Excluded from serialized output so reports stay byte-stable.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementSolution {
    pub objective: Objective,
    pub chosen: BTreeSet<String>,
    /// `None` when infeasible.
    pub objective_value: Option<f64>,
    /// Demand id -> serving candidate id (nearest objective only).
    pub assignment: BTreeMap<String, String>,
    pub proof: Proof,
    pub solve_stats: SolveStats,
}

pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(60);

fn tol(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

struct Search<'a> {
    inst: &'a Instance,
    /// Search-order indices of candidates that may be selected.
    order: Vec<usize>,
    /// `rule_suffix[r][k]`: matching candidates in `order[k..]`.
    rule_suffix: Vec<Vec<usize>>,
    /// `near_suffix[j][k]`: least admissible latency in `order[k..]`.
    near_suffix: Vec<Vec<f64>>,
    /// `order` positions sorted by unit cost (separable objectives).
    by_cost: Vec<usize>,
    /// Largest distance from each candidate to any other.
    max_dist: Vec<f64>,
    chosen: Vec<usize>,
    zone_used: Vec<usize>,
    rule_have: Vec<usize>,
    nearest_now: Vec<f64>,
    partial: f64,
    best: Option<(f64, Vec<usize>)>,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, deadline: Instant) -> Self {
        let mut order: Vec<usize> = (0..inst.m()).filter(|&i| inst.allowed[i]).collect();
        let separable = matches!(inst.objective, Objective::MinWeightedSumAll | Objective::MinCost);
        if separable && inst.rules.is_empty() {
            // Within a zone only the `cap` cheapest sites can appear in a
            // lexicographically-first optimum.
            let mut ranked = order.clone();
            ranked.sort_by(|&a, &b| inst.unit_cost[a].total_cmp(&inst.unit_cost[b]).then(a.cmp(&b)));
            let mut kept = vec![0usize; inst.zone_names.len()];
            let mut keep = vec![false; inst.m()];
            for i in ranked {
                if kept[inst.zone[i]] < inst.cap {
                    kept[inst.zone[i]] += 1;
                    keep[i] = true;
                }
            }
            order.retain(|&i| keep[i]);
        }
        let k = order.len();
        let rule_suffix = inst
            .rules
            .iter()
            .map(|(hits, _)| {
                let mut s = vec![0usize; k + 1];
                for p in (0..k).rev() {
                    s[p] = s[p + 1] + hits[order[p]] as usize;
                }
                s
            })
            .collect();
        let near_suffix = if inst.objective == Objective::MinWeightedNearest {
            (0..inst.weight.len())
                .map(|j| {
                    let mut s = vec![f64::INFINITY; k + 1];
                    for p in (0..k).rev() {
                        let i = order[p];
                        let l = if inst.assignable[j][i] { inst.latency[j][i] } else { f64::INFINITY };
                        s[p] = s[p + 1].min(l);
                    }
                    s
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut by_cost: Vec<usize> = (0..k).collect();
        by_cost.sort_by(|&a, &b| inst.unit_cost[order[a]].total_cmp(&inst.unit_cost[order[b]]).then(a.cmp(&b)));
        let max_dist = if inst.objective.is_pairwise() {
            order
                .iter()
                .map(|&a| order.iter().map(|&b| inst.dist[a][b]).fold(0.0, f64::max))
                .collect()
        } else {
            Vec::new()
        };
        Search {
            inst,
            rule_suffix,
            near_suffix,
            by_cost,
            max_dist,
            chosen: Vec::new(),
            zone_used: vec![0; inst.zone_names.len()],
            rule_have: vec![0; inst.rules.len()],
            nearest_now: if inst.objective == Objective::MinWeightedNearest {
                vec![f64::INFINITY; inst.weight.len()]
            } else {
                Vec::new()
            },
            partial: 0.0,
            best: None,
            nodes: 0,
            deadline,
            timed_out: false,
            order,
        }
    }

    /// Admissible lower bound on the minimization key of any completion
    /// that may still add candidates from `order[pos..]`.
    fn lower_bound(&self, pos: usize) -> f64 {
        let inst = self.inst;
        let count = self.chosen.len();
        let room = inst.n_max - count;
        let need = inst.n_min.saturating_sub(count);
        match inst.objective {
            Objective::MinWeightedSumAll | Objective::MinCost => {
                let mut lb = self.partial;
                let mut taken = 0;
                let mut used = self.zone_used.clone();
                for &p in &self.by_cost {
                    if taken == need {
                        break;
                    }
                    let i = self.order[p];
                    if p >= pos && used[inst.zone[i]] < inst.cap {
                        used[inst.zone[i]] += 1;
                        lb += inst.unit_cost[i];
                        taken += 1;
                    }
                }
                lb
            }
            Objective::MinWeightedNearest => (0..inst.weight.len())
                .map(|j| {
                    let future = if room > 0 { self.near_suffix[j][pos] } else { f64::INFINITY };
                    let l = self.nearest_now[j].min(future);
                    if l.is_finite() {
                        inst.weight[j] * l
                    } else {
                        0.0
                    }
                })
                .sum(),
            Objective::MinPairwiseDistanceSum => {
                let mut gains: Vec<f64> = self.order[pos..]
                    .iter()
                    .filter(|&&i| self.zone_used[inst.zone[i]] < inst.cap)
                    .map(|&i| self.chosen.iter().map(|&c| inst.dist[i][c]).sum())
                    .collect();
                gains.sort_by(f64::total_cmp);
                self.partial + gains.iter().take(need).sum::<f64>()
            }
            Objective::MaxPairwiseDistanceSum => {
                let spare = room.saturating_sub(1) as f64 / 2.0;
                let mut gains: Vec<f64> = (pos..self.order.len())
                    .filter(|&p| self.zone_used[inst.zone[self.order[p]]] < inst.cap)
                    .map(|p| {
                        let i = self.order[p];
                        self.chosen.iter().map(|&c| inst.dist[i][c]).sum::<f64>() + spare * self.max_dist[p]
                    })
                    .collect();
                gains.sort_by(|a, b| b.total_cmp(a));
                -(self.partial + gains.iter().take(room).sum::<f64>())
            }
        }
    }

    fn feasible_leaf(&self) -> bool {
        let inst = self.inst;
        self.chosen.len() >= inst.n_min
            && self.rule_have.iter().zip(&inst.rules).all(|(h, (_, min))| h >= min)
            && self.nearest_now.iter().all(|l| l.is_finite())
    }

    fn leaf(&mut self) {
        if !self.feasible_leaf() {
            return;
        }
        let mut chosen = self.chosen.clone();
        chosen.sort_unstable();
        let Some(value) = self.inst.evaluate(&chosen) else {
            return;
        };
        let key = self.inst.key(value);
        let better = match &self.best {
            None => true,
            Some((b, _)) => key < *b - tol(*b),
        };
        if better {
            self.best = Some((key, chosen));
        }
    }

    /// Visits completions in lexicographic order of their sorted id lists:
    /// the current set itself, then with `order[pos]`, then without it.
    /// `fresh` marks a set not yet offered as a leaf.
    fn dfs(&mut self, pos: usize, fresh: bool) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(4096) && Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }
        let inst = self.inst;
        let count = self.chosen.len();
        let remaining = self.order.len() - pos;
        if count + remaining < inst.n_min {
            return;
        }
        let room = inst.n_max - count;
        for (r, (_, min)) in inst.rules.iter().enumerate() {
            if self.rule_have[r] + self.rule_suffix[r][pos].min(room) < *min {
                return;
            }
        }
        for j in 0..self.nearest_now.len() {
            if !self.nearest_now[j].is_finite() && (room == 0 || !self.near_suffix[j][pos].is_finite()) {
                return;
            }
        }
        if let Some((b, _)) = &self.best {
            if self.lower_bound(pos) >= *b - tol(*b) {
                return;
            }
        }
        if fresh {
            self.leaf();
        }
        if pos == self.order.len() || room == 0 {
            return;
        }

        let i = self.order[pos];
        if self.zone_used[inst.zone[i]] < inst.cap {
            self.include(i);
            self.dfs(pos + 1, true);
            self.exclude_last(i);
        }
        self.dfs(pos + 1, false);
    }

    fn include(&mut self, i: usize) {
        let inst = self.inst;
        match inst.objective {
            Objective::MinWeightedSumAll | Objective::MinCost => self.partial += inst.unit_cost[i],
            Objective::MinPairwiseDistanceSum | Objective::MaxPairwiseDistanceSum => {
                self.partial += self.chosen.iter().map(|&c| inst.dist[i][c]).sum::<f64>();
            }
            Objective::MinWeightedNearest => {}
        }
        self.chosen.push(i);
        self.zone_used[inst.zone[i]] += 1;
        for (r, (hits, _)) in inst.rules.iter().enumerate() {
            self.rule_have[r] += hits[i] as usize;
        }
        if inst.objective == Objective::MinWeightedNearest {
            self.recompute_nearest();
        }
    }

    fn exclude_last(&mut self, i: usize) {
        let inst = self.inst;
        let popped = self.chosen.pop();
        debug_assert_eq!(popped, Some(i));
        self.zone_used[inst.zone[i]] -= 1;
        for (r, (hits, _)) in inst.rules.iter().enumerate() {
            self.rule_have[r] -= hits[i] as usize;
        }
        match inst.objective {
            Objective::MinWeightedSumAll | Objective::MinCost => self.partial -= inst.unit_cost[i],
            Objective::MinPairwiseDistanceSum | Objective::MaxPairwiseDistanceSum => {
                self.partial -= self.chosen.iter().map(|&c| inst.dist[i][c]).sum::<f64>();
            }
            Objective::MinWeightedNearest => self.recompute_nearest(),
        }
        if self.chosen.is_empty() {
            // drop accumulated rounding
            self.partial = 0.0;
        }
    }

    fn recompute_nearest(&mut self) {
        let inst = self.inst;
        for j in 0..self.nearest_now.len() {
            self.nearest_now[j] = self
                .chosen
                .iter()
                .filter(|&&i| inst.assignable[j][i])
                .map(|&i| inst.latency[j][i])
                .fold(f64::INFINITY, f64::min);
        }
    }
}

fn run(inst: &Instance, time_limit: Duration) -> Result<PlacementSolution, PlacementError> {
    let start = Instant::now();
    let mut search = Search::new(inst, start + time_limit);
    search.dfs(0, true);
    let stats = SolveStats {
        nodes: search.nodes,
        wall_time: start.elapsed(),
    };
    let to_solution = |chosen: &[usize], proof: Proof| {
        let value = inst.evaluate(chosen).expect("feasible selection");
        let assignment = if inst.objective == Objective::MinWeightedNearest {
            (0..inst.weight.len())
                .map(|j| {
                    let i = inst.nearest(j, chosen).expect("feasible selection");
                    (inst.demand_ids[j].clone(), inst.ids[i].clone())
                })
                .collect()
        } else {
            BTreeMap::new()
        };
        PlacementSolution {
            objective: inst.objective,
            chosen: chosen.iter().map(|&i| inst.ids[i].clone()).collect(),
            objective_value: Some(value),
            assignment,
            proof,
            solve_stats: stats.clone(),
        }
    };
    if search.timed_out {
        return Err(PlacementError::TimeLimitExceeded {
            limit: time_limit,
            nodes: search.nodes,
            incumbent: search.best.as_ref().map(|(_, c)| Box::new(to_solution(c, Proof::Incumbent))),
        });
    }
    Ok(match &search.best {
        Some((_, chosen)) => to_solution(chosen, Proof::Optimal),
        None => PlacementSolution {
            objective: inst.objective,
            chosen: BTreeSet::new(),
            objective_value: None,
            assignment: BTreeMap::new(),
            proof: Proof::Infeasible,
            solve_stats: stats,
        },
    })
}

/// Solves a compiled model exactly. Among equal optima the selection whose
/// sorted id list is lexicographically smallest wins.
pub fn solve(model: &IlpModel, time_limit: Duration) -> Result<PlacementSolution, PlacementError> {
    run(&model.instance, time_limit)
}

/// Pairwise-distance selection (e.g. peering IXPs) without materializing
/// the quadratic number of pair variables.
pub fn solve_pairwise(problem: &PlacementProblem, time_limit: Duration) -> Result<PlacementSolution, PlacementError> {
    if !problem.objective.is_pairwise() {
        return Err(invalid(format!(
            "solve_pairwise needs a pairwise objective, got {}",
            problem.objective.as_str()
        )));
    }
    run(&compile(problem)?, time_limit)
}

/// Compiles and solves in one step, skipping the explicit model for
/// pairwise objectives.
pub fn solve_problem(problem: &PlacementProblem, time_limit: Duration) -> Result<PlacementSolution, PlacementError> {
    if problem.objective.is_pairwise() {
        solve_pairwise(problem, time_limit)
    } else {
        solve(&build_ilp(problem)?, time_limit)
    }
}

/// Problem-level feasibility check of a selection, written against the
/// problem definition rather than the compiled instance.
pub fn check_selection(problem: &PlacementProblem, chosen: &BTreeSet<String>) -> Vec<String> {
    let mut errs = Vec::new();
    let picked: Vec<(usize, &Candidate)> = problem
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| chosen.contains(&c.id))
        .collect();
    if picked.len() != chosen.len() {
        errs.push("selection names unknown candidates".to_string());
    }
    let n = problem.select_count.n;
    match problem.select_count.mode {
        SelectMode::Exactly if picked.len() != n => errs.push(format!("selected {} != {n}", picked.len())),
        SelectMode::AtMost if picked.len() > n => errs.push(format!("selected {} > {n}", picked.len())),
        _ => {}
    }
    let mut per_zone: BTreeMap<String, usize> = BTreeMap::new();
    for (_, c) in &picked {
        let key = c.zone.clone().unwrap_or_else(|| format!("#{}", c.id));
        *per_zone.entry(key).or_default() += 1;
    }
    for (z, k) in per_zone {
        if k > problem.zone_cap {
            errs.push(format!("zone {z} holds {k} > {}", problem.zone_cap));
        }
    }
    for (r, rule) in problem.location_rules.iter().enumerate() {
        let hits = picked.iter().filter(|(_, c)| rule.predicate.matches(c)).count();
        if hits < rule.min_count {
            errs.push(format!("location rule {r}: {hits} < {}", rule.min_count));
        }
    }
    if let Some(bounds) = &problem.latency_bounds {
        for (j, d) in problem.demands.iter().enumerate() {
            let Some(b) = bounds.bound_for(&d.id) else { continue };
            if problem.objective == Objective::MinWeightedNearest {
                if !picked.iter().any(|(i, _)| problem.latency(j, *i) <= b) {
                    errs.push(format!("demand {} has no selected site within {b} ms", d.id));
                }
            } else {
                for (i, c) in &picked {
                    if problem.latency(j, *i) > b {
                        errs.push(format!("site {} exceeds {b} ms for demand {}", c.id, d.id));
                    }
                }
            }
        }
    }
    if problem.objective == Objective::MinWeightedNearest && !problem.demands.is_empty() && picked.is_empty() {
        errs.push("no site selected to serve demands".to_string());
    }
    errs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, lat: f64, lon: f64, zone: Option<&str>) -> Candidate {
        Candidate {
            id: id.into(),
            geo: GeoPoint::new(lat, lon).unwrap(),
            zone: zone.map(Into::into),
            cost: None,
            country: None,
        }
    }

    fn demand(id: &str, lat: f64, lon: f64, weight: f64) -> DemandPoint {
        DemandPoint {
            id: id.into(),
            geo: GeoPoint::new(lat, lon).unwrap(),
            weight,
        }
    }

    /// Three sites, 1 and 2 share a grid, latencies 10/20/30 from one demand.
    fn three_site(objective: Objective) -> PlacementProblem {
        PlacementProblem {
            candidates: vec![
                cand("1", 0.0, 1.0, Some("A")),
                cand("2", 0.0, 2.0, Some("A")),
                cand("3", 0.0, 3.0, Some("B")),
            ],
            demands: vec![demand("u", 0.0, 0.0, 1.0)],
            select_count: SelectCount {
                mode: SelectMode::Exactly,
                n: 2,
            },
            zone_cap: 1,
            location_rules: vec![],
            latency_bounds: None,
            objective,
            latency_override: Some(vec![vec![10.0, 20.0, 30.0]]),
        }
    }

    fn ids(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn three_site_model_shape() {
        let m = build_ilp(&three_site(Objective::MinWeightedSumAll)).unwrap();
        assert_eq!(m.count_by(|p| *p == Provenance::Cardinality), 1);
        assert_eq!(m.count_by(|p| matches!(p, Provenance::ZoneCap(_))), 1);
        assert_eq!(m.constraints.len(), 2);
        let lp = m.to_lp();
        assert!(lp.contains("obj: 10 x0 + 20 x1 + 30 x2"), "{lp}");
        assert!(lp.contains("x0 + x1 <= 1 \\ zone_cap A"), "{lp}");
    }

    #[test]
    fn three_site_optimum() {
        let sol = solve(&build_ilp(&three_site(Objective::MinWeightedSumAll)).unwrap(), DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.chosen, ids(&["1", "3"]));
        assert_eq!(sol.objective_value, Some(40.0));
        assert_eq!(sol.proof, Proof::Optimal);
    }

    #[test]
    fn nearest_with_one_site_picks_closest() {
        let mut p = three_site(Objective::MinWeightedNearest);
        p.select_count.n = 1;
        let model = build_ilp(&p).unwrap();
        let sol = solve(&model, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.chosen, ids(&["1"]));
        assert_eq!(sol.assignment["u"], "1");
        let v = model.values_for(&sol.chosen);
        assert!(model.violations(&v).is_empty());
        assert_eq!(model.objective_at(&v), 10.0);
    }

    #[test]
    fn pigeonhole_is_structural() {
        let mut p = three_site(Objective::MinWeightedSumAll);
        p.candidates = vec![
            cand("a", 0.0, 0.0, Some("A")),
            cand("b", 0.0, 1.0, Some("A")),
            cand("c", 0.0, 2.0, Some("A")),
            cand("d", 0.0, 3.0, Some("B")),
            cand("e", 0.0, 4.0, Some("B")),
        ];
        p.latency_override = None;
        p.select_count.n = 3;
        assert!(matches!(build_ilp(&p), Err(PlacementError::UnsatisfiableStructure(_))));
    }

    #[test]
    fn equidistant_tie_breaks_lexicographically() {
        let p = PlacementProblem {
            candidates: vec![
                cand("d", 0.0, 0.0, Some("B")),
                cand("b", 0.0, 0.0, Some("A")),
                cand("c", 0.0, 0.0, Some("B")),
                cand("a", 0.0, 0.0, Some("A")),
            ],
            demands: vec![demand("u", 10.0, 10.0, 1.0)],
            select_count: SelectCount {
                mode: SelectMode::Exactly,
                n: 2,
            },
            zone_cap: 1,
            location_rules: vec![],
            latency_bounds: None,
            objective: Objective::MinWeightedSumAll,
            latency_override: None,
        };
        let sol = solve_problem(&p, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.chosen, ids(&["a", "c"]));
    }

    fn corners(objective: Objective) -> PlacementProblem {
        PlacementProblem {
            candidates: vec![
                cand("sw", 0.0, 0.0, Some("1")),
                cand("se", 0.0, 1.0, Some("2")),
                cand("ne", 1.0, 1.0, Some("3")),
                cand("nw", 1.0, 0.0, Some("4")),
            ],
            demands: vec![],
            select_count: SelectCount {
                mode: SelectMode::Exactly,
                n: 2,
            },
            zone_cap: 1,
            location_rules: vec![],
            latency_bounds: None,
            objective,
            latency_override: None,
        }
    }

    #[test]
    fn pairwise_square_corners() {
        let far = solve_pairwise(&corners(Objective::MaxPairwiseDistanceSum), DEFAULT_TIME_LIMIT).unwrap();
        assert!(far.chosen == ids(&["ne", "sw"]) || far.chosen == ids(&["nw", "se"]), "{:?}", far.chosen);
        let near = solve_pairwise(&corners(Objective::MinPairwiseDistanceSum), DEFAULT_TIME_LIMIT).unwrap();
        let diag = [ids(&["ne", "sw"]), ids(&["nw", "se"])];
        assert!(!diag.contains(&near.chosen));
        assert_eq!(near.chosen.len(), 2);
    }

    #[test]
    fn pairwise_forced_pair() {
        let mut p = corners(Objective::MaxPairwiseDistanceSum);
        p.candidates.truncate(2);
        for obj in [Objective::MaxPairwiseDistanceSum, Objective::MinPairwiseDistanceSum] {
            p.objective = obj;
            assert_eq!(solve_pairwise(&p, DEFAULT_TIME_LIMIT).unwrap().chosen, ids(&["se", "sw"]));
        }
        p.objective = Objective::MinCost;
        assert!(solve_pairwise(&p, DEFAULT_TIME_LIMIT).is_err());
    }

    #[test]
    fn pairwise_model_linearization() {
        let m = build_ilp(&corners(Objective::MaxPairwiseDistanceSum)).unwrap();
        assert!(m.objective.maximize);
        assert_eq!(m.count_by(|p| *p == Provenance::PairLink), 18);
        let sol = solve(&m, DEFAULT_TIME_LIMIT).unwrap();
        let v = m.values_for(&sol.chosen);
        assert!(m.violations(&v).is_empty());
        assert!((m.objective_at(&v) - sol.objective_value.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn location_rule_forces_south() {
        let mut p = three_site(Objective::MinWeightedSumAll);
        for c in &mut p.candidates {
            c.geo = GeoPoint::new(1.0, c.geo.lon()).unwrap();
        }
        p.candidates.push(cand("4", -10.0, 0.0, Some("C")));
        p.latency_override = Some(vec![vec![10.0, 20.0, 30.0, 100.0]]);
        p.location_rules.push(LocationRule {
            predicate: Predicate::Hemisphere(Hemisphere::South),
            min_count: 1,
        });
        let sol = solve_problem(&p, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.chosen, ids(&["1", "4"]));
        assert!(check_selection(&p, &sol.chosen).is_empty());
    }

    #[test]
    fn latency_bound_semantics() {
        let mut p = three_site(Objective::MinWeightedSumAll);
        p.latency_bounds = Some(LatencyBounds::Uniform(25.0));
        let m = build_ilp(&p).unwrap();
        assert_eq!(m.count_by(|p| matches!(p, Provenance::LatencyBound(_))), 1);
        let sol = solve(&m, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.proof, Proof::Infeasible);
        assert_eq!(sol.objective_value, None);

        // Nearest: the bound only limits the serving site.
        p.objective = Objective::MinWeightedNearest;
        let sol = solve_problem(&p, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.chosen, ids(&["1", "3"]));
        assert_eq!(sol.objective_value, Some(10.0));
        p.latency_bounds = Some(LatencyBounds::Uniform(5.0));
        assert_eq!(solve_problem(&p, DEFAULT_TIME_LIMIT).unwrap().proof, Proof::Infeasible);
    }

    #[test]
    fn at_most_mode() {
        let mut p = three_site(Objective::MinWeightedNearest);
        p.select_count = SelectCount {
            mode: SelectMode::AtMost,
            n: 2,
        };
        let m = build_ilp(&p).unwrap();
        assert_eq!(m.constraints[0].sense, Sense::Le);
        let sol = solve(&m, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.objective_value, Some(10.0));
        assert_eq!(sol.chosen, ids(&["1"]));
    }

    #[test]
    fn min_cost_requires_costs() {
        let mut p = three_site(Objective::MinCost);
        assert!(matches!(build_ilp(&p), Err(PlacementError::InvalidProblem(_))));
        for (c, cost) in p.candidates.iter_mut().zip([5.0, 1.0, 2.0]) {
            c.cost = Some(cost);
        }
        let sol = solve_problem(&p, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.chosen, ids(&["2", "3"]));
        assert_eq!(sol.objective_value, Some(3.0));
    }

    #[test]
    fn invalid_problems() {
        let mut p = three_site(Objective::MinWeightedSumAll);
        p.candidates[1].id = "1".into();
        assert!(matches!(p.validate(), Err(PlacementError::InvalidProblem(_))));
        let mut p = three_site(Objective::MinWeightedSumAll);
        p.select_count.n = 4;
        assert!(p.validate().is_err());
        let mut p = three_site(Objective::MinWeightedSumAll);
        p.latency_override = Some(vec![vec![1.0]]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn problem_json() {
        let doc = r#"{
            "candidates": [{"id": "1", "lat": 0, "lon": 1, "zone": "A"},
                           {"id": "2", "lat": 0, "lon": 2, "zone": "A"},
                           {"id": "3", "lat": 0, "lon": 3, "zone": "B"}],
            "demands": [{"id": "u", "lat": 0, "lon": 0, "weight": 1}],
            "select_count": {"mode": "exactly", "n": 2},
            "zone_cap": 1,
            "location_rules": [{"predicate": {"hemisphere": "north"}, "min_count": 1},
                               {"predicate": {"country_codes": ["US"]}, "min_count": 0},
                               {"predicate": {"bbox": {"min_lat": -1, "min_lon": -1, "max_lat": 1, "max_lon": 5}}, "min_count": 1}],
            "latency_bounds": {"u": 50},
            "objective": "min_weighted_sum_all",
            "latency_override": [[10, 20, 30]]
        }"#;
        let p = PlacementProblem::from_json(doc).unwrap();
        assert_eq!(p.location_rules.len(), 3);
        assert_eq!(p.latency_bounds, Some(LatencyBounds::PerDemand([("u".to_string(), 50.0)].into())));
        let sol = solve_problem(&p, DEFAULT_TIME_LIMIT).unwrap();
        assert_eq!(sol.chosen, ids(&["1", "3"]));
        assert!(PlacementProblem::from_json(r#"{"candidates": [{"id": "x", "lat": 91, "lon": 0}]}"#).is_err());
    }

    #[test]
    fn time_limit_returns_incumbent() {
        let candidates: Vec<Candidate> = (0..60)
            .map(|i| cand(&format!("c{i:02}"), (i as f64) - 30.0, (i * 5 % 360) as f64 - 180.0, None))
            .collect();
        let p = PlacementProblem {
            candidates,
            demands: vec![],
            select_count: SelectCount {
                mode: SelectMode::Exactly,
                n: 20,
            },
            zone_cap: 1,
            location_rules: vec![],
            latency_bounds: None,
            objective: Objective::MaxPairwiseDistanceSum,
            latency_override: None,
        };
        match solve_pairwise(&p, Duration::from_millis(0)) {
            Err(PlacementError::TimeLimitExceeded { incumbent, .. }) => {
                if let Some(s) = incumbent {
                    assert_eq!(s.proof, Proof::Incumbent);
                }
            }
            other => panic!("expected time limit, got {other:?}"),
        }
    }
}
