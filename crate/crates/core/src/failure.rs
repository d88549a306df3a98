//! Grid outage scenarios and the share of users and infrastructure they
//! make unreachable.
//!
//! A component fails iff its WASG fails. Components in no WASG are never
//! affected. A link fails iff either mapped endpoint's WASG fails.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::{StatsAggregation, WasgRegistry};
use crate::ingest::{ComponentKind, InfraComponent, IpLink};
use crate::overlap::az_collapse;

#[derive(Debug, Error, PartialEq)]
pub enum FailureError {
    #[error("unknown WASG `{0}`")]
    UnknownWasg(String),
    #[error("regional scenario `{0}` fails no WASG")]
    EmptyFailedSet(String),
    #[error("latitude threshold {0} outside (0, 90)")]
    BadThreshold(f64),
    #[error("region `{0}` has no boundary")]
    NoBoundary(String),
    #[error("malformed scenario: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScenarioMode {
    Regional { failed: BTreeSet<String> },
    LatitudeBand { threshold_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    pub name: String,
    #[serde(flatten)]
    pub mode: ScenarioMode,
    /// Reserved for a restoration horizon; not used by any computation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_to_restore_h: Option<f64>,
}

impl FailureScenario {
    pub fn regional(name: &str, failed: &[&str]) -> Self {
        Self {
            name: name.into(),
            mode: ScenarioMode::Regional {
                failed: failed.iter().map(|s| s.to_string()).collect(),
            },
            time_to_restore_h: None,
        }
    }

    pub fn latitude_band(name: &str, threshold_deg: f64) -> Self {
        Self {
            name: name.into(),
            mode: ScenarioMode::LatitudeBand { threshold_deg },
            time_to_restore_h: None,
        }
    }

    pub fn from_json(doc: &str) -> Result<Self, FailureError> {
        let s: Self = serde_json::from_str(doc).map_err(|e| FailureError::Malformed(e.to_string()))?;
        s.validate_shape()?;
        Ok(s)
    }

    fn validate_shape(&self) -> Result<(), FailureError> {
        match &self.mode {
            ScenarioMode::Regional { failed } if failed.is_empty() => {
                Err(FailureError::EmptyFailedSet(self.name.clone()))
            }
            ScenarioMode::LatitudeBand { threshold_deg: t } if !(*t > 0.0 && *t < 90.0) => {
                Err(FailureError::BadThreshold(*t))
            }
            _ => Ok(()),
        }
    }
}

/// WASG ids failed by `scenario`.
pub fn resolve_scenario(scenario: &FailureScenario, registry: &WasgRegistry) -> Result<BTreeSet<String>, FailureError> {
    scenario.validate_shape()?;
    match &scenario.mode {
        ScenarioMode::Regional { failed } => {
            if let Some(bad) = failed.iter().find(|id| !registry.contains_id(id)) {
                return Err(FailureError::UnknownWasg(bad.clone()));
            }
            Ok(failed.clone())
        }
        ScenarioMode::LatitudeBand { threshold_deg } => {
            let mut out = BTreeSet::new();
            for r in registry.regions() {
                // Regions without polygons cannot be placed on the map.
                if r.boundary.is_empty() {
                    continue;
                }
                let hit = r
                    .band_overlap(*threshold_deg)
                    .map_err(|_| FailureError::BadThreshold(*threshold_deg))?;
                if hit {
                    out.insert(r.id.clone());
                }
            }
            Ok(out)
        }
    }
}

/// Internet users per WASG plus the remainder living outside every WASG.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserTotals {
    pub per_wasg: BTreeMap<String, u64>,
    pub outside: u64,
}

impl UserTotals {
    /// From the per-region figures carried in the registry document.
    pub fn from_registry(registry: &WasgRegistry) -> Self {
        Self {
            per_wasg: registry
                .regions()
                .iter()
                .map(|r| (r.id.clone(), r.internet_users))
                .collect(),
            outside: 0,
        }
    }

    pub fn from_stats(agg: &StatsAggregation) -> Self {
        Self {
            per_wasg: agg
                .per_wasg
                .iter()
                .map(|(k, v)| (k.clone(), v.internet_users))
                .collect(),
            outside: agg.uncovered.internet_users,
        }
    }

    pub fn world(&self) -> u64 {
        self.per_wasg.values().sum::<u64>() + self.outside
    }
}

/// Everything a scenario is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct FailureInputs<'a> {
    pub components: &'a [InfraComponent],
    /// Zone per router (one entry per parsed router, ungeolocated included).
    pub router_zones: Option<&'a [Option<String>]>,
    pub links: &'a [IpLink],
    pub users: &'a UserTotals,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MetricDetail {
    pub unavailable: f64,
    /// Denominator: every item, zoned or not.
    pub total: f64,
    /// Items that resolved to some WASG.
    pub zoned: f64,
    pub fraction: f64,
    /// `unavailable / zoned`.
    pub fraction_of_zoned: f64,
}

impl MetricDetail {
    fn new(unavailable: f64, total: f64, zoned: f64) -> Self {
        let ratio = |n: f64, d: f64| if d > 0.0 { (n / d).clamp(0.0, 1.0) } else { 0.0 };
        Self {
            unavailable,
            total,
            zoned,
            fraction: ratio(unavailable, total),
            fraction_of_zoned: ratio(unavailable, zoned),
        }
    }
}

pub const METRICS: [&str; 6] = [
    "internet_users",
    "ixps",
    "dns_roots",
    "routers",
    "links",
    "datacenter_zones",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnavailabilityReport {
    pub scenario: String,
    pub failed_wasgs: BTreeSet<String>,
    /// Metric -> unavailable share of all items.
    pub fractions: BTreeMap<String, f64>,
    pub details: BTreeMap<String, MetricDetail>,
}

fn count_kind(components: &[InfraComponent], kind: ComponentKind, failed: &BTreeSet<String>) -> MetricDetail {
    let (mut down, mut total, mut zoned) = (0u64, 0u64, 0u64);
    for c in components.iter().filter(|c| c.kind == kind) {
        total += 1;
        if let Some(z) = &c.zone {
            zoned += 1;
            down += failed.contains(z) as u64;
        }
    }
    MetricDetail::new(down as f64, total as f64, zoned as f64)
}

pub fn unavailability(name: &str, failed: &BTreeSet<String>, inputs: FailureInputs<'_>) -> UnavailabilityReport {
    let mut details = BTreeMap::new();

    let users_down: u64 = failed.iter().filter_map(|id| inputs.users.per_wasg.get(id)).sum();
    let zoned_users: u64 = inputs.users.per_wasg.values().sum();
    details.insert(
        "internet_users",
        MetricDetail::new(users_down as f64, inputs.users.world() as f64, zoned_users as f64),
    );
    details.insert("ixps", count_kind(inputs.components, ComponentKind::Ixp, failed));
    details.insert("dns_roots", count_kind(inputs.components, ComponentKind::DnsRoot, failed));

    let routers = match inputs.router_zones {
        Some(zones) => {
            let zoned = zones.iter().flatten().count();
            let down = zones.iter().flatten().filter(|z| failed.contains(*z)).count();
            MetricDetail::new(down as f64, zones.len() as f64, zoned as f64)
        }
        None => count_kind(inputs.components, ComponentKind::Router, failed),
    };
    details.insert("routers", routers);

    let (mut down, mut zoned) = (0u64, 0u64);
    for l in inputs.links {
        let ends = [l.zone_a.as_deref(), l.zone_b.as_deref()];
        if ends.iter().any(Option::is_some) {
            zoned += 1;
        }
        if ends.iter().flatten().any(|z| failed.contains(*z)) {
            down += 1;
        }
    }
    details.insert(
        "links",
        MetricDetail::new(down as f64, inputs.links.len() as f64, zoned as f64),
    );

    let azs = az_collapse(inputs.components);
    let dc_down = azs.groups.keys().filter(|z| failed.contains(*z)).count();
    details.insert(
        "datacenter_zones",
        MetricDetail::new(dc_down as f64, azs.zone_count as f64, azs.groups.len() as f64),
    );

    UnavailabilityReport {
        scenario: name.to_string(),
        failed_wasgs: failed.clone(),
        fractions: details.iter().map(|(k, d)| (k.to_string(), d.fraction)).collect(),
        details: details.into_iter().map(|(k, d)| (k.to_string(), d)).collect(),
    }
}

/// Resolves and evaluates a scenario in one step.
pub fn evaluate(
    scenario: &FailureScenario,
    registry: &WasgRegistry,
    inputs: FailureInputs<'_>,
) -> Result<UnavailabilityReport, FailureError> {
    let failed = resolve_scenario(scenario, registry)?;
    Ok(unavailability(&scenario.name, &failed, inputs))
}
