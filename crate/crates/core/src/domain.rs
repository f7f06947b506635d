//! Input data model: grid, flood exposure, crew resources and cost parameters.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validity interval of the flood-depth protection-time formula, in meters.
pub const PROTECTION_DEPTH_RANGE: (f64, f64) = (0.45, 1.5);

pub type BusId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: String,
    pub bus_id: BusId,
    /// Mean flood depth at the site, meters.
    pub mean_flood_depth: f64,
    pub failure_probability: f64,
    /// Hours to restore the substation after a flood failure.
    pub repair_time: f64,
    /// Structural damage cost if flooded, dollars.
    pub damage_cost: f64,
    /// Cost of deploying tiger dams around the substation, dollars.
    pub tiger_dam_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    /// MW demand for each operating hour.
    pub demand_profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series susceptance in per-unit on the system base.
    pub susceptance: f64,
    /// Thermal limit, MW.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub bus_id: BusId,
    pub p_min: f64,
    pub p_max: f64,
    /// MW per hour.
    pub ramp_up: f64,
    /// MW per hour.
    pub ramp_down: f64,
    /// Output in the hour before the operating horizon. When absent the first
    /// hour is not ramp-constrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_output: Option<f64>,
}

fn default_edge_epsilon() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrewConfig {
    pub num_teams: u32,
    pub members_per_team: u32,
    /// Hours available for dam installation on the day before the flood.
    pub prep_hours: u32,
    #[serde(default = "default_edge_epsilon")]
    pub edge_epsilon: f64,
}

fn default_angle_bound() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Value of lost load, dollars per MWh.
    pub voll: f64,
    /// Bound on every bus voltage angle, radians. Sizes the flow big-M.
    #[serde(default = "default_angle_bound")]
    pub big_m_angle_bound: f64,
}

/// How the generator minimum output applies to an available unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinOutputPolicy {
    /// `h·P_min ≤ p ≤ h·P_max`: an available unit must run at least at `P_min`.
    #[default]
    Enforced,
    /// `0 ≤ p ≤ h·P_max`: an available unit may be dispatched down to zero,
    /// so islands without load never force infeasibility.
    Relaxed,
}

fn default_base_mva() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub substations: Vec<Substation>,
    pub crew: CrewConfig,
    pub costs: CostConfig,
    /// Number of hourly periods in the operating day after flood onset.
    pub operating_horizon: usize,
    /// System base for converting per-unit susceptance to MW per radian.
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default)]
    pub min_output: MinOutputPolicy,
    /// Flood-depth cuts used when no explicit scenario source is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.0.push(Violation {
                path: path.into(),
                message: message.into(),
            });
        }
    }
}

fn nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl CaseModel {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn substation_for_bus(&self, bus: BusId) -> Option<usize> {
        self.substations.iter().position(|s| s.bus_id == bus)
    }

    /// Index of the angle-reference bus: the lowest-numbered bus hosting a
    /// generator, or the lowest-numbered bus when there are no generators.
    pub fn slack_bus(&self) -> Option<usize> {
        let with_gen: BTreeSet<BusId> = self.generators.iter().map(|g| g.bus_id).collect();
        let pick = with_gen
            .iter()
            .find(|id| self.bus(**id).is_some())
            .copied()
            .or_else(|| self.buses.iter().map(|b| b.id).min())?;
        self.buses.iter().position(|b| b.id == pick)
    }

    /// Demand of bus `bus_index` at operating hour `hour`; profiles repeat
    /// when `hour` runs past their end.
    pub fn demand(&self, bus_index: usize, hour: usize) -> f64 {
        let profile = &self.buses[bus_index].demand_profile;
        if profile.is_empty() {
            0.0
        } else {
            profile[hour % profile.len()]
        }
    }

    /// Changes the operating horizon, truncating or cyclically repeating
    /// every demand profile to the new length.
    pub fn set_horizon(&mut self, hours: usize) {
        self.operating_horizon = hours;
        for bus in &mut self.buses {
            let p = &bus.demand_profile;
            if !p.is_empty() {
                bus.demand_profile = (0..hours).map(|t| p[t % p.len()]).collect();
            }
        }
    }

    pub fn total_demand(&self, hour: usize) -> f64 {
        (0..self.buses.len()).map(|i| self.demand(i, hour)).sum()
    }

    /// Protection hours τ_k for every substation, in case order.
    pub fn protection_times(&self) -> Result<Vec<u32>> {
        self.substations
            .iter()
            .map(|s| protection_time(s.mean_flood_depth, self.crew.members_per_team))
            .collect()
    }
}

/// Checks every case invariant and returns all violations found.
pub fn validate_case(case: &CaseModel) -> Vec<Violation> {
    let mut v = Collector(Vec::new());

    let mut bus_ids = BTreeSet::new();
    for (i, bus) in case.buses.iter().enumerate() {
        let path = format!("buses[{i}]");
        v.check(bus_ids.insert(bus.id), &path, format!("duplicate bus id {}", bus.id));
        v.check(
            bus.demand_profile.len() == case.operating_horizon,
            format!("{path}.demand_profile"),
            format!(
                "profile has {} values, operating horizon is {}",
                bus.demand_profile.len(),
                case.operating_horizon
            ),
        );
        for (t, d) in bus.demand_profile.iter().enumerate() {
            v.check(
                nonneg(*d),
                format!("{path}.demand_profile[{t}]"),
                format!("demand must be finite and >= 0, got {d}"),
            );
        }
    }

    let mut line_ids = BTreeSet::new();
    for (l, line) in case.lines.iter().enumerate() {
        let path = format!("lines[{l}]");
        v.check(line_ids.insert(line.id.as_str()), &path, format!("duplicate line id {}", line.id));
        v.check(
            positive(line.capacity),
            format!("{path}.capacity"),
            format!("capacity must be > 0, got {}", line.capacity),
        );
        v.check(
            positive(line.susceptance),
            format!("{path}.susceptance"),
            format!("susceptance must be > 0, got {}", line.susceptance),
        );
        v.check(
            line.from_bus != line.to_bus,
            &path,
            format!("line {} connects bus {} to itself", line.id, line.from_bus),
        );
        for (field, bus) in [("from_bus", line.from_bus), ("to_bus", line.to_bus)] {
            v.check(
                bus_ids.contains(&bus),
                format!("{path}.{field}"),
                format!("references missing bus {bus}"),
            );
        }
    }

    let mut gen_ids = BTreeSet::new();
    for (g, gen) in case.generators.iter().enumerate() {
        let path = format!("generators[{g}]");
        v.check(gen_ids.insert(gen.id.as_str()), &path, format!("duplicate generator id {}", gen.id));
        v.check(
            bus_ids.contains(&gen.bus_id),
            format!("{path}.bus_id"),
            format!("references missing bus {}", gen.bus_id),
        );
        v.check(
            nonneg(gen.p_min) && gen.p_min <= gen.p_max && gen.p_max.is_finite(),
            format!("{path}.p_min"),
            format!("need 0 <= p_min <= p_max, got [{}, {}]", gen.p_min, gen.p_max),
        );
        v.check(
            positive(gen.ramp_up),
            format!("{path}.ramp_up"),
            format!("ramp_up must be > 0, got {}", gen.ramp_up),
        );
        v.check(
            positive(gen.ramp_down),
            format!("{path}.ramp_down"),
            format!("ramp_down must be > 0, got {}", gen.ramp_down),
        );
        if let Some(p0) = gen.initial_output {
            v.check(
                nonneg(p0) && p0 <= gen.p_max,
                format!("{path}.initial_output"),
                format!("initial output must lie in [0, p_max], got {p0}"),
            );
        }
    }

    let mut sub_ids = BTreeSet::new();
    let mut served: BTreeMap<BusId, usize> = BTreeMap::new();
    for (k, sub) in case.substations.iter().enumerate() {
        let path = format!("substations[{k}]");
        v.check(sub_ids.insert(sub.id.as_str()), &path, format!("duplicate substation id {}", sub.id));
        v.check(
            bus_ids.contains(&sub.bus_id),
            format!("{path}.bus_id"),
            format!("references missing bus {}", sub.bus_id),
        );
        *served.entry(sub.bus_id).or_default() += 1;
        v.check(
            sub.failure_probability.is_finite() && (0.0..=1.0).contains(&sub.failure_probability),
            format!("{path}.failure_probability"),
            format!(
                "substation {}: failure probability must lie in [0, 1], got {}",
                sub.id, sub.failure_probability
            ),
        );
        let (lo, hi) = PROTECTION_DEPTH_RANGE;
        v.check(
            sub.mean_flood_depth.is_finite() && (lo..=hi).contains(&sub.mean_flood_depth),
            format!("{path}.mean_flood_depth"),
            format!(
                "substation {}: mean flood depth {} outside the protection-time range [{lo}, {hi}] m",
                sub.id, sub.mean_flood_depth
            ),
        );
        for (field, x) in [
            ("repair_time", sub.repair_time),
            ("damage_cost", sub.damage_cost),
            ("tiger_dam_cost", sub.tiger_dam_cost),
        ] {
            v.check(nonneg(x), format!("{path}.{field}"), format!("must be finite and >= 0, got {x}"));
        }
    }
    for bus in &case.buses {
        let n = served.get(&bus.id).copied().unwrap_or(0);
        v.check(
            n == 1,
            "substations",
            format!("bus {} is served by {n} substations, expected exactly one", bus.id),
        );
    }

    // A zero-team or zero-hour crew is a legitimate "no protection possible" case.
    v.check(
        case.crew.members_per_team >= 1,
        "crew.members_per_team",
        "at least one member per team is required",
    );
    v.check(
        case.crew.edge_epsilon > 0.0 && case.crew.edge_epsilon < 0.5,
        "crew.edge_epsilon",
        format!("must lie in (0, 0.5), got {}", case.crew.edge_epsilon),
    );
    v.check(
        positive(case.costs.voll),
        "costs.voll",
        format!("must be > 0, got {}", case.costs.voll),
    );
    v.check(
        positive(case.costs.big_m_angle_bound),
        "costs.big_m_angle_bound",
        format!("must be > 0, got {}", case.costs.big_m_angle_bound),
    );
    v.check(positive(case.base_mva), "base_mva", format!("must be > 0, got {}", case.base_mva));
    v.check(case.operating_horizon >= 1, "operating_horizon", "must be at least one hour");
    if let Some(th) = &case.scenario_thresholds {
        for (j, d) in th.iter().enumerate() {
            v.check(nonneg(*d), format!("scenario_thresholds[{j}]"), "thresholds must be >= 0");
        }
    }

    if !case.buses.is_empty() && !is_connected(case) {
        v.0.push(Violation {
            path: "lines".into(),
            message: "network is not connected with all substations available".into(),
        });
    }
    v.0
}

fn is_connected(case: &CaseModel) -> bool {
    let ids: Vec<BusId> = case.buses.iter().map(|b| b.id).collect();
    let mut adj: BTreeMap<BusId, Vec<BusId>> = ids.iter().map(|id| (*id, Vec::new())).collect();
    for line in &case.lines {
        if adj.contains_key(&line.from_bus) && adj.contains_key(&line.to_bus) {
            adj.get_mut(&line.from_bus).unwrap().push(line.to_bus);
            adj.get_mut(&line.to_bus).unwrap().push(line.from_bus);
        }
    }
    let mut seen = BTreeSet::from([ids[0]]);
    let mut queue = VecDeque::from([ids[0]]);
    while let Some(b) = queue.pop_front() {
        for n in &adj[&b] {
            if seen.insert(*n) {
                queue.push_back(*n);
            }
        }
    }
    seen.len() == ids.len()
}

/// Whether sites needing `times` crew-hours each can be split among `teams`
/// crews that each work at most `hours` hours, every site done by one crew.
pub fn crews_can_cover(times: &[u32], teams: usize, hours: u32) -> bool {
    fn place(rest: &[u32], load: &mut [u32], hours: u32) -> bool {
        let Some((&first, tail)) = rest.split_first() else {
            return true;
        };
        for n in 0..load.len() {
            // crews with equal load are interchangeable
            if load[..n].contains(&load[n]) || load[n] + first > hours {
                continue;
            }
            load[n] += first;
            let ok = place(tail, load, hours);
            load[n] -= first;
            if ok {
                return true;
            }
        }
        false
    }
    let mut sorted: Vec<u32> = times.iter().copied().filter(|t| *t > 0).collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    if sorted.iter().map(|t| u64::from(*t)).sum::<u64>() > teams as u64 * u64::from(hours) {
        return false;
    }
    place(&sorted, &mut vec![0; teams], hours)
}

/// Whole crew-hours a team of `members_per_team` needs to dam a site with
/// mean flood depth `mu` meters: `ceil((4 + 10·(mu − 0.45)) / members)`.
pub fn protection_time(mu: f64, members_per_team: u32) -> Result<u32> {
    let (lo, hi) = PROTECTION_DEPTH_RANGE;
    if !(lo..=hi).contains(&mu) {
        return Err(Error::Range(format!(
            "mean flood depth {mu} m outside the valid interval [{lo}, {hi}] m"
        )));
    }
    if members_per_team == 0 {
        return Err(Error::Range("members per team must be at least 1".into()));
    }
    let raw = (4.0 + 10.0 * (mu - lo)) / f64::from(members_per_team);
    // absorb representation error such as 10·(0.85−0.45) = 3.9999999999999996
    Ok(((raw - 1e-9).ceil() as u32).max(1))
}

/// Per-substation cost coefficients of the imposed-cost term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImposedCost {
    pub protect_cost: f64,
    pub fail_cost: f64,
}

impl ImposedCost {
    /// `θ·C + (1 − θ)·DC`.
    pub fn beta(&self, theta: f64) -> f64 {
        theta * self.protect_cost + (1.0 - theta) * self.fail_cost
    }
}

pub fn imposed_cost_coefficients(sub: &Substation) -> ImposedCost {
    ImposedCost {
        protect_cost: sub.tiger_dam_cost,
        fail_cost: sub.damage_cost,
    }
}
