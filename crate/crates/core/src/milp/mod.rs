//! Deterministic-equivalent MILP for protection selection, crew scheduling
//! and scenario-wise flood-aware DC optimal power flow.

mod build;
pub mod mps;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub use build::{big_m_for_line, build, build_dispatch, crew_cover_sets, crew_edge_constraints, MAX_COVER_SITES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Continuous,
}

/// What a variable stands for. Indices are 0-based positions in the case
/// vectors (substations, teams, prep hours, scenarios, lines, generators,
/// buses, operating hours).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum VarRole {
    /// Substation `k` receives tiger dams.
    Theta { k: usize },
    /// Team `n` works at substation `k` during prep hour `t`.
    CrewWork { n: usize, k: usize, t: usize },
    /// Team `n` starts working at substation `k` in prep hour `t`.
    CrewStart { n: usize, k: usize, t: usize },
    /// Substation `k` is in service in scenario `s`.
    SubAvail { k: usize, s: usize },
    /// Both terminals of line `l` are in service in scenario `s`.
    LineAvail { l: usize, s: usize },
    /// Imposed cost of substation `k`.
    Beta { k: usize },
    Gen { g: usize, s: usize, t: usize },
    Shed { i: usize, s: usize, t: usize },
    Flow { l: usize, s: usize, t: usize },
    Angle { i: usize, s: usize, t: usize },
    /// Variables of hand-built instances without a planning meaning.
    Generic { j: usize },
}

impl VarRole {
    /// Branching priority class; lower classes are branched on first.
    pub fn branch_class(&self) -> u8 {
        match self {
            VarRole::Theta { .. } => 0,
            VarRole::CrewWork { .. } => 1,
            VarRole::CrewStart { .. } => 2,
            VarRole::SubAvail { .. } | VarRole::LineAvail { .. } => 3,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarEntry {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    #[serde(flatten)]
    pub role: VarRole,
}

#[derive(Debug, Clone, Default)]
pub struct VarCatalog {
    entries: Vec<VarEntry>,
    by_name: HashMap<String, usize>,
    by_role: HashMap<VarRole, usize>,
}

impl VarCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a variable and returns its index. Binary variables always get
    /// bounds `[0, 1]`.
    pub fn add(&mut self, name: String, kind: VarKind, lower: f64, upper: f64, role: VarRole) -> Result<usize> {
        let (lower, upper) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lower, upper),
        };
        if !(lower <= upper) {
            return Err(Error::Model(format!("variable {name} has bounds [{lower}, {upper}]")));
        }
        if self.by_name.contains_key(&name) {
            return Err(Error::Model(format!("duplicate variable name {name}")));
        }
        let idx = self.entries.len();
        self.by_name.insert(name.clone(), idx);
        if !matches!(role, VarRole::Generic { .. }) && self.by_role.insert(role, idx).is_some() {
            return Err(Error::Model(format!("duplicate variable role {role:?}")));
        }
        self.entries.push(VarEntry {
            name,
            kind,
            lower,
            upper,
            role,
        });
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VarEntry] {
        &self.entries
    }

    pub fn get(&self, idx: usize) -> &VarEntry {
        &self.entries[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn find(&self, role: VarRole) -> Option<usize> {
        self.by_role.get(&role).copied()
    }

    /// Index of a role known to exist.
    pub fn var(&self, role: VarRole) -> usize {
        self.find(role)
            .unwrap_or_else(|| panic!("no variable with role {role:?}"))
    }

    pub fn set_bounds(&mut self, idx: usize, lower: f64, upper: f64) {
        let e = &mut self.entries[idx];
        e.lower = lower;
        e.upper = upper;
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == VarKind::Binary)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

/// Constraint family, named after the modelling relation it encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ImposedCost,
    Availability,
    NodalBalance,
    FlowLimit,
    FlowAngleLower,
    FlowAngleUpper,
    /// Flow equals susceptance times angle difference on an in-service line.
    FlowAngle,
    GeneratorBounds,
    RampUp,
    RampDown,
    CrewBudget,
    ProtectionHours,
    TeamOneSite,
    StartEdgeLower,
    StartEdgeUpper,
    SingleDispatch,
    /// At least one site of a set the crews cannot finish stays unprotected.
    CrewCover,
    LineAvailOrigin,
    LineAvailDestination,
    LineAvailBoth,
    Generic,
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::ImposedCost => "imposed_cost",
            Family::Availability => "availability",
            Family::NodalBalance => "nodal_balance",
            Family::FlowLimit => "flow_limit",
            Family::FlowAngleLower => "flow_angle_lower",
            Family::FlowAngleUpper => "flow_angle_upper",
            Family::FlowAngle => "flow_angle",
            Family::GeneratorBounds => "generator_bounds",
            Family::RampUp => "ramp_up",
            Family::RampDown => "ramp_down",
            Family::CrewBudget => "crew_budget",
            Family::ProtectionHours => "protection_hours",
            Family::TeamOneSite => "team_one_site",
            Family::StartEdgeLower => "start_edge_lower",
            Family::StartEdgeUpper => "start_edge_upper",
            Family::SingleDispatch => "single_dispatch",
            Family::CrewCover => "crew_cover",
            Family::LineAvailOrigin => "line_avail_origin",
            Family::LineAvailDestination => "line_avail_destination",
            Family::LineAvailBoth => "line_avail_both",
            Family::Generic => "generic",
        }
    }

    /// Families that constrain only the crew schedule.
    pub fn is_crew(&self) -> bool {
        matches!(
            self,
            Family::CrewBudget
                | Family::ProtectionHours
                | Family::TeamOneSite
                | Family::StartEdgeLower
                | Family::StartEdgeUpper
                | Family::SingleDispatch
                | Family::CrewCover
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub family: Family,
}

impl LinearConstraint {
    /// Builds a constraint, merging repeated variables and dropping zero
    /// coefficients.
    pub fn new(name: impl Into<String>, terms: impl IntoIterator<Item = (usize, f64)>, sense: Sense, rhs: f64, family: Family) -> Self {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (v, c) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        Self {
            name: name.into(),
            terms: merged,
            sense,
            rhs,
            family,
        }
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[*v]).sum()
    }

    /// Amount by which `values` violate the constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilpInstance {
    pub catalog: VarCatalog,
    /// Minimized linear objective.
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<LinearConstraint>,
    /// Flow big-M per line, MW. Empty for instances without a network.
    pub big_m: Vec<f64>,
    /// Non-fatal modelling notes, such as sites that cannot be protected in time.
    pub warnings: Vec<String>,
    /// Planning structure of built instances; `None` for hand-built or
    /// imported ones.
    pub structure: Option<PlanStructure>,
}

/// What the solver needs to turn a protection choice into a full binary
/// assignment.
#[derive(Debug, Clone)]
pub struct PlanStructure {
    pub protection_hours: Vec<u32>,
    pub teams: usize,
    pub prep_hours: usize,
    /// `failed[s][k]`: substation `k` fails in scenario `s` when unprotected.
    pub failed: Vec<Vec<bool>>,
    /// Substation index at each end of every line.
    pub line_subs: Vec<(usize, usize)>,
}

impl PlanStructure {
    /// Crew blocks `(substation, team, first hour)` for the protected set:
    /// longest jobs first, backtracking over crews with distinct loads.
    pub fn crew_blocks(&self, protected: &[bool]) -> Option<Vec<(usize, usize, usize)>> {
        let mut jobs: Vec<usize> = (0..protected.len())
            .filter(|k| protected[*k] && self.protection_hours[*k] > 0)
            .collect();
        jobs.sort_by(|a, b| self.protection_hours[*b].cmp(&self.protection_hours[*a]).then(a.cmp(b)));
        let hours = |k: usize| self.protection_hours[k] as usize;
        fn place(jobs: &[usize], hours: &dyn Fn(usize) -> usize, load: &mut [usize], cap: usize, out: &mut Vec<(usize, usize, usize)>) -> bool {
            let Some((&k, tail)) = jobs.split_first() else {
                return true;
            };
            for n in 0..load.len() {
                if load[..n].contains(&load[n]) || load[n] + hours(k) > cap {
                    continue;
                }
                out.push((k, n, load[n]));
                load[n] += hours(k);
                if place(tail, hours, load, cap, out) {
                    return true;
                }
                load[n] -= hours(k);
                out.pop();
            }
            false
        }
        let mut out = Vec::new();
        let mut load = vec![0; self.teams];
        place(&jobs, &hours, &mut load, self.prep_hours, &mut out).then_some(out)
    }

    /// Complete binary assignment for a protected set, or `None` when the
    /// crews cannot finish it.
    pub fn complete(&self, catalog: &VarCatalog, protected: &[bool]) -> Option<BTreeMap<usize, f64>> {
        let blocks = self.crew_blocks(protected)?;
        let mut a: BTreeMap<usize, f64> = catalog.binaries().map(|j| (j, 0.0)).collect();
        for (k, p) in protected.iter().enumerate() {
            a.insert(catalog.var(VarRole::Theta { k }), if *p { 1.0 } else { 0.0 });
        }
        for (k, n, start) in blocks {
            a.insert(catalog.var(VarRole::CrewStart { n, k, t: start }), 1.0);
            for t in start..start + self.protection_hours[k] as usize {
                a.insert(catalog.var(VarRole::CrewWork { n, k, t }), 1.0);
            }
        }
        for (s, row) in self.failed.iter().enumerate() {
            let up: Vec<bool> = (0..protected.len()).map(|k| protected[k] || !row[k]).collect();
            for (k, u) in up.iter().enumerate() {
                a.insert(catalog.var(VarRole::SubAvail { k, s }), if *u { 1.0 } else { 0.0 });
            }
            for (l, (o, d)) in self.line_subs.iter().enumerate() {
                a.insert(catalog.var(VarRole::LineAvail { l, s }), if up[*o] && up[*d] { 1.0 } else { 0.0 });
            }
        }
        Some(a)
    }
}

impl MilpInstance {
    /// An instance with no variables; used for hand-built problems.
    pub fn empty() -> Self {
        Self {
            catalog: VarCatalog::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
            big_m: Vec::new(),
            warnings: Vec::new(),
            structure: None,
        }
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|(v, c)| c * values[*v]).sum()
    }

    /// Largest bound or constraint violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self
            .catalog
            .entries()
            .iter()
            .zip(values)
            .map(|(e, x)| (e.lower - x).max(x - e.upper).max(0.0));
        let rows = self.constraints.iter().map(|c| c.violation(values));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Checks index ranges, duplicate terms and finiteness.
    pub fn check(&self) -> Result<()> {
        let n = self.catalog.len();
        let in_range = |v: usize, what: &str| -> Result<()> {
            if v >= n {
                return Err(Error::Model(format!("{what} references variable {v} of {n}")));
            }
            Ok(())
        };
        for (v, c) in &self.objective {
            in_range(*v, "objective")?;
            if !c.is_finite() {
                return Err(Error::Model(format!("objective coefficient of {v} is {c}")));
            }
        }
        for con in &self.constraints {
            let mut seen = std::collections::HashSet::new();
            for (v, c) in &con.terms {
                in_range(*v, &con.name)?;
                if !seen.insert(*v) {
                    return Err(Error::Model(format!("{} repeats variable {v}", con.name)));
                }
                if !c.is_finite() {
                    return Err(Error::Model(format!("{} has coefficient {c}", con.name)));
                }
            }
            if !con.rhs.is_finite() {
                return Err(Error::Model(format!("{} has rhs {}", con.name, con.rhs)));
            }
        }
        Ok(())
    }

    /// JSON dump of the catalog and every constraint with its family tag.
    pub fn debug_json(&self) -> serde_json::Value {
        let vars: Vec<serde_json::Value> = self
            .catalog
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut v = serde_json::to_value(e).expect("catalog entry serializes");
                v["index"] = i.into();
                v
            })
            .collect();
        serde_json::json!({
            "variables": vars,
            "objective": self.objective,
            "constraints": self.constraints,
            "big_m": self.big_m,
            "warnings": self.warnings,
        })
    }
}
