//! Plan scoring: expected cost split, hourly recovery simulation, resilience
//! curves, outage metrics, the deterministic baseline and plan comparison.
//!
//! Outage magnitude is the peak MW shed in a scenario and outage time the
//! number of hours with shed above 1e-6 MW; expected values weight each
//! scenario by its probability. Flood onset is hour 0 and a failed,
//! unprotected substation returns at hour `ceil(repair_time)`.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::domain::{CaseModel, MinOutputPolicy};
use crate::error::{Error, Result};
use crate::milp::{self, MilpInstance, VarRole};
use crate::scenario::{all_fail, FailureScenario, ScenarioSet};
use crate::solver::{self, LpStatus, MipOptions, MipStatus};

/// Shed below this many MW does not count as an outage hour.
pub const SHED_TOLERANCE_MW: f64 = 1e-6;

pub const MAGNITUDE_DEFINITION: &str = "peak MW shed over the simulated hours";
pub const TIME_DEFINITION: &str = "hours with more than 1e-6 MW shed";

/// A protection choice with its crew schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    /// Protected substation ids in case order.
    pub protected: Vec<String>,
    /// `schedule[team][prep hour]`: substation worked on, if any.
    pub schedule: Vec<Vec<Option<String>>>,
}

/// Contiguous stretch of work by one team at one substation. Team and hour
/// are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrewBlock {
    pub team: usize,
    pub substation: String,
    pub first_hour: usize,
    pub hours: usize,
}

impl Plan {
    /// Protects nothing; every crew idles.
    pub fn empty(case: &CaseModel) -> Self {
        Self {
            protected: Vec::new(),
            schedule: vec![vec![None; case.crew.prep_hours as usize]; case.crew.num_teams as usize],
        }
    }

    /// Reads θ and the crew grid off a solution of a built instance.
    pub fn from_solution(case: &CaseModel, instance: &MilpInstance, values: &[f64]) -> Self {
        let cat = &instance.catalog;
        let protected = case
            .substations
            .iter()
            .enumerate()
            .filter(|(k, _)| values[cat.var(VarRole::Theta { k: *k })] > 0.5)
            .map(|(_, s)| s.id.clone())
            .collect();
        let mut plan = Self::empty(case);
        plan.protected = protected;
        for (n, row) in plan.schedule.iter_mut().enumerate() {
            for (t, cell) in row.iter_mut().enumerate() {
                *cell = case
                    .substations
                    .iter()
                    .enumerate()
                    .find(|(k, _)| values[cat.var(VarRole::CrewWork { n, k: *k, t })] > 0.5)
                    .map(|(_, s)| s.id.clone());
            }
        }
        plan
    }

    /// Protects the given substations with a crew schedule built by exact
    /// packing, or fails with the crew cover family when none exists.
    pub fn with_protection(case: &CaseModel, protected: &[bool]) -> Result<Self> {
        let tau = case.protection_times()?;
        let structure = milp::PlanStructure {
            protection_hours: tau,
            teams: case.crew.num_teams as usize,
            prep_hours: case.crew.prep_hours as usize,
            failed: Vec::new(),
            line_subs: Vec::new(),
        };
        let blocks = structure
            .crew_blocks(protected)
            .ok_or_else(|| Error::Infeasible(vec![milp::Family::CrewCover.tag().into()]))?;
        let mut plan = Self::empty(case);
        plan.protected = case
            .substations
            .iter()
            .zip(protected)
            .filter(|(_, p)| **p)
            .map(|(s, _)| s.id.clone())
            .collect();
        for (k, n, start) in blocks {
            for t in start..start + structure.protection_hours[k] as usize {
                plan.schedule[n][t] = Some(case.substations[k].id.clone());
            }
        }
        Ok(plan)
    }

    /// θ in case order.
    pub fn theta(&self, case: &CaseModel) -> Vec<bool> {
        case.substations
            .iter()
            .map(|s| self.protected.contains(&s.id))
            .collect()
    }

    pub fn blocks(&self) -> Vec<CrewBlock> {
        let mut out = Vec::new();
        for (n, row) in self.schedule.iter().enumerate() {
            let mut t = 0;
            while t < row.len() {
                let Some(site) = &row[t] else {
                    t += 1;
                    continue;
                };
                let start = t;
                while t < row.len() && row[t].as_ref() == Some(site) {
                    t += 1;
                }
                out.push(CrewBlock {
                    team: n + 1,
                    substation: site.clone(),
                    first_hour: start + 1,
                    hours: t - start,
                });
            }
        }
        out
    }

    /// Binary assignment of the plan on a built instance: θ, the crew grid,
    /// a start at the first hour of every block, and availability implied by
    /// θ and the scenario failures.
    pub fn assignment(&self, case: &CaseModel, instance: &MilpInstance) -> Result<BTreeMap<usize, f64>> {
        let structure = instance
            .structure
            .as_ref()
            .ok_or_else(|| Error::Model("instance has no planning structure".into()))?;
        let cat = &instance.catalog;
        for id in self.protected.iter().chain(self.schedule.iter().flatten().flatten()) {
            if !case.substations.iter().any(|s| &s.id == id) {
                return Err(Error::Model(format!("plan names unknown substation {id}")));
            }
        }
        if self.schedule.len() != structure.teams || self.schedule.iter().any(|r| r.len() != structure.prep_hours) {
            return Err(Error::Model(format!(
                "schedule must be {} teams by {} hours",
                structure.teams, structure.prep_hours
            )));
        }
        let theta = self.theta(case);
        let mut a: BTreeMap<usize, f64> = cat.binaries().map(|j| (j, 0.0)).collect();
        for (k, p) in theta.iter().enumerate() {
            a.insert(cat.var(VarRole::Theta { k }), f64::from(u8::from(*p)));
        }
        let index: HashMap<&str, usize> = case.substations.iter().enumerate().map(|(k, s)| (s.id.as_str(), k)).collect();
        for (n, row) in self.schedule.iter().enumerate() {
            for (t, cell) in row.iter().enumerate() {
                if let Some(site) = cell {
                    let k = index[site.as_str()];
                    a.insert(cat.var(VarRole::CrewWork { n, k, t }), 1.0);
                    if t == 0 || row[t - 1].as_ref() != Some(site) {
                        a.insert(cat.var(VarRole::CrewStart { n, k, t }), 1.0);
                    }
                }
            }
        }
        for (s, failed) in structure.failed.iter().enumerate() {
            let up: Vec<bool> = (0..theta.len()).map(|k| theta[k] || !failed[k]).collect();
            for (k, u) in up.iter().enumerate() {
                a.insert(cat.var(VarRole::SubAvail { k, s }), f64::from(u8::from(*u)));
            }
            for (l, (o, d)) in structure.line_subs.iter().enumerate() {
                a.insert(cat.var(VarRole::LineAvail { l, s }), f64::from(u8::from(up[*o] && up[*d])));
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveSample {
    pub hour: usize,
    pub demand_mw: f64,
    pub served_mw: f64,
    pub served_fraction: f64,
}

impl CurveSample {
    fn new(hour: usize, demand_mw: f64, served_mw: f64) -> Self {
        let served_fraction = if demand_mw > 0.0 { served_mw / demand_mw } else { 1.0 };
        Self {
            hour,
            demand_mw,
            served_mw,
            served_fraction,
        }
    }

    pub fn shed_mw(&self) -> f64 {
        self.demand_mw - self.served_mw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioCurve {
    pub id: String,
    pub probability: f64,
    pub samples: Vec<CurveSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResilienceCurve {
    pub scenarios: Vec<ScenarioCurve>,
    /// Probability-weighted curve.
    pub expected: Vec<CurveSample>,
}

impl ResilienceCurve {
    /// Builds the expected curve from per-scenario curves of equal length.
    pub fn from_scenarios(scenarios: Vec<ScenarioCurve>) -> Result<Self> {
        let len = scenarios.first().map_or(0, |c| c.samples.len());
        if scenarios.iter().any(|c| c.samples.len() != len) {
            return Err(Error::Model("scenario curves differ in length".into()));
        }
        let expected = (0..len)
            .map(|h| {
                let demand = scenarios.iter().map(|c| c.probability * c.samples[h].demand_mw).sum();
                let served = scenarios.iter().map(|c| c.probability * c.samples[h].served_mw).sum();
                CurveSample::new(scenarios[0].samples[h].hour, demand, served)
            })
            .collect();
        Ok(Self { scenarios, expected })
    }

    /// CSV with one row per scenario and hour, followed by the expected
    /// curve under scenario id `expected`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["scenario_id", "hour", "demand_mw", "served_mw"]).map_err(io)?;
        let rows = self
            .scenarios
            .iter()
            .map(|c| (c.id.as_str(), &c.samples))
            .chain([("expected", &self.expected)]);
        for (id, samples) in rows {
            for s in samples {
                w.write_record([id.to_string(), s.hour.to_string(), s.demand_mw.to_string(), s.served_mw.to_string()])
                    .map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Hours simulated for a failure pattern: the operating horizon, extended so
/// the last repair completes inside the series.
pub fn simulation_hours(case: &CaseModel, failed: &[bool], protected: &[bool]) -> usize {
    case.substations
        .iter()
        .enumerate()
        .filter(|(k, _)| failed[*k] && !protected[*k])
        .map(|(_, s)| s.repair_time.ceil() as usize + 1)
        .fold(case.operating_horizon, usize::max)
}

/// Substations in service at `hour` after flood onset.
pub fn available_at(case: &CaseModel, failed: &[bool], protected: &[bool], hour: usize) -> Vec<bool> {
    case.substations
        .iter()
        .enumerate()
        .map(|(k, s)| !(failed[k] && !protected[k] && (hour as f64) < s.repair_time))
        .collect()
}

/// Memoized single-hour dispatch results keyed by availability and demand.
#[derive(Default)]
pub struct DispatchCache {
    served: HashMap<(Vec<bool>, Vec<u64>), f64>,
}

impl DispatchCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load served by an optimal single-hour dispatch. When the case
    /// enforces generator minimum output and that makes the hour infeasible,
    /// the minimum is dropped for that hour.
    pub fn served(&mut self, case: &CaseModel, available: &[bool], hour: usize) -> Result<f64> {
        let demand: Vec<u64> = (0..case.buses.len()).map(|i| case.demand(i, hour).to_bits()).collect();
        let key = (available.to_vec(), demand);
        if let Some(v) = self.served.get(&key) {
            return Ok(*v);
        }
        let mut policies = vec![case.min_output];
        if case.min_output == MinOutputPolicy::Enforced {
            policies.push(MinOutputPolicy::Relaxed);
        }
        for policy in policies {
            let inst = milp::build_dispatch(case, available, hour, policy)?;
            let r = solver::solve_lp(&inst);
            match r.status {
                LpStatus::Optimal => {
                    let shed: f64 = (0..case.buses.len())
                        .map(|i| r.values[inst.catalog.var(VarRole::Shed { i, s: 0, t: 0 })])
                        .sum();
                    let total = case.total_demand(hour);
                    let served = (total - shed).clamp(0.0, total);
                    self.served.insert(key, served);
                    return Ok(served);
                }
                LpStatus::Infeasible if policy == MinOutputPolicy::Enforced => {
                    log::warn!("hour {hour}: minimum generator output infeasible, dispatching without it");
                }
                other => return Err(Error::Solver(format!("single-hour dispatch ended with {other:?}"))),
            }
        }
        Err(Error::Solver("single-hour dispatch infeasible".into()))
    }
}

/// Hourly served load through the flood and its repairs over `hours` hours.
pub fn recovery_series(
    case: &CaseModel,
    failed: &[bool],
    protected: &[bool],
    hours: usize,
    cache: &mut DispatchCache,
) -> Result<Vec<CurveSample>> {
    (0..hours)
        .map(|h| {
            let available = available_at(case, failed, protected, h);
            let served = cache.served(case, &available, h)?;
            Ok(CurveSample::new(h, case.total_demand(h), served))
        })
        .collect()
}

/// Hourly served load for one scenario under protection `protected` (case
/// order), until the last repair completes.
pub fn recovery_simulation(case: &CaseModel, scenario: &FailureScenario, protected: &[bool]) -> Result<Vec<CurveSample>> {
    let failed = failure_row(case, scenario)?;
    let hours = simulation_hours(case, &failed, protected);
    recovery_series(case, &failed, protected, hours, &mut DispatchCache::new())
}

fn failure_row(case: &CaseModel, scenario: &FailureScenario) -> Result<Vec<bool>> {
    for id in scenario.failed.keys() {
        if !case.substations.iter().any(|s| &s.id == id) {
            return Err(Error::Scenario(format!("scenario {} names unknown substation {id}", scenario.id)));
        }
    }
    Ok(case.substations.iter().map(|s| scenario.fails(&s.id)).collect())
}

/// Resilience curves of every scenario over a common length.
pub fn resilience_curve(case: &CaseModel, scenarios: &ScenarioSet, protected: &[bool]) -> Result<ResilienceCurve> {
    let rows: Vec<Vec<bool>> = scenarios
        .scenarios
        .iter()
        .map(|s| failure_row(case, s))
        .collect::<Result<_>>()?;
    let hours = rows
        .iter()
        .map(|f| simulation_hours(case, f, protected))
        .max()
        .unwrap_or(case.operating_horizon);
    let mut cache = DispatchCache::new();
    let curves = scenarios
        .scenarios
        .iter()
        .zip(&rows)
        .map(|(s, f)| {
            Ok(ScenarioCurve {
                id: s.id.clone(),
                probability: s.probability,
                samples: recovery_series(case, f, protected, hours, &mut cache)?,
            })
        })
        .collect::<Result<_>>()?;
    ResilienceCurve::from_scenarios(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutage {
    pub id: String,
    pub probability: f64,
    pub magnitude_mw: f64,
    pub time_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageMetrics {
    pub scenarios: Vec<ScenarioOutage>,
    pub expected_magnitude_mw: f64,
    pub expected_time_h: f64,
}

pub fn outage_metrics(curve: &ResilienceCurve) -> OutageMetrics {
    let scenarios: Vec<ScenarioOutage> = curve
        .scenarios
        .iter()
        .map(|c| ScenarioOutage {
            id: c.id.clone(),
            probability: c.probability,
            magnitude_mw: c.samples.iter().map(|s| s.shed_mw()).fold(0.0, f64::max),
            time_h: c.samples.iter().filter(|s| s.shed_mw() > SHED_TOLERANCE_MW).count() as f64,
        })
        .collect();
    OutageMetrics {
        expected_magnitude_mw: scenarios.iter().map(|s| s.probability * s.magnitude_mw).sum(),
        expected_time_h: scenarios.iter().map(|s| s.probability * s.time_h).sum(),
        scenarios,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSplit {
    pub total: f64,
    /// Probability-weighted dam and damage cost of the substations.
    pub substation: f64,
    /// Expected value of lost load over the operating horizon.
    pub energy_not_supplied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioDetail {
    pub id: String,
    pub probability: f64,
    pub failed: Vec<String>,
    /// Failed and unprotected substations.
    pub out_of_service: Vec<String>,
    /// Energy shed over the operating horizon while out-of-service
    /// substations stay down.
    pub shed_mwh: f64,
    pub outage_magnitude_mw: f64,
    pub outage_time_h: f64,
}

/// Result of running the planning MILP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub status: MipStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub label: String,
    pub protected: Vec<String>,
    pub schedule: Vec<Vec<Option<String>>>,
    pub crew_blocks: Vec<CrewBlock>,
    pub expected_cost: CostSplit,
    pub expected_outage_magnitude_mw: f64,
    pub expected_outage_time_h: f64,
    pub outage_magnitude_definition: &'static str,
    pub outage_time_definition: &'static str,
    pub repair_note: &'static str,
    pub scenarios: Vec<ScenarioDetail>,
    pub curve: ResilienceCurve,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Sensitivity>,
}

/// Scores `plan` on `scenarios`: the fixed-plan optimum of the stochastic
/// objective, split into substation and lost-load parts, plus recovery curves
/// and outage metrics.
pub fn evaluate_plan(case: &CaseModel, scenarios: &ScenarioSet, plan: &Plan, label: &str) -> Result<PlanReport> {
    let instance = milp::build(case, scenarios)?;
    let assignment = plan.assignment(case, &instance)?;
    let check = solver::warm_start_check(&instance, &assignment)?;
    let values = match (check.feasible, check.values) {
        (true, Some(v)) => v,
        _ => return Err(Error::Infeasible(check.violated.iter().map(|f| f.tag().to_string()).collect())),
    };
    let cat = &instance.catalog;
    let probs = scenarios.probabilities();
    let fail = scenarios.failure_matrix(case)?;
    let theta = plan.theta(case);

    let substation: f64 = (0..case.substations.len())
        .map(|k| {
            let weight: f64 = (0..scenarios.len()).filter(|s| fail[*s][k]).map(|s| probs[s]).sum();
            weight * values[cat.var(VarRole::Beta { k })]
        })
        .sum();
    let shed_mwh: Vec<f64> = (0..scenarios.len())
        .map(|s| {
            (0..case.operating_horizon)
                .flat_map(|t| (0..case.buses.len()).map(move |i| (i, t)))
                .map(|(i, t)| values[cat.var(VarRole::Shed { i, s, t })])
                .sum()
        })
        .collect();
    let energy_not_supplied: f64 = (0..scenarios.len()).map(|s| probs[s] * case.costs.voll * shed_mwh[s]).sum();

    let curve = resilience_curve(case, scenarios, &theta)?;
    let metrics = outage_metrics(&curve);
    let details = scenarios
        .scenarios
        .iter()
        .enumerate()
        .map(|(s, sc)| ScenarioDetail {
            id: sc.id.clone(),
            probability: sc.probability,
            failed: sc.failed_ids().iter().map(|x| x.to_string()).collect(),
            out_of_service: case
                .substations
                .iter()
                .enumerate()
                .filter(|(k, _)| fail[s][*k] && !theta[*k])
                .map(|(_, x)| x.id.clone())
                .collect(),
            shed_mwh: shed_mwh[s],
            outage_magnitude_mw: metrics.scenarios[s].magnitude_mw,
            outage_time_h: metrics.scenarios[s].time_h,
        })
        .collect();

    Ok(PlanReport {
        label: label.to_string(),
        protected: plan.protected.clone(),
        schedule: plan.schedule.clone(),
        crew_blocks: plan.blocks(),
        expected_cost: CostSplit {
            total: substation + energy_not_supplied,
            substation,
            energy_not_supplied,
        },
        expected_outage_magnitude_mw: metrics.expected_magnitude_mw,
        expected_outage_time_h: metrics.expected_time_h,
        outage_magnitude_definition: MAGNITUDE_DEFINITION,
        outage_time_definition: TIME_DEFINITION,
        repair_note: "repair times are rounded up to whole hours; a repaired substation returns at hour ceil(repair_time)",
        scenarios: details,
        curve,
        solve: None,
        sensitivity: None,
    })
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub summary: SolveSummary,
    pub warnings: Vec<String>,
}

/// Solves the planning MILP and extracts the plan.
pub fn solve_plan(case: &CaseModel, scenarios: &ScenarioSet, options: &MipOptions) -> Result<PlanOutcome> {
    let instance = milp::build(case, scenarios)?;
    let r = solver::solve_mip(&instance, options);
    let summary = SolveSummary {
        status: r.status,
        objective: r.objective,
        best_bound: r.best_bound,
        gap: r.gap,
        nodes: r.nodes,
    };
    match (r.status, &r.values) {
        (_, Some(values)) => Ok(PlanOutcome {
            plan: Plan::from_solution(case, &instance, values),
            summary,
            warnings: instance.warnings.clone(),
        }),
        (MipStatus::Infeasible, None) => Err(Error::Infeasible(
            solver::infeasible_families(&instance).iter().map(|f| f.tag().to_string()).collect(),
        )),
        (MipStatus::NodeLimit, None) => Err(Error::Limit(format!(
            "node limit {} reached without a feasible plan",
            options.node_limit
        ))),
        (status, None) => Err(Error::Solver(format!("branch-and-bound ended with {status:?}"))),
    }
}

/// Plan chosen when every substation is assumed to fail for certain; damage
/// costs and crew limits are kept.
pub fn deterministic_baseline(case: &CaseModel, options: &MipOptions) -> Result<PlanOutcome> {
    solve_plan(case, &all_fail(case), options)
}

/// `plan − reference`, and the same relative to the reference in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta {
    pub plan: f64,
    pub reference: f64,
    pub absolute: f64,
    /// `None` when the reference is zero and the plan is not.
    pub percent: Option<f64>,
}

impl Delta {
    pub fn new(plan: f64, reference: f64) -> Self {
        let absolute = plan - reference;
        let percent = if reference != 0.0 {
            Some(100.0 * absolute / reference)
        } else if absolute == 0.0 {
            Some(0.0)
        } else {
            None
        };
        Self {
            plan,
            reference,
            absolute,
            percent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub expected_cost: Delta,
    pub substation_cost: Delta,
    pub energy_not_supplied_cost: Delta,
    pub outage_magnitude_mw: Delta,
    pub outage_time_h: Delta,
    pub plan: PlanReport,
    pub reference: PlanReport,
}

/// Evaluates both plans on the same scenario set and reports the deltas of
/// `plan` against `reference`.
pub fn compare_plans(case: &CaseModel, scenarios: &ScenarioSet, plan: &Plan, reference: &Plan) -> Result<Comparison> {
    let a = evaluate_plan(case, scenarios, plan, "plan")?;
    let b = evaluate_plan(case, scenarios, reference, "reference")?;
    Ok(compare_reports(&a, &b))
}

/// Deltas between two reports evaluated on the same scenario set.
pub fn compare_reports(a: &PlanReport, b: &PlanReport) -> Comparison {
    Comparison {
        expected_cost: Delta::new(a.expected_cost.total, b.expected_cost.total),
        substation_cost: Delta::new(a.expected_cost.substation, b.expected_cost.substation),
        energy_not_supplied_cost: Delta::new(a.expected_cost.energy_not_supplied, b.expected_cost.energy_not_supplied),
        outage_magnitude_mw: Delta::new(a.expected_outage_magnitude_mw, b.expected_outage_magnitude_mw),
        outage_time_h: Delta::new(a.expected_outage_time_h, b.expected_outage_time_h),
        plan: a.clone(),
        reference: b.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityEntry {
    pub parameter: String,
    pub factor: f64,
    pub protected: Vec<String>,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sensitivity {
    pub note: String,
    pub entries: Vec<SensitivityEntry>,
}

/// Parameters scaled by the sensitivity scan.
pub const SENSITIVITY_PARAMETERS: [&str; 5] =
    ["voll", "tiger_dam_cost", "operating_horizon", "line_capacity", "line_susceptance"];

/// Copy of `case` with one parameter scaled by `factor`.
pub fn scaled_case(case: &CaseModel, parameter: &str, factor: f64) -> Result<CaseModel> {
    let mut c = case.clone();
    match parameter {
        "voll" => c.costs.voll *= factor,
        "tiger_dam_cost" => c.substations.iter_mut().for_each(|s| s.tiger_dam_cost *= factor),
        "operating_horizon" => c.set_horizon(((c.operating_horizon as f64 * factor).round() as usize).max(1)),
        "line_capacity" => c.lines.iter_mut().for_each(|l| l.capacity *= factor),
        "line_susceptance" => c.lines.iter_mut().for_each(|l| l.susceptance *= factor),
        other => return Err(Error::Model(format!("unknown sensitivity parameter {other}"))),
    }
    Ok(c)
}

/// Re-solves with each of [`SENSITIVITY_PARAMETERS`] at ×0.5 and ×1.5 and
/// lists which perturbations change the protected set.
pub fn protection_sensitivity(
    case: &CaseModel,
    scenarios: &ScenarioSet,
    base: &[String],
    options: &MipOptions,
) -> Result<Sensitivity> {
    let mut entries = Vec::new();
    for parameter in SENSITIVITY_PARAMETERS {
        for factor in [0.5, 1.5] {
            let c = scaled_case(case, parameter, factor)?;
            let out = solve_plan(&c, scenarios, options)?;
            entries.push(SensitivityEntry {
                parameter: parameter.to_string(),
                factor,
                changed: out.plan.protected != base,
                protected: out.plan.protected,
            });
        }
    }
    let changed: Vec<String> = entries
        .iter()
        .filter(|e| e.changed)
        .map(|e| format!("{} x{} -> {{{}}}", e.parameter, e.factor, e.protected.join(",")))
        .collect();
    let note = if changed.is_empty() {
        format!("no ±50% change of {} alters the protected set", SENSITIVITY_PARAMETERS.join(", "))
    } else {
        format!("protected set changes under: {}", changed.join("; "))
    };
    Ok(Sensitivity { note, entries })
}
