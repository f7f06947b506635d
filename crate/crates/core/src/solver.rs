//! LP relaxations and best-bound branch-and-bound for [`MilpInstance`]s.
//!
//! Relaxations are solved by the bounded-variable sparse simplex of the
//! `microlp` crate. Child nodes re-optimize from their parent's basis after a
//! single variable fix, so a node costs a handful of dual simplex pivots.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::milp::{Family, MilpInstance, PlanStructure, Sense, VarKind, VarRole};

/// Distance from {0, 1} within which a binary counts as integral.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-6;
/// Constraint tolerance used when auditing solutions.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    /// Primal values in catalog order; empty unless optimal.
    pub values: Vec<f64>,
    pub iterations: u64,
}

impl LpResult {
    fn failed(status: LpStatus) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            iterations: 0,
        }
    }
}

struct LpModel {
    solution: microlp::Solution,
    vars: Vec<Variable>,
}

fn sense_op(s: Sense) -> ComparisonOp {
    match s {
        Sense::Le => ComparisonOp::Le,
        Sense::Ge => ComparisonOp::Ge,
        Sense::Eq => ComparisonOp::Eq,
    }
}

fn map_lp_error(e: microlp::Error) -> LpStatus {
    match e {
        microlp::Error::Infeasible => LpStatus::Infeasible,
        microlp::Error::Unbounded => LpStatus::Unbounded,
        _ => LpStatus::NumericalFailure,
    }
}

fn guarded<T>(f: impl FnOnce() -> std::result::Result<T, LpStatus>) -> std::result::Result<T, LpStatus> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(Err(LpStatus::NumericalFailure))
}

fn outcome_solution(o: microlp::SolveOutcome) -> std::result::Result<microlp::Solution, LpStatus> {
    o.into_solution().map_err(|_| LpStatus::NumericalFailure)
}

/// Solves the relaxation of `instance` with per-variable bound overrides,
/// skipping the rows in `skip`.
fn relaxation(
    instance: &MilpInstance,
    lower: &[f64],
    upper: &[f64],
    skip: &dyn Fn(usize) -> bool,
) -> std::result::Result<LpModel, LpStatus> {
    for (j, (lo, hi)) in lower.iter().zip(upper).enumerate() {
        if lo > hi {
            log::debug!("variable {j} has empty bounds [{lo}, {hi}]");
            return Err(LpStatus::Infeasible);
        }
    }
    let mut obj = vec![0.0; instance.catalog.len()];
    for (v, c) in &instance.objective {
        obj[*v] += c;
    }
    guarded(|| {
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<Variable> = (0..obj.len())
            .map(|j| p.add_var(obj[j], (lower[j], upper[j])))
            .collect();
        for (r, con) in instance.constraints.iter().enumerate() {
            if skip(r) {
                continue;
            }
            if con.terms.is_empty() {
                if con.violation(&[]) > FEASIBILITY_TOLERANCE {
                    return Err(LpStatus::Infeasible);
                }
                continue;
            }
            let expr: LinearExpr = con.terms.iter().map(|(v, c)| (vars[*v], *c)).collect();
            p.add_constraint(expr, sense_op(con.sense), con.rhs);
        }
        let solution = outcome_solution(p.solve().map_err(map_lp_error)?)?;
        Ok(LpModel { solution, vars })
    })
}

fn extract(model: &LpModel) -> LpResult {
    LpResult {
        status: LpStatus::Optimal,
        objective: model.solution.objective(),
        values: model.vars.iter().map(|v| model.solution.var_value_raw(*v)).collect(),
        iterations: model.solution.stats().lp_iterations,
    }
}

fn catalog_bounds(instance: &MilpInstance) -> (Vec<f64>, Vec<f64>) {
    instance
        .catalog
        .entries()
        .iter()
        .map(|e| (e.lower, e.upper))
        .unzip()
}

/// Solves `instance` with integrality relaxed.
pub fn solve_lp(instance: &MilpInstance) -> LpResult {
    let (lo, hi) = catalog_bounds(instance);
    solve_lp_bounded(instance, &lo, &hi)
}

/// Solves the relaxation with explicit variable bounds.
pub fn solve_lp_bounded(instance: &MilpInstance, lower: &[f64], upper: &[f64]) -> LpResult {
    match relaxation(instance, lower, upper, &|_| false) {
        Ok(m) => extract(&m),
        Err(s) => LpResult::failed(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    Optimal,
    Infeasible,
    NodeLimit,
    /// The relaxation is unbounded: a modelling error for planning instances,
    /// whose variables are all boxed.
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy)]
pub struct MipOptions {
    pub node_limit: usize,
    /// Relative gap `(incumbent − bound) / max(1, |incumbent|)` at which the
    /// search stops.
    pub gap_tolerance: f64,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            node_limit: 200_000,
            gap_tolerance: 1e-6,
        }
    }
}

/// One explored node.
#[derive(Debug, Clone, Serialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// LP objective of the node, `None` when its relaxation is infeasible.
    pub lp_objective: Option<f64>,
    pub parent_objective: Option<f64>,
    /// Global lower bound when the node was selected.
    pub bound: f64,
    pub incumbent: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MipResult {
    pub status: MipStatus,
    /// Incumbent objective, `+∞` when there is none.
    pub objective: f64,
    /// Incumbent assignment with binaries rounded to exact 0/1.
    pub values: Option<Vec<f64>>,
    pub best_bound: f64,
    pub nodes: usize,
    pub gap: f64,
    pub trace: Vec<NodeRecord>,
}

impl MipResult {
    pub fn has_incumbent(&self) -> bool {
        self.values.is_some()
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if incumbent.is_infinite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

struct Node {
    /// Quantized parent LP objective.
    key: i64,
    bound: f64,
    seq: usize,
    depth: usize,
    parent_id: usize,
    parent: Rc<LpModel>,
    fix: (usize, f64),
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: lowest bound first, then most recently inserted
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key).then(self.seq.cmp(&other.seq))
    }
}

/// Picks the most fractional binary of the lowest branching class; ties go
/// to the lowest catalog index.
fn branching_variable(instance: &MilpInstance, values: &[f64]) -> Option<usize> {
    let mut best: Option<(u8, f64, usize)> = None;
    for j in instance.catalog.binaries() {
        let x = values[j];
        let frac = (x - x.floor()).min(x.ceil() - x);
        if frac <= INTEGRALITY_TOLERANCE {
            continue;
        }
        let class = instance.catalog.get(j).role.branch_class();
        let better = match best {
            None => true,
            Some((bc, bf, _)) => class < bc || (class == bc && frac > bf),
        };
        if better {
            best = Some((class, frac, j));
        }
    }
    best.map(|b| b.2)
}

fn lp_values(model: &LpModel) -> Vec<f64> {
    model.vars.iter().map(|v| model.solution.var_value_raw(*v)).collect()
}

/// Rounding dive from a node: fixes the branching variable to its nearest
/// value (the other value if that is infeasible) and re-solves until the LP
/// solution is integral. Returns the objective and values of the leaf.
fn dive(instance: &MilpInstance, start: &LpModel, cutoff: f64) -> Option<(f64, Vec<f64>)> {
    let mut solution = start.solution.clone();
    let mut values = lp_values(start);
    loop {
        if solution.objective() >= cutoff {
            return None;
        }
        let Some(j) = branching_variable(instance, &values) else {
            round_binaries(instance, &mut values);
            return Some((solution.objective(), values));
        };
        let near = values[j].round();
        let mut next = None;
        for val in [near, 1.0 - near] {
            let attempt = guarded(|| outcome_solution(solution.clone().fix_var(start.vars[j], val).map_err(map_lp_error)?));
            if let Ok(sol) = attempt {
                next = Some(sol);
                break;
            }
        }
        solution = next?;
        values = start.vars.iter().map(|v| solution.var_value_raw(*v)).collect();
    }
}

/// Protects the sites whose protection binary is set in `values`, schedules
/// the crews and solves the dispatch LP with every binary fixed.
fn complete_plan(instance: &MilpInstance, plan: &PlanStructure, values: &[f64], cutoff: f64) -> Option<(f64, Vec<f64>)> {
    let protected: Vec<bool> = (0..plan.protection_hours.len())
        .map(|k| values[instance.catalog.var(VarRole::Theta { k })] > 0.5)
        .collect();
    let assignment = plan.complete(&instance.catalog, &protected)?;
    let (mut lo, mut hi) = catalog_bounds(instance);
    for (j, v) in &assignment {
        lo[*j] = *v;
        hi[*j] = *v;
    }
    let model = relaxation(instance, &lo, &hi, &|_| false).ok()?;
    let r = extract(&model);
    (r.objective < cutoff).then(|| {
        let mut v = r.values;
        round_binaries(instance, &mut v);
        (r.objective, v)
    })
}

/// Rounds every binary within tolerance to exactly 0 or 1.
pub fn round_binaries(instance: &MilpInstance, values: &mut [f64]) {
    for j in instance.catalog.binaries() {
        let r = values[j].round();
        if (values[j] - r).abs() <= INTEGRALITY_TOLERANCE {
            values[j] = r;
        }
    }
}

pub fn solve_mip(instance: &MilpInstance, options: &MipOptions) -> MipResult {
    solve_mip_logged(instance, options, None)
}

/// Branch-and-bound with best-bound node selection. When `log` is given one
/// line per node is written: id, depth, LP objective, global bound, incumbent.
pub fn solve_mip_logged(instance: &MilpInstance, options: &MipOptions, mut log: Option<&mut dyn Write>) -> MipResult {
    let (lo, hi) = catalog_bounds(instance);
    let mut trace = Vec::new();
    let root = match relaxation(instance, &lo, &hi, &|_| false) {
        Ok(m) => Rc::new(m),
        Err(s) => {
            let status = match s {
                LpStatus::Infeasible => MipStatus::Infeasible,
                LpStatus::Unbounded => MipStatus::Unbounded,
                _ => MipStatus::NumericalFailure,
            };
            return MipResult {
                status,
                objective: f64::INFINITY,
                values: None,
                best_bound: f64::INFINITY,
                nodes: 1,
                gap: f64::INFINITY,
                trace,
            };
        }
    };
    let root_obj = root.solution.objective();
    let tick = 1e-9 * root_obj.abs().max(1.0);
    let quantize = |x: f64| (x / tick).round() as i64;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut numerical_trouble = false;

    let top_class = instance
        .catalog
        .binaries()
        .map(|j| instance.catalog.get(j).role.branch_class())
        .min()
        .unwrap_or(0);
    let leading: Vec<usize> = instance
        .catalog
        .binaries()
        .filter(|j| instance.catalog.get(*j).role.branch_class() == top_class)
        .collect();
    let mut dived: HashSet<Vec<bool>> = HashSet::new();

    // processes an evaluated node: records it, updates the incumbent or branches
    let expand = |model: Rc<LpModel>,
                      id: usize,
                      depth: usize,
                      heap: &mut BinaryHeap<Node>,
                      incumbent: &mut Option<(f64, Vec<f64>)>,
                      seq: &mut usize,
                      dived: &mut HashSet<Vec<bool>>| {
        let obj = model.solution.objective();
        let mut values = lp_values(&model);
        if let Some((inc, _)) = incumbent {
            if obj >= *inc - options.gap_tolerance * inc.abs().max(1.0) {
                return;
            }
        }
        match branching_variable(instance, &values) {
            None => {
                round_binaries(instance, &mut values);
                *incumbent = Some((obj, values));
            }
            Some(j) => {
                let class = instance.catalog.get(j).role.branch_class();
                if class > top_class {
                    // the leading binaries are integral: dive once per pattern
                    let pattern: Vec<bool> = leading.iter().map(|v| values[*v] > 0.5).collect();
                    if dived.insert(pattern) {
                        let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |i| i.0);
                        let found = match &instance.structure {
                            Some(plan) => complete_plan(instance, plan, &values, cutoff),
                            None => dive(instance, &model, cutoff),
                        };
                        if let Some(found) = found {
                            *incumbent = Some(found);
                        }
                    }
                }
                for val in [0.0, 1.0] {
                    *seq += 1;
                    heap.push(Node {
                        key: quantize(obj),
                        bound: obj,
                        seq: *seq,
                        depth: depth + 1,
                        parent_id: id,
                        parent: Rc::clone(&model),
                        fix: (j, val),
                    });
                }
            }
        }
    };

    nodes += 1;
    let root_bound = root_obj;
    trace.push(NodeRecord {
        id: 0,
        parent: None,
        depth: 0,
        lp_objective: Some(root_obj),
        parent_objective: None,
        bound: root_bound,
        incumbent: None,
    });
    if let Some(w) = log.as_deref_mut() {
        let _ = writeln!(w, "node 0 depth 0 lp {root_obj} bound {root_bound} incumbent -");
    }
    expand(root, 0, 0, &mut heap, &mut incumbent, &mut seq, &mut dived);

    let mut status = MipStatus::Optimal;
    while let Some(node) = heap.pop() {
        let bound = node.bound;
        if let Some((inc, _)) = &incumbent {
            if bound >= *inc - options.gap_tolerance * inc.abs().max(1.0) {
                heap.clear();
                break;
            }
        }
        if nodes >= options.node_limit {
            heap.push(node);
            status = MipStatus::NodeLimit;
            break;
        }
        let id = nodes;
        nodes += 1;
        let (j, val) = node.fix;
        let child = guarded(|| {
            let sol = node.parent.solution.clone();
            let outcome = sol.fix_var(node.parent.vars[j], val).map_err(map_lp_error)?;
            Ok(outcome_solution(outcome)?)
        });
        let lp_objective = child.as_ref().ok().map(|s| s.objective());
        let inc_obj = incumbent.as_ref().map(|i| i.0);
        trace.push(NodeRecord {
            id,
            parent: Some(node.parent_id),
            depth: node.depth,
            lp_objective,
            parent_objective: Some(node.bound),
            bound,
            incumbent: inc_obj,
        });
        if let Some(w) = log.as_deref_mut() {
            let lp = lp_objective.map_or("infeasible".to_string(), |x| x.to_string());
            let inc = inc_obj.map_or("-".to_string(), |x| x.to_string());
            let _ = writeln!(w, "node {id} depth {} lp {lp} bound {bound} incumbent {inc}", node.depth);
        }
        match child {
            Ok(solution) => {
                let model = Rc::new(LpModel {
                    solution,
                    vars: node.parent.vars.clone(),
                });
                expand(model, id, node.depth, &mut heap, &mut incumbent, &mut seq, &mut dived);
            }
            Err(LpStatus::Infeasible) => {}
            Err(_) => numerical_trouble = true,
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((obj, values)) => {
            let best_bound = open_bound.min(obj);
            MipResult {
                status,
                objective: obj,
                values: Some(values),
                best_bound,
                nodes,
                gap: relative_gap(obj, best_bound),
                trace,
            }
        }
        None => MipResult {
            status: match status {
                MipStatus::NodeLimit => MipStatus::NodeLimit,
                _ if numerical_trouble => MipStatus::NumericalFailure,
                _ => MipStatus::Infeasible,
            },
            objective: f64::INFINITY,
            values: None,
            best_bound: open_bound,
            nodes,
            gap: f64::INFINITY,
            trace,
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub objective: Option<f64>,
    /// Families implicated in an infeasibility, sorted.
    pub violated: Vec<Family>,
    #[serde(skip)]
    pub values: Option<Vec<f64>>,
}

/// Fixes every binary to the given assignment and solves the remaining LP.
///
/// Constraints over binaries alone are audited directly, so a schedule that
/// breaks a crew rule is reported with that rule's family. When the binaries
/// pass but the continuous LP is infeasible, each remaining family is dropped
/// in turn and those whose removal restores feasibility are reported.
pub fn warm_start_check(instance: &MilpInstance, assignment: &BTreeMap<usize, f64>) -> Result<FeasibilityReport> {
    let missing: Vec<String> = instance
        .catalog
        .binaries()
        .filter(|j| !assignment.contains_key(j))
        .map(|j| instance.catalog.get(j).name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAssignment(missing));
    }
    let (mut lo, mut hi) = catalog_bounds(instance);
    let mut point = vec![0.0; instance.catalog.len()];
    for (j, v) in assignment {
        if *j >= point.len() {
            return Err(Error::Model(format!("assignment references variable {j}")));
        }
        if instance.catalog.get(*j).kind == VarKind::Binary {
            lo[*j] = *v;
            hi[*j] = *v;
            point[*j] = *v;
        }
    }

    let binary_only = |r: usize| {
        instance.constraints[r]
            .terms
            .iter()
            .all(|(v, _)| instance.catalog.get(*v).kind == VarKind::Binary)
    };
    let violated: BTreeSet<Family> = (0..instance.constraints.len())
        .filter(|r| binary_only(*r))
        .filter(|r| instance.constraints[*r].violation(&point) > FEASIBILITY_TOLERANCE)
        .map(|r| instance.constraints[r].family)
        .collect();
    let bad_bounds = assignment.iter().any(|(j, v)| {
        let e = instance.catalog.get(*j);
        e.kind == VarKind::Binary && *v != 0.0 && *v != 1.0
    });
    if bad_bounds {
        return Err(Error::Model("binary assignment values must be 0 or 1".into()));
    }
    if !violated.is_empty() {
        return Ok(FeasibilityReport {
            feasible: false,
            objective: None,
            violated: violated.into_iter().collect(),
            values: None,
        });
    }

    match relaxation(instance, &lo, &hi, &|_| false) {
        Ok(m) => {
            let r = extract(&m);
            let mut values = r.values;
            round_binaries(instance, &mut values);
            Ok(FeasibilityReport {
                feasible: true,
                objective: Some(r.objective),
                violated: Vec::new(),
                values: Some(values),
            })
        }
        Err(LpStatus::Infeasible) => {
            let families: BTreeSet<Family> = (0..instance.constraints.len())
                .filter(|r| !binary_only(*r))
                .map(|r| instance.constraints[r].family)
                .collect();
            let implicated = families
                .into_iter()
                .filter(|f| {
                    relaxation(instance, &lo, &hi, &|r| instance.constraints[r].family == *f).is_ok()
                })
                .collect();
            Ok(FeasibilityReport {
                feasible: false,
                objective: None,
                violated: implicated,
                values: None,
            })
        }
        Err(s) => Err(Error::Solver(format!("fixed-binary LP ended with {s:?}"))),
    }
}

/// Constraint families implicated in an infeasible instance. When the
/// relaxation is infeasible these are the families whose removal restores
/// it; when only the integer problem is infeasible, the crew families present.
pub fn infeasible_families(instance: &MilpInstance) -> Vec<Family> {
    let (lo, hi) = catalog_bounds(instance);
    let families: BTreeSet<Family> = instance.constraints.iter().map(|c| c.family).collect();
    if relaxation(instance, &lo, &hi, &|_| false).is_ok() {
        return families.into_iter().filter(|f| f.is_crew()).collect();
    }
    families
        .into_iter()
        .filter(|f| relaxation(instance, &lo, &hi, &|r| instance.constraints[r].family == *f).is_ok())
        .collect()
}
