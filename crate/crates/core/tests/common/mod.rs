#![allow(dead_code)]

use floodguard::domain::{Bus, CaseModel, CostConfig, CrewConfig, Generator, Line, MinOutputPolicy, Substation};
use floodguard::milp::{Family, LinearConstraint, MilpInstance, Sense, VarKind, VarRole};
use floodguard::solver::{self, LpStatus};
use rand::rngs::StdRng;
use rand::Rng;

/// Random connected case with one substation per bus: a ring plus chords,
/// flat demand, relaxed minimum output.
pub fn random_case(rng: &mut StdRng, buses: usize, teams: u32, horizon: usize) -> CaseModel {
    let ids: Vec<u32> = (1..=buses as u32).collect();
    let mut lines = Vec::new();
    let mut push = |a: u32, b: u32, rng: &mut StdRng| {
        lines.push(Line {
            id: format!("l{a}_{b}"),
            from_bus: a,
            to_bus: b,
            susceptance: rng.gen_range(2.0..10.0),
            capacity: rng.gen_range(40.0..150.0),
        })
    };
    for w in ids.windows(2) {
        push(w[0], w[1], rng);
    }
    if buses > 2 {
        push(ids[buses - 1], ids[0], rng);
    }
    if buses > 3 && rng.gen_bool(0.5) {
        push(ids[0], ids[2], rng);
    }
    let n_gen = if buses > 2 { 2 } else { 1 };
    let generators = (0..n_gen)
        .map(|g| Generator {
            id: format!("g{g}"),
            bus_id: ids[g * (buses / 2)],
            p_min: 0.0,
            p_max: rng.gen_range(50.0..150.0),
            ramp_up: 500.0,
            ramp_down: 500.0,
            initial_output: None,
        })
        .collect();
    let bus = ids
        .iter()
        .map(|id| Bus {
            id: *id,
            demand_profile: vec![if rng.gen_bool(0.6) { rng.gen_range(5.0..60.0) } else { 0.0 }; horizon],
        })
        .collect();
    let substations = ids
        .iter()
        .map(|id| Substation {
            id: format!("k{id}"),
            bus_id: *id,
            mean_flood_depth: rng.gen_range(0.45..1.5),
            failure_probability: rng.gen_range(0.05..0.6),
            repair_time: rng.gen_range(3.0..25.0),
            damage_cost: rng.gen_range(20_000.0..90_000.0),
            tiger_dam_cost: rng.gen_range(2_000.0..10_000.0),
        })
        .collect();
    CaseModel {
        buses: bus,
        lines,
        generators,
        substations,
        crew: CrewConfig {
            num_teams: teams,
            members_per_team: rng.gen_range(2..=5),
            prep_hours: rng.gen_range(3..=6),
            edge_epsilon: 0.25,
        },
        costs: CostConfig {
            voll: 1000.0,
            big_m_angle_bound: 0.6,
        },
        operating_horizon: horizon,
        base_mva: 100.0,
        min_output: MinOutputPolicy::Relaxed,
        scenario_thresholds: None,
    }
}

/// Random bounded MILP: binaries first, then continuous variables in boxes.
/// Constraints are built around a random point so most instances are
/// feasible.
pub fn random_milp(rng: &mut StdRng, binaries: usize, continuous: usize, rows: usize) -> MilpInstance {
    let mut inst = MilpInstance::empty();
    for j in 0..binaries + continuous {
        let kind = if j < binaries { VarKind::Binary } else { VarKind::Continuous };
        let lo = if j < binaries { 0.0 } else { rng.gen_range(-5.0..0.0) };
        let hi = if j < binaries { 1.0 } else { rng.gen_range(0.5..5.0) };
        inst.catalog.add(format!("v{j}"), kind, lo, hi, VarRole::Generic { j }).unwrap();
        inst.objective.push((j, rng.gen_range(-10.0..10.0)));
    }
    let point: Vec<f64> = (0..binaries + continuous)
        .map(|j| {
            let e = inst.catalog.get(j);
            if j < binaries {
                f64::from(u8::from(rng.gen_bool(0.5)))
            } else {
                rng.gen_range(e.lower..e.upper)
            }
        })
        .collect();
    for r in 0..rows {
        let mut terms = Vec::new();
        for j in 0..binaries + continuous {
            if rng.gen_bool(0.5) {
                terms.push((j, rng.gen_range(-4.0..4.0)));
            }
        }
        let activity: f64 = terms.iter().map(|(j, c)| c * point[*j]).sum();
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (Sense::Eq, activity),
            1 | 2 => (Sense::Le, activity + rng.gen_range(0.0..3.0)),
            _ => (Sense::Ge, activity - rng.gen_range(0.0..3.0)),
        };
        // an occasional row that may cut off the planted point
        let rhs = if rng.gen_bool(0.1) && sense != Sense::Eq { rhs - 2.0 * rng.gen_range(0.0..3.0) } else { rhs };
        inst.constraints.push(LinearConstraint::new(format!("r{r}"), terms, sense, rhs, Family::Generic));
    }
    inst
}

/// Exhaustive optimum: every binary assignment followed by an LP over the
/// continuous variables. `None` when no assignment is feasible.
pub fn enumerate_optimum(inst: &MilpInstance) -> Option<f64> {
    let bins: Vec<usize> = inst.catalog.binaries().collect();
    let (lo, hi): (Vec<f64>, Vec<f64>) = inst.catalog.entries().iter().map(|e| (e.lower, e.upper)).unzip();
    let mut best: Option<f64> = None;
    for mask in 0..1usize << bins.len() {
        let (mut l, mut h) = (lo.clone(), hi.clone());
        for (b, j) in bins.iter().enumerate() {
            let v = f64::from(u8::try_from(mask >> b & 1).unwrap());
            l[*j] = v;
            h[*j] = v;
        }
        let r = solver::solve_lp_bounded(inst, &l, &h);
        if r.status == LpStatus::Optimal && best.map_or(true, |b| r.objective < b) {
            best = Some(r.objective);
        }
    }
    best
}
