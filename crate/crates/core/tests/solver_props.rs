mod common;

use std::collections::BTreeMap;

use floodguard::cases::sixbus;
use floodguard::eval::Plan;
use floodguard::milp::{self, Family, LinearConstraint, MilpInstance, Sense, VarKind, VarRole};
use floodguard::scenario::{default_scenarios, FailureScenario, ScenarioSet};
use floodguard::solver::{self, LpStatus, MipOptions, MipStatus};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Solves the square system `a x = b`, `None` when singular.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum over every vertex of the box-bounded polytope.
fn vertex_optimum(inst: &MilpInstance) -> Option<f64> {
    let n = inst.catalog.len();
    let mut halfspaces: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &inst.constraints {
        let mut row = vec![0.0; n];
        for (j, a) in &c.terms {
            row[*j] += a;
        }
        let neg: Vec<f64> = row.iter().map(|x| -x).collect();
        match c.sense {
            Sense::Le => halfspaces.push((row, c.rhs)),
            Sense::Ge => halfspaces.push((neg, -c.rhs)),
            Sense::Eq => {
                halfspaces.push((row, c.rhs));
                halfspaces.push((neg, -c.rhs));
            }
        }
    }
    for (j, e) in inst.catalog.entries().iter().enumerate() {
        let mut up = vec![0.0; n];
        up[j] = 1.0;
        halfspaces.push((up, e.upper));
        let mut lo = vec![0.0; n];
        lo[j] = -1.0;
        halfspaces.push((lo, -e.lower));
    }
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn rec(
        depth: usize,
        from: usize,
        pick: &mut Vec<usize>,
        hs: &[(Vec<f64>, f64)],
        inst: &MilpInstance,
        best: &mut Option<f64>,
    ) {
        let n = pick.len();
        if depth == n {
            let a = pick.iter().map(|&i| hs[i].0.clone()).collect();
            let b = pick.iter().map(|&i| hs[i].1).collect();
            if let Some(x) = gauss(a, b) {
                let ok = hs.iter().all(|(row, rhs)| row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() <= rhs + 1e-7);
                if ok {
                    let obj = inst.objective_value(&x);
                    if best.map_or(true, |b| obj < b) {
                        *best = Some(obj);
                    }
                }
            }
            return;
        }
        for i in from..hs.len() {
            pick[depth] = i;
            rec(depth + 1, i + 1, pick, hs, inst, best);
        }
    }
    rec(0, 0, &mut pick, &halfspaces, inst, &mut best);
    best
}

fn random_lp(rng: &mut StdRng, n: usize, rows: usize) -> MilpInstance {
    let mut inst = MilpInstance::empty();
    for j in 0..n {
        let lo = rng.gen_range(-3.0..0.0);
        let hi = rng.gen_range(0.5..4.0);
        inst.catalog.add(format!("x{j}"), VarKind::Continuous, lo, hi, VarRole::Generic { j }).unwrap();
        inst.objective.push((j, rng.gen_range(-5.0..5.0)));
    }
    for r in 0..rows {
        let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-3.0..3.0))).collect();
        let sense = if rng.gen_bool(0.5) { Sense::Le } else { Sense::Ge };
        let rhs = rng.gen_range(-2.0..2.0);
        inst.constraints.push(LinearConstraint::new(format!("r{r}"), terms, sense, rhs, Family::Generic));
    }
    inst
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = StdRng::seed_from_u64(11);
    let (mut optimal, mut infeasible) = (0, 0);
    for i in 0..150 {
        let n = rng.gen_range(1..=4);
        let rows = rng.gen_range(1..=5);
        let inst = random_lp(&mut rng, n, rows);
        let r = solver::solve_lp(&inst);
        match (vertex_optimum(&inst), r.status) {
            (Some(best), LpStatus::Optimal) => {
                optimal += 1;
                assert!((best - r.objective).abs() <= 1e-6 * best.abs().max(1.0), "lp {i}: {best} vs {}", r.objective);
            }
            (None, LpStatus::Infeasible) => infeasible += 1,
            (o, s) => panic!("lp {i}: oracle {o:?}, solver {s:?}"),
        }
    }
    assert!(optimal > 30 && infeasible > 5, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn mip_matches_enumeration_with_equalities() {
    let mut rng = StdRng::seed_from_u64(99);
    for i in 0..60 {
        let inst = common::random_milp(&mut rng, 6, 3, 8);
        let r = solver::solve_mip(&inst, &MipOptions::default());
        match common::enumerate_optimum(&inst) {
            Some(best) => {
                assert_eq!(r.status, MipStatus::Optimal, "instance {i}");
                assert!((best - r.objective).abs() <= 1e-6, "instance {i}: {best} vs {}", r.objective);
                let v = r.values.unwrap();
                assert!(inst.max_violation(&v) <= 1e-6);
                for j in inst.catalog.binaries() {
                    assert!(v[j] == 0.0 || v[j] == 1.0);
                }
            }
            None => assert_eq!(r.status, MipStatus::Infeasible, "instance {i}"),
        }
    }
}

fn sixbus_instance() -> MilpInstance {
    let case = sixbus();
    milp::build(&case, &default_scenarios(&case).unwrap()).unwrap()
}

#[test]
fn sixbus_search_is_deterministic_and_bounds_are_monotone() {
    let inst = sixbus_instance();
    let a = solver::solve_mip(&inst, &MipOptions::default());
    let b = solver::solve_mip(&inst, &MipOptions::default());
    assert_eq!(a.status, MipStatus::Optimal);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.values, b.values);
    assert!((a.objective - 122_209.480_866).abs() < 1e-3, "{}", a.objective);
    assert!(a.best_bound <= a.objective + 1e-6);

    let mut last_incumbent = f64::INFINITY;
    for node in &a.trace {
        if let (Some(lp), Some(parent)) = (node.lp_objective, node.parent_objective) {
            assert!(lp >= parent - 1e-7 * parent.abs().max(1.0), "node {}: {lp} below parent {parent}", node.id);
        }
        let inc = node.incumbent.unwrap_or(f64::INFINITY);
        assert!(inc <= last_incumbent, "incumbent rose at node {}", node.id);
        last_incumbent = inc;
    }
}

#[test]
fn constraint_order_does_not_change_optimum() {
    let inst = sixbus_instance();
    let mut reversed = inst.clone();
    reversed.constraints.reverse();
    let a = solver::solve_mip(&inst, &MipOptions::default());
    let b = solver::solve_mip(&reversed, &MipOptions::default());
    assert_eq!(b.status, MipStatus::Optimal);
    assert!((a.objective - b.objective).abs() <= 1e-6 * a.objective.abs(), "{} vs {}", a.objective, b.objective);
}

#[test]
fn no_failure_scenario_costs_nothing() {
    let case = sixbus();
    let calm = ScenarioSet {
        scenarios: vec![FailureScenario {
            id: "calm".into(),
            failed: case.substations.iter().map(|s| (s.id.clone(), false)).collect::<BTreeMap<_, _>>(),
            raw_probability: 1.0,
            probability: 1.0,
        }],
        normalized: true,
    };
    let inst = milp::build(&case, &calm).unwrap();
    let r = solver::solve_mip(&inst, &MipOptions::default());
    assert_eq!(r.status, MipStatus::Optimal);
    assert!(r.objective.abs() < 1e-6, "{}", r.objective);
    // site costs are weighted by failure, so every θ ties; the empty plan is one optimum
    let empty = Plan::empty(&case).assignment(&case, &inst).unwrap();
    let check = solver::warm_start_check(&inst, &empty).unwrap();
    assert!(check.feasible);
    assert!(check.objective.unwrap().abs() < 1e-6);
}

#[test]
fn node_limit_of_one_reports_limit() {
    let inst = sixbus_instance();
    let r = solver::solve_mip(&inst, &MipOptions { node_limit: 1, ..MipOptions::default() });
    assert_eq!(r.status, MipStatus::NodeLimit);
    assert_eq!(r.nodes, 1);
    assert!(r.best_bound <= 122_209.49);
}
