use std::collections::BTreeMap;

use floodguard::cases::{sixbus, sixbus_scenarios};
use floodguard::domain::CaseModel;
use floodguard::eval::{self, Plan};
use floodguard::milp::{self, Family, VarRole};
use floodguard::scenario::{default_scenarios, FailureScenario};
use floodguard::solver::{self, MipOptions, MipStatus};

fn only_failed(case: &CaseModel, ids: &[&str]) -> FailureScenario {
    FailureScenario {
        id: ids.join("+"),
        failed: case.substations.iter().map(|s| (s.id.clone(), ids.contains(&s.id.as_str()))).collect::<BTreeMap<_, _>>(),
        raw_probability: 1.0,
        probability: 1.0,
    }
}

#[test]
fn short_crew_time_breaks_protection_hours() {
    let case = sixbus();
    let inst = milp::build(&case, &sixbus_scenarios()).unwrap();
    let k2 = Some("k2".to_string());
    let plan = Plan {
        protected: vec!["k2".into()],
        schedule: vec![vec![k2.clone(), k2, None, None, None], vec![None; 5]],
    };
    let r = solver::warm_start_check(&inst, &plan.assignment(&case, &inst).unwrap()).unwrap();
    assert!(!r.feasible);
    assert!(r.violated.contains(&Family::ProtectionHours), "{:?}", r.violated);
}

#[test]
fn unprotected_case_without_demand_costs_expected_damage() {
    let mut case = sixbus();
    for b in &mut case.buses {
        b.demand_profile.iter_mut().for_each(|d| *d = 0.0);
    }
    let set = sixbus_scenarios();
    let inst = milp::build(&case, &set).unwrap();
    let r = solver::warm_start_check(&inst, &Plan::empty(&case).assignment(&case, &inst).unwrap()).unwrap();
    let expected: f64 = set
        .scenarios
        .iter()
        .map(|s| s.probability * case.substations.iter().filter(|k| s.fails(&k.id)).map(|k| k.damage_cost).sum::<f64>())
        .sum();
    assert!(r.feasible);
    assert!((r.objective.unwrap() - expected).abs() < 1e-6 * expected, "{:?} vs {expected}", r.objective);
}

#[test]
fn generator_bus_outage_caps_service_until_repair() {
    let case = sixbus();
    let curve = eval::recovery_simulation(&case, &only_failed(&case, &["k1"]), &[false; 6]).unwrap();
    // g4 alone can carry 100 of the 135 MW until k1 returns at hour 13
    assert_eq!(curve.len(), 24);
    for s in &curve {
        let want = if s.hour < 13 { 100.0 } else { 135.0 };
        assert!((s.served_mw - want).abs() < 1e-6, "hour {}: {}", s.hour, s.served_mw);
        assert_eq!(s.demand_mw, 135.0);
    }
}

#[test]
fn angle_limit_caps_radial_supply_until_repair() {
    let case = sixbus();
    let curve = eval::recovery_simulation(&case, &only_failed(&case, &["k4"]), &[false; 6]).unwrap();
    // g1 feeds radially over l12 and l25; with the reference at bus 1 and 500 MW/rad
    // per line, bus 3 sits at -(6P + 2d3 + d6)/1500 >= -0.6, so P = 30 + 96
    assert_eq!(curve.len(), 25);
    for s in &curve {
        let want = if s.hour < 24 { 126.0 } else { 135.0 };
        assert!((s.served_mw - want).abs() < 1e-6, "hour {}: {}", s.hour, s.served_mw);
    }
    assert!(!eval::available_at(&case, &[false, false, false, true, false, false], &[false; 6], 23)[3]);
    assert!(eval::available_at(&case, &[false, false, false, true, false, false], &[false; 6], 24)[3]);
}

#[test]
fn protection_removes_the_outage() {
    let case = sixbus();
    let sc = only_failed(&case, &["k1"]);
    let protect_k1 = [true, false, false, false, false, false];
    let curve = eval::recovery_simulation(&case, &sc, &protect_k1).unwrap();
    assert!(curve.iter().all(|s| (s.served_fraction - 1.0).abs() < 1e-9));
}

#[test]
fn served_fraction_never_drops_during_recovery() {
    let case = sixbus();
    let set = default_scenarios(&case).unwrap();
    let curve = eval::resilience_curve(&case, &set, &[false; 6]).unwrap();
    for sc in &curve.scenarios {
        for w in sc.samples.windows(2) {
            assert!(w[1].served_fraction >= w[0].served_fraction - 1e-9, "{} hour {}", sc.id, w[1].hour);
        }
    }
}

#[test]
fn optimum_is_the_best_fixed_protection_pattern() {
    let case = sixbus();
    let set = default_scenarios(&case).unwrap();
    let inst = milp::build(&case, &set).unwrap();
    let r = solver::solve_mip(&inst, &MipOptions::default());
    assert_eq!(r.status, MipStatus::Optimal);
    let mut best = (f64::INFINITY, 0u32);
    for mask in 0..64u32 {
        let theta: Vec<bool> = (0..6).map(|k| mask >> k & 1 == 1).collect();
        let Ok(plan) = Plan::with_protection(&case, &theta) else { continue };
        let check = solver::warm_start_check(&inst, &plan.assignment(&case, &inst).unwrap()).unwrap();
        let obj = check.objective.expect("packable pattern is feasible");
        assert!(obj >= r.objective - 1e-6 * r.objective, "pattern {mask:06b} beats the optimum: {obj}");
        if obj < best.0 {
            best = (obj, mask);
        }
    }
    assert!((best.0 - r.objective).abs() <= 1e-6 * r.objective, "{} vs {}", best.0, r.objective);
    assert_eq!(best.1, 0b110110, "k2, k3, k5, k6");
}

#[test]
fn baseline_without_crews_protects_nothing() {
    let mut case = sixbus();
    case.crew.num_teams = 0;
    let out = eval::deterministic_baseline(&case, &MipOptions::default()).unwrap();
    assert!(out.plan.protected.is_empty());
}

#[test]
fn baseline_with_ample_crews_protects_everything() {
    let mut case = sixbus();
    case.crew.num_teams = 6;
    let out = eval::deterministic_baseline(&case, &MipOptions::default()).unwrap();
    assert_eq!(out.plan.protected, ["k1", "k2", "k3", "k4", "k5", "k6"]);
    for b in out.plan.blocks() {
        let k: usize = b.substation[1..].parse().unwrap();
        assert_eq!(b.hours as u32, [2, 3, 2, 3, 2, 3][k - 1], "{b:?}");
    }
}

#[test]
fn forcing_protection_costs_at_most_the_avoided_damage() {
    let case = sixbus();
    let set = sixbus_scenarios();
    let inst = milp::build(&case, &set).unwrap();
    let solve_fixed = |k: usize, v: f64| {
        let mut fixed = inst.clone();
        let j = fixed.catalog.var(VarRole::Theta { k });
        fixed.catalog.set_bounds(j, v, v);
        let r = solver::solve_mip(&fixed, &MipOptions::default());
        assert!(matches!(r.status, MipStatus::Optimal | MipStatus::Infeasible), "k{} = {v}: {:?}", k + 1, r.status);
        (r.status == MipStatus::Optimal).then_some(r.objective)
    };
    for (k, sub) in case.substations.iter().enumerate() {
        let exposure: f64 = set.scenarios.iter().filter(|s| s.fails(&sub.id)).map(|s| s.probability).sum();
        let off = solve_fixed(k, 0.0).expect("leaving a site unprotected is always feasible");
        let Some(on) = solve_fixed(k, 1.0) else { continue };
        let slack = (sub.damage_cost - sub.tiger_dam_cost) * exposure;
        assert!(on <= off + slack + 1e-6 * off, "{}: {on} > {off} + {slack}", sub.id);
    }
}
