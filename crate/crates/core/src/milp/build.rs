use crate::domain::{crews_can_cover, imposed_cost_coefficients, validate_case, CaseModel, Line, MinOutputPolicy};
use crate::error::{Error, Result};
use crate::scenario::ScenarioSet;

use super::{Family, LinearConstraint, MilpInstance, PlanStructure, Sense, VarCatalog, VarKind, VarRole};

/// Tightest valid flow big-M for a line, in per-unit: with every angle in
/// `[−angle_bound, angle_bound]`, `|B·Δδ| ≤ B·2·angle_bound`.
pub fn big_m_for_line(line: &Line, angle_bound: f64) -> f64 {
    line.susceptance * 2.0 * angle_bound
}

/// Start-edge detection for one team, site and prep hour:
///
/// ```text
/// (x_t − x_{t−1})/2 − ε ≤ y_t
/// y_t ≤ (1 + x_t − x_{t−1})/2 + ε
/// ```
///
/// `x_prev` is `None` in the first prep hour, where the previous state is 0.
/// With binary `x` and `y` this forces `y_t = 1` exactly on a 0→1 transition.
pub fn crew_edge_constraints(
    tag: &str,
    x_t: usize,
    x_prev: Option<usize>,
    y_t: usize,
    epsilon: f64,
) -> (LinearConstraint, LinearConstraint) {
    let prev = x_prev.map(|p| (p, -0.5));
    let lower = LinearConstraint::new(
        format!("start_edge_lower[{tag}]"),
        [(x_t, 0.5), (y_t, -1.0)].into_iter().chain(prev),
        Sense::Le,
        epsilon,
        Family::StartEdgeLower,
    );
    let upper = LinearConstraint::new(
        format!("start_edge_upper[{tag}]"),
        [(y_t, 1.0), (x_t, -0.5)]
            .into_iter()
            .chain(x_prev.map(|p| (p, 0.5))),
        Sense::Le,
        0.5 + epsilon,
        Family::StartEdgeUpper,
    );
    (lower, upper)
}

struct Network {
    /// Substation index of every bus.
    bus_sub: Vec<usize>,
    /// (from bus index, to bus index) of every line.
    ends: Vec<(usize, usize)>,
    /// Bus index of every generator.
    gen_bus: Vec<usize>,
    slack: Option<usize>,
}

impl Network {
    fn new(case: &CaseModel) -> Result<Self> {
        let bus_index = |id: u32| -> Result<usize> {
            case.buses
                .iter()
                .position(|b| b.id == id)
                .ok_or_else(|| Error::Model(format!("missing bus {id}")))
        };
        let bus_sub = case
            .buses
            .iter()
            .map(|b| {
                case.substation_for_bus(b.id)
                    .ok_or_else(|| Error::Model(format!("bus {} has no substation", b.id)))
            })
            .collect::<Result<_>>()?;
        let ends = case
            .lines
            .iter()
            .map(|l| Ok((bus_index(l.from_bus)?, bus_index(l.to_bus)?)))
            .collect::<Result<_>>()?;
        let gen_bus = case
            .generators
            .iter()
            .map(|g| bus_index(g.bus_id))
            .collect::<Result<_>>()?;
        Ok(Self {
            bus_sub,
            ends,
            gen_bus,
            slack: case.slack_bus(),
        })
    }
}

fn ensure_valid(case: &CaseModel) -> Result<()> {
    let violations = validate_case(case);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(violations))
    }
}

/// Largest number of substations for which cover sets are enumerated.
pub const MAX_COVER_SITES: usize = 16;

/// Minimal sets of sites that the crews cannot all protect in time, as
/// sorted substation indices, ordered by size then lexicographically. Empty
/// when there are more than [`MAX_COVER_SITES`] substations.
pub fn crew_cover_sets(tau: &[u32], teams: usize, hours: u32) -> Vec<Vec<usize>> {
    let n = tau.len();
    if n > MAX_COVER_SITES {
        return Vec::new();
    }
    let mut masks: Vec<usize> = (1..1usize << n).collect();
    masks.sort_by_key(|m| m.count_ones());
    let mut coverable = vec![true; 1 << n];
    let mut sets = Vec::new();
    for m in masks {
        let members: Vec<usize> = (0..n).filter(|k| m >> k & 1 == 1).collect();
        let minimal_ok = members.iter().all(|k| coverable[m & !(1 << k)]);
        if !minimal_ok {
            coverable[m] = false;
            continue;
        }
        let times: Vec<u32> = members.iter().map(|k| tau[*k]).collect();
        if !crews_can_cover(&times, teams, hours) {
            coverable[m] = false;
            sets.push(members);
        }
    }
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    sets
}

/// Assembles the stochastic protection MILP over a normalized scenario set.
pub fn build(case: &CaseModel, scenarios: &ScenarioSet) -> Result<MilpInstance> {
    ensure_valid(case)?;
    if !scenarios.normalized {
        return Err(Error::Model("scenario set is not normalized".into()));
    }
    scenarios.check()?;
    let fail = scenarios.failure_matrix(case)?;
    let prob = scenarios.probabilities();
    let tau = case.protection_times()?;
    let net = Network::new(case)?;

    let n_sub = case.substations.len();
    let n_team = case.crew.num_teams as usize;
    let n_prep = case.crew.prep_hours as usize;
    let n_scen = scenarios.len();
    let n_hours = case.operating_horizon;
    let angle_bound = case.costs.big_m_angle_bound;
    let base = case.base_mva;

    let mut warnings = Vec::new();
    for (k, sub) in case.substations.iter().enumerate() {
        if tau[k] > case.crew.prep_hours {
            warnings.push(format!(
                "substation {} needs {} h of protection but only {} prep hours exist; it can only stay unprotected",
                sub.id, tau[k], case.crew.prep_hours
            ));
        }
    }

    let mut cat = VarCatalog::new();
    let sid = |s: usize| scenarios.scenarios[s].id.as_str();
    let kid = |k: usize| case.substations[k].id.as_str();

    for k in 0..n_sub {
        cat.add(format!("theta[{}]", kid(k)), VarKind::Binary, 0.0, 1.0, VarRole::Theta { k })?;
    }
    for n in 0..n_team {
        for k in 0..n_sub {
            for t in 0..n_prep {
                cat.add(
                    format!("x[{},{},{}]", n + 1, kid(k), t + 1),
                    VarKind::Binary,
                    0.0,
                    1.0,
                    VarRole::CrewWork { n, k, t },
                )?;
            }
        }
    }
    for n in 0..n_team {
        for k in 0..n_sub {
            for t in 0..n_prep {
                cat.add(
                    format!("y[{},{},{}]", n + 1, kid(k), t + 1),
                    VarKind::Binary,
                    0.0,
                    1.0,
                    VarRole::CrewStart { n, k, t },
                )?;
            }
        }
    }
    for k in 0..n_sub {
        for s in 0..n_scen {
            cat.add(format!("h_sub[{},{}]", kid(k), sid(s)), VarKind::Binary, 0.0, 1.0, VarRole::SubAvail { k, s })?;
        }
    }
    for (l, line) in case.lines.iter().enumerate() {
        for s in 0..n_scen {
            cat.add(format!("h_line[{},{}]", line.id, sid(s)), VarKind::Binary, 0.0, 1.0, VarRole::LineAvail { l, s })?;
        }
    }
    for (k, sub) in case.substations.iter().enumerate() {
        let lo = sub.tiger_dam_cost.min(sub.damage_cost);
        let hi = sub.tiger_dam_cost.max(sub.damage_cost);
        cat.add(format!("beta[{}]", sub.id), VarKind::Continuous, lo, hi, VarRole::Beta { k })?;
    }
    for s in 0..n_scen {
        for t in 0..n_hours {
            for (g, gen) in case.generators.iter().enumerate() {
                cat.add(
                    format!("p[{},{},{}]", gen.id, sid(s), t + 1),
                    VarKind::Continuous,
                    0.0,
                    gen.p_max,
                    VarRole::Gen { g, s, t },
                )?;
            }
            for (i, bus) in case.buses.iter().enumerate() {
                cat.add(
                    format!("ls[{},{},{}]", bus.id, sid(s), t + 1),
                    VarKind::Continuous,
                    0.0,
                    case.demand(i, t),
                    VarRole::Shed { i, s, t },
                )?;
            }
            for (l, line) in case.lines.iter().enumerate() {
                cat.add(
                    format!("flow[{},{},{}]", line.id, sid(s), t + 1),
                    VarKind::Continuous,
                    -line.capacity,
                    line.capacity,
                    VarRole::Flow { l, s, t },
                )?;
            }
            for (i, bus) in case.buses.iter().enumerate() {
                let b = if Some(i) == net.slack { 0.0 } else { angle_bound };
                cat.add(
                    format!("angle[{},{},{}]", bus.id, sid(s), t + 1),
                    VarKind::Continuous,
                    -b,
                    b,
                    VarRole::Angle { i, s, t },
                )?;
            }
        }
    }

    // expected imposed cost plus expected unserved-energy cost
    let mut objective = Vec::new();
    for k in 0..n_sub {
        let w: f64 = (0..n_scen).filter(|s| fail[*s][k]).map(|s| prob[s]).sum();
        if w != 0.0 {
            objective.push((cat.var(VarRole::Beta { k }), w));
        }
    }
    for s in 0..n_scen {
        if prob[s] == 0.0 {
            continue;
        }
        for t in 0..n_hours {
            for i in 0..case.buses.len() {
                objective.push((cat.var(VarRole::Shed { i, s, t }), prob[s] * case.costs.voll));
            }
        }
    }

    let mut cons = Vec::new();
    for (k, sub) in case.substations.iter().enumerate() {
        let c = imposed_cost_coefficients(sub);
        cons.push(LinearConstraint::new(
            format!("imposed_cost[{}]", sub.id),
            [
                (cat.var(VarRole::Beta { k }), 1.0),
                (cat.var(VarRole::Theta { k }), -(c.protect_cost - c.fail_cost)),
            ],
            Sense::Eq,
            c.fail_cost,
            Family::ImposedCost,
        ));
    }

    // crew schedule
    let x = |n: usize, k: usize, t: usize| cat.var(VarRole::CrewWork { n, k, t });
    let y = |n: usize, k: usize, t: usize| cat.var(VarRole::CrewStart { n, k, t });
    if n_team > 0 && n_prep > 0 {
        let all_x = (0..n_team).flat_map(|n| (0..n_sub).flat_map(move |k| (0..n_prep).map(move |t| (n, k, t))));
        cons.push(LinearConstraint::new(
            "crew_budget",
            all_x.map(|(n, k, t)| (x(n, k, t), 1.0)),
            Sense::Le,
            (n_team * n_prep) as f64,
            Family::CrewBudget,
        ));
    }
    for k in 0..n_sub {
        let work = (0..n_team).flat_map(|n| (0..n_prep).map(move |t| (n, t)));
        cons.push(LinearConstraint::new(
            format!("protection_hours[{}]", kid(k)),
            work.map(|(n, t)| (x(n, k, t), 1.0))
                .chain([(cat.var(VarRole::Theta { k }), -f64::from(tau[k]))]),
            Sense::Eq,
            0.0,
            Family::ProtectionHours,
        ));
    }
    for n in 0..n_team {
        for t in 0..n_prep {
            cons.push(LinearConstraint::new(
                format!("team_one_site[{},{}]", n + 1, t + 1),
                (0..n_sub).map(|k| (x(n, k, t), 1.0)),
                Sense::Le,
                1.0,
                Family::TeamOneSite,
            ));
        }
    }
    for n in 0..n_team {
        for k in 0..n_sub {
            for t in 0..n_prep {
                let prev = (t > 0).then(|| x(n, k, t - 1));
                let (lo, hi) = crew_edge_constraints(
                    &format!("{},{},{}", n + 1, kid(k), t + 1),
                    x(n, k, t),
                    prev,
                    y(n, k, t),
                    case.crew.edge_epsilon,
                );
                cons.push(lo);
                cons.push(hi);
            }
        }
    }
    if n_team > 0 && n_prep > 0 {
        for k in 0..n_sub {
            let starts = (0..n_team).flat_map(|n| (0..n_prep).map(move |t| (n, t)));
            cons.push(LinearConstraint::new(
                format!("single_dispatch[{}]", kid(k)),
                starts.map(|(n, t)| (y(n, k, t), 1.0)),
                Sense::Le,
                1.0,
                Family::SingleDispatch,
            ));
        }
    }

    if n_team > 0 && n_prep > 0 {
        for set in crew_cover_sets(&tau, n_team, case.crew.prep_hours) {
            let ids: Vec<&str> = set.iter().map(|k| kid(*k)).collect();
            cons.push(LinearConstraint::new(
                format!("crew_cover[{}]", ids.join(",")),
                set.iter().map(|k| (cat.var(VarRole::Theta { k: *k }), 1.0)),
                Sense::Le,
                (set.len() - 1) as f64,
                Family::CrewCover,
            ));
        }
    }

    // availability of substations and lines per scenario
    let big_m: Vec<f64> = case
        .lines
        .iter()
        .map(|l| base * big_m_for_line(l, angle_bound))
        .collect();
    for s in 0..n_scen {
        for k in 0..n_sub {
            let f = if fail[s][k] { 1.0 } else { 0.0 };
            cons.push(LinearConstraint::new(
                format!("availability[{},{}]", kid(k), sid(s)),
                [
                    (cat.var(VarRole::SubAvail { k, s }), 1.0),
                    (cat.var(VarRole::Theta { k }), -f),
                ],
                Sense::Eq,
                1.0 - f,
                Family::Availability,
            ));
        }
        for (l, line) in case.lines.iter().enumerate() {
            let hl = cat.var(VarRole::LineAvail { l, s });
            let ho = cat.var(VarRole::SubAvail { k: net.bus_sub[net.ends[l].0], s });
            let hd = cat.var(VarRole::SubAvail { k: net.bus_sub[net.ends[l].1], s });
            let tag = format!("{},{}", line.id, sid(s));
            cons.push(LinearConstraint::new(
                format!("line_avail_origin[{tag}]"),
                [(hl, 1.0), (ho, -1.0)],
                Sense::Le,
                0.0,
                Family::LineAvailOrigin,
            ));
            cons.push(LinearConstraint::new(
                format!("line_avail_destination[{tag}]"),
                [(hl, 1.0), (hd, -1.0)],
                Sense::Le,
                0.0,
                Family::LineAvailDestination,
            ));
            cons.push(LinearConstraint::new(
                format!("line_avail_both[{tag}]"),
                [(hl, 1.0), (ho, -1.0), (hd, -1.0)],
                Sense::Ge,
                -1.0,
                Family::LineAvailBoth,
            ));
        }
    }

    // scenario-wise DC power flow
    for s in 0..n_scen {
        for t in 0..n_hours {
            let tag = |what: &str| format!("{what},{},{}", sid(s), t + 1);
            for (i, bus) in case.buses.iter().enumerate() {
                let mut terms = vec![(cat.var(VarRole::Shed { i, s, t }), 1.0)];
                for (g, gb) in net.gen_bus.iter().enumerate() {
                    if *gb == i {
                        terms.push((cat.var(VarRole::Gen { g, s, t }), 1.0));
                    }
                }
                for (l, (from, to)) in net.ends.iter().enumerate() {
                    if *from == i {
                        terms.push((cat.var(VarRole::Flow { l, s, t }), -1.0));
                    } else if *to == i {
                        terms.push((cat.var(VarRole::Flow { l, s, t }), 1.0));
                    }
                }
                cons.push(LinearConstraint::new(
                    format!("nodal_balance[{}]", tag(&bus.id.to_string())),
                    terms,
                    Sense::Eq,
                    case.demand(i, t),
                    Family::NodalBalance,
                ));
            }
            for (l, line) in case.lines.iter().enumerate() {
                let f = cat.var(VarRole::Flow { l, s, t });
                let h = cat.var(VarRole::LineAvail { l, s });
                let (from, to) = net.ends[l];
                let df = cat.var(VarRole::Angle { i: from, s, t });
                let dt = cat.var(VarRole::Angle { i: to, s, t });
                let b = base * line.susceptance;
                let m = big_m[l];
                let tag = tag(&line.id);
                cons.push(LinearConstraint::new(
                    format!("flow_limit_upper[{tag}]"),
                    [(f, 1.0), (h, -line.capacity)],
                    Sense::Le,
                    0.0,
                    Family::FlowLimit,
                ));
                cons.push(LinearConstraint::new(
                    format!("flow_limit_lower[{tag}]"),
                    [(f, 1.0), (h, line.capacity)],
                    Sense::Ge,
                    0.0,
                    Family::FlowLimit,
                ));
                // f + M(1−h) ≥ B·Δδ
                cons.push(LinearConstraint::new(
                    format!("flow_angle_lower[{tag}]"),
                    [(f, 1.0), (h, -m), (df, -b), (dt, b)],
                    Sense::Ge,
                    -m,
                    Family::FlowAngleLower,
                ));
                // f ≤ M(1−h) + B·Δδ
                cons.push(LinearConstraint::new(
                    format!("flow_angle_upper[{tag}]"),
                    [(f, 1.0), (h, m), (df, -b), (dt, b)],
                    Sense::Le,
                    m,
                    Family::FlowAngleUpper,
                ));
            }
            for (g, gen) in case.generators.iter().enumerate() {
                let p = cat.var(VarRole::Gen { g, s, t });
                let h = cat.var(VarRole::SubAvail { k: net.bus_sub[net.gen_bus[g]], s });
                let tag = tag(&gen.id);
                cons.push(LinearConstraint::new(
                    format!("generator_max[{tag}]"),
                    [(p, 1.0), (h, -gen.p_max)],
                    Sense::Le,
                    0.0,
                    Family::GeneratorBounds,
                ));
                if case.min_output == MinOutputPolicy::Enforced && gen.p_min > 0.0 {
                    cons.push(LinearConstraint::new(
                        format!("generator_min[{tag}]"),
                        [(p, 1.0), (h, -gen.p_min)],
                        Sense::Ge,
                        0.0,
                        Family::GeneratorBounds,
                    ));
                }
                let (prev, offset) = if t > 0 {
                    (Some(cat.var(VarRole::Gen { g, s, t: t - 1 })), 0.0)
                } else {
                    match gen.initial_output {
                        Some(p0) => (None, p0),
                        None => continue,
                    }
                };
                cons.push(LinearConstraint::new(
                    format!("ramp_up[{tag}]"),
                    [(p, 1.0)].into_iter().chain(prev.map(|q| (q, -1.0))),
                    Sense::Le,
                    gen.ramp_up + offset,
                    Family::RampUp,
                ));
                cons.push(LinearConstraint::new(
                    format!("ramp_down[{tag}]"),
                    [(p, -1.0)].into_iter().chain(prev.map(|q| (q, 1.0))),
                    Sense::Le,
                    gen.ramp_down - offset,
                    Family::RampDown,
                ));
            }
        }
    }

    let instance = MilpInstance {
        catalog: cat,
        objective,
        constraints: cons,
        big_m,
        warnings,
        structure: Some(PlanStructure {
            protection_hours: tau.clone(),
            teams: n_team,
            prep_hours: n_prep,
            failed: fail.clone(),
            line_subs: net.ends.iter().map(|(o, d)| (net.bus_sub[*o], net.bus_sub[*d])).collect(),
        }),
    };
    instance.check()?;
    Ok(instance)
}

/// Single-hour DC OPF with substation availability given as data: minimizes
/// `VOLL · Σ shed` at operating hour `hour`. Lines are in service when both
/// terminal substations are.
pub fn build_dispatch(
    case: &CaseModel,
    available: &[bool],
    hour: usize,
    min_output: MinOutputPolicy,
) -> Result<MilpInstance> {
    if available.len() != case.substations.len() {
        return Err(Error::Model(format!(
            "availability has {} entries for {} substations",
            available.len(),
            case.substations.len()
        )));
    }
    let net = Network::new(case)?;
    let up_bus = |i: usize| available[net.bus_sub[i]];
    let mut cat = VarCatalog::new();
    let (s, t) = (0, 0);

    for (g, gen) in case.generators.iter().enumerate() {
        let on = up_bus(net.gen_bus[g]);
        let hi = if on { gen.p_max } else { 0.0 };
        let lo = if on && min_output == MinOutputPolicy::Enforced { gen.p_min } else { 0.0 };
        cat.add(format!("p[{}]", gen.id), VarKind::Continuous, lo, hi, VarRole::Gen { g, s, t })?;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        cat.add(format!("ls[{}]", bus.id), VarKind::Continuous, 0.0, case.demand(i, hour), VarRole::Shed { i, s, t })?;
    }
    for (l, line) in case.lines.iter().enumerate() {
        let (a, b) = net.ends[l];
        let cap = if up_bus(a) && up_bus(b) { line.capacity } else { 0.0 };
        cat.add(format!("flow[{}]", line.id), VarKind::Continuous, -cap, cap, VarRole::Flow { l, s, t })?;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        let b = if Some(i) == net.slack { 0.0 } else { case.costs.big_m_angle_bound };
        cat.add(format!("angle[{}]", bus.id), VarKind::Continuous, -b, b, VarRole::Angle { i, s, t })?;
    }

    let objective = (0..case.buses.len())
        .map(|i| (cat.var(VarRole::Shed { i, s, t }), case.costs.voll))
        .collect();
    let mut cons = Vec::new();
    for (i, bus) in case.buses.iter().enumerate() {
        let mut terms = vec![(cat.var(VarRole::Shed { i, s, t }), 1.0)];
        for (g, gb) in net.gen_bus.iter().enumerate() {
            if *gb == i {
                terms.push((cat.var(VarRole::Gen { g, s, t }), 1.0));
            }
        }
        for (l, (from, to)) in net.ends.iter().enumerate() {
            if *from == i {
                terms.push((cat.var(VarRole::Flow { l, s, t }), -1.0));
            } else if *to == i {
                terms.push((cat.var(VarRole::Flow { l, s, t }), 1.0));
            }
        }
        cons.push(LinearConstraint::new(
            format!("nodal_balance[{}]", bus.id),
            terms,
            Sense::Eq,
            case.demand(i, hour),
            Family::NodalBalance,
        ));
    }
    for (l, line) in case.lines.iter().enumerate() {
        let (a, b) = net.ends[l];
        if !(up_bus(a) && up_bus(b)) {
            continue;
        }
        let sus = case.base_mva * line.susceptance;
        cons.push(LinearConstraint::new(
            format!("flow_angle[{}]", line.id),
            [
                (cat.var(VarRole::Flow { l, s, t }), 1.0),
                (cat.var(VarRole::Angle { i: a, s, t }), -sus),
                (cat.var(VarRole::Angle { i: b, s, t }), sus),
            ],
            Sense::Eq,
            0.0,
            Family::FlowAngle,
        ));
    }
    let instance = MilpInstance {
        catalog: cat,
        objective,
        constraints: cons,
        big_m: Vec::new(),
        warnings: Vec::new(),
        structure: None,
    };
    instance.check()?;
    Ok(instance)
}
