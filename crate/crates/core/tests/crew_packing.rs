use floodguard::cases::sixbus;
use floodguard::domain::crews_can_cover;
use floodguard::milp::{self, crew_cover_sets};
use floodguard::scenario::default_scenarios;
use floodguard::solver;
use proptest::prelude::*;

/// Tries every job-to-team assignment.
fn brute_force_cover(times: &[u32], teams: usize, hours: u32) -> bool {
    if teams == 0 {
        return times.iter().all(|t| *t == 0);
    }
    let combos = teams.pow(times.len() as u32);
    (0..combos).any(|mut c| {
        let mut load = vec![0u32; teams];
        for t in times {
            load[c % teams] += t;
            c /= teams;
        }
        load.iter().all(|l| *l <= hours)
    })
}

fn subset(tau: &[u32], mask: u32) -> Vec<u32> {
    (0..tau.len()).filter(|k| mask >> k & 1 == 1).map(|k| tau[k]).collect()
}

#[test]
fn cover_examples() {
    assert!(crews_can_cover(&[3, 2], 1, 5));
    assert!(!crews_can_cover(&[3, 3], 1, 5));
    assert!(crews_can_cover(&[3, 3, 2, 2], 2, 5));
    assert!(!crews_can_cover(&[4, 3, 3], 2, 5));
    assert!(!crews_can_cover(&[3, 3, 3], 2, 5));
    assert!(crews_can_cover(&[], 0, 5));
    assert!(!crews_can_cover(&[1], 0, 5));
}

proptest! {
    #[test]
    fn cover_matches_brute_force(times in prop::collection::vec(0u32..6, 0..7), teams in 0usize..4, hours in 0u32..9) {
        prop_assert_eq!(crews_can_cover(&times, teams, hours), brute_force_cover(&times, teams, hours));
    }

    #[test]
    fn cover_sets_are_exactly_the_minimal_unpackable_sets(tau in prop::collection::vec(1u32..5, 1..8), teams in 1usize..3, hours in 2u32..7) {
        let sets = crew_cover_sets(&tau, teams, hours);
        let masks: Vec<u32> = sets.iter().map(|s| s.iter().map(|k| 1u32 << k).sum()).collect();
        for m in 0..1u32 << tau.len() {
            let packs = brute_force_cover(&subset(&tau, m), teams, hours);
            let minimal = !packs && (0..tau.len()).filter(|k| m >> k & 1 == 1).all(|k| brute_force_cover(&subset(&tau, m & !(1 << k)), teams, hours));
            prop_assert_eq!(masks.contains(&m), minimal, "mask {:b}", m);
            prop_assert_eq!(packs, !masks.iter().any(|c| m & c == *c), "mask {:b}", m);
        }
    }
}

#[test]
fn sixbus_cover_sets() {
    // three 3-hour jobs cannot share two 5-hour crews; neither can two 3s with three 2s
    assert_eq!(
        crew_cover_sets(&[2, 3, 2, 3, 2, 3], 2, 5),
        vec![vec![1, 3, 5], vec![0, 1, 2, 3, 4], vec![0, 1, 2, 4, 5], vec![0, 2, 3, 4, 5]]
    );
}

#[test]
fn completion_is_feasible_for_every_packable_pattern() {
    let case = sixbus();
    let inst = milp::build(&case, &default_scenarios(&case).unwrap()).unwrap();
    let structure = inst.structure.as_ref().unwrap();
    let tau = case.protection_times().unwrap();
    let mut packable = 0;
    for mask in 0..64u32 {
        let theta: Vec<bool> = (0..6).map(|k| mask >> k & 1 == 1).collect();
        let fits = crews_can_cover(&subset(&tau, mask), 2, 5);
        match structure.complete(&inst.catalog, &theta) {
            Some(a) => {
                assert!(fits, "pattern {mask:06b}");
                let r = solver::warm_start_check(&inst, &a).unwrap();
                assert!(r.feasible, "pattern {mask:06b}: {:?}", r.violated);
                packable += 1;
            }
            None => assert!(!fits, "pattern {mask:06b}"),
        }
    }
    // supersets of {k2,k4,k6} plus the three five-site sets do not pack
    assert_eq!(packable, 64 - 8 - 3);
}
