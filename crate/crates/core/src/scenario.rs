//! Substation failure scenarios and their probabilities.
//!
//! Substations fail independently, so a scenario's probability is the product
//! of the failure probability of every failed substation and the survival
//! probability of every surviving one. Reduced scenario sets no longer sum to
//! one and are renormalized over the retained scenarios.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{CaseModel, Substation};
use crate::error::{Error, Result};

/// Largest substation count accepted by exhaustive enumeration.
pub const MAX_ENUMERATED: usize = 20;

/// Tolerance for treating a probability vector as summing to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FailureScenario {
    pub id: String,
    /// Substation id → true when the substation fails in this scenario.
    pub failed: BTreeMap<String, bool>,
    pub raw_probability: f64,
    pub probability: f64,
}

impl FailureScenario {
    pub fn failed_ids(&self) -> Vec<&str> {
        self.failed
            .iter()
            .filter(|(_, f)| **f)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn fails(&self, substation: &str) -> bool {
        self.failed.get(substation).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioSet {
    pub scenarios: Vec<FailureScenario>,
    pub normalized: bool,
}

fn indicator_map_ser<S: Serializer>(map: &BTreeMap<String, bool>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        m.serialize_entry(k, &u8::from(*v))?;
    }
    m.end()
}

fn indicator_map_de<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, bool>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(u8),
        Bool(bool),
    }
    let raw = BTreeMap::<String, Flag>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| match v {
            Flag::Bool(b) => Ok((k, b)),
            Flag::Int(0) => Ok((k, false)),
            Flag::Int(1) => Ok((k, true)),
            Flag::Int(x) => Err(serde::de::Error::custom(format!(
                "failure indicator for {k} must be 0 or 1, got {x}"
            ))),
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioRecord {
    id: String,
    #[serde(serialize_with = "indicator_map_ser", deserialize_with = "indicator_map_de")]
    failed: BTreeMap<String, bool>,
    probability: f64,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.probability).collect()
    }

    /// Parses a scenario file. Listed probabilities are taken as raw weights
    /// and renormalized; a warning is logged when they were off by more than
    /// 1e-6.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let records: Vec<ScenarioRecord> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let set = ScenarioSet {
            scenarios: records
                .into_iter()
                .map(|r| FailureScenario {
                    id: r.id,
                    failed: r.failed,
                    raw_probability: r.probability,
                    probability: r.probability,
                })
                .collect(),
            normalized: false,
        };
        let total: f64 = set.scenarios.iter().map(|s| s.raw_probability).sum();
        if (total - 1.0).abs() > 1e-6 {
            log::warn!("scenario probabilities sum to {total}; renormalizing");
        }
        normalize(&set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        let records: Vec<ScenarioRecord> = self
            .scenarios
            .iter()
            .map(|s| ScenarioRecord {
                id: s.id.clone(),
                failed: s.failed.clone(),
                probability: s.probability,
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("scenario records serialize")
    }

    /// Failure indicators as a `[scenario][substation]` matrix in case order.
    /// Every scenario must name exactly the case's substations.
    pub fn failure_matrix(&self, case: &CaseModel) -> Result<Vec<Vec<bool>>> {
        let ids: BTreeSet<&str> = case.substations.iter().map(|s| s.id.as_str()).collect();
        self.scenarios
            .iter()
            .map(|sc| {
                let keys: BTreeSet<&str> = sc.failed.keys().map(String::as_str).collect();
                if keys != ids {
                    let missing: Vec<&str> = ids.difference(&keys).copied().collect();
                    let extra: Vec<&str> = keys.difference(&ids).copied().collect();
                    return Err(Error::Scenario(format!(
                        "scenario {}: missing substations [{}], unknown substations [{}]",
                        sc.id,
                        missing.join(", "),
                        extra.join(", ")
                    )));
                }
                Ok(case.substations.iter().map(|s| sc.failed[&s.id]).collect())
            })
            .collect()
    }

    /// Checks the set invariants: unique ids, probabilities in [0, 1] and,
    /// when normalized, summing to one.
    pub fn check(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for s in &self.scenarios {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Scenario(format!("duplicate scenario id {}", s.id)));
            }
            for p in [s.raw_probability, s.probability] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Scenario(format!(
                        "scenario {} has probability {p} outside [0, 1]",
                        s.id
                    )));
                }
            }
        }
        if self.normalized {
            let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
            if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::Scenario(format!("normalized probabilities sum to {total}")));
            }
        }
        Ok(())
    }
}

pub fn failure_probabilities(subs: &[Substation]) -> BTreeMap<String, f64> {
    subs.iter().map(|s| (s.id.clone(), s.failure_probability)).collect()
}

/// Independent-failure probability of one indicator vector.
pub fn raw_scenario_probability(
    failed: &BTreeMap<String, bool>,
    fail_probs: &BTreeMap<String, f64>,
) -> Result<f64> {
    let missing: Vec<&str> = fail_probs
        .keys()
        .filter(|k| !failed.contains_key(*k))
        .chain(failed.keys().filter(|k| !fail_probs.contains_key(*k)))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Scenario(format!(
            "indicator and probability maps disagree on substations: {}",
            missing.join(", ")
        )));
    }
    Ok(failed
        .iter()
        .map(|(k, f)| {
            let p = fail_probs[k];
            if *f {
                p
            } else {
                1.0 - p
            }
        })
        .product())
}

/// Rescales probabilities to `raw / Σ raw`.
pub fn normalize(set: &ScenarioSet) -> Result<ScenarioSet> {
    let total: f64 = set.scenarios.iter().map(|s| s.raw_probability).sum();
    if set.scenarios.iter().any(|s| !(s.raw_probability >= 0.0 && s.raw_probability.is_finite())) {
        return Err(Error::Scenario("raw probabilities must be finite and >= 0".into()));
    }
    if total <= 0.0 {
        return Err(Error::Scenario(
            "degenerate scenario set: every raw probability is zero".into(),
        ));
    }
    let out = ScenarioSet {
        scenarios: set
            .scenarios
            .iter()
            .map(|s| FailureScenario {
                probability: s.raw_probability / total,
                ..s.clone()
            })
            .collect(),
        normalized: true,
    };
    out.check()?;
    Ok(out)
}

fn scenario_from_mask(id: String, subs: &[Substation], mask: u64) -> FailureScenario {
    let failed: BTreeMap<String, bool> = subs
        .iter()
        .enumerate()
        .map(|(k, s)| (s.id.clone(), mask >> k & 1 == 1))
        .collect();
    let raw = mask_probability(subs, mask);
    FailureScenario {
        id,
        failed,
        raw_probability: raw,
        probability: raw,
    }
}

fn mask_probability(subs: &[Substation], mask: u64) -> f64 {
    subs.iter()
        .enumerate()
        .map(|(k, s)| {
            if mask >> k & 1 == 1 {
                s.failure_probability
            } else {
                1.0 - s.failure_probability
            }
        })
        .product()
}

fn enumeration_guard(subs: &[Substation]) -> Result<()> {
    if subs.len() > MAX_ENUMERATED {
        return Err(Error::Scenario(format!(
            "{} substations exceed the enumeration limit of {MAX_ENUMERATED}",
            subs.len()
        )));
    }
    Ok(())
}

/// All `2^K` failure combinations; bit `k` of the scenario index is the
/// indicator of substation `k`. Raw probabilities are the independent
/// products, which already sum to one up to rounding.
pub fn enumerate_all(subs: &[Substation]) -> Result<ScenarioSet> {
    enumeration_guard(subs)?;
    normalize(&ScenarioSet {
        scenarios: (0..1u64 << subs.len())
            .map(|mask| scenario_from_mask(format!("e{mask}"), subs, mask))
            .collect(),
        normalized: false,
    })
}

/// One scenario per depth cut `d`: exactly the substations with mean flood
/// depth `≥ d` fail. Cuts must be strictly decreasing, which makes the
/// failure sets nested.
pub fn nested_severity_reduction(subs: &[Substation], depth_thresholds: &[f64]) -> Result<ScenarioSet> {
    if depth_thresholds.is_empty() {
        return Err(Error::Scenario("at least one depth threshold is required".into()));
    }
    for (j, d) in depth_thresholds.iter().enumerate() {
        if !d.is_finite() || *d < 0.0 {
            return Err(Error::Scenario(format!("threshold {d} must be finite and >= 0")));
        }
        if j > 0 {
            let prev = depth_thresholds[j - 1];
            if *d == prev {
                return Err(Error::Scenario(format!("duplicate threshold {d}")));
            }
            if *d > prev {
                return Err(Error::Scenario(format!(
                    "thresholds must be strictly decreasing, {prev} is followed by {d}"
                )));
            }
        }
    }
    let fail_probs = failure_probabilities(subs);
    let mut scenarios = Vec::with_capacity(depth_thresholds.len());
    for (j, d) in depth_thresholds.iter().enumerate() {
        let failed: BTreeMap<String, bool> = subs
            .iter()
            .map(|s| (s.id.clone(), s.mean_flood_depth >= *d))
            .collect();
        let raw = raw_scenario_probability(&failed, &fail_probs)?;
        scenarios.push(FailureScenario {
            id: format!("S{}", j + 1),
            failed,
            raw_probability: raw,
            probability: raw,
        });
    }
    normalize(&ScenarioSet {
        scenarios,
        normalized: false,
    })
}

/// Scenario set used when none is given: nested depth cuts from the case
/// when it lists thresholds, otherwise every failure combination.
pub fn default_scenarios(case: &CaseModel) -> Result<ScenarioSet> {
    match &case.scenario_thresholds {
        Some(th) => nested_severity_reduction(&case.substations, th),
        None => enumerate_all(&case.substations),
    }
}

/// The single scenario in which every substation fails, with probability 1.
pub fn all_fail(case: &CaseModel) -> ScenarioSet {
    let failed = case.substations.iter().map(|s| (s.id.clone(), true)).collect();
    ScenarioSet {
        scenarios: vec![FailureScenario {
            id: "all".into(),
            failed,
            raw_probability: 1.0,
            probability: 1.0,
        }],
        normalized: true,
    }
}

/// The `n` most probable scenarios of the full enumeration, normalized.
/// Equal probabilities are ordered by their sorted failed-id lists.
pub fn top_n_by_probability(subs: &[Substation], n: usize) -> Result<ScenarioSet> {
    enumeration_guard(subs)?;
    if n == 0 {
        return Err(Error::Scenario("top-N needs N >= 1".into()));
    }
    let failed_names = |mask: u64| -> Vec<&str> {
        let mut v: Vec<&str> = subs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, s)| s.id.as_str())
            .collect();
        v.sort_unstable();
        v
    };
    let mut masks: Vec<(u64, f64)> = (0..1u64 << subs.len())
        .map(|m| (m, mask_probability(subs, m)))
        .collect();
    masks.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| failed_names(a.0).cmp(&failed_names(b.0)))
    });
    masks.truncate(n);
    let scenarios = masks
        .iter()
        .enumerate()
        .map(|(j, (m, _))| scenario_from_mask(format!("T{}", j + 1), subs, *m))
        .collect();
    normalize(&ScenarioSet {
        scenarios,
        normalized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::sixbus;
    use proptest::prelude::*;

    fn indicators(all: &[&str], failed: &[&str]) -> BTreeMap<String, bool> {
        all.iter()
            .map(|k| (k.to_string(), failed.contains(k)))
            .collect()
    }

    const K: [&str; 6] = ["k1", "k2", "k3", "k4", "k5", "k6"];

    /// Brute-force oracle: sums the enumeration entries matching `failed`.
    fn enumeration_oracle(subs: &[Substation], failed: &BTreeMap<String, bool>) -> f64 {
        enumerate_all(subs)
            .unwrap()
            .scenarios
            .iter()
            .filter(|s| &s.failed == failed)
            .map(|s| s.raw_probability)
            .sum()
    }

    #[test]
    fn raw_probability_examples() {
        let subs = sixbus().substations;
        let probs = failure_probabilities(&subs);
        let all = raw_scenario_probability(&indicators(&K, &K), &probs).unwrap();
        // 0.115·0.276·0.235·0.361·0.154·0.404
        let direct = 0.115 * 0.276 * 0.235 * 0.361 * 0.154 * 0.404;
        assert!((all - 1.675e-4).abs() < 1e-7, "{all}");
        assert!((all - direct).abs() < 1e-15);

        let only6 = raw_scenario_probability(&indicators(&K, &["k6"]), &probs).unwrap();
        let direct = 0.885 * 0.724 * 0.765 * 0.639 * 0.846 * 0.404;
        assert!((only6 - 0.10705).abs() < 1e-5, "{only6}");
        assert!((only6 - direct).abs() < 1e-12);

        let zero: BTreeMap<String, f64> = K.iter().map(|k| (k.to_string(), 0.0)).collect();
        assert_eq!(raw_scenario_probability(&indicators(&K, &[]), &zero).unwrap(), 1.0);
    }

    #[test]
    fn raw_probability_rejects_mismatched_keys() {
        let probs = failure_probabilities(&sixbus().substations);
        let err = raw_scenario_probability(&indicators(&K[..4], &[]), &probs)
            .unwrap_err()
            .to_string();
        assert!(err.contains("k5") && err.contains("k6"), "{err}");
    }

    #[test]
    fn nested_reduction_reproduces_reference_scenarios() {
        let subs = sixbus().substations;
        let set = nested_severity_reduction(&subs, &[1.2, 1.1, 0.8, 0.5]).unwrap();
        let sets: Vec<Vec<&str>> = set.scenarios.iter().map(|s| s.failed_ids()).collect();
        assert_eq!(
            sets,
            vec![
                vec!["k6"],
                vec!["k4", "k6"],
                vec!["k2", "k3", "k4", "k6"],
                vec!["k1", "k2", "k3", "k4", "k5", "k6"],
            ]
        );
        let expected = [0.612, 0.346, 0.041, 9.6e-4];
        for (s, e) in set.scenarios.iter().zip(expected) {
            assert!((s.probability - e).abs() <= 1e-3, "{} {} vs {e}", s.id, s.probability);
        }
        assert!(set.normalized);
    }

    #[test]
    fn nested_reduction_edge_cases() {
        let subs = sixbus().substations;
        let one = nested_severity_reduction(&subs, &[0.0]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.scenarios[0].failed_ids().len(), 6);
        assert_eq!(one.scenarios[0].probability, 1.0);

        let none = nested_severity_reduction(&subs, &[5.0]).unwrap();
        assert!(none.scenarios[0].failed_ids().is_empty());
        assert_eq!(none.scenarios[0].probability, 1.0);

        assert!(nested_severity_reduction(&subs, &[1.0, 1.0]).is_err());
        assert!(nested_severity_reduction(&subs, &[0.5, 1.0]).is_err());
        assert!(nested_severity_reduction(&subs, &[]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let mk = |raws: &[f64]| ScenarioSet {
            scenarios: raws
                .iter()
                .enumerate()
                .map(|(j, r)| FailureScenario {
                    id: format!("s{j}"),
                    failed: BTreeMap::new(),
                    raw_probability: *r,
                    probability: *r,
                })
                .collect(),
            normalized: false,
        };
        assert_eq!(normalize(&mk(&[0.2])).unwrap().scenarios[0].probability, 1.0);
        let eq = normalize(&mk(&[0.3, 0.3])).unwrap();
        assert_eq!(eq.probabilities(), vec![0.5, 0.5]);
        assert!(normalize(&mk(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let subs = sixbus().substations;
        let all = enumerate_all(&subs).unwrap();
        assert_eq!(all.len(), 64);
        let total: f64 = all.scenarios.iter().map(|s| s.raw_probability).sum();
        assert!((total - 1.0).abs() < 1e-9);

        let mut single = subs[..1].to_vec();
        single[0].failure_probability = 0.3;
        let two = enumerate_all(&single).unwrap();
        let raws: Vec<f64> = two.scenarios.iter().map(|s| s.raw_probability).collect();
        assert_eq!(raws, vec![0.7, 0.3]);

        let empty = enumerate_all(&[]).unwrap();
        assert_eq!(empty.len(), 1);
        assert_eq!(empty.scenarios[0].raw_probability, 1.0);

        let many: Vec<Substation> = (0..21)
            .map(|i| Substation { id: format!("k{i}"), ..subs[0].clone() })
            .collect();
        assert!(enumerate_all(&many).is_err());
    }

    #[test]
    fn top_n_keeps_most_probable() {
        let subs = sixbus().substations;
        let top = top_n_by_probability(&subs, 3).unwrap();
        assert_eq!(top.len(), 3);
        assert!(top.scenarios[0].failed_ids().is_empty());
        assert!(top.scenarios[0].raw_probability >= top.scenarios[1].raw_probability);
        let total: f64 = top.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        // equal probabilities order by failed-id list: [] < [a] < [b]
        let mut tie = subs[..2].to_vec();
        tie[0].failure_probability = 0.5;
        tie[1].failure_probability = 0.5;
        let t = top_n_by_probability(&tie, 4).unwrap();
        let order: Vec<Vec<&str>> = t.scenarios.iter().map(|s| s.failed_ids()).collect();
        assert_eq!(order, vec![vec![], vec!["k1"], vec!["k1", "k2"], vec!["k2"]]);
    }

    #[test]
    fn scenario_file_round_trip_renormalizes() {
        let text = r#"[
            {"id": "a", "failed": {"k1": 1, "k2": 0}, "probability": 0.3},
            {"id": "b", "failed": {"k1": 0, "k2": true}, "probability": 0.1}
        ]"#;
        let set = ScenarioSet::from_json_str(text).unwrap();
        assert!((set.scenarios[0].probability - 0.75).abs() < 1e-12);
        assert!(set.scenarios[1].fails("k2"));
        let again = ScenarioSet::from_json_str(&set.to_json()).unwrap();
        for (a, b) in again.probabilities().iter().zip(set.probabilities()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(set.to_json().contains("\"k1\": 1"));

        let bad = r#"[{"id": "a", "failed": {"k1": 2}, "probability": 1.0}]"#;
        assert!(ScenarioSet::from_json_str(bad).is_err());
    }

    fn small_subs() -> impl Strategy<Value = Vec<Substation>> {
        proptest::collection::vec(0.0f64..=1.0, 0..8).prop_map(|ps| {
            let base = sixbus().substations[0].clone();
            ps.into_iter()
                .enumerate()
                .map(|(k, p)| Substation {
                    id: format!("k{k}"),
                    failure_probability: p,
                    ..base.clone()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn enumeration_sums_to_one(subs in small_subs()) {
            let total: f64 = enumerate_all(&subs).unwrap().scenarios.iter().map(|s| s.raw_probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn product_matches_enumeration_oracle(subs in small_subs(), mask in any::<u64>()) {
            let failed: BTreeMap<String, bool> = subs.iter().enumerate()
                .map(|(k, s)| (s.id.clone(), mask >> k & 1 == 1)).collect();
            let direct = raw_scenario_probability(&failed, &failure_probabilities(&subs)).unwrap();
            prop_assert!((direct - enumeration_oracle(&subs, &failed)).abs() < 1e-12);
        }

        #[test]
        fn normalize_preserves_ratios(raws in proptest::collection::vec(0.0f64..1.0, 1..10)) {
            prop_assume!(raws.iter().sum::<f64>() > 1e-6);
            let set = ScenarioSet {
                scenarios: raws.iter().enumerate().map(|(j, r)| FailureScenario {
                    id: format!("s{j}"), failed: BTreeMap::new(), raw_probability: *r, probability: *r,
                }).collect(),
                normalized: false,
            };
            let n = normalize(&set).unwrap();
            for a in &n.scenarios {
                for b in &n.scenarios {
                    if b.raw_probability > 1e-6 {
                        let lhs = a.probability / b.probability;
                        let rhs = a.raw_probability / b.raw_probability;
                        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
                    }
                }
            }
        }

        #[test]
        fn nested_sets_are_nested(mut cuts in proptest::collection::btree_set(0u32..200, 1..6)) {
            let subs = sixbus().substations;
            let thresholds: Vec<f64> = std::mem::take(&mut cuts).into_iter().rev().map(|c| f64::from(c) / 100.0).collect();
            let set = nested_severity_reduction(&subs, &thresholds).unwrap();
            for w in set.scenarios.windows(2) {
                let a: BTreeSet<&str> = w[0].failed_ids().into_iter().collect();
                let b: BTreeSet<&str> = w[1].failed_ids().into_iter().collect();
                prop_assert!(a.is_subset(&b));
            }
        }
    }
}
