//! Cases shipped with the crate.

use crate::domain::CaseModel;
use crate::scenario::ScenarioSet;

const SIXBUS: &str = include_str!("../../../cases/sixbus.json");
const SIXBUS_SCENARIOS: &str = include_str!("../../../cases/sixbus_scenarios.json");

/// The 6-bus flood study system.
pub fn sixbus() -> CaseModel {
    CaseModel::from_json_str(SIXBUS).expect("bundled case parses")
}

/// The four reference failure scenarios of the 6-bus case, normalized.
pub fn sixbus_scenarios() -> ScenarioSet {
    ScenarioSet::from_json_str(SIXBUS_SCENARIOS).expect("bundled scenarios parse")
}
