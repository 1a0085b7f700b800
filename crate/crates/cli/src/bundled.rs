//! Scenarios shipped inside the binary.

pub const NAMES: [&str; 4] = ["paper-fig3", "corollary1-broken", "corollary2-switching", "single-agent"];

pub fn get(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    Some(match name {
        "paper-fig3" => include_str!("../scenarios/paper-fig3.json"),
        "corollary1-broken" => include_str!("../scenarios/corollary1-broken.json"),
        "corollary2-switching" => include_str!("../scenarios/corollary2-switching.json"),
        "single-agent" => include_str!("../scenarios/single-agent.json"),
        _ => return None,
    })
}

/// Parses a bundled scenario.
pub fn scenario(name: &str) -> Option<Result<formation_core::sim::Scenario, crate::scenario::ScenarioError>> {
    get(name).map(|text| crate::scenario::parse_scenario_str(text, name))
}
