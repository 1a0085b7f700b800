//! Scenario files, runs, sweeps and result emission for the formation
//! tracking simulator in `formation_core`.
//!
//! A scenario is a JSON document; [`scenario::parse_scenario`] turns it into
//! a validated [`formation_core::sim::Scenario`]. [`analysis::execute`] runs
//! it and evaluates every applicable check, and [`output::write_outputs`]
//! writes CSV logs, a `key = value` report and two SVG plots.

pub mod analysis;
pub mod bundled;
pub mod commands;
pub mod output;
pub mod scenario;
pub mod svg;
