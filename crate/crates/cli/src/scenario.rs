//! JSON scenario files.
//!
//! Parsing happens in two passes: serde checks syntax and schema (unknown
//! keys are rejected and the failing path is reported), then every
//! semantic invariant of the core types is re-checked and reported with a
//! path into the document.

use std::path::Path;

use formation_core::control::{Gains, ShapingFunction, ShapingKind};
use formation_core::dynamics::{LeaderSpec, ManipulatorParams, SampledTrajectory};
use formation_core::formation::{center_formation, Formation, FormationSchedule};
use formation_core::graph::{Topology, TopologySchedule};
use formation_core::sim::{AgentState, Expectation, Flags, InitSpec, Scenario};
use formation_core::Error as CoreError;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: at {path}: {message}")]
    Schema {
        origin: String,
        path: String,
        message: String,
    },
    #[error("{origin}: {} validation error(s):\n  {}", issues.len(), issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("\n  "))]
    Semantic { origin: String, issues: Vec<Issue> },
}

impl ScenarioError {
    pub fn issues(&self) -> Vec<Issue> {
        match self {
            ScenarioError::Semantic { issues, .. } => issues.clone(),
            ScenarioError::Schema { path, message, .. } => vec![Issue {
                path: path.clone(),
                message: message.clone(),
            }],
            ScenarioError::Io { path, source } => vec![Issue {
                path: path.clone(),
                message: source.to_string(),
            }],
        }
    }
}

fn default_m() -> f64 {
    ManipulatorParams::default().m1
}
fn default_l() -> f64 {
    ManipulatorParams::default().l1
}
fn default_lc() -> f64 {
    ManipulatorParams::default().lc1
}
fn default_inertia() -> f64 {
    ManipulatorParams::default().i1
}
fn default_gravity() -> f64 {
    ManipulatorParams::default().gravity
}
fn default_true() -> bool {
    true
}
fn default_delta() -> f64 {
    1.0
}
fn default_sample_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    #[serde(default = "default_m")]
    pub m1: f64,
    #[serde(default = "default_m")]
    pub m2: f64,
    #[serde(default = "default_l")]
    pub l1: f64,
    #[serde(default = "default_l")]
    pub l2: f64,
    #[serde(default = "default_lc")]
    pub lc1: f64,
    #[serde(default = "default_lc")]
    pub lc2: f64,
    #[serde(default = "default_inertia")]
    pub i1: f64,
    #[serde(default = "default_inertia")]
    pub i2: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub weights: Vec<Vec<f64>>,
    pub pinning: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyEntryFile {
    pub start: f64,
    pub weights: Vec<Vec<f64>>,
    pub pinning: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderFile {
    Circle { center: [f64; 2], radius: f64, omega: f64 },
    Sampled { times: Vec<f64>, positions: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingKindFile {
    Linear,
    Saturation,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingFile {
    pub kind: ShapingKindFile,
    pub c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub alpha1: f64,
    pub beta: f64,
    pub phi: ShapingFile,
    pub psi: ShapingFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationFile {
    pub dt: f64,
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitAgentFile {
    pub q: [f64; 2],
    pub qdot: [f64; 2],
    pub a: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformFile {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitFile {
    Explicit(Vec<ExplicitAgentFile>),
    Uniform(UniformFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagsFile {
    #[serde(default = "default_true")]
    pub faithful: bool,
    #[serde(default = "default_true")]
    pub gravity: bool,
    /// Subtract each formation's centroid instead of rejecting it.
    #[serde(default)]
    pub auto_center: bool,
    /// Boundary-layer width replacing `sgn` in the estimator. Changes the
    /// control law; leave unset for the exact estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator_boundary_layer: Option<f64>,
}

impl Default for FlagsFile {
    fn default() -> Self {
        Self {
            faithful: true,
            gravity: true,
            auto_center: false,
            estimator_boundary_layer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectFile {
    #[default]
    Settle,
    TrackingFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub agents: Vec<AgentFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology_schedule: Option<Vec<TopologyEntryFile>>,
    pub formations: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub switch_times: Vec<f64>,
    pub leader: LeaderFile,
    pub gains: GainsFile,
    pub integration: IntegrationFile,
    pub init: InitFile,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub flags: FlagsFile,
    #[serde(default)]
    pub expect: ExpectFile,
}

/// Collects issues while converting, prefixing core error fields with the
/// document path they came from.
struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn core(&mut self, prefix: &str, err: CoreError) {
        match err {
            CoreError::Invalid { field, reason } => {
                let path = if prefix.is_empty() {
                    field
                } else if field.starts_with('[') {
                    format!("{prefix}{field}")
                } else {
                    format!("{prefix}.{field}")
                };
                self.push(path, reason)
            }
            other => self.push(prefix, other.to_string()),
        }
    }
}

fn shaping(f: &ShapingFile) -> Result<ShapingFunction, CoreError> {
    let kind = match f.kind {
        ShapingKindFile::Linear => ShapingKind::Linear,
        ShapingKindFile::Saturation => ShapingKind::Saturation,
        ShapingKindFile::Tanh => ShapingKind::Tanh,
    };
    ShapingFunction::new(kind, f.c, f.delta)
}

fn shaping_file(f: &ShapingFunction) -> ShapingFile {
    ShapingFile {
        kind: match f.kind() {
            ShapingKind::Linear => ShapingKindFile::Linear,
            ShapingKind::Saturation => ShapingKindFile::Saturation,
            ShapingKind::Tanh => ShapingKindFile::Tanh,
        },
        c: f.gain(),
        delta: f.scale(),
    }
}

impl ScenarioFile {
    /// Converts to a validated [`Scenario`], reporting every problem found.
    pub fn into_scenario(self) -> Result<Scenario, Vec<Issue>> {
        let mut issues = Issues(Vec::new());
        let t0 = self.integration.t0;

        let agents: Vec<ManipulatorParams> = self
            .agents
            .iter()
            .map(|a| ManipulatorParams {
                m1: a.m1,
                m2: a.m2,
                l1: a.l1,
                l2: a.l2,
                lc1: a.lc1,
                lc2: a.lc2,
                i1: a.i1,
                i2: a.i2,
                gravity: a.gravity,
            })
            .collect();

        let topology = match (&self.topology, &self.topology_schedule) {
            (Some(t), None) => Topology::from_rows(&t.weights, &t.pinning)
                .map(|topo| TopologySchedule::fixed(t0, topo))
                .map_err(|e| issues.core("topology", e))
                .ok(),
            (None, Some(entries)) => {
                let mut built = Vec::new();
                for (k, e) in entries.iter().enumerate() {
                    match Topology::from_rows(&e.weights, &e.pinning) {
                        Ok(t) => built.push((e.start, t)),
                        Err(err) => issues.core(&format!("topology_schedule[{k}]"), err),
                    }
                }
                if built.len() == entries.len() {
                    TopologySchedule::new(built).map_err(|e| issues.core("", e)).ok()
                } else {
                    None
                }
            }
            (Some(_), Some(_)) => {
                issues.push("topology", "give either `topology` or `topology_schedule`, not both");
                None
            }
            (None, None) => {
                issues.push("topology", "missing: give `topology` or `topology_schedule`");
                None
            }
        };

        let mut formations = Vec::new();
        for (s, offsets) in self.formations.iter().enumerate() {
            let built = if self.flags.auto_center {
                center_formation(offsets)
            } else {
                Formation::new(offsets.clone())
            };
            match built {
                Ok(f) => formations.push(f),
                Err(e) => issues.core(&format!("formations[{s}]"), e),
            }
        }
        let formation_schedule = if formations.len() == self.formations.len() && !formations.is_empty() {
            FormationSchedule::new(t0, formations, self.switch_times.clone())
                .map_err(|e| issues.core("", e))
                .ok()
        } else {
            if self.formations.is_empty() {
                issues.push("formations", "at least one formation is required");
            }
            None
        };

        let leader = match &self.leader {
            LeaderFile::Circle { center, radius, omega } => Some(LeaderSpec::Circle {
                center: *center,
                radius: *radius,
                omega: *omega,
            }),
            LeaderFile::Sampled { times, positions } => SampledTrajectory::new(times.clone(), positions.clone())
                .map(LeaderSpec::Sampled)
                .map_err(|e| match e {
                    CoreError::Invalid { field, reason } => issues.push(field, reason),
                    other => issues.push("leader", other.to_string()),
                })
                .ok(),
        };

        let phi = shaping(&self.gains.phi).map_err(|e| issues.core("gains.phi", e)).ok();
        let psi = shaping(&self.gains.psi).map_err(|e| issues.core("gains.psi", e)).ok();
        let gains = match (phi, psi) {
            (Some(phi), Some(psi)) => Gains::new(self.gains.alpha1, self.gains.beta, phi, psi)
                .and_then(|g| g.with_boundary_layer(self.flags.estimator_boundary_layer))
                .map_err(|e| match e {
                    CoreError::Invalid { field, reason } if field == "estimator_boundary_layer" => {
                        issues.push("flags.estimator_boundary_layer", reason)
                    }
                    other => issues.core("gains", other),
                })
                .ok(),
            _ => None,
        };

        let init = match &self.init {
            InitFile::Uniform(u) => InitSpec::Uniform { lo: u.lo, hi: u.hi },
            InitFile::Explicit(states) => InitSpec::Explicit(
                states
                    .iter()
                    .map(|s| AgentState {
                        q: Vector2::from(s.q),
                        qdot: Vector2::from(s.qdot),
                        a_est: Vector2::from(s.a),
                    })
                    .collect(),
            ),
        };

        let (Some(topology), Some(formations), Some(leader), Some(gains)) = (topology, formation_schedule, leader, gains) else {
            return Err(issues.0);
        };
        let scenario = Scenario {
            name: self.name,
            agents,
            topology,
            formations,
            leader,
            gains,
            t0,
            t_end: self.integration.t_end,
            dt: self.integration.dt,
            sample_every: self.integration.sample_every,
            seed: self.seed,
            init,
            flags: Flags {
                faithful: self.flags.faithful,
                gravity: self.flags.gravity,
            },
            expect: match self.expect {
                ExpectFile::Settle => Expectation::Settle,
                ExpectFile::TrackingFailure => Expectation::TrackingFailure,
            },
        };
        for e in scenario.validate() {
            issues.core("", e);
        }
        if issues.0.is_empty() {
            Ok(scenario)
        } else {
            Err(issues.0)
        }
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        let topo_rows = |t: &Topology| -> (Vec<Vec<f64>>, Vec<f64>) {
            let w = t.weights();
            (
                (0..t.n()).map(|i| (0..t.n()).map(|j| w[(i, j)]).collect()).collect(),
                t.pinning().iter().copied().collect(),
            )
        };
        let (topology, topology_schedule) = if sc.topology.len() == 1 {
            let (weights, pinning) = topo_rows(&sc.topology.entries()[0].1);
            (Some(TopologyFile { weights, pinning }), None)
        } else {
            let entries = sc
                .topology
                .entries()
                .iter()
                .map(|(start, t)| {
                    let (weights, pinning) = topo_rows(t);
                    TopologyEntryFile {
                        start: *start,
                        weights,
                        pinning,
                    }
                })
                .collect();
            (None, Some(entries))
        };
        ScenarioFile {
            name: sc.name.clone(),
            description: None,
            agents: sc
                .agents
                .iter()
                .map(|p| AgentFile {
                    m1: p.m1,
                    m2: p.m2,
                    l1: p.l1,
                    l2: p.l2,
                    lc1: p.lc1,
                    lc2: p.lc2,
                    i1: p.i1,
                    i2: p.i2,
                    gravity: p.gravity,
                })
                .collect(),
            topology,
            topology_schedule,
            formations: sc.formations.formations().iter().map(|f| f.offsets().to_vec()).collect(),
            switch_times: sc.formations.switch_times().to_vec(),
            leader: match &sc.leader {
                LeaderSpec::Circle { center, radius, omega } => LeaderFile::Circle {
                    center: *center,
                    radius: *radius,
                    omega: *omega,
                },
                LeaderSpec::Sampled(s) => LeaderFile::Sampled {
                    times: s.times().to_vec(),
                    positions: s.positions().to_vec(),
                },
            },
            gains: GainsFile {
                alpha1: sc.gains.alpha1(),
                beta: sc.gains.beta(),
                phi: shaping_file(sc.gains.phi()),
                psi: shaping_file(sc.gains.psi()),
            },
            integration: IntegrationFile {
                dt: sc.dt,
                t0: sc.t0,
                t_end: sc.t_end,
                sample_every: sc.sample_every,
            },
            init: match &sc.init {
                InitSpec::Uniform { lo, hi } => InitFile::Uniform(UniformFile { lo: *lo, hi: *hi }),
                InitSpec::Explicit(states) => InitFile::Explicit(
                    states
                        .iter()
                        .map(|s| ExplicitAgentFile {
                            q: s.q.into(),
                            qdot: s.qdot.into(),
                            a: s.a_est.into(),
                        })
                        .collect(),
                ),
            },
            seed: sc.seed,
            flags: FlagsFile {
                faithful: sc.flags.faithful,
                gravity: sc.flags.gravity,
                auto_center: false,
                estimator_boundary_layer: sc.gains.boundary_layer(),
            },
            expect: match sc.expect {
                Expectation::Settle => ExpectFile::Settle,
                Expectation::TrackingFailure => ExpectFile::TrackingFailure,
            },
        }
    }
}

/// Schema pass only: syntax, types and unknown keys.
pub fn parse_document(text: &str, origin: &str) -> Result<ScenarioFile, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScenarioError::Schema {
            origin: origin.to_string(),
            path: if path.is_empty() { ".".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

impl ScenarioFile {
    pub fn to_scenario(self, origin: &str) -> Result<Scenario, ScenarioError> {
        self.into_scenario().map_err(|issues| ScenarioError::Semantic {
            origin: origin.to_string(),
            issues,
        })
    }
}

/// Parses and validates scenario text. `origin` names the source in errors.
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    parse_document(text, origin)?.to_scenario(origin)
}

pub fn read_text(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    parse_scenario_str(&read_text(path)?, &path.display().to_string())
}

pub fn emit_scenario(sc: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(&ScenarioFile::from_scenario(sc)).expect("scenario serializes");
    s.push('\n');
    s
}
