//! Fixed-step closed-loop simulation.
//!
//! Manipulator states `(q, q̇)` advance with classical fourth-order
//! Runge-Kutta under the computed-torque law; estimator states advance with
//! forward Euler on the same grid, held constant across the RK stages. Every
//! formation and topology switch lands on a step boundary, so the
//! right-hand side is smooth within each step apart from the sig-power
//! terms.

use nalgebra::Vector2;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control::{estimator_rhs, inverse_dynamics_torque, reference_accel, AgentSignals, Gains, NeighborView};
use crate::dynamics::{LeaderSample, LeaderSpec, ManipulatorParams, DOF};
use crate::formation::{Formation, FormationSchedule};
use crate::graph::{Topology, TopologySchedule};
use crate::{Error, Result};

/// Name of the generator used for random initial states. Changing the
/// algorithm or the draw order must bump this string.
pub const PRNG_NAME: &str = "chacha8-uniform-v1";

/// Any state component above this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// One entry per agent.
    Explicit(Vec<AgentState>),
    /// Every component of every `q_i(0)`, `q̇_i(0)`, `a_i(0)` drawn
    /// independently from `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flags {
    /// Reject scenarios that break the convergence hypotheses (leader
    /// reachability in every topology, `β` above the leader jerk bound).
    pub faithful: bool,
    pub gravity: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            faithful: true,
            gravity: true,
        }
    }
}

/// What the scenario author expects the run to show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Expectation {
    #[default]
    Settle,
    /// Some agents are cut off from the leader and must fail to track it.
    TrackingFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub agents: Vec<ManipulatorParams>,
    pub topology: TopologySchedule,
    pub formations: FormationSchedule,
    pub leader: LeaderSpec,
    pub gains: Gains,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub seed: u64,
    pub init: InitSpec,
    pub flags: Flags,
    pub expect: Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub q: Vector2<f64>,
    pub qdot: Vector2<f64>,
    pub a_est: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub agents: Vec<AgentState>,
}

/// Returns the integer step count for `span`, or `None` when `span` is not
/// an integer multiple of `dt`.
fn grid_steps(span: f64, dt: f64) -> Option<u64> {
    let k = span / dt;
    let r = k.round();
    ((k - r).abs() <= GRID_TOL * r.max(1.0) && r >= 0.0).then_some(r as u64)
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn steps(&self) -> u64 {
        grid_steps(self.t_end - self.t0, self.dt).unwrap_or(0)
    }

    pub fn time_at(&self, step: u64) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    /// Every validation failure, with a path-like field name. Empty means
    /// the scenario may be run.
    pub fn validate(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        let n = self.agents.len();
        if n == 0 {
            errs.push(Error::invalid("agents", "at least one agent is required"));
        }
        for (i, p) in self.agents.iter().enumerate() {
            if let Err(Error::Invalid { field, reason }) = p.validate() {
                errs.push(Error::invalid(format!("agents[{i}].{field}"), reason));
            }
        }
        for (k, (_, topo)) in self.topology.entries().iter().enumerate() {
            if topo.n() != n {
                errs.push(Error::invalid(
                    format!("topology[{k}]"),
                    format!("has {} agents, scenario has {n}", topo.n()),
                ));
            }
            if self.flags.faithful && !topo.leader_reachable() {
                errs.push(Error::invalid(
                    format!("topology[{k}]"),
                    format!(
                        "leader cannot reach agents {:?} (set flags.faithful = false to run anyway)",
                        topo.unreached_agents()
                    ),
                ));
            }
        }
        if self.formations.n() != n {
            errs.push(Error::invalid(
                "formations",
                format!("have {} offsets, scenario has {n} agents", self.formations.n()),
            ));
        }
        if self.formations.dim() != DOF {
            errs.push(Error::invalid(
                "formations",
                format!("offsets must have {DOF} coordinates, got {}", self.formations.dim()),
            ));
        }
        if self.leader.dim() != DOF {
            errs.push(Error::invalid("leader", format!("must be {DOF}-dimensional, got {}", self.leader.dim())));
        }
        if let Err(Error::Invalid { field, reason }) = self.leader.validate() {
            errs.push(Error::invalid(field, reason));
        }
        if let LeaderSpec::Sampled(s) = &self.leader {
            let (lo, hi) = (s.times()[0], *s.times().last().unwrap());
            if self.t0 < lo || self.t_end > hi {
                errs.push(Error::invalid(
                    "leader.times",
                    format!("samples cover [{lo}, {hi}] but the run spans [{}, {}]", self.t0, self.t_end),
                ));
            }
        }
        let jerk = self.leader.jerk_bound();
        if self.flags.faithful && !(self.gains.beta() > jerk) {
            errs.push(Error::invalid(
                "gains.beta",
                format!("{} must exceed the leader jerk bound {jerk}", self.gains.beta()),
            ));
        }

        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(Error::invalid("integration.dt", format!("must be > 0, got {}", self.dt)));
            return errs;
        }
        if !(self.t0.is_finite() && self.t0 >= 0.0) {
            errs.push(Error::invalid("integration.t0", format!("must be >= 0, got {}", self.t0)));
        }
        if !(self.t_end > self.t0) {
            errs.push(Error::invalid("integration.t_end", "must be greater than t0"));
        } else if grid_steps(self.t_end - self.t0, self.dt).is_none() {
            errs.push(Error::invalid("integration.t_end", "run length must be an integer multiple of dt"));
        }
        if self.sample_every == 0 {
            errs.push(Error::invalid("integration.sample_every", "must be >= 1"));
        }
        if self.formations.start() != self.t0 {
            errs.push(Error::invalid("formations", "schedule must start at integration.t0"));
        }
        if self.topology.start() != self.t0 {
            errs.push(Error::invalid("topology_schedule[0].start", "must equal integration.t0"));
        }
        for (k, &t) in self.formations.switch_times().iter().enumerate() {
            if grid_steps(t - self.t0, self.dt).is_none() {
                errs.push(Error::invalid(
                    format!("switch_times[{k}]"),
                    format!("{t} is not on the integration grid (dt = {})", self.dt),
                ));
            }
        }
        for (k, t) in self.topology.switch_times().enumerate() {
            if grid_steps(t - self.t0, self.dt).is_none() {
                errs.push(Error::invalid(
                    format!("topology_schedule[{}].start", k + 1),
                    format!("{t} is not on the integration grid (dt = {})", self.dt),
                ));
            }
        }
        match &self.init {
            InitSpec::Explicit(states) => {
                if states.len() != n {
                    errs.push(Error::invalid("init.explicit", format!("expected {n} agents, got {}", states.len())));
                }
            }
            InitSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    errs.push(Error::invalid("init.uniform", format!("need finite lo <= hi, got [{lo}, {hi}]")));
                }
            }
        }
        errs
    }

    /// Agent parameters as used by the simulator (gravity removed when the
    /// gravity flag is off).
    pub fn effective_params(&self) -> Vec<ManipulatorParams> {
        self.agents
            .iter()
            .map(|p| if self.flags.gravity { *p } else { p.without_gravity() })
            .collect()
    }
}

/// Initial state. Random draws are agent-major: for each agent the two
/// components of `q`, then `q̇`, then `a`.
pub fn initial_state(scenario: &Scenario) -> Result<SystemState> {
    let n = scenario.n();
    let agents = match &scenario.init {
        InitSpec::Explicit(states) => {
            if states.len() != n {
                return Err(Error::Dimension {
                    context: "explicit initial state",
                    expected: n,
                    got: states.len(),
                });
            }
            states.clone()
        }
        InitSpec::Uniform { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            let dist = Uniform::new_inclusive(*lo, *hi);
            let mut draw = || Vector2::new(dist.sample(&mut rng), dist.sample(&mut rng));
            (0..n)
                .map(|_| {
                    let q = draw();
                    let qdot = draw();
                    let a_est = draw();
                    AgentState { q, qdot, a_est }
                })
                .collect()
        }
    };
    Ok(SystemState {
        t: scenario.t0,
        agents,
    })
}

/// Per-agent quantities recorded at a sample instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentRecord {
    pub q: [f64; 2],
    pub qdot: [f64; 2],
    pub a_est: [f64; 2],
    pub tau: [f64; 2],
    /// Reference acceleration `q̈_r` fed to the computed-torque law.
    pub qddot_cmd: [f64; 2],
    /// Acceleration produced by the manipulator model under `tau`.
    pub qddot: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogSample {
    pub t: f64,
    pub step: u64,
    pub formation_index: usize,
    pub topology_index: usize,
    pub leader: LeaderSample,
    pub agents: Vec<AgentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub sample_every: usize,
    pub samples: Vec<LogSample>,
    /// Largest `‖q̈ − q̈_r‖∞` over every RK stage of every step.
    pub max_linearization_residual: f64,
}

impl TrajectoryLog {
    pub fn n_agents(&self) -> usize {
        self.samples.first().map_or(0, |s| s.agents.len())
    }

    pub fn t_start(&self) -> f64 {
        self.samples.first().map_or(f64::NAN, |s| s.t)
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.t)
    }
}

/// Switch instants resolved to step indices.
struct Grid {
    formation_steps: Vec<u64>,
    topology_steps: Vec<u64>,
}

impl Grid {
    fn new(sc: &Scenario) -> Result<Self> {
        let to_step = |t: f64| {
            grid_steps(t - sc.t0, sc.dt).ok_or_else(|| Error::invalid("switch time", format!("{t} is not on the grid")))
        };
        Ok(Self {
            formation_steps: sc.formations.switch_times().iter().map(|&t| to_step(t)).collect::<Result<_>>()?,
            topology_steps: sc.topology.switch_times().map(to_step).collect::<Result<_>>()?,
        })
    }

    fn formation_index(&self, step: u64) -> usize {
        self.formation_steps.partition_point(|&s| s <= step)
    }

    fn topology_index(&self, step: u64) -> usize {
        self.topology_steps.partition_point(|&s| s <= step)
    }

    /// Time of `step`, snapped onto the exact switch instant when the step
    /// is a switch boundary.
    fn time(&self, sc: &Scenario, step: u64) -> f64 {
        if let Some(k) = self.formation_steps.iter().position(|&s| s == step) {
            return sc.formations.switch_times()[k];
        }
        if let Some(k) = self.topology_steps.iter().position(|&s| s == step) {
            return sc.topology.entries()[k + 1].0;
        }
        sc.time_at(step)
    }
}

/// Closed-loop evaluation of every agent at one instant.
struct Evaluation {
    qddot_cmd: Vec<Vector2<f64>>,
    tau: Vec<Vector2<f64>>,
    qddot: Vec<Vector2<f64>>,
    residual: f64,
}

fn evaluate(
    params: &[ManipulatorParams],
    topology: &Topology,
    formation: &Formation,
    gains: &Gains,
    leader: &LeaderSample,
    q: &[Vector2<f64>],
    qdot: &[Vector2<f64>],
    a_est: &[Vector2<f64>],
) -> Result<Evaluation> {
    let n = params.len();
    let signals: Vec<AgentSignals> = (0..n)
        .map(|i| AgentSignals {
            q: q[i].as_slice(),
            qdot: qdot[i].as_slice(),
            a_est: a_est[i].as_slice(),
            eta: formation.offset(i),
        })
        .collect();
    let mut out = Evaluation {
        qddot_cmd: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        qddot: Vec::with_capacity(n),
        residual: 0.0,
    };
    for i in 0..n {
        let view = NeighborView::gather(topology, i, &signals, leader);
        let r = reference_accel(&view, gains)?;
        let qr = Vector2::new(r[0], r[1]);
        let tau = inverse_dynamics_torque(&params[i], &q[i], &qdot[i], &qr);
        let acc = params[i].forward_dynamics(&q[i], &qdot[i], &tau);
        out.residual = out.residual.max((acc - qr).amax());
        out.qddot_cmd.push(qr);
        out.tau.push(tau);
        out.qddot.push(acc);
    }
    Ok(out)
}

/// One forward-Euler step of the sliding-mode estimators. Only `a_est` of
/// each agent is read; positions are irrelevant to the estimator.
pub fn estimator_step(
    topology: &Topology,
    gains: &Gains,
    leader: &LeaderSample,
    a_est: &[Vec<f64>],
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = a_est.len();
    let m = leader.a.len();
    let zeros = vec![0.0; m];
    let signals: Vec<AgentSignals> = a_est
        .iter()
        .map(|a| AgentSignals {
            q: &zeros,
            qdot: &zeros,
            a_est: a,
            eta: &zeros,
        })
        .collect();
    (0..n)
        .map(|i| {
            let view = NeighborView::gather(topology, i, &signals, leader);
            let rhs = estimator_rhs(&view, gains)?;
            Ok(a_est[i].iter().zip(&rhs).map(|(a, d)| a + dt * d).collect())
        })
        .collect()
}

/// Simulates the estimator network alone for `steps` steps and returns the
/// per-step estimates (including the initial one).
pub fn run_estimator(
    topology: &Topology,
    gains: &Gains,
    leader: &LeaderSpec,
    a_init: Vec<Vec<f64>>,
    t0: f64,
    dt: f64,
    steps: u64,
) -> Result<Vec<(f64, Vec<Vec<f64>>)>> {
    let mut out = Vec::with_capacity(steps as usize + 1);
    let mut a = a_init;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let l = leader.state(t)?;
        let next = estimator_step(topology, gains, &l, &a, dt)?;
        out.push((t, std::mem::replace(&mut a, next)));
    }
    out.push((t0 + steps as f64 * dt, a));
    Ok(out)
}

/// Integrates the cascade from the initial state and records every
/// `sample_every`-th step (plus the final one).
pub fn run(scenario: &Scenario) -> Result<TrajectoryLog> {
    if let Some(e) = scenario.validate().into_iter().next() {
        return Err(e);
    }
    let state = initial_state(scenario)?;
    run_from(scenario, state)
}

pub fn run_from(scenario: &Scenario, initial: SystemState) -> Result<TrajectoryLog> {
    let sc = scenario;
    let n = sc.n();
    let params = sc.effective_params();
    let grid = Grid::new(sc)?;
    let steps = sc.steps();
    let dt = sc.dt;

    let mut q: Vec<Vector2<f64>> = initial.agents.iter().map(|a| a.q).collect();
    let mut qdot: Vec<Vector2<f64>> = initial.agents.iter().map(|a| a.qdot).collect();
    let mut a_est: Vec<Vector2<f64>> = initial.agents.iter().map(|a| a.a_est).collect();

    let mut log = TrajectoryLog {
        dt,
        sample_every: sc.sample_every,
        samples: Vec::with_capacity((steps as usize) / sc.sample_every + 2),
        max_linearization_residual: 0.0,
    };

    for step in 0..=steps {
        let t = grid.time(sc, step);
        let fi = grid.formation_index(step);
        let ti = grid.topology_index(step);
        let formation = &sc.formations.formations()[fi];
        let topology = sc.topology.get(ti).expect("topology index in range");
        let leader = sc.leader.state(t)?;

        let k1 = evaluate(&params, topology, formation, &sc.gains, &leader, &q, &qdot, &a_est)?;
        log.max_linearization_residual = log.max_linearization_residual.max(k1.residual);

        if step % sc.sample_every as u64 == 0 || step == steps {
            log.samples.push(LogSample {
                t,
                step,
                formation_index: fi,
                topology_index: ti,
                leader: leader.clone(),
                agents: (0..n)
                    .map(|i| AgentRecord {
                        q: q[i].into(),
                        qdot: qdot[i].into(),
                        a_est: a_est[i].into(),
                        tau: k1.tau[i].into(),
                        qddot_cmd: k1.qddot_cmd[i].into(),
                        qddot: k1.qddot[i].into(),
                    })
                    .collect(),
            });
        }
        if step == steps {
            break;
        }

        // RK4 on (q, q̇) with the estimates frozen over the step.
        let stage = |dq: &[Vector2<f64>], dv: &[Vector2<f64>], h: f64, tt: f64| -> Result<(Vec<Vector2<f64>>, Evaluation)> {
            let qs: Vec<Vector2<f64>> = (0..n).map(|i| q[i] + dq[i] * h).collect();
            let vs: Vec<Vector2<f64>> = (0..n).map(|i| qdot[i] + dv[i] * h).collect();
            let l = sc.leader.state(tt)?;
            let e = evaluate(&params, topology, formation, &sc.gains, &l, &qs, &vs, &a_est)?;
            Ok((vs, e))
        };
        let v1 = qdot.clone();
        let (v2, k2) = stage(&v1, &k1.qddot, 0.5 * dt, t + 0.5 * dt)?;
        let (v3, k3) = stage(&v2, &k2.qddot, 0.5 * dt, t + 0.5 * dt)?;
        let (v4, k4) = stage(&v3, &k3.qddot, dt, t + dt)?;
        for r in [k2.residual, k3.residual, k4.residual] {
            log.max_linearization_residual = log.max_linearization_residual.max(r);
        }

        let a_vec: Vec<Vec<f64>> = a_est.iter().map(|a| a.as_slice().to_vec()).collect();
        let a_next = estimator_step(topology, &sc.gains, &leader, &a_vec, dt)?;

        for i in 0..n {
            q[i] += (v1[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]) * (dt / 6.0);
            qdot[i] += (k1.qddot[i] + 2.0 * k2.qddot[i] + 2.0 * k3.qddot[i] + k4.qddot[i]) * (dt / 6.0);
            a_est[i] = Vector2::new(a_next[i][0], a_next[i][1]);
        }

        let t_next = sc.time_at(step + 1);
        for i in 0..n {
            for (what, v) in [("q", &q[i]), ("qdot", &qdot[i]), ("a_est", &a_est[i])] {
                if v.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT) {
                    return Err(Error::Divergence {
                        t: t_next,
                        agent: i,
                        what: format!("{what} = [{}, {}]", v[0], v[1]),
                    });
                }
            }
        }
    }
    Ok(log)
}
