//! Tracking errors and the checks built on them: settle times, estimator
//! settle bound, Lyapunov monotonicity, homogeneity and the necessity of
//! leader reachability.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control::{estimator_settle_bound, sig_scalar, Gains, ShapingFunction, ShapingKind};
use crate::dynamics::LeaderSpec;
use crate::formation::FormationSchedule;
use crate::graph::Topology;
use crate::sim::{self, InitSpec, Scenario, SystemState, TrajectoryLog};
use crate::{Error, Result};

/// Default settle tolerance on `‖q̄_i‖`.
pub const POSITION_TOL: f64 = 1e-2;
/// Default settle tolerance on `‖q̄̇_i‖`.
pub const VELOCITY_TOL: f64 = 5e-2;

fn norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Error norms per sample (outer index) and agent (inner index).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub formation_index: Vec<usize>,
    pub topology_index: Vec<usize>,
    /// `‖q_i − η_{σ(t)i} − x₀‖`
    pub position: Vec<Vec<f64>>,
    /// `‖q̇_i − v₀‖`
    pub velocity: Vec<Vec<f64>>,
    /// `‖a_i − a₀‖`
    pub estimator: Vec<Vec<f64>>,
    /// `‖a_i − a₀‖∞`
    pub estimator_inf: Vec<Vec<f64>>,
    /// `‖(1/n) Σ q_i − x₀‖`
    pub centroid: Vec<f64>,
    /// `max_{i,j} ‖q̄_ij‖`
    pub max_pairwise: Vec<f64>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.position.first().map_or(0, Vec::len)
    }

    /// Index of the sample nearest to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s < t);
        match (k.checked_sub(1), (k < self.times.len()).then_some(k)) {
            (Some(a), Some(b)) => Some(if t - self.times[a] <= self.times[b] - t { a } else { b }),
            (a, b) => a.or(b),
        }
    }
}

pub fn error_series(log: &TrajectoryLog, fs: &FormationSchedule, leader: &LeaderSpec) -> Result<ErrorSeries> {
    let Some(first) = log.samples.first() else {
        return Err(Error::invalid("log", "trajectory log is empty"));
    };
    let n = first.agents.len();
    if fs.n() != n {
        return Err(Error::Dimension {
            context: "formation schedule agent count",
            expected: n,
            got: fs.n(),
        });
    }
    if first.t < fs.start() {
        return Err(Error::BeforeStart {
            t: first.t,
            start: fs.start(),
        });
    }
    let cap = log.samples.len();
    let mut es = ErrorSeries {
        times: Vec::with_capacity(cap),
        formation_index: Vec::with_capacity(cap),
        topology_index: Vec::with_capacity(cap),
        position: Vec::with_capacity(cap),
        velocity: Vec::with_capacity(cap),
        estimator: Vec::with_capacity(cap),
        estimator_inf: Vec::with_capacity(cap),
        centroid: Vec::with_capacity(cap),
        max_pairwise: Vec::with_capacity(cap),
    };
    for s in &log.samples {
        let (fi, formation) = fs.formation_at(s.t)?;
        if fi != s.formation_index {
            return Err(Error::invalid(
                "log",
                format!(
                    "sample at t = {} used formation {} but the schedule selects {fi}",
                    s.t, s.formation_index
                ),
            ));
        }
        let l = leader.state(s.t)?;
        let qbar: Vec<[f64; 2]> = s
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let eta = formation.offset(i);
                [a.q[0] - eta[0] - l.x[0], a.q[1] - eta[1] - l.x[1]]
            })
            .collect();
        es.position.push(qbar.iter().map(|e| norm(*e)).collect());
        es.velocity
            .push(s.agents.iter().map(|a| norm([a.qdot[0] - l.v[0], a.qdot[1] - l.v[1]])).collect());
        es.estimator
            .push(s.agents.iter().map(|a| norm([a.a_est[0] - l.a[0], a.a_est[1] - l.a[1]])).collect());
        es.estimator_inf.push(
            s.agents
                .iter()
                .map(|a| (a.a_est[0] - l.a[0]).abs().max((a.a_est[1] - l.a[1]).abs()))
                .collect(),
        );
        let nf = n as f64;
        let cx = s.agents.iter().map(|a| a.q[0]).sum::<f64>() / nf - l.x[0];
        let cy = s.agents.iter().map(|a| a.q[1]).sum::<f64>() / nf - l.x[1];
        es.centroid.push(norm([cx, cy]));
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max(norm([qbar[i][0] - qbar[j][0], qbar[i][1] - qbar[j][1]]));
            }
        }
        es.max_pairwise.push(worst);
        es.times.push(s.t);
        es.formation_index.push(s.formation_index);
        es.topology_index.push(s.topology_index);
    }
    Ok(es)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleTolerance {
    pub position: f64,
    pub velocity: f64,
}

impl Default for SettleTolerance {
    fn default() -> Self {
        Self {
            position: POSITION_TOL,
            velocity: VELOCITY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSettle {
    pub index: usize,
    pub start: f64,
    /// `None` for the last, open-ended interval (closed by the log's end).
    pub end: Option<f64>,
    /// First sample time after which every error stays within tolerance
    /// until the interval ends; `None` if that never happens.
    pub settle_time: Option<f64>,
}

impl IntervalSettle {
    pub fn settled(&self) -> bool {
        self.settle_time.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleReport {
    pub intervals: Vec<IntervalSettle>,
    /// Measured time after which every `‖ā_i‖∞` stays under the estimator
    /// threshold.
    pub estimator_settle: Option<f64>,
    /// Theoretical upper bound `T_f` on the estimator settle time.
    pub estimator_bound: Option<f64>,
}

impl SettleReport {
    pub fn all_settled(&self) -> bool {
        self.intervals.iter().all(IntervalSettle::settled)
    }
}

pub fn settle_report(es: &ErrorSeries, fs: &FormationSchedule, tol: SettleTolerance) -> SettleReport {
    let all: Vec<usize> = (0..es.n_agents()).collect();
    settle_report_for(es, fs, tol, &all)
}

/// Like [`settle_report`] but only the listed agents are considered.
pub fn settle_report_for(es: &ErrorSeries, fs: &FormationSchedule, tol: SettleTolerance, agents: &[usize]) -> SettleReport {
    let within = |k: usize| {
        agents
            .iter()
            .all(|&i| es.position[k][i] < tol.position && es.velocity[k][i] < tol.velocity)
    };
    let intervals = (0..fs.formations().len())
        .map(|s| {
            let start = fs.interval_start(s);
            let end = fs.interval_end(s);
            let lo = es.times.partition_point(|&t| t < start);
            let hi = end.map_or(es.len(), |e| es.times.partition_point(|&t| t < e));
            let mut settle_time = None;
            if lo < hi && within(hi - 1) {
                let mut k = hi - 1;
                while k > lo && within(k - 1) {
                    k -= 1;
                }
                settle_time = Some(es.times[k]);
            }
            IntervalSettle {
                index: s,
                start,
                end,
                settle_time,
            }
        })
        .collect();
    SettleReport {
        intervals,
        estimator_settle: None,
        estimator_bound: None,
    }
}

/// First sample time after which `max_i ‖ā_i‖∞ < threshold` holds for the
/// rest of the series.
pub fn estimator_settle_time(es: &ErrorSeries, threshold: f64) -> Option<f64> {
    let below = |k: usize| es.estimator_inf[k].iter().all(|&e| e < threshold);
    let last = es.len().checked_sub(1)?;
    if !below(last) {
        return None;
    }
    let mut k = last;
    while k > 0 && below(k - 1) {
        k -= 1;
    }
    Some(es.times[k])
}

/// Estimator threshold used for settle measurements: `10·β·dt`.
pub fn estimator_threshold(gains: &Gains, dt: f64) -> f64 {
    10.0 * gains.beta() * dt
}

/// `T_f` for the scenario's initial topology and a concrete initial state.
pub fn scenario_estimator_bound(sc: &Scenario, init: &SystemState) -> Result<f64> {
    let topo = sc.topology.topology_at(sc.t0)?;
    let a0 = sc.leader.state(sc.t0)?.a;
    let abar: Vec<f64> = init
        .agents
        .iter()
        .flat_map(|a| [a.a_est[0] - a0[0], a.a_est[1] - a0[1]])
        .collect();
    estimator_settle_bound(sc.t0, topo, &abar, 2, sc.gains.beta(), sc.leader.jerk_bound())
}

/// Largest `T_f` over every initial estimate the scenario's init box allows.
/// `V₀` is convex in `ā`, so the maximum sits on a vertex of the box; vertices
/// are enumerated exactly up to 2²⁰ of them, beyond that the bound
/// `V₀ ≤ ½ λ_max ‖ā‖²` is used instead.
pub fn worst_case_estimator_bound(sc: &Scenario) -> Result<f64> {
    let init = match &sc.init {
        InitSpec::Explicit(_) => return scenario_estimator_bound(sc, &sim::initial_state(sc)?),
        InitSpec::Uniform { lo, hi } => (*lo, *hi),
    };
    let topo = sc.topology.topology_at(sc.t0)?;
    let a0 = sc.leader.state(sc.t0)?.a;
    let (beta, jerk) = (sc.gains.beta(), sc.leader.jerk_bound());
    let n = sc.n();
    let dims = 2 * n;
    let corners: Vec<[f64; 2]> = (0..dims).map(|k| [init.0 - a0[k % 2], init.1 - a0[k % 2]]).collect();
    if dims <= 20 {
        let mut worst = f64::NEG_INFINITY;
        let mut abar = vec![0.0; dims];
        for mask in 0u64..(1u64 << dims) {
            for (k, c) in corners.iter().enumerate() {
                abar[k] = c[((mask >> k) & 1) as usize];
            }
            worst = worst.max(estimator_settle_bound(sc.t0, topo, &abar, 2, beta, jerk)?);
        }
        Ok(worst)
    } else {
        let (lmin, lmax) = topo.spectral_bounds()?;
        let sq: f64 = corners.iter().map(|c| c[0].abs().max(c[1].abs()).powi(2)).sum();
        let v0 = 0.5 * lmax * sq;
        if !(beta > jerk) {
            return Err(Error::Assumption(format!("beta = {beta} must exceed the leader jerk bound {jerk}")));
        }
        Ok(sc.t0 + (2.0 * lmax * v0).sqrt() / (lmin * (beta - jerk)))
    }
}

/// `∫₀^y f(sig(σ)^α) dσ` for one scalar.
fn shaping_potential(f: &ShapingFunction, alpha: f64, y: f64) -> f64 {
    if f.kind() == ShapingKind::Linear {
        return f.gain() * y.abs().powf(alpha + 1.0) / (alpha + 1.0);
    }
    let g = |s: f64| f.apply_scalar(sig_scalar(s, alpha));
    adaptive_simpson(&g, 0.0, y, 1e-10, 60)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)
}

/// `V = Σ_k ∫₀^{y_k} φ(sig(σ)^{α₁}) dσ + ½ q̄̇ᵀ (B ⊗ I) q̄̇` with `y = (B ⊗ I) q̄`.
pub fn lyapunov_value(topology: &Topology, gains: &Gains, qbar: &[f64], qdbar: &[f64], m: usize) -> Result<f64> {
    let y = topology.apply_coupling(qbar, m)?;
    let v1: f64 = y.iter().map(|&yk| shaping_potential(gains.phi(), gains.alpha1(), yk)).sum();
    let v2 = 0.5 * topology.coupling_quadratic(qdbar, m)?;
    Ok(v1 + v2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    pub formation_index: usize,
}

/// Lyapunov function along the log for every sample at or after `from`.
/// The topology must be the one active for the whole window.
pub fn lyapunov_series(
    log: &TrajectoryLog,
    topology: &Topology,
    fs: &FormationSchedule,
    leader: &LeaderSpec,
    gains: &Gains,
    from: f64,
) -> Result<Vec<LyapunovSample>> {
    let window: Vec<_> = log.samples.iter().filter(|s| s.t >= from).collect();
    if let Some(first) = window.first() {
        if let Some(s) = window.iter().find(|s| s.topology_index != first.topology_index) {
            return Err(Error::invalid(
                "window",
                format!("topology switches inside the window at t = {}", s.t),
            ));
        }
    }
    window
        .into_iter()
        .map(|s| {
            let (fi, formation) = fs.formation_at(s.t)?;
            let l = leader.state(s.t)?;
            let mut qbar = Vec::with_capacity(2 * s.agents.len());
            let mut qdbar = Vec::with_capacity(2 * s.agents.len());
            for (i, a) in s.agents.iter().enumerate() {
                let eta = formation.offset(i);
                for k in 0..2 {
                    qbar.push(a.q[k] - eta[k] - l.x[k]);
                    qdbar.push(a.qdot[k] - l.v[k]);
                }
            }
            Ok(LyapunovSample {
                t: s.t,
                value: lyapunov_value(topology, gains, &qbar, &qdbar, 2)?,
                formation_index: fi,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityCheck {
    /// Largest `V(t_{k+1}) − V(t_k)` over consecutive samples in the same
    /// dwell interval.
    pub worst_increase: f64,
    pub max_value: f64,
}

impl MonotonicityCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.worst_increase <= rel_tol * self.max_value
    }
}

pub fn lyapunov_monotonicity(series: &[LyapunovSample]) -> MonotonicityCheck {
    let max_value = series.iter().map(|s| s.value).fold(0.0, f64::max);
    let worst_increase = series
        .windows(2)
        .filter(|w| w[0].formation_index == w[1].formation_index)
        .map(|w| w[1].value - w[0].value)
        .fold(f64::NEG_INFINITY, f64::max);
    MonotonicityCheck {
        worst_increase,
        max_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneityReport {
    /// Degree `λ = α₁ − 1`.
    pub degree: f64,
    /// Dilation exponents for positions and velocities: `(2, α₁ + 1)`.
    pub dilation: (f64, f64),
    pub max_residual: f64,
}

/// Evaluates the dilation identity `F_i(ε^r z) = ε^{λ + r_i} F_i(z)` for the
/// state map `ż₁ = z₂`, `ż₂ = −c₁ sig(M z₁)^{α₁} − c₂ sig(M z₂)^{α₂}` at
/// random points and returns the largest relative residual.
pub fn homogeneity_residual(
    gains: &Gains,
    topology: &Topology,
    m: usize,
    samples: usize,
    epsilons: &[f64],
    seed: u64,
) -> Result<HomogeneityReport> {
    if gains.phi().kind() != ShapingKind::Linear || gains.psi().kind() != ShapingKind::Linear {
        return Err(Error::invalid(
            "gains",
            "homogeneity is exact only for linear shaping functions",
        ));
    }
    let (a1, a2) = (gains.alpha1(), gains.alpha2());
    let (c1, c2) = (gains.phi().gain(), gains.psi().gain());
    let degree = a1 - 1.0;
    let (r1, r2) = (2.0, a1 + 1.0);
    let dim = topology.n() * m;

    let field = |z1: &[f64], z2: &[f64]| -> Result<Vec<f64>> {
        let y1 = topology.apply_coupling(z1, m)?;
        let y2 = topology.apply_coupling(z2, m)?;
        let mut out = z2.to_vec();
        out.extend((0..dim).map(|k| -c1 * sig_scalar(y1[k], a1) - c2 * sig_scalar(y2[k], a2)));
        Ok(out)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z1: Vec<f64> = (0..dim).map(|_| dist.sample(&mut rng)).collect();
        let z2: Vec<f64> = (0..dim).map(|_| dist.sample(&mut rng)).collect();
        let base = field(&z1, &z2)?;
        for &eps in epsilons {
            let s1: Vec<f64> = z1.iter().map(|v| eps.powf(r1) * v).collect();
            let s2: Vec<f64> = z2.iter().map(|v| eps.powf(r2) * v).collect();
            let scaled = field(&s1, &s2)?;
            for (k, (lhs, f)) in scaled.iter().zip(&base).enumerate() {
                let r = if k < dim { r1 } else { r2 };
                let rhs = eps.powf(degree + r) * f;
                worst = worst.max((lhs - rhs).abs() / f.abs().max(1e-300));
            }
        }
    }
    Ok(HomogeneityReport {
        degree,
        dilation: (r1, r2),
        max_residual: worst,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityOutcome {
    /// Agents whose component contains no pinned node.
    pub isolated: Vec<usize>,
    /// `‖q̄_i‖` of each isolated agent at the last sample.
    pub final_errors: Vec<f64>,
    pub tracking_failed: bool,
}

fn necessity_preconditions(sc: &Scenario) -> Result<Vec<usize>> {
    let t_last = sc.topology.entries().last().map(|(t, _)| *t).unwrap_or(sc.t0);
    let topo = sc.topology.topology_at(t_last.max(sc.t0))?;
    let isolated = topo.unreached_agents();
    if isolated.is_empty() {
        return Err(Error::Assumption(
            "every agent can reach the leader; the necessity experiment would be vacuous".into(),
        ));
    }
    if sc.leader.has_constant_velocity() {
        return Err(Error::Assumption(
            "leader velocity is constant; isolated agents could follow it by coincidence".into(),
        ));
    }
    Ok(isolated)
}

/// Evaluates a finished run of a scenario whose final topology leaves some
/// agents unreachable.
pub fn necessity_from_series(sc: &Scenario, es: &ErrorSeries, tol: f64) -> Result<NecessityOutcome> {
    let isolated = necessity_preconditions(sc)?;
    let last = es.position.last().ok_or_else(|| Error::invalid("errors", "empty error series"))?;
    let final_errors: Vec<f64> = isolated.iter().map(|&i| last[i]).collect();
    let tracking_failed = final_errors.iter().any(|&e| e > tol);
    Ok(NecessityOutcome {
        isolated,
        final_errors,
        tracking_failed,
    })
}

/// Runs the scenario up to `horizon` (with the faithfulness check off) and
/// reports whether an agent cut off from the leader ends up off its slot.
pub fn necessity_check(sc: &Scenario, tol: f64, horizon: f64) -> Result<NecessityOutcome> {
    necessity_preconditions(sc)?;
    let mut run = sc.clone();
    run.flags.faithful = false;
    run.t_end = horizon;
    let log = sim::run(&run)?;
    let es = error_series(&log, &run.formations, &run.leader)?;
    necessity_from_series(&run, &es, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LeaderSample;
    use crate::formation::Formation;
    use crate::sim::{AgentRecord, LogSample};

    fn linear_gains() -> Gains {
        let f = ShapingFunction::linear(100.0).unwrap();
        Gains::new(0.2, 4.0, f, f).unwrap()
    }

    fn circle() -> LeaderSpec {
        LeaderSpec::Circle {
            center: [0.0, 0.0],
            radius: 30.0,
            omega: 0.05 * std::f64::consts::PI,
        }
    }

    fn two_agent_schedule() -> FormationSchedule {
        let f0 = Formation::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let f1 = Formation::new(vec![vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        FormationSchedule::new(0.0, vec![f0, f1], vec![1.0]).unwrap()
    }

    /// Perfect tracking, optionally perturbed by `bump(t, agent)` on q.
    fn synthetic_log(fs: &FormationSchedule, leader: &LeaderSpec, bump: impl Fn(f64, usize) -> [f64; 2]) -> TrajectoryLog {
        let samples = (0..=200)
            .map(|k| {
                let t = k as f64 * 0.01;
                let (fi, f) = fs.formation_at(t).unwrap();
                let l: LeaderSample = leader.state(t).unwrap();
                let agents = (0..fs.n())
                    .map(|i| {
                        let b = bump(t, i);
                        AgentRecord {
                            q: [l.x[0] + f.offset(i)[0] + b[0], l.x[1] + f.offset(i)[1] + b[1]],
                            qdot: [l.v[0], l.v[1]],
                            a_est: [l.a[0], l.a[1]],
                            tau: [0.0; 2],
                            qddot_cmd: [0.0; 2],
                            qddot: [0.0; 2],
                        }
                    })
                    .collect();
                LogSample {
                    t,
                    step: k,
                    formation_index: fi,
                    topology_index: 0,
                    leader: l,
                    agents,
                }
            })
            .collect();
        TrajectoryLog {
            dt: 1e-3,
            sample_every: 10,
            samples,
            max_linearization_residual: 0.0,
        }
    }

    #[test]
    fn perfect_tracking_has_zero_error() {
        let fs = two_agent_schedule();
        let leader = circle();
        let es = error_series(&synthetic_log(&fs, &leader, |_, _| [0.0; 2]), &fs, &leader).unwrap();
        let worst = es
            .position
            .iter()
            .chain(&es.velocity)
            .chain(&es.estimator)
            .flatten()
            .chain(&es.centroid)
            .chain(&es.max_pairwise)
            .fold(0.0f64, |a, b| a.max(*b));
        assert!(worst < 1e-12);
        let rep = settle_report(&es, &fs, SettleTolerance::default());
        assert_eq!(rep.intervals.iter().map(|i| i.settle_time).collect::<Vec<_>>(), vec![Some(0.0), Some(1.0)]);
    }

    #[test]
    fn offset_agent_errors() {
        let fs = two_agent_schedule();
        let leader = circle();
        let log = synthetic_log(&fs, &leader, |_, i| if i == 0 { [1.0, 0.0] } else { [0.0; 2] });
        let es = error_series(&log, &fs, &leader).unwrap();
        for k in 0..es.len() {
            assert!((es.position[k][0] - 1.0).abs() < 1e-12);
            assert!(es.position[k][1] < 1e-12);
            assert!((es.centroid[k] - 0.5).abs() < 1e-12);
            assert!((es.max_pairwise[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dipping_below_then_rising_does_not_settle() {
        let fs = two_agent_schedule();
        let leader = circle();
        // below tolerance on [0.2, 0.5), above again on [0.5, 1.0)
        let log = synthetic_log(&fs, &leader, |t, _| if t < 0.2 || t >= 0.5 && t < 1.0 { [0.5, 0.0] } else { [0.0; 2] });
        let es = error_series(&log, &fs, &leader).unwrap();
        let rep = settle_report(&es, &fs, SettleTolerance::default());
        assert_eq!(rep.intervals[0].settle_time, None);
        assert_eq!(rep.intervals[1].settle_time, Some(1.0));
        assert!(!rep.all_settled());
    }

    #[test]
    fn horizon_mismatch_is_an_error() {
        let fs = two_agent_schedule();
        let leader = circle();
        let log = synthetic_log(&fs, &leader, |_, _| [0.0; 2]);
        let late = FormationSchedule::single(0.5, fs.formations()[0].clone());
        assert!(error_series(&log, &late, &leader).is_err());
        let three = FormationSchedule::single(0.0, Formation::new(vec![vec![0.0, 0.0]; 3]).unwrap());
        assert!(error_series(&log, &three, &leader).is_err());
    }

    #[test]
    fn lyapunov_closed_form_and_zero() {
        let one = Topology::from_rows(&[vec![0.0]], &[1.0]).unwrap();
        let g = linear_gains();
        assert_eq!(lyapunov_value(&one, &g, &[0.0], &[0.0], 1).unwrap(), 0.0);
        let v = lyapunov_value(&one, &g, &[1.0], &[0.0], 1).unwrap();
        assert!((v - 100.0 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_form_for_saturation() {
        // sat with a huge scale is linear on the integration range
        let sat = ShapingFunction::new(ShapingKind::Saturation, 100.0, 1e6).unwrap();
        for y in [0.3, -2.0, 5.0] {
            let q = shaping_potential(&sat, 0.2, y);
            let exact = 100.0 * f64::abs(y).powf(1.2) / 1.2;
            assert!((q - exact).abs() < 1e-8 * exact.max(1.0), "{q} vs {exact}");
        }
        // fully saturated beyond |sig| = δ: ∫ = c δ (|y| − δ^{1/α}) + closed-form part
        let sat = ShapingFunction::new(ShapingKind::Saturation, 2.0, 1.0).unwrap();
        let exact = 2.0 / 1.2 + 2.0 * (3.0 - 1.0);
        assert!((shaping_potential(&sat, 0.2, 3.0) - exact).abs() < 1e-8);
    }

    #[test]
    fn homogeneity_degree_and_identity() {
        let topo = Topology::from_edges(6, &[(0, 2), (0, 3), (4, 5)], &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let rep = homogeneity_residual(&linear_gains(), &topo, 2, 10, &[1.0], 3).unwrap();
        assert!((rep.degree + 0.8).abs() < 1e-15);
        assert_eq!(rep.dilation, (2.0, 1.2));
        assert_eq!(rep.max_residual, 0.0);

        let tanh = ShapingFunction::new(ShapingKind::Tanh, 100.0, 1.0).unwrap();
        let g = Gains::new(0.2, 4.0, tanh, tanh).unwrap();
        assert!(homogeneity_residual(&g, &topo, 2, 10, &[0.5], 3).is_err());
    }

    #[test]
    fn monotonicity_ignores_switch_jumps() {
        let s = |t, value, formation_index| LyapunovSample { t, value, formation_index };
        let series = [s(0.0, 5.0, 0), s(0.1, 4.0, 0), s(0.2, 9.0, 1), s(0.3, 8.0, 1)];
        let c = lyapunov_monotonicity(&series);
        assert_eq!(c.worst_increase, -1.0);
        assert_eq!(c.max_value, 9.0);
        assert!(c.passes(1e-6));
    }

    #[test]
    fn estimator_settle_requires_staying() {
        let fs = two_agent_schedule();
        let leader = circle();
        let mut log = synthetic_log(&fs, &leader, |_, _| [0.0; 2]);
        for s in log.samples.iter_mut() {
            if s.t < 0.3 || (s.t > 0.55 && s.t < 0.6) {
                s.agents[1].a_est[0] += 1.0;
            }
        }
        let es = error_series(&log, &fs, &leader).unwrap();
        let t = estimator_settle_time(&es, 0.04).unwrap();
        assert!((t - 0.6).abs() < 1e-9);
    }
}
