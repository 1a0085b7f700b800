//! Runs a scenario and evaluates every check that applies to it.

use formation_core::metrics::{
    self, ErrorSeries, MonotonicityCheck, NecessityOutcome, SettleReport, SettleTolerance,
};
use formation_core::sim::{self, Expectation, Scenario, SystemState, TrajectoryLog};

/// Largest accepted `‖q̈ − q̈_r‖∞`.
pub const LINEARIZATION_TOL: f64 = 1e-10;
/// Allowed Lyapunov increase per sample, relative to `max V`.
pub const LYAPUNOV_REL_TOL: f64 = 1e-6;
/// An isolated agent counts as failing to track when its final position
/// error exceeds this.
pub const NECESSITY_TOL: f64 = 0.1;
/// Centroid errors are sampled this long before each interval ends.
pub const CENTROID_LEAD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub settle: SettleReport,
    pub estimator_threshold: f64,
    /// `(t, centroid error)` shortly before each interval ends.
    pub centroid: Vec<(f64, f64)>,
    pub lyapunov: Option<MonotonicityCheck>,
    pub necessity: Option<NecessityOutcome>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub initial: SystemState,
    pub log: TrajectoryLog,
    pub errors: ErrorSeries,
    pub report: RunReport,
}

pub fn execute(sc: &Scenario) -> formation_core::Result<RunOutcome> {
    let initial = sim::initial_state(sc)?;
    let log = sim::run_from(sc, initial.clone())?;
    let errors = metrics::error_series(&log, &sc.formations, &sc.leader)?;
    let report = analyze(sc, &initial, &log, &errors)?;
    Ok(RunOutcome {
        scenario: sc.clone(),
        initial,
        log,
        errors,
        report,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn analyze(
    sc: &Scenario,
    initial: &SystemState,
    log: &TrajectoryLog,
    es: &ErrorSeries,
) -> formation_core::Result<RunReport> {
    let tol = SettleTolerance::default();
    let mut checks = Vec::new();

    checks.push(Check {
        name: "linearization",
        passed: log.max_linearization_residual <= LINEARIZATION_TOL,
        detail: format!("max |qdd - qdd_r| = {:e}", log.max_linearization_residual),
    });

    let threshold = metrics::estimator_threshold(&sc.gains, sc.dt);
    let estimator_settle = metrics::estimator_settle_time(es, threshold);
    let fixed_topology = sc.topology.len() == 1;

    let centroid: Vec<(f64, f64)> = (0..sc.formations.formations().len())
        .filter_map(|s| {
            let end = sc.formations.interval_end(s).unwrap_or(sc.t_end);
            es.nearest(end - CENTROID_LEAD).map(|k| (es.times[k], es.centroid[k]))
        })
        .collect();

    let mut lyapunov = None;
    let mut necessity = None;
    let mut settle;
    match sc.expect {
        Expectation::Settle => {
            settle = metrics::settle_report(es, &sc.formations, tol);
            let unsettled: Vec<usize> = settle
                .intervals
                .iter()
                .filter(|iv| !iv.settled())
                .map(|iv| iv.index)
                .collect();
            checks.push(Check {
                name: "settle",
                passed: unsettled.is_empty(),
                detail: if unsettled.is_empty() {
                    "every interval settled".into()
                } else {
                    format!("intervals {unsettled:?} did not settle")
                },
            });
            let worst_centroid = centroid.iter().map(|c| c.1).fold(0.0, f64::max);
            checks.push(Check {
                name: "centroid",
                passed: worst_centroid < tol.position,
                detail: format!("max centroid error before switches = {worst_centroid:e}"),
            });

            if fixed_topology {
                let bound = metrics::scenario_estimator_bound(sc, initial)?;
                settle.estimator_bound = Some(bound);
                checks.push(Check {
                    name: "estimator_bound",
                    passed: estimator_settle.is_some_and(|t| t <= bound),
                    detail: format!("settled at {} <= T_f = {bound}", fmt_opt(estimator_settle)),
                });
                if let Some(from) = estimator_settle {
                    let topo = sc.topology.topology_at(sc.t0)?;
                    let series = metrics::lyapunov_series(log, topo, &sc.formations, &sc.leader, &sc.gains, from)?;
                    let mono = metrics::lyapunov_monotonicity(&series);
                    checks.push(Check {
                        name: "lyapunov",
                        passed: mono.passes(LYAPUNOV_REL_TOL),
                        detail: format!(
                            "worst increase {:e} vs max V {:e} after t = {from}",
                            mono.worst_increase, mono.max_value
                        ),
                    });
                    lyapunov = Some(mono);
                }
            }
        }
        Expectation::TrackingFailure => {
            let outcome = metrics::necessity_from_series(sc, es, NECESSITY_TOL)?;
            let reachable: Vec<usize> = (0..sc.n()).filter(|i| !outcome.isolated.contains(i)).collect();
            settle = metrics::settle_report_for(es, &sc.formations, tol, &reachable);
            checks.push(Check {
                name: "tracking_failure",
                passed: outcome.tracking_failed,
                detail: format!(
                    "isolated agents {:?} end with errors {:?}",
                    outcome.isolated.iter().map(|i| i + 1).collect::<Vec<_>>(),
                    outcome.final_errors
                ),
            });
            checks.push(Check {
                name: "reachable_settle",
                passed: settle.all_settled(),
                detail: format!(
                    "agents {:?} settled in every interval: {}",
                    reachable.iter().map(|i| i + 1).collect::<Vec<_>>(),
                    settle.all_settled()
                ),
            });
            necessity = Some(outcome);
        }
    }
    settle.estimator_settle = estimator_settle;

    Ok(RunReport {
        settle,
        estimator_threshold: threshold,
        centroid,
        lyapunov,
        necessity,
        checks,
    })
}
