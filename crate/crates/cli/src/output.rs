//! CSV and report emission. Numbers use 17 significant digits and lines end
//! in LF, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use formation_core::sim::{TrajectoryLog, PRNG_NAME};
use formation_core::metrics::ErrorSeries;

use crate::analysis::RunOutcome;

pub const TRAJECTORY_HEADER: &str = "t,agent,q1,q2,qd1,qd2,a1,a2,tau1,tau2";
pub const LEADER_HEADER: &str = "t,x1,x2,v1,v2,a1,a2";
pub const ERRORS_HEADER: &str = "t,agent,eq,eqd,ea,centroid,maxpair,formation_idx,topology_idx";

/// Fixed 17-significant-digit scientific notation. Negative zero is written
/// as zero.
pub fn num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
pub fn short(x: f64) -> String {
    if x != 0.0 && x.is_finite() && (x.abs() < 1e-3 || x.abs() >= 1e7) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn row(out: &mut String, fields: &[f64]) {
    for (k, f) in fields.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push_str(&num(*f));
    }
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut out = String::with_capacity(log.samples.len() * log.n_agents() * 240);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &log.samples {
        for (i, a) in s.agents.iter().enumerate() {
            out.push_str(&num(s.t));
            let _ = write!(out, ",{},", i + 1);
            row(
                &mut out,
                &[a.q[0], a.q[1], a.qdot[0], a.qdot[1], a.a_est[0], a.a_est[1], a.tau[0], a.tau[1]],
            );
            out.push('\n');
        }
    }
    out
}

pub fn leader_csv(log: &TrajectoryLog) -> String {
    let mut out = String::with_capacity(log.samples.len() * 170);
    out.push_str(LEADER_HEADER);
    out.push('\n');
    for s in &log.samples {
        let l = &s.leader;
        row(&mut out, &[s.t, l.x[0], l.x[1], l.v[0], l.v[1], l.a[0], l.a[1]]);
        out.push('\n');
    }
    out
}

pub fn errors_csv(es: &ErrorSeries) -> String {
    let mut out = String::with_capacity(es.len() * es.n_agents() * 150);
    out.push_str(ERRORS_HEADER);
    out.push('\n');
    for k in 0..es.len() {
        for i in 0..es.n_agents() {
            out.push_str(&num(es.times[k]));
            let _ = write!(out, ",{},", i + 1);
            row(
                &mut out,
                &[
                    es.position[k][i],
                    es.velocity[k][i],
                    es.estimator[k][i],
                    es.centroid[k],
                    es.max_pairwise[k],
                ],
            );
            let _ = writeln!(out, ",{},{}", es.formation_index[k], es.topology_index[k]);
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), short)
}

/// Flat `key = value` summary of a run.
pub fn report_text(outcome: &RunOutcome) -> String {
    let sc = &outcome.scenario;
    let r = &outcome.report;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("scenario", sc.name.clone());
    kv("agents", sc.n().to_string());
    kv("seed", sc.seed.to_string());
    kv("prng", PRNG_NAME.into());
    kv("dt", short(sc.dt));
    kv("t0", sc.t0.to_string());
    kv("t_end", sc.t_end.to_string());
    kv("samples", outcome.log.samples.len().to_string());
    kv("faithful", sc.flags.faithful.to_string());
    kv("gravity", sc.flags.gravity.to_string());
    kv(
        "expect",
        match sc.expect {
            formation_core::sim::Expectation::Settle => "settle",
            formation_core::sim::Expectation::TrackingFailure => "tracking_failure",
        }
        .into(),
    );
    for iv in &r.settle.intervals {
        let p = format!("interval.{}", iv.index);
        kv(&format!("{p}.start"), iv.start.to_string());
        kv(&format!("{p}.end"), opt(iv.end.or(Some(sc.t_end))));
        kv(&format!("{p}.settled"), iv.settled().to_string());
        kv(&format!("{p}.settle_time"), opt(iv.settle_time));
    }
    for (k, (t, c)) in r.centroid.iter().enumerate() {
        kv(&format!("centroid.{k}.t"), t.to_string());
        kv(&format!("centroid.{k}.error"), short(*c));
    }
    kv("estimator.threshold", short(r.estimator_threshold));
    kv("estimator.settle_time", opt(r.settle.estimator_settle));
    kv("estimator.bound", opt(r.settle.estimator_bound));
    kv("linearization.max_residual", short(outcome.log.max_linearization_residual));
    if let Some(l) = &r.lyapunov {
        kv("lyapunov.worst_increase", short(l.worst_increase));
        kv("lyapunov.max", short(l.max_value));
    }
    if let Some(n) = &r.necessity {
        kv(
            "necessity.isolated_agents",
            n.isolated.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" "),
        );
        kv(
            "necessity.final_errors",
            n.final_errors.iter().map(|e| short(*e)).collect::<Vec<_>>().join(" "),
        );
        kv("necessity.tracking_failed", n.tracking_failed.to_string());
    }
    for c in &r.checks {
        kv(&format!("check.{}", c.name), if c.passed { "pass" } else { "FAIL" }.into());
        kv(&format!("check.{}.detail", c.name), c.detail.clone());
    }
    kv("verdict", if r.passed() { "pass" } else { "FAIL" }.into());
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(dir.join(name))?);
    f.write_all(contents.as_bytes())?;
    f.flush()
}

/// Writes every CSV, the report and both plots into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_file(dir, "trajectory.csv", &trajectory_csv(&outcome.log))?;
    write_file(dir, "leader.csv", &leader_csv(&outcome.log))?;
    write_file(dir, "errors.csv", &errors_csv(&outcome.errors))?;
    write_file(dir, "report.txt", &report_text(outcome))?;
    write_file(dir, "formation_xy.svg", &crate::svg::formation_xy(outcome))?;
    write_file(dir, "errors_t.svg", &crate::svg::errors_t(outcome))?;
    Ok(())
}
