//! Subcommand implementations. Each returns the process exit code:
//! 0 success, 1 a check or hypothesis failed, 2 the input could not be used.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use formation_core::metrics;
use formation_core::sim::Scenario;
use rayon::prelude::*;

use crate::analysis::{self, RunOutcome};
use crate::output::{self, num};
use crate::scenario::{self, Issue, ScenarioError, ScenarioFile};
use crate::bundled;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Environment variable that sets the sweep worker count.
pub const WORKERS_ENV: &str = "FORMATION_SIM_WORKERS";

/// Reads a scenario document from disk, falling back to a bundled scenario
/// of the same name when no such file exists.
pub fn load_document(path: &Path) -> Result<(ScenarioFile, String), ScenarioError> {
    let origin = path.display().to_string();
    if !path.exists() {
        if let Some(text) = path.to_str().and_then(bundled::get) {
            return Ok((scenario::parse_document(text, &origin)?, origin));
        }
    }
    let text = scenario::read_text(path)?;
    Ok((scenario::parse_document(&text, &origin)?, origin))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let (doc, origin) = load_document(path)?;
    doc.to_scenario(&origin)
}

/// Replaces `dt`, keeping the output period when the new step divides it.
pub fn set_dt(sc: &mut Scenario, dt: f64) {
    let period = sc.dt * sc.sample_every as f64;
    let every = (period / dt).round();
    if every >= 1.0 && ((every * dt - period).abs() <= 1e-9 * period) {
        sc.sample_every = every as usize;
    }
    sc.dt = dt;
}

fn revalidate(sc: &Scenario) -> Result<(), Vec<Issue>> {
    let issues: Vec<Issue> = sc
        .validate()
        .into_iter()
        .map(|e| match e {
            formation_core::Error::Invalid { field, reason } => Issue { path: field, message: reason },
            other => Issue {
                path: String::new(),
                message: other.to_string(),
            },
        })
        .collect();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

pub fn apply_overrides(mut sc: Scenario, seed: Option<u64>, dt: Option<f64>) -> Result<Scenario, Vec<Issue>> {
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    if let Some(dt) = dt {
        set_dt(&mut sc, dt);
    }
    revalidate(&sc)?;
    Ok(sc)
}

fn print_issues(origin: &str, issues: &[Issue]) {
    eprintln!("error: {origin}: invalid scenario");
    for i in issues {
        eprintln!("  {i}");
    }
}

fn summarize(outcome: &RunOutcome) -> String {
    let r = &outcome.report;
    let mut s = String::new();
    let _ = writeln!(s, "scenario {} (seed {}, dt {})", outcome.scenario.name, outcome.scenario.seed, outcome.scenario.dt);
    for iv in &r.settle.intervals {
        let _ = writeln!(
            s,
            "  interval {} [{}, {}): {}",
            iv.index,
            iv.start,
            iv.end.unwrap_or(outcome.scenario.t_end),
            iv.settle_time.map_or("not settled".to_string(), |t| format!("settled at {t}"))
        );
    }
    for c in &r.checks {
        let _ = writeln!(s, "  {:<18} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    let _ = writeln!(s, "verdict: {}", if r.passed() { "pass" } else { "FAIL" });
    s
}

/// Runs a parsed scenario and writes its outputs into `out`.
pub fn run_scenario(sc: &Scenario, out: &Path) -> i32 {
    let outcome = match analysis::execute(sc) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", sc.name);
            return EXIT_ERROR;
        }
    };
    if let Err(e) = output::write_outputs(&outcome, out) {
        eprintln!("error: writing to {}: {e}", out.display());
        return EXIT_ERROR;
    }
    print!("{}", summarize(&outcome));
    println!("outputs in {}", out.display());
    if outcome.report.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

pub fn cmd_run(path: &Path, out: &Path, seed: Option<u64>, dt: Option<f64>) -> i32 {
    let sc = match load_scenario(path) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    match apply_overrides(sc, seed, dt) {
        Ok(sc) => run_scenario(&sc, out),
        Err(issues) => {
            print_issues(&path.display().to_string(), &issues);
            EXIT_ERROR
        }
    }
}

pub fn cmd_demo(name: &str, out: &Path, seed: Option<u64>, dt: Option<f64>) -> i32 {
    let Some(text) = bundled::get(name) else {
        eprintln!("error: no bundled scenario named {name:?}; available: {}", bundled::NAMES.join(", "));
        return EXIT_ERROR;
    };
    let sc = match scenario::parse_scenario_str(text, name) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    match apply_overrides(sc, seed, dt) {
        Ok(sc) => run_scenario(&sc, out),
        Err(issues) => {
            print_issues(name, &issues);
            EXIT_ERROR
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyCheck {
    pub start: f64,
    pub reachable: bool,
    pub unreached: Vec<usize>,
    pub spectrum: Option<(f64, f64)>,
}

/// Static hypothesis checks on a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Preflight {
    pub topologies: Vec<TopologyCheck>,
    pub jerk_bound: f64,
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Largest `T_f` over the init box for the initial topology.
    pub worst_case_settle_bound: Option<f64>,
    pub min_dwell: Option<f64>,
}

impl Preflight {
    pub fn a1_holds(&self) -> bool {
        self.topologies.iter().all(|t| t.reachable)
    }

    pub fn a2_margin(&self) -> f64 {
        self.beta - self.jerk_bound
    }

    pub fn a2_holds(&self) -> bool {
        self.a2_margin() > 0.0
    }

    pub fn holds(&self) -> bool {
        self.a1_holds() && self.a2_holds()
    }

    pub fn render(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {name}");
        for (k, t) in self.topologies.iter().enumerate() {
            let _ = writeln!(s, "topology.{k}.start = {}", t.start);
            let _ = writeln!(s, "topology.{k}.leader_reachable = {}", t.reachable);
            if !t.reachable {
                let agents: Vec<String> = t.unreached.iter().map(|i| (i + 1).to_string()).collect();
                let _ = writeln!(s, "topology.{k}.unreached_agents = {}", agents.join(" "));
            }
            if let Some((lo, hi)) = t.spectrum {
                let _ = writeln!(s, "topology.{k}.lambda_min = {lo}");
                let _ = writeln!(s, "topology.{k}.lambda_max = {hi}");
            }
        }
        let _ = writeln!(s, "alpha1 = {}", self.alpha1);
        let _ = writeln!(s, "alpha2 = {}", self.alpha2);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "leader.jerk_bound = {}", self.jerk_bound);
        let _ = writeln!(s, "a2.margin = {}", self.a2_margin());
        if let Some(d) = self.min_dwell {
            let _ = writeln!(s, "formation.min_dwell = {d}");
        }
        let _ = writeln!(
            s,
            "estimator.worst_case_settle_bound = {}",
            self.worst_case_settle_bound.map_or("n/a".into(), |t| t.to_string())
        );
        let _ = writeln!(s, "a1 = {}", if self.a1_holds() { "holds" } else { "VIOLATED" });
        let _ = writeln!(s, "a2 = {}", if self.a2_holds() { "holds" } else { "VIOLATED" });
        s
    }
}

/// Checks reachability, the jerk margin and the spectral data for every
/// topology. The scenario is taken as-is; its faithfulness flag is ignored.
pub fn preflight(sc: &Scenario) -> Preflight {
    let topologies = sc
        .topology
        .entries()
        .iter()
        .map(|(start, t)| {
            let reachable = t.leader_reachable();
            TopologyCheck {
                start: *start,
                reachable,
                unreached: t.unreached_agents(),
                spectrum: if reachable { t.spectral_bounds().ok() } else { None },
            }
        })
        .collect::<Vec<_>>();
    let jerk_bound = sc.leader.jerk_bound();
    let worst = if topologies[0].reachable && sc.gains.beta() > jerk_bound {
        metrics::worst_case_estimator_bound(sc).ok()
    } else {
        None
    };
    Preflight {
        topologies,
        jerk_bound,
        beta: sc.gains.beta(),
        alpha1: sc.gains.alpha1(),
        alpha2: sc.gains.alpha2(),
        worst_case_settle_bound: worst,
        min_dwell: sc.formations.min_dwell(),
    }
}

/// Parses with the faithfulness gate lifted so that violated hypotheses are
/// reported by the preflight rather than as parse errors.
pub fn load_for_preflight(path: &Path) -> Result<Scenario, ScenarioError> {
    let (mut doc, origin) = load_document(path)?;
    doc.flags.faithful = false;
    doc.to_scenario(&origin)
}

pub fn cmd_validate(path: &Path) -> i32 {
    let sc = match load_for_preflight(path) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let pf = preflight(&sc);
    print!("{}", pf.render(&sc.name));
    if pf.holds() {
        EXIT_OK
    } else {
        if !pf.a1_holds() {
            eprintln!("A1 violated: some agents have no path to the leader");
        }
        if !pf.a2_holds() {
            eprintln!(
                "A2 violated: beta = {} does not exceed the leader jerk bound {}",
                pf.beta, pf.jerk_bound
            );
        }
        EXIT_CHECK_FAILED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha1,
    Beta,
    Dt,
    Seed,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha1 => "alpha1",
            SweepParam::Beta => "beta",
            SweepParam::Dt => "dt",
            SweepParam::Seed => "seed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Parses `name=v1,v2,...`, `name=a..b` (integers, inclusive) or
/// `name=a..b:step`.
pub fn parse_axis(spec: &str) -> anyhow::Result<SweepAxis> {
    let (name, values) = spec
        .split_once('=')
        .with_context(|| format!("parameter spec {spec:?} must look like name=values"))?;
    let param = match name.trim() {
        "alpha1" => SweepParam::Alpha1,
        "beta" => SweepParam::Beta,
        "dt" => SweepParam::Dt,
        "seed" => SweepParam::Seed,
        other => bail!("unknown sweep parameter {other:?} (expected alpha1, beta, dt or seed)"),
    };
    let values = values.trim();
    let parsed: Vec<f64> = if let Some((lo, rest)) = values.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, Some(step)),
            None => (rest, None),
        };
        let lo: f64 = lo.trim().parse().with_context(|| format!("bad range start in {spec:?}"))?;
        let hi: f64 = hi.trim().parse().with_context(|| format!("bad range end in {spec:?}"))?;
        let step: f64 = match step {
            Some(s) => s.trim().parse().with_context(|| format!("bad range step in {spec:?}"))?,
            None => 1.0,
        };
        if !(step > 0.0) || !(hi >= lo) {
            bail!("range in {spec:?} must have start <= end and a positive step");
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // trim the accumulated rounding so 0.1..0.9:0.1 yields 0.3, not 0.30000000000000004
        (0..count)
            .map(|k| {
                let v = lo + k as f64 * step;
                format!("{v:.12e}").parse().unwrap_or(v)
            })
            .collect()
    } else {
        values
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value {v:?} in {spec:?}")))
            .collect::<anyhow::Result<_>>()?
    };
    if parsed.is_empty() {
        bail!("no values in {spec:?}");
    }
    if param == SweepParam::Seed && parsed.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
        bail!("seed values must be non-negative integers");
    }
    Ok(SweepAxis { param, values: parsed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub error: Option<String>,
    pub passed: bool,
    pub settled: bool,
    pub settle_times: Vec<Option<f64>>,
    pub estimator_settle: Option<f64>,
    /// Largest `‖ā_i‖∞` over the second half of the run: the steady-state
    /// chatter amplitude of the estimator.
    pub max_estimator_error: Option<f64>,
    pub estimator_bound: Option<f64>,
}

fn apply_param(sc: &mut Scenario, p: SweepParam, v: f64) -> formation_core::Result<()> {
    match p {
        SweepParam::Alpha1 => sc.gains = sc.gains.with_alpha1(v)?,
        SweepParam::Beta => sc.gains = sc.gains.with_beta(v)?,
        SweepParam::Dt => set_dt(sc, v),
        SweepParam::Seed => sc.seed = v as u64,
    }
    Ok(())
}

fn sweep_one(base: &Scenario, axes: &[SweepAxis], values: &[f64]) -> SweepRow {
    let mut row = SweepRow {
        values: values.to_vec(),
        error: None,
        passed: false,
        settled: false,
        settle_times: vec![None; base.formations.formations().len()],
        estimator_settle: None,
        max_estimator_error: None,
        estimator_bound: None,
    };
    let mut sc = base.clone();
    for (axis, &v) in axes.iter().zip(values) {
        if let Err(e) = apply_param(&mut sc, axis.param, v) {
            row.error = Some(e.to_string());
            return row;
        }
    }
    if let Err(issues) = revalidate(&sc) {
        row.error = Some(issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("; "));
        return row;
    }
    let outcome = match analysis::execute(&sc) {
        Ok(o) => o,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let r = &outcome.report;
    row.passed = r.passed();
    row.settled = r.settle.all_settled();
    row.settle_times = r.settle.intervals.iter().map(|iv| iv.settle_time).collect();
    row.estimator_settle = r.settle.estimator_settle;
    row.estimator_bound = r.settle.estimator_bound;
    let es = &outcome.errors;
    let half = sc.t0 + 0.5 * (sc.t_end - sc.t0);
    row.max_estimator_error = Some(
        (0..es.len())
            .filter(|&k| es.times[k] >= half)
            .flat_map(|k| es.estimator_inf[k].iter().copied())
            .fold(0.0, f64::max),
    );
    row
}

fn cross_product(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

/// Runs every combination of the axes. Rows come back in cross-product
/// order (first axis outermost) whatever the worker count.
pub fn sweep(base: &Scenario, axes: &[SweepAxis], workers: Option<usize>) -> anyhow::Result<Vec<SweepRow>> {
    let combos = cross_product(axes);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().context("building the worker pool")?;
    Ok(pool.install(|| combos.par_iter().map(|v| sweep_one(base, axes, v)).collect()))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sweep_csv(axes: &[SweepAxis], intervals: usize, rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), num);
    let mut out = String::new();
    let mut header: Vec<String> = axes.iter().map(|a| a.param.name().to_string()).collect();
    header.extend(["status".into(), "passed".into(), "settled".into()]);
    header.extend((0..intervals).map(|s| format!("settle_time_{s}")));
    header.extend([
        "estimator_settle".into(),
        "max_estimator_error".into(),
        "tf_bound".into(),
        "message".into(),
    ]);
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let mut f: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
        f.push(if r.error.is_some() { "error" } else { "ok" }.into());
        f.push(r.passed.to_string());
        f.push(r.settled.to_string());
        f.extend(r.settle_times.iter().map(|t| opt(*t)));
        f.push(opt(r.estimator_settle));
        f.push(opt(r.max_estimator_error));
        f.push(opt(r.estimator_bound));
        f.push(csv_field(r.error.as_deref().unwrap_or("")));
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}

pub fn workers_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
            if n == 0 {
                bail!("{WORKERS_ENV} must be at least 1");
            }
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("{WORKERS_ENV}: {e}"),
    }
}

pub fn cmd_sweep(path: &Path, specs: &[String], out: &Path) -> i32 {
    let result = (|| -> anyhow::Result<i32> {
        if specs.is_empty() || specs.len() > 2 {
            bail!("give one or two --param specs");
        }
        let axes = specs.iter().map(|s| parse_axis(s)).collect::<anyhow::Result<Vec<_>>>()?;
        if axes.len() == 2 && axes[0].param == axes[1].param {
            bail!("the two sweep parameters must differ");
        }
        let base = load_scenario(path)?;
        let workers = workers_from_env()?;
        let rows = sweep(&base, &axes, workers)?;
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let file: PathBuf = out.join("sweep.csv");
        std::fs::write(&file, sweep_csv(&axes, base.formations.formations().len(), &rows))
            .with_context(|| format!("writing {}", file.display()))?;
        let failed = rows.iter().filter(|r| !r.passed).count();
        println!("{} runs, {} passed, {failed} failed; wrote {}", rows.len(), rows.len() - failed, file.display());
        Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
    })();
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_ERROR
    })
}
