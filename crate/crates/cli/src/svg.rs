//! Minimal line plots written as SVG by hand.

use std::fmt::Write as _;

use crate::analysis::RunOutcome;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];
const MAX_POINTS: usize = 1500;

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(x0: f64, y0: f64, w: f64, h: f64, (xmin, xmax): (f64, f64), (ymin, ymax): (f64, f64)) -> Self {
        let pad = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (lo - 0.04 * span, hi + 0.04 * span)
        };
        let (xmin, xmax) = pad(xmin, xmax);
        let (ymin, ymax) = pad(ymin, ymax);
        Self { x0, y0, w, h, xmin, xmax, ymin, ymax }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{title}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 - 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{xlabel}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 + self.h + 32.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{ylabel}</text>"#,
            self.x0 - 44.0,
            self.y0 + self.h / 2.0,
            self.x0 - 44.0,
            self.y0 + self.h / 2.0
        );
        for k in 0..=4 {
            let fx = self.xmin + (self.xmax - self.xmin) * k as f64 / 4.0;
            let fy = self.ymin + (self.ymax - self.ymin) * k as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                self.px(fx),
                self.y0 + self.h + 14.0,
                tick(fx, self.xmax - self.xmin)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
                self.x0 - 4.0,
                self.py(fy) + 3.0,
                tick(fy, self.ymax - self.ymin)
            );
        }
    }

    fn polyline(&self, out: &mut String, pts: impl Iterator<Item = (f64, f64)>, stroke: &str, extra: &str) {
        let mut d = String::new();
        for (x, y) in pts {
            let _ = write!(d, "{:.2},{:.2} ", self.px(x), self.py(y));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.2"{extra}/>"#,
            d.trim_end()
        );
    }
}

fn tick(v: f64, span: f64) -> String {
    let v = if v.abs() < 1e-9 * span { 0.0 } else { v };
    if v.abs() >= 1e3 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn header(out: &mut String, w: u32, h: u32) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn legend(out: &mut String, x: f64, y: f64, n: usize, extra: &[(&str, &str)]) {
    for i in 0..n {
        let yy = y + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">agent {}</text>"#,
            x + 18.0,
            color(i),
            x + 22.0,
            yy + 4.0,
            i + 1
        );
    }
    for (k, (label, stroke)) in extra.iter().enumerate() {
        let yy = y + 16.0 * (n + k) as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="{stroke}" stroke-width="2" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}" font-size="11">{label}</text>"#,
            x + 18.0,
            x + 22.0,
            yy + 4.0
        );
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Agent and leader paths in the plane, with formation snapshots shortly
/// before each switch and at the end.
pub fn formation_xy(outcome: &RunOutcome) -> String {
    let log = &outcome.log;
    let n = log.n_agents();
    let samples = &log.samples;
    let xs = bounds(samples.iter().flat_map(|s| s.agents.iter().map(|a| a.q[0]).chain([s.leader.x[0]])));
    let ys = bounds(samples.iter().flat_map(|s| s.agents.iter().map(|a| a.q[1]).chain([s.leader.x[1]])));
    // equal aspect
    let (cx, cy) = ((xs.0 + xs.1) / 2.0, (ys.0 + ys.1) / 2.0);
    let half = 0.5 * (xs.1 - xs.0).max(ys.1 - ys.0).max(1e-9);
    let frame = Frame::new(70.0, 40.0, 600.0, 600.0, (cx - half, cx + half), (cy - half, cy + half));

    let mut out = String::new();
    header(&mut out, 820, 700);
    frame.axes(&mut out, &format!("{}: trajectories", outcome.scenario.name), "x1", "x2");
    let step = stride(samples.len());
    frame.polyline(
        &mut out,
        samples.iter().step_by(step).map(|s| (s.leader.x[0], s.leader.x[1])),
        "#000",
        r#" stroke-dasharray="5 4""#,
    );
    for i in 0..n {
        frame.polyline(
            &mut out,
            samples.iter().step_by(step).map(|s| (s.agents[i].q[0], s.agents[i].q[1])),
            color(i),
            r#" stroke-opacity="0.7""#,
        );
    }
    for &(t, _) in &outcome.report.centroid {
        let Some(k) = outcome.errors.nearest(t) else { continue };
        let s = &samples[k];
        if n > 1 {
            frame.polyline(
                &mut out,
                s.agents.iter().chain(s.agents.first()).map(|a| (a.q[0], a.q[1])),
                "#555",
                r#" stroke-dasharray="2 2""#,
            );
        }
        for (i, a) in s.agents.iter().enumerate() {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" stroke="#000" stroke-width="0.5"/>"##,
                frame.px(a.q[0]),
                frame.py(a.q[1]),
                color(i)
            );
        }
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="7" height="7" fill="#000"/>"##,
            frame.px(s.leader.x[0]) - 3.5,
            frame.py(s.leader.x[1]) - 3.5
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">t={t:.1}</text>"#,
            frame.px(s.leader.x[0]) + 6.0,
            frame.py(s.leader.x[1]) - 6.0
        );
    }
    legend(&mut out, 690.0, 60.0, n, &[("leader", "#000")]);
    out.push_str("</svg>\n");
    out
}

/// Position and velocity error norms against time, one line per agent.
pub fn errors_t(outcome: &RunOutcome) -> String {
    let es = &outcome.errors;
    let n = es.n_agents();
    let trange = (es.times.first().copied().unwrap_or(0.0), es.times.last().copied().unwrap_or(1.0));
    let step = stride(es.len());
    let switches = outcome.scenario.formations.switch_times();

    let mut out = String::new();
    header(&mut out, 820, 700);
    let panels: [(&str, &Vec<Vec<f64>>, f64); 2] = [
        ("position error |q_i - eta_i - x0|", &es.position, 40.0),
        ("velocity error |qd_i - v0|", &es.velocity, 380.0),
    ];
    for (title, data, y0) in panels {
        let ys = bounds(data.iter().flatten().copied());
        let frame = Frame::new(70.0, y0, 600.0, 270.0, trange, (0.0_f64.min(ys.0), ys.1));
        frame.axes(&mut out, title, "t [s]", "norm");
        for &ts in switches {
            frame.polyline(
                &mut out,
                [(ts, frame.ymin), (ts, frame.ymax)].into_iter(),
                "#888",
                r#" stroke-dasharray="3 3""#,
            );
        }
        for i in 0..n {
            frame.polyline(
                &mut out,
                (0..es.len()).step_by(step).map(|k| (es.times[k], data[k][i])),
                color(i),
                "",
            );
        }
    }
    legend(&mut out, 690.0, 60.0, n, &[("switch", "#888")]);
    out.push_str("</svg>\n");
    out
}
