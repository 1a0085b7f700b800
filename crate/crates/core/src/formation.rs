//! Closed formations and the switching signal that selects among them.

use crate::{Error, Result};

/// Per-component tolerance on `Σ η_i` for a formation to count as closed.
pub const CLOSEDNESS_TOL: f64 = 1e-12;

/// Offsets `η_i ∈ R^m` of each agent relative to the formation centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Formation {
    offsets: Vec<Vec<f64>>,
}

/// Returned by [`validate_formation`] when the offsets do not sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosednessViolation {
    pub centroid: Vec<f64>,
    pub sum: Vec<f64>,
}

impl std::fmt::Display for ClosednessViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "formation is not closed: centroid {:?} (offset sum {:?})", self.centroid, self.sum)
    }
}

fn check_shape(offsets: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = offsets.first() else {
        return Err(Error::invalid("offsets", "at least one agent is required"));
    };
    let m = first.len();
    if m == 0 {
        return Err(Error::invalid("offsets[0]", "offsets must have at least one coordinate"));
    }
    for (i, o) in offsets.iter().enumerate() {
        if o.len() != m {
            return Err(Error::invalid(format!("offsets[{i}]"), format!("expected {m} coordinates, got {}", o.len())));
        }
        if let Some(k) = o.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("offsets[{i}][{k}]"), "must be finite"));
        }
    }
    Ok(m)
}

fn offset_sum(offsets: &[Vec<f64>]) -> Vec<f64> {
    let m = offsets[0].len();
    let mut sum = vec![0.0; m];
    for o in offsets {
        for (s, v) in sum.iter_mut().zip(o) {
            *s += v;
        }
    }
    sum
}

/// Checks closedness (`Σ η_i = 0` per component within [`CLOSEDNESS_TOL`]).
pub fn validate_formation(offsets: &[Vec<f64>]) -> std::result::Result<(), ClosednessViolation> {
    let sum = offset_sum(offsets);
    if sum.iter().all(|s| s.abs() <= CLOSEDNESS_TOL) {
        Ok(())
    } else {
        let n = offsets.len() as f64;
        Err(ClosednessViolation {
            centroid: sum.iter().map(|s| s / n).collect(),
            sum,
        })
    }
}

/// Subtracts the centroid from every offset.
pub fn center_formation(offsets: &[Vec<f64>]) -> Result<Formation> {
    check_shape(offsets)?;
    if validate_formation(offsets).is_ok() {
        return Ok(Formation { offsets: offsets.to_vec() });
    }
    let n = offsets.len() as f64;
    let centroid: Vec<f64> = offset_sum(offsets).into_iter().map(|s| s / n).collect();
    let centred: Vec<Vec<f64>> = offsets
        .iter()
        .map(|o| o.iter().zip(&centroid).map(|(v, c)| v - c).collect())
        .collect();
    Formation::new(centred)
}

impl Formation {
    /// Builds a closed formation; non-closed offsets are rejected.
    pub fn new(offsets: Vec<Vec<f64>>) -> Result<Self> {
        check_shape(&offsets)?;
        validate_formation(&offsets).map_err(|v| Error::invalid("offsets", v.to_string()))?;
        Ok(Self { offsets })
    }

    pub fn n(&self) -> usize {
        self.offsets.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets[0].len()
    }

    pub fn offset(&self, i: usize) -> &[f64] {
        &self.offsets[i]
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.offsets
    }
}

/// Formations `ϝ_0 … ϝ_k` with switch instants `t_1 < … < t_k`.
/// `ϝ_s` is active on `[t_s, t_{s+1})`, with `t_0` the schedule start.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSchedule {
    start: f64,
    formations: Vec<Formation>,
    switch_times: Vec<f64>,
}

impl FormationSchedule {
    pub fn new(start: f64, formations: Vec<Formation>, switch_times: Vec<f64>) -> Result<Self> {
        let Some(first) = formations.first() else {
            return Err(Error::invalid("formations", "at least one formation is required"));
        };
        if switch_times.len() + 1 != formations.len() {
            return Err(Error::invalid(
                "switch_times",
                format!(
                    "{} formations need exactly {} switch times, got {}",
                    formations.len(),
                    formations.len() - 1,
                    switch_times.len()
                ),
            ));
        }
        let (n, m) = (first.n(), first.dim());
        for (s, f) in formations.iter().enumerate() {
            if f.n() != n || f.dim() != m {
                return Err(Error::invalid(
                    format!("formations[{s}]"),
                    format!("expected {n} offsets of dimension {m}, got {} of dimension {}", f.n(), f.dim()),
                ));
            }
        }
        let mut prev = start;
        for (k, &t) in switch_times.iter().enumerate() {
            if !(t > prev) {
                return Err(Error::invalid(
                    format!("switch_times[{k}]"),
                    format!("must be strictly greater than {prev}, got {t}"),
                ));
            }
            prev = t;
        }
        Ok(Self {
            start,
            formations,
            switch_times,
        })
    }

    pub fn single(start: f64, formation: Formation) -> Self {
        Self {
            start,
            formations: vec![formation],
            switch_times: Vec::new(),
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn formations(&self) -> &[Formation] {
        &self.formations
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn n(&self) -> usize {
        self.formations[0].n()
    }

    pub fn dim(&self) -> usize {
        self.formations[0].dim()
    }

    /// Start of dwell interval `s`.
    pub fn interval_start(&self, s: usize) -> f64 {
        if s == 0 {
            self.start
        } else {
            self.switch_times[s - 1]
        }
    }

    /// End of dwell interval `s`, or `None` for the last (open-ended) one.
    pub fn interval_end(&self, s: usize) -> Option<f64> {
        self.switch_times.get(s).copied()
    }

    /// Minimum dwell time `h` among the bounded intervals.
    pub fn min_dwell(&self) -> Option<f64> {
        (0..self.switch_times.len())
            .map(|s| self.switch_times[s] - self.interval_start(s))
            .reduce(f64::min)
    }

    pub fn index_at(&self, t: f64) -> Result<usize> {
        if t < self.start {
            return Err(Error::BeforeStart { t, start: self.start });
        }
        Ok(self.switch_times.partition_point(|&s| s <= t))
    }

    /// `(σ(t), ϝ_σ(t))`.
    pub fn formation_at(&self, t: f64) -> Result<(usize, &Formation)> {
        let s = self.index_at(t)?;
        Ok((s, &self.formations[s]))
    }
}
