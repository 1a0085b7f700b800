//! Two-link planar revolute manipulator and leader trajectories.
//!
//! The manipulator obeys `H(q) q̈ + C(q, q̇) q̇ + g(q) = τ` with the usual
//! rigid-link parameterisation (link masses, lengths, centre-of-mass
//! distances and inertias about the centre of mass).

use nalgebra::{Matrix2, Vector2};

use crate::{Error, Result};

/// Generalised coordinates of one two-link arm.
pub const DOF: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManipulatorParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub gravity: f64,
}

impl Default for ManipulatorParams {
    /// Uniform thin rods: 1 kg, 1 m, centre of mass at mid-length.
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 1.0 / 12.0,
            i2: 1.0 / 12.0,
            gravity: 9.81,
        }
    }
}

impl ManipulatorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("m1", self.m1), ("m2", self.m2), ("l1", self.l1), ("l2", self.l2)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, lc, l) in [("lc1", self.lc1, self.l1), ("lc2", self.lc2, self.l2)] {
            if !(lc.is_finite() && lc > 0.0 && lc <= l) {
                return Err(Error::invalid(name, format!("must lie in (0, {l}], got {lc}")));
            }
        }
        for (name, v) in [("i1", self.i1), ("i2", self.i2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if !self.gravity.is_finite() {
            return Err(Error::invalid("gravity", "must be finite"));
        }
        Ok(())
    }

    pub fn without_gravity(mut self) -> Self {
        self.gravity = 0.0;
        self
    }

    pub fn mass_matrix(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        let c2 = q[1].cos();
        let h22 = self.m2 * self.lc2 * self.lc2 + self.i2;
        let h12 = self.m2 * (self.lc2 * self.lc2 + self.l1 * self.lc2 * c2) + self.i2;
        let h11 = self.m1 * self.lc1 * self.lc1
            + self.i1
            + self.m2 * (self.l1 * self.l1 + self.lc2 * self.lc2 + 2.0 * self.l1 * self.lc2 * c2)
            + self.i2;
        Matrix2::new(h11, h12, h12, h22)
    }

    /// Christoffel-form Coriolis matrix; `Ḣ − 2C` is skew-symmetric.
    pub fn coriolis_matrix(&self, q: &Vector2<f64>, qdot: &Vector2<f64>) -> Matrix2<f64> {
        let h = -self.m2 * self.l1 * self.lc2 * q[1].sin();
        Matrix2::new(h * qdot[1], h * (qdot[0] + qdot[1]), -h * qdot[0], 0.0)
    }

    pub fn gravity_vector(&self, q: &Vector2<f64>) -> Vector2<f64> {
        let c12 = (q[0] + q[1]).cos();
        let g2 = self.m2 * self.lc2 * self.gravity * c12;
        let g1 = (self.m1 * self.lc1 + self.m2 * self.l1) * self.gravity * q[0].cos() + g2;
        Vector2::new(g1, g2)
    }

    /// `q̈ = H⁻¹ (τ − C q̇ − g)` with the 2×2 inverse in closed form.
    pub fn forward_dynamics(&self, q: &Vector2<f64>, qdot: &Vector2<f64>, tau: &Vector2<f64>) -> Vector2<f64> {
        let h = self.mass_matrix(q);
        let rhs = tau - self.coriolis_matrix(q, qdot) * qdot - self.gravity_vector(q);
        let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
        Vector2::new(
            (h[(1, 1)] * rhs[0] - h[(0, 1)] * rhs[1]) / det,
            (h[(0, 0)] * rhs[1] - h[(1, 0)] * rhs[0]) / det,
        )
    }

    pub fn kinetic_energy(&self, q: &Vector2<f64>, qdot: &Vector2<f64>) -> f64 {
        0.5 * qdot.dot(&(self.mass_matrix(q) * qdot))
    }
}

/// Leader position, velocity and acceleration at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSample {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

/// Natural cubic spline through sampled leader positions, one spline per
/// coordinate. Velocity and acceleration are the spline's derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    times: Vec<f64>,
    positions: Vec<Vec<f64>>,
    // second derivatives at the knots, [knot][coordinate]
    curvature: Vec<Vec<f64>>,
}

impl SampledTrajectory {
    pub fn new(times: Vec<f64>, positions: Vec<Vec<f64>>) -> Result<Self> {
        let n = times.len();
        if n < 2 {
            return Err(Error::invalid("leader.times", "at least two samples are required"));
        }
        if positions.len() != n {
            return Err(Error::Dimension {
                context: "leader sampled positions",
                expected: n,
                got: positions.len(),
            });
        }
        let m = positions[0].len();
        if m == 0 {
            return Err(Error::invalid("leader.positions[0]", "must have at least one coordinate"));
        }
        for (k, p) in positions.iter().enumerate() {
            if p.len() != m {
                return Err(Error::invalid(format!("leader.positions[{k}]"), format!("expected {m} coordinates")));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("leader.positions[{k}]"), "must be finite"));
            }
        }
        for k in 1..n {
            if !(times[k] > times[k - 1]) || !times[k].is_finite() {
                return Err(Error::invalid(format!("leader.times[{k}]"), "times must be finite and strictly increasing"));
            }
        }

        // Tridiagonal solve for natural-spline knot curvatures, per coordinate.
        let mut curvature = vec![vec![0.0; m]; n];
        if n > 2 {
            let inner = n - 2;
            for c in 0..m {
                let mut diag = vec![0.0; inner];
                let mut upper = vec![0.0; inner];
                let mut rhs = vec![0.0; inner];
                for r in 0..inner {
                    let k = r + 1;
                    let h0 = times[k] - times[k - 1];
                    let h1 = times[k + 1] - times[k];
                    diag[r] = 2.0 * (h0 + h1);
                    upper[r] = h1;
                    rhs[r] = 6.0
                        * ((positions[k + 1][c] - positions[k][c]) / h1 - (positions[k][c] - positions[k - 1][c]) / h0);
                }
                // Thomas algorithm; lower diagonal entry for row r is h0 = times[r+1]-times[r].
                for r in 1..inner {
                    let lower = times[r + 1] - times[r];
                    let w = lower / diag[r - 1];
                    diag[r] -= w * upper[r - 1];
                    rhs[r] -= w * rhs[r - 1];
                }
                let mut sol = vec![0.0; inner];
                sol[inner - 1] = rhs[inner - 1] / diag[inner - 1];
                for r in (0..inner - 1).rev() {
                    sol[r] = (rhs[r] - upper[r] * sol[r + 1]) / diag[r];
                }
                for r in 0..inner {
                    curvature[r + 1][c] = sol[r];
                }
            }
        }
        Ok(Self {
            times,
            positions,
            curvature,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn sample(&self, t: f64) -> Result<LeaderSample> {
        let (lo, hi) = (self.times[0], *self.times.last().unwrap());
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        let seg = (self.times.partition_point(|&s| s <= t).max(1) - 1).min(self.times.len() - 2);
        let (t0, t1) = (self.times[seg], self.times[seg + 1]);
        let h = t1 - t0;
        let (a, b) = (t1 - t, t - t0);
        let m = self.dim();
        let mut out = LeaderSample {
            x: vec![0.0; m],
            v: vec![0.0; m],
            a: vec![0.0; m],
        };
        for c in 0..m {
            let (y0, y1) = (self.positions[seg][c], self.positions[seg + 1][c]);
            let (k0, k1) = (self.curvature[seg][c], self.curvature[seg + 1][c]);
            out.x[c] = k0 * a.powi(3) / (6.0 * h)
                + k1 * b.powi(3) / (6.0 * h)
                + (y0 / h - k0 * h / 6.0) * a
                + (y1 / h - k1 * h / 6.0) * b;
            out.v[c] = -k0 * a * a / (2.0 * h) + k1 * b * b / (2.0 * h) + (y1 - y0) / h - (k1 - k0) * h / 6.0;
            out.a[c] = (k0 * a + k1 * b) / h;
        }
        Ok(out)
    }

    /// Largest jerk norm; the jerk is constant on each spline segment.
    pub fn jerk_bound(&self) -> f64 {
        (0..self.times.len() - 1)
            .map(|s| {
                let h = self.times[s + 1] - self.times[s];
                self.curvature[s]
                    .iter()
                    .zip(&self.curvature[s + 1])
                    .map(|(k0, k1)| ((k1 - k0) / h).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeaderSpec {
    /// `x₀(t) = center + radius·(cos ωt, sin ωt)`.
    Circle { center: [f64; 2], radius: f64, omega: f64 },
    Sampled(SampledTrajectory),
}

impl LeaderSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LeaderSpec::Circle { center, radius, omega } => {
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("leader.center", "must be finite"));
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::invalid("leader.radius", format!("must be >= 0, got {radius}")));
                }
                if !omega.is_finite() {
                    return Err(Error::invalid("leader.omega", "must be finite"));
                }
                Ok(())
            }
            LeaderSpec::Sampled(_) => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LeaderSpec::Circle { .. } => 2,
            LeaderSpec::Sampled(s) => s.dim(),
        }
    }

    /// `sup ‖ȧ₀‖` over the trajectory's domain.
    pub fn jerk_bound(&self) -> f64 {
        match self {
            LeaderSpec::Circle { radius, omega, .. } => radius * omega.abs().powi(3),
            LeaderSpec::Sampled(s) => s.jerk_bound(),
        }
    }

    /// True when `v₀` is constant in time (then an isolated agent group
    /// could follow the leader by accident).
    pub fn has_constant_velocity(&self) -> bool {
        match self {
            LeaderSpec::Circle { radius, omega, .. } => *radius == 0.0 || *omega == 0.0,
            LeaderSpec::Sampled(s) => s.curvature.iter().flatten().all(|k| *k == 0.0),
        }
    }

    pub fn state(&self, t: f64) -> Result<LeaderSample> {
        match self {
            LeaderSpec::Circle { center, radius, omega } => {
                let (s, c) = (omega * t).sin_cos();
                let w2 = omega * omega;
                Ok(LeaderSample {
                    x: vec![center[0] + radius * c, center[1] + radius * s],
                    v: vec![-radius * omega * s, radius * omega * c],
                    a: vec![-radius * w2 * c, -radius * w2 * s],
                })
            }
            LeaderSpec::Sampled(s) => s.sample(t),
        }
    }
}
