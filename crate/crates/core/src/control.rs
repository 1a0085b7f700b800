//! Distributed estimator-based control law.
//!
//! Each agent `i` combines three pieces computed from local information:
//!
//! * a reference acceleration
//!   `q̈_ri = a_i − φ(sig(e_q)^{α₁}) − ψ(sig(e_v)^{α₂})` where `e_q`, `e_v`
//!   are the weighted position and velocity consensus errors towards the
//!   neighbours' formation slots and, for pinned agents, the leader;
//! * the computed torque `τ_i = H(q_i) q̈_ri + C(q_i, q̇_i) q̇_i + g(q_i)`;
//! * the sliding-mode estimate of the leader acceleration
//!   `ȧ_i = −β sgn(Σ w_ij (a_i − a_j) + p_i (a_i − a₀))`.

use nalgebra::Vector2;

use crate::dynamics::{LeaderSample, ManipulatorParams};
use crate::graph::Topology;
use crate::{Error, Result};

/// `|z|^κ sign(z)` for a scalar, with `sign(0) = 0`.
#[inline]
pub fn sig_scalar(z: f64, kappa: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z.abs().powf(kappa).copysign(z)
    }
}

/// Component-wise `sig(z)^κ`.
pub fn sig_pow(z: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa", format!("exponent must be > 0, got {kappa}")));
    }
    Ok(z.iter().map(|&v| sig_scalar(v, kappa)).collect())
}

/// Signum with `sgn(0) = 0`.
#[inline]
pub fn sgn(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn derive_alpha2(alpha1: f64) -> Result<f64> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(Error::invalid("alpha1", format!("must lie in (0, 1), got {alpha1}")));
    }
    Ok(2.0 * alpha1 / (alpha1 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapingKind {
    Linear,
    Saturation,
    Tanh,
}

/// Odd shaping function applied component-wise. The nonlinear kinds are
/// scaled as `c·δ·unit(z/δ)` so that the slope at the origin is `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingFunction {
    kind: ShapingKind,
    gain: f64,
    scale: f64,
}

impl ShapingFunction {
    pub fn new(kind: ShapingKind, gain: f64, scale: f64) -> Result<Self> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::invalid("c", format!("shaping gain must be > 0, got {gain}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid("delta", format!("shaping scale must be > 0, got {scale}")));
        }
        Ok(Self { kind, gain, scale })
    }

    pub fn linear(gain: f64) -> Result<Self> {
        Self::new(ShapingKind::Linear, gain, 1.0)
    }

    pub fn kind(&self) -> ShapingKind {
        self.kind
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn apply_scalar(&self, z: f64) -> f64 {
        match self.kind {
            ShapingKind::Linear => self.gain * z,
            ShapingKind::Saturation => self.gain * self.scale * (z / self.scale).clamp(-1.0, 1.0),
            ShapingKind::Tanh => self.gain * self.scale * (z / self.scale).tanh(),
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| self.apply_scalar(v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    alpha1: f64,
    alpha2: f64,
    beta: f64,
    phi: ShapingFunction,
    psi: ShapingFunction,
    boundary_layer: Option<f64>,
}

impl Gains {
    /// `α₂` is always derived from `α₁`. `β` must exceed the leader's jerk
    /// bound; that comparison needs the leader and is made by the scenario.
    pub fn new(alpha1: f64, beta: f64, phi: ShapingFunction, psi: ShapingFunction) -> Result<Self> {
        let alpha2 = derive_alpha2(alpha1)?;
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
        }
        Ok(Self {
            alpha1,
            alpha2,
            beta,
            phi,
            psi,
            boundary_layer: None,
        })
    }

    /// Replaces `sgn` in the estimator by `sat(·/width)`. This changes the
    /// estimator (it no longer converges exactly) and is off by default.
    pub fn with_boundary_layer(mut self, width: Option<f64>) -> Result<Self> {
        if let Some(w) = width {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid("estimator_boundary_layer", format!("must be > 0, got {w}")));
            }
        }
        self.boundary_layer = width;
        Ok(self)
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phi(&self) -> &ShapingFunction {
        &self.phi
    }

    pub fn psi(&self) -> &ShapingFunction {
        &self.psi
    }

    pub fn boundary_layer(&self) -> Option<f64> {
        self.boundary_layer
    }

    pub fn with_alpha1(self, alpha1: f64) -> Result<Self> {
        Gains::new(alpha1, self.beta, self.phi, self.psi)?.with_boundary_layer(self.boundary_layer)
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Gains::new(self.alpha1, beta, self.phi, self.psi)?.with_boundary_layer(self.boundary_layer)
    }
}

/// The signals one agent exposes to its neighbours.
#[derive(Debug, Clone, Copy)]
pub struct AgentSignals<'a> {
    pub q: &'a [f64],
    pub qdot: &'a [f64],
    pub a_est: &'a [f64],
    /// Formation slot `η_{σ(t)i}`.
    pub eta: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub weight: f64,
    pub signals: AgentSignals<'a>,
}

/// Everything agent `i` may use at one instant. The leader sample is
/// present only for pinned agents.
#[derive(Debug, Clone)]
pub struct NeighborView<'a> {
    pub own: AgentSignals<'a>,
    pub neighbors: Vec<Neighbor<'a>>,
    pub pinning: f64,
    pub leader: Option<&'a LeaderSample>,
}

impl<'a> NeighborView<'a> {
    pub fn gather(topology: &Topology, i: usize, agents: &[AgentSignals<'a>], leader: &'a LeaderSample) -> Self {
        let pinning = topology.pinning()[i];
        Self {
            own: agents[i],
            neighbors: topology
                .neighbors(i)
                .map(|j| Neighbor {
                    weight: topology.weight(i, j),
                    signals: agents[j],
                })
                .collect(),
            pinning,
            leader: (pinning > 0.0).then_some(leader),
        }
    }

    fn dim(&self) -> usize {
        self.own.q.len()
    }

    fn check_dims(&self) -> Result<()> {
        let m = self.dim();
        let own = [self.own.qdot.len(), self.own.a_est.len(), self.own.eta.len()];
        let nb = self
            .neighbors
            .iter()
            .flat_map(|n| [n.signals.q.len(), n.signals.qdot.len(), n.signals.a_est.len(), n.signals.eta.len()]);
        let leader = self.leader.iter().flat_map(|l| [l.x.len(), l.v.len(), l.a.len()]);
        for got in own.into_iter().chain(nb).chain(leader) {
            if got != m {
                return Err(Error::Dimension {
                    context: "neighbor view",
                    expected: m,
                    got,
                });
            }
        }
        if self.pinning > 0.0 && self.leader.is_none() {
            return Err(Error::invalid("leader", "pinned agent requires the leader sample"));
        }
        Ok(())
    }

    /// Weighted position and velocity consensus errors
    /// `(Σ w_ij q̄_ij + p_i q̄_i, Σ w_ij q̄̇_ij + p_i q̄̇_i)`.
    pub fn consensus_errors(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims()?;
        let m = self.dim();
        let own = &self.own;
        let mut eq = vec![0.0; m];
        let mut ev = vec![0.0; m];
        for nb in &self.neighbors {
            let s = &nb.signals;
            for k in 0..m {
                eq[k] += nb.weight * (own.q[k] - s.q[k] - own.eta[k] + s.eta[k]);
                ev[k] += nb.weight * (own.qdot[k] - s.qdot[k]);
            }
        }
        if let Some(l) = self.leader.filter(|_| self.pinning > 0.0) {
            for k in 0..m {
                eq[k] += self.pinning * (own.q[k] - own.eta[k] - l.x[k]);
                ev[k] += self.pinning * (own.qdot[k] - l.v[k]);
            }
        }
        Ok((eq, ev))
    }

    /// `Σ w_ij (a_i − a_j) + p_i (a_i − a₀)`.
    pub fn estimator_consensus(&self) -> Result<Vec<f64>> {
        self.check_dims()?;
        let m = self.dim();
        let mut s = vec![0.0; m];
        for nb in &self.neighbors {
            for k in 0..m {
                s[k] += nb.weight * (self.own.a_est[k] - nb.signals.a_est[k]);
            }
        }
        if let Some(l) = self.leader.filter(|_| self.pinning > 0.0) {
            for k in 0..m {
                s[k] += self.pinning * (self.own.a_est[k] - l.a[k]);
            }
        }
        Ok(s)
    }
}

pub fn reference_accel(view: &NeighborView<'_>, gains: &Gains) -> Result<Vec<f64>> {
    let (eq, ev) = view.consensus_errors()?;
    Ok((0..eq.len())
        .map(|k| {
            view.own.a_est[k]
                - gains.phi.apply_scalar(sig_scalar(eq[k], gains.alpha1))
                - gains.psi.apply_scalar(sig_scalar(ev[k], gains.alpha2))
        })
        .collect())
}

pub fn inverse_dynamics_torque(
    params: &ManipulatorParams,
    q: &Vector2<f64>,
    qdot: &Vector2<f64>,
    qddot_r: &Vector2<f64>,
) -> Vector2<f64> {
    params.mass_matrix(q) * qddot_r + params.coriolis_matrix(q, qdot) * qdot + params.gravity_vector(q)
}

pub fn estimator_rhs(view: &NeighborView<'_>, gains: &Gains) -> Result<Vec<f64>> {
    let s = view.estimator_consensus()?;
    let beta = gains.beta;
    Ok(match gains.boundary_layer {
        None => s.iter().map(|&v| -beta * sgn(v)).collect(),
        Some(w) => s.iter().map(|&v| -beta * (v / w).clamp(-1.0, 1.0)).collect(),
    })
}

/// Upper bound on the time at which every estimate equals `a₀`:
/// `T_f = t₀ + √(2 λ_max V₀) / (λ_min (β − sup‖ȧ₀‖))` with
/// `V₀ = ½ āᵀ (B ⊗ I_m) ā`.
pub fn estimator_settle_bound(
    t0: f64,
    topology: &Topology,
    abar0: &[f64],
    m: usize,
    beta: f64,
    jerk_bound: f64,
) -> Result<f64> {
    if !(beta > jerk_bound) {
        return Err(Error::Assumption(format!(
            "beta = {beta} must exceed the leader jerk bound {jerk_bound}"
        )));
    }
    let (lmin, lmax) = topology.spectral_bounds()?;
    let v0 = 0.5 * topology.coupling_quadratic(abar0, m)?;
    Ok(t0 + (2.0 * lmax * v0).sqrt() / (lmin * (beta - jerk_bound)))
}
