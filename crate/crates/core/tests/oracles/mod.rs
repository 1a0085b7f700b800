//! Independent reference implementations used to cross-check the library.
//! Shared between the core integration tests and the acceptance suite.
#![allow(dead_code)]

use formation_core::control::{estimator_rhs, AgentSignals, Gains, NeighborView, ShapingFunction};
use formation_core::dynamics::{LeaderSample, ManipulatorParams};
use formation_core::graph::Topology;
use nalgebra::{DMatrix, Vector2};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- graphs

fn edge_list(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

/// Leader reachability by transitive closure (Warshall) of the adjacency
/// relation: every agent must reach some pinned agent.
pub fn reachable_by_closure(n: usize, edges: &[(usize, usize)], pinned: &[bool]) -> bool {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(i, j) in edges {
        r[i][j] = true;
        r[j][i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    (0..n).all(|i| (0..n).any(|j| r[i][j] && pinned[j]))
}

/// Compares `leader_reachable` with the closure oracle on every undirected
/// unit-weight graph and every pinning set with `n ≤ max_n`. Also checks
/// that reachability coincides with `det B ≠ 0` (`B` is an integer PSD
/// matrix here, so its determinant is a non-negative integer).
/// Returns the number of graphs examined.
pub fn reachability_exhaustive(max_n: usize) -> Result<usize, String> {
    let mut checked = 0;
    for n in 1..=max_n {
        let all = edge_list(n);
        for emask in 0u32..(1 << all.len()) {
            let edges: Vec<(usize, usize)> =
                all.iter().enumerate().filter(|(k, _)| emask >> k & 1 == 1).map(|(_, e)| *e).collect();
            for pmask in 0u32..(1 << n) {
                let pinned: Vec<bool> = (0..n).map(|i| pmask >> i & 1 == 1).collect();
                let pinning: Vec<f64> = pinned.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
                let topo = Topology::from_edges(n, &edges, &pinning).map_err(|e| e.to_string())?;
                let want = reachable_by_closure(n, &edges, &pinned);
                if topo.leader_reachable() != want {
                    return Err(format!("n = {n}, edges {edges:?}, pinned {pinned:?}: expected {want}"));
                }
                let unreached = topo.unreached_agents();
                if unreached.is_empty() != want {
                    return Err(format!("unreached_agents disagrees for edges {edges:?}, pinned {pinned:?}"));
                }
                let pd = topo.coupling().determinant() > 0.5;
                if pd != want {
                    return Err(format!("positive definiteness {pd} vs reachability {want} for {edges:?}, {pinned:?}"));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

// ---------------------------------------------------------------- spectra

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off.sqrt() < 1e-15 * a.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Characteristic polynomial coefficients `c[0..=n]` of `det(λI − A)`,
/// highest degree first, by the Faddeev–LeVerrier recursion.
pub fn faddeev_leverrier(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut c = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c[k - 1];
        let am = a * &m;
        c.push(-am.trace() / k as f64);
    }
    c
}

fn poly_eval(c: &[f64], x: f64) -> (f64, f64) {
    let (mut p, mut dp) = (0.0, 0.0);
    for &ck in c {
        dp = dp * x + p;
        p = p * x + ck;
    }
    (p, dp)
}

/// Extreme roots of a real-rooted polynomial by Newton's method started
/// outside the Gershgorin interval, where the iteration is monotone.
pub fn extreme_roots(c: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let newton = |mut x: f64| {
        for _ in 0..10_000 {
            let (p, dp) = poly_eval(c, x);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            x -= step;
            if step.abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        x
    };
    (newton(lo), newton(hi))
}

fn gershgorin(a: &DMatrix<f64>) -> (f64, f64) {
    (0..a.nrows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
        let r: f64 = (0..a.ncols()).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        (lo.min(a[(i, i)] - r - 1.0), hi.max(a[(i, i)] + r + 1.0))
    })
}

/// Random weighted undirected graph with at least one pinned agent per
/// connected component, `n ≤ 6`.
pub fn random_reachable_topology(rng: &mut ChaCha8Rng) -> Topology {
    let n = rng.gen_range(1..=6);
    let w = Uniform::new(0.1, 3.0);
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(0.5) {
                let v = w.sample(rng);
                weights[i][j] = v;
                weights[j][i] = v;
            }
        }
    }
    let mut pinning: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.4) { w.sample(rng) } else { 0.0 }).collect();
    loop {
        let topo = Topology::from_rows(&weights, &pinning).unwrap();
        let unreached = topo.unreached_agents();
        match unreached.first() {
            None => return topo,
            Some(&i) => pinning[i] = w.sample(rng),
        }
    }
}

/// Largest absolute difference between `spectral_bounds` and the Jacobi
/// and characteristic-polynomial oracles over random reachable topologies
/// plus the six-agent example graph.
pub fn spectrum_vs_oracles(samples: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topologies = vec![Topology::from_edges(6, &[(0, 2), (0, 3), (4, 5)], &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap()];
    topologies.extend((0..samples).map(|_| random_reachable_topology(&mut rng)));
    let mut worst: f64 = 0.0;
    for topo in &topologies {
        let (lmin, lmax) = topo.spectral_bounds().map_err(|e| e.to_string())?;
        let b = topo.coupling();
        let ev = jacobi_eigenvalues(b);
        worst = worst.max((lmin - ev[0]).abs()).max((lmax - ev[ev.len() - 1]).abs());
        let cp = faddeev_leverrier(b);
        let (glo, ghi) = gershgorin(b);
        let (rmin, rmax) = extreme_roots(&cp, glo, ghi);
        // repeated extreme eigenvalues limit Newton's accuracy; compare only simple ones
        let simple_lo = ev.len() < 2 || ev[1] - ev[0] > 1e-3;
        let simple_hi = ev.len() < 2 || ev[ev.len() - 1] - ev[ev.len() - 2] > 1e-3;
        if simple_lo {
            worst = worst.max((lmin - rmin).abs());
        }
        if simple_hi {
            worst = worst.max((lmax - rmax).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------- dynamics

/// Forward-mode dual number.
#[derive(Debug, Clone, Copy)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }
    pub fn var(v: f64) -> Self {
        Self { v, d: 1.0 }
    }
    pub fn sin(self) -> Self {
        Self {
            v: self.v.sin(),
            d: self.d * self.v.cos(),
        }
    }
    pub fn cos(self) -> Self {
        Self {
            v: self.v.cos(),
            d: -self.d * self.v.sin(),
        }
    }
}

impl std::ops::Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl std::ops::Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl std::ops::Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self * o.v, d: self * o.d }
    }
}

/// Kinetic energy from the link geometry: translational energy of both
/// centres of mass plus rotational energy about them.
fn kinetic(p: &ManipulatorParams, q: [Dual; 2], qd: [f64; 2]) -> Dual {
    let c = Dual::constant;
    let (s1, c1) = (q[0].sin(), q[0].cos());
    let q12 = q[0] + q[1];
    let (s12, c12) = (q12.sin(), q12.cos());
    let w1 = qd[0];
    let w12 = qd[0] + qd[1];
    let v1x = (-p.lc1 * w1) * s1;
    let v1y = (p.lc1 * w1) * c1;
    let v2x = (-p.l1 * w1) * s1 + (-p.lc2 * w12) * s12;
    let v2y = (p.l1 * w1) * c1 + (p.lc2 * w12) * c12;
    (0.5 * p.m1) * (v1x * v1x + v1y * v1y)
        + (0.5 * p.m2) * (v2x * v2x + v2y * v2y)
        + c(0.5 * p.i1 * w1 * w1 + 0.5 * p.i2 * w12 * w12)
}

/// Potential energy with gravity along −y and joint angles from +x.
fn potential(p: &ManipulatorParams, q: [Dual; 2]) -> Dual {
    (p.gravity * (p.m1 * p.lc1 + p.m2 * p.l1)) * q[0].sin() + (p.gravity * p.m2 * p.lc2) * (q[0] + q[1]).sin()
}

/// `H` and `∂H/∂q_k` by polarization of the kinetic energy (quadratic in
/// `q̇`), with the `q` derivative carried by dual numbers.
fn mass_and_derivative(p: &ManipulatorParams, q: [f64; 2], k: usize) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let qd = [
        if k == 0 { Dual::var(q[0]) } else { Dual::constant(q[0]) },
        if k == 1 { Dual::var(q[1]) } else { Dual::constant(q[1]) },
    ];
    let t11 = kinetic(p, qd, [1.0, 0.0]);
    let t22 = kinetic(p, qd, [0.0, 1.0]);
    let tsum = kinetic(p, qd, [1.0, 1.0]);
    let h11 = 2.0 * t11;
    let h22 = 2.0 * t22;
    let h12 = tsum + (-1.0 * t11) + (-1.0 * t22);
    (
        [[h11.v, h12.v], [h12.v, h22.v]],
        [[h11.d, h12.d], [h12.d, h22.d]],
    )
}

pub struct LagrangianModel {
    pub h: [[f64; 2]; 2],
    pub c: [[f64; 2]; 2],
    pub g: [f64; 2],
}

/// `H`, Christoffel-form `C` and `g` derived from the Lagrangian.
pub fn lagrangian_model(p: &ManipulatorParams, q: [f64; 2], qdot: [f64; 2]) -> LagrangianModel {
    let (h, dh0) = mass_and_derivative(p, q, 0);
    let (_, dh1) = mass_and_derivative(p, q, 1);
    let dh = [dh0, dh1];
    let mut c = [[0.0; 2]; 2];
    for kk in 0..2 {
        for j in 0..2 {
            c[kk][j] = (0..2)
                .map(|i| 0.5 * (dh[i][kk][j] + dh[j][kk][i] - dh[kk][i][j]) * qdot[i])
                .sum();
        }
    }
    let g0 = potential(p, [Dual::var(q[0]), Dual::constant(q[1])]).d;
    let g1 = potential(p, [Dual::constant(q[0]), Dual::var(q[1])]).d;
    LagrangianModel { h, c, g: [g0, g1] }
}

pub fn random_params(rng: &mut ChaCha8Rng) -> ManipulatorParams {
    let u = Uniform::new(0.3, 2.5);
    let l1 = u.sample(rng);
    let l2 = u.sample(rng);
    ManipulatorParams {
        m1: u.sample(rng),
        m2: u.sample(rng),
        l1,
        l2,
        lc1: rng.gen_range(0.1..0.9) * l1,
        lc2: rng.gen_range(0.1..0.9) * l2,
        i1: rng.gen_range(0.01..0.5),
        i2: rng.gen_range(0.01..0.5),
        gravity: rng.gen_range(0.0..12.0),
    }
}

/// Largest absolute difference in `H`, `C`, `g` between the library and
/// the Lagrangian oracle over random parameters and configurations.
pub fn dynamics_vs_lagrangian(samples: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Uniform::new_inclusive(-std::f64::consts::PI, std::f64::consts::PI);
    let rate = Uniform::new_inclusive(-5.0, 5.0);
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let p = if k == 0 { ManipulatorParams::default() } else { random_params(&mut rng) };
        let q = [angle.sample(&mut rng), angle.sample(&mut rng)];
        let qd = [rate.sample(&mut rng), rate.sample(&mut rng)];
        let oracle = lagrangian_model(&p, q, qd);
        let (qv, qdv) = (Vector2::from(q), Vector2::from(qd));
        let h = p.mass_matrix(&qv);
        let c = p.coriolis_matrix(&qv, &qdv);
        let g = p.gravity_vector(&qv);
        for i in 0..2 {
            worst = worst.max((g[i] - oracle.g[i]).abs());
            for j in 0..2 {
                worst = worst.max((h[(i, j)] - oracle.h[i][j]).abs());
                worst = worst.max((c[(i, j)] - oracle.c[i][j]).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest entry of `N + Nᵀ` with `N = Ḣ − 2C`, `Ḣ` by central differences
/// along the motion.
pub fn skew_symmetry_residual(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Uniform::new_inclusive(-std::f64::consts::PI, std::f64::consts::PI);
    let rate = Uniform::new_inclusive(-3.0, 3.0);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let p = if k == 0 { ManipulatorParams::default() } else { random_params(&mut rng) };
        let q = Vector2::new(angle.sample(&mut rng), angle.sample(&mut rng));
        let qd = Vector2::new(rate.sample(&mut rng), rate.sample(&mut rng));
        let hdot = (p.mass_matrix(&(q + qd * h)) - p.mass_matrix(&(q - qd * h))) / (2.0 * h);
        let n = hdot - 2.0 * p.coriolis_matrix(&q, &qd);
        worst = worst.max((n + n.transpose()).abs().max());
    }
    worst
}

// ---------------------------------------------------------------- estimator

/// Largest difference between the per-agent estimator right-hand side and
/// the stacked form `−β sgn((B ⊗ I_m)(a − 1 ⊗ a₀))` evaluated with a dense
/// Kronecker product.
pub fn stacked_estimator_residual(samples: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new_inclusive(-5.0, 5.0);
    let m = 2;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let topo = random_reachable_topology(&mut rng);
        let n = topo.n();
        let beta = rng.gen_range(0.5..8.0);
        let gains = Gains::new(0.5, beta, ShapingFunction::linear(1.0).unwrap(), ShapingFunction::linear(1.0).unwrap())
            .map_err(|e| e.to_string())?;
        let a: Vec<Vec<f64>> = (0..n).map(|_| vec![u.sample(&mut rng), u.sample(&mut rng)]).collect();
        let leader = LeaderSample {
            x: vec![u.sample(&mut rng), u.sample(&mut rng)],
            v: vec![u.sample(&mut rng), u.sample(&mut rng)],
            a: vec![u.sample(&mut rng), u.sample(&mut rng)],
        };

        let kron = topo.coupling().kronecker(&DMatrix::<f64>::identity(m, m));
        let a0 = &leader.a;
        let abar = nalgebra::DVector::from_iterator(n * m, a.iter().flat_map(|ai| (0..m).map(move |k| ai[k] - a0[k])));
        let y = &kron * abar;
        let stacked: Vec<f64> = y.iter().map(|v| -beta * if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 }).collect();

        let zeros = vec![0.0; m];
        let signals: Vec<AgentSignals> = a
            .iter()
            .map(|ai| AgentSignals {
                q: &zeros,
                qdot: &zeros,
                a_est: ai,
                eta: &zeros,
            })
            .collect();
        for i in 0..n {
            let view = NeighborView::gather(&topo, i, &signals, &leader);
            let consensus = view.estimator_consensus().map_err(|e| e.to_string())?;
            let rhs = estimator_rhs(&view, &gains).map_err(|e| e.to_string())?;
            for k in 0..m {
                worst = worst.max((consensus[k] - y[i * m + k]).abs());
                worst = worst.max((rhs[k] - stacked[i * m + k]).abs());
            }
        }
    }
    Ok(worst)
}
