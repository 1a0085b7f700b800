//! Undirected interaction topology with leader pinning.
//!
//! The stacked coupling matrix `M = (L + diag(P)) ⊗ I_m` is never built:
//! only `B = L + diag(P)` is stored and products with `M` are applied one
//! coordinate dimension at a time.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

const EIGEN_EPS: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    weights: DMatrix<f64>,
    pinning: DVector<f64>,
    laplacian: DMatrix<f64>,
    coupling: DMatrix<f64>,
}

impl Topology {
    /// Validates `weights`/`pinning` and derives the Laplacian and the
    /// coupling matrix `B = L + diag(P)`.
    pub fn new(weights: DMatrix<f64>, pinning: DVector<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 {
            return Err(Error::invalid("weights", "at least one agent is required"));
        }
        if weights.ncols() != n {
            return Err(Error::invalid(
                "weights",
                format!("matrix must be square, got {}x{}", n, weights.ncols()),
            ));
        }
        if pinning.len() != n {
            return Err(Error::Dimension {
                context: "pinning vector",
                expected: n,
                got: pinning.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                let field = format!("weights[{i}][{j}]");
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::invalid(field, format!("must be finite and >= 0, got {w}")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::invalid(field, "self-edges are not allowed"));
                }
                if w != weights[(j, i)] {
                    return Err(Error::invalid(
                        field,
                        format!("asymmetric: w[{i}][{j}] = {w} but w[{j}][{i}] = {}", weights[(j, i)]),
                    ));
                }
            }
        }
        for (i, &p) in pinning.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid(
                    format!("pinning[{i}]"),
                    format!("must be finite and >= 0, got {p}"),
                ));
            }
        }

        let mut laplacian = -weights.clone();
        for i in 0..n {
            laplacian[(i, i)] = weights.row(i).sum();
        }
        let mut coupling = laplacian.clone();
        for i in 0..n {
            coupling[(i, i)] += pinning[i];
        }
        Ok(Self {
            weights,
            pinning,
            laplacian,
            coupling,
        })
    }

    /// Convenience constructor from row-major nested vectors.
    pub fn from_rows(weights: &[Vec<f64>], pinning: &[f64]) -> Result<Self> {
        let n = weights.len();
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(
                    format!("weights[{i}]"),
                    format!("expected {n} entries, got {}", row.len()),
                ));
            }
        }
        let w = DMatrix::from_fn(n, n, |i, j| weights[i][j]);
        Self::new(w, DVector::from_column_slice(pinning))
    }

    /// Unit-weight topology built from an undirected edge list (0-based).
    pub fn from_edges(n: usize, edges: &[(usize, usize)], pinning: &[f64]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid("edges", format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
        Self::new(w, DVector::from_column_slice(pinning))
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn pinning(&self) -> &DVector<f64> {
        &self.pinning
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    /// Indices `j` with `w_ij > 0`, in increasing order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.weights[(i, j)] > 0.0)
    }

    /// True iff every connected component of the positive-weight graph
    /// contains at least one pinned node. For undirected graphs this is the
    /// same as the leader having a path to every agent.
    pub fn leader_reachable(&self) -> bool {
        self.unreached_agents().is_empty()
    }

    /// Agents whose component has no pinned node, in increasing order.
    pub fn unreached_agents(&self) -> Vec<usize> {
        let n = self.n();
        let mut sets = DisjointSets::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if self.weights[(i, j)] > 0.0 {
                    sets.union(i, j);
                }
            }
        }
        let mut pinned_root = vec![false; n];
        for i in 0..n {
            if self.pinning[i] > 0.0 {
                let r = sets.find(i);
                pinned_root[r] = true;
            }
        }
        (0..n).filter(|&i| !pinned_root[sets.find(i)]).collect()
    }

    /// Smallest and largest eigenvalue of `B` (identical to those of `M`).
    pub fn spectral_bounds(&self) -> Result<(f64, f64)> {
        if !self.leader_reachable() {
            return Err(Error::NotReachable(format!(
                "agents {:?} have no path to the leader; B is singular",
                self.unreached_agents()
            )));
        }
        let eig = SymmetricEigen::try_new(self.coupling.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or(Error::Eigen)?;
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        Ok((min, max))
    }

    /// Computes `(B ⊗ I_m) x` for an agent-major stacked vector `x`.
    pub fn apply_coupling(&self, x: &[f64], m: usize) -> Result<Vec<f64>> {
        let n = self.n();
        if x.len() != n * m {
            return Err(Error::Dimension {
                context: "stacked vector for coupling product",
                expected: n * m,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..n {
                let b = self.coupling[(i, j)];
                if b == 0.0 {
                    continue;
                }
                for k in 0..m {
                    out[i * m + k] += b * x[j * m + k];
                }
            }
        }
        Ok(out)
    }

    /// `xᵀ (B ⊗ I_m) x`.
    pub fn coupling_quadratic(&self, x: &[f64], m: usize) -> Result<f64> {
        let bx = self.apply_coupling(x, m)?;
        Ok(x.iter().zip(&bx).map(|(a, b)| a * b).sum())
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Piecewise-constant topology over time. Entry `k` is active on
/// `[start_k, start_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySchedule {
    entries: Vec<(f64, Topology)>,
}

impl TopologySchedule {
    pub fn new(entries: Vec<(f64, Topology)>) -> Result<Self> {
        let Some((_, first)) = entries.first() else {
            return Err(Error::invalid("topology_schedule", "at least one entry is required"));
        };
        let n = first.n();
        for (k, (start, topo)) in entries.iter().enumerate() {
            if !start.is_finite() {
                return Err(Error::invalid(format!("topology_schedule[{k}].start"), "must be finite"));
            }
            if topo.n() != n {
                return Err(Error::Dimension {
                    context: "topology schedule entry agent count",
                    expected: n,
                    got: topo.n(),
                });
            }
            if k > 0 && *start <= entries[k - 1].0 {
                return Err(Error::invalid(
                    format!("topology_schedule[{k}].start"),
                    "start times must be strictly increasing",
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn fixed(start: f64, topology: Topology) -> Self {
        Self {
            entries: vec![(start, topology)],
        }
    }

    pub fn entries(&self) -> &[(f64, Topology)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.entries[0].0
    }

    /// Start times of every entry after the first.
    pub fn switch_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().skip(1).map(|(t, _)| *t)
    }

    pub fn index_at(&self, t: f64) -> Result<usize> {
        if t < self.start() {
            return Err(Error::BeforeStart { t, start: self.start() });
        }
        Ok(self.entries.partition_point(|(s, _)| *s <= t) - 1)
    }

    pub fn topology_at(&self, t: f64) -> Result<&Topology> {
        self.index_at(t).map(|k| &self.entries[k].1)
    }

    pub fn get(&self, index: usize) -> Option<&Topology> {
        self.entries.get(index).map(|(_, t)| t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_topology() -> Topology {
        Topology::from_edges(6, &[(0, 2), (0, 3), (4, 5)], &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn paper_laplacian_matches_printed_matrix() {
        let expected = [
            [2.0, 0.0, -1.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, 0.0, 0.0, -1.0, 1.0],
        ];
        let t = paper_topology();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(t.laplacian()[(i, j)], expected[i][j], "L[{i}][{j}]");
            }
        }
    }

    #[test]
    fn single_pinned_node() {
        let t = Topology::from_rows(&[vec![0.0]], &[1.0]).unwrap();
        assert_eq!(t.laplacian()[(0, 0)], 0.0);
        assert_eq!(t.coupling()[(0, 0)], 1.0);
        assert_eq!(t.spectral_bounds().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn asymmetric_weights_rejected() {
        let err = Topology::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]], &[1.0, 0.0]).unwrap_err();
        match err {
            Error::Invalid { field, .. } => assert_eq!(field, "weights[0][1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_and_diagonal_entries_rejected() {
        assert!(Topology::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]], &[1.0, 0.0]).is_err());
        assert!(Topology::from_rows(&[vec![1.0]], &[1.0]).is_err());
        let err = Topology::from_rows(&[vec![0.0]], &[-1.0]).unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "pinning[0]"));
    }

    #[test]
    fn reachability_examples() {
        let t = paper_topology();
        assert!(t.leader_reachable());

        let broken = Topology::from_edges(6, &[(0, 2), (0, 3), (4, 5)], &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(!broken.leader_reachable());
        assert_eq!(broken.unreached_agents(), vec![4, 5]);
        assert!(matches!(broken.spectral_bounds(), Err(Error::NotReachable(_))));

        let all: Vec<(usize, usize)> = (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))).collect();
        let complete = Topology::from_edges(4, &all, &[0.0; 4]).unwrap();
        assert!(!complete.leader_reachable());
    }

    #[test]
    fn isolated_pinned_pair_is_identity() {
        let t = Topology::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[1.0, 1.0]).unwrap();
        let (lo, hi) = t.spectral_bounds().unwrap();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn paper_spectrum_closed_form() {
        // Components {1,3,4}, {2}, {5,6}: eigenvalues 2 ± √3, 1, 1, (3 ± √5)/2.
        let (lo, hi) = paper_topology().spectral_bounds().unwrap();
        assert!((lo - (2.0 - 3f64.sqrt())).abs() < 1e-12);
        assert!((hi - (2.0 + 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn coupling_product_matches_dense_kronecker() {
        let t = paper_topology();
        let m = 2;
        let x: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin()).collect();
        let b = t.coupling();
        let dense = DMatrix::from_fn(12, 12, |r, c| if r % m == c % m { b[(r / m, c / m)] } else { 0.0 });
        let expected = &dense * DVector::from_column_slice(&x);
        let got = t.apply_coupling(&x, m).unwrap();
        for k in 0..12 {
            assert!((got[k] - expected[k]).abs() < 1e-14);
        }
        assert!(t.apply_coupling(&x[..5], m).is_err());
    }

    #[test]
    fn schedule_lookup_is_right_continuous() {
        let a = paper_topology();
        let b = Topology::from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)], &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let s = TopologySchedule::new(vec![(0.0, a.clone()), (5.0, b.clone())]).unwrap();
        assert_eq!(s.topology_at(4.999).unwrap(), &a);
        assert_eq!(s.topology_at(5.0).unwrap(), &b);
        assert!(matches!(s.topology_at(-0.1), Err(Error::BeforeStart { .. })));

        let single = TopologySchedule::fixed(0.0, a.clone());
        assert_eq!(single.topology_at(100.0).unwrap(), &a);
    }

    #[test]
    fn schedule_rejects_unsorted_starts() {
        let a = paper_topology();
        assert!(TopologySchedule::new(vec![(0.0, a.clone()), (0.0, a)]).is_err());
        assert!(TopologySchedule::new(vec![]).is_err());
    }
}
