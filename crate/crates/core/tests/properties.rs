use approx::assert_relative_eq;
use formation_core::control::{sig_pow, sig_scalar, ShapingFunction, ShapingKind};
use formation_core::formation::{center_formation, validate_formation};
use formation_core::graph::Topology;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn shaping() -> impl Strategy<Value = ShapingFunction> {
    (
        prop::sample::select(vec![ShapingKind::Linear, ShapingKind::Saturation, ShapingKind::Tanh]),
        0.1f64..200.0,
        0.05f64..5.0,
    )
        .prop_map(|(k, c, d)| ShapingFunction::new(k, c, d).unwrap())
}

/// Symmetric weights (some zero) plus arbitrary non-negative pinning.
fn topology() -> impl Strategy<Value = Topology> {
    (1usize..=7).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], n * n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], n),
        )
            .prop_map(move |(w, p)| {
                let mut rows = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        rows[i][j] = w[i * n + j];
                        rows[j][i] = w[i * n + j];
                    }
                }
                Topology::from_rows(&rows, &p).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn shaping_is_odd_monotone_and_sector_bounded(f in shaping(), z in -50.0f64..50.0, dz in 1e-6f64..10.0) {
        prop_assert_eq!(f.apply_scalar(0.0), 0.0);
        prop_assert_eq!(f.apply_scalar(-z), -f.apply_scalar(z));
        prop_assert!(f.apply_scalar(z + dz) >= f.apply_scalar(z));
        if z != 0.0 {
            prop_assert!(z * f.apply_scalar(z) > 0.0);
        }
        // slope at the origin is the gain, so |f(z)| <= c|z|
        prop_assert!(f.apply_scalar(z).abs() <= f.gain() * z.abs() * (1.0 + 1e-12));
        match f.kind() {
            ShapingKind::Linear => prop_assert_eq!(f.apply_scalar(z), f.gain() * z),
            _ => prop_assert!(f.apply_scalar(z).abs() <= f.gain() * f.scale() * (1.0 + 1e-12)),
        }
    }

    #[test]
    fn shaping_apply_is_componentwise(f in shaping(), z in prop::collection::vec(-20.0f64..20.0, 0..8)) {
        let v = f.apply(&z);
        prop_assert_eq!(v.len(), z.len());
        for (a, b) in v.iter().zip(&z) {
            prop_assert_eq!(*a, f.apply_scalar(*b));
        }
    }

    #[test]
    fn sig_power_properties(z in -1e3f64..1e3, kappa in 0.01f64..3.0, lambda in 0.01f64..100.0) {
        let s = sig_scalar(z, kappa);
        prop_assert_eq!(s.signum() * (z != 0.0) as u8 as f64, z.signum() * (z != 0.0) as u8 as f64);
        assert_relative_eq!(s.abs(), z.abs().powf(kappa), max_relative = 1e-14);
        assert_relative_eq!(sig_scalar(lambda * z, kappa), lambda.powf(kappa) * s, max_relative = 1e-12, epsilon = 1e-300);
        prop_assert_eq!(sig_scalar(z, 1.0), z);
        prop_assert_eq!(sig_scalar(-z, kappa), -s);
    }

    #[test]
    fn sig_pow_vector_matches_scalar(z in prop::collection::vec(-10.0f64..10.0, 0..6), kappa in 0.05f64..2.0) {
        let v = sig_pow(&z, kappa).unwrap();
        for (a, b) in v.iter().zip(&z) {
            prop_assert_eq!(*a, sig_scalar(*b, kappa));
        }
    }

    #[test]
    fn laplacian_invariants(t in topology(), x in prop::collection::vec(-3.0f64..3.0, 14)) {
        let n = t.n();
        let l = t.laplacian();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| l[(i, j)]).sum();
            prop_assert!(row.abs() < 1e-12);
            prop_assert!(l[(i, i)] >= 0.0);
            for j in 0..n {
                prop_assert_eq!(l[(i, j)], l[(j, i)]);
                if i != j {
                    prop_assert!(l[(i, j)] <= 0.0);
                    prop_assert_eq!(l[(i, j)], -t.weight(i, j));
                }
            }
        }
        let b = t.coupling();
        prop_assert_eq!(b, &(l + DMatrix::from_diagonal(t.pinning())));

        // xᵀ(B ⊗ I₂)x = ½ Σ_ij w_ij ‖x_i − x_j‖² + Σ_i p_i ‖x_i‖²
        let m = 2;
        let x = &x[..n * m];
        let mut want = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d: f64 = (0..m).map(|k| (x[i * m + k] - x[j * m + k]).powi(2)).sum();
                want += 0.5 * t.weight(i, j) * d;
            }
            want += t.pinning()[i] * (0..m).map(|k| x[i * m + k].powi(2)).sum::<f64>();
        }
        let got = t.coupling_quadratic(x, m).unwrap();
        prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{} vs {}", got, want);
        prop_assert!(got >= -1e-12);

        let dense = b.kronecker(&DMatrix::<f64>::identity(m, m)) * DVector::from_column_slice(x);
        let applied = t.apply_coupling(x, m).unwrap();
        for k in 0..n * m {
            prop_assert!((dense[k] - applied[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn reachable_iff_coupling_positive_definite(t in topology()) {
        let (lo, _) = match t.spectral_bounds() {
            Ok(b) => b,
            Err(_) => {
                prop_assert!(!t.leader_reachable());
                return Ok(());
            }
        };
        prop_assert!(t.leader_reachable());
        prop_assert!(lo > 0.0);
    }

    #[test]
    fn centering_preserves_shape(offsets in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 1..8)) {
        let f = center_formation(&offsets).unwrap();
        prop_assert!(validate_formation(f.offsets()).is_ok());
        for i in 0..offsets.len() {
            for j in 0..offsets.len() {
                for k in 0..2 {
                    let before = offsets[i][k] - offsets[j][k];
                    let after = f.offset(i)[k] - f.offset(j)[k];
                    prop_assert!((before - after).abs() < 1e-12);
                }
            }
        }
    }
}
