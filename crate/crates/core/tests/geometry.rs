mod common;

use common::{fd_christoffel, fd_riemann, max_abs_diff, richardson};
use proptest::prelude::*;
use weylhom::geometry::{self, AbFamily, GeometryError, MetricParams};

fn example() -> MetricParams {
    MetricParams::example(5)
}

fn twisted(n: usize, epsilon: i8, family: AbFamily) -> MetricParams {
    let mut p = MetricParams::example(n);
    p.epsilon = epsilon;
    p.ab_family = family;
    let m = n - 1;
    // D₁₂ = 1, D₁₃ = −0.5, D₂₃ = 0.3 and skew partners.
    for (i, j, v) in [(0, 1, 1.0), (0, 2, -0.5), (1, 2, 0.3)] {
        if j < m {
            p.d[i * m + j] = v;
            p.d[j * m + i] = -v;
        }
    }
    p
}

fn points(p: &MetricParams, count: usize, seed: u64) -> Vec<Vec<f64>> {
    geometry::sample_points(p, count, seed, 1.0).unwrap().0
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x.abs()).fold(1.0, f64::max);
    max_abs_diff(a, b) / scale
}

#[test]
fn metric_is_symmetric_with_determinant_f_squared() {
    let p = twisted(5, 1, AbFamily::Sine);
    for x in points(&p, 50, 1) {
        let g = geometry::metric_at(&p, &x).unwrap();
        assert_eq!(g, g.transpose());
        let f = p.f(x[1], x[0]);
        let det = g.clone().lu().determinant();
        assert!((det - f * f).abs() < 1e-10 * f * f, "{det} vs {}", f * f);
        assert!(g.cholesky().is_some());
    }
}

#[test]
fn analytic_curvature_matches_finite_differences_at_origin() {
    let p = example();
    let x = [0.0; 5];
    let c = geometry::curvature_at(&p, &x).unwrap();
    assert!(rel(&c.christoffel, &fd_christoffel(&p, &x, 1e-4)) <= 1e-5);
    assert!(rel(&c.riemann_coord, &fd_riemann(&p, &x, 1e-3, 1e-4)) <= 1e-5);
}

#[test]
fn analytic_curvature_matches_finite_differences_at_random_points() {
    for (p, seed) in [
        (twisted(5, 1, AbFamily::Constant), 2),
        (twisted(5, -1, AbFamily::Sine), 3),
        (twisted(4, 1, AbFamily::Sine), 4),
    ] {
        for x in points(&p, 20, seed) {
            let c = geometry::curvature_at(&p, &x).unwrap();
            let eg = rel(&c.christoffel, &fd_christoffel(&p, &x, 1e-4));
            let er = rel(&c.riemann_coord, &fd_riemann(&p, &x, 1e-3, 1e-4));
            assert!(eg <= 1e-5 && er <= 1e-5, "{x:?}: Γ {eg:.2e}, R {er:.2e}");
        }
    }
}

#[test]
fn product_case_has_constant_curvature_block() {
    let p = example().with_d_zero();
    let n = p.n;
    for x in points(&p, 10, 5) {
        let c = geometry::curvature_at(&p, &x).unwrap();
        let r = |h: usize, i: usize, j: usize, k: usize| c.riemann[((h * n + i) * n + j) * n + k];
        // Sectional curvature ⟨R(e₀, e₁)e₁, e₀⟩.
        assert!((r(0, 1, 1, 0) - p.kappa()).abs() < 1e-10);
        for h in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if [h, i, j, k].iter().any(|&t| t > 1) {
                            assert!(r(h, i, j, k).abs() < 1e-10);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn curvature_invariants_hold() {
    let p = twisted(6, 1, AbFamily::Sine);
    for x in points(&p, 10, 6) {
        let c = geometry::curvature_at(&p, &x).unwrap();
        let t = geometry::tensor_checks(&p, &c);
        assert!(
            t.antisymmetry <= 1e-7 && t.pair_symmetry <= 1e-7 && t.first_bianchi <= 1e-7,
            "{t:?}"
        );
        assert!(t.weyl_trace <= 1e-7 * t.riemann_norm.max(1.0), "{t:?}");
    }
}

/// On a round sphere metric the Weyl tensor must vanish; this pins the sign
/// of the ρ-part. Uses the tensor algebra directly on `R = κ(g∧g)`.
#[test]
fn weyl_part_vanishes_for_constant_curvature_tensor() {
    let n = 5;
    let kappa = 0.7;
    let d = |a: usize, b: usize| (a == b) as u8 as f64;
    let mut r = vec![0.0; n * n * n * n];
    for h in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    // ⟨R(e_h, e_i)e_j, e_k⟩ = κ(δ_ij δ_hk − δ_hj δ_ik)
                    r[((h * n + i) * n + j) * n + k] = kappa * (d(i, j) * d(h, k) - d(h, j) * d(i, k));
                }
            }
        }
    }
    let ric = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|h| r[((h * n + i) * n + j) * n + h]).sum::<f64>()
    });
    let scal = ric.trace();
    let nf = n as f64;
    let rho = &ric / (nf - 2.0) - nalgebra::DMatrix::identity(n, n) * (scal / (2.0 * (nf - 1.0) * (nf - 2.0)));
    let a = geometry::rho_part(&rho);
    assert!(max_abs_diff(&r, &a) < 1e-14);
}

#[test]
fn spectrum_is_model_spectrum_everywhere() {
    let p = example();
    let pts = points(&p, 20, 7);
    let first = geometry::curvature_spectrum(&p, &pts[0]).unwrap();
    assert!((first[0] + 1.0).abs() <= 1e-6);
    assert!(first[1..].iter().all(|x| x.abs() <= 1e-6));
    for x in &pts {
        let s = geometry::curvature_spectrum(&p, x).unwrap();
        assert!(geometry::max_deviation(&s, &first) <= 1e-6);
    }
}

#[test]
fn weyl_certificate_properties() {
    let p = example();
    let x = points(&p, 1, 8).remove(0);
    assert_eq!(
        geometry::weyl_homogeneity_certificate(&p, &[x.clone(), x.clone()]).unwrap(),
        0.0
    );
    assert!(matches!(
        geometry::weyl_homogeneity_certificate(&p, &[x]),
        Err(GeometryError::TooFewPoints)
    ));
    let pts = points(&p, 20, 9);
    assert!(geometry::weyl_homogeneity_certificate(&p, &pts).unwrap() <= 1e-6);

    let q = MetricParams::example(4).with_d_zero();
    let pts = points(&q, 5, 10);
    let c = geometry::curvature_at(&q, &pts[0]).unwrap();
    assert!(c.weyl.iter().map(|w| w * w).sum::<f64>().sqrt() > 1e-3);
    assert!(geometry::weyl_homogeneity_certificate(&q, &pts).unwrap() <= 1e-6);
}

#[test]
fn weyl_certificate_is_scale_invariant() {
    let p = twisted(5, 1, AbFamily::Sine);
    let pts = points(&p, 10, 11);
    let base = geometry::weyl_homogeneity_certificate(&p, &pts).unwrap();
    let mut q = p.clone();
    q.scale = 3.0;
    let scaled = geometry::weyl_homogeneity_certificate(&q, &pts).unwrap();
    assert!((base - scaled).abs() <= 1e-10, "{base} vs {scaled}");
    for x in &pts[..3] {
        let a = geometry::normalized_weyl_spectrum(&p, x).unwrap();
        let b = geometry::normalized_weyl_spectrum(&q, x).unwrap();
        assert!(geometry::max_deviation(&a, &b) <= 1e-10);
    }
}

#[test]
fn obstruction_at_origin_is_minus_four() {
    let (lhs, rhs) = geometry::nabla_r_obstruction(&example(), &[0.0; 5], 2).unwrap();
    assert_eq!(rhs, -4.0);
    assert!(((lhs - rhs) / rhs).abs() <= 1e-4, "{lhs}");
}

#[test]
fn obstruction_vanishes_without_twist() {
    let p = example().with_d_zero();
    for x in points(&p, 5, 12) {
        for i in 2..p.n {
            let (lhs, rhs) = geometry::nabla_r_obstruction(&p, &x, i).unwrap();
            assert_eq!(rhs, 0.0);
            assert!(lhs.abs() <= 1e-7, "{lhs}");
        }
    }
}

/// `(∇₀R)(∂₀, ∂₁, ∂₀, ∂ᵢ)` from finite differences of the finite-difference
/// curvature, with Christoffel corrections also from finite differences.
fn fd_obstruction(p: &MetricParams, x: &[f64], i: usize) -> f64 {
    let n = p.n;
    let ix = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    let r = fd_riemann(p, x, 1e-3, 1e-4);
    let gam = fd_christoffel(p, x, 1e-4);
    let gm = |k: usize, a: usize, b: usize| gam[(k * n + a) * n + b];
    let partial = richardson(
        |t| {
            let mut y = x.to_vec();
            y[0] += t;
            vec![fd_riemann(p, &y, 1e-3, 1e-4)[ix(0, 1, 0, i)]]
        },
        1e-2,
    )[0];
    let idx = [0, 1, 0, i];
    let mut v = partial;
    for slot in 0..4 {
        for f in 0..n {
            let mut j = idx;
            j[slot] = f;
            v -= gm(f, 0, idx[slot]) * r[ix(j[0], j[1], j[2], j[3])];
        }
    }
    v
}

#[test]
fn obstruction_matches_independent_finite_differences() {
    for (p, seed) in [
        (twisted(5, 1, AbFamily::Constant), 13),
        (twisted(5, -1, AbFamily::Sine), 14),
    ] {
        for x in points(&p, 3, seed) {
            for i in 2..p.n {
                let (lhs, rhs) = geometry::nabla_r_obstruction(&p, &x, i).unwrap();
                let oracle = fd_obstruction(&p, &x, i);
                let scale = rhs.abs().max(1e-3);
                assert!((lhs - oracle).abs() <= 1e-4 * scale, "{x:?} i={i}: {lhs} vs {oracle}");
                if rhs != 0.0 {
                    assert!(((lhs - rhs) / rhs).abs() <= 1e-4);
                    assert!(lhs.abs() >= 0.5 * rhs.abs());
                }
            }
        }
    }
}

#[test]
fn obstruction_relative_error_at_ten_points() {
    let p = example();
    for x in points(&p, 10, 15) {
        let (lhs, rhs) = geometry::nabla_r_obstruction(&p, &x, 2).unwrap();
        assert!(((lhs - rhs) / rhs).abs() <= 1e-4);
    }
}

#[test]
fn negative_epsilon_excludes_points_near_zeros_of_f() {
    let mut p = example();
    p.epsilon = -1;
    p.lambda = 2.0;
    let (kept, excluded) = geometry::sample_points(&p, 40, 16, 1.0).unwrap();
    assert_eq!(kept.len(), 40);
    assert!(!excluded.is_empty());
    for x in &kept {
        assert!(p.f(x[1], x[0]).abs() >= 0.1);
    }
    for x in &excluded {
        assert!(matches!(
            geometry::curvature_at(&p, x),
            Err(GeometryError::DomainFloor { .. })
        ));
    }
    let rep = geometry::geometry_report(&p, 20, 16).unwrap();
    assert!((rep.kappa - 4.0).abs() < 1e-15);
    assert!(rep.spectrum_model_deviation <= 1e-6 * 4.0);
    assert!(rep.weyl_certificate <= 1e-6);
    assert!(rep.max_obstruction_relative_error <= 1e-4);
}

#[test]
fn invalid_parameters_are_rejected() {
    let mut p = example();
    p.lambda = -1.0;
    assert!(p.validate().is_err());
    let mut p = example();
    p.epsilon = 0;
    assert!(p.validate().is_err());
    let mut p = example();
    p.d[1] = 2.0; // no longer skew
    assert!(p.validate().is_err());
    assert!(MetricParams::example(3).validate().is_err());
    assert!(geometry::nabla_r_obstruction(&example(), &[0.0; 5], 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pointwise_invariants(w in -1.0f64..1.0, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, x3 in -1.0f64..1.0, x4 in -1.0f64..1.0, d in -1.5f64..1.5) {
        let mut p = twisted(5, 1, AbFamily::Sine);
        p.d[1] = d;
        p.d[4] = -d;
        let x = [w, x1, x2, x3, x4];
        let c = geometry::curvature_at(&p, &x).unwrap();
        let t = geometry::tensor_checks(&p, &c);
        prop_assert!(t.antisymmetry <= 1e-7 && t.first_bianchi <= 1e-7 && t.pair_symmetry <= 1e-7);
        prop_assert!(t.weyl_trace <= 1e-7 * t.riemann_norm.max(1.0));
        prop_assert!(t.metric_det_residual <= 1e-12);
        let s = geometry::curvature_spectrum(&p, &x).unwrap();
        prop_assert!((s[0] - p.kappa()).abs() <= 1e-6 * p.kappa().abs());
        prop_assert!(s[1..].iter().all(|v| v.abs() <= 1e-6));
    }
}
