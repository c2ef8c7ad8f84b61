use nalgebra::DMatrix;
use proptest::prelude::*;
use weylhom::algebra::{self, AlgebraName, Family, IdentityTolerances, LieAlgebra};

fn g(name: &str) -> LieAlgebra {
    algebra::build_named(name.parse().unwrap()).unwrap()
}

const ALL: [&str; 8] = ["su2", "su3", "su4", "so5", "so7", "sp2", "sp3", "g2"];

#[test]
fn dimensions_match_family_formulas() {
    for (name, dim) in [
        ("su2", 3),
        ("su3", 8),
        ("su4", 15),
        ("so5", 10),
        ("so7", 21),
        ("sp2", 10),
        ("sp3", 21),
        ("g2", 14),
    ] {
        assert_eq!(g(name).dim(), dim, "{name}");
    }
}

#[test]
fn identity_suite_passes_on_all_algebras() {
    let tol = IdentityTolerances::default();
    for name in ALL {
        let rep = algebra::check_identities(&g(name), 100, 3);
        assert!(rep.failures(&tol).is_empty(), "{name}: {:?}", rep.failures(&tol));
        assert_eq!(rep.summary().ad_rank, g(name).dim());
    }
}

/// Structure constants against matrix commutators in the defining representation.
#[test]
fn structure_constants_match_matrix_commutators() {
    for name in ["su2", "su3", "so5", "sp2", "g2"] {
        let a = g(name);
        let mats = a.matrix_basis().unwrap();
        let n = a.dim();
        // Coordinates of a matrix by least squares on the basis.
        let flat = DMatrix::from_fn(mats[0].len(), n, |r, c| mats[c].as_slice()[r]);
        let pinv = flat.clone().pseudo_inverse(1e-12).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let comm = &mats[i] * &mats[j] - &mats[j] * &mats[i];
                let coords = &pinv * nalgebra::DVector::from_column_slice(comm.as_slice());
                for k in 0..n {
                    worst = worst.max((coords[k] - a.c(i, j, k)).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{name}: {worst}");
    }
}

/// In an orthonormal basis of su(2) every bracket `[e_i, e_j]`, `i ≠ j`, has norm `1/√2`.
#[test]
fn su2_brackets_have_norm_one_over_sqrt2() {
    let a = g("su2");
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let e_i: Vec<f64> = (0..3).map(|t| (t == i) as u8 as f64).collect();
                let e_j: Vec<f64> = (0..3).map(|t| (t == j) as u8 as f64).collect();
                let b = algebra::bracket(&a, &e_i, &e_j).unwrap();
                let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 0.5f64.sqrt()).abs() < 1e-12, "{norm}");
            }
        }
    }
}

/// Killing form of `diag(i, −i)` in su(2): `Tr(ad²) = −8` computed from raw
/// 2×2 commutators.
#[test]
fn raw_killing_form_brute_force() {
    let h = [[0.0, 1.0], [0.0, -1.0]]; // imaginary parts on the diagonal
                                       // Real 4×4 embedding of complex 2×2 matrices.
    let embed = |re: [[f64; 2]; 2], im: [[f64; 2]; 2]| {
        DMatrix::from_fn(4, 4, |r, c| {
            let (i, j) = (r % 2, c % 2);
            match (r / 2, c / 2) {
                (0, 0) | (1, 1) => re[i][j],
                (0, 1) => -im[i][j],
                _ => im[i][j],
            }
        })
    };
    let x = embed([[0.0; 2]; 2], [[h[0][1], 0.0], [0.0, h[1][1]]]);
    let basis = [
        embed([[0.0; 2]; 2], [[1.0, 0.0], [0.0, -1.0]]),
        embed([[0.0, 1.0], [-1.0, 0.0]], [[0.0; 2]; 2]),
        embed([[0.0; 2]; 2], [[0.0, 1.0], [1.0, 0.0]]),
    ];
    let flat = DMatrix::from_fn(16, 3, |r, c| basis[c].as_slice()[r]);
    let pinv = flat.pseudo_inverse(1e-12).unwrap();
    let ad = DMatrix::from_fn(3, 3, |r, c| {
        let comm = &x * &basis[c] - &basis[c] * &x;
        (&pinv * nalgebra::DVector::from_column_slice(comm.as_slice()))[r]
    });
    let brute = (&ad * &ad).trace();
    assert!((brute + 8.0).abs() < 1e-12, "{brute}");

    let a = g("su2");
    let raw = a.killing_scale_log().raw_killing.clone();
    // The raw su basis starts with i(E_11 − E_22).
    assert!((raw[0] + 8.0).abs() < 1e-10, "{}", raw[0]);
}

/// Derivations of the octonions form a 14-dimensional algebra.
#[test]
fn octonion_derivation_constraint_rank() {
    let m = algebra::octonion_derivation_constraints();
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > smax * 1e-10).count();
    assert_eq!(rank, 35);
    assert_eq!(49 - rank, 14);
}

#[test]
fn octonions_are_alternative() {
    let mul = |x: &[f64; 8], y: &[f64; 8]| {
        let mut out = [0.0; 8];
        for a in 0..8 {
            for b in 0..8 {
                let (s, c) = algebra::octonion_unit_product(a, b);
                out[c] += s * x[a] * y[b];
            }
        }
        out
    };
    let x = [0.3, -1.2, 0.5, 0.7, -0.1, 0.9, 0.4, -0.6];
    let y = [1.1, 0.2, -0.8, 0.3, 0.6, -0.4, 0.5, 0.1];
    let xx_y = mul(&mul(&x, &x), &y);
    let x_xy = mul(&x, &mul(&x, &y));
    for i in 0..8 {
        assert!((xx_y[i] - x_xy[i]).abs() < 1e-12);
    }
}

#[test]
fn json_round_trip_is_lossless() {
    for name in ["su3", "g2"] {
        let a = g(name);
        let text = serde_json::to_string(&a.to_json()).unwrap();
        let back = LieAlgebra::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.structure_tensor(), a.structure_tensor());
        assert_eq!(back.dim(), a.dim());
        assert_eq!(back.name(), a.name());
    }
}

#[test]
fn corrupted_tensor_fails_jacobi() {
    let a = g("su3");
    let mut doc = a.to_json();
    let c = doc["c"].as_array_mut().unwrap();
    // c_{0,1,2} lives at (0·8 + 1)·8 + 2.
    let v = c[10].as_f64().unwrap();
    c[10] = serde_json::json!(v + 0.1);
    let bad = LieAlgebra::from_json(&doc).unwrap();
    let rep = algebra::check_identities(&bad, 10, 1);
    let names: Vec<&str> = rep
        .failures(&IdentityTolerances::default())
        .iter()
        .map(|f| f.0)
        .collect();
    assert!(names.contains(&"jacobi"), "{names:?}");
}

#[test]
fn rejects_non_simple_and_unknown() {
    assert!(algebra::build_algebra(Family::So, 4).is_err());
    assert!(algebra::build_algebra(Family::Su, 1).is_err());
    assert!("e8".parse::<AlgebraName>().is_err());
    assert!(algebra::build_algebra_capped(Family::Su, 10, 80).is_err());
}

#[test]
fn table_entries() {
    let t = |s: &str| s.parse::<AlgebraName>().unwrap().table_values();
    assert_eq!(t("su3"), Some((2, 4)));
    assert_eq!(t("sp3"), Some((3, 6)));
    assert_eq!(t("so7"), Some((3, 8)));
    assert_eq!(t("g2"), Some((2, 6)));
    assert_eq!(t("so5"), None);
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_bilinear_antisymmetric_and_invariant(
        x in vec_strategy(8), y in vec_strategy(8), z in vec_strategy(8), s in -2.0f64..2.0
    ) {
        let a = g("su3");
        let xy = algebra::bracket(&a, &x, &y).unwrap();
        let yx = algebra::bracket(&a, &y, &x).unwrap();
        for k in 0..8 { prop_assert!((xy[k] + yx[k]).abs() < 1e-12); }
        let sx: Vec<f64> = x.iter().zip(&z).map(|(p, q)| s * p + q).collect();
        let lhs = algebra::bracket(&a, &sx, &y).unwrap();
        let zy = algebra::bracket(&a, &z, &y).unwrap();
        for k in 0..8 { prop_assert!((lhs[k] - s * xy[k] - zy[k]).abs() < 1e-12); }
        // ⟨[x,y],z⟩ = ⟨x,[y,z]⟩
        let yz = algebra::bracket(&a, &y, &z).unwrap();
        let l: f64 = xy.iter().zip(&z).map(|(p, q)| p * q).sum();
        let r: f64 = x.iter().zip(&yz).map(|(p, q)| p * q).sum();
        prop_assert!((l - r).abs() < 1e-12);
    }

    #[test]
    fn coboundary_identities(x in vec_strategy(14), y in vec_strategy(14)) {
        let a = g("g2");
        let adx = algebra::ad(&a, &x).unwrap();
        let d = algebra::coboundary(&a, &adx).unwrap();
        for k in 0..14 { prop_assert!((d[k] - 0.5 * x[k]).abs() < 1e-10); }
        let w = algebra::wedge(&a, &x, &y).unwrap();
        let dw = algebra::coboundary(&a, &w).unwrap();
        let b = algebra::bracket(&a, &x, &y).unwrap();
        for k in 0..14 { prop_assert!((dw[k] - b[k]).abs() < 1e-10); }
        prop_assert!(adx.skew_residual() < 1e-12);
    }

    #[test]
    fn killing_form_is_minus_identity(x in vec_strategy(10), y in vec_strategy(10)) {
        let a = g("sp2");
        let k = algebra::killing(&a, &x, &y).unwrap();
        let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        prop_assert!((k + dot).abs() < 1e-10);
    }

    #[test]
    fn rotation_preserves_identities(seed in 0u64..1000) {
        let r = algebra::rotate_basis(&g("so5"), seed);
        let rep = algebra::check_identities(&r, 5, seed);
        prop_assert!(rep.failures(&IdentityTolerances::default()).is_empty());
    }
}
