//! Root decomposition of the complexified algebra and the minimal rank of a
//! nonzero adjoint operator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{self, ad_basis, AlgebraError, Family, LieAlgebra};
use crate::numerics::{self, NumericsError, RankDecision, RankPolicy};

/// Absolute tolerance used to cluster and order root tuples.
pub const ROOT_TOL: f64 = 1e-7;

const GENERIC_SEED: u64 = 0x5eed_2024;
const MAX_ATTEMPTS: u64 = 8;

#[derive(Debug, Error)]
pub enum RootsError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("Cartan subalgebra has dimension {got}, expected {expected}")]
    CartanRank { expected: usize, got: usize },
    #[error("Cartan basis elements do not commute (residual {0:.3e})")]
    NotAbelian(f64),
    #[error("no generic Cartan element found after {0} attempts")]
    Degenerate(u64),
    #[error("root decomposition residual {0:.3e} exceeds tolerance")]
    Residual(f64),
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// How to pick the Cartan subalgebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CartanChoice {
    /// Diagonal torus of the defining representation (centralizer of a
    /// random element for g2).
    Standard,
    /// Centralizer of a random element drawn from the seed.
    Random(u64),
}

/// Lexicographic order on `(Im α(H_1), …, Im α(H_r))` with a tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityFunctional {
    pub tolerance: f64,
}

impl Default for PositivityFunctional {
    fn default() -> Self {
        Self { tolerance: ROOT_TOL }
    }
}

impl PositivityFunctional {
    pub fn compare(&self, a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
        for (x, y) in a.iter().zip(b) {
            let d = x.im - y.im;
            if d > self.tolerance {
                return std::cmp::Ordering::Greater;
            }
            if d < -self.tolerance {
                return std::cmp::Ordering::Less;
            }
        }
        std::cmp::Ordering::Equal
    }

    pub fn is_positive(&self, a: &[Complex64]) -> bool {
        let zero = vec![Complex64::new(0.0, 0.0); a.len()];
        self.compare(a, &zero) == std::cmp::Ordering::Greater
    }
}

#[derive(Debug, Clone)]
pub struct RootDatum {
    pub cartan_basis: Vec<Vec<f64>>,
    /// `roots[r][i] = α_r(H_i)`, sorted ascending under the positivity order.
    pub roots: Vec<Vec<Complex64>>,
    /// Unit-norm root vectors with their largest component real positive.
    pub root_vectors: Vec<Vec<Complex64>>,
    pub positivity_functional: PositivityFunctional,
    pub basis_tag: u64,
    /// Coefficients of the generic Cartan element that separated the roots.
    pub generic_coefficients: Vec<i64>,
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean Gram–Schmidt in fixed order; drops dependent vectors.
fn orthonormalize(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vs {
        for u in &out {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let s = vec_norm(&v);
        if s > 1e-9 {
            v.iter_mut().for_each(|x| *x /= s);
            out.push(v);
        }
    }
    out
}

fn standard_torus_raw(g: &LieAlgebra) -> Option<Vec<Vec<f64>>> {
    let n = g.dim();
    let l = g.rank_param();
    if g.killing_scale_log().transform.len() != n * n {
        return None;
    }
    let unit = |k: usize| {
        let mut r = vec![0.0; n];
        r[k] = 1.0;
        r
    };
    match g.family() {
        Family::Su => Some((0..l - 1).map(unit).collect()),
        Family::Sp => Some((0..l).map(unit).collect()),
        Family::So => {
            // Raw index of E_jk − E_kj in row-major j<k order.
            let idx = |j: usize, k: usize| j * (2 * l - j - 1) / 2 + (k - j - 1);
            Some((0..l / 2).map(|t| unit(idx(2 * t, 2 * t + 1))).collect())
        }
        Family::G2 => None,
    }
}

/// Kernel of `ad_X` for a random `X`: a Cartan subalgebra for generic `X`.
fn random_centralizer(g: &LieAlgebra, seed: u64, policy: &RankPolicy) -> Result<Vec<Vec<f64>>, RootsError> {
    let n = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = algebra::ad(g, &x)?;
    let d = numerics::rank_and_nullspace_dense(&a.entries, policy)?;
    let b = d.basis.expect("dense decisions carry a basis");
    Ok((0..b.ncols()).map(|j| b.column(j).iter().copied().collect()).collect())
}

pub fn cartan_subalgebra(g: &LieAlgebra) -> Result<Vec<Vec<f64>>, RootsError> {
    cartan_subalgebra_with(g, CartanChoice::Standard, &RankPolicy::default())
}

/// Orthonormal basis of a Cartan subalgebra, verified to be abelian and of
/// the expected rank.
pub fn cartan_subalgebra_with(
    g: &LieAlgebra,
    choice: CartanChoice,
    policy: &RankPolicy,
) -> Result<Vec<Vec<f64>>, RootsError> {
    let raw = match choice {
        CartanChoice::Standard => standard_torus_raw(g),
        CartanChoice::Random(_) => None,
    };
    let vs = match (raw, choice) {
        (Some(raw), _) => raw
            .iter()
            .map(|r| g.from_raw_coordinates(r))
            .collect::<Result<Vec<_>, _>>()?,
        (None, CartanChoice::Random(seed)) => random_centralizer(g, seed, policy)?,
        (None, CartanChoice::Standard) => random_centralizer(g, GENERIC_SEED, policy)?,
    };
    let h = orthonormalize(vs);
    let expected = g.name().rank();
    if h.len() != expected {
        return Err(RootsError::CartanRank { expected, got: h.len() });
    }
    let mut worst = 0.0f64;
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            worst = worst.max(vec_norm(&algebra::bracket(g, &h[i], &h[j])?));
        }
    }
    if worst > 1e-10 {
        return Err(RootsError::NotAbelian(worst));
    }
    Ok(h)
}

fn complex_ad(ads: &[DMatrix<f64>], x: &[Complex64]) -> DMatrix<Complex64> {
    let n = ads.len();
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (a, &c) in ads.iter().zip(x) {
        if c.norm() == 0.0 {
            continue;
        }
        m.zip_apply(a, |z, v| *z += c * v);
    }
    m
}

fn real_ad(ads: &[DMatrix<f64>], x: &[f64]) -> DMatrix<f64> {
    let n = ads.len();
    let mut m = DMatrix::zeros(n, n);
    for (a, &c) in ads.iter().zip(x) {
        m += a * c;
    }
    m
}

fn normalize_phase(v: &mut [Complex64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let (mut best, mut idx) = (0.0, 0);
    for (i, z) in v.iter().enumerate() {
        // Ties resolved towards the lowest index.
        if z.norm() > best * (1.0 + 1e-9) {
            best = z.norm();
            idx = i;
        }
    }
    let phase = v[idx].conj() / (v[idx].norm() * norm);
    v.iter_mut().for_each(|z| *z *= phase);
}

/// Simultaneous eigendecomposition of `ad(H_i)` over the complexification.
pub fn root_decomposition(g: &LieAlgebra, cartan: &[Vec<f64>]) -> Result<RootDatum, RootsError> {
    let n = g.dim();
    let r = cartan.len();
    for h in cartan {
        if h.len() != n {
            return Err(RootsError::DimensionMismatch {
                expected: n,
                got: h.len(),
            });
        }
    }
    let ads = ad_basis(g);
    let ad_h: Vec<DMatrix<f64>> = cartan.iter().map(|h| real_ad(&ads, h)).collect();
    let positivity = PositivityFunctional::default();

    let mut last_residual = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(GENERIC_SEED + attempt);
        let coeffs: Vec<i64> = (0..r).map(|_| rng.gen_range(1..=97)).collect();
        let mut generic = DMatrix::zeros(n, n);
        for (m, &c) in ad_h.iter().zip(&coeffs) {
            generic += m * c as f64;
        }
        let (vals, vecs) = numerics::complex_eig(&generic.map(|x| Complex64::new(x, 0.0)))?;
        let scale = vals.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let sep = 1e-6 * scale;
        let nonzero: Vec<Complex64> = vals.iter().copied().filter(|z| z.norm() > sep).collect();
        let resonant =
            (0..nonzero.len()).any(|a| (a + 1..nonzero.len()).any(|b| (nonzero[a] - nonzero[b]).norm() <= sep));
        if resonant {
            continue;
        }

        let mut roots = Vec::new();
        let mut vectors = Vec::new();
        let mut zeros = 0;
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut v: Vec<Complex64> = vecs.column(j).iter().copied().collect();
            normalize_phase(&mut v);
            let vv = nalgebra::DVector::from_vec(v.clone());
            let alpha: Vec<Complex64> = ad_h
                .iter()
                .map(|m| {
                    let w = m.map(|x| Complex64::new(x, 0.0)) * &vv;
                    vv.dotc(&w)
                })
                .collect();
            if alpha.iter().all(|a| a.norm() <= ROOT_TOL) {
                zeros += 1;
                continue;
            }
            for (m, a) in ad_h.iter().zip(&alpha) {
                let res = m.map(|x| Complex64::new(x, 0.0)) * &vv - &vv * *a;
                worst = worst.max(res.norm());
            }
            roots.push(alpha);
            vectors.push(v);
        }
        let distinct = (0..roots.len()).all(|a| {
            (a + 1..roots.len()).all(|b| positivity.compare(&roots[a], &roots[b]) != std::cmp::Ordering::Equal)
        });
        if zeros != r || !distinct {
            continue;
        }
        if worst > 1e-8 {
            last_residual = Some(worst);
            continue;
        }
        let mut order: Vec<usize> = (0..roots.len()).collect();
        order.sort_by(|&a, &b| positivity.compare(&roots[a], &roots[b]));
        return Ok(RootDatum {
            cartan_basis: cartan.to_vec(),
            roots: order.iter().map(|&i| roots[i].clone()).collect(),
            root_vectors: order.iter().map(|&i| vectors[i].clone()).collect(),
            positivity_functional: positivity,
            basis_tag: g.basis_tag(),
            generic_coefficients: coeffs,
        });
    }
    Err(match last_residual {
        Some(w) => RootsError::Residual(w),
        None => RootsError::Degenerate(MAX_ATTEMPTS),
    })
}

impl RootDatum {
    pub fn rank(&self) -> usize {
        self.cartan_basis.len()
    }

    /// Index of the root that is maximal under the positivity order.
    pub fn highest_root_index(&self) -> usize {
        // Roots are sorted ascending and pairwise distinct under the order.
        self.roots.len() - 1
    }

    pub fn positive_roots(&self) -> Vec<usize> {
        (0..self.roots.len())
            .filter(|&i| self.positivity_functional.is_positive(&self.roots[i]))
            .collect()
    }

    /// Index of `−α` for the root at `i`.
    pub fn negative_of(&self, i: usize) -> Option<usize> {
        let neg: Vec<Complex64> = self.roots[i].iter().map(|z| -z).collect();
        self.roots.iter().position(|b| {
            b.iter()
                .zip(&neg)
                .all(|(x, y)| (x - y).norm() <= self.positivity_functional.tolerance)
        })
    }

    /// Largest |Σ_α α(H_i)| over the Cartan basis.
    pub fn root_sum_residual(&self) -> f64 {
        (0..self.rank())
            .map(|i| self.roots.iter().map(|a| a[i]).sum::<Complex64>().norm())
            .fold(0.0, f64::max)
    }

    /// `{cartan_basis, roots: [{re, im}], root_vectors: [[re, im, re, im, …]], …}`
    pub fn to_json(&self) -> serde_json::Value {
        let split = |v: &[Complex64]| {
            serde_json::json!({
                "re": v.iter().map(|z| z.re).collect::<Vec<_>>(),
                "im": v.iter().map(|z| z.im).collect::<Vec<_>>(),
            })
        };
        let interleave = |v: &[Complex64]| v.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<f64>>();
        serde_json::json!({
            "cartan_basis": self.cartan_basis,
            "roots": self.roots.iter().map(|r| split(r)).collect::<Vec<_>>(),
            "root_vectors": self.root_vectors.iter().map(|v| interleave(v)).collect::<Vec<_>>(),
            "positivity_functional": { "order": "lexicographic_imaginary", "tolerance": self.positivity_functional.tolerance },
            "generic_coefficients": self.generic_coefficients,
            "highest_root": self.highest_root_index(),
        })
    }
}

/// Root vector of the highest root.
pub fn highest_root_vector(rd: &RootDatum) -> Vec<Complex64> {
    rd.root_vectors[rd.highest_root_index()].clone()
}

/// Complex adjoint matrix `ad(X)` for `X` in the complexification.
pub fn ad_complex(g: &LieAlgebra, x: &[Complex64]) -> Result<DMatrix<Complex64>, RootsError> {
    if x.len() != g.dim() {
        return Err(RootsError::DimensionMismatch {
            expected: g.dim(),
            got: x.len(),
        });
    }
    Ok(complex_ad(&ad_basis(g), x))
}

/// Rank decision for `ad(X)`, X complex; the decision's `rank` counts real
/// dimensions of the realified operator, so the complex rank is half of it.
pub fn adjoint_rank_decision(g: &LieAlgebra, x: &[Complex64], policy: &RankPolicy) -> Result<RankDecision, RootsError> {
    let m = ad_complex(g, x)?;
    Ok(numerics::complex_rank(&m, policy)?)
}

/// Result of the minimal-rank computation.
#[derive(Debug, Clone, Serialize)]
pub struct MinRankReport {
    pub rank_g: usize,
    pub m: usize,
    pub sv_gap: f64,
    pub highest_root: Vec<f64>,
}

pub fn min_adjoint_rank(g: &LieAlgebra) -> Result<usize, RootsError> {
    Ok(min_adjoint_rank_with(g, CartanChoice::Standard, &RankPolicy::default())?.m)
}

/// Rank of `ad(X_θ)` for the highest root vector `X_θ`. Ambiguous rank
/// decisions are returned as errors.
pub fn min_adjoint_rank_with(
    g: &LieAlgebra,
    choice: CartanChoice,
    policy: &RankPolicy,
) -> Result<MinRankReport, RootsError> {
    let h = cartan_subalgebra_with(g, choice, policy)?;
    let rd = root_decomposition(g, &h)?;
    let x = highest_root_vector(&rd);
    let d = adjoint_rank_decision(g, &x, policy)?;
    d.ensure_unambiguous(policy)?;
    Ok(MinRankReport {
        rank_g: rd.rank(),
        m: d.rank / 2,
        sv_gap: d.sv_gap,
        highest_root: rd.roots[rd.highest_root_index()].iter().map(|z| z.im).collect(),
    })
}

/// For su(l): the element `i·diag(−l+1, 1, …, 1)` in orthonormal coordinates.
pub fn su_minimal_diagonal(g: &LieAlgebra) -> Result<Vec<f64>, RootsError> {
    let l = g.rank_param();
    if g.family() != Family::Su {
        return Err(RootsError::Algebra(AlgebraError::Unsupported { family: g.family(), l }));
    }
    // Raw basis starts with i(E_jj − E_{j+1,j+1}); coefficients are the
    // partial sums of the diagonal.
    let mut raw = vec![0.0; g.dim()];
    let mut acc = 0.0;
    for j in 0..l - 1 {
        acc += if j == 0 { -(l as f64) + 1.0 } else { 1.0 };
        raw[j] = acc;
    }
    Ok(g.from_raw_coordinates(&raw)?)
}
