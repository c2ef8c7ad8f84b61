//! Curvature pipeline for the metrics
//!
//! ```text
//! ds² = (f(x₁, w) dw)² + Σᵢ (dxᵢ + Σⱼ Dᵢⱼ xⱼ dw)²
//! f = a(w) e^{λx₁} + b(w) e^{−λx₁}     (ε = +1)
//! f = a(w) cos(λx₁) + b(w) sin(λx₁)    (ε = −1)
//! ```
//!
//! Coordinates are ordered `(w, x₁, …, x_{n−1})`. Curvature follows
//! `R(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]` and `R_hijk = ⟨R(e_h,e_i)e_j, e_k⟩`,
//! so a round sphere has `R_hiih > 0`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, NumericsError};

/// Smallest admissible |f| at a sample point.
pub const F_FLOOR: f64 = 0.1;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid metric parameters: {0}")]
    InvalidParams(String),
    #[error("|f| = {f:.3e} is below the domain floor at {point:?}")]
    DomainFloor { f: f64, point: Vec<f64> },
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Weyl tensor vanishes at {0:?}")]
    VanishingWeyl(Vec<f64>),
    #[error("need at least two points")]
    TooFewPoints,
    #[error("index {0} out of range 2..n-1")]
    BadIndex(usize),
    #[error("only {accepted} of {wanted} sample points satisfy the domain floor")]
    Sampling { accepted: usize, wanted: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Built-in choices for a(w), b(w).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbFamily {
    /// a = 1, b = 1
    Constant,
    /// a = 1, b = 2 + sin w
    Sine,
}

impl AbFamily {
    /// (a, a′, a″, b, b′, b″) at w.
    fn eval(self, w: f64) -> [f64; 6] {
        match self {
            AbFamily::Constant => [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            AbFamily::Sine => [1.0, 0.0, 0.0, 2.0 + w.sin(), w.cos(), -w.sin()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub n: usize,
    pub lambda: f64,
    pub epsilon: i8,
    /// Constant skew (n−1)×(n−1) matrix, row-major; `d[0][1]` is D₁₂.
    pub d: Vec<f64>,
    pub ab_family: AbFamily,
    /// Constant factor c; the metric is multiplied by c².
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// f and its partials in (x₁, w).
#[derive(Debug, Clone, Copy)]
struct FJet {
    f: f64,
    x: f64,
    w: f64,
    xx: f64,
    xw: f64,
    ww: f64,
}

impl MetricParams {
    /// λ = 1, ε = +1, a = b = 1 and D₁₂ = −D₂₁ = 1.
    pub fn example(n: usize) -> Self {
        let m = n.saturating_sub(1);
        let mut d = vec![0.0; m * m];
        if m >= 2 {
            d[1] = 1.0;
            d[m] = -1.0;
        }
        Self {
            n,
            lambda: 1.0,
            epsilon: 1,
            d,
            ab_family: AbFamily::Constant,
            scale: 1.0,
        }
    }

    pub fn with_d_zero(mut self) -> Self {
        self.d.iter_mut().for_each(|x| *x = 0.0);
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |s: &str| Err(GeometryError::InvalidParams(s.to_string()));
        if self.n < 4 {
            return bad("n must be at least 4");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if self.epsilon != 1 && self.epsilon != -1 {
            return bad("epsilon must be +1 or -1");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale must be positive");
        }
        let m = self.n - 1;
        if self.d.len() != m * m {
            return bad("D must be (n-1)x(n-1)");
        }
        for i in 0..m {
            for j in 0..m {
                if self.d[i * m + j] != -self.d[j * m + i] || !self.d[i * m + j].is_finite() {
                    return bad("D must be skew-symmetric");
                }
            }
        }
        Ok(())
    }

    /// D_ij with 1-based indices.
    pub fn d_entry(&self, i: usize, j: usize) -> f64 {
        let m = self.n - 1;
        self.d[(i - 1) * m + (j - 1)]
    }

    /// Sectional curvature of the curved factor: `−ελ²`.
    pub fn kappa(&self) -> f64 {
        -(self.epsilon as f64) * self.lambda * self.lambda
    }

    pub fn f(&self, x1: f64, w: f64) -> f64 {
        self.jet(x1, w).f
    }

    fn jet(&self, x: f64, w: f64) -> FJet {
        let [a, da, dda, b, db, ddb] = self.ab_family.eval(w);
        let l = self.lambda;
        if self.epsilon > 0 {
            let (p, m) = ((l * x).exp(), (-l * x).exp());
            FJet {
                f: a * p + b * m,
                x: l * (a * p - b * m),
                w: da * p + db * m,
                xx: l * l * (a * p + b * m),
                xw: l * (da * p - db * m),
                ww: dda * p + ddb * m,
            }
        } else {
            let (c, s) = ((l * x).cos(), (l * x).sin());
            FJet {
                f: a * c + b * s,
                x: l * (-a * s + b * c),
                w: da * c + db * s,
                xx: -l * l * (a * c + b * s),
                xw: l * (-da * s + db * c),
                ww: dda * c + ddb * s,
            }
        }
    }

    fn check_point(&self, point: &[f64]) -> Result<FJet, GeometryError> {
        if point.len() != self.n {
            return Err(GeometryError::DimensionMismatch {
                expected: self.n,
                got: point.len(),
            });
        }
        let j = self.jet(point[1], point[0]);
        if !(j.f.abs() >= F_FLOOR) {
            return Err(GeometryError::DomainFloor {
                f: j.f,
                point: point.to_vec(),
            });
        }
        Ok(j)
    }

    /// `u = D x` for the spatial part of the point.
    fn dx(&self, point: &[f64]) -> Vec<f64> {
        let m = self.n - 1;
        (0..m)
            .map(|i| (0..m).map(|j| self.d[i * m + j] * point[j + 1]).sum())
            .collect()
    }
}

/// Metric matrix in coordinates `(w, x₁, …)`.
pub fn metric_at(p: &MetricParams, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    p.validate()?;
    let j = p.check_point(point)?;
    let n = p.n;
    let u = p.dx(point);
    let c2 = p.scale * p.scale;
    let mut g = DMatrix::identity(n, n);
    g[(0, 0)] = j.f * j.f + u.iter().map(|x| x * x).sum::<f64>();
    for i in 1..n {
        g[(0, i)] = u[i - 1];
        g[(i, 0)] = u[i - 1];
    }
    Ok(g * c2)
}

/// First partials `dg[(a·n + b)·n + c] = ∂_a g_bc` and second partials
/// `ddg[((a·n + b)·n + c)·n + d] = ∂_a ∂_b g_cd`.
fn metric_partials(p: &MetricParams, point: &[f64], j: FJet) -> (Vec<f64>, Vec<f64>) {
    let n = p.n;
    let u = p.dx(point);
    let c2 = p.scale * p.scale;
    let mut dg = vec![0.0; n * n * n];
    let mut ddg = vec![0.0; n * n * n * n];
    // Partials of f along coordinate a.
    let fa = |a: usize| match a {
        0 => j.w,
        1 => j.x,
        _ => 0.0,
    };
    let fab = |a: usize, b: usize| match (a, b) {
        (0, 0) => j.ww,
        (0, 1) | (1, 0) => j.xw,
        (1, 1) => j.xx,
        _ => 0.0,
    };
    for a in 0..n {
        // g00 = f² + |u|²
        let mut v = 2.0 * j.f * fa(a);
        if a >= 1 {
            v += 2.0 * (1..n).map(|i| u[i - 1] * p.d_entry(i, a)).sum::<f64>();
            // g0i = u_i
            for i in 1..n {
                dg[(a * n) * n + i] = p.d_entry(i, a) * c2;
                dg[(a * n + i) * n] = p.d_entry(i, a) * c2;
            }
        }
        dg[(a * n) * n] = v * c2;
        for b in 0..n {
            let mut v = 2.0 * (fa(a) * fa(b) + j.f * fab(a, b));
            if a >= 1 && b >= 1 {
                v += 2.0 * (1..n).map(|i| p.d_entry(i, a) * p.d_entry(i, b)).sum::<f64>();
            }
            ddg[((a * n + b) * n) * n] = v * c2;
        }
    }
    (dg, ddg)
}

#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub point: Vec<f64>,
    pub metric: DMatrix<f64>,
    /// `christoffel[(k·n + i)·n + j] = Γ^k_ij`
    pub christoffel: Vec<f64>,
    /// Coordinate components `R(∂_a, ∂_b, ∂_c, ∂_d)`.
    pub riemann_coord: Vec<f64>,
    /// Orthonormal frame as columns in coordinates; column 0 is the w-direction.
    pub frame: DMatrix<f64>,
    /// Frame components `R_hijk`.
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scal: f64,
    pub rho: DMatrix<f64>,
    pub weyl: Vec<f64>,
}

#[inline]
fn ix4(n: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * n + b) * n + c) * n + d
}

fn coordinate_curvature(p: &MetricParams, point: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>), GeometryError> {
    let jet = p.check_point(point)?;
    let n = p.n;
    let g = metric_at(p, point)?;
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| GeometryError::InvalidParams("singular metric".into()))?;
    let (dg, ddg) = metric_partials(p, point, jet);
    let dgi = |a: usize, b: usize, c: usize| dg[(a * n + b) * n + c];
    let ddgi = |a: usize, b: usize, c: usize, d: usize| ddg[ix4(n, a, b, c, d)];

    // Γ_{c,ab} and Γ^k_ab
    let mut gl = vec![0.0; n * n * n];
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                gl[(c * n + a) * n + b] = 0.5 * (dgi(a, b, c) + dgi(b, a, c) - dgi(c, a, b));
            }
        }
    }
    let mut gamma = vec![0.0; n * n * n];
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                gamma[(k * n + a) * n + b] = (0..n).map(|c| ginv[(k, c)] * gl[(c * n + a) * n + b]).sum();
            }
        }
    }
    let gm = |k: usize, a: usize, b: usize| gamma[(k * n + a) * n + b];
    // ∂_a Γ_{d,bc}
    let dgl = |a: usize, d: usize, b: usize, c: usize| 0.5 * (ddgi(a, b, c, d) + ddgi(a, c, b, d) - ddgi(a, d, b, c));

    let mut r = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut v = dgl(a, d, b, c) - dgl(b, d, a, c);
                    for e in 0..n {
                        v -= dgi(a, d, e) * gm(e, b, c);
                        v += dgi(b, d, e) * gm(e, a, c);
                        let mut s = 0.0;
                        for f in 0..n {
                            s += gm(e, a, f) * gm(f, b, c) - gm(e, b, f) * gm(f, a, c);
                        }
                        v += g[(d, e)] * s;
                    }
                    r[ix4(n, a, b, c, d)] = v;
                }
            }
        }
    }
    Ok((g, gamma, r))
}

/// Gram–Schmidt on `∂_{x₁}, …, ∂_{x_{n−1}}, ∂_w`; the w-vector is stored in
/// column 0.
fn orthonormal_frame(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let order: Vec<usize> = (1..n).chain(std::iter::once(0)).collect();
    let ip = |x: &nalgebra::DVector<f64>, y: &nalgebra::DVector<f64>| (g * y).dot(x);
    let mut done: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut frame = DMatrix::zeros(n, n);
    for &c in &order {
        let mut v = nalgebra::DVector::zeros(n);
        v[c] = 1.0;
        for u in &done {
            let s = ip(&v, u);
            v -= u * s;
        }
        let s = ip(&v, &v).sqrt();
        v /= s;
        frame.set_column(c, &v);
        done.push(v);
    }
    frame
}

fn to_frame(n: usize, r: &[f64], e: &DMatrix<f64>) -> Vec<f64> {
    // Contract one index at a time.
    let mut cur = r.to_vec();
    for slot in 0..4 {
        let mut next = vec![0.0; n * n * n * n];
        for idx in 0..n * n * n * n {
            let mut ids = [idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n];
            let target = ids[slot];
            let mut s = 0.0;
            for k in 0..n {
                ids[slot] = k;
                s += e[(k, target)] * cur[ix4(n, ids[0], ids[1], ids[2], ids[3])];
            }
            next[idx] = s;
        }
        cur = next;
    }
    cur
}

/// `A_hijk = ρ_hk δ_ij + ρ_ij δ_hk − ρ_hj δ_ik − ρ_ik δ_hj`, the part of R
/// determined by ρ; `W = R − A` is totally trace-free.
pub fn rho_part(rho: &DMatrix<f64>) -> Vec<f64> {
    let n = rho.nrows();
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut out = vec![0.0; n * n * n * n];
    for h in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[ix4(n, h, i, j, k)] =
                        rho[(h, k)] * d(i, j) + rho[(i, j)] * d(h, k) - rho[(h, j)] * d(i, k) - rho[(i, k)] * d(h, j);
                }
            }
        }
    }
    out
}

pub fn curvature_at(p: &MetricParams, point: &[f64]) -> Result<CurvatureData, GeometryError> {
    p.validate()?;
    let n = p.n;
    let (g, gamma, r_coord) = coordinate_curvature(p, point)?;
    let frame = orthonormal_frame(&g);
    let riemann = to_frame(n, &r_coord, &frame);
    let ricci = DMatrix::from_fn(n, n, |i, j| (0..n).map(|h| riemann[ix4(n, h, i, j, h)]).sum());
    let scal = ricci.trace();
    let nf = n as f64;
    let rho = &ricci / (nf - 2.0) - DMatrix::identity(n, n) * (scal / (2.0 * (nf - 1.0) * (nf - 2.0)));
    let a = rho_part(&rho);
    let weyl = riemann.iter().zip(&a).map(|(x, y)| x - y).collect();
    Ok(CurvatureData {
        point: point.to_vec(),
        metric: g,
        christoffel: gamma,
        riemann_coord: r_coord,
        frame,
        riemann,
        ricci,
        scal,
        rho,
        weyl,
    })
}

/// Symmetric matrix on Λ² with entries `T_(hi),(jk) = T_hikj`, h<i, j<k.
pub fn bivector_operator(n: usize, t: &[f64]) -> DMatrix<f64> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|h| (h + 1..n).map(move |i| (h, i))).collect();
    DMatrix::from_fn(pairs.len(), pairs.len(), |r, c| {
        let (h, i) = pairs[r];
        let (j, k) = pairs[c];
        t[ix4(n, h, i, k, j)]
    })
}

fn sort_by_magnitude(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
    v
}

/// Eigenvalues of the curvature operator, sorted by decreasing magnitude.
pub fn curvature_spectrum(p: &MetricParams, point: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let c = curvature_at(p, point)?;
    let (vals, _) = numerics::sym_eig(&bivector_operator(p.n, &c.riemann))?;
    Ok(sort_by_magnitude(vals))
}

/// Sorted singular values of the Weyl operator on Λ², divided by its
/// Frobenius norm.
pub fn normalized_weyl_spectrum(p: &MetricParams, point: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let c = curvature_at(p, point)?;
    let w = bivector_operator(p.n, &c.weyl);
    let norm = w.norm();
    let scale = bivector_operator(p.n, &c.riemann).norm().max(1.0);
    if norm <= 1e-12 * scale {
        return Err(GeometryError::VanishingWeyl(point.to_vec()));
    }
    let mut s = numerics::singular_values(&w)?;
    s.iter_mut().for_each(|x| *x /= norm);
    Ok(s)
}

/// Largest elementwise difference between two equally long lists.
pub fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Maximum pairwise deviation of normalized Weyl spectra over the points.
pub fn weyl_homogeneity_certificate(p: &MetricParams, points: &[Vec<f64>]) -> Result<f64, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::TooFewPoints);
    }
    let spectra = points
        .iter()
        .map(|x| normalized_weyl_spectrum(p, x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst = 0.0f64;
    for i in 0..spectra.len() {
        for j in i + 1..spectra.len() {
            worst = worst.max(max_deviation(&spectra[i], &spectra[j]));
        }
    }
    Ok(worst)
}

/// Coordinate components of `∇R`: `(∇_a R)(∂_b, ∂_c, ∂_d, ∂_e)`, with the
/// partial derivative taken by Richardson-extrapolated central differences
/// of the analytic coordinate curvature.
pub fn nabla_r(p: &MetricParams, point: &[f64], idx: [usize; 5]) -> Result<f64, GeometryError> {
    p.validate()?;
    let n = p.n;
    let [a, b, c, d, e] = idx;
    if idx.iter().any(|&i| i >= n) {
        return Err(GeometryError::BadIndex(*idx.iter().max().unwrap()));
    }
    let (_, gamma, r) = coordinate_curvature(p, point)?;
    let comp = |h: f64| -> Result<f64, GeometryError> {
        let mut x = point.to_vec();
        x[a] += h;
        let (_, _, rp) = coordinate_curvature(p, &x)?;
        x[a] -= 2.0 * h;
        let (_, _, rm) = coordinate_curvature(p, &x)?;
        Ok((rp[ix4(n, b, c, d, e)] - rm[ix4(n, b, c, d, e)]) / (2.0 * h))
    };
    let h = 1e-3;
    let d1 = comp(h)?;
    let d2 = comp(h / 2.0)?;
    let partial = (4.0 * d2 - d1) / 3.0;
    let gm = |k: usize, i: usize, j: usize| gamma[(k * n + i) * n + j];
    let rr = |i: usize, j: usize, k: usize, l: usize| r[ix4(n, i, j, k, l)];
    let mut v = partial;
    for f in 0..n {
        v -= gm(f, a, b) * rr(f, c, d, e);
        v -= gm(f, a, c) * rr(b, f, d, e);
        v -= gm(f, a, d) * rr(b, c, f, e);
        v -= gm(f, a, e) * rr(b, c, d, f);
    }
    Ok(v)
}

/// `(∇₀R₀₁₀ᵢ, κ f² D₁ᵢ)` for `i ∈ 2..n−1`, in coordinate components.
pub fn nabla_r_obstruction(p: &MetricParams, point: &[f64], i: usize) -> Result<(f64, f64), GeometryError> {
    p.validate()?;
    if i < 2 || i >= p.n {
        return Err(GeometryError::BadIndex(i));
    }
    let jet = p.check_point(point)?;
    let lhs = nabla_r(p, point, [0, 0, 1, 0, i])?;
    let rhs = p.kappa() * jet.f * jet.f * p.d_entry(1, i) * p.scale * p.scale;
    Ok((lhs, rhs))
}

/// Uniform samples in `[−radius, radius]ⁿ` that satisfy the domain floor,
/// together with the rejected draws.
pub fn sample_points(
    p: &MetricParams,
    count: usize,
    seed: u64,
    radius: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), GeometryError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::with_capacity(count);
    let mut excluded = Vec::new();
    let max_draws = 100 * count.max(1);
    let mut draws = 0;
    while kept.len() < count && draws < max_draws {
        draws += 1;
        let x: Vec<f64> = (0..p.n).map(|_| rng.gen_range(-radius..=radius)).collect();
        if p.f(x[1], x[0]).abs() >= F_FLOOR {
            kept.push(x);
        } else {
            excluded.push(x);
        }
    }
    if kept.len() < count {
        return Err(GeometryError::Sampling {
            accepted: kept.len(),
            wanted: count,
        });
    }
    Ok((kept, excluded))
}

/// Symmetry, first-Bianchi and trace residuals of a curvature sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorChecks {
    pub riemann_norm: f64,
    pub antisymmetry: f64,
    pub pair_symmetry: f64,
    pub first_bianchi: f64,
    pub weyl_trace: f64,
    pub metric_det_residual: f64,
}

pub fn tensor_checks(p: &MetricParams, c: &CurvatureData) -> TensorChecks {
    let n = p.n;
    let r = |h, i, j, k| c.riemann[ix4(n, h, i, j, k)];
    let (mut anti, mut pair, mut bianchi, mut trace) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for h in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    anti = anti.max((r(h, i, j, k) + r(i, h, j, k)).abs());
                    anti = anti.max((r(h, i, j, k) + r(h, i, k, j)).abs());
                    pair = pair.max((r(h, i, j, k) - r(j, k, h, i)).abs());
                    bianchi = bianchi.max((r(h, i, j, k) + r(h, j, k, i) + r(h, k, i, j)).abs());
                }
            }
        }
    }
    let w = |h, i, j, k| c.weyl[ix4(n, h, i, j, k)];
    for a in 0..n {
        for b in 0..n {
            let t1: f64 = (0..n).map(|h| w(h, a, b, h)).sum();
            let t2: f64 = (0..n).map(|h| w(h, h, a, b)).sum();
            let t3: f64 = (0..n).map(|h| w(a, h, h, b)).sum();
            trace = trace.max(t1.abs()).max(t2.abs()).max(t3.abs());
        }
    }
    let jet = p.jet(c.point[1], c.point[0]);
    let c2n = (p.scale * p.scale).powi(n as i32);
    let det = c.metric.determinant();
    TensorChecks {
        riemann_norm: c.riemann.iter().map(|x| x * x).sum::<f64>().sqrt(),
        antisymmetry: anti,
        pair_symmetry: pair,
        first_bianchi: bianchi,
        weyl_trace: trace,
        metric_det_residual: (det - jet.f * jet.f * c2n).abs() / (jet.f * jet.f * c2n),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObstructionSample {
    pub point: Vec<f64>,
    pub i: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub params: MetricParams,
    pub kappa: f64,
    pub points: Vec<Vec<f64>>,
    pub excluded_points: Vec<Vec<f64>>,
    pub spectrum: Vec<f64>,
    /// Largest deviation of any sampled spectrum from the first one.
    pub spectrum_deviation: f64,
    /// Largest deviation of any sampled spectrum from `{κ, 0, …, 0}`.
    pub spectrum_model_deviation: f64,
    pub weyl_certificate: f64,
    pub obstruction_samples: Vec<ObstructionSample>,
    pub max_obstruction_relative_error: f64,
    pub tensor_checks: TensorChecks,
}

/// Run the spectrum, Weyl and obstruction checks on `count` seeded samples.
pub fn geometry_report(p: &MetricParams, count: usize, seed: u64) -> Result<GeometryReport, GeometryError> {
    let (points, excluded) = sample_points(p, count.max(2), seed, 1.0)?;
    let kappa = p.kappa() / (p.scale * p.scale);
    let mut model = vec![0.0; p.n * (p.n - 1) / 2];
    model[0] = kappa;
    let spectra = points
        .iter()
        .map(|x| curvature_spectrum(p, x))
        .collect::<Result<Vec<_>, _>>()?;
    let spectrum_deviation = spectra
        .iter()
        .map(|s| max_deviation(s, &spectra[0]))
        .fold(0.0, f64::max);
    let spectrum_model_deviation = spectra.iter().map(|s| max_deviation(s, &model)).fold(0.0, f64::max);
    let weyl_certificate = weyl_homogeneity_certificate(p, &points)?;

    let mut samples = Vec::new();
    let mut worst_rel = 0.0f64;
    for x in &points {
        for i in 2..p.n {
            let (lhs, rhs) = nabla_r_obstruction(p, x, i)?;
            let rel = if rhs == 0.0 {
                lhs.abs()
            } else {
                ((lhs - rhs) / rhs).abs()
            };
            worst_rel = worst_rel.max(rel);
            samples.push(ObstructionSample {
                point: x.clone(),
                i,
                lhs,
                rhs,
            });
        }
    }
    let mut checks = TensorChecks {
        riemann_norm: 0.0,
        antisymmetry: 0.0,
        pair_symmetry: 0.0,
        first_bianchi: 0.0,
        weyl_trace: 0.0,
        metric_det_residual: 0.0,
    };
    for x in &points {
        let t = tensor_checks(p, &curvature_at(p, x)?);
        checks.riemann_norm = checks.riemann_norm.max(t.riemann_norm);
        checks.antisymmetry = checks.antisymmetry.max(t.antisymmetry);
        checks.pair_symmetry = checks.pair_symmetry.max(t.pair_symmetry);
        checks.first_bianchi = checks.first_bianchi.max(t.first_bianchi);
        checks.weyl_trace = checks.weyl_trace.max(t.weyl_trace);
        checks.metric_det_residual = checks.metric_det_residual.max(t.metric_det_residual);
    }
    Ok(GeometryReport {
        params: p.clone(),
        kappa,
        points,
        excluded_points: excluded,
        spectrum: spectra[0].clone(),
        spectrum_deviation,
        spectrum_model_deviation,
        weyl_certificate,
        obstruction_samples: samples,
        max_obstruction_relative_error: worst_rel,
        tensor_checks: checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_at_origin_without_twist() {
        let p = MetricParams::example(5).with_d_zero();
        let g = metric_at(&p, &[0.0; 5]).unwrap();
        let mut want = DMatrix::identity(5, 5);
        want[(0, 0)] = 4.0;
        assert_eq!(g, want);
    }

    #[test]
    fn example_rhs_at_origin() {
        let p = MetricParams::example(5);
        let (_, rhs) = nabla_r_obstruction(&p, &[0.0; 5], 2).unwrap();
        assert_eq!(rhs, -4.0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = MetricParams::example(5);
        p.d[1] = 2.0;
        assert!(p.validate().is_err());
        assert!(MetricParams::example(3).validate().is_err());
        let mut p = MetricParams::example(5);
        p.epsilon = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn floor_rejects_small_f() {
        let mut p = MetricParams::example(4);
        p.epsilon = -1;
        // a cos x + b sin x with a = b = 1 vanishes at x = −π/4.
        let x1 = -std::f64::consts::FRAC_PI_4;
        assert!(matches!(
            metric_at(&p, &[0.0, x1, 0.0, 0.0]),
            Err(GeometryError::DomainFloor { .. })
        ));
    }
}
