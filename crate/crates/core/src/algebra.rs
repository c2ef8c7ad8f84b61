//! Compact simple Lie algebras as structure tensors in a basis that is
//! orthonormal for the negative Killing form.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, NumericsError, RankPolicy};

/// Largest algebra dimension built unless the caller raises the cap.
pub const DEFAULT_DIM_CAP: usize = 80;

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("unsupported algebra {family}({l})")]
    Unsupported { family: Family, l: usize },
    #[error("so(4) is not simple")]
    NotSimple,
    #[error("dimension {n} exceeds the configured cap {cap}")]
    DimensionCap { n: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown algebra name {0:?}")]
    UnknownName(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid algebra document: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Su,
    So,
    Sp,
    G2,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Su => "su",
            Family::So => "so",
            Family::Sp => "sp",
            Family::G2 => "g2",
        })
    }
}

/// Algebra selector such as `su3`, `so7`, `sp2` or `g2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlgebraName {
    pub family: Family,
    pub l: usize,
}

impl AlgebraName {
    pub fn new(family: Family, l: usize) -> Self {
        Self { family, l }
    }

    /// Dimension of the algebra, without constructing it.
    pub fn dim(&self) -> usize {
        let l = self.l;
        match self.family {
            Family::Su => l * l - 1,
            Family::So => l * (l - 1) / 2,
            Family::Sp => l * (2 * l + 1),
            Family::G2 => 14,
        }
    }

    /// Rank of the algebra (dimension of a maximal torus).
    pub fn rank(&self) -> usize {
        match self.family {
            Family::Su => self.l - 1,
            Family::So => self.l / 2,
            Family::Sp => self.l,
            Family::G2 => 2,
        }
    }

    /// Reference values of (rank, m) from the classification table, where the
    /// table lists the algebra.
    pub fn table_values(&self) -> Option<(usize, usize)> {
        let l = self.l;
        match self.family {
            Family::Su if l >= 2 => Some((l - 1, 2 * (l - 1))),
            Family::So if l >= 7 => Some((l / 2, 2 * (l - 3))),
            Family::Sp if l >= 2 => Some((l, 2 * l)),
            Family::G2 => Some((2, 6)),
            _ => None,
        }
    }
}

impl fmt::Display for AlgebraName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::G2 => f.write_str("g2"),
            fam => write!(f, "{fam}{}", self.l),
        }
    }
}

impl FromStr for AlgebraName {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase().replace(['(', ')', '_', '-'], "");
        if t == "g2" {
            return Ok(Self::new(Family::G2, 2));
        }
        let (fam, rest) = t.split_at(t.len().min(2));
        let family = match fam {
            "su" => Family::Su,
            "so" => Family::So,
            "sp" => Family::Sp,
            _ => return Err(AlgebraError::UnknownName(s.to_string())),
        };
        let l = rest.parse().map_err(|_| AlgebraError::UnknownName(s.to_string()))?;
        Ok(Self::new(family, l))
    }
}

impl Serialize for AlgebraName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlgebraName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Record of how the orthonormal basis was obtained from the raw matrix
/// basis: `e_i = Σ_a transform[i][a] · b_a`, where `b_a` are the raw
/// matrices and `raw_killing[a][b] = Tr(ad_{b_a} ad_{b_b})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillingScaleLog {
    pub matrix_size: usize,
    pub raw_killing: Vec<f64>,
    pub transform: Vec<f64>,
    /// Orthogonal basis changes applied after construction.
    pub rotations: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityTolerances {
    pub jacobi: f64,
    pub orthonormality: f64,
    pub antisymmetry: f64,
    pub casimir: f64,
    pub coboundary: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        Self {
            jacobi: 1e-12,
            orthonormality: 1e-10,
            antisymmetry: 1e-12,
            casimir: 1e-9,
            coboundary: 1e-10,
        }
    }
}

/// Structure tensor of a compact simple Lie algebra in a basis orthonormal
/// for `−Tr(ad_X ad_Y)`. Entries are stored i-major: `c[(i·n + j)·n + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebra {
    family: Family,
    rank_param: usize,
    dim_n: usize,
    c: Vec<f64>,
    killing_scale_log: KillingScaleLog,
    basis_tag: u64,
}

/// Square matrix acting on the coordinate space of an algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub entries: DMatrix<f64>,
    pub basis_tag: u64,
    pub skew: bool,
}

impl Operator {
    pub fn new(entries: DMatrix<f64>, basis_tag: u64) -> Self {
        let skew = (&entries + entries.transpose()).amax() == 0.0;
        Self {
            entries,
            basis_tag,
            skew,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let v = &self.entries * nalgebra::DVector::from_column_slice(z);
        v.as_slice().to_vec()
    }

    /// `Tr(A Bᵀ)`
    pub fn inner(&self, other: &Operator) -> f64 {
        self.entries.dot(&other.entries)
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }

    /// Largest deviation from skew-symmetry.
    pub fn skew_residual(&self) -> f64 {
        (&self.entries + self.entries.transpose()).amax()
    }
}

fn tag_of(family: Family, l: usize, c: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    family.hash(&mut h);
    l.hash(&mut h);
    for v in c {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

impl LieAlgebra {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rank_param(&self) -> usize {
        self.rank_param
    }

    pub fn name(&self) -> AlgebraName {
        AlgebraName::new(self.family, self.rank_param)
    }

    pub fn dim(&self) -> usize {
        self.dim_n
    }

    pub fn structure_tensor(&self) -> &[f64] {
        &self.c
    }

    pub fn killing_scale_log(&self) -> &KillingScaleLog {
        &self.killing_scale_log
    }

    pub fn basis_tag(&self) -> u64 {
        self.basis_tag
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[(i * self.dim_n + j) * self.dim_n + k]
    }

    /// True for algebras of dimension at most four, where the classification
    /// result verified by the Bianchi module makes no claim.
    pub fn below_hypothesis(&self) -> bool {
        self.dim_n <= 4
    }

    /// Basis elements as real matrices in the defining representation, when
    /// the raw construction is known.
    pub fn matrix_basis(&self) -> Result<Vec<DMatrix<f64>>, AlgebraError> {
        let raw = raw_basis(self.family, self.rank_param)?;
        let n = self.dim_n;
        let t = &self.killing_scale_log.transform;
        Ok((0..n)
            .map(|i| {
                let mut m = DMatrix::zeros(raw[0].nrows(), raw[0].ncols());
                for (a, b) in raw.iter().enumerate() {
                    m += b * t[i * n + a];
                }
                m
            })
            .collect())
    }

    /// Orthonormal coordinates of a vector given in raw-basis coordinates.
    pub fn from_raw_coordinates(&self, r: &[f64]) -> Result<Vec<f64>, AlgebraError> {
        let n = self.dim_n;
        check_len(r, n)?;
        let t = &self.killing_scale_log.transform;
        let k = &self.killing_scale_log.raw_killing;
        // x_i = ⟨e_i, r⟩ = −Σ_ab T_ia κ_ab r_b
        Ok((0..n)
            .map(|i| {
                let mut s = 0.0;
                for a in 0..n {
                    let kr: f64 = (0..n).map(|b| k[a * n + b] * r[b]).sum();
                    s -= t[i * n + a] * kr;
                }
                s
            })
            .collect())
    }

    fn from_tensor(family: Family, l: usize, n: usize, c: Vec<f64>, log: KillingScaleLog) -> Self {
        let basis_tag = tag_of(family, l, &c);
        Self {
            family,
            rank_param: l,
            dim_n: n,
            c,
            killing_scale_log: log,
            basis_tag,
        }
    }

    /// Structure tensor document `{family, l, n, c, tolerance_report, killing_scale_log}`.
    pub fn to_json(&self) -> serde_json::Value {
        let doc = AlgebraDoc {
            family: self.family,
            l: self.rank_param,
            n: self.dim_n,
            c: self.c.clone(),
            tolerance_report: Some(check_identities(self, 0, 0).summary()),
            killing_scale_log: Some(self.killing_scale_log.clone()),
        };
        serde_json::to_value(doc).expect("algebra documents serialize")
    }

    /// Inverse of [`LieAlgebra::to_json`]. Only the shape is validated, so
    /// that corrupted tensors can be loaded and diagnosed.
    pub fn from_json(v: &serde_json::Value) -> Result<Self, AlgebraError> {
        let doc: AlgebraDoc = serde_json::from_value(v.clone())?;
        if doc.c.len() != doc.n * doc.n * doc.n {
            return Err(AlgebraError::DimensionMismatch {
                expected: doc.n * doc.n * doc.n,
                got: doc.c.len(),
            });
        }
        if doc.c.iter().any(|x| !x.is_finite()) {
            return Err(NumericsError::NonFinite.into());
        }
        let log = doc.killing_scale_log.unwrap_or(KillingScaleLog {
            matrix_size: 0,
            raw_killing: Vec::new(),
            transform: Vec::new(),
            rotations: Vec::new(),
        });
        Ok(Self::from_tensor(doc.family, doc.l, doc.n, doc.c, log))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AlgebraDoc {
    family: Family,
    l: usize,
    n: usize,
    c: Vec<f64>,
    #[serde(default)]
    tolerance_report: Option<IdentitySummary>,
    #[serde(default)]
    killing_scale_log: Option<KillingScaleLog>,
}

fn check_len(x: &[f64], n: usize) -> Result<(), AlgebraError> {
    if x.len() == n {
        Ok(())
    } else {
        Err(AlgebraError::DimensionMismatch {
            expected: n,
            got: x.len(),
        })
    }
}

fn check_op(g: &LieAlgebra, a: &Operator) -> Result<(), AlgebraError> {
    let n = g.dim();
    if a.entries.shape() == (n, n) {
        Ok(())
    } else {
        Err(AlgebraError::DimensionMismatch {
            expected: n,
            got: a.entries.nrows(),
        })
    }
}

// ---------------------------------------------------------------------------
// Raw bases

fn e(m: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(m, m);
    x[(i, j)] = 1.0;
    x
}

/// Real 2m×2m image of the complex matrix `re + i·im`.
fn complex_to_real(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<f64> {
    let m = re.nrows();
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(re);
    out.view_mut((m, m), (m, m)).copy_from(re);
    out.view_mut((0, m), (m, m)).copy_from(&(-im));
    out.view_mut((m, 0), (m, m)).copy_from(im);
    out
}

fn su_raw(l: usize) -> Vec<DMatrix<f64>> {
    let z = DMatrix::zeros(l, l);
    let mut out = Vec::new();
    for j in 0..l - 1 {
        out.push(complex_to_real(&z, &(e(l, j, j) - e(l, j + 1, j + 1))));
    }
    for j in 0..l {
        for k in j + 1..l {
            out.push(complex_to_real(&(e(l, j, k) - e(l, k, j)), &z));
            out.push(complex_to_real(&z, &(e(l, j, k) + e(l, k, j))));
        }
    }
    out
}

fn so_raw(l: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for j in 0..l {
        for k in j + 1..l {
            out.push(e(l, j, k) - e(l, k, j));
        }
    }
    out
}

/// Compact symplectic algebra: complex 2l×2l matrices [[A, −B̄], [B, Ā]] with
/// A anti-Hermitian and B symmetric, realized over the reals.
fn sp_raw(l: usize) -> Vec<DMatrix<f64>> {
    let z = DMatrix::zeros(l, l);
    let block = |a_re: &DMatrix<f64>, a_im: &DMatrix<f64>, b_re: &DMatrix<f64>, b_im: &DMatrix<f64>| {
        let m = 2 * l;
        let mut re = DMatrix::zeros(m, m);
        let mut im = DMatrix::zeros(m, m);
        re.view_mut((0, 0), (l, l)).copy_from(a_re);
        im.view_mut((0, 0), (l, l)).copy_from(a_im);
        re.view_mut((l, l), (l, l)).copy_from(a_re);
        im.view_mut((l, l), (l, l)).copy_from(&(-a_im));
        re.view_mut((l, 0), (l, l)).copy_from(b_re);
        im.view_mut((l, 0), (l, l)).copy_from(b_im);
        re.view_mut((0, l), (l, l)).copy_from(&(-b_re));
        im.view_mut((0, l), (l, l)).copy_from(b_im);
        complex_to_real(&re, &im)
    };
    let mut out = Vec::new();
    for j in 0..l {
        out.push(block(&z, &e(l, j, j), &z, &z));
    }
    for j in 0..l {
        for k in j + 1..l {
            out.push(block(&(e(l, j, k) - e(l, k, j)), &z, &z, &z));
            out.push(block(&z, &(e(l, j, k) + e(l, k, j)), &z, &z));
        }
    }
    for j in 0..l {
        for k in j..l {
            let s = if j == k { e(l, j, j) } else { e(l, j, k) + e(l, k, j) };
            out.push(block(&z, &z, &s, &z));
            out.push(block(&z, &z, &z, &s));
        }
    }
    out
}

/// Oriented triples (a, b, c) of imaginary octonion units with e_a e_b = e_c.
pub const FANO_TRIPLES: [(usize, usize, usize); 7] = [
    (1, 2, 3),
    (1, 4, 5),
    (1, 7, 6),
    (2, 4, 6),
    (2, 5, 7),
    (3, 4, 7),
    (3, 6, 5),
];

/// Product of octonion units: `e_a e_b = sign · e_c` with index 0 the unit.
pub fn octonion_unit_product(a: usize, b: usize) -> (f64, usize) {
    if a == 0 {
        return (1.0, b);
    }
    if b == 0 {
        return (1.0, a);
    }
    if a == b {
        return (-1.0, 0);
    }
    for &(x, y, z) in &FANO_TRIPLES {
        for (p, q, r) in [(x, y, z), (y, z, x), (z, x, y)] {
            if (a, b) == (p, q) {
                return (1.0, r);
            }
            if (a, b) == (q, p) {
                return (-1.0, r);
            }
        }
    }
    unreachable!("octonion units are 0..8")
}

/// Linear constraints `D(e_a e_b) − D(e_a) e_b − e_a D(e_b) = 0` on a map
/// `D` of the imaginary octonions, one row per (a, b, output component).
/// Column `c·7 + a` holds the unknown `D_{ca}` (component c of D e_a), with
/// octonion indices shifted down by one.
pub fn octonion_derivation_constraints() -> DMatrix<f64> {
    let mut m = DMatrix::zeros(7 * 7 * 8, 49);
    let col = |c: usize, a: usize| (c - 1) * 7 + (a - 1);
    for a in 1..8 {
        for b in 1..8 {
            let row0 = ((a - 1) * 7 + (b - 1)) * 8;
            let (s, c) = octonion_unit_product(a, b);
            if c != 0 {
                for d in 1..8 {
                    m[(row0 + d, col(d, c))] += s;
                }
            }
            for d in 1..8 {
                let (s1, r1) = octonion_unit_product(d, b);
                m[(row0 + r1, col(d, a))] -= s1;
                let (s2, r2) = octonion_unit_product(a, d);
                m[(row0 + r2, col(d, b))] -= s2;
            }
        }
    }
    m
}

/// Kernel basis by Gauss–Jordan elimination with partial pivoting, one
/// vector per free column in increasing column order.
fn rref_kernel(mut m: DMatrix<f64>, tol: f64) -> Vec<Vec<f64>> {
    let (rows, cols) = m.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (p, best) = (r..rows)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol {
            continue;
        }
        m.swap_rows(r, p);
        let piv = m[(r, c)];
        for j in 0..cols {
            m[(r, j)] /= piv;
        }
        for i in 0..rows {
            if i != r {
                let f = m[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        let v = m[(r, j)];
                        m[(i, j)] -= f * v;
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![0.0; cols];
            v[f] = 1.0;
            for (i, &p) in pivots.iter().enumerate() {
                v[p] = -m[(i, f)];
            }
            v
        })
        .collect()
}

fn g2_raw() -> Vec<DMatrix<f64>> {
    rref_kernel(octonion_derivation_constraints(), 1e-9)
        .into_iter()
        .map(|v| DMatrix::from_fn(7, 7, |c, a| v[c * 7 + a]))
        .collect()
}

fn validate(family: Family, l: usize) -> Result<(), AlgebraError> {
    let ok = match family {
        Family::Su => l >= 2,
        Family::So => {
            if l == 4 {
                return Err(AlgebraError::NotSimple);
            }
            l == 3 || l >= 5
        }
        Family::Sp => l >= 1,
        Family::G2 => true,
    };
    if ok {
        Ok(())
    } else {
        Err(AlgebraError::Unsupported { family, l })
    }
}

/// The fixed raw matrix basis of an algebra, before orthonormalization.
pub fn raw_basis(family: Family, l: usize) -> Result<Vec<DMatrix<f64>>, AlgebraError> {
    validate(family, l)?;
    Ok(match family {
        Family::Su => su_raw(l),
        Family::So => so_raw(l),
        Family::Sp => sp_raw(l),
        Family::G2 => g2_raw(),
    })
}

fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Raw structure constants `f[(a·n + b)·n + c]` with `[b_a, b_b] = Σ f_abc b_c`,
/// obtained by Frobenius projection onto the raw basis.
fn raw_structure(raw: &[DMatrix<f64>]) -> Result<Vec<f64>, AlgebraError> {
    let n = raw.len();
    let gram = DMatrix::from_fn(n, n, |a, b| raw[a].dot(&raw[b]));
    let chol = gram
        .cholesky()
        .ok_or_else(|| AlgebraError::Construction("raw basis is linearly dependent".into()))?;
    let mut f = vec![0.0; n * n * n];
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let br = commutator(&raw[a], &raw[b]);
            let rhs = nalgebra::DVector::from_fn(n, |d, _| br.dot(&raw[d]));
            let coef = chol.solve(&rhs);
            let mut recon = -br.clone();
            for (d, m) in raw.iter().enumerate() {
                recon += m * coef[d];
            }
            worst = worst.max(recon.amax());
            for c in 0..n {
                f[(a * n + b) * n + c] = coef[c];
                f[(b * n + a) * n + c] = -coef[c];
            }
        }
    }
    if worst > 1e-10 {
        return Err(AlgebraError::Construction(format!(
            "raw basis is not closed under the bracket (residual {worst:.3e})"
        )));
    }
    Ok(f)
}

/// Build an algebra with the default dimension cap.
pub fn build_algebra(family: Family, l: usize) -> Result<LieAlgebra, AlgebraError> {
    build_algebra_capped(family, l, DEFAULT_DIM_CAP)
}

pub fn build_named(name: AlgebraName) -> Result<LieAlgebra, AlgebraError> {
    build_algebra(name.family, name.l)
}

pub fn build_algebra_capped(family: Family, l: usize, cap: usize) -> Result<LieAlgebra, AlgebraError> {
    validate(family, l)?;
    let l = if family == Family::G2 { 2 } else { l };
    let n = AlgebraName::new(family, l).dim();
    if n > cap {
        return Err(AlgebraError::DimensionCap { n, cap });
    }
    let raw = raw_basis(family, l)?;
    if raw.len() != n {
        return Err(AlgebraError::Construction(format!(
            "raw basis has {} elements, expected {n}",
            raw.len()
        )));
    }
    let f = raw_structure(&raw)?;

    // κ_ab = Σ_cd f_adc f_bcd
    let mut kappa = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let mut s = 0.0;
            for c in 0..n {
                for d in 0..n {
                    s += f[(a * n + d) * n + c] * f[(b * n + c) * n + d];
                }
            }
            kappa[a * n + b] = s;
            kappa[b * n + a] = s;
        }
    }
    let ip = |x: &[f64], y: &[f64]| -> f64 {
        let mut s = 0.0;
        for a in 0..n {
            if x[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                s -= x[a] * kappa[a * n + b] * y[b];
            }
        }
        s
    };

    // Modified Gram–Schmidt in raw-basis order.
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(n);
    for a in 0..n {
        let mut v = vec![0.0; n];
        v[a] = 1.0;
        for u in &t {
            let p = ip(&v, u);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= p * ui;
            }
        }
        let nn = ip(&v, &v);
        if !(nn > 1e-12) {
            return Err(AlgebraError::Construction(
                "Killing form is not negative definite".into(),
            ));
        }
        let s = nn.sqrt();
        v.iter_mut().for_each(|x| *x /= s);
        t.push(v);
    }

    // w_k = −κ T_k, so ⟨x, e_k⟩ = x · w_k for raw coordinates x.
    let w: Vec<Vec<f64>> = t
        .iter()
        .map(|tk| {
            (0..n)
                .map(|a| -(0..n).map(|b| kappa[a * n + b] * tk[b]).sum::<f64>())
                .collect()
        })
        .collect();
    let mut c = vec![0.0; n * n * n];
    for i in 0..n {
        // F_i[b][d] = Σ_a T_ia f_abd
        let mut fi = vec![0.0; n * n];
        for a in 0..n {
            let ta = t[i][a];
            if ta == 0.0 {
                continue;
            }
            for bd in 0..n * n {
                fi[bd] += ta * f[a * n * n + bd];
            }
        }
        for j in i + 1..n {
            let mut v = vec![0.0; n];
            for b in 0..n {
                let tb = t[j][b];
                if tb == 0.0 {
                    continue;
                }
                for d in 0..n {
                    v[d] += tb * fi[b * n + d];
                }
            }
            for k in 0..n {
                let x: f64 = v.iter().zip(&w[k]).map(|(p, q)| p * q).sum();
                c[(i * n + j) * n + k] = x;
                c[(j * n + i) * n + k] = -x;
            }
        }
    }
    let log = KillingScaleLog {
        matrix_size: raw[0].nrows(),
        raw_killing: kappa,
        transform: t.concat(),
        rotations: Vec::new(),
    };
    Ok(LieAlgebra::from_tensor(family, l, n, c, log))
}

// ---------------------------------------------------------------------------
// Primitives

/// `[X, Y] = Σ c_ijk X_i Y_j e_k`
pub fn bracket(g: &LieAlgebra, x: &[f64], y: &[f64]) -> Result<Vec<f64>, AlgebraError> {
    let n = g.dim();
    check_len(x, n)?;
    check_len(y, n)?;
    let mut out = vec![0.0; n];
    for i in 0..n {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            let s = x[i] * y[j];
            if s == 0.0 {
                continue;
            }
            let row = &g.c[(i * n + j) * n..(i * n + j + 1) * n];
            for (o, v) in out.iter_mut().zip(row) {
                *o += s * v;
            }
        }
    }
    Ok(out)
}

/// Matrix of `Z ↦ [X, Z]`: entry (k, j) is `Σ_i X_i c_ijk`.
pub fn ad(g: &LieAlgebra, x: &[f64]) -> Result<Operator, AlgebraError> {
    let n = g.dim();
    check_len(x, n)?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            for k in 0..n {
                m[(k, j)] += x[i] * g.c(i, j, k);
            }
        }
    }
    let mut op = Operator::new(m, g.basis_tag());
    op.skew = true;
    Ok(op)
}

/// `ad(e_i)` for every basis vector.
pub fn ad_basis(g: &LieAlgebra) -> Vec<DMatrix<f64>> {
    let n = g.dim();
    (0..n).map(|i| DMatrix::from_fn(n, n, |k, j| g.c(i, j, k))).collect()
}

/// `Tr(ad_X ad_Y)`
pub fn killing(g: &LieAlgebra, x: &[f64], y: &[f64]) -> Result<f64, AlgebraError> {
    let ax = ad(g, x)?;
    let ay = ad(g, y)?;
    Ok((ax.entries * ay.entries).trace())
}

/// `‖Σ_i ad(e_i)² + I‖_F`
pub fn casimir_residual(g: &LieAlgebra) -> f64 {
    let n = g.dim();
    let mut s = DMatrix::<f64>::identity(n, n);
    for a in ad_basis(g) {
        s += &a * &a;
    }
    s.norm()
}

/// `∂A = −½ Σ_i [A e_i, e_i]`
pub fn coboundary(g: &LieAlgebra, a: &Operator) -> Result<Vec<f64>, AlgebraError> {
    check_op(g, a)?;
    let n = g.dim();
    let mut out = vec![0.0; n];
    for i in 0..n {
        for p in 0..n {
            let v = a.entries[(p, i)];
            if v == 0.0 {
                continue;
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o -= 0.5 * v * g.c(p, i, k);
            }
        }
    }
    Ok(out)
}

/// Orthogonal projection of `A` onto `ad(g)` under `Tr(A Bᵀ)`, and the
/// complementary part.
pub fn project_ad(g: &LieAlgebra, a: &Operator) -> Result<(Operator, Operator), AlgebraError> {
    check_op(g, a)?;
    let n = g.dim();
    let mut p = DMatrix::zeros(n, n);
    for m in ad_basis(g) {
        let s = a.entries.dot(&m);
        p += m * s;
    }
    let rest = &a.entries - &p;
    Ok((Operator::new(p, a.basis_tag), Operator::new(rest, a.basis_tag)))
}

/// `(X∧Y)Z = ⟨X,Z⟩Y − ⟨Y,Z⟩X`, i.e. the matrix `Y Xᵀ − X Yᵀ`.
pub fn wedge(g: &LieAlgebra, x: &[f64], y: &[f64]) -> Result<Operator, AlgebraError> {
    let n = g.dim();
    check_len(x, n)?;
    check_len(y, n)?;
    let m = DMatrix::from_fn(n, n, |p, q| y[p] * x[q] - x[p] * y[q]);
    let mut op = Operator::new(m, g.basis_tag());
    op.skew = true;
    Ok(op)
}

// ---------------------------------------------------------------------------
// Basis changes

/// Haar-distributed orthogonal matrix from a seeded Gaussian sample.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, n, |_, _| standard_normal(&mut rng));
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// The same algebra in the basis `e'_i = Σ_a Q_ai e_a` for a seeded random
/// orthogonal `Q`.
pub fn rotate_basis(g: &LieAlgebra, seed: u64) -> LieAlgebra {
    let n = g.dim();
    let q = random_orthogonal(n, seed);
    // c'_ijk = Σ_abd Q_ai Q_bj Q_dk c_abd, contracted one index at a time.
    let mut t1 = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for d in 0..n {
                    s += g.c(a, b, d) * q[(d, k)];
                }
                t1[(a * n + b) * n + k] = s;
            }
        }
    }
    let mut t2 = vec![0.0; n * n * n];
    for a in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for b in 0..n {
                    s += t1[(a * n + b) * n + k] * q[(b, j)];
                }
                t2[(a * n + j) * n + k] = s;
            }
        }
    }
    let mut c = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    s += t2[(a * n + j) * n + k] * q[(a, i)];
                }
                c[(i * n + j) * n + k] = s;
            }
        }
    }
    let mut log = g.killing_scale_log.clone();
    if log.transform.len() == n * n {
        let t = DMatrix::from_row_slice(n, n, &log.transform);
        let tn = q.transpose() * t;
        log.transform = (0..n * n).map(|ia| tn[(ia / n, ia % n)]).collect();
    }
    log.rotations.push(seed);
    LieAlgebra::from_tensor(g.family, g.rank_param, n, c, log)
}

// ---------------------------------------------------------------------------
// Identity suite

/// Measured residuals of the algebra identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub antisymmetry: f64,
    pub total_antisymmetry: f64,
    pub jacobi: f64,
    pub orthonormality: f64,
    pub casimir: f64,
    pub coboundary_ad: f64,
    pub coboundary_wedge: f64,
    pub coboundary_pairing: f64,
    pub ad_rank: usize,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub algebra: AlgebraName,
    pub dim: usize,
    summary: IdentitySummary,
}

impl IdentityReport {
    pub fn summary(&self) -> IdentitySummary {
        self.summary.clone()
    }

    /// Names and values of all checks that exceed their tolerance, in a
    /// fixed order.
    pub fn failures(&self, tol: &IdentityTolerances) -> Vec<(&'static str, f64)> {
        let s = &self.summary;
        let mut out = Vec::new();
        let checks = [
            ("antisymmetry", s.antisymmetry, tol.antisymmetry),
            ("total_antisymmetry", s.total_antisymmetry, tol.orthonormality),
            ("jacobi", s.jacobi, tol.jacobi),
            ("orthonormality", s.orthonormality, tol.orthonormality),
            ("casimir", s.casimir, tol.casimir),
            ("coboundary_ad", s.coboundary_ad, tol.coboundary),
            ("coboundary_wedge", s.coboundary_wedge, tol.coboundary),
            ("coboundary_pairing", s.coboundary_pairing, tol.coboundary),
        ];
        for (name, v, t) in checks {
            if !(v <= t) {
                out.push((name, v));
            }
        }
        if s.ad_rank != self.dim {
            out.push(("ad_injective", s.ad_rank as f64));
        }
        out
    }
}

pub fn jacobi_residual(g: &LieAlgebra) -> f64 {
    let n = g.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for m in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += g.c(i, j, l) * g.c(l, k, m) + g.c(j, k, l) * g.c(l, i, m) + g.c(k, i, l) * g.c(l, j, m);
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    worst
}

/// `max |−Tr(ad_i ad_j) − δ_ij|`
pub fn orthonormality_residual(g: &LieAlgebra) -> f64 {
    let n = g.dim();
    let ads = ad_basis(g);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let v = -(ads[i].component_mul(&ads[j].transpose())).sum();
            let d = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - d).abs());
        }
    }
    worst
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Evaluate every algebra identity; coboundary identities use `samples`
/// random unit inputs drawn from `seed`.
pub fn check_identities(g: &LieAlgebra, samples: usize, seed: u64) -> IdentityReport {
    let n = g.dim();
    let mut antisym = 0.0f64;
    let mut total = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                antisym = antisym.max((g.c(i, j, k) + g.c(j, i, k)).abs());
                total = total.max((g.c(i, j, k) + g.c(i, k, j)).abs());
            }
        }
    }
    let ads = ad_basis(g);
    let gram = DMatrix::from_fn(n, n, |i, j| ads[i].dot(&ads[j]));
    let ad_rank = numerics::decide_dense(&gram, &RankPolicy::default())
        .map(|d| d.rank)
        .unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cad, mut cwedge, mut pairing) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let x = unit(random_vector(&mut rng, n));
        let y = unit(random_vector(&mut rng, n));
        let ax = ad(g, &x).expect("length n");
        let d = coboundary(g, &ax).expect("n×n");
        cad = cad.max(d.iter().zip(&x).map(|(p, q)| (p - 0.5 * q).abs()).fold(0.0, f64::max));
        let w = wedge(g, &x, &y).expect("length n");
        let d = coboundary(g, &w).expect("n×n");
        let b = bracket(g, &x, &y).expect("length n");
        cwedge = cwedge.max(d.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        let a = DMatrix::from_fn(n, n, |_, _| standard_normal(&mut rng)) / (n as f64);
        let a = Operator::new(a, g.basis_tag());
        let d = coboundary(g, &a).expect("n×n");
        let lhs: f64 = d.iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs = 0.5 * a.inner(&ad(g, &y).expect("length n"));
        pairing = pairing.max((lhs - rhs).abs());
    }
    IdentityReport {
        algebra: g.name(),
        dim: n,
        summary: IdentitySummary {
            antisymmetry: antisym,
            total_antisymmetry: total,
            jacobi: jacobi_residual(g),
            orthonormality: orthonormality_residual(g),
            casimir: casimir_residual(g),
            coboundary_ad: cad,
            coboundary_wedge: cwedge,
            coboundary_pairing: pairing,
            ad_rank,
            samples,
        },
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in ["su2", "su3", "su4", "so5", "so7", "sp2", "sp3", "g2"] {
            let n: AlgebraName = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        assert!("e8".parse::<AlgebraName>().is_err());
        assert_eq!("su(3)".parse::<AlgebraName>().unwrap(), AlgebraName::new(Family::Su, 3));
    }

    #[test]
    fn so4_and_small_ranks_are_rejected() {
        assert!(matches!(build_algebra(Family::So, 4), Err(AlgebraError::NotSimple)));
        assert!(matches!(
            build_algebra(Family::Su, 1),
            Err(AlgebraError::Unsupported { .. })
        ));
        assert!(matches!(
            build_algebra(Family::So, 2),
            Err(AlgebraError::Unsupported { .. })
        ));
        assert!(matches!(
            build_algebra_capped(Family::Su, 6, 20),
            Err(AlgebraError::DimensionCap { n: 35, cap: 20 })
        ));
    }

    #[test]
    fn octonion_table_is_alternative() {
        // (e_a e_a) e_b = e_a (e_a e_b) for imaginary units.
        for a in 1..8 {
            for b in 1..8 {
                let (s1, r1) = octonion_unit_product(a, a);
                let (s2, r2) = octonion_unit_product(r1, b);
                let (s3, r3) = octonion_unit_product(a, b);
                let (s4, r4) = octonion_unit_product(a, r3);
                assert_eq!((s1 * s2, r2), (s3 * s4, r4));
            }
        }
    }

    #[test]
    fn raw_bases_have_expected_sizes() {
        assert_eq!(raw_basis(Family::Su, 3).unwrap().len(), 8);
        assert_eq!(raw_basis(Family::Sp, 2).unwrap().len(), 10);
        assert_eq!(raw_basis(Family::So, 7).unwrap().len(), 21);
        assert_eq!(raw_basis(Family::G2, 0).unwrap().len(), 14);
    }
}
