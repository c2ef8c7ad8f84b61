//! Dense and sparse linear-algebra kernels with an explicit rank policy.
//!
//! Two independent routes decide the rank of a tall sparse system `A`:
//!
//! * the dense route folds rows into an upper-triangular factor `R` with
//!   `RᵀR = AᵀA` (blocked Householder updates) and takes the SVD of `R`;
//! * the Gram route accumulates `G = AᵀA` directly and eigendecomposes it,
//!   applying the threshold to square roots of the eigenvalues.
//!
//! The Gram route squares the condition number. That is acceptable for the
//! systems handled here because their kernels are exact; the gap test in
//! [`RankPolicy`] turns any resulting loss of precision into an error.

mod lapack;
mod sparse;

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sparse::{SparseBuilder, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("ambiguous rank: threshold gives {threshold_rank}, largest gap gives {gap_rank} (gap ratio {gap:.3e})")]
    AmbiguousRank {
        threshold_rank: usize,
        gap_rank: usize,
        gap: f64,
    },
    #[error("matrix is not symmetric (residual {0:.3e})")]
    NotSymmetric(f64),
    #[error("non-finite entries in input")]
    NonFinite,
    #[error("LAPACK {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },
    #[error("dimension {0} exceeds the LAPACK integer range")]
    TooLarge(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid rank policy: {0}")]
    InvalidPolicy(String),
}

/// Tolerance policy for rank decisions.
///
/// A singular value is discarded when it is at most
/// `σ_max · max(rows, cols) · rel_threshold`. The decision is accepted only
/// if the ratio between the last kept and the first discarded singular value
/// is at least `min_gap_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    pub rel_threshold: f64,
    pub min_gap_ratio: f64,
    pub gram_mode_row_cutoff: usize,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self {
            rel_threshold: 2f64.powi(-46),
            min_gap_ratio: 1e3,
            gram_mode_row_cutoff: 100_000,
        }
    }
}

impl RankPolicy {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.rel_threshold > 0.0 && self.rel_threshold.is_finite()) {
            return Err(NumericsError::InvalidPolicy("rel_threshold must be positive".into()));
        }
        if !(self.min_gap_ratio >= 1.0) {
            return Err(NumericsError::InvalidPolicy("min_gap_ratio must be at least 1".into()));
        }
        Ok(())
    }

    /// Route used by [`rank_and_nullspace`] for a system with `rows` rows.
    pub fn method_for(&self, rows: usize) -> Method {
        if rows > self.gram_mode_row_cutoff {
            Method::Gram
        } else {
            Method::DenseSvd
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DenseSvd,
    Gram,
}

/// Outcome of a rank decision. `basis` holds an orthonormal kernel basis
/// (one column per null direction) when it was requested.
#[derive(Debug, Clone)]
pub struct RankDecision {
    pub method: Method,
    pub rows: usize,
    pub cols: usize,
    /// Singular values (or square-rooted Gram eigenvalues), descending,
    /// padded with zeros to `cols` entries.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub rank: usize,
    /// Last kept over first discarded singular value; infinite when either
    /// side is empty or the first discarded value is exactly zero.
    pub sv_gap: f64,
    /// Rank suggested by the largest consecutive singular-value ratio.
    pub gap_rank: usize,
    pub basis: Option<DMatrix<f64>>,
}

impl RankDecision {
    fn from_singular_values(method: Method, rows: usize, cols: usize, mut sv: Vec<f64>, threshold: f64) -> Self {
        sv.resize(cols, 0.0);
        let rank = sv.iter().take_while(|&&s| s > threshold).count();
        let ratio = |i: usize| -> f64 {
            let (a, b) = (sv[i - 1], sv[i]);
            if b == 0.0 {
                if a == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                a / b
            }
        };
        let sv_gap = if rank == 0 || rank == cols {
            f64::INFINITY
        } else {
            ratio(rank)
        };
        let mut gap_rank = rank;
        let mut best = 0.0;
        for i in 1..cols {
            let r = ratio(i);
            if r > best {
                best = r;
                gap_rank = i;
            }
        }
        Self {
            method,
            rows,
            cols,
            singular_values: sv,
            threshold,
            rank,
            sv_gap,
            gap_rank,
            basis: None,
        }
    }

    pub fn nullity(&self) -> usize {
        self.cols - self.rank
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Smallest singular value that was kept, if any.
    pub fn smallest_kept(&self) -> Option<f64> {
        self.rank.checked_sub(1).map(|i| self.singular_values[i])
    }

    /// Largest singular value that was discarded, if any.
    pub fn largest_discarded(&self) -> Option<f64> {
        self.singular_values.get(self.rank).copied()
    }

    pub fn is_ambiguous(&self, policy: &RankPolicy) -> bool {
        self.sv_gap < policy.min_gap_ratio
    }

    /// Turn an ambiguous decision into an error.
    pub fn ensure_unambiguous(&self, policy: &RankPolicy) -> Result<(), NumericsError> {
        if self.is_ambiguous(policy) {
            Err(NumericsError::AmbiguousRank {
                threshold_rank: self.rank,
                gap_rank: self.gap_rank,
                gap: self.sv_gap,
            })
        } else {
            Ok(())
        }
    }
}

fn dense_threshold(sigma_max: f64, rows: usize, cols: usize, policy: &RankPolicy) -> f64 {
    sigma_max * rows.max(cols) as f64 * policy.rel_threshold
}

/// Upper-triangular factor `R` with `RᵀR = AᵀA` for the rows pushed so far.
#[derive(Debug, Clone)]
pub struct TriangularFactor {
    cols: usize,
    rows_seen: usize,
    r: Vec<f64>,
}

impl TriangularFactor {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            rows_seen: 0,
            r: vec![0.0; cols * cols],
        }
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    /// Fold rows `range` of `a` into the factor.
    pub fn push_rows(&mut self, a: &SparseMatrix, range: Range<usize>) -> Result<(), NumericsError> {
        if a.cols() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: a.cols(),
            });
        }
        let c = self.cols;
        let block = c.clamp(256, 4096);
        let mut start = range.start;
        let mut b = Vec::new();
        while start < range.end {
            let end = (start + block).min(range.end);
            let m = end - start;
            b.clear();
            b.resize(m * c, 0.0);
            for (i, r) in (start..end).enumerate() {
                for (col, v) in a.row(r) {
                    if !v.is_finite() {
                        return Err(NumericsError::NonFinite);
                    }
                    b[col * m + i] += v;
                }
            }
            lapack::tpqrt(c, &mut self.r, m, &mut b)?;
            self.rows_seen += m;
            start = end;
        }
        Ok(())
    }

    /// The current factor as a dense matrix (strict lower part zero).
    pub fn r_matrix(&self) -> DMatrix<f64> {
        let c = self.cols;
        DMatrix::from_fn(c, c, |i, j| if i <= j { self.r[j * c + i] } else { 0.0 })
    }

    pub fn decide(&self, policy: &RankPolicy, want_basis: bool) -> Result<RankDecision, NumericsError> {
        policy.validate()?;
        let c = self.cols;
        let mut r = self.r_matrix();
        let (sv, vt) = lapack::gesdd(c, c, r.as_mut_slice(), want_basis)?;
        let sigma_max = sv.first().copied().unwrap_or(0.0);
        let threshold = dense_threshold(sigma_max, self.rows_seen, c, policy);
        let mut d = RankDecision::from_singular_values(Method::DenseSvd, self.rows_seen, c, sv, threshold);
        if let Some(vt) = vt {
            let vt = DMatrix::from_vec(c, c, vt);
            d.basis = Some(vt.rows(d.rank, c - d.rank).transpose());
        }
        Ok(d)
    }
}

/// Gram matrix `G = AᵀA` accumulated from sparse rows.
///
/// Accumulation is parallel over output columns of `G`; every column is
/// produced by a single task summing its contributions in increasing row
/// order, so the result is bit-identical for any thread count.
#[derive(Debug, Clone)]
pub struct GramFactor {
    cols: usize,
    rows_seen: usize,
    g: Vec<f64>,
}

impl GramFactor {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            rows_seen: 0,
            g: vec![0.0; cols * cols],
        }
    }

    /// Bytes held by the Gram matrix plus the working copy used by
    /// [`GramFactor::decide`].
    pub fn memory_estimate(cols: usize) -> usize {
        2 * cols * cols * std::mem::size_of::<f64>()
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn add_rows(&mut self, a: &SparseMatrix, range: Range<usize>) -> Result<(), NumericsError> {
        if a.cols() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: a.cols(),
            });
        }
        if !a.all_finite() {
            return Err(NumericsError::NonFinite);
        }
        let c = self.cols;
        let columns = a.columns_of(range.clone());
        self.g.par_chunks_mut(c.max(1)).enumerate().for_each(|(col, out)| {
            for &(r, v) in &columns[col] {
                for (j, w) in a.row(r as usize) {
                    out[j] += v * w;
                }
            }
        });
        self.rows_seen += range.len();
        Ok(())
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.cols, self.cols, &self.g)
    }

    pub fn decide(&self, policy: &RankPolicy, want_basis: bool) -> Result<RankDecision, NumericsError> {
        policy.validate()?;
        let c = self.cols;
        let mut work = self.g.clone();
        let eig = lapack::syevd(c, &mut work, want_basis)?;
        let lambda_max = eig.last().copied().unwrap_or(0.0).max(0.0);
        // The dense policy applied to G itself, then mapped back to σ.
        let threshold = (lambda_max * self.rows_seen.max(c) as f64 * policy.rel_threshold).sqrt();
        let sv: Vec<f64> = eig.iter().rev().map(|&l| l.max(0.0).sqrt()).collect();
        let mut d = RankDecision::from_singular_values(Method::Gram, self.rows_seen, c, sv, threshold);
        if want_basis {
            let vecs = DMatrix::from_vec(c, c, work);
            // Ascending eigenvalues: the discarded ones come first.
            d.basis = Some(vecs.columns(0, d.nullity()).into_owned());
        }
        Ok(d)
    }
}

/// Rank decision for the whole sparse matrix on the route chosen by the
/// policy's row cutoff. Returns [`NumericsError::AmbiguousRank`] when the
/// spectral gap is too small.
pub fn rank_and_nullspace(a: &SparseMatrix, policy: &RankPolicy) -> Result<RankDecision, NumericsError> {
    let d = decide_sparse(a, policy, policy.method_for(a.rows()), true)?;
    d.ensure_unambiguous(policy)?;
    Ok(d)
}

/// Rank decision on an explicit route; ambiguity is reported in the result
/// rather than as an error.
pub fn decide_sparse(
    a: &SparseMatrix,
    policy: &RankPolicy,
    method: Method,
    want_basis: bool,
) -> Result<RankDecision, NumericsError> {
    match method {
        Method::DenseSvd => {
            let mut f = TriangularFactor::new(a.cols());
            f.push_rows(a, 0..a.rows())?;
            f.decide(policy, want_basis)
        }
        Method::Gram => {
            let mut f = GramFactor::new(a.cols());
            f.add_rows(a, 0..a.rows())?;
            f.decide(policy, want_basis)
        }
    }
}

/// Rank decision for a small dense matrix via a direct SVD.
pub fn rank_and_nullspace_dense(a: &DMatrix<f64>, policy: &RankPolicy) -> Result<RankDecision, NumericsError> {
    let d = decide_dense(a, policy)?;
    d.ensure_unambiguous(policy)?;
    Ok(d)
}

/// Like [`rank_and_nullspace_dense`] but never fails on ambiguity.
pub fn decide_dense(a: &DMatrix<f64>, policy: &RankPolicy) -> Result<RankDecision, NumericsError> {
    policy.validate()?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let (m, n) = a.shape();
    let mut buf = a.clone();
    let (sv, vt) = lapack::gesdd(m, n, buf.as_mut_slice(), true)?;
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let threshold = dense_threshold(sigma_max, m, n, policy);
    let mut d = RankDecision::from_singular_values(Method::DenseSvd, m, n, sv, threshold);
    let vt = DMatrix::from_vec(n, n, vt.expect("requested"));
    d.basis = Some(vt.rows(d.rank, n - d.rank).transpose());
    Ok(d)
}

/// Singular values of a dense matrix, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>, NumericsError> {
    let (m, n) = a.shape();
    let mut buf = a.clone();
    Ok(lapack::gesdd(m, n, buf.as_mut_slice(), false)?.0)
}

/// Symmetric eigendecomposition: eigenvalues in descending order and the
/// matching orthonormal eigenvectors as columns.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), NumericsError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(NumericsError::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(NumericsError::NotSymmetric(asym));
    }
    let mut buf = m.clone();
    let w = lapack::syevd(n, buf.as_mut_slice(), true)?;
    let values: Vec<f64> = w.iter().rev().copied().collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| buf[(i, n - 1 - j)]);
    Ok((values, vectors))
}

/// Eigenvalues only of a symmetric matrix, descending.
pub fn sym_eigvals(m: &DMatrix<f64>) -> Result<Vec<f64>, NumericsError> {
    let n = m.nrows();
    let mut buf = m.clone();
    let w = lapack::syevd(n, buf.as_mut_slice(), false)?;
    Ok(w.into_iter().rev().collect())
}

/// Eigenvalues and right eigenvectors (unit-norm columns) of a general
/// complex matrix, in LAPACK order.
pub fn complex_eig(m: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>), NumericsError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(NumericsError::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(NumericsError::NonFinite);
    }
    let mut buf = m.clone();
    let (w, vr) = lapack::zgeev(n, buf.as_mut_slice())?;
    Ok((w, DMatrix::from_vec(n, n, vr)))
}

/// Rank of a complex matrix, computed on its real 2n×2n embedding
/// `[[Re, −Im], [Im, Re]]` (whose rank is twice the complex rank).
pub fn complex_rank(m: &DMatrix<Complex64>, policy: &RankPolicy) -> Result<RankDecision, NumericsError> {
    let (r, c) = m.shape();
    let real = DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    decide_dense(&real, policy)
}
