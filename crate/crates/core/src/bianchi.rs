//! The second-Bianchi linear system in the unknowns (K, Φ) and its nullspace.
//!
//! Unknowns: for every basis vector `e_z` a skew operator `K_z`, stored by
//! its strict upper triangle, and for every pair `i < j` a vector
//! `Φ(e_i, e_j)`. Equations, for every triple `i < j < k` with `(x, y, z)`
//! running over its cyclic permutations:
//!
//! ```text
//! Σ ( [ad_[x,y], K_z] + ad_[K_x y − K_y x, z] + Φ(x,y) ∧ z ) = 0   (upper triangle)
//! Σ ⟨Φ(x,y), z⟩ = 0
//! ```
//!
//! The restricted system adds `⟨K_z, ad_w⟩ = 0` for all `z, w`.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::algebra::{self, ad_basis, AlgebraError, AlgebraName, LieAlgebra};
use crate::numerics::{
    GramFactor, Method, NumericsError, RankDecision, RankPolicy, SparseBuilder, SparseMatrix, TriangularFactor,
};

/// Coefficients at or below this magnitude are not stored.
pub const DROP_TOL: f64 = 1e-14;

/// Largest algebra dimension accepted by the assembler.
pub const DEFAULT_ASSEMBLY_DIM_CAP: usize = 40;

#[derive(Debug, Error)]
pub enum BianchiError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("algebra dimension {n} exceeds the assembly cap {cap}")]
    DimensionCap { n: usize, cap: usize },
    #[error("algebra basis is not orthonormal (residual {0:.3e})")]
    NotOrthonormal(f64),
    #[error("vector has {got} entries, layout expects {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("estimated memory {needed} bytes exceeds the cap of {cap} bytes")]
    ResourceCap { needed: usize, cap: usize },
}

/// Column layout of the unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownLayout {
    pub n: usize,
}

impl UnknownLayout {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Number of pairs `a < b`.
    pub fn pairs(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn k_block_len(&self) -> usize {
        self.n * self.pairs()
    }

    pub fn phi_offset(&self) -> usize {
        self.k_block_len()
    }

    pub fn phi_block_len(&self) -> usize {
        self.pairs() * self.n
    }

    pub fn total_cols(&self) -> usize {
        self.n * self.n * (self.n - 1)
    }

    /// Index of the pair `a < b` in row-major order.
    #[inline]
    pub fn pair(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b && b < self.n);
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    /// Column of `(K_z)_{ab}`, `a < b`.
    #[inline]
    pub fn k_col(&self, z: usize, a: usize, b: usize) -> usize {
        z * self.pairs() + self.pair(a, b)
    }

    /// Column of component `c` of `Φ(e_i, e_j)`, `i < j`.
    #[inline]
    pub fn phi_col(&self, i: usize, j: usize, c: usize) -> usize {
        self.phi_offset() + self.pair(i, j) * self.n + c
    }

    fn check(&self, v: &[f64]) -> Result<(), BianchiError> {
        if v.len() == self.total_cols() {
            Ok(())
        } else {
            Err(BianchiError::LayoutMismatch {
                expected: self.total_cols(),
                got: v.len(),
            })
        }
    }

    /// Skew operators `K_z` and the vectors `Φ(e_i, e_j)` (i < j, pair order).
    pub fn decode(&self, v: &[f64]) -> Result<(Vec<DMatrix<f64>>, Vec<Vec<f64>>), BianchiError> {
        self.check(v)?;
        let n = self.n;
        let ks = (0..n)
            .map(|z| {
                let mut m = DMatrix::zeros(n, n);
                for a in 0..n {
                    for b in a + 1..n {
                        let x = v[self.k_col(z, a, b)];
                        m[(a, b)] = x;
                        m[(b, a)] = -x;
                    }
                }
                m
            })
            .collect();
        let phis = (0..self.pairs())
            .map(|p| v[self.phi_offset() + p * n..self.phi_offset() + (p + 1) * n].to_vec())
            .collect();
        Ok((ks, phis))
    }

    /// Inverse of [`UnknownLayout::decode`]; only upper triangles of `K_z` are read.
    pub fn encode(&self, ks: &[DMatrix<f64>], phis: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n;
        let mut v = vec![0.0; self.total_cols()];
        for (z, k) in ks.iter().enumerate() {
            for a in 0..n {
                for b in a + 1..n {
                    v[self.k_col(z, a, b)] = k[(a, b)];
                }
            }
        }
        for (p, phi) in phis.iter().enumerate() {
            v[self.phi_offset() + p * n..self.phi_offset() + (p + 1) * n].copy_from_slice(phi);
        }
        v
    }
}

/// Origin of a row of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowTag {
    Biad { i: u16, j: u16, k: u16, p: u16, q: u16 },
    CyclePhi { i: u16, j: u16, k: u16 },
    KPerpAd { z: u16, w: u16 },
}

impl RowTag {
    pub fn is_cycle_phi(&self) -> bool {
        matches!(self, RowTag::CyclePhi { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BianchiSystem {
    pub algebra: AlgebraName,
    pub layout: UnknownLayout,
    pub matrix: SparseMatrix,
    pub row_provenance: Vec<RowTag>,
    pub restricted: bool,
    /// Row count before structurally empty rows were skipped.
    pub nominal_rows: usize,
}

impl BianchiSystem {
    /// Sparse triplet text with the layout in the header.
    pub fn write_triplets<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let l = &self.layout;
        let header = format!(
            "algebra={}\nn={}\nrestricted={}\nnominal_rows={}\nk_block=[0,{})\nphi_block=[{},{})\n\
             k_col(z,a<b)=z*{}+pair(a,b)\nphi_col(i<j,c)={}+pair(i,j)*{}+c\npair(a,b)=a*(2n-a-1)/2+(b-a-1)",
            self.algebra,
            l.n,
            self.restricted,
            self.nominal_rows,
            l.k_block_len(),
            l.phi_offset(),
            l.total_cols(),
            l.pairs(),
            l.phi_offset(),
            l.n
        );
        self.matrix.write_triplets(out, &header)
    }

    /// Nominal row count: `C(n,3)·(n(n−1)/2 + 1)`, plus `n²` when restricted.
    pub fn nominal_row_count(n: usize, restricted: bool) -> usize {
        let triples = n * (n - 1) * (n - 2) / 6;
        triples * (n * (n - 1) / 2 + 1) + if restricted { n * n } else { 0 }
    }
}

/// Precomputed `ad_{[e_a, e_b]}` for all `a, b`, stored `[(a·n + b)·n² + p·n + q]`.
struct Context {
    n: usize,
    layout: UnknownLayout,
    adb: Vec<f64>,
}

impl Context {
    fn new(g: &LieAlgebra) -> Self {
        let n = g.dim();
        let ads = ad_basis(g);
        let mut adb = vec![0.0; n * n * n * n];
        for a in 0..n {
            for b in 0..n {
                let base = (a * n + b) * n * n;
                for m in 0..n {
                    let c = g.c(a, b, m);
                    if c == 0.0 {
                        continue;
                    }
                    for p in 0..n {
                        for q in 0..n {
                            adb[base + p * n + q] += c * ads[m][(p, q)];
                        }
                    }
                }
            }
        }
        Self {
            n,
            layout: UnknownLayout::new(n),
            adb,
        }
    }

    #[inline]
    fn adb(&self, a: usize, b: usize, p: usize, q: usize) -> f64 {
        self.adb[(a * self.n + b) * self.n * self.n + p * self.n + q]
    }
}

fn triples(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::with_capacity(n * (n - 1) * (n - 2) / 6);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.push((i, j, k));
            }
        }
    }
    out
}

/// Rows of one triple as (tag, sorted entries).
fn triple_rows(ctx: &Context, (i, j, k): (usize, usize, usize)) -> Vec<(RowTag, Vec<(u32, f64)>)> {
    let n = ctx.n;
    let l = &ctx.layout;
    let perms = [(i, j, k), (j, k, i), (k, i, j)];
    let mut out = Vec::with_capacity(l.pairs() + 1);
    let mut acc: Vec<(usize, f64)> = Vec::with_capacity(32 * n);

    // Signed column of (K_z)_{ab}.
    let kc = |z: usize, a: usize, b: usize| -> Option<(usize, f64)> {
        if a < b {
            Some((l.k_col(z, a, b), 1.0))
        } else if a > b {
            Some((l.k_col(z, b, a), -1.0))
        } else {
            None
        }
    };
    // Signed column of component c of Φ(e_x, e_y).
    let pc = |x: usize, y: usize, c: usize| -> (usize, f64) {
        if x < y {
            (l.phi_col(x, y, c), 1.0)
        } else {
            (l.phi_col(y, x, c), -1.0)
        }
    };

    for p in 0..n {
        for q in p + 1..n {
            acc.clear();
            for &(x, y, z) in &perms {
                // [A, K_z]_{pq} = Σ_r A_pr (K_z)_rq − (K_z)_pr A_rq with A = ad_[x,y].
                for r in 0..n {
                    let a_pr = ctx.adb(x, y, p, r);
                    if a_pr != 0.0 {
                        if let Some((c, s)) = kc(z, r, q) {
                            acc.push((c, s * a_pr));
                        }
                    }
                    let a_rq = ctx.adb(x, y, r, q);
                    if a_rq != 0.0 {
                        if let Some((c, s)) = kc(z, p, r) {
                            acc.push((c, -s * a_rq));
                        }
                    }
                }
                // ad_[V, z] with V_a = (K_x)_{ay} − (K_y)_{ax}.
                for a in 0..n {
                    let b = ctx.adb(a, z, p, q);
                    if b == 0.0 {
                        continue;
                    }
                    if let Some((c, s)) = kc(x, a, y) {
                        acc.push((c, s * b));
                    }
                    if let Some((c, s)) = kc(y, a, x) {
                        acc.push((c, -s * b));
                    }
                }
                // (Φ(x,y) ∧ e_z)_{pq} = δ_zp Φ_q − Φ_p δ_zq.
                if z == p {
                    let (c, s) = pc(x, y, q);
                    acc.push((c, s));
                }
                if z == q {
                    let (c, s) = pc(x, y, p);
                    acc.push((c, -s));
                }
            }
            if let Some(row) = finish_row(&mut acc) {
                out.push((
                    RowTag::Biad {
                        i: i as u16,
                        j: j as u16,
                        k: k as u16,
                        p: p as u16,
                        q: q as u16,
                    },
                    row,
                ));
            }
        }
    }
    acc.clear();
    acc.push(pc(i, j, k));
    acc.push(pc(j, k, i));
    acc.push(pc(k, i, j));
    if let Some(row) = finish_row(&mut acc) {
        out.push((
            RowTag::CyclePhi {
                i: i as u16,
                j: j as u16,
                k: k as u16,
            },
            row,
        ));
    }
    out
}

/// Sort by column, sum duplicates, drop negligible entries.
fn finish_row(acc: &mut [(usize, f64)]) -> Option<Vec<(u32, f64)>> {
    acc.sort_by_key(|e| e.0);
    let mut row: Vec<(u32, f64)> = Vec::with_capacity(acc.len());
    for &(c, v) in acc.iter() {
        match row.last_mut() {
            Some(last) if last.0 as usize == c => last.1 += v,
            _ => row.push((c as u32, v)),
        }
    }
    row.retain(|e| e.1.abs() > DROP_TOL);
    (!row.is_empty()).then_some(row)
}

/// Rows `⟨K_z, ad_w⟩ = 2 Σ_{a<b} (K_z)_ab (ad_w)_ab = 0`.
fn restriction_rows(g: &LieAlgebra, layout: &UnknownLayout) -> Vec<(RowTag, Vec<(u32, f64)>)> {
    let n = g.dim();
    let ads = ad_basis(g);
    let mut out = Vec::with_capacity(n * n);
    for z in 0..n {
        for (w, adw) in ads.iter().enumerate() {
            let mut acc = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    acc.push((layout.k_col(z, a, b), 2.0 * adw[(a, b)]));
                }
            }
            if let Some(row) = finish_row(&mut acc) {
                out.push((
                    RowTag::KPerpAd {
                        z: z as u16,
                        w: w as u16,
                    },
                    row,
                ));
            }
        }
    }
    out
}

fn check_input(g: &LieAlgebra, cap: usize) -> Result<(), BianchiError> {
    let n = g.dim();
    if n > cap {
        return Err(BianchiError::DimensionCap { n, cap });
    }
    let r = algebra::orthonormality_residual(g);
    if !(r <= 1e-10) {
        return Err(BianchiError::NotOrthonormal(r));
    }
    Ok(())
}

fn build(rows: Vec<(RowTag, Vec<(u32, f64)>)>, cols: usize) -> (SparseMatrix, Vec<RowTag>) {
    let mut b = SparseBuilder::new(cols);
    let mut tags = Vec::with_capacity(rows.len());
    for (t, r) in rows {
        b.push_row(&r);
        tags.push(t);
    }
    (b.finish(), tags)
}

/// Rows of the triples in `range` (indices into the lexicographic triple list).
fn assemble_chunk(ctx: &Context, ts: &[(usize, usize, usize)]) -> (SparseMatrix, Vec<RowTag>) {
    let rows: Vec<_> = ts.par_iter().flat_map_iter(|&t| triple_rows(ctx, t)).collect();
    build(rows, ctx.layout.total_cols())
}

pub fn assemble_system(g: &LieAlgebra, restricted: bool) -> Result<BianchiSystem, BianchiError> {
    assemble_system_capped(g, restricted, DEFAULT_ASSEMBLY_DIM_CAP)
}

/// Assemble the full system. Triples are processed in parallel; rows are
/// emitted in lexicographic triple order, so the output does not depend on
/// the thread count.
pub fn assemble_system_capped(g: &LieAlgebra, restricted: bool, cap: usize) -> Result<BianchiSystem, BianchiError> {
    check_input(g, cap)?;
    let ctx = Context::new(g);
    let ts = triples(g.dim());
    let mut rows: Vec<_> = ts.par_iter().flat_map_iter(|&t| triple_rows(&ctx, t)).collect();
    if restricted {
        rows.extend(restriction_rows(g, &ctx.layout));
    }
    let (matrix, row_provenance) = build(rows, ctx.layout.total_cols());
    Ok(BianchiSystem {
        algebra: g.name(),
        layout: ctx.layout,
        matrix,
        row_provenance,
        restricted,
        nominal_rows: BianchiSystem::nominal_row_count(g.dim(), restricted),
    })
}

/// Equation values computed directly from the algebra primitives, in the
/// same row order as [`assemble_system`] (including rows that the assembler
/// skips as structurally empty, which evaluate to zero).
pub fn evaluate_equations(g: &LieAlgebra, v: &[f64]) -> Result<Vec<(RowTag, f64)>, BianchiError> {
    let n = g.dim();
    let layout = UnknownLayout::new(n);
    let (ks, phis) = layout.decode(v)?;
    let phi = |x: usize, y: usize| -> Vec<f64> {
        if x < y {
            phis[layout.pair(x, y)].clone()
        } else {
            phis[layout.pair(y, x)].iter().map(|t| -t).collect()
        }
    };
    let mut out = Vec::new();
    for (i, j, k) in triples(n) {
        let op = biad_operator(g, &ks, &phi, i, j, k)?;
        for p in 0..n {
            for q in p + 1..n {
                out.push((
                    RowTag::Biad {
                        i: i as u16,
                        j: j as u16,
                        k: k as u16,
                        p: p as u16,
                        q: q as u16,
                    },
                    op[(p, q)],
                ));
            }
        }
        let cyc = phi(i, j)[k] + phi(j, k)[i] + phi(k, i)[j];
        out.push((
            RowTag::CyclePhi {
                i: i as u16,
                j: j as u16,
                k: k as u16,
            },
            cyc,
        ));
    }
    Ok(out)
}

/// Full operator value of the cyclic sum for one triple.
pub fn biad_operator(
    g: &LieAlgebra,
    ks: &[DMatrix<f64>],
    phi: &dyn Fn(usize, usize) -> Vec<f64>,
    i: usize,
    j: usize,
    k: usize,
) -> Result<DMatrix<f64>, BianchiError> {
    let n = g.dim();
    let e = |i: usize| {
        let mut x = vec![0.0; n];
        x[i] = 1.0;
        x
    };
    let mut total = DMatrix::zeros(n, n);
    for (x, y, z) in [(i, j, k), (j, k, i), (k, i, j)] {
        let a = algebra::ad(g, &algebra::bracket(g, &e(x), &e(y))?)?.entries;
        total += &a * &ks[z] - &ks[z] * &a;
        let kx_y: Vec<f64> = ks[x].column(y).iter().copied().collect();
        let ky_x: Vec<f64> = ks[y].column(x).iter().copied().collect();
        let v: Vec<f64> = kx_y.iter().zip(&ky_x).map(|(p, q)| p - q).collect();
        total += algebra::ad(g, &algebra::bracket(g, &v, &e(z))?)?.entries;
        total += algebra::wedge(g, &phi(x, y), &e(z))?.entries;
    }
    Ok(total)
}

/// Unknown vector of the solution `K_Z = ad_{A Z}`, `Φ = 0`.
pub fn known_solution(g: &LieAlgebra, a: &DMatrix<f64>) -> Vec<f64> {
    let n = g.dim();
    let layout = UnknownLayout::new(n);
    let ads = ad_basis(g);
    let ks: Vec<DMatrix<f64>> = (0..n)
        .map(|z| {
            let mut m = DMatrix::zeros(n, n);
            for (w, adw) in ads.iter().enumerate() {
                m += adw * a[(w, z)];
            }
            m
        })
        .collect();
    layout.encode(&ks, &vec![vec![0.0; n]; layout.pairs()])
}

/// Norm of the Φ block and norm of the part of K orthogonal to Hom(g, ad(g)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub phi_norm: f64,
    pub k_ad_residual: f64,
}

pub fn classify_solution(g: &LieAlgebra, layout: &UnknownLayout, v: &[f64]) -> Result<Classification, BianchiError> {
    if layout.n != g.dim() {
        return Err(BianchiError::LayoutMismatch {
            expected: layout.n,
            got: g.dim(),
        });
    }
    let (ks, phis) = layout.decode(v)?;
    let phi_norm = phis.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut perp = 0.0;
    for k in ks {
        let (_, rest) = algebra::project_ad(g, &algebra::Operator::new(k, g.basis_tag()))?;
        perp += rest.entries.norm_squared();
    }
    Ok(Classification {
        phi_norm,
        k_ad_residual: perp.sqrt(),
    })
}

fn ser_gap<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Outcome of a nullspace computation. `sv_gap` serializes as `null` when
/// infinite.
#[derive(Debug, Clone, Serialize)]
pub struct NullspaceReport {
    pub algebra: AlgebraName,
    pub restricted: bool,
    pub dimension: usize,
    #[serde(serialize_with = "ser_gap")]
    pub sv_gap: f64,
    pub ambiguous: bool,
    pub threshold_rank: usize,
    pub gap_rank: usize,
    pub method: Method,
    pub rows: usize,
    pub nominal_rows: usize,
    pub cols: usize,
    pub sigma_max: f64,
    pub threshold: f64,
    pub smallest_kept: Option<f64>,
    pub largest_discarded: Option<f64>,
    pub max_phi_norm: f64,
    #[serde(rename = "max_K_ad_residual")]
    pub max_k_ad_residual: f64,
    /// Largest `‖A b‖ / ‖A‖_F` over basis vectors.
    pub max_relative_residual: f64,
    /// Largest deviation of `BᵀB` from the identity.
    pub basis_orthonormality: f64,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub basis: Option<DMatrix<f64>>,
    #[serde(skip)]
    pub classification: Vec<Classification>,
}

/// Options for nullspace computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullspaceOptions {
    pub policy: RankPolicy,
    /// Route override; by default the policy's row cutoff decides.
    pub method: Option<Method>,
    /// Bound on the memory estimate of the factorization.
    pub memory_cap_bytes: Option<usize>,
    /// Tolerance on Φ-norms and K-ad residuals.
    pub classification_tol: f64,
}

impl Default for NullspaceOptions {
    fn default() -> Self {
        Self {
            policy: RankPolicy::default(),
            method: None,
            memory_cap_bytes: None,
            classification_tol: 1e-8,
        }
    }
}

/// Rough peak memory of a factorization with `cols` unknowns.
pub fn memory_estimate(method: Method, cols: usize) -> usize {
    let sq = cols * cols * std::mem::size_of::<f64>();
    match method {
        // R, its SVD copy, Vᵀ and the divide-and-conquer workspace.
        Method::DenseSvd => 6 * sq,
        // G, the eigensolver copy and its workspace.
        Method::Gram => 4 * sq,
    }
}

enum Factor {
    Dense(TriangularFactor),
    Gram(GramFactor),
}

impl Factor {
    fn new(method: Method, cols: usize, cap: Option<usize>) -> Result<Self, BianchiError> {
        let needed = memory_estimate(method, cols);
        if let Some(cap) = cap {
            if needed > cap {
                return Err(BianchiError::ResourceCap { needed, cap });
            }
        }
        Ok(match method {
            Method::DenseSvd => Factor::Dense(TriangularFactor::new(cols)),
            Method::Gram => Factor::Gram(GramFactor::new(cols)),
        })
    }

    fn push(&mut self, a: &SparseMatrix) -> Result<(), NumericsError> {
        match self {
            Factor::Dense(f) => f.push_rows(a, 0..a.rows()),
            Factor::Gram(f) => f.add_rows(a, 0..a.rows()),
        }
    }

    fn decide(&self, policy: &RankPolicy, want_basis: bool) -> Result<RankDecision, NumericsError> {
        match self {
            Factor::Dense(f) => f.decide(policy, want_basis),
            Factor::Gram(f) => f.decide(policy, want_basis),
        }
    }
}

/// Per-basis-vector diagnostics shared by all routes.
fn finish_report(
    g: &LieAlgebra,
    restricted: bool,
    d: RankDecision,
    norm_sq: f64,
    products: &DMatrix<f64>,
    nominal_rows: usize,
    policy: &RankPolicy,
    started: Instant,
) -> Result<NullspaceReport, BianchiError> {
    let layout = UnknownLayout::new(g.dim());
    let basis = d
        .basis
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(layout.total_cols(), 0));
    let k = basis.ncols();
    let mut classification = Vec::with_capacity(k);
    for c in 0..k {
        let v: Vec<f64> = basis.column(c).iter().copied().collect();
        classification.push(classify_solution(g, &layout, &v)?);
    }
    let a_norm = norm_sq.sqrt();
    let max_rel = (0..products.ncols())
        .map(|c| products.column(c).norm() / a_norm)
        .fold(0.0, f64::max);
    let ortho = if k == 0 {
        0.0
    } else {
        (basis.transpose() * &basis - DMatrix::identity(k, k)).amax()
    };
    Ok(NullspaceReport {
        algebra: g.name(),
        restricted,
        dimension: d.nullity(),
        sv_gap: d.sv_gap,
        ambiguous: d.is_ambiguous(policy),
        threshold_rank: d.rank,
        gap_rank: d.gap_rank,
        method: d.method,
        rows: d.rows,
        nominal_rows,
        cols: d.cols,
        sigma_max: d.sigma_max(),
        threshold: d.threshold,
        smallest_kept: d.smallest_kept(),
        largest_discarded: d.largest_discarded(),
        max_phi_norm: classification.iter().map(|c| c.phi_norm).fold(0.0, f64::max),
        max_k_ad_residual: classification.iter().map(|c| c.k_ad_residual).fold(0.0, f64::max),
        max_relative_residual: max_rel,
        basis_orthonormality: ortho,
        wall_time_s: started.elapsed().as_secs_f64(),
        basis: d.basis,
        classification,
    })
}

/// `A·B` for a sparse `A` and dense `B`.
fn sparse_times(a: &SparseMatrix, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.rows(), b.ncols());
    for r in 0..a.rows() {
        for (c, v) in a.row(r) {
            for j in 0..b.ncols() {
                out[(r, j)] += v * b[(c, j)];
            }
        }
    }
    out
}

fn products_norm(a: &SparseMatrix, basis: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    match basis {
        Some(b) if b.ncols() > 0 => {
            // Only column norms are needed: keep one row of squared norms.
            let p = sparse_times(a, b);
            DMatrix::from_fn(1, b.ncols(), |_, j| p.column(j).norm())
        }
        _ => DMatrix::zeros(1, 0),
    }
}

/// Nullspace of an assembled system.
pub fn nullspace(
    g: &LieAlgebra,
    sys: &BianchiSystem,
    opts: &NullspaceOptions,
) -> Result<NullspaceReport, BianchiError> {
    let started = Instant::now();
    if sys.layout.n != g.dim() {
        return Err(BianchiError::LayoutMismatch {
            expected: sys.layout.n,
            got: g.dim(),
        });
    }
    let method = opts.method.unwrap_or_else(|| opts.policy.method_for(sys.matrix.rows()));
    let mut f = Factor::new(method, sys.layout.total_cols(), opts.memory_cap_bytes)?;
    f.push(&sys.matrix)?;
    let d = f.decide(&opts.policy, true)?;
    let prods = products_norm(&sys.matrix, d.basis.as_ref());
    let fro = sys.matrix.frobenius_norm();
    finish_report(
        g,
        sys.restricted,
        d,
        fro * fro,
        &prods,
        sys.nominal_rows,
        &opts.policy,
        started,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropositionStatus {
    Pass,
    Fail,
    OutsideHypothesis,
    Ambiguous,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropositionReport {
    pub algebra: AlgebraName,
    pub n: usize,
    pub expected_unrestricted: usize,
    pub status: PropositionStatus,
    pub unrestricted: NullspaceReport,
    pub restricted: NullspaceReport,
    pub assembly_wall_time_s: f64,
    pub nnz: usize,
}

/// Assemble both systems, compute both nullspaces and compare them with the
/// predicted dimensions `n²` and `0`. The restricted factorization reuses the
/// unrestricted one and only folds in the appended rows.
pub fn verify_proposition(g: &LieAlgebra, opts: &NullspaceOptions) -> Result<PropositionReport, BianchiError> {
    let t0 = Instant::now();
    check_input(g, DEFAULT_ASSEMBLY_DIM_CAP)?;
    let n = g.dim();
    let layout = UnknownLayout::new(n);
    let ctx = Context::new(g);
    let ts = triples(n);
    let nominal = BianchiSystem::nominal_row_count(n, false);

    // Pass 1: assemble in chunks and fold into the factor.
    let expected_rows = nominal;
    let method = opts.method.unwrap_or_else(|| opts.policy.method_for(expected_rows));
    let mut factor = Factor::new(method, layout.total_cols(), opts.memory_cap_bytes)?;
    let chunk = 256.max(ts.len() / 16);
    let mut norm_sq = 0.0;
    let mut nnz = 0;
    let mut assembly = 0.0;
    let mut chunks_kept: Vec<SparseMatrix> = Vec::new();
    let keep = method == Method::DenseSvd;
    for part in ts.chunks(chunk) {
        let ta = Instant::now();
        let (m, _) = assemble_chunk(&ctx, part);
        assembly += ta.elapsed().as_secs_f64();
        norm_sq += m.frobenius_norm().powi(2);
        nnz += m.nnz();
        factor.push(&m)?;
        if keep {
            chunks_kept.push(m);
        }
    }
    let d = factor.decide(&opts.policy, true)?;
    let residuals = |basis: Option<&DMatrix<f64>>, extra: Option<&SparseMatrix>, kept: &[SparseMatrix]| {
        let Some(b) = basis.filter(|b| b.ncols() > 0) else {
            return DMatrix::zeros(1, 0);
        };
        let mut sq = vec![0.0; b.ncols()];
        let mut add = |m: &SparseMatrix| {
            let p = sparse_times(m, b);
            for (j, s) in sq.iter_mut().enumerate() {
                *s += p.column(j).norm_squared();
            }
        };
        if kept.is_empty() {
            for part in ts.chunks(chunk) {
                add(&assemble_chunk(&ctx, part).0);
            }
        } else {
            kept.iter().for_each(&mut add);
        }
        if let Some(x) = extra {
            add(x);
        }
        DMatrix::from_fn(1, b.ncols(), |_, j| sq[j].sqrt())
    };
    let prods = residuals(d.basis.as_ref(), None, &chunks_kept);
    let unrestricted = finish_report(g, false, d, norm_sq, &prods, nominal, &opts.policy, t0)?;

    // Pass 2: append the restriction rows to the same factor.
    let t1 = Instant::now();
    let (extra, _) = build(restriction_rows(g, &layout), layout.total_cols());
    factor.push(&extra)?;
    let extra_sq = extra.frobenius_norm().powi(2);
    let d = factor.decide(&opts.policy, false)?;
    let d = if d.nullity() > 0 {
        factor.decide(&opts.policy, true)?
    } else {
        d
    };
    let prods = residuals(d.basis.as_ref(), Some(&extra), &chunks_kept);
    let restricted = finish_report(
        g,
        true,
        d,
        norm_sq + extra_sq,
        &prods,
        BianchiSystem::nominal_row_count(n, true),
        &opts.policy,
        t1,
    )?;

    let tol = opts.classification_tol;
    let status = if unrestricted.ambiguous || restricted.ambiguous {
        PropositionStatus::Ambiguous
    } else if g.below_hypothesis() {
        PropositionStatus::OutsideHypothesis
    } else if unrestricted.dimension == n * n
        && restricted.dimension == 0
        && unrestricted.max_phi_norm <= tol
        && unrestricted.max_k_ad_residual <= tol
    {
        PropositionStatus::Pass
    } else {
        PropositionStatus::Fail
    };
    Ok(PropositionReport {
        algebra: g.name(),
        n,
        expected_unrestricted: n * n,
        status,
        unrestricted,
        restricted,
        assembly_wall_time_s: assembly,
        nnz,
    })
}
