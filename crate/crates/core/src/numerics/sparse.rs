//! Compressed sparse row storage for the assembled linear systems.

use std::io::{self, BufRead, Write};
use std::ops::Range;

/// Row-major sparse matrix (CSR). Column indices within a row are strictly
/// increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

/// Incremental row-by-row CSR construction.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseBuilder {
    pub fn new(cols: usize) -> Self {
        assert!(cols <= u32::MAX as usize, "column count exceeds u32 index range");
        Self {
            cols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Append one row given as (column, value) pairs sorted by column.
    pub fn push_row(&mut self, entries: &[(u32, f64)]) {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        for &(c, v) in entries {
            debug_assert!((c as usize) < self.cols);
            self.col_idx.push(c);
            self.values.push(v);
        }
        self.row_ptr.push(self.col_idx.len());
    }

    /// Append all rows of another matrix with the same column count.
    pub fn append(&mut self, other: &SparseMatrix) {
        assert_eq!(other.cols, self.cols);
        let base = self.col_idx.len();
        self.col_idx.extend_from_slice(&other.col_idx);
        self.values.extend_from_slice(&other.values);
        self.row_ptr.extend(other.row_ptr[1..].iter().map(|p| p + base));
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn finish(self) -> SparseMatrix {
        SparseMatrix {
            rows: self.row_ptr.len() - 1,
            cols: self.cols,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values: self.values,
        }
    }
}

impl SparseMatrix {
    /// Build from unordered triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut builder = SparseBuilder::new(cols);
        let mut it = sorted.into_iter().peekable();
        let mut row_buf: Vec<(u32, f64)> = Vec::new();
        for r in 0..rows {
            row_buf.clear();
            while let Some(&(tr, tc, tv)) = it.peek() {
                if tr != r {
                    break;
                }
                assert!(tc < cols, "triplet column out of range");
                match row_buf.last_mut() {
                    Some(last) if last.0 as usize == tc => last.1 += tv,
                    _ => row_buf.push((tc as u32, tv)),
                }
                it.next();
            }
            builder.push_row(&row_buf);
        }
        assert!(it.next().is_none(), "triplet row out of range");
        builder.finish()
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut builder = SparseBuilder::new(m.ncols());
        let mut row = Vec::new();
        for r in 0..m.nrows() {
            row.clear();
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != 0.0 {
                    row.push((c as u32, v));
                }
            }
            builder.push_row(&row);
        }
        builder.finish()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Keep only the rows whose index satisfies `keep`.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> SparseMatrix {
        let mut builder = SparseBuilder::new(self.cols);
        let mut buf = Vec::new();
        for r in 0..self.rows {
            if keep(r) {
                buf.clear();
                let span = self.row_ptr[r]..self.row_ptr[r + 1];
                buf.extend(
                    self.col_idx[span.clone()]
                        .iter()
                        .copied()
                        .zip(self.values[span].iter().copied()),
                );
                builder.push_row(&buf);
            }
        }
        builder.finish()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Column-oriented copy of a row range: for every column, the (row, value)
    /// pairs in increasing row order. Row indices are absolute.
    pub(crate) fn columns_of(&self, range: Range<usize>) -> Vec<Vec<(u32, f64)>> {
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.cols];
        for r in range {
            for (c, v) in self.row(r) {
                cols[c].push((r as u32, v));
            }
        }
        cols
    }

    /// Text triplet export: a `#` header line with the given metadata, a
    /// `rows cols nnz` line, then one `row col value` line per stored entry.
    /// Values are written in shortest round-trip form.
    pub fn write_triplets<W: Write>(&self, mut out: W, header: &str) -> io::Result<()> {
        for line in header.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                writeln!(out, "{r} {c} {v:?}")?;
            }
        }
        Ok(())
    }

    /// Inverse of [`SparseMatrix::write_triplets`]; returns the header text too.
    pub fn read_triplets<R: BufRead>(input: R) -> io::Result<(Self, String)> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut header = String::new();
        let mut dims: Option<(usize, usize, usize)> = None;
        let mut triplets = Vec::new();
        for line in input.lines() {
            let line = line?;
            if let Some(h) = line.strip_prefix('#') {
                header.push_str(h.strip_prefix(' ').unwrap_or(h));
                header.push('\n');
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || parts.next().ok_or_else(|| bad("short line"));
            if dims.is_none() {
                let r = next()?.parse().map_err(|_| bad("bad row count"))?;
                let c = next()?.parse().map_err(|_| bad("bad col count"))?;
                let z = next()?.parse().map_err(|_| bad("bad nnz"))?;
                dims = Some((r, c, z));
                continue;
            }
            let r: usize = next()?.parse().map_err(|_| bad("bad row"))?;
            let c: usize = next()?.parse().map_err(|_| bad("bad col"))?;
            let v: f64 = next()?.parse().map_err(|_| bad("bad value"))?;
            triplets.push((r, c, v));
        }
        let (rows, cols, nnz) = dims.ok_or_else(|| bad("missing dimension line"))?;
        if triplets.len() != nnz {
            return Err(bad("nnz mismatch"));
        }
        if triplets.iter().any(|&(r, c, _)| r >= rows || c >= cols) {
            return Err(bad("index out of range"));
        }
        Ok((Self::from_triplets(rows, cols, &triplets), header))
    }
}
