//! Compressed sparse row matrices.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};

/// Rows handed to one rayon task in the row-parallel kernels.
const ROW_CHUNK: usize = 2048;

/// Real sparse matrix in CSR layout with sorted, duplicate-free column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking the storage invariants.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_len("csr row pointer", nrows + 1, row_ptr.len())?;
        check_len("csr values", col_idx.len(), values.len())?;
        if row_ptr[0] != 0 || row_ptr[nrows] != col_idx.len() {
            return Err(Error::InvalidArgument("csr row pointer does not span the column array".into()));
        }
        for r in 0..nrows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::InvalidArgument(format!("csr row pointer decreases at row {r}")));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "row {r}: column indices not strictly increasing"
                    )));
                }
            }
            if let Some(&c) = cols.last() {
                if c as usize >= ncols {
                    return Err(Error::InvalidArgument(format!("row {r}: column {c} out of range")));
                }
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c as u32);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Dense row-major copy. Intended for small matrices and test oracles.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d[r * self.ncols + c as usize] = v;
            }
        }
        d
    }

    pub fn from_dense(nrows: usize, ncols: usize, dense: &[f64]) -> Result<Self> {
        check_len("dense matrix", nrows * ncols, dense.len())?;
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..nrows {
            for c in 0..ncols {
                let v = dense[r * ncols + c];
                if v != 0.0 {
                    col_idx.push(c as u32);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }
    pub fn col_indices(&self) -> &[u32] {
        &self.col_idx
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Storage offset of entry `(r, c)` if it is structurally present.
    #[inline]
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b]
            .binary_search(&(c as u32))
            .ok()
            .map(|p| a + p)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |p| self.values[p])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("spmv input", self.ncols, x.len())?;
        let mut y = vec![0.0; self.nrows];
        self.mul_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` into a preallocated buffer. Lengths are only checked in debug builds.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        let row_ptr = &self.row_ptr;
        let cols = &self.col_idx;
        let vals = &self.values;
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(chunk, ys)| {
            let r0 = chunk * ROW_CHUNK;
            for (k, yr) in ys.iter_mut().enumerate() {
                let r = r0 + k;
                let mut s = 0.0;
                for p in row_ptr[r]..row_ptr[r + 1] {
                    s += vals[p] * x[cols[p] as usize];
                }
                *yr = s;
            }
        });
    }

    /// `y = A^T x` without materialising the transpose.
    pub fn transpose_spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("transpose spmv input", self.nrows, x.len())?;
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c as usize] += v * xr;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in increasing order, so each transposed row comes out sorted.
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = next[c as usize];
                col_idx[dst] = r as u32;
                values[dst] = v;
                next[c as usize] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse product `A B` (row-by-row Gustavson with a dense accumulator per task).
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        check_len("sparse product inner dimension", self.ncols, other.nrows)?;
        let n_out = other.ncols;
        // Few large tasks: each one owns a dense accumulator of the output width.
        let tasks = 4 * rayon::current_num_threads();
        let chunk = self.nrows.div_ceil(tasks).max(ROW_CHUNK);
        let chunks: Vec<(Vec<usize>, Vec<u32>, Vec<f64>)> = (0..self.nrows)
            .collect::<Vec<_>>()
            .par_chunks(chunk)
            .map(|rows| {
                let mut acc = vec![0.0f64; n_out];
                let mut mark = vec![usize::MAX; n_out];
                let mut touched: Vec<u32> = Vec::new();
                let mut lens = Vec::with_capacity(rows.len());
                let mut cols_out = Vec::new();
                let mut vals_out = Vec::new();
                for &r in rows {
                    touched.clear();
                    let (ac, av) = self.row(r);
                    for (&k, &a) in ac.iter().zip(av) {
                        let (bc, bv) = other.row(k as usize);
                        for (&j, &b) in bc.iter().zip(bv) {
                            let j = j as usize;
                            if mark[j] != r {
                                mark[j] = r;
                                acc[j] = 0.0;
                                touched.push(j as u32);
                            }
                            acc[j] += a * b;
                        }
                    }
                    touched.sort_unstable();
                    lens.push(touched.len());
                    for &j in &touched {
                        cols_out.push(j);
                        vals_out.push(acc[j as usize]);
                    }
                }
                (lens, cols_out, vals_out)
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let total: usize = chunks.iter().map(|c| c.1.len()).sum();
        let mut col_idx = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for (lens, cols, vals) in chunks {
            for l in lens {
                let last = *row_ptr.last().unwrap();
                row_ptr.push(last + l);
            }
            col_idx.extend_from_slice(&cols);
            values.extend_from_slice(&vals);
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: n_out,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Zeroes rows and columns of the flagged indices and puts 1 on their diagonal.
    /// The diagonal entry must be structurally present.
    pub fn constrain_symmetric(&mut self, fixed: &[bool]) -> Result<()> {
        check_len("constraint mask", self.nrows, fixed.len())?;
        if self.nrows != self.ncols {
            return Err(Error::InvalidArgument("constraints need a square matrix".into()));
        }
        for r in 0..self.nrows {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for p in a..b {
                let c = self.col_idx[p] as usize;
                if fixed[r] || fixed[c] {
                    self.values[p] = if r == c { 1.0 } else { 0.0 };
                }
            }
            if fixed[r] && self.position(r, r).is_none() {
                return Err(Error::InvalidArgument(format!("row {r} has no diagonal entry")));
            }
        }
        Ok(())
    }
}
