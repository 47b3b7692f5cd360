//! Compressed sparse column matrices, order-independent assembly and the
//! direct solver wrapper.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{FsiError, Result};

/// Accumulates (row, col, value) contributions. Entries are summed in an order
/// fixed by (col, row, source, sequence), so the assembled matrix does not
/// depend on the order in which sources (elements, facets, segments) are visited.
#[derive(Debug, Clone)]
pub struct Assembler {
    nrows: usize,
    ncols: usize,
    source: u64,
    seq: u32,
    entries: Vec<(usize, usize, u64, u32, f64)>,
}

impl Assembler {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Assembler {
            nrows,
            ncols,
            source: 0,
            seq: 0,
            entries: Vec::new(),
        }
    }

    /// Starts contributions from a new source. Sources must be unique per assembly.
    pub fn begin_source(&mut self, source: u64) {
        self.source = source;
        self.seq = 0;
    }

    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, self.source, self.seq, val));
        self.seq += 1;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn finish(mut self) -> CscMatrix {
        self.entries.sort_unstable_by_key(|a| (a.1, a.0, a.2, a.3));
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, _, _, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr,
            row_idx,
            values,
        }
    }
}

/// Source-key namespaces so that different integral kinds never collide.
pub mod source {
    pub const VOLUME: u64 = 0;
    pub const GHOST: u64 = 1 << 40;
    pub const FLUID_FLUID: u64 = 2 << 40;
    pub const FLUID_SOLID: u64 = 3 << 40;
    pub const SOLID: u64 = 4 << 40;
    pub const DIAGONAL: u64 = 5 << 40;
    pub const PATCH: u64 = 1 << 36;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Assembler::new(n, n);
        for i in 0..n {
            a.add(i, i, 1.0);
        }
        a.finish()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * x[c];
            }
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                m[(self.row_idx[k], c)] += self.values[k];
            }
        }
        m
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut a = Assembler::new(self.ncols, self.nrows);
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                a.add(c, self.row_idx[k], self.values[k]);
            }
        }
        a.finish()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Submatrix with the given rows and columns (in the given order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CscMatrix {
        let mut row_map = vec![usize::MAX; self.nrows];
        for (i, &r) in rows.iter().enumerate() {
            row_map[r] = i;
        }
        let mut a = Assembler::new(rows.len(), cols.len());
        for (j, &c) in cols.iter().enumerate() {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = row_map[self.row_idx[k]];
                if r != usize::MAX {
                    a.add(r, j, self.values[k]);
                }
            }
        }
        a.finish()
    }

    /// Rows without any stored nonzero value.
    pub fn empty_rows(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nrows];
        for (k, &r) in self.row_idx.iter().enumerate() {
            if self.values[k] != 0.0 {
                seen[r] = true;
            }
        }
        (0..self.nrows).filter(|&r| !seen[r]).collect()
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &CscMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(FsiError::Solver {
                dof: None,
                reason: format!("matrix is {}x{}", a.nrows, a.ncols),
            });
        }
        if let Some(k) = a.values.iter().position(|v| !v.is_finite()) {
            return Err(FsiError::Solver {
                dof: Some(a.row_idx[k]),
                reason: "non-finite matrix entry".into(),
            });
        }
        if let Some(&r) = a.empty_rows().first() {
            return Err(FsiError::Solver {
                dof: Some(r),
                reason: "empty matrix row".into(),
            });
        }
        for c in 0..a.ncols {
            if (a.col_ptr[c]..a.col_ptr[c + 1]).all(|k| a.values[k] == 0.0) {
                return Err(FsiError::Solver {
                    dof: Some(c),
                    reason: "empty matrix column".into(),
                });
            }
        }
        let mut triplets = Vec::with_capacity(a.nnz());
        for c in 0..a.ncols {
            for k in a.col_ptr[c]..a.col_ptr[c + 1] {
                triplets.push(Triplet::new(a.row_idx[k], c, a.values[k]));
            }
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &triplets)
            .map_err(|e| FsiError::Solver {
                dof: None,
                reason: format!("{e:?}"),
            })?;
        let lu = m.sp_lu().map_err(|e| FsiError::Solver {
            dof: None,
            reason: format!("{e:?}"),
        })?;
        Ok(SparseLu { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = Mat::<f64>::zeros(self.n, 1);
        for i in 0..self.n {
            rhs[(i, 0)] = b[i];
        }
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if let Some(k) = out.iter().position(|v| !v.is_finite()) {
            return Err(FsiError::Solver {
                dof: Some(k),
                reason: "singular matrix (non-finite solution)".into(),
            });
        }
        Ok(out)
    }
}

/// Factorizes and solves `a x = b`, verifying the relative residual.
pub fn solve(a: &CscMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let x = SparseLu::factor(a)?.solve(b)?;
    let r = a.mul_vec(&x);
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rn = r
        .iter()
        .zip(b)
        .map(|(ri, bi)| (ri - bi) * (ri - bi))
        .sum::<f64>()
        .sqrt();
    if bn > 0.0 && rn > 1e-8 * bn {
        let worst = r
            .iter()
            .zip(b)
            .enumerate()
            .max_by(|x, y| (x.1 .0 - x.1 .1).abs().total_cmp(&(y.1 .0 - y.1 .1).abs()))
            .map(|(i, _)| i);
        return Err(FsiError::Solver {
            dof: worst,
            reason: format!("inaccurate solve, relative residual {:e}", rn / bn),
        });
    }
    Ok(x)
}
