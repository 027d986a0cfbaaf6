use crate::error::{Error, Result};

use super::Tensor;

/// Compressed-sparse-row matrix used as a constant left operand.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = entries.iter().find(|&&(i, j, _)| i >= rows || j >= cols) {
            return Err(Error::shape("sparse_from_triplets", &[rows, cols], &[i, j]));
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; rows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((i, j));
            indptr[i + 1] += 1;
            indices.push(j);
            values.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
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

    /// Stored `(column, value)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut data = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                data[i * self.cols + j] = v;
            }
        }
        Tensor::matrix(self.rows, self.cols, data).expect("dims match")
    }

    /// `S · B` for row-major `b` with `n` columns.
    pub(crate) fn mul_dense(&self, b: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * n];
        for i in 0..self.rows {
            let dst = &mut out[i * n..(i + 1) * n];
            for (j, v) in self.row(i) {
                for (o, x) in dst.iter_mut().zip(&b[j * n..(j + 1) * n]) {
                    *o += v * x;
                }
            }
        }
        out
    }

    /// `Sᵀ · G` for row-major `g` with `n` columns.
    pub(crate) fn t_mul_dense(&self, g: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cols * n];
        for i in 0..self.rows {
            let src = &g[i * n..(i + 1) * n];
            for (j, v) in self.row(i) {
                for (o, x) in out[j * n..(j + 1) * n].iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        out
    }
}
