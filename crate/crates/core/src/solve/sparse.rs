//! Compressed sparse row storage for assembled systems.

use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; columns are sorted and
    /// duplicates summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if c >= ncols {
                    return Err(Error::invalid(format!("row {r} has column {c} >= {ncols}")));
                }
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows: indptr.len() - 1,
            ncols,
            indptr,
            indices,
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

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        idx.binary_search(&c).map_or(0.0, |p| val[p])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                let (idx, val) = self.row(r);
                idx.iter().zip(val).map(|(&c, v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, yr) in y.iter().enumerate().take(self.nrows) {
            let (idx, val) = self.row(r);
            for (&c, v) in idx.iter().zip(val) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Row `r` scaled in place by `s`.
    pub fn scale_row(&mut self, r: usize, s: f64) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        for v in &mut self.values[a..b] {
            *v *= s;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, v) in idx.iter().zip(val) {
                m[(r, c)] = *v;
            }
        }
        m
    }

    pub(crate) fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            trip.extend(idx.iter().zip(val).map(|(&c, &v)| Triplet::new(r, c, v)));
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }

    /// `A^T A` as a faer matrix.
    pub(crate) fn normal_matrix(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::new();
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&a, &va) in idx.iter().zip(val) {
                for (&b, &vb) in idx.iter().zip(val) {
                    trip.push(Triplet::new(a, b, va * vb));
                }
            }
        }
        SparseColMat::try_new_from_triplets(self.ncols, self.ncols, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}
