//! Minimal dense square matrices. State spaces here have a handful of states,
//! so a flat row-major buffer beats pulling in a general linear-algebra crate.

use std::fmt;
use std::ops::{Index, IndexMut};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Matrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for l in 0..n {
                let a = self.data[i * n + l];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[l * n + j];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    /// `M^T V M`, the congruence used when propagating covariances through a
    /// linear map acting on row vectors.
    pub fn congruence(&self, v: &Matrix) -> Matrix {
        self.transpose().mul(&v.mul(self))
    }

    pub fn add_scaled(&mut self, other: &Matrix, factor: f64) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Row vector times matrix.
pub fn row_mul(row: &[f64], m: &Matrix) -> Vec<f64> {
    let n = m.dim();
    assert_eq!(row.len(), n);
    let mut out = vec![0.0; n];
    for (l, &p) in row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o += p * m[(l, j)];
        }
    }
    out
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.n).map(|i| self.row(i)).collect();
        f.debug_list().entries(rows).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_neutral() {
        let a = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]);
        assert_eq!(a.mul(&Matrix::identity(2)), a);
        assert_eq!(Matrix::identity(2).mul(&a), a);
    }

    #[test]
    fn row_mul_matches_matrix_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(row_mul(&[1.0, 0.0], &a), vec![1.0, 2.0]);
        assert_eq!(row_mul(&[0.5, 0.5], &a), vec![2.0, 3.0]);
    }

    #[test]
    fn congruence_by_hand() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let v = Matrix::identity(2);
        // M^T M = [[1,1],[1,2]]
        let c = m.congruence(&v);
        assert_eq!(c, Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0]]));
    }
}
