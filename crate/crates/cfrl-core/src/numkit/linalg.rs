//! Dense vectors and row-major matrices over `f64`.

use serde::{Deserialize, Serialize};

use super::NumError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<(), NumError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(NumError::NonFinite { what: what.to_string() })
        }
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Cosine similarity; zero if either vector has zero norm.
    pub fn cosine(&self, other: &Vector) -> f64 {
        let na = self.norm();
        let nb = other.norm();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            self.dot(other) / (na * nb)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        debug_assert!(rows.iter().all(|row| row.len() == c));
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self * v`, requires `v.len() == cols`.
    pub fn matvec(&self, v: &Vector) -> Result<Vector, NumError> {
        if v.len() != self.cols {
            return Err(NumError::DimMismatch {
                what: "matvec".to_string(),
                expected: self.cols,
                got: v.len(),
            });
        }
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            out.push(self.row(r).iter().zip(v.as_slice()).map(|(a, b)| a * b).sum());
        }
        Ok(Vector(out))
    }

    /// `self^T * v`, requires `v.len() == rows`.
    pub fn matvec_transposed(&self, v: &Vector) -> Result<Vector, NumError> {
        if v.len() != self.rows {
            return Err(NumError::DimMismatch {
                what: "matvec_transposed".to_string(),
                expected: self.rows,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let vr = v.0[r];
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * vr;
            }
        }
        Ok(Vector(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_passes_through() {
        let m = Matrix::identity(3);
        let v = Vector(vec![1.0, -2.0, 0.5]);
        assert_eq!(m.matvec(&v).unwrap(), v);
    }

    #[test]
    fn matvec_dim_mismatch_is_error() {
        let m = Matrix::zeros(2, 3);
        assert!(m.matvec(&Vector::zeros(2)).is_err());
    }

    #[test]
    fn transposed_matvec_matches_manual() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let v = Vector(vec![1.0, 0.0, -1.0]);
        let out = m.matvec_transposed(&v).unwrap();
        assert_eq!(out, Vector(vec![-4.0, -4.0]));
    }
}
