//! Dense square matrices.
//!
//! Storage is row-major. The norm used throughout is the operator norm
//! induced by the max norm on `R^n`, i.e. the maximum absolute row sum.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        check_finite(values)?;
        let mut m = Matrix::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = v;
        }
        Ok(m)
    }

    /// Builds a matrix from row-major data of length `dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Matrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::invalid(format!(
                "matrix is not square: row {bad} has {} entries, expected {dim}",
                rows[bad].len()
            )));
        }
        Matrix::from_row_major(dim, rows.concat())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Max absolute row sum.
    pub fn norm(&self) -> f64 {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Matrix { dim: n, data: out }
    }

    /// `out += self * x`
    #[inline]
    pub fn mul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.data[i * n..(i + 1) * n];
            let mut s = 0.0;
            for (a, b) in row.iter().zip(x) {
                s += a * b;
            }
            *o += s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_acc(x, &mut out);
        out
    }

    /// Entrywise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("non-finite matrix entry at index {i}"))),
        None => Ok(()),
    }
}

fn check_same_dim(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    Ok(())
}

/// Max row-sum norm, rejecting non-finite entries.
pub fn mat_norm(m: &Matrix) -> Result<f64> {
    check_finite(&m.data)?;
    Ok(m.norm())
}

/// `[A, B] = AB - BA`
pub fn commutator(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_same_dim(a, b)?;
    Ok(a.matmul(b) - b.matmul(a))
}

/// `A^k` by repeated squaring, with `A^0 = I`.
pub fn mat_pow(a: &Matrix, mut k: u32) -> Matrix {
    let mut result = Matrix::identity(a.dim);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = result.matmul(&base);
        }
        k >>= 1;
        if k > 0 {
            base = base.matmul(&base);
        }
    }
    result
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.dim, rhs.dim);
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    fn sub(self, rhs: Matrix) -> Matrix {
        &self - &rhs
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.dim, rhs.dim);
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sec6_a() -> Matrix {
        Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap()
    }

    fn sec6_b() -> Matrix {
        Matrix::from_rows(&[vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap()
    }

    #[test]
    fn norm_is_max_row_sum() {
        assert!((mat_norm(&sec6_a()).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(mat_norm(&Matrix::identity(2)).unwrap(), 1.0);
        assert_eq!(mat_norm(&Matrix::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(matches!(
            Matrix::from_row_major(1, vec![f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        let m = Matrix {
            dim: 1,
            data: vec![f64::INFINITY],
        };
        assert!(mat_norm(&m).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn sec6_commutator() {
        // AB = [[0.08,0.07],[0.20,0.15]], BA = [[0.07,0.12],[0.11,0.16]]
        let c = commutator(&sec6_a(), &sec6_b()).unwrap();
        let expected = Matrix::from_rows(&[vec![0.01, -0.05], vec![0.09, -0.01]]).unwrap();
        assert!(c.max_abs_diff(&expected) < 1e-15);
        assert!(!c.is_zero());
    }

    #[test]
    fn trivial_commutators() {
        let a = sec6_a();
        assert!(commutator(&a, &a).unwrap().is_zero());
        assert!(commutator(&a, &Matrix::identity(2)).unwrap().is_zero());
        assert!(commutator(&a, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn powers() {
        let a = sec6_a();
        assert_eq!(mat_pow(&a, 0), Matrix::identity(2));
        assert_eq!(mat_pow(&Matrix::identity(2), 7), Matrix::identity(2));
        let nil = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(mat_pow(&nil, 2).is_zero());
        let cube = a.matmul(&a).matmul(&a);
        assert!(mat_pow(&a, 3).max_abs_diff(&cube) < 1e-15);
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-5.0f64..5.0, n * n)
            .prop_map(move |d| Matrix::from_row_major(n, d).unwrap())
    }

    proptest! {
        #[test]
        fn submultiplicative(a in arb_matrix(3), b in arb_matrix(3)) {
            prop_assert!(a.matmul(&b).norm() <= a.norm() * b.norm() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn triangle_inequality(a in arb_matrix(4), b in arb_matrix(4)) {
            prop_assert!((&a + &b).norm() <= a.norm() + b.norm() + 1e-12);
        }

        #[test]
        fn commutator_antisymmetric(a in arb_matrix(3), b in arb_matrix(3)) {
            let ab = commutator(&a, &b).unwrap();
            let ba = commutator(&b, &a).unwrap();
            prop_assert!(ab.max_abs_diff(&ba.scale(-1.0)) == 0.0);
        }
    }
}
