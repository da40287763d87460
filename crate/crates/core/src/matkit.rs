//! Small dense matrix algebra.
//!
//! Row-major `f64` matrices for dimensions up to ~16: arithmetic, symmetric
//! eigendecomposition by cyclic Jacobi rotations, SPD square roots, and
//! positive-semidefiniteness tests. Everything downstream (Riccati solvers,
//! Gaussian propagation, Bures distances) is built on this module.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: format!("{}x{} matrix with {} entries", rows, cols, data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NotFinite { what: "matrix entries".into() });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Mat::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// 1x1 matrix, handy in scalar test specs.
    pub fn scalar(v: f64) -> Self {
        Mat { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Mat {
        let data = self.data.iter().map(|a| a * s).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.data[i * self.cols + j] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// (M + M')/2.
    pub fn symmetrize(&self) -> Mat {
        assert!(self.is_square());
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        out
    }

    /// Frobenius norm of M - M'.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        self.sub(&self.transpose()).frobenius()
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.data[i * self.rows + i]).sum()
    }
}

/// Symmetric eigendecomposition M = V diag(lambda) V'.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, in the order of `eigenvalues`.
    pub eigenvectors: Mat,
}

fn check_symmetric(m: &Mat, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch { what: format!("{what}: not square") });
    }
    if !m.is_finite() {
        return Err(Error::NotFinite { what: what.into() });
    }
    let asym = m.asymmetry();
    if asym > 1e-12 * (1.0 + m.frobenius()) {
        return Err(Error::NotSymmetric { what: what.into(), asym });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(m: &Mat) -> Result<SymEig> {
    check_symmetric(m, "sym_eig input")?;
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = Mat::identity(n);
    let stop = 1e-15 * (1.0 + m.frobenius());

    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j).powi(2);
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= stop / (n as f64) {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/cols p and q of a, and columns p and q of v.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (a.get(i, i), i)).collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_col, (_, old_col)) in pairs.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new_col, v.get(k, *old_col));
        }
    }
    Ok(SymEig { eigenvalues, eigenvectors: vectors })
}

/// Symmetric positive-semidefinite square root.
///
/// Eigenvalues slightly below zero (within `-1e-10 * (1 + ||m||)`) are
/// clamped to zero before taking the root.
pub fn spd_sqrt(m: &Mat) -> Result<Mat> {
    let eig = sym_eig(m)?;
    let tol = 1e-10 * (1.0 + m.frobenius());
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &lam in &eig.eigenvalues {
        if lam < -tol {
            return Err(Error::NotPsd { what: "spd_sqrt input".into(), min_eig: lam });
        }
        roots.push(lam.max(0.0).sqrt());
    }
    let v = &eig.eigenvectors;
    Ok(v.mul(&Mat::diag(&roots)).mul(&v.transpose()))
}

/// Positive semidefiniteness test: min eigenvalue >= -tol * (1 + ||m||).
pub fn is_psd(m: &Mat, tol: f64) -> Result<bool> {
    let eig = sym_eig(m)?;
    let min = eig.eigenvalues[0];
    Ok(min >= -tol * (1.0 + m.frobenius()))
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(sym_eig(m)?.eigenvalues[0])
}

/// Inverse of a symmetric positive-definite matrix via eigendecomposition.
pub fn spd_inverse(m: &Mat) -> Result<Mat> {
    let eig = sym_eig(m)?;
    let min = eig.eigenvalues[0];
    if min <= 0.0 {
        return Err(Error::NotPsd { what: "spd_inverse input".into(), min_eig: min });
    }
    let inv: Vec<f64> = eig.eigenvalues.iter().map(|l| 1.0 / l).collect();
    let v = &eig.eigenvectors;
    Ok(v.mul(&Mat::diag(&inv)).mul(&v.transpose()))
}

// Small vector helpers used throughout the crate.

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn sym_eig_identity() {
        let eig = sym_eig(&Mat::identity(2)).unwrap();
        assert_close(eig.eigenvalues[0], 1.0, 1e-14);
        assert_close(eig.eigenvalues[1], 1.0, 1e-14);
    }

    #[test]
    fn sym_eig_diagonal() {
        let eig = sym_eig(&Mat::diag(&[3.0, -1.0])).unwrap();
        assert_close(eig.eigenvalues[0], -1.0, 1e-14);
        assert_close(eig.eigenvalues[1], 3.0, 1e-14);
    }

    #[test]
    fn sym_eig_two_by_two() {
        // [[2,1],[1,2]] has characteristic polynomial (2-l)^2 - 1, roots 1 and 3.
        let m = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let eig = sym_eig(&m).unwrap();
        assert_close(eig.eigenvalues[0], 1.0, 1e-12);
        assert_close(eig.eigenvalues[1], 3.0, 1e-12);
    }

    #[test]
    fn sym_eig_reconstructs() {
        let m = Mat::from_rows(&[&[4.0, 1.0, -2.0], &[1.0, 0.5, 0.3], &[-2.0, 0.3, 7.0]]);
        let eig = sym_eig(&m).unwrap();
        let v = &eig.eigenvectors;
        let rec = v.mul(&Mat::diag(&eig.eigenvalues)).mul(&v.transpose());
        assert!(rec.sub(&m).frobenius() <= 1e-12 * (1.0 + m.frobenius()));
        let vtv = v.transpose().mul(v);
        assert!(vtv.sub(&Mat::identity(3)).frobenius() <= 1e-12);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let m = Mat::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(sym_eig(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn spd_sqrt_identity_and_diag() {
        let s = spd_sqrt(&Mat::identity(3)).unwrap();
        assert!(s.sub(&Mat::identity(3)).frobenius() <= 1e-12);
        let s = spd_sqrt(&Mat::diag(&[4.0, 9.0])).unwrap();
        assert!(s.sub(&Mat::diag(&[2.0, 3.0])).frobenius() <= 1e-12);
    }

    #[test]
    fn spd_sqrt_two_by_two() {
        // Same eigenvectors as [[2,1],[1,2]], eigenvalues 1 and sqrt(3).
        let m = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let s = spd_sqrt(&m).unwrap();
        let eig = sym_eig(&s).unwrap();
        assert_close(eig.eigenvalues[0], 1.0, 1e-10);
        assert_close(eig.eigenvalues[1], 3.0_f64.sqrt(), 1e-10);
        assert!(s.mul(&s).sub(&m).frobenius() <= 1e-10);
    }

    #[test]
    fn spd_sqrt_rejects_indefinite() {
        let m = Mat::diag(&[1.0, -0.5]);
        assert!(matches!(spd_sqrt(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn is_psd_cases() {
        assert!(is_psd(&Mat::zeros(2, 2), 1e-9).unwrap());
        assert!(!is_psd(&Mat::diag(&[1.0, -0.1]), 1e-9).unwrap());
        // Congruence preserves psd: (I-S)' Qbar (I-S).
        let s = Mat::from_rows(&[&[0.3, -0.2], &[0.1, 0.9]]);
        let qbar = {
            let g = Mat::from_rows(&[&[1.0, 0.4], &[-0.6, 0.2]]);
            g.mul(&g.transpose())
        };
        let ims = Mat::identity(2).sub(&s);
        let m = ims.transpose().mul(&qbar).mul(&ims).symmetrize();
        assert!(is_psd(&m, 1e-9).unwrap());
    }

    #[test]
    fn spd_inverse_roundtrip() {
        let g = Mat::from_rows(&[&[2.0, 0.3], &[-0.4, 1.5]]);
        let m = g.mul(&g.transpose()).add(&Mat::identity(2));
        let inv = spd_inverse(&m).unwrap();
        assert!(m.mul(&inv).sub(&Mat::identity(2)).frobenius() <= 1e-12);
    }
}
