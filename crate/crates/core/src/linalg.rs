//! Small dense complex least squares.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns<C: AsRef<[Complex64]>>(rows: usize, columns: &[C]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for (k, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != rows {
                return Err(Error::Input(format!(
                    "column {k} has {} rows, expected {rows}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.rows + row]
    }

    pub fn column(&self, col: usize) -> &[Complex64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for (c, &xc) in x.iter().enumerate().take(self.cols) {
            for (o, &a) in out.iter_mut().zip(self.column(c)) {
                *o += a * xc;
            }
        }
        out
    }
}

/// Result of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<Complex64>,
    /// `z - A c`, evaluated explicitly.
    pub residual: Vec<Complex64>,
    pub residual_norm: f64,
}

pub(crate) fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `sum conj(a_i) b_i`
pub fn inner_product(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    inner(a, b)
}

#[inline]
pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Relative size of a Householder pivot below which the column is treated
/// as linearly dependent on the previous ones.
const RANK_TOLERANCE: f64 = 1e-10;

/// Minimizes `||z - columns * c||_2` by Householder QR.
pub fn least_squares_on_support(z: &[Complex64], columns: &CMatrix) -> Result<LeastSquares> {
    let (m, k) = (columns.rows, columns.cols);
    if z.len() != m {
        return Err(Error::Input(format!(
            "measurement has {} entries, matrix has {m} rows",
            z.len()
        )));
    }
    if k > m {
        return Err(Error::Input(format!(
            "{k} columns exceed {m} rows; system is underdetermined"
        )));
    }

    let mut a = columns.data.clone();
    let mut b = z.to_vec();
    for j in 0..k {
        let original = norm2(columns.column(j));
        let x = &a[j * m + j..(j + 1) * m];
        let norm = norm2(x);
        if !(norm > RANK_TOLERANCE * original) {
            return Err(Error::RankDeficient { column: j });
        }
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * norm;
        let mut v: Vec<Complex64> = x.to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|c| c.norm_sqr()).sum();

        for c in j..k {
            let col = &mut a[c * m + j..(c + 1) * m];
            let s = inner(&v, col) * (2.0 / vv);
            for (ci, vi) in col.iter_mut().zip(&v) {
                *ci -= s * vi;
            }
        }
        let s = inner(&v, &b[j..]) * (2.0 / vv);
        for (bi, vi) in b[j..].iter_mut().zip(&v) {
            *bi -= s * vi;
        }
    }

    let mut coefficients = vec![Complex64::new(0.0, 0.0); k];
    for i in (0..k).rev() {
        let mut acc = b[i];
        for c in i + 1..k {
            acc -= a[c * m + i] * coefficients[c];
        }
        coefficients[i] = acc / a[i * m + i];
    }

    let fitted = columns.mul_vec(&coefficients);
    let residual: Vec<Complex64> = z.iter().zip(&fitted).map(|(zi, fi)| zi - fi).collect();
    let residual_norm = norm2(&residual);
    Ok(LeastSquares {
        coefficients,
        residual,
        residual_norm,
    })
}

/// Orthonormal basis of the span of `columns` by Gram-Schmidt with one
/// reorthogonalization pass. Fails on numerically dependent columns.
pub fn orthonormal_basis(columns: &[&[Complex64]]) -> Result<Vec<Vec<Complex64>>> {
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(columns.len());
    for (j, col) in columns.iter().enumerate() {
        let original = norm2(col);
        let mut v = col.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let p = inner(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let n = norm2(&v);
        if !(n > RANK_TOLERANCE * original) {
            return Err(Error::RankDeficient { column: j });
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    Ok(basis)
}

/// Removes the components of `v` along an orthonormal basis, in place.
pub(crate) fn project_out(basis: &[Vec<Complex64>], v: &mut [Complex64]) {
    for q in basis {
        let p = inner(q, v);
        for (vi, qi) in v.iter_mut().zip(q) {
            *vi -= p * qi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_unit_column_scaled() {
        let a = vec![c(0.6, 0.0), c(0.0, 0.8)];
        let z: Vec<_> = a.iter().map(|x| x * 2.0).collect();
        let ls = least_squares_on_support(&z, &CMatrix::from_columns(2, &[a]).unwrap()).unwrap();
        assert!((ls.coefficients[0] - c(2.0, 0.0)).norm() < 1e-14);
        assert!(ls.residual_norm < 1e-14);
    }

    #[test]
    fn orthogonal_measurement_gives_zero_coefficients() {
        let cols = CMatrix::from_columns(3, &[vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let z = vec![c(0.0, 0.0), c(3.0, 0.0), c(0.0, 4.0)];
        let ls = least_squares_on_support(&z, &cols).unwrap();
        assert!(ls.coefficients[0].norm() < 1e-15);
        assert!((ls.residual_norm - 5.0).abs() < 1e-14);
    }

    #[test]
    fn duplicate_columns_are_rank_deficient() {
        let col = vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        let cols = CMatrix::from_columns(3, &[col.clone(), col]).unwrap();
        let err = least_squares_on_support(&[c(1.0, 0.0); 3], &cols).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { column: 1 }));
    }

    #[test]
    fn basis_is_orthonormal() {
        let a = vec![c(1.0, 0.0), c(1.0, 1.0), c(0.0, 2.0)];
        let b = vec![c(0.5, -1.0), c(2.0, 0.0), c(1.0, 1.0)];
        let q = orthonormal_basis(&[&a, &b]).unwrap();
        assert!((inner(&q[0], &q[0]).re - 1.0).abs() < 1e-14);
        assert!((inner(&q[1], &q[1]).re - 1.0).abs() < 1e-14);
        assert!(inner(&q[0], &q[1]).norm() < 1e-14);
        assert!(orthonormal_basis(&[&a, &a]).is_err());
    }

    #[test]
    fn too_many_columns_is_an_input_error() {
        let cols = CMatrix::zeros(1, 2);
        assert!(matches!(
            least_squares_on_support(&[c(1.0, 0.0)], &cols),
            Err(Error::Input(_))
        ));
    }
}
