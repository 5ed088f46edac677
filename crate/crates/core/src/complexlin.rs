//! Dense complex matrix algebra.
//!
//! Everything upstream (channel application, LS estimation, ZF equalization,
//! MLSD and the real embedding feeding the DNN receiver) is built on this
//! module. Matrices are row-major `Complex64` with 64-bit arithmetic
//! throughout; inversion is Gaussian elimination with partial pivoting, which
//! is plenty for the M <= 8 systems simulated here.

use num_complex::Complex64;

use crate::{Error, Result};

/// Pivot magnitudes below this during elimination are treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// n x n identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from nested rows; every inner vector must have the same length.
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Shape("ragged rows in from_rows".into()));
        }
        Ok(Self {
            rows: nrows,
            cols: ncols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row r as a contiguous slice.
    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Column c copied out.
    pub fn col(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_col(&mut self, c: usize, v: &[Complex64]) {
        assert_eq!(v.len(), self.rows, "column length mismatch");
        for (r, &x) in v.iter().enumerate() {
            self.set(r, c, x);
        }
    }

    /// Flat entry slice (row-major).
    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Standard complex matrix product.
    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let crow = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += a * brow[j];
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    /// Elementwise sum.
    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "add: {}x{} plus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "sub: {}x{} minus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Scale every entry by a real factor.
    pub fn scale(&self, s: f64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Frobenius norm.
    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Sum of squared entry magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Inverse via Gauss-Jordan with partial pivoting.
    ///
    /// A pivot magnitude below [`PIVOT_TOL`] reports the matrix as singular.
    pub fn inverse(&self) -> Result<ComplexMatrix> {
        if self.rows != self.cols {
            return Err(Error::Shape(format!(
                "inverse of non-square {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        // Augmented [A | I], eliminated in place.
        let mut a = self.clone();
        let mut inv = ComplexMatrix::identity(n);
        for col in 0..n {
            let mut max_mag = a.get(col, col).norm();
            let mut max_row = col;
            for r in (col + 1)..n {
                let mag = a.get(r, col).norm();
                if mag > max_mag {
                    max_mag = mag;
                    max_row = r;
                }
            }
            if max_mag < PIVOT_TOL {
                return Err(Error::Singular(format!(
                    "pivot magnitude {max_mag:.3e} below {PIVOT_TOL:.0e} at column {col}"
                )));
            }
            if max_row != col {
                for c in 0..n {
                    let t = a.get(col, c);
                    a.set(col, c, a.get(max_row, c));
                    a.set(max_row, c, t);
                    let t = inv.get(col, c);
                    inv.set(col, c, inv.get(max_row, c));
                    inv.set(max_row, c, t);
                }
            }
            let pivot_inv = Complex64::new(1.0, 0.0) / a.get(col, col);
            for c in 0..n {
                let v = a.get(col, c) * pivot_inv;
                a.set(col, c, v);
                let v = inv.get(col, c) * pivot_inv;
                inv.set(col, c, v);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a.get(r, col);
                if factor.re == 0.0 && factor.im == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let v = a.get(r, c) - factor * a.get(col, c);
                    a.set(r, c, v);
                    let v = inv.get(r, c) - factor * inv.get(col, c);
                    inv.set(r, c, v);
                }
            }
        }
        Ok(inv)
    }

    /// Right pseudo-inverse H+ = H^H (H H^H)^-1 for a wide matrix (rows <= cols),
    /// so that H * H+ = I.
    pub fn right_pinv(&self) -> Result<ComplexMatrix> {
        if self.rows > self.cols {
            return Err(Error::Shape(format!(
                "right_pinv requires rows <= cols, got {}x{}",
                self.rows, self.cols
            )));
        }
        let herm = self.hermitian();
        let gram = self.matmul(&herm)?;
        let gram_inv = gram.inverse().map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!("rank-deficient matrix: {msg}")),
            other => other,
        })?;
        herm.matmul(&gram_inv)
    }

    /// Real embedding: column-major vectorization followed by stacking the
    /// real parts over the imaginary parts. Output length is 2*rows*cols.
    pub fn to_real_vec(&self) -> Vec<f64> {
        let n = self.rows * self.cols;
        let mut out = vec![0.0; 2 * n];
        let mut k = 0;
        for c in 0..self.cols {
            for r in 0..self.rows {
                let z = self.get(r, c);
                out[k] = z.re;
                out[n + k] = z.im;
                k += 1;
            }
        }
        out
    }

    /// Inverse of [`to_real_vec`](Self::to_real_vec) for a known shape.
    pub fn from_real_vec(v: &[f64], rows: usize, cols: usize) -> Result<ComplexMatrix> {
        let n = rows * cols;
        if v.len() != 2 * n {
            return Err(Error::Shape(format!(
                "from_real_vec: expected length {}, got {}",
                2 * n,
                v.len()
            )));
        }
        let mut m = ComplexMatrix::zeros(rows, cols);
        let mut k = 0;
        for c in 0..cols {
            for r in 0..rows {
                m.set(r, c, Complex64::new(v[k], v[n + k]));
                k += 1;
            }
        }
        Ok(m)
    }
}
