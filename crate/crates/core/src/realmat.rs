//! Real matrix kernel backing the DNN receiver.
//!
//! Row-major f64 matrices with the three product shapes backpropagation
//! needs: A*B, A^T*B and A*B^T. Products are parallelized over output rows
//! with rayon; each output element is accumulated sequentially, so results
//! are bit-identical regardless of thread count.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// C = self * other. self: m x k, other: k x n.
    ///
    /// Output rows are processed four at a time so each pass over `other`
    /// feeds four accumulator rows; that cuts the dominant memory traffic
    /// (the k x n operand) fourfold on the large receiver layers.
    pub fn matmul(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let (k, n) = (self.cols, other.cols);
        let mut out = RealMatrix::zeros(self.rows, n);
        out.data
            .par_chunks_mut(4 * n)
            .enumerate()
            .for_each(|(block, cblock)| {
                let i0 = block * 4;
                let rows = cblock.len() / n;
                if rows == 4 {
                    let (c0, rest) = cblock.split_at_mut(n);
                    let (c1, rest) = rest.split_at_mut(n);
                    let (c2, c3) = rest.split_at_mut(n);
                    let a0 = &self.data[i0 * k..(i0 + 1) * k];
                    let a1 = &self.data[(i0 + 1) * k..(i0 + 2) * k];
                    let a2 = &self.data[(i0 + 2) * k..(i0 + 3) * k];
                    let a3 = &self.data[(i0 + 3) * k..(i0 + 4) * k];
                    for p in 0..k {
                        let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
                        let brow = &other.data[p * n..(p + 1) * n];
                        for j in 0..n {
                            let b = brow[j];
                            c0[j] += x0 * b;
                            c1[j] += x1 * b;
                            c2[j] += x2 * b;
                            c3[j] += x3 * b;
                        }
                    }
                } else {
                    for (r, crow) in cblock.chunks_mut(n).enumerate() {
                        let arow = &self.data[(i0 + r) * k..(i0 + r + 1) * k];
                        for (p, &a) in arow.iter().enumerate() {
                            let brow = &other.data[p * n..(p + 1) * n];
                            for j in 0..n {
                                crow[j] += a * brow[j];
                            }
                        }
                    }
                }
            });
        out
    }

    /// C = self^T * other. self: b x m, other: b x n, result m x n.
    ///
    /// This is the dW = activations^T * delta shape; blocked like `matmul`.
    pub fn matmul_at_b(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(self.rows, other.rows, "matmul_at_b shape mismatch");
        let (b, m, n) = (self.rows, self.cols, other.cols);
        let mut out = RealMatrix::zeros(m, n);
        out.data
            .par_chunks_mut(4 * n)
            .enumerate()
            .for_each(|(block, cblock)| {
                let i0 = block * 4;
                let rows = cblock.len() / n;
                if rows == 4 {
                    let (c0, rest) = cblock.split_at_mut(n);
                    let (c1, rest) = rest.split_at_mut(n);
                    let (c2, c3) = rest.split_at_mut(n);
                    for p in 0..b {
                        let acol = &self.data[p * m + i0..p * m + i0 + 4];
                        let (x0, x1, x2, x3) = (acol[0], acol[1], acol[2], acol[3]);
                        let brow = &other.data[p * n..(p + 1) * n];
                        for j in 0..n {
                            let v = brow[j];
                            c0[j] += x0 * v;
                            c1[j] += x1 * v;
                            c2[j] += x2 * v;
                            c3[j] += x3 * v;
                        }
                    }
                } else {
                    for (r, crow) in cblock.chunks_mut(n).enumerate() {
                        for p in 0..b {
                            let a = self.data[p * m + i0 + r];
                            let brow = &other.data[p * n..(p + 1) * n];
                            for j in 0..n {
                                crow[j] += a * brow[j];
                            }
                        }
                    }
                }
            });
        out
    }

    /// C = self * other^T. self: m x k, other: n x k, result m x n.
    ///
    /// This is the delta_prev = delta * W^T shape; four rows of `self` share
    /// each pass over `other`.
    pub fn matmul_a_bt(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(self.cols, other.cols, "matmul_a_bt shape mismatch");
        let (k, n) = (self.cols, other.rows);
        let mut out = RealMatrix::zeros(self.rows, n);
        out.data
            .par_chunks_mut(4 * n)
            .enumerate()
            .for_each(|(block, cblock)| {
                let i0 = block * 4;
                let rows = cblock.len() / n;
                if rows == 4 {
                    let a0 = &self.data[i0 * k..(i0 + 1) * k];
                    let a1 = &self.data[(i0 + 1) * k..(i0 + 2) * k];
                    let a2 = &self.data[(i0 + 2) * k..(i0 + 3) * k];
                    let a3 = &self.data[(i0 + 3) * k..(i0 + 4) * k];
                    let (c0, rest) = cblock.split_at_mut(n);
                    let (c1, rest) = rest.split_at_mut(n);
                    let (c2, c3) = rest.split_at_mut(n);
                    for j in 0..n {
                        let brow = &other.data[j * k..(j + 1) * k];
                        let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
                        for p in 0..k {
                            let b = brow[p];
                            s0 += a0[p] * b;
                            s1 += a1[p] * b;
                            s2 += a2[p] * b;
                            s3 += a3[p] * b;
                        }
                        c0[j] = s0;
                        c1[j] = s1;
                        c2[j] = s2;
                        c3[j] = s3;
                    }
                } else {
                    for (r, crow) in cblock.chunks_mut(n).enumerate() {
                        let arow = &self.data[(i0 + r) * k..(i0 + r + 1) * k];
                        for (j, c) in crow.iter_mut().enumerate() {
                            let brow = &other.data[j * k..(j + 1) * k];
                            let mut sum = 0.0;
                            for p in 0..k {
                                sum += arow[p] * brow[p];
                            }
                            *c = sum;
                        }
                    }
                }
            });
        out
    }

    /// Add a row vector to every row.
    pub fn add_row_broadcast(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols, "broadcast length mismatch");
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, &b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    /// Column sums as a vector of length cols.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (s, &x) in out.iter_mut().zip(row) {
                *s += x;
            }
        }
        out
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64 + Sync) {
        self.data.iter_mut().for_each(|x| *x = f(*x));
    }
}
