//! Dense row-major f64 matrices and the few operations the model needs.

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut() -> f64) -> Self {
        let data = (0..rows * cols).map(|_| f()).collect();
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self @ other`, (m x k)(k x n).
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self @ other^T`, (m x k)(n x k) -> (m x n).
    pub fn matmul_bt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_bt shape mismatch");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                *out.at_mut(i, j) = dot(a_row, other.row(j));
            }
        }
        out
    }

    /// `self^T @ other`, (k x m)(k x n) -> (m x n). Used for weight grads.
    pub fn matmul_at(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_at shape mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Copy of the column block `[start, start + width)`.
    pub fn col_block(&self, start: usize, width: usize) -> Mat {
        assert!(start + width <= self.cols);
        let mut out = Mat::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    /// Accumulate `block` into the column block starting at `start`.
    pub fn add_col_block(&mut self, start: usize, block: &Mat) {
        assert_eq!(self.rows, block.rows);
        assert!(start + block.cols <= self.cols);
        for r in 0..self.rows {
            let dst = &mut self.row_mut(r)[start..start + block.cols];
            for (d, &s) in dst.iter_mut().zip(block.row(r)) {
                *d += s;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax of `row` in place over entries where
/// `keep[j]` is true; excluded entries become exactly 0. Returns false when
/// every entry is excluded.
pub fn softmax_masked_in_place(row: &mut [f64], keep: impl Fn(usize) -> bool) -> bool {
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if keep(j) && v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return false;
    }
    let mut sum = 0.0;
    for (j, v) in row.iter_mut().enumerate() {
        if keep(j) {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    true
}

pub const RMS_EPS: f64 = 1e-6;

/// Scale-only RMS normalization: `y = g * x / sqrt(mean(x^2) + eps)`,
/// row by row. Returns the output and the per-row reciprocal RMS needed
/// by the backward pass.
pub fn rmsnorm(x: &Mat, scale: &[f64]) -> (Mat, Vec<f64>) {
    assert_eq!(x.cols(), scale.len());
    let d = x.cols() as f64;
    let mut out = Mat::zeros(x.rows(), x.cols());
    let mut inv_rms = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let ms = dot(row, row) / d;
        let inv = 1.0 / (ms + RMS_EPS).sqrt();
        inv_rms.push(inv);
        for (o, (&xi, &g)) in out.row_mut(r).iter_mut().zip(row.iter().zip(scale)) {
            *o = g * xi * inv;
        }
    }
    (out, inv_rms)
}

/// Backward of [`rmsnorm`]: accumulates the scale gradient into
/// `dscale` and returns the input gradient.
pub fn rmsnorm_backward(
    x: &Mat,
    scale: &[f64],
    inv_rms: &[f64],
    dout: &Mat,
    dscale: &mut [f64],
) -> Mat {
    let d = x.cols() as f64;
    let mut dx = Mat::zeros(x.rows(), x.cols());
    for (r, &inv) in inv_rms.iter().enumerate() {
        let xr = x.row(r);
        let dr = dout.row(r);
        let mut s = 0.0;
        for ((&dy, &g), &xi) in dr.iter().zip(scale).zip(xr) {
            s += dy * g * xi;
        }
        let coeff = s * inv * inv * inv / d;
        for (j, dxj) in dx.row_mut(r).iter_mut().enumerate() {
            *dxj = dr[j] * scale[j] * inv - xr[j] * coeff;
            dscale[j] += dr[j] * xr[j] * inv;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known_product() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_transpose_variants_agree_with_plain() {
        let a = Mat::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 1.0, -1.0]);
        let b = Mat::from_vec(2, 3, vec![2.0, 0.0, 1.0, -1.0, 4.0, 2.0]);
        // a @ b^T via definition.
        let bt = Mat::from_vec(3, 2, vec![2.0, -1.0, 0.0, 4.0, 1.0, 2.0]);
        assert_eq!(a.matmul_bt(&b), a.matmul(&bt));
        // a^T @ b via definition.
        let at = Mat::from_vec(3, 2, vec![1.0, 3.0, -2.0, 1.0, 0.5, -1.0]);
        assert_eq!(a.matmul_at(&b), at.matmul(&b));
    }

    #[test]
    fn softmax_rows_sum_to_one_over_kept_entries() {
        let mut row = vec![0.3, -1.2, 2.0, 0.0];
        assert!(softmax_masked_in_place(&mut row, |j| j != 1));
        assert_eq!(row[1], 0.0);
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_all_masked_reports_failure() {
        let mut row = vec![1.0, 2.0];
        assert!(!softmax_masked_in_place(&mut row, |_| false));
    }

    #[test]
    fn rmsnorm_unit_scale_normalizes_rms() {
        let x = Mat::from_vec(1, 4, vec![3.0, -3.0, 3.0, -3.0]);
        let (y, _) = rmsnorm(&x, &[1.0; 4]);
        let ms: f64 = dot(y.row(0), y.row(0)) / 4.0;
        assert!((ms - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rmsnorm_backward_matches_finite_differences() {
        let x = Mat::from_vec(2, 3, vec![0.4, -1.1, 2.0, 0.3, 0.9, -0.7]);
        let scale = [1.1, 0.9, 1.3];
        let dout = Mat::from_vec(2, 3, vec![0.2, -0.5, 1.0, 0.7, 0.1, -0.3]);
        let (_, inv) = rmsnorm(&x, &scale);
        let mut dscale = [0.0; 3];
        let dx = rmsnorm_backward(&x, &scale, &inv, &dout, &mut dscale);

        let loss = |x: &Mat, scale: &[f64]| -> f64 {
            let (y, _) = rmsnorm(x, scale);
            y.data().iter().zip(dout.data()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for r in 0..2 {
            for c in 0..3 {
                let mut xp = x.clone();
                *xp.at_mut(r, c) += h;
                let mut xm = x.clone();
                *xm.at_mut(r, c) -= h;
                let num = (loss(&xp, &scale) - loss(&xm, &scale)) / (2.0 * h);
                assert!((num - dx.at(r, c)).abs() < 1e-6, "dx[{r},{c}]");
            }
        }
        for c in 0..3 {
            let mut sp = scale;
            sp[c] += h;
            let mut sm = scale;
            sm[c] -= h;
            let num = (loss(&x, &sp) - loss(&x, &sm)) / (2.0 * h);
            assert!((num - dscale[c]).abs() < 1e-6, "dscale[{c}]");
        }
    }
}
