//! Minimal dense f64 kernels for the predictors. Row vectors throughout:
//! activations are `1 x n` slices, weights map `in -> out` as `in x out`
//! matrices, matching `y = x W + b`.

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `x' = x M` for a row vector `x` of length `rows`.
    pub fn vecmat(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }

    /// `M y` for a column vector `y` of length `cols`; this is the pullback
    /// of `vecmat` (gradient w.r.t. `x`).
    pub fn matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.cols);
        self.data.chunks_exact(self.cols).map(|row| dot(row, y)).collect()
    }

    /// `self += x^T y` (outer product accumulate).
    pub fn outer_add(&mut self, x: &[f64], y: &[f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (xi, row) in x.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (w, yj) in row.iter_mut().zip(y) {
                *w += xi * yj;
            }
        }
    }
}

/// Affine map `y = x W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Affine { w: Mat::zeros(input, output), b: vec![0.0; output] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.vecmat(x);
        for (yi, bi) in y.iter_mut().zip(&self.b) {
            *yi += bi;
        }
        y
    }

    /// Accumulate parameter gradients for `dy` at input `x` and return `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Affine) -> Vec<f64> {
        grads.w.outer_add(x, dy);
        add_assign(&mut grads.b, dy);
        self.w.matvec(dy)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

pub fn scale(a: &mut [f64], s: f64) {
    for x in a {
        *x *= s;
    }
}

/// In-place stable softmax.
pub fn softmax(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vecmat_and_matvec_are_adjoint() {
        let mut m = Mat::zeros(3, 2);
        m.data = vec![1.0, 2.0, -0.5, 0.0, 3.0, 1.5];
        let x = [1.0, -2.0, 0.5];
        let y = [0.3, -0.7];
        // <xM, y> == <x, My>
        let left = dot(&m.vecmat(&x), &y);
        let right = dot(&x, &m.matvec(&y));
        assert!((left - right).abs() < 1e-12);
    }

    #[test]
    fn affine_backward_matches_finite_difference() {
        let mut a = Affine::zeros(3, 2);
        a.w.data = vec![0.4, -0.2, 0.1, 0.9, -0.6, 0.3];
        a.b = vec![0.05, -0.1];
        let x = [0.7, -1.2, 0.4];
        // scalar objective: sum of outputs squared
        let objective = |aff: &Affine| -> f64 { aff.forward(&x).iter().map(|v| v * v).sum() };
        let y = a.forward(&x);
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut grads = Affine::zeros(3, 2);
        a.backward(&x, &dy, &mut grads);
        let h = 1e-6;
        for i in 0..a.w.data.len() {
            let mut plus = a.clone();
            plus.w.data[i] += h;
            let mut minus = a.clone();
            minus.w.data[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!((fd - grads.w.data[i]).abs() < 1e-6, "w[{i}]: fd {fd} vs {}", grads.w.data[i]);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut xs = vec![1.0, -2.0, 0.3, 800.0];
        softmax(&mut xs);
        assert!((xs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(xs.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
