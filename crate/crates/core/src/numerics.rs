//! Dense row-major matrices and the differentiable primitives the network is
//! built from.
//!
//! Sequences are stored frames-as-rows: a `T x d` matrix holds one
//! `d`-dimensional frame per row. Every backward routine *accumulates* into
//! the gradient buffers it is handed, because shared delay weights receive
//! contributions from every layer and every frame.

use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err("from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// A `1 x n` row vector.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Copies rows `start..end` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_err("add_assign", self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Plain matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(dim_err("matmul", self.shape(), rhs.shape()));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        matmul_into(self, rhs, &mut out);
        Ok(out)
    }

    /// Row `t` of the result is row `t - shift` of `self`, or zero when that
    /// index falls before the first frame. Negative shifts look ahead.
    pub fn shifted(&self, shift: isize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        let t = self.rows as isize;
        for r in 0..t {
            let src = r - shift;
            if (0..t).contains(&src) {
                out.row_mut(r as usize).copy_from_slice(self.row(src as usize));
            }
        }
        out
    }

    /// Adds `self` shifted by `shift` rows into `dst` (the adjoint of [`Matrix::shifted`]
    /// when called with the negated shift).
    pub fn add_shifted_into(&self, shift: isize, dst: &mut Matrix) {
        debug_assert_eq!(self.shape(), dst.shape());
        let t = self.rows as isize;
        for r in 0..t {
            let src = r - shift;
            if (0..t).contains(&src) {
                let (s, d) = (self.row(src as usize), dst.row_mut(r as usize));
                for (a, b) in d.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
    }
}

/// `out += a · b`, i-k-j order so the inner loop streams rows of `b`.
fn matmul_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    let n = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// A trainable tensor with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
    pub velocity: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Matrix::zeros(r, c),
            velocity: Matrix::zeros(r, c),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Matrix::zeros(rows, cols))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// `x · w + b` for every row of `x`. `b` must be a `1 x d_out` row vector.
pub fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols != w.rows {
        return Err(dim_err("affine", x.shape(), w.shape()));
    }
    if b.rows != 1 || b.cols != w.cols {
        return Err(dim_err("affine bias", w.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(x.rows, w.cols);
    for r in 0..x.rows {
        out.row_mut(r).copy_from_slice(&b.data);
    }
    matmul_into(x, w, &mut out);
    Ok(out)
}

/// `x · w` without a bias term.
pub fn linear(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    x.matmul(w)
}

/// Gradients of an affine map, freshly allocated.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads {
    pub grad_x: Matrix,
    pub grad_w: Matrix,
    pub grad_b: Matrix,
}

pub fn affine_backward(x: &Matrix, w: &Matrix, grad_out: &Matrix) -> Result<AffineGrads> {
    let mut grad_w = Matrix::zeros(w.rows, w.cols);
    let mut grad_b = Matrix::zeros(1, w.cols);
    let grad_x = affine_backward_acc(x, w, grad_out, &mut grad_w, Some(&mut grad_b))?;
    Ok(AffineGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}

/// Accumulates `xᵀ·g` into `grad_w` and the column sums of `g` into
/// `grad_b` (when given), returning `g·wᵀ`.
pub fn affine_backward_acc(
    x: &Matrix,
    w: &Matrix,
    grad_out: &Matrix,
    grad_w: &mut Matrix,
    grad_b: Option<&mut Matrix>,
) -> Result<Matrix> {
    if x.cols != w.rows {
        return Err(dim_err("affine_backward", x.shape(), w.shape()));
    }
    if grad_out.shape() != (x.rows, w.cols) {
        return Err(dim_err("affine_backward grad", (x.rows, w.cols), grad_out.shape()));
    }
    if grad_w.shape() != w.shape() {
        return Err(dim_err("affine_backward grad_w", w.shape(), grad_w.shape()));
    }
    let n = w.cols;
    for t in 0..x.rows {
        let g = grad_out.row(t);
        for (k, &xk) in x.row(t).iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let gw = &mut grad_w.data[k * n..(k + 1) * n];
            for (a, &b) in gw.iter_mut().zip(g) {
                *a += xk * b;
            }
        }
    }
    if let Some(gb) = grad_b {
        if gb.shape() != (1, n) {
            return Err(dim_err("affine_backward grad_b", (1, n), gb.shape()));
        }
        for t in 0..grad_out.rows {
            for (a, &b) in gb.data.iter_mut().zip(grad_out.row(t)) {
                *a += b;
            }
        }
    }
    let mut grad_x = Matrix::zeros(x.rows, x.cols);
    for t in 0..x.rows {
        let g = grad_out.row(t);
        let gx = grad_x.row_mut(t);
        for (k, out) in gx.iter_mut().enumerate() {
            let wk = &w.data[k * n..(k + 1) * n];
            *out = wk.iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }
    Ok(grad_x)
}

#[inline]
fn relu_scalar(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    Matrix {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|&v| relu_scalar(v)).collect(),
    }
}

/// Subgradient at exactly zero is zero.
pub fn relu_backward(x: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    if x.shape() != grad_out.shape() {
        return Err(dim_err("relu_backward", x.shape(), grad_out.shape()));
    }
    Ok(Matrix {
        rows: x.rows,
        cols: x.cols,
        data: x
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    })
}

/// Scales column `j` of `x` by `d[j]`: multiplication by a diagonal matrix.
pub fn diag_scale(x: &Matrix, d: &[f64]) -> Result<Matrix> {
    if d.len() != x.cols {
        return Err(dim_err("diag_scale", x.shape(), (1, d.len())));
    }
    let mut out = x.clone();
    for t in 0..out.rows {
        for (v, &s) in out.row_mut(t).iter_mut().zip(d) {
            *v *= s;
        }
    }
    Ok(out)
}

/// Accumulates `Σ_t x[t,j]·g[t,j]` into `grad_d` and returns `g ⊙ d`.
pub fn diag_scale_backward(
    x: &Matrix,
    d: &[f64],
    grad_out: &Matrix,
    grad_d: &mut [f64],
) -> Result<Matrix> {
    if d.len() != x.cols || grad_d.len() != d.len() {
        return Err(dim_err("diag_scale_backward", x.shape(), (1, d.len())));
    }
    if grad_out.shape() != x.shape() {
        return Err(dim_err("diag_scale_backward grad", x.shape(), grad_out.shape()));
    }
    for t in 0..x.rows {
        for ((acc, &xv), &g) in grad_d.iter_mut().zip(x.row(t)).zip(grad_out.row(t)) {
            *acc += xv * g;
        }
    }
    diag_scale(grad_out, d)
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for t in 0..out.rows {
        let row = out.row_mut(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Summed cross-entropy over the frames in `rows`, with gradient
/// `(softmax − onehot) · scale` written into those rows of the result; all
/// other rows of the gradient are zero.
pub fn softmax_xent_rows(
    logits: &Matrix,
    labels: &[usize],
    rows: std::ops::Range<usize>,
    scale: f64,
) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows {
        return Err(dim_err("softmax_xent labels", logits.shape(), (labels.len(), 1)));
    }
    let k = logits.cols;
    let mut grad = Matrix::zeros(logits.rows, k);
    let mut loss = 0.0;
    for t in rows {
        let label = labels[t];
        if label >= k {
            return Err(Error::Label {
                frame: t,
                label,
                classes: k,
            });
        }
        let row = logits.row(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numeric(format!("non-finite logits at frame {t}")));
        }
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        let g = grad.row_mut(t);
        for (j, (gv, &v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - log_z).exp();
            *gv = (p - if j == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss, grad))
}

/// Mean per-frame cross-entropy and its gradient w.r.t. the logits.
pub fn softmax_xent(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let t = logits.rows;
    if t == 0 {
        return Err(Error::Input("softmax_xent on an empty sequence".into()));
    }
    let (sum, grad) = softmax_xent_rows(logits, labels, 0..t, 1.0 / t as f64)?;
    Ok((sum / t as f64, grad))
}

pub const DEFAULT_GRAD_CHECK_EPS: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic` against central differences of `f` around `theta` and
/// returns the largest relative error over all entries.
pub fn grad_check<F>(theta: &[f64], analytic: &[f64], eps: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if theta.len() != analytic.len() {
        return Err(dim_err("grad_check", (theta.len(), 1), (analytic.len(), 1)));
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let plus = f(&probe)?;
        probe[i] = theta[i] - eps;
        let minus = f(&probe)?;
        probe[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is not finite around entry {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn affine_examples() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]);
        let id = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let out = affine(&x, &id, &Matrix::row_vector(&[0.0, 0.0])).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[1.0, 2.0]]));

        let out = affine(&x, &Matrix::zeros(2, 2), &Matrix::row_vector(&[3.0, 4.0])).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[3.0, 4.0]]));

        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let w = Matrix::from_rows(&[[1.0], [1.0]]);
        let out = affine(&x, &w, &Matrix::row_vector(&[1.0])).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[4.0], [8.0]]));
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let err = affine(&Matrix::zeros(2, 3), &Matrix::zeros(2, 2), &Matrix::zeros(1, 2))
            .unwrap_err()
            .to_string();
        assert!(err.contains("2x3") && err.contains("2x2"), "{err}");
    }

    #[test]
    fn affine_backward_scalar() {
        let g = affine_backward(
            &Matrix::from_rows(&[[1.0]]),
            &Matrix::from_rows(&[[2.0]]),
            &Matrix::from_rows(&[[1.0]]),
        )
        .unwrap();
        assert_eq!(g.grad_w, Matrix::from_rows(&[[1.0]]));
        assert_eq!(g.grad_x, Matrix::from_rows(&[[2.0]]));
        assert_eq!(g.grad_b, Matrix::row_vector(&[1.0]));

        let g = affine_backward(
            &Matrix::from_rows(&[[1.0, -1.0]]),
            &Matrix::from_rows(&[[2.0], [3.0]]),
            &Matrix::zeros(1, 1),
        )
        .unwrap();
        assert!(g.grad_w.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.grad_x.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.grad_b.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(3, 2, &mut rng);
        let w = random(2, 4, &mut rng);
        let b = random(1, 4, &mut rng);
        let proj = random(3, 4, &mut rng);
        // f = <proj, affine(x, w, b)>
        let f = |x: &Matrix, w: &Matrix, b: &Matrix| -> f64 {
            let y = affine(x, w, b).unwrap();
            y.as_slice().iter().zip(proj.as_slice()).map(|(a, b)| a * b).sum()
        };
        let g = affine_backward(&x, &w, &proj).unwrap();

        let err_w = grad_check(w.as_slice(), g.grad_w.as_slice(), 1e-5, |th| {
            Ok(f(&x, &Matrix::from_vec(2, 4, th.to_vec())?, &b))
        })
        .unwrap();
        let err_x = grad_check(x.as_slice(), g.grad_x.as_slice(), 1e-5, |th| {
            Ok(f(&Matrix::from_vec(3, 2, th.to_vec())?, &w, &b))
        })
        .unwrap();
        let err_b = grad_check(b.as_slice(), g.grad_b.as_slice(), 1e-5, |th| {
            Ok(f(&x, &w, &Matrix::from_vec(1, 4, th.to_vec())?))
        })
        .unwrap();
        assert!(err_w < 1e-8, "grad_w rel err {err_w}");
        assert!(err_x < 1e-8, "grad_x rel err {err_x}");
        assert!(err_b < 1e-8, "grad_b rel err {err_b}");
    }

    #[test]
    fn gradients_accumulate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(4, 3, &mut rng);
        let w = random(3, 2, &mut rng);
        let g = random(4, 2, &mut rng);
        let mut gw = Matrix::zeros(3, 2);
        let mut gb = Matrix::zeros(1, 2);
        affine_backward_acc(&x, &w, &g, &mut gw, Some(&mut gb)).unwrap();
        let once = (gw.clone(), gb.clone());
        affine_backward_acc(&x, &w, &g, &mut gw, Some(&mut gb)).unwrap();
        // the second pass adds term by term, so allow rounding
        for (a, b) in gw.as_slice().iter().zip(once.0.as_slice()) {
            assert!((a - 2.0 * b).abs() <= 1e-14 * b.abs().max(1.0));
        }
        for (a, b) in gb.as_slice().iter().zip(once.1.as_slice()) {
            assert!((a - 2.0 * b).abs() <= 1e-14 * b.abs().max(1.0));
        }

        let d = [0.5, -1.5, 2.0];
        let mut gd = [0.0; 3];
        diag_scale_backward(&x, &d, &x, &mut gd).unwrap();
        let first = gd;
        diag_scale_backward(&x, &d, &x, &mut gd).unwrap();
        for (a, b) in gd.iter().zip(first) {
            assert!((a - 2.0 * b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn relu_examples() {
        let x = Matrix::row_vector(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x), Matrix::row_vector(&[0.0, 0.0, 2.0]));
        let g = relu_backward(&x, &Matrix::row_vector(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(g, Matrix::row_vector(&[0.0, 0.0, 5.0]));
    }

    #[test]
    fn relu_matches_finite_differences_away_from_zero() {
        let x = Matrix::row_vector(&[-1.3, 0.7, 1.9, -0.2, 0.05]);
        let proj = Matrix::row_vector(&[0.3, -1.1, 0.8, 2.0, 1.0]);
        let analytic = relu_backward(&x, &proj).unwrap();
        let err = grad_check(x.as_slice(), analytic.as_slice(), 1e-6, |th| {
            let y = relu(&Matrix::from_vec(1, 5, th.to_vec())?);
            Ok(y.as_slice().iter().zip(proj.as_slice()).map(|(a, b)| a * b).sum())
        })
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn diag_scale_identities_and_dense_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(4, 3, &mut rng);
        assert_eq!(diag_scale(&x, &[1.0; 3]).unwrap(), x);
        assert!(diag_scale(&x, &[0.0; 3])
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));

        let d = [0.3, -1.2, 1.7];
        let dense = affine(&x, &Matrix::diag(&d), &Matrix::zeros(1, 3)).unwrap();
        assert!(max_abs_diff(&diag_scale(&x, &d).unwrap(), &dense) < 1e-12);

        let err = diag_scale(&x, &[1.0; 2]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn diag_scale_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(5, 3, &mut rng);
        let proj = random(5, 3, &mut rng);
        let d = [0.4, -0.9, 1.3];
        let mut gd = [0.0; 3];
        let gx = diag_scale_backward(&x, &d, &proj, &mut gd).unwrap();
        let f = |x: &Matrix, d: &[f64]| -> f64 {
            let y = diag_scale(x, d).unwrap();
            y.as_slice().iter().zip(proj.as_slice()).map(|(a, b)| a * b).sum()
        };
        let ed = grad_check(&d, &gd, 1e-5, |th| Ok(f(&x, th))).unwrap();
        let ex = grad_check(x.as_slice(), gx.as_slice(), 1e-5, |th| {
            Ok(f(&Matrix::from_vec(5, 3, th.to_vec())?, &d))
        })
        .unwrap();
        assert!(ed < 1e-8 && ex < 1e-8, "{ed} {ex}");
    }

    #[test]
    fn softmax_xent_examples() {
        let (loss, _) = softmax_xent(&Matrix::zeros(1, 4), &[2]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.386294).abs() < 1e-6);

        let (loss, grad) = softmax_xent(&Matrix::from_rows(&[[1000.0, 0.0]]), &[0]).unwrap();
        assert!(loss.abs() < 1e-12 && grad.is_finite());

        let err = softmax_xent(&Matrix::zeros(3, 2), &[0, 2, 1]).unwrap_err();
        assert!(matches!(err, Error::Label { frame: 1, label: 2, classes: 2 }));
    }

    #[test]
    fn softmax_xent_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = random(5, 3, &mut rng);
        let labels = [0, 2, 1, 1, 0];
        let (_, grad) = softmax_xent(&logits, &labels).unwrap();
        let err = grad_check(logits.as_slice(), grad.as_slice(), 1e-5, |th| {
            Ok(softmax_xent(&Matrix::from_vec(5, 3, th.to_vec())?, &labels)?.0)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn grad_check_quadratic() {
        let err = grad_check(&[3.0], &[6.0], DEFAULT_GRAD_CHECK_EPS, |th| Ok(th[0] * th[0])).unwrap();
        assert!(err < 1e-9, "{err}");
        let err = grad_check(&[1.0], &[1.0], 1e-5, |_| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn shift_and_adjoint() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        assert_eq!(x.shifted(2), Matrix::from_rows(&[[0.0], [0.0], [1.0], [2.0]]));
        assert_eq!(x.shifted(-1), Matrix::from_rows(&[[2.0], [3.0], [4.0], [0.0]]));
        // <shift(x, m), y> == <x, shift(y, -m)>
        let y = Matrix::from_rows(&[[0.5], [-1.0], [2.0], [3.0]]);
        let lhs: f64 = x.shifted(2).as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        let mut back = Matrix::zeros(4, 1);
        y.add_shifted_into(-2, &mut back);
        let rhs: f64 = x.as_slice().iter().zip(back.as_slice()).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let m = Matrix::from_vec(3, 4, vals).unwrap();
            let p = softmax(&m);
            for t in 0..3 {
                let s: f64 = p.row(t).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn primitives_match_finite_differences(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(3, 4, &mut rng);
            let w = random(4, 2, &mut rng);
            let b = random(1, 2, &mut rng);
            let labels = [rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..2)];
            let d: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let loss = |x: &Matrix, w: &Matrix, d: &[f64]| -> Result<f64> {
                let s = diag_scale(x, d)?;
                let h = relu(&affine(&s, w, &b)?);
                Ok(softmax_xent(&h, &labels)?.0)
            };
            let s = diag_scale(&x, &d).unwrap();
            let pre = affine(&s, &w, &b).unwrap();
            // skip draws with a pre-activation near the relu kink
            prop_assume!(pre.as_slice().iter().all(|v| v.abs() > 1e-3));
            let h = relu(&pre);
            let (_, gh) = softmax_xent(&h, &labels).unwrap();
            let gpre = relu_backward(&pre, &gh).unwrap();
            let ag = affine_backward(&s, &w, &gpre).unwrap();
            let mut gd = vec![0.0; 4];
            let gx = diag_scale_backward(&x, &d, &ag.grad_x, &mut gd).unwrap();

            // central differences carry ~1e-10 absolute noise, so tiny
            // entries are judged on an absolute floor
            let close = |theta: &[f64], analytic: &[f64], f: &dyn Fn(&[f64]) -> Result<f64>| {
                let mut th = theta.to_vec();
                for i in 0..th.len() {
                    let orig = th[i];
                    th[i] = orig + 1e-6;
                    let up = f(&th).unwrap();
                    th[i] = orig - 1e-6;
                    let down = f(&th).unwrap();
                    th[i] = orig;
                    let n = (up - down) / 2e-6;
                    if (analytic[i] - n).abs() > 1e-6 * analytic[i].abs().max(n.abs()) + 1e-8 {
                        return Err(format!("entry {i}: analytic {} numeric {n}", analytic[i]));
                    }
                }
                Ok(())
            };
            close(w.as_slice(), ag.grad_w.as_slice(), &|th| loss(&x, &Matrix::from_vec(4, 2, th.to_vec())?, &d)).map_err(TestCaseError::fail)?;
            close(&d, &gd, &|th| loss(&x, &w, th)).map_err(TestCaseError::fail)?;
            close(x.as_slice(), gx.as_slice(), &|th| loss(&Matrix::from_vec(3, 4, th.to_vec())?, &w, &d)).map_err(TestCaseError::fail)?;
        }
    }
}
