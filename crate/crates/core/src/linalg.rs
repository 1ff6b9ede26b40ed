//! Small dense linear-algebra helpers (row-major storage).

use crate::scalar::{dot, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }
}

/// `out += W x` for a row-major `rows x x.len()` weight slice.
pub(crate) fn gemv_acc<T: Scalar>(w: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = *o + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `dw += dy x^T` and `dx += W^T dy`.
pub(crate) fn gemv_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    dw: &mut [T],
    dx: Option<&mut [T]>,
) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, &xv) in row.iter_mut().zip(x) {
            *d = *d + g * xv;
        }
    }
    if let Some(dx) = dx {
        for (r, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            let row = &w[r * cols..(r + 1) * cols];
            for (d, &wv) in dx.iter_mut().zip(row) {
                *d = *d + g * wv;
            }
        }
    }
}

/// Solves the symmetric positive-definite system `a x = b` by Cholesky.
/// Returns `None` if `a` is not numerically positive definite.
pub fn cholesky_solve<T: Scalar>(a: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.rows;
    let mut l = Mat::<T>::zeros(n, n);
    let scale = (0..n)
        .map(|i| a.get(i, i).abs())
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let tiny = scale * T::epsilon() * T::of(16.0);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s = s - l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= tiny || !s.is_finite() {
                    return None;
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Some(x)
}

/// Outcome of a least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    pub coef: Vec<T>,
    /// True when the normal equations were singular and a ridge term was added.
    pub ridge: bool,
}

/// Ordinary least squares via the normal equations. Falls back to a ridge
/// penalty `lambda * I` when the design is collinear.
pub fn least_squares<T: Scalar>(rows: &[Vec<T>], y: &[T], ridge_lambda: T) -> Option<LeastSquares<T>> {
    let k = rows.first().map_or(0, Vec::len);
    if k == 0 {
        return Some(LeastSquares {
            coef: Vec::new(),
            ridge: false,
        });
    }
    let mut xtx = Mat::<T>::zeros(k, k);
    let mut xty = vec![T::zero(); k];
    for (row, &target) in rows.iter().zip(y) {
        for i in 0..k {
            xty[i] = xty[i] + row[i] * target;
            for j in 0..=i {
                let v = xtx.get(i, j) + row[i] * row[j];
                xtx.set(i, j, v);
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            let v = xtx.get(i, j);
            xtx.set(j, i, v);
        }
    }
    if !well_conditioned(&xtx) {
        return ridge_solve(xtx, &xty, ridge_lambda);
    }
    match cholesky_solve(&xtx, &xty) {
        Some(coef) => Some(LeastSquares { coef, ridge: false }),
        None => ridge_solve(xtx, &xty, ridge_lambda),
    }
}

fn ridge_solve<T: Scalar>(mut xtx: Mat<T>, xty: &[T], lambda: T) -> Option<LeastSquares<T>> {
    for i in 0..xtx.rows {
        let v = xtx.get(i, i) + lambda;
        xtx.set(i, i, v);
    }
    cholesky_solve(&xtx, xty).map(|coef| LeastSquares { coef, ridge: true })
}

/// Cheap collinearity screen: pivots of an LDLᵀ factorisation relative to the
/// corresponding diagonal entry.
fn well_conditioned<T: Scalar>(a: &Mat<T>) -> bool {
    let n = a.rows;
    let mut l = Mat::<T>::zeros(n, n);
    let mut d = vec![T::zero(); n];
    let limit = T::of(1e-10);
    for j in 0..n {
        let mut dj = a.get(j, j);
        for k in 0..j {
            dj = dj - l.get(j, k) * l.get(j, k) * d[k];
        }
        let diag = a.get(j, j).abs();
        if diag == T::zero() || !(dj > diag * limit) {
            return false;
        }
        d[j] = dj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s = s - l.get(i, k) * l.get(j, k) * d[k];
            }
            l.set(i, j, s / dj);
        }
    }
    true
}
