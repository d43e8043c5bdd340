//! Dense row-major matrices and the self-expression kernels.
//!
//! Storage is generic over the element type so the same code paths serve
//! 32-bit training and 64-bit gradient checking. Every reduction (dot
//! products, row sums, means) accumulates in `f64`.

use std::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

/// Default guard for cosine denominators and row sums.
pub const EPS: f64 = 1e-8;

/// Element type of a [`Matrix`].
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from `f64` rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend(r.iter().map(|&v| T::from_f64(v)));
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data
            .chunks_exact(cols)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[Self]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if let Some(p) = parts.iter().find(|p| p.cols != cols) {
            return Err(Error::ShapeMismatch(format!(
                "vstack of {cols}-column and {}-column matrices",
                p.cols
            )));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            rows: parts.iter().map(|p| p.rows).sum(),
            cols,
            data,
        })
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let n = other.cols;
        let mut out = Self::zeros(self.rows, n);
        let mut acc = vec![0.0f64; n];
        for i in 0..self.rows {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &a) in self.row(i).iter().enumerate() {
                let a = a.as_f64();
                if a == 0.0 {
                    continue;
                }
                for (s, &b) in acc.iter_mut().zip(other.row(k)) {
                    *s += a * b.as_f64();
                }
            }
            for (o, &s) in out.row_mut(i).iter_mut().zip(&acc) {
                *o = T::from_f64(s);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul_tn {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (m, n) = (self.cols, other.cols);
        let mut acc = vec![0.0f64; m * n];
        for r in 0..self.rows {
            let b = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                let a = a.as_f64();
                if a == 0.0 {
                    continue;
                }
                for (s, &bv) in acc[i * n..(i + 1) * n].iter_mut().zip(b) {
                    *s += a * bv.as_f64();
                }
            }
        }
        Ok(Self {
            rows: m,
            cols: n,
            data: acc.into_iter().map(T::from_f64).collect(),
        })
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "matmul_nt {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out[(i, j)] = T::from_f64(dot(self.row(i), other.row(j)));
            }
        }
        Ok(out)
    }

    /// Adds a row vector to every row.
    pub fn add_row(&mut self, bias: &[T]) {
        assert_eq!(bias.len(), self.cols);
        for i in 0..self.rows {
            for (v, &b) in self.row_mut(i).iter_mut().zip(bias) {
                *v = *v + b;
            }
        }
    }

    /// Column sums accumulated in `f64`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v.as_f64();
            }
        }
        sums
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "hcat of {}-row and {}-row matrices",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum()
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine self-similarity `A_ij = z_i·z_j / max(|z_i||z_j|, eps)`.
pub fn cosine_gram<T: Real>(z: &Matrix<T>, eps: f64) -> Matrix<T> {
    let n = z.rows();
    let norms: Vec<f64> = z.row_iter().map(norm).collect();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = T::from_f64(dot(z.row(i), z.row(j)) / (norms[i] * norms[j]).max(eps));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

pub fn zero_diagonal<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != a.cols() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        out[(i, i)] = T::zero();
    }
    Ok(out)
}

/// Divides each row by its sum; rows summing to less than `eps` become zero.
pub fn row_normalize<T: Real>(a: &Matrix<T>, eps: f64) -> Result<Matrix<T>> {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        if let Some((j, &v)) = row.iter().enumerate().find(|(_, v)| v.as_f64() < -1e-6) {
            return Err(Error::NegativeEntry {
                row: i,
                col: j,
                value: v.as_f64(),
            });
        }
        let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
        if sum >= eps {
            for v in row.iter_mut() {
                *v = T::from_f64(v.as_f64() / sum);
            }
        } else {
            row.iter_mut().for_each(|v| *v = T::zero());
        }
    }
    Ok(out)
}

/// Output of [`self_express`].
#[derive(Debug, Clone)]
pub struct SelfExpression<T = f32> {
    /// Self-expressed embeddings `W·Z`.
    pub expressed: Matrix<T>,
    /// Row-normalized similarity `D⁻¹A`.
    pub weights: Matrix<T>,
    /// Cosine similarity with zeroed diagonal.
    pub affinity: Matrix<T>,
}

/// Reconstructs every row of `z` from the other rows, weighted by cosine
/// similarity normalized to sum to one.
pub fn self_express<T: Real>(z: &Matrix<T>, eps: f64) -> Result<SelfExpression<T>> {
    let affinity = zero_diagonal(&cosine_gram(z, eps))?;
    let weights = row_normalize(&affinity, eps)?;
    let expressed = weights.matmul(z)?;
    Ok(SelfExpression {
        expressed,
        weights,
        affinity,
    })
}

/// Mean squared error over all entries.
pub fn mse<T: Real>(x: &Matrix<T>, y: &Matrix<T>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mse of {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let n = x.as_slice().len().max(1) as f64;
    let sum: f64 = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    Ok(sum / n)
}

/// Central-difference gradient of `f` at `theta`.
pub fn finite_diff_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let plus = f(&probe);
        probe[i] = theta[i] - h;
        let minus = f(&probe);
        probe[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(i));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows)
    }

    fn assert_close(a: &Matrix<f64>, b: &Matrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn cosine_gram_examples() {
        let a = cosine_gram(&m(&[&[1.0, 0.0], &[1.0, 0.0]]), EPS);
        assert_close(&a, &m(&[&[1.0, 1.0], &[1.0, 1.0]]), 1e-12);
        let a = cosine_gram(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), EPS);
        assert_close(&a, &Matrix::identity(2), 1e-12);
        let a = cosine_gram(&m(&[&[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]), EPS);
        assert!((a[(0, 1)] - 0.70711).abs() < 1e-5);
        assert!((a[(0, 2)] - 0.70711).abs() < 1e-5);
        assert!(a[(1, 2)].abs() < 1e-5);
    }

    #[test]
    fn cosine_gram_zero_row_is_guarded() {
        let a = cosine_gram(&m(&[&[0.0, 0.0], &[1.0, 2.0]]), EPS);
        assert!(a.is_finite());
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(0, 1)], 0.0);
    }

    #[test]
    fn zero_diagonal_examples() {
        let a = zero_diagonal(&m(&[&[1.0, 0.5], &[0.5, 1.0]])).unwrap();
        assert_eq!(a, m(&[&[0.0, 0.5], &[0.5, 0.0]]));
        assert_eq!(
            zero_diagonal(&Matrix::<f64>::identity(3)).unwrap(),
            Matrix::zeros(3, 3)
        );
        assert_eq!(zero_diagonal(&m(&[&[1.0]])).unwrap(), m(&[&[0.0]]));
        assert!(matches!(
            zero_diagonal(&Matrix::<f64>::zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn row_normalize_examples() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(row_normalize(&a, EPS).unwrap(), a);
        let w = row_normalize(&m(&[&[0.0, 2.0, 2.0], &[1.0, 0.0, 3.0], &[2.0, 2.0, 0.0]]), EPS)
            .unwrap();
        assert_close(
            &w,
            &m(&[&[0.0, 0.5, 0.5], &[0.25, 0.0, 0.75], &[0.5, 0.5, 0.0]]),
            1e-12,
        );
        let w = row_normalize(&m(&[&[0.0, 0.0], &[1.0, 0.0]]), EPS).unwrap();
        assert_eq!(w.row(0), &[0.0, 0.0]);
        assert!(matches!(
            row_normalize(&m(&[&[0.0, -0.5]]), EPS),
            Err(Error::NegativeEntry { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn self_express_examples() {
        let z = m(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let se = self_express(&z, EPS).unwrap();
        assert_eq!(se.expressed, z);

        let z = m(&[&[0.3, 0.9], &[2.0, 0.1]]);
        let se = self_express(&z, EPS).unwrap();
        assert_close(&se.weights, &m(&[&[0.0, 1.0], &[1.0, 0.0]]), 1e-12);
        assert_close(&se.expressed, &m(&[&[2.0, 0.1], &[0.3, 0.9]]), 1e-12);

        let se = self_express(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), EPS).unwrap();
        assert_eq!(se.expressed, Matrix::zeros(2, 2));
    }

    #[test]
    fn mse_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&m(&[&[0.0, 0.0]]), &m(&[&[1.0, 1.0]])).unwrap(), 1.0);
        assert_eq!(
            mse(&x, &m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap(),
            3.5
        );
        assert!(matches!(
            mse(&x, &Matrix::zeros(1, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|t| t[0] * t[0], &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0], 1e-4).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = finite_diff_grad(|t| t[0] * t[1], &[2.0, 5.0], 1e-4).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-6 && (g[1] - 2.0).abs() < 1e-6);
        assert!(matches!(
            finite_diff_grad(|_| f64::NAN, &[0.0], 1e-4),
            Err(Error::NonFinite(0))
        ));
    }

    #[test]
    fn matmul_variants_agree() {
        let a = m(&[&[1.0, 2.0, 0.0], &[-1.0, 0.5, 3.0]]);
        let b = m(&[&[2.0, 1.0], &[0.0, -1.0], &[4.0, 0.5]]);
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab, m(&[&[2.0, -1.0], &[10.0, 0.0]]));
        assert_eq!(a.transpose().matmul_tn(&b).unwrap(), ab);
        assert_eq!(a.matmul_nt(&b.transpose()).unwrap(), ab);
        assert!(a.matmul(&a).is_err());
    }
}
