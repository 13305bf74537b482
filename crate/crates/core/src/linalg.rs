//! Small dense matrices. Factorizations delegate to nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
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
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quad_form(&self, v: &[T]) -> T {
        dot(v, &self.mul_vec(v))
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
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Solve `A x = b` for symmetric positive definite `A` by Cholesky.
///
/// The factorization runs in `f64` whatever `T` is.
pub fn solve_spd<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    assert_eq!(n, b.len());
    let m = to_nalgebra(a);
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("design matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let floor = scale * f64::EPSILON * 16.0 * n.max(1) as f64;
    if let Some(j) = (0..n).find(|&j| !(l[(j, j)] * l[(j, j)] > floor)) {
        return Err(Error::RankDeficient(format!("pivot {j} is numerically zero")));
    }
    let rhs = DVector::from_iterator(n, b.iter().map(|v| v.as_f64()));
    Ok(chol.solve(&rhs).iter().map(|&v| T::of(v)).collect())
}

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// matrix columns.
pub fn symmetric_eigen<T: Real>(m: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = m.rows();
    assert_eq!(n, m.cols());
    let eig = to_nalgebra(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| T::of(eig.eigenvalues[i])).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new)] = T::of(eig.eigenvectors[(k, old)]);
        }
    }
    (values, vectors)
}

fn to_nalgebra<T: Real>(m: &Matrix<T>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)].as_f64())
}

/// Symmetric inverse square root `M^{-1/2}` of a positive definite matrix.
pub fn inverse_sqrt_spd<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let (vals, vecs) = symmetric_eigen(m);
    if vals.iter().any(|&l| !(l > T::zero())) {
        return Err(Error::RankDeficient(format!(
            "matrix has non-positive eigenvalue {}",
            vals[0].as_f64()
        )));
    }
    let n = m.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for k in 0..n {
                s += vecs[(i, k)] * vecs[(j, k)] / vals[k].sqrt();
            }
            out[(i, j)] = s;
        }
    }
    Ok(out)
}

/// Empirical covariance of the rows with divisor `n` (centered).
pub fn covariance<T: Real>(rows: &[[T; 3]]) -> Matrix<T> {
    let n = T::of_usize(rows.len());
    let mut means = [T::zero(); 3];
    for r in rows {
        for k in 0..3 {
            means[k] += r[k];
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut cov = Matrix::zeros(3, 3);
    for r in rows {
        for i in 0..3 {
            for j in 0..=i {
                cov[(i, j)] += (r[i] - means[i]) * (r[j] - means[j]);
            }
        }
    }
    for i in 0..3 {
        for j in 0..=i {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_solves_small_system() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x = solve_spd(&a, &[1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0 / 11.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 7.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(solve_spd(&a, &[1.0, 1.0]), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = Matrix::from_rows(&[
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ]);
        let (vals, vecs) = symmetric_eigen(&a);
        let s2 = 2f64.sqrt();
        assert_abs_diff_eq!(vals[0], 2.0 - s2, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[2], 2.0 + s2, epsilon = 1e-12);
        for k in 0..3 {
            let col: Vec<f64> = (0..3).map(|i| vecs[(i, k)]).collect();
            let av = a.mul_vec(&col);
            for i in 0..3 {
                assert_abs_diff_eq!(av[i], vals[k] * col[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inverse_sqrt_whitens() {
        let a = Matrix::from_rows(&[
            vec![2.0, 0.3, 0.1],
            vec![0.3, 1.0, 0.2],
            vec![0.1, 0.2, 0.5],
        ]);
        let r = inverse_sqrt_spd(&a).unwrap();
        // r a r = I
        let mut ra: Matrix<f64> = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                ra[(i, j)] = (0..3).map(|k| r[(i, k)] * a[(k, j)]).sum();
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| ra[(i, k)] * r[(k, j)]).sum();
                assert_abs_diff_eq!(v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }
}
