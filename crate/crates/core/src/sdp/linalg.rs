//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Lower Cholesky factor, or `None` if `m` is not numerically PD.
pub(crate) fn cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut s = m.clone();
    symmetrize(&mut s);
    nalgebra::Cholesky::new(s).map(|c| c.l())
}

/// Cholesky of `m + reg * I`, increasing `reg` until it succeeds.
pub(crate) struct RegularizedCholesky {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl RegularizedCholesky {
    pub(crate) fn new(m: &DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut reg = 0.0;
        for _ in 0..12 {
            let mut a = m.clone();
            for i in 0..n {
                a[(i, i)] += reg;
            }
            if let Some(chol) = nalgebra::Cholesky::new(a) {
                return Some(RegularizedCholesky { chol });
            }
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        }
        None
    }

    pub(crate) fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub(crate) fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// Largest `alpha` with `lambda + alpha * d >= 0` for the scaled PSD step
/// `d` around the diagonal `lambda` (returned unbounded as `f64::INFINITY`).
pub(crate) fn psd_max_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let mut t = d.clone();
    for i in 0..n {
        for j in 0..n {
            t[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    symmetrize(&mut t);
    let min = SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_to_boundary() {
        let lambda = DVector::from_vec(vec![1.0, 4.0]);
        let d = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]);
        assert!((psd_max_step(&lambda, &d) - 0.5).abs() < 1e-12);
        assert_eq!(min_eigenvalue(&DMatrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn regularized_cholesky_on_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = RegularizedCholesky::new(&m).unwrap();
        let x = c.solve(&DVector::from_vec(vec![2.0, 2.0]));
        assert!(((&m * &x)[0] - 2.0).abs() < 1e-6);
    }
}
