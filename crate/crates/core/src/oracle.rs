//! Dense reference implementations: explicit ANOVA kernel matrices and a Cholesky KRR solve.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::anova::{window_columns, WindowSet};
use crate::error::{Error, Result};
use crate::fastsum::{direct_sum, RadialKernel};

/// Largest side length the dense path will allocate.
pub const DENSE_SIZE_GUARD: usize = 20_000;

/// Explicit `K[i, j] = sum_l eta_l exp(-|z_i,W_l - x_j,W_l|^2 / sigma^2)`.
#[derive(Debug, Clone)]
pub struct DenseKernelMatrix {
    matrix: DMatrix<f64>,
}

impl DenseKernelMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matvec(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.ncols() {
            return Err(Error::shape("coefficient vector", self.ncols(), alpha.len()));
        }
        let v = &self.matrix * DVector::from_column_slice(alpha);
        Ok(v.as_slice().to_vec())
    }
}

fn check_guard(rows: usize, cols: usize, limit: usize) -> Result<()> {
    if rows > limit || cols > limit {
        return Err(Error::SizeGuard { rows, cols, limit });
    }
    Ok(())
}

fn check_inputs(
    x: ArrayView2<'_, f64>,
    windows: &WindowSet,
    targets: Option<ArrayView2<'_, f64>>,
) -> Result<()> {
    let d = x.ncols();
    if let Some(&f) = windows.features().iter().find(|&&f| f >= d) {
        return Err(Error::InvalidParameter(format!(
            "window feature {f} out of range for {d} columns"
        )));
    }
    if let Some(t) = targets {
        if t.ncols() != d {
            return Err(Error::shape("target columns", d, t.ncols()));
        }
    }
    Ok(())
}

/// Assemble the kernel matrix between `targets` (rows, default `x`) and `x` (columns).
pub fn assemble_dense(
    x: ArrayView2<'_, f64>,
    windows: &WindowSet,
    sigma: f64,
    targets: Option<ArrayView2<'_, f64>>,
) -> Result<DenseKernelMatrix> {
    let z = targets.unwrap_or(x);
    check_guard(z.nrows(), x.nrows(), DENSE_SIZE_GUARD)?;
    check_inputs(x, windows, targets)?;
    let kernel = RadialKernel::gaussian(sigma)?;
    let (rows, cols) = (z.nrows(), x.nrows());
    let parts: Vec<_> = windows
        .windows()
        .iter()
        .map(|w| (window_columns(x, w), window_columns(z, w)))
        .collect();

    let mut data = vec![0.0; rows * cols];
    // column-major storage: column j holds the kernel against source j
    data.par_chunks_mut(rows).enumerate().for_each(|(j, col)| {
        for ((xs, zs), &eta) in parts.iter().zip(windows.weights()) {
            let xj = xs.row(j);
            for (i, out) in col.iter_mut().enumerate() {
                let r2: f64 = zs.row(i).iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                *out += eta * kernel.eval_squared(r2);
            }
        }
    });
    Ok(DenseKernelMatrix {
        matrix: DMatrix::from_vec(rows, cols, data),
    })
}

/// Matrix-free dense product `K alpha` in `O(N_x N_z)` time and `O(N)` memory.
pub fn direct_apply(
    x: ArrayView2<'_, f64>,
    windows: &WindowSet,
    sigma: f64,
    targets: Option<ArrayView2<'_, f64>>,
    alpha: &[f64],
    limit: usize,
) -> Result<Vec<f64>> {
    let z = targets.unwrap_or(x);
    check_guard(z.nrows(), x.nrows(), limit)?;
    check_inputs(x, windows, targets)?;
    let kernel = RadialKernel::gaussian(sigma)?;
    let mut out = vec![0.0; z.nrows()];
    for (w, &eta) in windows.windows().iter().zip(windows.weights()) {
        let part = direct_sum(&kernel, window_columns(x, w).view(), window_columns(z, w).view(), alpha)?;
        for (o, v) in out.iter_mut().zip(part) {
            *o += eta * v;
        }
    }
    Ok(out)
}

/// Solve `(K + lambda I) alpha = y` by Cholesky factorisation.
pub fn dense_krr_solve(k: &DenseKernelMatrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "system matrix must be square, got {}x{}",
            n,
            k.ncols()
        )));
    }
    if y.len() != n {
        return Err(Error::shape("right-hand side", n, y.len()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "regularisation must be nonnegative, got {lambda}"
        )));
    }
    let mut a = k.matrix.clone();
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Factorization("matrix is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(y)).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn two_point_matrix_by_hand() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let w = WindowSet::new(vec![vec![0], vec![1]]).unwrap();
        let k = assemble_dense(x.view(), &w, 1.0, None).unwrap();
        let off = (-1.0f64).exp();
        assert_eq!(k.matrix()[(0, 0)], 1.0);
        assert_eq!(k.matrix()[(1, 1)], 1.0);
        assert!((k.matrix()[(0, 1)] - off).abs() < 1e-15);
        assert!((k.matrix()[(1, 0)] - off).abs() < 1e-15);
    }

    #[test]
    fn rectangular_orientation() {
        let x = array![[0.0], [2.0]];
        let z = array![[0.0], [1.0], [2.0]];
        let w = WindowSet::by_index(1).unwrap();
        let k = assemble_dense(x.view(), &w, 2.0, Some(z.view())).unwrap();
        assert_eq!((k.nrows(), k.ncols()), (3, 2));
        assert!((k.matrix()[(1, 0)] - (-0.25f64).exp()).abs() < 1e-15);
        assert_eq!(k.matrix()[(2, 1)], 1.0);
    }

    #[test]
    fn guard_trips_before_allocation() {
        let x = Array2::<f64>::zeros((DENSE_SIZE_GUARD + 1, 1));
        let w = WindowSet::by_index(1).unwrap();
        assert!(matches!(
            assemble_dense(x.view(), &w, 1.0, None),
            Err(Error::SizeGuard { .. })
        ));
        let small = Array2::<f64>::zeros((10, 1));
        assert!(matches!(
            direct_apply(small.view(), &w, 1.0, None, &[0.0; 10], 5),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn direct_apply_matches_matvec() {
        let x = Array2::from_shape_fn((30, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.1);
        let w = WindowSet::by_index(5).unwrap();
        let alpha: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let k = assemble_dense(x.view(), &w, 0.8, None).unwrap();
        let a = k.matvec(&alpha).unwrap();
        let b = direct_apply(x.view(), &w, 0.8, None, &alpha, DENSE_SIZE_GUARD).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_recovers_known_coefficients() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i as f64 * 0.37 + j as f64).sin());
        let w = WindowSet::by_index(2).unwrap();
        let k = assemble_dense(x.view(), &w, 1.0, None).unwrap();
        let alpha: Vec<f64> = (0..20).map(|i| i as f64 - 10.0).collect();
        let mut y = k.matvec(&alpha).unwrap();
        for (yi, ai) in y.iter_mut().zip(&alpha) {
            *yi += 0.5 * ai;
        }
        let got = dense_krr_solve(&k, &y, 0.5).unwrap();
        for (g, a) in got.iter().zip(&alpha) {
            assert!((g - a).abs() < 1e-8, "{g} vs {a}");
        }
    }

    #[test]
    fn solve_validates() {
        let x = array![[0.0], [1.0]];
        let w = WindowSet::by_index(1).unwrap();
        let k = assemble_dense(x.view(), &w, 1.0, None).unwrap();
        assert!(dense_krr_solve(&k, &[1.0], 0.1).is_err());
        assert!(dense_krr_solve(&k, &[1.0, 1.0], -1.0).is_err());
        let dup = array![[0.0], [0.0]];
        let k = assemble_dense(dup.view(), &w, 1.0, None).unwrap();
        assert!(matches!(dense_krr_solve(&k, &[1.0, 1.0], 0.0), Err(Error::Factorization(_))));
    }
}
