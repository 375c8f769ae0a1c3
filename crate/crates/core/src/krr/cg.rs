use crate::anova::AnovaKernelOperator;
use crate::error::{Error, Result};
use crate::oracle::DenseKernelMatrix;

/// A square linear map applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for AnovaKernelOperator {
    fn dim(&self) -> usize {
        self.num_sources()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.num_targets() != self.num_sources() {
            return Err(Error::InvalidParameter(
                "operator with separate targets is not square".into(),
            ));
        }
        AnovaKernelOperator::apply(self, x)
    }
}

impl LinearOperator for DenseKernelMatrix {
    fn dim(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.nrows() != self.ncols() {
            return Err(Error::InvalidParameter("dense kernel matrix is not square".into()));
        }
        self.matvec(x)
    }
}

/// `A + shift * I`.
pub struct Shifted<'a, A: ?Sized> {
    pub op: &'a A,
    pub shift: f64,
}

impl<A: LinearOperator + ?Sized> LinearOperator for Shifted<'_, A> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.op.apply(x)?;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += self.shift * xi;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `|r| / |b|` tracked by the recurrence.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unpreconditioned conjugate gradients from `x0 = 0`.
///
/// Stops once `|r| / |b| <= tol`; running out of iterations is reported through
/// `converged = false` rather than an error.
pub fn cg_solve<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    tol: f64,
    maxiter: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::shape("right-hand side", n, b.len()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("right-hand side is not finite".into()));
    }
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut residual = 1.0;

    for it in 1..=maxiter {
        let ap = op.apply(&p)?;
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::Breakdown {
                iteration: it,
                reason: format!("curvature p'Ap = {pap}"),
            });
        }
        if pap <= 0.0 {
            return Err(Error::Breakdown {
                iteration: it,
                reason: format!("operator not positive definite (p'Ap = {pap:e})"),
            });
        }
        let step = rr / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += step * pi;
            *ri -= step * api;
        }
        let rr_next = dot(&r, &r);
        if !rr_next.is_finite() {
            return Err(Error::Breakdown {
                iteration: it,
                reason: "residual is not finite".into(),
            });
        }
        residual = rr_next.sqrt() / b_norm;
        if residual <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual,
                converged: true,
            });
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    log::warn!("conjugate gradients stopped after {maxiter} iterations at relative residual {residual:.3e}");
    Ok(CgOutcome {
        x,
        iterations: maxiter,
        residual,
        converged: false,
    })
}
