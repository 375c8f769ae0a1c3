//! Kernel ridge regression with the fast ANOVA kernel: `(K + lambda I) alpha = y` by CG.

mod cg;
mod grid;
mod model_file;

pub use cg::{cg_solve, CgOutcome, LinearOperator, Shifted};
pub use grid::{grid_search, GridCell, GridSearchResult};
pub use model_file::MODEL_FORMAT;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::anova::{build_windows, mis_scores, AnovaKernelOperator, WindowSet};
use crate::data::{zscore_apply, zscore_fit, Dataset, ScalerStats, RNG_NAME};
use crate::error::{Error, Result};
use crate::nfft::AccuracyProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrrConfig {
    pub sigma: f64,
    pub lambda: f64,
    pub cg_tol: f64,
    pub cg_maxiter: usize,
    pub profile: AccuracyProfile,
    pub mis_threshold: f64,
}

impl KrrConfig {
    pub const DEFAULT_TOL: f64 = 1e-3;
    pub const DEFAULT_MAXITER: usize = 1000;

    pub fn new(sigma: f64, lambda: f64) -> Self {
        Self {
            sigma,
            lambda,
            cg_tol: Self::DEFAULT_TOL,
            cg_maxiter: Self::DEFAULT_MAXITER,
            profile: AccuracyProfile::Default,
            mis_threshold: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return bad(format!("cg tolerance must lie in (0, 1), got {}", self.cg_tol));
        }
        if self.cg_maxiter == 0 {
            return bad("cg iteration limit must be positive".into());
        }
        if !(self.mis_threshold >= 0.0 && self.mis_threshold.is_finite()) {
            return bad(format!("threshold must be nonnegative, got {}", self.mis_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub converged: bool,
}

/// A fitted model: everything needed to evaluate `s(z) = sum_i alpha_i K(x_i, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    config: KrrConfig,
    column_names: Vec<String>,
    scaler: ScalerStats,
    mis_scores: Vec<f64>,
    windows: WindowSet,
    /// Scaled training nodes restricted to the features used by some window, ascending.
    kept: Vec<usize>,
    nodes: Array2<f64>,
    alpha: Vec<f64>,
    diagnostics: FitDiagnostics,
    seed: Option<u64>,
    rng: String,
}

/// Fit with windows derived from the mutual-information ranking.
pub fn fit(train: &Dataset, config: &KrrConfig) -> Result<KrrModel> {
    fit_with_windows(train, config, None)
}

/// Fit with explicit windows (feature indices of `train`), bypassing the ranking when `Some`.
pub fn fit_with_windows(
    train: &Dataset,
    config: &KrrConfig,
    windows: Option<WindowSet>,
) -> Result<KrrModel> {
    config.validate()?;
    if train.len() < 2 {
        return Err(Error::InvalidData(format!(
            "fitting needs at least 2 samples, got {}",
            train.len()
        )));
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::InvalidData("training labels hold a single class".into()));
    }

    let scaler = zscore_fit(train.x())?;
    let scaled = zscore_apply(&scaler, train.x())?;
    let report = mis_scores(scaled.view(), train.y())?;
    let windows = match windows {
        Some(w) => w,
        None => build_windows(&report, config.mis_threshold)?,
    };
    let kept = windows.features();
    if let Some(&f) = kept.last().filter(|&&f| f >= train.dims()) {
        return Err(Error::InvalidParameter(format!(
            "window feature {f} out of range for {} columns",
            train.dims()
        )));
    }
    let nodes = scaled.select(Axis(1), &kept);
    let local = windows.remap(&kept)?;

    let op = AnovaKernelOperator::build(nodes.view(), &local, config.sigma, config.profile, None)?;
    let system = Shifted {
        op: &op,
        shift: config.lambda,
    };
    let outcome = cg_solve(&system, train.y(), config.cg_tol, config.cg_maxiter)?;

    Ok(KrrModel {
        config: *config,
        column_names: train.column_names().to_vec(),
        scaler,
        mis_scores: report.scores,
        windows,
        kept,
        nodes,
        alpha: outcome.x,
        diagnostics: FitDiagnostics {
            cg_iterations: outcome.iterations,
            cg_residual: outcome.residual,
            converged: outcome.converged,
        },
        seed: None,
        rng: RNG_NAME.to_string(),
    })
}

/// `sign` with `sign(0) = +1`.
pub fn decision_to_label(s: f64) -> f64 {
    if s >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn accuracy(predicted: &[f64], truth: &[f64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

impl KrrModel {
    pub fn config(&self) -> &KrrConfig {
        &self.config
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn scaler(&self) -> &ScalerStats {
        &self.scaler
    }

    pub fn mis_scores(&self) -> &[f64] {
        &self.mis_scores
    }

    pub fn windows(&self) -> &WindowSet {
        &self.windows
    }

    pub fn dropped_features(&self) -> Vec<usize> {
        self.windows.dropped(self.column_names.len())
    }

    pub fn training_nodes(&self) -> ArrayView2<'_, f64> {
        self.nodes.view()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Record the seed of the run that produced the training data.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn rng(&self) -> &str {
        &self.rng
    }

    fn local_windows(&self) -> Result<WindowSet> {
        self.windows.remap(&self.kept)
    }

    /// Square operator on the stored training nodes (the `K` used during fitting).
    pub fn training_operator(&self) -> Result<AnovaKernelOperator> {
        AnovaKernelOperator::build(
            self.nodes.view(),
            &self.local_windows()?,
            self.config.sigma,
            self.config.profile,
            None,
        )
    }

    /// Raw features in, unscaled decision values `s(z_i)` out.
    pub fn decision_function(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.column_names.len() {
            return Err(Error::shape("test columns", self.column_names.len(), x.ncols()));
        }
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        let scaled = zscore_apply(&self.scaler, x)?;
        let targets = scaled.select(Axis(1), &self.kept);
        let op = AnovaKernelOperator::build(
            self.nodes.view(),
            &self.local_windows()?,
            self.config.sigma,
            self.config.profile,
            Some(targets.view()),
        )?;
        op.apply(&self.alpha)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.decision_function(x)?.into_iter().map(decision_to_label).collect())
    }
}
