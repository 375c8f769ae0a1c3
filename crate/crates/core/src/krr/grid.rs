use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{accuracy, fit, KrrConfig, KrrModel};
use crate::data::{split_train_test, Dataset};
use crate::error::{Error, Result};

/// One `(sigma, lambda)` evaluation on the inner holdout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub sigma: f64,
    pub lambda: f64,
    /// `None` when the cell failed or was not scored (single-cell grids).
    pub accuracy: Option<f64>,
    pub cg_iterations: Option<usize>,
    pub converged: Option<bool>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: KrrConfig,
    pub best_accuracy: Option<f64>,
    pub cells: Vec<GridCell>,
    /// `best` refitted on the full training set.
    pub model: KrrModel,
}

/// Better accuracy wins; ties go to smaller lambda, then smaller sigma.
fn better(a: &GridCell, b: &GridCell) -> bool {
    let (Some(x), Some(y)) = (a.accuracy, b.accuracy) else {
        return a.accuracy.is_some();
    };
    x > y || (x == y && (a.lambda < b.lambda || (a.lambda == b.lambda && a.sigma < b.sigma)))
}

/// Score every grid cell on an inner 50:50 split of `train`, then refit the winner on all of it.
///
/// Cells are laid out sigma-major. Failing cells are recorded and skipped.
pub fn grid_search(
    train: &Dataset,
    sigmas: &[f64],
    lambdas: &[f64],
    base: &KrrConfig,
    seed: u64,
) -> Result<GridSearchResult> {
    if sigmas.is_empty() || lambdas.is_empty() {
        return Err(Error::InvalidParameter("grid search needs nonempty grids".into()));
    }
    let configs: Vec<KrrConfig> = sigmas
        .iter()
        .flat_map(|&sigma| {
            lambdas.iter().map(move |&lambda| KrrConfig {
                sigma,
                lambda,
                ..*base
            })
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }

    if let [only] = configs[..] {
        let start = Instant::now();
        let model = fit(train, &only)?;
        let cell = GridCell {
            sigma: only.sigma,
            lambda: only.lambda,
            accuracy: None,
            cg_iterations: Some(model.diagnostics().cg_iterations),
            converged: Some(model.diagnostics().converged),
            seconds: start.elapsed().as_secs_f64(),
            error: None,
        };
        return Ok(GridSearchResult {
            best: only,
            best_accuracy: None,
            cells: vec![cell],
            model,
        });
    }

    let (inner_train, holdout) = split_train_test(train, 0.5, seed)?;
    let cells: Vec<GridCell> = configs
        .par_iter()
        .map(|c| {
            let start = Instant::now();
            let scored = fit(&inner_train, c).and_then(|m| {
                let pred = m.predict(holdout.x())?;
                Ok((accuracy(&pred, holdout.y()), m.diagnostics().cg_iterations, m.diagnostics().converged))
            });
            let seconds = start.elapsed().as_secs_f64();
            match scored {
                Ok((acc, it, conv)) => GridCell {
                    sigma: c.sigma,
                    lambda: c.lambda,
                    accuracy: Some(acc),
                    cg_iterations: Some(it),
                    converged: Some(conv),
                    seconds,
                    error: None,
                },
                Err(e) => {
                    log::warn!("grid cell sigma={} lambda={} failed: {e}", c.sigma, c.lambda);
                    GridCell {
                        sigma: c.sigma,
                        lambda: c.lambda,
                        accuracy: None,
                        cg_iterations: None,
                        converged: None,
                        seconds,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    let best_idx = (0..cells.len())
        .filter(|&i| cells[i].accuracy.is_some())
        .reduce(|a, b| if better(&cells[b], &cells[a]) { b } else { a })
        .ok_or_else(|| Error::InvalidData("every grid cell failed".into()))?;
    let best = configs[best_idx];
    let model = fit(train, &best)?;
    Ok(GridSearchResult {
        best,
        best_accuracy: cells[best_idx].accuracy,
        cells,
        model,
    })
}
