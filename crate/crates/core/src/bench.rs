//! Timing of fast versus direct kernel-vector products on synthetic data.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::anova::{AnovaKernelOperator, WindowSet};
use crate::data::rng;
use crate::error::{Error, Result};
use crate::nfft::AccuracyProfile;
use crate::oracle::{direct_apply, DENSE_SIZE_GUARD};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
    pub d: usize,
    pub sigma: f64,
    pub profile: AccuracyProfile,
    pub runs: usize,
    pub seed: u64,
    /// Sizes above this skip the direct product.
    pub direct_limit: usize,
}

impl BenchConfig {
    pub fn new(n_list: Vec<usize>) -> Self {
        Self {
            n_list,
            d: 3,
            sigma: 100.0,
            profile: AccuracyProfile::Default,
            runs: 1,
            seed: 0,
            direct_limit: DENSE_SIZE_GUARD,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::InvalidParameter("N list must hold positive sizes".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("N list must be strictly ascending".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    /// Mean seconds per direct product; `None` when skipped.
    pub t_direct: Option<f64>,
    /// Mean seconds per fast product, precomputation excluded.
    pub t_fast: f64,
    /// Seconds for the one-off fast precomputation.
    pub t_setup: f64,
    /// `|K a - K_fast a| / |K a|` from the first run.
    pub rel_error: Option<f64>,
    pub direct_skipped: bool,
}

/// Uniform nodes in `[0, 1]^d` and coefficients in `[-1, 1]`.
pub fn synthetic_problem(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let x = Array2::from_shape_simple_fn((n, d), || r.gen::<f64>());
    let alpha = (0..n).map(|_| r.gen_range(-1.0..=1.0)).collect();
    (x, alpha)
}

pub fn relative_error(reference: &[f64], approx: &[f64]) -> f64 {
    let num: f64 = reference.iter().zip(approx).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = reference.iter().map(|a| a * a).sum();
    (num / den).sqrt()
}

pub fn run_mvm_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let windows = WindowSet::by_index(cfg.d)?;
    cfg.n_list
        .iter()
        .map(|&n| {
            let (x, alpha) = synthetic_problem(n, cfg.d, cfg.seed ^ n as u64);
            let start = Instant::now();
            let op = AnovaKernelOperator::build(x.view(), &windows, cfg.sigma, cfg.profile, None)?;
            let t_setup = start.elapsed().as_secs_f64();

            let mut fast = Vec::new();
            let start = Instant::now();
            for _ in 0..cfg.runs {
                fast = op.apply(&alpha)?;
            }
            let t_fast = start.elapsed().as_secs_f64() / cfg.runs as f64;

            let direct_skipped = n > cfg.direct_limit;
            let (t_direct, rel_error) = if direct_skipped {
                (None, None)
            } else {
                let mut exact = Vec::new();
                let start = Instant::now();
                for _ in 0..cfg.runs {
                    exact = direct_apply(x.view(), &windows, cfg.sigma, None, &alpha, cfg.direct_limit)?;
                }
                let t = start.elapsed().as_secs_f64() / cfg.runs as f64;
                (Some(t), Some(relative_error(&exact, &fast)))
            };
            Ok(BenchRow {
                n,
                t_direct,
                t_fast,
                t_setup,
                rel_error,
                direct_skipped,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:e}"))
}

/// CSV with header `n,t_direct,t_fast,t_setup,rel_error,direct_skipped,fast_faster`; skipped cells are
/// empty. The first `fast_faster = true` row is the crossover.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,t_direct,t_fast,t_setup,rel_error,direct_skipped,fast_faster\n");
    for r in rows {
        let faster = r.t_direct.map_or_else(String::new, |t| (r.t_fast < t).to_string());
        s.push_str(&format!(
            "{},{},{:e},{:e},{},{},{}\n",
            r.n,
            opt(r.t_direct),
            r.t_fast,
            r.t_setup,
            opt(r.rel_error),
            r.direct_skipped,
            faster
        ));
    }
    s
}

/// Smallest benchmarked `N` where the fast product beat the direct one.
pub fn crossover(rows: &[BenchRow]) -> Option<usize> {
    rows.iter()
        .find(|r| r.t_direct.is_some_and(|t| r.t_fast < t))
        .map(|r| r.n)
}

/// Least-squares slope of `log t` against `log n`.
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(n, t)| ((n as f64).ln(), t.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
