//! Feature grouping by mutual information and the windowed Gaussian ANOVA kernel
//!
//! `K = sum_l eta_l K_l`, where `K_l` is a Gaussian kernel on the (at most three)
//! features of window `W_l` and `eta_l = 1 / P`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fastsum::{FastsumOperator, PeriodizationConfig, RadialKernel};
use crate::nfft::{AccuracyProfile, MAX_DIMS};

/// Mutual information between each feature and the binary label, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisReport {
    pub scores: Vec<f64>,
    /// Feature indices by descending score; ties by ascending index.
    pub ranking: Vec<usize>,
    pub bins: usize,
}

impl MisReport {
    pub fn from_scores(scores: Vec<f64>, bins: usize) -> Self {
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self {
            scores,
            ranking,
            bins,
        }
    }
}

/// `B = min(64, ceil(sqrt(N)))`.
pub fn histogram_bins(samples: usize) -> usize {
    ((samples as f64).sqrt().ceil() as usize).clamp(1, 64)
}

/// Plug-in histogram estimate of `I(feature; label)` for every column of `x`.
///
/// Each feature is cut into `B` equal-width bins over its observed range; labels
/// must be `-1` or `+1` with both classes present.
pub fn mis_scores(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<MisReport> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::InvalidData("mutual information of an empty data set".into()));
    }
    if y.len() != n {
        return Err(Error::shape("label vector", n, y.len()));
    }
    if n < 2 {
        return Err(Error::InvalidData("mutual information needs at least two samples".into()));
    }
    let class: Vec<usize> = y
        .iter()
        .map(|&v| match v {
            1.0 => Ok(1),
            -1.0 => Ok(0),
            other => Err(Error::InvalidData(format!("label {other} is not -1 or +1"))),
        })
        .collect::<Result<_>>()?;
    let positives = class.iter().sum::<usize>();
    if positives == 0 || positives == n {
        return Err(Error::InvalidData(
            "mutual information needs both classes present".into(),
        ));
    }
    let class_counts = [n - positives, positives];
    let bins = histogram_bins(n);

    let scores = x
        .columns()
        .into_iter()
        .map(|col| {
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let span = hi - lo;
            let mut joint = vec![[0usize; 2]; bins];
            for (&v, &c) in col.iter().zip(&class) {
                let b = if span > 0.0 {
                    (((v - lo) / span * bins as f64) as usize).min(bins - 1)
                } else {
                    0
                };
                joint[b][c] += 1;
            }
            let total = n as f64;
            let mi: f64 = joint
                .iter()
                .flat_map(|cell| {
                    let marginal = (cell[0] + cell[1]) as f64;
                    cell.iter().zip(class_counts).filter(|(&k, _)| k > 0).map(move |(&k, nc)| {
                        let k = k as f64;
                        k / total * (k * total / (marginal * nc as f64)).ln()
                    })
                })
                .sum();
            mi.max(0.0)
        })
        .collect();

    Ok(MisReport::from_scores(scores, bins))
}

/// Disjoint feature windows with equal weights `1 / P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSet {
    windows: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl WindowSet {
    pub fn new(windows: Vec<Vec<usize>>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::InvalidParameter("window set is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in &windows {
            if w.is_empty() || w.len() > MAX_DIMS {
                return Err(Error::InvalidParameter(format!(
                    "windows hold 1..={MAX_DIMS} features, got {}",
                    w.len()
                )));
            }
            for &f in w {
                if !seen.insert(f) {
                    return Err(Error::InvalidParameter(format!(
                        "feature {f} appears in more than one window"
                    )));
                }
            }
        }
        let weight = 1.0 / windows.len() as f64;
        Ok(Self {
            weights: vec![weight; windows.len()],
            windows,
        })
    }

    /// Consecutive windows `{0,1,2}, {3,4,5}, ..` over `d` features.
    pub fn by_index(d: usize) -> Result<Self> {
        Self::new((0..d).collect::<Vec<_>>().chunks(MAX_DIMS).map(<[usize]>::to_vec).collect())
    }

    pub fn windows(&self) -> &[Vec<usize>] {
        &self.windows
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Every feature used by some window, ascending.
    pub fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.windows.iter().flatten().copied().collect();
        f.sort_unstable();
        f
    }

    /// Features of `0..d` that no window uses.
    pub fn dropped(&self, d: usize) -> Vec<usize> {
        let used = self.features();
        (0..d).filter(|f| used.binary_search(f).is_err()).collect()
    }

    /// Re-express windows relative to a column subset (`columns` must cover every feature).
    pub fn remap(&self, columns: &[usize]) -> Result<Self> {
        let windows = self
            .windows
            .iter()
            .map(|w| {
                w.iter()
                    .map(|f| {
                        columns.iter().position(|c| c == f).ok_or_else(|| {
                            Error::InvalidParameter(format!("feature {f} not among the kept columns"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(windows)
    }
}

/// Keep features scoring at least `threshold`, in ranking order, three per window.
pub fn build_windows(report: &MisReport, threshold: f64) -> Result<WindowSet> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    let kept: Vec<usize> = report
        .ranking
        .iter()
        .copied()
        .filter(|&f| report.scores[f] >= threshold)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyModel { threshold });
    }
    WindowSet::new(kept.chunks(MAX_DIMS).map(<[usize]>::to_vec).collect())
}

/// Copy the columns of one window into a contiguous matrix.
pub(crate) fn window_columns(x: ArrayView2<'_, f64>, window: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), window.len()), |(i, t)| x[[i, window[t]]])
}

/// `K alpha = sum_l eta_l K_l alpha`, one fast summation per window.
#[derive(Debug)]
pub struct AnovaKernelOperator {
    windows: WindowSet,
    sigma: f64,
    parts: Vec<FastsumOperator>,
    sources: usize,
    targets: usize,
}

impl AnovaKernelOperator {
    /// `targets = None` builds the square training operator (`Z = X`).
    pub fn build(
        x: ArrayView2<'_, f64>,
        windows: &WindowSet,
        sigma: f64,
        profile: AccuracyProfile,
        targets: Option<ArrayView2<'_, f64>>,
    ) -> Result<Self> {
        Self::build_with(x, windows, sigma, profile, PeriodizationConfig::for_profile(profile), targets)
    }

    pub fn build_with(
        x: ArrayView2<'_, f64>,
        windows: &WindowSet,
        sigma: f64,
        profile: AccuracyProfile,
        config: PeriodizationConfig,
        targets: Option<ArrayView2<'_, f64>>,
    ) -> Result<Self> {
        let kernel = RadialKernel::gaussian(sigma)?;
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
        let parts = windows
            .windows()
            .par_iter()
            .map(|w| {
                let src = window_columns(x, w);
                let tgt = targets.map(|t| window_columns(t, w));
                FastsumOperator::build(kernel, config, profile, src.view(), tgt.as_ref().map(|t| t.view()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            windows: windows.clone(),
            sigma,
            parts,
            sources: x.nrows(),
            targets: targets.map_or(x.nrows(), |t| t.nrows()),
        })
    }

    pub fn windows(&self) -> &WindowSet {
        &self.windows
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn num_sources(&self) -> usize {
        self.sources
    }

    pub fn num_targets(&self) -> usize {
        self.targets
    }

    pub fn parts(&self) -> &[FastsumOperator] {
        &self.parts
    }

    pub fn apply(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.sources {
            return Err(Error::shape("coefficient vector", self.sources, alpha.len()));
        }
        let partial = self
            .parts
            .par_iter()
            .map(|op| op.apply(alpha))
            .collect::<Result<Vec<_>>>()?;
        // fixed summation order keeps results independent of scheduling
        let mut out = vec![0.0; self.targets];
        for (part, &eta) in partial.iter().zip(self.windows.weights()) {
            for (o, v) in out.iter_mut().zip(part) {
                *o += eta * v;
            }
        }
        Ok(out)
    }
}
