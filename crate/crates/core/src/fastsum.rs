//! Fast summation of radial kernels.
//!
//! Approximates `s(z_i) = sum_j alpha_j kappa(||z_i - x_j||)` by
//!
//! 1. moving all nodes into a ball of radius `L/2` on the torus, so every
//!    pairwise distance is at most `L`,
//! 2. replacing `kappa` by a 1-periodic function that equals `kappa` on
//!    `||r|| <= L`, joins a constant through a derivative-matching polynomial on
//!    `L < ||r|| < L + l` and stays constant beyond,
//! 3. sampling that function on an equispaced grid and taking its FFT, which gives
//!    the diagonal `D` of Fourier coefficients,
//! 4. applying `Phi_z D Phi_x^*` with the fast transforms from [`crate::nfft`].

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nfft::{fft_nd, AccuracyProfile, GridSpec, NfftPlan, NodeSet, MAX_DIMS};

/// Largest condition number accepted for the transition-polynomial system.
const MAX_TRANSITION_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
}

/// A radial kernel `kappa(r)`; the Gaussian is `exp(-r^2 / sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialKernel {
    kind: KernelKind,
    sigma: f64,
}

impl RadialKernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel shape parameter must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Gaussian,
            sigma,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.eval_squared(r * r)
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn eval_squared(&self, r2: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-r2 / (self.sigma * self.sigma)).exp(),
        }
    }

    /// Derivatives `kappa^(q)(r)` for `q = 0..count`.
    pub fn derivatives(&self, r: f64, count: usize) -> Vec<f64> {
        match self.kind {
            KernelKind::Gaussian => {
                // d^q/dr^q exp(-(r/s)^2) = (-1)^q H_q(r/s) exp(-(r/s)^2) / s^q
                let u = r / self.sigma;
                let e = (-u * u).exp();
                let mut out = Vec::with_capacity(count);
                let (mut h_prev, mut h) = (0.0, 1.0);
                let mut scale = 1.0;
                for q in 0..count {
                    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                    out.push(sign * h * e * scale);
                    let h_next = 2.0 * u * h - 2.0 * q as f64 * h_prev;
                    h_prev = h;
                    h = h_next;
                    scale /= self.sigma;
                }
                out
            }
        }
    }

    /// Same kernel in coordinates multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::gaussian(self.sigma * factor)
    }
}

/// Geometry of the periodized kernel, in torus units (period 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodizationConfig {
    /// Largest pairwise node distance `L` at which the kernel is kept exact.
    pub ball_radius: f64,
    /// Width `l` of the polynomial transition region.
    pub transition_width: f64,
    /// Number of derivatives matched at each end of the transition.
    pub smoothness: usize,
    /// Per-dimension size of the sampling grid, even.
    pub coeff_grid: usize,
}

impl PeriodizationConfig {
    pub const DEFAULT_TRANSITION_WIDTH: f64 = 1.0 / 16.0;
    pub const DEFAULT_SMOOTHNESS: usize = 7;

    /// Defaults for a profile: `l = 1/16`, `L = 1/2 - l`, seven matched derivatives.
    pub fn for_profile(profile: AccuracyProfile) -> Self {
        let width = Self::DEFAULT_TRANSITION_WIDTH;
        Self {
            ball_radius: 0.5 - width,
            transition_width: width,
            smoothness: Self::DEFAULT_SMOOTHNESS,
            coeff_grid: profile.coeff_grid(),
        }
    }

    /// Radius of the ball the nodes are mapped into.
    pub fn node_radius(&self) -> f64 {
        0.5 * self.ball_radius
    }

    pub fn validate(&self) -> Result<()> {
        let (big_l, width) = (self.ball_radius, self.transition_width);
        if !(big_l > 0.0 && big_l < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must lie in (0, 1/2), got {big_l}"
            )));
        }
        if !(width > 0.0) || big_l + width > 0.5 + 1e-15 {
            return Err(Error::InvalidParameter(format!(
                "transition width {width} must be positive with L + l <= 1/2 (L = {big_l})"
            )));
        }
        if self.smoothness == 0 {
            return Err(Error::InvalidParameter("smoothness degree must be >= 1".into()));
        }
        if self.coeff_grid < 2 || !self.coeff_grid.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "coefficient grid must be even and >= 2, got {}",
                self.coeff_grid
            )));
        }
        Ok(())
    }
}

impl Default for PeriodizationConfig {
    fn default() -> Self {
        Self::for_profile(AccuracyProfile::Default)
    }
}

/// The radial profile of the periodized kernel.
#[derive(Debug, Clone)]
pub struct RegularizedProfile {
    kernel: RadialKernel,
    inner: f64,
    width: f64,
    /// Monomial coefficients in `t = (r - L) / l`, lowest degree first.
    transition: Vec<f64>,
    plateau: f64,
}

impl RegularizedProfile {
    /// Build the transition polynomial of degree `2p - 1` in `t = (r - L) / l`.
    ///
    /// At `t = 0` it matches `kappa` and its first `p - 1` derivatives; at `t = 1` it
    /// meets a constant plateau with vanishing derivatives. The plateau value is the
    /// one minimising `int_0^1 (P^(p)(t))^2 dt`, the smoothest such join.
    pub fn new(kernel: RadialKernel, config: &PeriodizationConfig) -> Result<Self> {
        config.validate()?;
        let p = config.smoothness;
        let (inner, width) = (config.ball_radius, config.transition_width);

        // Taylor-normalised two-point Hermite system
        let n = 2 * p;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        let derivs = kernel.derivatives(inner, p);
        let mut factorial = 1.0;
        let mut width_pow = 1.0;
        for q in 0..p {
            if q > 0 {
                factorial *= q as f64;
                width_pow *= width;
            }
            a[(q, q)] = 1.0;
            rhs[q] = derivs[q] * width_pow / factorial;
            for k in q..n {
                a[(p + q, k)] = binomial(k, q);
            }
        }

        let inverse = a.clone().lu().try_inverse().ok_or(Error::Conditioning {
            degree: p,
            condition: f64::INFINITY,
        })?;
        let condition = norm_1(&a) * norm_1(&inverse);
        if !condition.is_finite() || condition > MAX_TRANSITION_CONDITION {
            return Err(Error::Conditioning {
                degree: p,
                condition,
            });
        }

        // P = P_kernel + plateau * P_unit, both parts linear in the right-hand side
        let from_kernel = &inverse * &rhs;
        let from_plateau = inverse.column(p).into_owned();
        let d0 = derivative_coeffs(from_kernel.as_slice(), p);
        let d1 = derivative_coeffs(from_plateau.as_slice(), p);
        let plateau = -unit_inner(&d0, &d1) / unit_inner(&d1, &d1);
        let transition = from_kernel
            .iter()
            .zip(from_plateau.iter())
            .map(|(k, u)| k + plateau * u)
            .collect();

        Ok(Self {
            kernel,
            inner,
            width,
            transition,
            plateau,
        })
    }

    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r <= self.inner {
            self.kernel.eval(r)
        } else if r < self.inner + self.width {
            let t = (r - self.inner) / self.width;
            self.transition.iter().rev().fold(0.0, |acc, &c| acc * t + c)
        } else {
            self.plateau
        }
    }
}

/// Monomial coefficients of the `order`-th derivative.
fn derivative_coeffs(coeffs: &[f64], order: usize) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(order)
        .map(|(k, &c)| c * (k - order + 1..=k).map(|f| f as f64).product::<f64>())
        .collect()
}

/// `int_0^1 u(t) v(t) dt` for monomial coefficient vectors.
fn unit_inner(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .enumerate()
        .flat_map(|(i, &a)| v.iter().enumerate().map(move |(j, &b)| a * b / (i + j + 1) as f64))
        .sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn norm_1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Fourier coefficients of the periodized kernel on `I_M`, `M = config.coeff_grid` per axis.
///
/// The kernel is sampled radially on the equispaced grid `j / M`, `j in I_M`, and
/// transformed with a `dims`-dimensional FFT. Coefficients on the Nyquist planes
/// (`k_t = -M/2`) have no conjugate partner inside `I_M`; they are set to zero so
/// the coefficient set is exactly conjugate symmetric.
pub fn regularize_kernel(
    kernel: &RadialKernel,
    config: &PeriodizationConfig,
    dims: usize,
) -> Result<Vec<Complex64>> {
    if dims == 0 || dims > MAX_DIMS {
        return Err(Error::InvalidParameter(format!(
            "fast summation supports 1..={MAX_DIMS} dimensions, got {dims}"
        )));
    }
    let profile = RegularizedProfile::new(*kernel, config)?;
    let m = config.coeff_grid;
    let half = (m / 2) as i64;
    let shape = vec![m; dims];
    let total = m.pow(dims as u32);

    // sample at j / M stored at position j mod M, so the plain DFT yields c_k at k mod M
    let offset = |p: usize| {
        let j = p as i64;
        let j = if j >= half { j - m as i64 } else { j };
        j as f64 / m as f64
    };
    let mut buf: Vec<Complex64> = (0..total)
        .map(|flat| {
            let mut rest = flat;
            let mut r2 = 0.0;
            for _ in 0..dims {
                let r = offset(rest % m);
                r2 += r * r;
                rest /= m;
            }
            Complex64::new(profile.eval(r2.sqrt()), 0.0)
        })
        .collect();

    let fft = FftPlanner::new().plan_fft(m, FftDirection::Forward);
    let ffts: Vec<Arc<dyn rustfft::Fft<f64>>> = vec![fft; dims];
    fft_nd(&mut buf, &shape, &ffts);

    let grid = GridSpec::uniform(dims, m)?;
    let norm = 1.0 / total as f64;
    let coeffs = (0..grid.len())
        .map(|i| {
            let k = grid.frequency(i);
            if k[..dims].iter().any(|&kt| kt == -half) {
                return Complex64::new(0.0, 0.0);
            }
            let pos = |sign: i64| {
                k[..dims].iter().fold(0usize, |acc, &kt| {
                    acc * m + (sign * kt).rem_euclid(m as i64) as usize
                })
            };
            // the samples are real and even, so the exact coefficients are real and
            // even; averaging the +k and -k entries makes that hold bitwise
            Complex64::new(0.5 * (buf[pos(1)].re + buf[pos(-1)].re) * norm, 0.0)
        })
        .collect();
    Ok(coeffs)
}

/// Affine map from raw coordinates into the torus ball: `x~ = scale * (x - center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScaling {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl NodeScaling {
    /// Fit the map so every point of `sets` lands within `radius` of the origin.
    pub fn fit(sets: &[ArrayView2<'_, f64>], radius: f64) -> Self {
        let dims = sets[0].ncols();
        let mut lo = vec![f64::INFINITY; dims];
        let mut hi = vec![f64::NEG_INFINITY; dims];
        for set in sets {
            for row in set.rows() {
                for t in 0..dims {
                    lo[t] = lo[t].min(row[t]);
                    hi[t] = hi[t].max(row[t]);
                }
            }
        }
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let spread = sets
            .iter()
            .flat_map(|set| set.rows().into_iter())
            .map(|row| {
                row.iter()
                    .zip(&center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let scale = if spread > 0.0 { radius / spread } else { 1.0 };
        Self { center, scale }
    }

    pub fn apply(&self, points: ArrayView2<'_, f64>) -> Result<NodeSet> {
        let dims = points.ncols();
        let mut coords = Vec::with_capacity(points.len());
        for row in points.rows() {
            for t in 0..dims {
                // the ball has radius < 1/2, so this only clamps roundoff at the boundary
                let v = self.scale * (row[t] - self.center[t]);
                coords.push(v.clamp(-0.5, 0.5 - f64::EPSILON));
            }
        }
        NodeSet::from_flat(dims, coords)
    }
}

/// Smallest torus-unit Gaussian width whose spectrum beyond the coefficient grid stays below the
/// profile's tolerance (1e-2, 1e-3, 1e-5 for rough, default, fine).
pub fn min_resolved_sigma(coeff_grid: usize, profile: AccuracyProfile) -> f64 {
    let tol: f64 = match profile {
        AccuracyProfile::Rough => 1e-2,
        AccuracyProfile::Default => 1e-3,
        AccuracyProfile::Fine => 1e-5,
    };
    2.0 * (-tol.ln()).sqrt() / (std::f64::consts::PI * coeff_grid as f64)
}

/// `s = Phi_z D Phi_x^* alpha`, the fast kernel summation operator.
#[derive(Debug)]
pub struct FastsumOperator {
    kernel: RadialKernel,
    config: PeriodizationConfig,
    scaling: NodeScaling,
    coeffs: Vec<Complex64>,
    source_plan: NfftPlan,
    target_plan: Option<NfftPlan>,
}

impl FastsumOperator {
    /// Build the operator for raw `sources` (and optional raw `targets`; `None` means `Z = X`).
    ///
    /// `kernel` is expressed in raw units; it is rescaled together with the nodes. Widths that the
    /// coefficient grid cannot resolve after rescaling are rejected with [`Error::Unresolved`].
    pub fn build(
        kernel: RadialKernel,
        config: PeriodizationConfig,
        profile: AccuracyProfile,
        sources: ArrayView2<'_, f64>,
        targets: Option<ArrayView2<'_, f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let dims = sources.ncols();
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::InvalidParameter(format!(
                "fast summation supports 1..={MAX_DIMS} dimensions, got {dims}"
            )));
        }
        if sources.nrows() == 0 {
            return Err(Error::InvalidData("empty source node set".into()));
        }
        if let Some(t) = targets {
            if t.ncols() != dims {
                return Err(Error::shape("target dimension", dims, t.ncols()));
            }
            if t.nrows() == 0 {
                return Err(Error::InvalidData("empty target node set".into()));
            }
        }
        if sources.iter().chain(targets.iter().flat_map(|t| t.iter())).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite node coordinate".into()));
        }

        let mut sets = vec![sources];
        sets.extend(targets);
        let scaling = NodeScaling::fit(&sets, config.node_radius());
        let scaled_kernel = kernel.rescaled(scaling.scale)?;
        let floor = min_resolved_sigma(config.coeff_grid, profile);
        if scaled_kernel.sigma() < floor {
            return Err(Error::Unresolved {
                sigma: kernel.sigma(),
                min_sigma: floor / scaling.scale,
                grid: config.coeff_grid,
            });
        }
        let coeffs = regularize_kernel(&scaled_kernel, &config, dims)?;

        let grid = GridSpec::uniform(dims, config.coeff_grid)?;
        let source_plan = NfftPlan::new(grid.clone(), profile, scaling.apply(sources)?)?;
        let target_plan = match targets {
            Some(t) => Some(NfftPlan::new(grid, profile, scaling.apply(t)?)?),
            None => None,
        };

        Ok(Self {
            kernel,
            config,
            scaling,
            coeffs,
            source_plan,
            target_plan,
        })
    }

    pub fn kernel(&self) -> &RadialKernel {
        &self.kernel
    }

    pub fn config(&self) -> &PeriodizationConfig {
        &self.config
    }

    pub fn scaling(&self) -> &NodeScaling {
        &self.scaling
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn source_nodes(&self) -> &NodeSet {
        self.source_plan.nodes()
    }

    pub fn num_sources(&self) -> usize {
        self.source_plan.nodes().len()
    }

    pub fn num_targets(&self) -> usize {
        self.target_plan().nodes().len()
    }

    fn target_plan(&self) -> &NfftPlan {
        self.target_plan.as_ref().unwrap_or(&self.source_plan)
    }

    /// Complex result before the real part is taken.
    pub fn apply_complex(&self, alpha: &[f64]) -> Result<Vec<Complex64>> {
        if alpha.len() != self.num_sources() {
            return Err(Error::shape("coefficient vector", self.num_sources(), alpha.len()));
        }
        let c: Vec<Complex64> = alpha.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        let mut g = self.source_plan.adjoint(&c)?;
        for (gk, ck) in g.iter_mut().zip(&self.coeffs) {
            *gk *= ck;
        }
        self.target_plan().forward(&g)
    }

    pub fn apply(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_complex(alpha)?.into_iter().map(|v| v.re).collect())
    }
}

/// Dense `O(N_x N_z)` evaluation of the kernel sums; reference for [`FastsumOperator`].
pub fn direct_sum(
    kernel: &RadialKernel,
    sources: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    alpha: &[f64],
) -> Result<Vec<f64>> {
    if alpha.len() != sources.nrows() {
        return Err(Error::shape("coefficient vector", sources.nrows(), alpha.len()));
    }
    if targets.ncols() != sources.ncols() {
        return Err(Error::shape("target dimension", sources.ncols(), targets.ncols()));
    }
    let src = sources.as_standard_layout();
    let dims = src.ncols();
    let flat = src.as_slice().expect("standard layout");
    let out = (0..targets.nrows())
        .into_par_iter()
        .map(|i| {
            let z: Vec<f64> = targets.row(i).iter().copied().collect();
            flat.chunks_exact(dims)
                .zip(alpha)
                .map(|(x, &a)| {
                    let r2: f64 = x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                    a * kernel.eval_squared(r2)
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Evaluate `sum_k c_k exp(2 pi i k.r)` at a single point (used to inspect coefficient sets).
pub fn fourier_series_at(coeffs: &[Complex64], grid: &GridSpec, r: &[f64]) -> Complex64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let k = grid.frequency(i);
            let phase: f64 = r.iter().enumerate().map(|(t, &x)| k[t] as f64 * x).sum();
            c * Complex64::cis(2.0 * PI * phase)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn gaussian_basics() {
        assert!(RadialKernel::gaussian(0.0).is_err());
        assert!(RadialKernel::gaussian(-1.0).is_err());
        let k = RadialKernel::gaussian(2.0).unwrap();
        assert_eq!(k.eval(0.0), 1.0);
        assert!((k.eval(2.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_derivatives_match_finite_differences() {
        let k = RadialKernel::gaussian(0.7).unwrap();
        let r = 0.31;
        let d = k.derivatives(r, 4);
        let h = 1e-4;
        let f = |x: f64| k.eval(x);
        let d1 = (f(r + h) - f(r - h)) / (2.0 * h);
        let d2 = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h);
        assert!((d[0] - f(r)).abs() < 1e-15);
        assert!((d[1] - d1).abs() < 1e-7);
        assert!((d[2] - d2).abs() < 1e-5);
        let dd = k.derivatives(r + h, 3)[2] - k.derivatives(r - h, 3)[2];
        assert!((d[3] - dd / (2.0 * h)).abs() < 1e-5);
    }

    #[test]
    fn config_validation() {
        let mut c = PeriodizationConfig::default();
        assert!(c.validate().is_ok());
        assert!((c.ball_radius + c.transition_width - 0.5).abs() < 1e-15);
        c.transition_width = 0.2;
        assert!(c.validate().is_err());
        let mut c = PeriodizationConfig::default();
        c.smoothness = 0;
        assert!(c.validate().is_err());
        let mut c = PeriodizationConfig::default();
        c.coeff_grid = 33;
        assert!(c.validate().is_err());
    }

    #[test]
    fn transition_matches_both_ends() {
        let k = RadialKernel::gaussian(0.3).unwrap();
        let cfg = PeriodizationConfig::default();
        let prof = RegularizedProfile::new(k, &cfg).unwrap();
        let (l, w) = (cfg.ball_radius, cfg.transition_width);
        assert!((prof.eval(l + 1e-12) - k.eval(l)).abs() < 1e-9);
        assert!((prof.eval(l + w - 1e-12) - prof.plateau()).abs() < 1e-9);
        assert_eq!(prof.eval(0.7), prof.plateau());
        assert!(prof.plateau() <= k.eval(l) && prof.plateau() >= k.eval(l + w));
        // first derivative continuous at L
        let h = 1e-6;
        let left = (prof.eval(l) - prof.eval(l - h)) / h;
        let right = (prof.eval(l + h) - prof.eval(l)) / h;
        assert!((left - right).abs() < 1e-4);
    }

    #[test]
    fn excessive_smoothness_reports_conditioning() {
        let k = RadialKernel::gaussian(0.3).unwrap();
        let mut cfg = PeriodizationConfig::default();
        cfg.smoothness = 40;
        match RegularizedProfile::new(k, &cfg) {
            Err(Error::Conditioning { degree, .. }) => assert_eq!(degree, 40),
            other => panic!("expected conditioning failure, got {other:?}"),
        }
    }

    #[test]
    fn wide_kernel_is_nearly_constant() {
        let k = RadialKernel::gaussian(1e4).unwrap();
        let cfg = PeriodizationConfig::default();
        let c = regularize_kernel(&k, &cfg, 2).unwrap();
        let grid = GridSpec::uniform(2, cfg.coeff_grid).unwrap();
        let zero = (0..grid.len()).find(|&i| grid.frequency(i)[..2] == [0, 0]).unwrap();
        assert!((c[zero].re - 1.0).abs() < 1e-6);
        let rest: f64 = c.iter().enumerate().filter(|(i, _)| *i != zero).map(|(_, v)| v.norm()).sum();
        assert!(rest < 1e-6, "off-zero mass {rest}");
    }

    #[test]
    fn coefficients_reproduce_origin_value() {
        for dims in 1..=3 {
            let k = RadialKernel::gaussian(0.15).unwrap();
            let c = regularize_kernel(&k, &PeriodizationConfig::default(), dims).unwrap();
            let total: Complex64 = c.iter().sum();
            assert!((total.re - 1.0).abs() < 1e-6, "d={dims}: {total}");
        }
    }

    #[test]
    fn coefficients_are_conjugate_symmetric() {
        let k = RadialKernel::gaussian(0.2).unwrap();
        let cfg = PeriodizationConfig::for_profile(AccuracyProfile::Rough);
        let c = regularize_kernel(&k, &cfg, 2).unwrap();
        let grid = GridSpec::uniform(2, cfg.coeff_grid).unwrap();
        let m = cfg.coeff_grid as i64;
        for i in 0..grid.len() {
            let k = grid.frequency(i);
            if k[0] == -m / 2 || k[1] == -m / 2 {
                assert_eq!(c[i], Complex64::new(0.0, 0.0));
                continue;
            }
            let j = ((-k[0] + m / 2) * m + (-k[1] + m / 2)) as usize;
            assert_eq!(c[i], c[j].conj());
        }
    }

    #[test]
    fn node_scaling_is_idempotent_on_normalized_data() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let pts = Array2::from_shape_fn((50, 3), |_| rng.gen_range(-4.0..9.0));
        let s = NodeScaling::fit(&[pts.view()], 0.2);
        let first = s.apply(pts.view()).unwrap();
        let again_pts = Array2::from_shape_vec((50, 3), (0..50).flat_map(|j| first.point(j).to_vec()).collect()).unwrap();
        let s2 = NodeScaling::fit(&[again_pts.view()], 0.2);
        assert!((s2.scale - 1.0).abs() < 1e-12);
        assert!(s2.center.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let k = RadialKernel::gaussian(1.0).unwrap();
        let cfg = PeriodizationConfig::default();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(FastsumOperator::build(k, cfg, AccuracyProfile::Default, empty.view(), None).is_err());
        let wide = Array2::<f64>::zeros((3, 4));
        assert!(FastsumOperator::build(k, cfg, AccuracyProfile::Default, wide.view(), None).is_err());
    }

    #[test]
    fn direct_sum_small_cases() {
        let k = RadialKernel::gaussian(1.0).unwrap();
        let x = array![[0.0, 0.0]];
        assert_eq!(direct_sum(&k, x.view(), x.view(), &[1.0]).unwrap(), vec![1.0]);

        let x = array![[0.0], [1.0], [3.0]];
        let z = array![[0.5], [2.0]];
        let col = direct_sum(&k, x.view(), z.view(), &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(col, vec![k.eval(0.5), k.eval(1.0)]);
        assert!(direct_sum(&k, x.view(), z.view(), &[1.0]).is_err());
    }

    #[test]
    fn coincident_sources_cancel() {
        let k = RadialKernel::gaussian(0.8).unwrap();
        let x = array![[0.3, -1.0, 2.0], [0.3, -1.0, 2.0], [1.0, 1.0, 1.0]];
        let op = FastsumOperator::build(k, PeriodizationConfig::default(), AccuracyProfile::Default, x.view(), None).unwrap();
        let s = op.apply(&[1.0, -1.0, 0.0]).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-10), "{s:?}");
        assert!(op.apply(&[0.0; 3]).unwrap().iter().all(|&v| v == 0.0));
    }
}
