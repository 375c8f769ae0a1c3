//! Non-equispaced discrete Fourier transforms on the torus `[-1/2, 1/2)^d`, `d <= 3`.
//!
//! For a frequency grid `I_M = {-M_1/2, .., M_1/2 - 1} x .. x {-M_d/2, .., M_d/2 - 1}`
//! and nodes `x_j`, the forward transform evaluates
//!
//! ```text
//! f_j = sum_{k in I_M} f_hat_k exp(+2 pi i k.x_j)
//! ```
//!
//! and the adjoint aggregates `g_k = sum_j c_j exp(-2 pi i k.x_j)`.
//!
//! Two routes are provided: [`ndft_direct`] / [`ndft_adjoint_direct`] evaluate the sums
//! literally in `O(N |I_M|)`, and [`NfftPlan`] approximates them in
//! `O(|I_M| log |I_M| + N)` by deconvolving with a Kaiser-Bessel window, running an
//! FFT on an oversampled grid and interpolating with the compactly supported window.
//!
//! Coefficient vectors are stored row-major over the dimensions, with position
//! `i_t = k_t + M_t / 2` along axis `t`.
//!
//! All arithmetic is complex. Callers that work with real data take real parts at
//! their own boundary.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::ArrayView2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIMS: usize = 3;

/// Frequency grid `I_M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    bandwidths: Vec<usize>,
}

impl GridSpec {
    pub fn new(bandwidths: &[usize]) -> Result<Self> {
        if bandwidths.is_empty() || bandwidths.len() > MAX_DIMS {
            return Err(Error::InvalidParameter(format!(
                "grid dimension must be in 1..={MAX_DIMS}, got {}",
                bandwidths.len()
            )));
        }
        if let Some(&m) = bandwidths.iter().find(|&&m| m < 2 || m % 2 != 0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidths must be even and >= 2, got {m}"
            )));
        }
        Ok(Self {
            bandwidths: bandwidths.to_vec(),
        })
    }

    /// Same bandwidth `m` along each of `dims` axes.
    pub fn uniform(dims: usize, m: usize) -> Result<Self> {
        Self::new(&vec![m; dims])
    }

    pub fn dims(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn bandwidths(&self) -> &[usize] {
        &self.bandwidths
    }

    /// `|I_M|`, the length of every coefficient vector on this grid.
    pub fn len(&self) -> usize {
        self.bandwidths.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frequency multi-index of flat coefficient position `flat`.
    pub fn frequency(&self, flat: usize) -> [i64; MAX_DIMS] {
        let mut k = [0i64; MAX_DIMS];
        let mut rest = flat;
        for t in (0..self.dims()).rev() {
            let m = self.bandwidths[t];
            k[t] = (rest % m) as i64 - (m / 2) as i64;
            rest /= m;
        }
        k
    }
}

/// Named accuracy/speed trade-off for the fast transforms and the fast summation built on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyProfile {
    Rough,
    #[default]
    Default,
    Fine,
}

impl AccuracyProfile {
    pub const ALL: [AccuracyProfile; 3] = [Self::Rough, Self::Default, Self::Fine];

    pub fn oversampling(self) -> f64 {
        match self {
            Self::Rough => 1.25,
            Self::Default => 2.0,
            Self::Fine => 2.0,
        }
    }

    /// Window half-width `m`, in oversampled grid cells.
    pub fn window_cutoff(self) -> usize {
        match self {
            Self::Rough => 3,
            Self::Default => 4,
            Self::Fine => 6,
        }
    }

    /// Per-dimension size of the grid the periodized kernel is sampled on.
    pub fn coeff_grid(self) -> usize {
        match self {
            Self::Rough => 32,
            Self::Default => 64,
            Self::Fine => 128,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rough => "rough",
            Self::Default => "default",
            Self::Fine => "fine",
        }
    }
}

impl fmt::Display for AccuracyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AccuracyProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rough" => Ok(Self::Rough),
            "default" => Ok(Self::Default),
            "fine" => Ok(Self::Fine),
            other => Err(Error::InvalidParameter(format!(
                "unknown accuracy profile '{other}' (expected rough, default or fine)"
            ))),
        }
    }
}

/// Nodes on the torus, every coordinate in `[-1/2, 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    dims: usize,
    coords: Vec<f64>,
}

impl NodeSet {
    /// Row-major `coords`, `dims` values per node.
    pub fn from_flat(dims: usize, coords: Vec<f64>) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::InvalidParameter(format!(
                "node dimension must be in 1..={MAX_DIMS}, got {dims}"
            )));
        }
        if !coords.len().is_multiple_of(dims) {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates do not divide into {dims}-d nodes",
                coords.len()
            )));
        }
        if let Some((pos, &v)) = coords
            .iter()
            .enumerate()
            .find(|(_, &v)| !(-0.5..0.5).contains(&v))
        {
            return Err(Error::InvalidData(format!(
                "node {} coordinate {} = {v} lies outside [-1/2, 1/2)",
                pos / dims,
                pos % dims
            )));
        }
        Ok(Self { dims, coords })
    }

    pub fn from_array(points: ArrayView2<'_, f64>) -> Result<Self> {
        let dims = points.ncols();
        Self::from_flat(dims, points.iter().copied().collect())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dims..(j + 1) * self.dims]
    }
}

/// Literal evaluation of the forward sums. Reference path for the fast transform.
pub fn ndft_direct(grid: &GridSpec, nodes: &NodeSet, f_hat: &[Complex64]) -> Result<Vec<Complex64>> {
    check_dims(grid, nodes)?;
    if f_hat.len() != grid.len() {
        return Err(Error::shape("coefficient vector", grid.len(), f_hat.len()));
    }
    let out = (0..nodes.len())
        .map(|j| {
            let x = nodes.point(j);
            f_hat
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let k = grid.frequency(i);
                    let phase: f64 = (0..grid.dims()).map(|t| k[t] as f64 * x[t]).sum();
                    c * Complex64::cis(2.0 * PI * phase)
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Literal evaluation of the adjoint sums.
pub fn ndft_adjoint_direct(grid: &GridSpec, nodes: &NodeSet, c: &[Complex64]) -> Result<Vec<Complex64>> {
    check_dims(grid, nodes)?;
    if c.len() != nodes.len() {
        return Err(Error::shape("node coefficient vector", nodes.len(), c.len()));
    }
    let out = (0..grid.len())
        .map(|i| {
            let k = grid.frequency(i);
            c.iter()
                .enumerate()
                .map(|(j, &cj)| {
                    let x = nodes.point(j);
                    let phase: f64 = (0..grid.dims()).map(|t| k[t] as f64 * x[t]).sum();
                    cj * Complex64::cis(-2.0 * PI * phase)
                })
                .sum()
        })
        .collect();
    Ok(out)
}

fn check_dims(grid: &GridSpec, nodes: &NodeSet) -> Result<()> {
    if grid.dims() != nodes.dims() {
        return Err(Error::shape("node dimension", grid.dims(), nodes.dims()));
    }
    Ok(())
}

/// Modified Bessel function of the first kind, order zero (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term <= 1e-17 * sum {
            return sum;
        }
        k += 1.0;
    }
}

/// Kaiser-Bessel window for one axis of the oversampled grid.
///
/// `value(u)` takes the offset in oversampled grid cells. With this scaling the
/// continuous Fourier transform times `n` is `I0(m sqrt(b^2 - (2 pi k / n)^2))`.
#[derive(Debug, Clone, Copy)]
struct KaiserBessel {
    cutoff: f64,
    shape: f64,
    n: usize,
}

impl KaiserBessel {
    fn new(cutoff: usize, n: usize, m: usize) -> Self {
        let sigma = n as f64 / m as f64;
        Self {
            cutoff: cutoff as f64,
            shape: PI * (2.0 - 1.0 / sigma),
            n,
        }
    }

    fn value(&self, u: f64) -> f64 {
        let arg = self.cutoff * self.cutoff - u * u;
        if arg < 0.0 {
            return 0.0;
        }
        let s = arg.sqrt();
        if s < 1e-10 {
            self.shape / PI
        } else {
            (self.shape * s).sinh() / (PI * s)
        }
    }

    fn fourier(&self, k: i64) -> f64 {
        let w = 2.0 * PI * k as f64 / self.n as f64;
        bessel_i0(self.cutoff * (self.shape * self.shape - w * w).sqrt())
    }
}

/// Precomputed geometry for the fast forward and adjoint transforms.
///
/// Forward and adjoint share every precomputed weight, so the pair is an exact
/// matrix-adjoint pair up to floating-point roundoff.
pub struct NfftPlan {
    grid: GridSpec,
    profile: AccuracyProfile,
    nodes: NodeSet,
    oversampled: Vec<usize>,
    span: usize,
    /// `1 / (n phi_hat(k))` per axis, indexed by `k + M/2`.
    deconv: Vec<Vec<f64>>,
    /// First window cell of each node along each axis, reduced mod `n`.
    starts: Vec<usize>,
    /// Window weights: node-major, then axis, then `span` slots.
    weights: Vec<f64>,
    forward_ffts: Vec<Arc<dyn Fft<f64>>>,
    inverse_ffts: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for NfftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NfftPlan")
            .field("grid", &self.grid)
            .field("profile", &self.profile)
            .field("nodes", &self.nodes.len())
            .field("oversampled", &self.oversampled)
            .finish()
    }
}

impl NfftPlan {
    pub fn new(grid: GridSpec, profile: AccuracyProfile, nodes: NodeSet) -> Result<Self> {
        check_dims(&grid, &nodes)?;
        let dims = grid.dims();
        let cutoff = profile.window_cutoff();
        let span = 2 * cutoff + 1;

        let oversampled: Vec<usize> = grid
            .bandwidths()
            .iter()
            .map(|&m| {
                let n = (profile.oversampling() * m as f64).ceil() as usize;
                let n = n + n % 2;
                n.max(2 * cutoff + 2)
            })
            .collect();
        let windows: Vec<KaiserBessel> = grid
            .bandwidths()
            .iter()
            .zip(&oversampled)
            .map(|(&m, &n)| KaiserBessel::new(cutoff, n, m))
            .collect();

        let deconv = grid
            .bandwidths()
            .iter()
            .zip(&windows)
            .map(|(&m, w)| {
                (0..m)
                    .map(|i| 1.0 / w.fourier(i as i64 - (m / 2) as i64))
                    .collect()
            })
            .collect();

        let mut starts = Vec::with_capacity(nodes.len() * dims);
        let mut weights = Vec::with_capacity(nodes.len() * dims * span);
        for j in 0..nodes.len() {
            for (t, &x) in nodes.point(j).iter().enumerate() {
                let n = oversampled[t];
                let u = x * n as f64;
                let first = u.floor() as i64 - cutoff as i64;
                starts.push(first.rem_euclid(n as i64) as usize);
                weights.extend((0..span).map(|s| windows[t].value(u - (first + s as i64) as f64)));
            }
        }

        let mut planner = FftPlanner::new();
        let forward_ffts = oversampled
            .iter()
            .map(|&n| planner.plan_fft(n, FftDirection::Forward))
            .collect();
        let inverse_ffts = oversampled
            .iter()
            .map(|&n| planner.plan_fft(n, FftDirection::Inverse))
            .collect();

        Ok(Self {
            grid,
            profile,
            nodes,
            oversampled,
            span,
            deconv,
            starts,
            weights,
            forward_ffts,
            inverse_ffts,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn profile(&self) -> AccuracyProfile {
        self.profile
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn oversampled(&self) -> &[usize] {
        &self.oversampled
    }

    /// Fast approximation of [`ndft_direct`].
    pub fn forward(&self, f_hat: &[Complex64]) -> Result<Vec<Complex64>> {
        if f_hat.len() != self.grid.len() {
            return Err(Error::shape("coefficient vector", self.grid.len(), f_hat.len()));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.oversampled.iter().product()];
        for (i, &c) in f_hat.iter().enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (pos, scale) = self.embed(i);
            buf[pos] = c * scale;
        }
        let reversed: Vec<usize> = (0..self.grid.dims()).rev().collect();
        fft_nd_pruned(
            &mut buf,
            &self.oversampled,
            &self.inverse_ffts,
            &reversed,
            Some(self.grid.bandwidths()),
        );

        let out = (0..self.nodes.len())
            .into_par_iter()
            .map(|j| self.interpolate(&buf, j))
            .collect();
        Ok(out)
    }

    /// Fast approximation of [`ndft_adjoint_direct`].
    pub fn adjoint(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        if c.len() != self.nodes.len() {
            return Err(Error::shape("node coefficient vector", self.nodes.len(), c.len()));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.oversampled.iter().product()];
        for (j, &cj) in c.iter().enumerate() {
            if cj != Complex64::new(0.0, 0.0) {
                self.spread(&mut buf, j, cj);
            }
        }
        let natural: Vec<usize> = (0..self.grid.dims()).collect();
        fft_nd_pruned(
            &mut buf,
            &self.oversampled,
            &self.forward_ffts,
            &natural,
            Some(self.grid.bandwidths()),
        );

        let out = (0..self.grid.len())
            .map(|i| {
                let (pos, scale) = self.embed(i);
                buf[pos] * scale
            })
            .collect();
        Ok(out)
    }

    /// Oversampled-grid position of coefficient `flat` and its deconvolution factor.
    fn embed(&self, flat: usize) -> (usize, f64) {
        let k = self.grid.frequency(flat);
        let mut pos = 0;
        let mut scale = 1.0;
        for t in 0..self.grid.dims() {
            let n = self.oversampled[t] as i64;
            let m = self.grid.bandwidths()[t] as i64;
            pos = pos * n as usize + k[t].rem_euclid(n) as usize;
            scale *= self.deconv[t][(k[t] + m / 2) as usize];
        }
        (pos, scale)
    }

    fn window(&self, j: usize, t: usize) -> (usize, &[f64]) {
        let dims = self.grid.dims();
        let w = (j * dims + t) * self.span;
        (self.starts[j * dims + t], &self.weights[w..w + self.span])
    }

    fn interpolate(&self, buf: &[Complex64], j: usize) -> Complex64 {
        let n = &self.oversampled;
        let mut acc = Complex64::new(0.0, 0.0);
        match self.grid.dims() {
            1 => {
                let (s0, w0) = self.window(j, 0);
                for (a, &wa) in w0.iter().enumerate() {
                    acc += buf[wrap(s0 + a, n[0])] * wa;
                }
            }
            2 => {
                let (s0, w0) = self.window(j, 0);
                let (s1, w1) = self.window(j, 1);
                for (a, &wa) in w0.iter().enumerate() {
                    let row = wrap(s0 + a, n[0]) * n[1];
                    let mut line = Complex64::new(0.0, 0.0);
                    for (b, &wb) in w1.iter().enumerate() {
                        line += buf[row + wrap(s1 + b, n[1])] * wb;
                    }
                    acc += line * wa;
                }
            }
            _ => {
                let (s0, w0) = self.window(j, 0);
                let (s1, w1) = self.window(j, 1);
                let (s2, w2) = self.window(j, 2);
                for (a, &wa) in w0.iter().enumerate() {
                    let plane = wrap(s0 + a, n[0]) * n[1];
                    let mut sheet = Complex64::new(0.0, 0.0);
                    for (b, &wb) in w1.iter().enumerate() {
                        let row = (plane + wrap(s1 + b, n[1])) * n[2];
                        let mut line = Complex64::new(0.0, 0.0);
                        for (c, &wc) in w2.iter().enumerate() {
                            line += buf[row + wrap(s2 + c, n[2])] * wc;
                        }
                        sheet += line * wb;
                    }
                    acc += sheet * wa;
                }
            }
        }
        acc
    }

    fn spread(&self, buf: &mut [Complex64], j: usize, value: Complex64) {
        let n = &self.oversampled;
        match self.grid.dims() {
            1 => {
                let (s0, w0) = self.window(j, 0);
                for (a, &wa) in w0.iter().enumerate() {
                    buf[wrap(s0 + a, n[0])] += value * wa;
                }
            }
            2 => {
                let (s0, w0) = self.window(j, 0);
                let (s1, w1) = self.window(j, 1);
                for (a, &wa) in w0.iter().enumerate() {
                    let row = wrap(s0 + a, n[0]) * n[1];
                    let va = value * wa;
                    for (b, &wb) in w1.iter().enumerate() {
                        buf[row + wrap(s1 + b, n[1])] += va * wb;
                    }
                }
            }
            _ => {
                let (s0, w0) = self.window(j, 0);
                let (s1, w1) = self.window(j, 1);
                let (s2, w2) = self.window(j, 2);
                for (a, &wa) in w0.iter().enumerate() {
                    let plane = wrap(s0 + a, n[0]) * n[1];
                    let va = value * wa;
                    for (b, &wb) in w1.iter().enumerate() {
                        let row = (plane + wrap(s1 + b, n[1])) * n[2];
                        let vb = va * wb;
                        for (c, &wc) in w2.iter().enumerate() {
                            buf[row + wrap(s2 + c, n[2])] += vb * wc;
                        }
                    }
                }
            }
        }
    }
}

#[inline(always)]
fn wrap(i: usize, n: usize) -> usize {
    // starts are reduced mod n and offsets stay below 2n for every supported profile
    let mut i = i;
    while i >= n {
        i -= n;
    }
    i
}

/// In-place multidimensional DFT of a row-major array, one axis at a time.
pub(crate) fn fft_nd(buf: &mut [Complex64], shape: &[usize], ffts: &[Arc<dyn Fft<f64>>]) {
    let axes: Vec<usize> = (0..shape.len()).collect();
    fft_nd_pruned(buf, shape, ffts, &axes, None);
}

/// Multidimensional DFT that skips lines known to be zero or not needed.
///
/// Axes are processed in `order`. When `band` is given, a line along axis `t` is
/// only transformed if its indices on every axis before `t` (in storage order) lie in
/// the band `{0..M/2} u {n-M/2..n}`. Run axes last-to-first when only band entries of
/// the input are nonzero, and first-to-last when only band entries of the output are
/// read.
fn fft_nd_pruned(
    buf: &mut [Complex64],
    shape: &[usize],
    ffts: &[Arc<dyn Fft<f64>>],
    order: &[usize],
    band: Option<&[usize]>,
) {
    const COLUMNS_PER_BATCH: usize = 16;
    for &axis in order {
        let fft = ffts[axis].as_ref();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer_shape = &shape[..axis];
        let keep = |outer: usize| -> bool {
            let Some(band) = band else { return true };
            let mut rest = outer;
            for t in (0..outer_shape.len()).rev() {
                let i = rest % outer_shape[t];
                rest /= outer_shape[t];
                let half = band[t] / 2;
                if i >= half && i < outer_shape[t] - half {
                    return false;
                }
            }
            true
        };

        if inner == 1 {
            buf.par_chunks_mut(n)
                .enumerate()
                .filter(|(o, _)| keep(*o))
                .for_each_init(
                    || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                    |scratch, (_, line)| fft.process_with_scratch(line, scratch),
                );
            continue;
        }

        buf.par_chunks_mut(n * inner)
            .enumerate()
            .filter(|(o, _)| keep(*o))
            .for_each(|(_, block)| {
                let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                let mut tmp = vec![Complex64::new(0.0, 0.0); n * COLUMNS_PER_BATCH];
                let mut c0 = 0;
                while c0 < inner {
                    let width = COLUMNS_PER_BATCH.min(inner - c0);
                    for a in 0..n {
                        let row = &block[a * inner + c0..a * inner + c0 + width];
                        for (b, &v) in row.iter().enumerate() {
                            tmp[b * n + a] = v;
                        }
                    }
                    fft.process_with_scratch(&mut tmp[..n * width], &mut scratch);
                    for a in 0..n {
                        let row = &mut block[a * inner + c0..a * inner + c0 + width];
                        for (b, v) in row.iter_mut().enumerate() {
                            *v = tmp[b * n + a];
                        }
                    }
                    c0 += width;
                }
            });
    }
}
