use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use nfft_krr::fastsum::{
    direct_sum, fourier_series_at, min_resolved_sigma, regularize_kernel, FastsumOperator, NodeScaling, PeriodizationConfig,
    RadialKernel,
};
use nfft_krr::nfft::{AccuracyProfile, GridSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let n: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let d: f64 = b.iter().map(|y| y * y).sum();
    (n / d).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cube(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(0.0..1.0));
    let alpha = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (x, alpha)
}

fn build(sigma: f64, profile: AccuracyProfile, x: ArrayView2<'_, f64>, z: Option<ArrayView2<'_, f64>>) -> FastsumOperator {
    let k = RadialKernel::gaussian(sigma).unwrap();
    FastsumOperator::build(k, PeriodizationConfig::for_profile(profile), profile, x, z).unwrap()
}

fn reconstruction_error(width: f64) -> f64 {
    let k = RadialKernel::gaussian(0.5).unwrap();
    let cfg = PeriodizationConfig {
        ball_radius: 0.23,
        transition_width: width,
        smoothness: 7,
        coeff_grid: 256,
    };
    let c = regularize_kernel(&k, &cfg, 1).unwrap();
    let g = GridSpec::uniform(1, 256).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    (0..100)
        .map(|_| {
            let r: f64 = rng.gen_range(-0.23..0.23);
            (fourier_series_at(&c, &g, &[r]).re - k.eval(r)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn one_dim_reconstruction() {
    // measured 2.676e-6 with the narrow transition
    assert!(reconstruction_error(0.02) <= 2.7e-6);
    assert!(reconstruction_error(0.04) <= 1e-6);
}

fn worst_origin_error(profile: AccuracyProfile) -> f64 {
    let cfg = PeriodizationConfig::for_profile(profile);
    let mut worst: f64 = 0.0;
    for i in 0..25 {
        let k = RadialKernel::gaussian(0.04 * 1.15f64.powi(2 * i)).unwrap();
        for d in 1..=3 {
            let c = regularize_kernel(&k, &cfg, d).unwrap();
            let g = GridSpec::uniform(d, cfg.coeff_grid).unwrap();
            worst = worst.max((fourier_series_at(&c, &g, &[0.0; 3][..d]).re - 1.0).abs());
        }
    }
    worst
}

#[test]
fn origin_reproduced() {
    // scaled widths 0.04 .. 11; worst case near 0.5, measured 8.2e-5 (default) and 1.2e-7 (fine)
    assert!(worst_origin_error(AccuracyProfile::Default) <= 1e-4);
    assert!(worst_origin_error(AccuracyProfile::Fine) <= 1e-6);
}

#[test]
fn wide_kernel_in_three_dims() {
    let (x, alpha) = cube(2000, 3, 2);
    let k = RadialKernel::gaussian(100.0).unwrap();
    let exact = direct_sum(&k, x.view(), x.view(), &alpha).unwrap();
    let default = rel(&build(100.0, AccuracyProfile::Default, x.view(), None).apply(&alpha).unwrap(), &exact);
    let fine = rel(&build(100.0, AccuracyProfile::Fine, x.view(), None).apply(&alpha).unwrap(), &exact);
    assert!(default <= 1e-3, "default {default:e}");
    assert!(fine <= 1e-5, "fine {fine:e}");
}

#[test]
fn accuracy_refines_across_profiles() {
    let (x, alpha) = cube(600, 3, 4);
    let (z, _) = cube(300, 3, 5);
    for sigma in [100.0, 1.0, 0.3] {
        let k = RadialKernel::gaussian(sigma).unwrap();
        let exact = direct_sum(&k, x.view(), z.view(), &alpha).unwrap();
        let errs: Vec<f64> = AccuracyProfile::ALL
            .iter()
            .map(|&p| rel(&build(sigma, p, x.view(), Some(z.view())).apply(&alpha).unwrap(), &exact))
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "sigma={sigma}: {errs:?}");
        assert!(errs[1] <= 1e-3, "sigma={sigma}: {errs:?}");
    }
}

#[test]
fn single_source_gives_kernel_values() {
    let x = ndarray::array![[0.3, -1.2]];
    let (z, _) = cube(50, 2, 6);
    let k = RadialKernel::gaussian(0.7).unwrap();
    let op = build(0.7, AccuracyProfile::Default, x.view(), Some(z.view()));
    let s = op.apply(&[1.0]).unwrap();
    for (i, v) in s.iter().enumerate() {
        let r2: f64 = z.row(i).iter().zip(x.row(0)).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((v - k.eval_squared(r2)).abs() <= 1e-4, "{i}: {v}");
    }
}

#[test]
fn direct_sum_matches_assembled_matrix() {
    let (x, alpha) = cube(40, 3, 7);
    let k = RadialKernel::gaussian(0.4).unwrap();
    let dense = DMatrix::from_fn(40, 40, |i, j| {
        let mut r2 = 0.0;
        for t in 0..3 {
            r2 += (x[[i, t]] - x[[j, t]]).powi(2);
        }
        (-r2 / 0.16).exp()
    });
    let want = &dense * nalgebra::DVector::from_column_slice(&alpha);
    let got = direct_sum(&k, x.view(), x.view(), &alpha).unwrap();
    assert!(rel(&got, want.as_slice()) <= 1e-14);
    let mut e = vec![0.0; 40];
    e[13] = 1.0;
    let col = direct_sum(&k, x.view(), x.view(), &e).unwrap();
    for i in 0..40 {
        assert!((col[i] - dense[(i, 13)]).abs() <= 1e-15);
    }
}

#[test]
fn rescaling_normalized_data_is_identity() {
    let (x, _) = cube(100, 3, 8);
    let radius = PeriodizationConfig::default().node_radius();
    let s = NodeScaling::fit(&[x.view()], radius);
    let scaled = s.apply(x.view()).unwrap();
    let pts = Array2::from_shape_fn((100, 3), |(i, t)| scaled.point(i)[t]);
    let again = NodeScaling::fit(&[pts.view()], radius);
    assert!((again.scale - 1.0).abs() <= 1e-12, "{}", again.scale);
}

#[test]
fn unresolved_width_is_rejected() {
    let (x, _) = cube(200, 2, 9);
    let k = RadialKernel::gaussian(0.01).unwrap();
    let cfg = PeriodizationConfig::for_profile(AccuracyProfile::Default);
    let err = FastsumOperator::build(k, cfg, AccuracyProfile::Default, x.view(), None).unwrap_err();
    assert!(matches!(err, nfft_krr::Error::Unresolved { .. }), "{err}");
    assert_eq!(err.class(), nfft_krr::ErrorClass::Validation);
    // the same width is fine once the nodes are spread further apart
    let wide = x.mapv(|v| v * 0.01);
    assert!(FastsumOperator::build(k, cfg, AccuracyProfile::Default, wide.view(), None).is_ok());
}

#[test]
fn resolution_floor_tracks_measured_error() {
    let (x, alpha) = cube(400, 1, 10);
    let floor = min_resolved_sigma(64, AccuracyProfile::Default);
    let scale = NodeScaling::fit(&[x.view()], PeriodizationConfig::default().node_radius()).scale;
    let sigma = 1.05 * floor / scale;
    let k = RadialKernel::gaussian(sigma).unwrap();
    let exact = direct_sum(&k, x.view(), x.view(), &alpha).unwrap();
    let e = rel(&build(sigma, AccuracyProfile::Default, x.view(), None).apply(&alpha).unwrap(), &exact);
    assert!(e <= 1e-3, "{e:e} at sigma {sigma}");
}

fn slope(points: &[(usize, f64)]) -> f64 {
    let p: Vec<(f64, f64)> = points.iter().map(|&(n, t)| ((n as f64).ln(), t.ln())).collect();
    let k = p.len() as f64;
    let mx = p.iter().map(|v| v.0).sum::<f64>() / k;
    let my = p.iter().map(|v| v.1).sum::<f64>() / k;
    p.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum::<f64>() / p.iter().map(|v| (v.0 - mx).powi(2)).sum::<f64>()
}

#[test]
fn apply_cost_grows_at_most_linearly() {
    let points: Vec<(usize, f64)> = (12..=17)
        .map(|e| {
            let n = 1usize << e;
            let (x, alpha) = cube(n, 3, e as u64);
            let op = build(100.0, AccuracyProfile::Default, x.view(), None);
            let best = (0..2)
                .map(|_| {
                    let t = Instant::now();
                    op.apply(&alpha).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min);
            (n, best)
        })
        .collect();
    let s = slope(&points);
    assert!(s <= 1.3, "slope {s} from {points:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn implied_matrix_is_symmetric(d in 1usize..=3, seed in any::<u64>(), sigma in 0.15f64..50.0) {
        let (x, a) = cube(60, d, seed);
        let (_, b) = cube(60, d, seed ^ 0x55);
        let op = build(sigma, AccuracyProfile::Rough, x.view(), None);
        let ka = op.apply(&a).unwrap();
        let kb = op.apply(&b).unwrap();
        let scale = norm(&ka).max(norm(&kb)) * norm(&a).max(norm(&b));
        prop_assert!((dot(&ka, &b) - dot(&a, &kb)).abs() <= 1e-8 * scale);
    }

    #[test]
    fn real_input_gives_real_output(d in 1usize..=3, seed in any::<u64>(), sigma in 0.15f64..50.0) {
        let (x, a) = cube(50, d, seed);
        let (z, _) = cube(30, d, seed ^ 0xaa);
        let op = build(sigma, AccuracyProfile::Rough, x.view(), Some(z.view()));
        let out = op.apply_complex(&a).unwrap();
        let im = out.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
        let re = out.iter().map(|v| v.re * v.re).sum::<f64>().sqrt();
        prop_assert!(im <= 1e-10 * re, "{im:e} vs {re:e}");
    }

    #[test]
    fn apply_is_linear(seed in any::<u64>(), s in -4.0f64..4.0, t in -4.0f64..4.0) {
        let (x, a) = cube(40, 2, seed);
        let (_, b) = cube(40, 2, seed ^ 1);
        let op = build(0.5, AccuracyProfile::Rough, x.view(), None);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| s * u + t * v).collect();
        let lhs = op.apply(&mix).unwrap();
        let rhs: Vec<f64> = op.apply(&a).unwrap().iter().zip(op.apply(&b).unwrap()).map(|(u, v)| s * u + t * v).collect();
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(u, v)| u - v).collect();
        prop_assert!(norm(&diff) <= 1e-12 * (norm(&lhs) + 1.0));
    }

    #[test]
    fn coefficients_are_conjugate_symmetric(d in 1usize..=3, sigma in 0.05f64..50.0) {
        let k = RadialKernel::gaussian(sigma).unwrap();
        let cfg = PeriodizationConfig::for_profile(AccuracyProfile::Rough);
        let c = regularize_kernel(&k, &cfg, d).unwrap();
        let g = GridSpec::uniform(d, cfg.coeff_grid).unwrap();
        let m = cfg.coeff_grid as i64;
        for (i, ci) in c.iter().enumerate() {
            let k = g.frequency(i);
            let mirror = (0..d).fold(0usize, |acc, t| {
                let kt = (-k[t]).rem_euclid(m);
                let pos = if kt >= m / 2 { kt - m } else { kt } + m / 2;
                acc * cfg.coeff_grid + pos as usize
            });
            prop_assert_eq!(*ci, c[mirror].conj());
        }
    }
}
