use std::f64::consts::PI;

use apsk_nlpn::analytic::harmonics::default_grid;
use apsk_nlpn::analytic::{
    bessel_i0, estimate_harmonics, exact_models, marcum_q1, pdf_y, rice_pdf, EstimatorConfig, ExactHarmonics,
    Harmonics, ModelGrid, SpanKernel,
};
use apsk_nlpn::channel::{dbm_to_watts, mean_nlpn, sample_channel, ChannelParams};
use apsk_nlpn::constellation::ApskSpec;
use apsk_nlpn::detection::{map_thresholds, MlDetector, TwoStageDetector};
use apsk_nlpn::labeling::{exhaustive_labeling_search, exhaustive_labeling_search_unpruned, Labeling};
use apsk_nlpn::metrics::{
    bep, first_stage_error, sep, sep_two_stage, transition_matrix_mc, transition_matrix_ts, EvaluationMethod, McConfig,
    QuadratureConfig, TransitionMatrix,
};
use apsk_nlpn::optimize::{optimize_partition, OptimizerSettings, SepEvaluator};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn i0_series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-18 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn i0_matches_power_series() {
    assert!((bessel_i0(1.0) - 1.2660658778).abs() < 1e-9);
    for i in 0..40 {
        let x = 0.25 * i as f64;
        let want = i0_series(x);
        assert!((bessel_i0(x) - want).abs() < 1e-12 * want, "x = {x}");
    }
}

#[test]
fn marcum_matches_integrated_rice_density() {
    let tail = |a: f64, b: f64| {
        1.0 - simpson(
            |x| x * (-(x * x + a * a) / 2.0).exp() * i0_series(a * x),
            0.0,
            b,
            20_000,
        )
    };
    assert!((marcum_q1(1.0, 2.0) - 0.269012).abs() < 1e-6);
    for (a, b) in [(1.0, 2.0), (0.5, 0.3), (3.0, 2.5), (2.0, 4.0), (0.0, 1.5)] {
        assert!((marcum_q1(a, b) - tail(a, b)).abs() < 1e-9, "a = {a}, b = {b}");
    }
}

#[test]
fn rice_density_normalises() {
    for (r0, s2) in [(0.0, 1.0), (1.0, 0.1), (0.02, 6e-6), (3.0, 0.5)] {
        let hi = r0 + 12.0 * (s2 as f64).sqrt();
        let total = simpson(|r| rice_pdf(r, r0, s2).unwrap(), 0.0, hi, 200_000);
        assert!((total - 1.0).abs() < 1e-8, "{r0} {s2}: {total}");
    }
}

#[test]
fn received_amplitude_follows_rice_law() {
    // the amplitude law does not depend on the span count
    let params = ChannelParams::new(7000.0, 4).unwrap().linear();
    let s2 = params.noise_variance();
    let r0 = 3.0 * s2.sqrt();
    let x = Complex64::new(r0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let mut amps: Vec<f64> = (0..n).map(|_| sample_channel(x, &params, &mut rng).y.norm()).collect();
    amps.sort_by(f64::total_cmp);
    let rho = (2.0f64).sqrt() * r0 / s2.sqrt();
    let mut ks: f64 = 0.0;
    for (i, &a) in amps.iter().enumerate().step_by(97) {
        let cdf = 1.0 - marcum_q1(rho, (2.0f64).sqrt() * a / s2.sqrt());
        ks = ks
            .max((cdf - i as f64 / n as f64).abs())
            .max((cdf - (i + 1) as f64 / n as f64).abs());
    }
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS statistic {ks}");
}

#[test]
fn sampled_nonlinear_phase_has_predicted_mean() {
    let params = ChannelParams::new(7000.0, 100).unwrap();
    let x = Complex64::new((1e-3f64).sqrt(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let phi = sample_channel(x, &params, &mut rng).nonlinear_phase;
        s += phi;
        s2 += phi * phi;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!(
        (mean - mean_nlpn(x, &params)).abs() < 3.0 * se,
        "{mean} vs {}",
        mean_nlpn(x, &params)
    );
}

#[test]
fn estimated_harmonics_agree_with_exact_coefficients() {
    let params = ChannelParams::new(5500.0, 20).unwrap();
    let s2 = params.noise_variance();
    let r0 = dbm_to_watts(-5.0).sqrt();
    let grid = default_grid(r0, s2, 41, 4.0);
    let cfg = EstimatorConfig {
        max_order: 8,
        ..Default::default()
    };
    let est = estimate_harmonics(r0, &params, grid.clone(), &cfg, 9).unwrap();
    let exact = ExactHarmonics::new(SpanKernel::new(&params).unwrap(), r0, 1e-12).unwrap();
    let s = (s2 / 2.0).sqrt();
    for &r in &grid {
        let c_est = est.coefficients(r);
        let f = exact.amplitude_density(r);
        for (m, c) in c_est.iter().enumerate() {
            assert!(
                c.norm() <= f * (1.0 + 0.05) + 1e-9 * f.max(1.0),
                "modulus bound at r = {r}, m = {}",
                m + 1
            );
        }
        if (r - r0).abs() < 2.0 * s {
            let diff = (est.correction_angle(r) - exact.correction_angle(r) + PI).rem_euclid(2.0 * PI) - PI;
            assert!(diff.abs() < 0.03, "angle at r = {r}: {diff}");
            let c1 = exact.coefficients(r)[0];
            assert!((c_est[0] - c1).norm() < 0.03 * f, "C1 at r = {r}");
        }
    }
}

#[test]
fn linear_channel_estimate_has_no_rotation() {
    let params = ChannelParams::new(5500.0, 10).unwrap().linear();
    let s2 = params.noise_variance();
    let r0 = 4.0 * s2.sqrt();
    let grid = default_grid(r0, s2, 21, 2.0);
    let cfg = EstimatorConfig {
        n_samples: 400_000,
        max_order: 4,
        ..Default::default()
    };
    let est = estimate_harmonics(r0, &params, grid.clone(), &cfg, 1).unwrap();
    for &r in &grid {
        assert!(est.correction_angle(r).abs() < 0.01, "r = {r}");
    }
}

#[test]
fn estimator_noise_falls_with_sample_count() {
    let params = ChannelParams::new(4000.0, 5).unwrap();
    let s2 = params.noise_variance();
    let r0 = dbm_to_watts(-4.0).sqrt();
    let grid = default_grid(r0, s2, 15, 2.0);
    let spread = |n: usize| {
        let cfg = EstimatorConfig {
            n_samples: n,
            max_order: 2,
            bins: 100,
            ..Default::default()
        };
        let runs: Vec<Vec<Complex64>> = (0..16)
            .map(|seed| {
                let h = estimate_harmonics(r0, &params, grid.clone(), &cfg, 100 + seed).unwrap();
                grid.iter().map(|&r| h.coefficients(r)[0]).collect()
            })
            .collect();
        let mut var = 0.0;
        for g in 0..grid.len() {
            let mean: Complex64 = runs.iter().map(|v| v[g]).sum::<Complex64>() / runs.len() as f64;
            var += runs.iter().map(|v| (v[g] - mean).norm_sqr()).sum::<f64>() / (runs.len() - 1) as f64;
        }
        (var / grid.len() as f64).sqrt()
    };
    let ratio = spread(100_000) / spread(200_000);
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn observation_histogram_matches_density() {
    let params = ChannelParams::new(5500.0, 100).unwrap();
    let r0 = dbm_to_watts(-3.0).sqrt();
    let model = exact_models(&[r0], &params, &ModelGrid::default()).unwrap().remove(0);
    let s = (params.noise_variance() / 2.0).sqrt();
    let x = Complex64::new(0.0, r0);
    let (nr, nt) = (20usize, 20usize);
    let (lo, hi) = (r0 - 5.0 * s, r0 + 5.0 * s);
    let dr = (hi - lo) / nr as f64;
    let dt = 2.0 * PI / nt as f64;
    let mut counts = vec![0u64; nr * nt + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 1_000_000;
    for _ in 0..n {
        let y = sample_channel(x, &params, &mut rng).y;
        let r = y.norm();
        if r < lo || r >= hi {
            counts[nr * nt] += 1;
            continue;
        }
        let i = ((r - lo) / dr) as usize;
        let j = ((y.arg() + PI) / dt) as usize % nt;
        counts[i * nt + j] += 1;
    }
    let nodes = [
        -0.8611363115940526,
        -0.3399810435848563,
        0.3399810435848563,
        0.8611363115940526,
    ];
    let weights = [
        0.3478548451374538,
        0.6521451548625461,
        0.6521451548625461,
        0.3478548451374538,
    ];
    let mut tv = 0.0;
    let mut inside = 0.0;
    for i in 0..nr {
        for j in 0..nt {
            let mut mass = 0.0;
            for (a, wa) in nodes.iter().zip(&weights) {
                for (b, wb) in nodes.iter().zip(&weights) {
                    let r = lo + dr * (i as f64 + 0.5 + 0.5 * a);
                    let t = -PI + dt * (j as f64 + 0.5 + 0.5 * b);
                    let d = pdf_y(Complex64::from_polar(r, t), x, model.as_ref()).unwrap().value;
                    mass += wa * wb * d * r * dr * dt / 4.0;
                }
            }
            inside += mass;
            tv += (counts[i * nt + j] as f64 / n as f64 - mass).abs();
        }
    }
    tv += (counts[nr * nt] as f64 / n as f64 - (1.0 - inside)).abs();
    assert!(0.5 * tv <= 0.02, "total variation {}", 0.5 * tv);
}

#[test]
fn map_threshold_balances_weighted_densities() {
    let spec = ApskSpec::new(&[2, 2], &[1.0, 2.0], &[0.0, 0.0]).unwrap();
    let t = map_thresholds(&spec.layout(), 0.1).unwrap();
    let mu = t.values()[1];
    let lhs = rice_pdf(mu, 1.0, 0.1).unwrap().ln();
    let rhs = rice_pdf(mu, 2.0, 0.1).unwrap().ln();
    assert!(mu > 1.0 && mu < 2.0);
    assert!((lhs - rhs).abs() < 1e-10);
}

#[test]
fn correction_angle_is_quadratic_and_tracks_mean_rotation() {
    let params = ChannelParams::new(7000.0, 100).unwrap();
    let r0 = dbm_to_watts(-5.0).sqrt();
    let model = exact_models(&[r0], &params, &ModelGrid::default()).unwrap().remove(0);
    let nlpn = mean_nlpn(Complex64::new(r0, 0.0), &params);
    // the channel turns by -Φ, so the correction angle is its negative
    let at = model.correction_angle(r0);
    assert!((at + nlpn).abs() < 0.1 * nlpn, "{at} vs {nlpn}");
    let s = (params.noise_variance() / 2.0).sqrt();
    let pts: Vec<(f64, f64)> = (0..61)
        .map(|i| {
            let r = r0 + s * (-3.0 + 0.1 * i as f64);
            (r, model.correction_angle(r))
        })
        .collect();
    // least-squares quadratic through the points
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for &(r, y) in &pts {
        let row = [1.0, r, r * r];
        for a in 0..3 {
            aty[a] += row[a] * y;
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let coef = solve3(ata, aty);
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|&(r, y)| (y - coef[0] - coef[1] * r - coef[2] * r * r).powi(2))
        .sum();
    assert!(1.0 - ss_res / ss_tot > 0.99);
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..3).rev() {
        x[c] = (b[c] - (c + 1..3).map(|k| a[c][k] * x[k]).sum::<f64>()) / a[c][c];
    }
    x
}

#[test]
fn first_stage_error_matches_simulated_radius_decisions() {
    let params = ChannelParams::new(5500.0, 100).unwrap();
    let spec = ApskSpec::uniform(&[4, 4, 4, 4], dbm_to_watts(-6.0)).unwrap();
    let layout = spec.layout();
    let s2 = params.noise_variance();
    let t = map_thresholds(&layout, s2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 200_000;
    for k in 0..4 {
        let x = layout.symbols[layout.rings[k].start];
        let miss = (0..n)
            .filter(|_| t.ring_of_radius(sample_channel(x, &params, &mut rng).y.norm()) != k)
            .count();
        let p = first_stage_error(k, &layout, &t, s2);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (miss as f64 / n as f64 - p).abs() < 3.0 * se + 1.0 / n as f64,
            "ring {k}"
        );
    }
}

#[test]
fn first_stage_error_falls_with_power() {
    let params = ChannelParams::new(7000.0, 100).unwrap();
    let s2 = params.noise_variance();
    let mut last = f64::INFINITY;
    for i in 0..10 {
        let spec = ApskSpec::uniform(&[1, 1, 1, 1], dbm_to_watts(-15.0 + i as f64)).unwrap();
        let layout = spec.layout();
        let t = map_thresholds(&layout, s2).unwrap();
        let total: f64 = (0..4).map(|k| first_stage_error(k, &layout, &t, s2)).sum();
        assert!(total < last);
        last = total;
    }
}

#[test]
fn quadrature_and_simulation_agree() {
    let params = ChannelParams::new(7000.0, 100).unwrap();
    let spec = ApskSpec::uniform(&[1, 5, 10], dbm_to_watts(-4.0)).unwrap();
    let layout = spec.layout();
    let t = map_thresholds(&layout, params.noise_variance()).unwrap();
    let models = exact_models(&layout.radii(), &params, &ModelGrid::default()).unwrap();
    let q = sep(&transition_matrix_ts(&layout, &t, &models, &QuadratureConfig::default()).unwrap());
    let det = TwoStageDetector::new(layout.clone(), t, models).unwrap();
    let cfg = McConfig {
        samples_per_symbol: 20_000,
        seed: 3,
        shards: 4,
    };
    let mc = transition_matrix_mc(&layout, &det, &params, &cfg).unwrap();
    let n = (cfg.samples_per_symbol * 16) as f64;
    let se = (q * (1.0 - q) / n).sqrt();
    assert!((sep(&mc) - q).abs() < 3.0 * se, "{} vs {q}", sep(&mc));
}

#[test]
fn one_point_rings_reduce_to_radius_errors() {
    let params = ChannelParams::new(7000.0, 100).unwrap();
    let spec = ApskSpec::uniform(&[1, 1, 1, 1], dbm_to_watts(-2.0)).unwrap();
    let layout = spec.layout();
    let s2 = params.noise_variance();
    let t = map_thresholds(&layout, s2).unwrap();
    let models = exact_models(&layout.radii(), &params, &ModelGrid::default()).unwrap();
    let q = sep_two_stage(&layout, &t, &models, &QuadratureConfig::default());
    let radial: f64 = (0..4).map(|k| first_stage_error(k, &layout, &t, s2)).sum::<f64>() / 4.0;
    assert!((q - radial).abs() < 1e-12);
}

#[test]
fn gray_bep_is_close_to_its_bound_at_high_snr() {
    let params = ChannelParams::new(1000.0, 100).unwrap().linear();
    let p = params.noise_variance() * 10f64.powf(1.4);
    let spec = ApskSpec::uniform(&[4], p).unwrap();
    let layout = spec.layout();
    let t = map_thresholds(&layout, params.noise_variance()).unwrap();
    let models = exact_models(&layout.radii(), &params, &ModelGrid::default()).unwrap();
    let tm = transition_matrix_ts(&layout, &t, &models, &QuadratureConfig::default()).unwrap();
    let ratio = bep(&tm, &Labeling::brgc(2)).unwrap() / (sep(&tm) / 2.0);
    assert!((1.0..=1.1).contains(&ratio), "{ratio}");
    let (best, _) = exhaustive_labeling_search(&tm).unwrap();
    for i in 0..4 {
        assert_eq!(best.distance(i, (i + 1) % 4), 1);
    }
}

#[test]
fn pruned_labeling_search_matches_full_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = 8;
    let mut probs: Vec<f64> = (0..m * m).map(|_| rng.random::<f64>().powi(4)).collect();
    for i in 0..m {
        let s: f64 = probs[i * m..(i + 1) * m].iter().sum();
        probs[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= s);
    }
    let t = TransitionMatrix::new(m, probs, EvaluationMethod::Quadrature, 0).unwrap();
    let (a, ba) = exhaustive_labeling_search(&t).unwrap();
    let (_, bb) = exhaustive_labeling_search_unpruned(&t).unwrap();
    assert!((ba - bb).abs() < 1e-14);
    assert!((bep(&t, &a).unwrap() - ba).abs() < 1e-14);
}

#[test]
fn two_point_partition_search_matches_brute_force() {
    let params = ChannelParams::new(7000.0, 100).unwrap();
    let settings = OptimizerSettings::default();
    let eval = SepEvaluator::new(&params, settings.grid, settings.quadrature).unwrap();
    for dbm in [-14.0, -4.0, 4.0] {
        let p = dbm_to_watts(dbm);
        let a = eval.sep(&ApskSpec::uniform(&[2], p).unwrap()).unwrap();
        let b = eval.sep(&ApskSpec::uniform(&[1, 1], p).unwrap()).unwrap();
        let res = optimize_partition(2, p, &params, true, None, &settings).unwrap();
        let want: &[usize] = if a <= b + 1e-8 { &[2] } else { &[1, 1] };
        assert_eq!(res.spec.ring_sizes(), want, "{dbm} dBm");
        assert!((res.sep - a.min(b)).abs() < 1e-12);
    }
}

#[test]
fn two_stage_gap_to_ml_shrinks_with_power() {
    let params = ChannelParams::new(7000.0, 100).unwrap();
    let cfg = McConfig {
        samples_per_symbol: 40_000,
        seed: 12,
        shards: 4,
    };
    let mut gaps = Vec::new();
    for dbm in [-4.0, -2.0, 0.0, 2.0] {
        let spec = ApskSpec::uniform(&[1, 1, 1, 1], dbm_to_watts(dbm)).unwrap();
        let layout = spec.layout();
        let t = map_thresholds(&layout, params.noise_variance()).unwrap();
        let models = exact_models(&layout.radii(), &params, &ModelGrid::default()).unwrap();
        let ts = TwoStageDetector::new(layout.clone(), t, models.clone()).unwrap();
        let ml = MlDetector::new(layout.clone(), models).unwrap();
        let a = sep(&transition_matrix_mc(&layout, &ts, &params, &cfg).unwrap());
        let b = sep(&transition_matrix_mc(&layout, &ml, &params, &cfg).unwrap());
        gaps.push(a - b);
    }
    for w in gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-5, "{gaps:?}");
    }
}
