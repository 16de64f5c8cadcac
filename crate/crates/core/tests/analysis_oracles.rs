use delocsim::analysis::*;
use delocsim::dynamics::ImbalanceTrace;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geometric_times() -> Vec<f64> {
    (0..=40).map(|k| 10.0 * 100f64.powf(k as f64 / 40.0)).collect()
}

#[test]
fn noisy_power_law_within_three_stderr() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let times = geometric_times();
    let i = times
        .iter()
        .map(|&t| 0.9 * t.powf(-0.05) * (1.0 + rng.random_range(-1e-3..1e-3)))
        .collect();
    let trace = ImbalanceTrace::from_series(times, i).unwrap();
    let f = fit_power_law(&trace, 250.0, 1000.0).unwrap();
    assert!(f.beta_stderr > 0.0);
    assert!((f.beta - 0.05).abs() < 3.0 * f.beta_stderr, "{} ± {}", f.beta, f.beta_stderr);
}

#[test]
fn size_slope_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sizes = [12.0, 18.0, 24.0, 30.0, 36.0];
    let (a, b, sd) = (0.01, 0.002, 0.004);
    let mut covered = 0;
    for _ in 0..100 {
        let pts: Vec<(f64, f64, f64)> = sizes
            .iter()
            .map(|&l| {
                // Box-Muller normal noise.
                let (u1, u2): (f64, f64) = (rng.random(), rng.random());
                let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                (l, a + b * l + sd * z, sd)
            })
            .collect();
        let f = fit_beta_vs_size(&pts).unwrap();
        if (f.slope - b).abs() <= 3.0 * f.slope_stderr {
            covered += 1;
        }
    }
    assert!(covered >= 99, "{covered}/100");
}

#[test]
fn decay_law_composes_with_threshold() {
    let (c, gamma) = (3.5, 1.25);
    let pts: Vec<_> = [25.0, 50.0, 75.0, 100.0].iter().map(|&w: &f64| (w, c * w.powf(-gamma), 0.0)).collect();
    let fit = fit_decay_law(&pts).unwrap();
    assert!((fit.c - c).abs() < 1e-10 && (fit.gamma - gamma).abs() < 1e-10);
    let x = extract_w_star(&fit, 1e-2, 100, 0).unwrap();
    let closed = (c / 1e-2f64).powf(1.0 / gamma);
    assert!((x.w_star - closed).abs() < 1e-10 * closed);
}

/// Standard deviation of `W*` over `n` independent draws, with its own
/// normal sampler and the same rejection rule.
fn brute_force_std(ln_c: f64, gamma: f64, sd_c: f64, sd_g: f64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(123_456);
    let mut normal = move || {
        let (u1, u2): (f64, f64) = (rng.random(), rng.random());
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut vals = Vec::with_capacity(n);
    while vals.len() < n {
        let a = ln_c + sd_c * normal();
        let g = gamma + sd_g * normal();
        if g > 0.0 {
            vals.push(((a - 1e-2f64.ln()) / g).exp());
        }
    }
    let m = vals.iter().sum::<f64>() / n as f64;
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[test]
fn resampled_spread_matches_large_monte_carlo() {
    let fit = DecayLawFit {
        c: 1.0,
        gamma: 2.0,
        ln_c_stderr: 0.1,
        gamma_stderr: 0.05,
        covariance: [[0.01, 0.0], [0.0, 0.0025]],
        rss: 0.0,
        n_points: 4,
    };
    let x = extract_w_star(&fit, 1e-2, 5000, 2024).unwrap();
    assert!((x.w_star - 10.0).abs() < 1e-12);
    let oracle = brute_force_std(0.0, 2.0, 0.1, 0.05, 1_000_000);
    assert!((x.w_star_std / oracle - 1.0).abs() < 0.05, "{} vs {oracle}", x.w_star_std);
    assert_eq!(x.rejected_fraction, 0.0);
}

#[test]
fn stderr_scales_with_ensemble_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let times: Vec<f64> = vec![0.0, 10.0, 20.0, 40.0];
    let traces: Vec<ImbalanceTrace> = (0..60)
        .map(|_| {
            let i = times.iter().map(|_| 0.5 + rng.random_range(-0.2..0.2)).collect();
            ImbalanceTrace::from_series(times.clone(), i).unwrap()
        })
        .collect();
    let all = ensemble_average(&traces).unwrap();
    let quarter = ensemble_average(&traces[..15]).unwrap();
    for (a, q) in all.stderr.iter().zip(&quarter.stderr) {
        let ratio = q / a;
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
    }
}

#[test]
fn boundary_on_ladder_shaped_curve() {
    let curve = [
        (2.0, 0.531),
        (5.0, 0.530),
        (8.0, 0.528),
        (12.0, 0.522),
        (20.0, 0.50),
        (50.0, 0.43),
        (100.0, 0.39),
    ];
    let b = ergodic_boundary(&curve, DEFAULT_R_THRESHOLD).unwrap();
    assert_eq!(b.range, BoundaryRange::Interior);
    assert!((b.w_e - 10.0).abs() < 1.0, "{}", b.w_e);
}
