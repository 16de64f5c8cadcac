//! Acceptance checks. Each test prints one `criterion N: PASS|FAIL` line to
//! the terminal, bypassing the test harness's output capture.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use delocsim::analysis::{extract_w_star, fit_decay_law};
use delocsim::dense;
use delocsim::dynamics::{checkerboard, krylov_step, run_quench, Parity, TimeGrid, RAD_PER_MHZ_NS};
use delocsim::hamiltonian::{build_hamiltonian, enumerate_sector, sample_disorder, SparseHamiltonian};
use delocsim::lattice::{build_chain, build_rectangle, CouplingGraph};
use delocsim::rng::realization_seed;
use delocsim::spectral::{polfed, PolfedConfig, SpectralWindow};
use delocsim_cli::{run_experiment, ExperimentSpec, RunOptions, Summary};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {verdict} {detail}");
}

fn spec_in(toml: &str, out: &Path) -> ExperimentSpec {
    let mut s = ExperimentSpec::from_toml_str(toml, "acceptance.toml").unwrap();
    s.out = out.to_path_buf();
    s
}

fn binomial_u128(n: u128, k: u128) -> u128 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn criterion_1_sector_dimension() {
    let dim = enumerate_sector(21, 10).unwrap().dim();
    let oracle = binomial_u128(21, 10);
    let pass = dim == 352_716 && dim as u128 == oracle;
    report(1, pass, &format!("(dim = {dim}, expected 352716)"));
    assert!(pass);
}

fn dense_evolve(h: &SparseHamiltonian, psi: &[Complex64], t: f64) -> Vec<Complex64> {
    let dim = h.basis().dim();
    let eig = dense::eigh(dim, &h.to_dense()).unwrap();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for k in 0..dim {
        let overlap: Complex64 = (0..dim).map(|i| psi[i] * eig.vectors[(i, k)]).sum();
        let c = overlap * Complex64::from_polar(1.0, -RAD_PER_MHZ_NS * eig.values[k] * t);
        for i in 0..dim {
            out[i] += eig.vectors[(i, k)] * c;
        }
    }
    out
}

#[test]
fn criterion_2_krylov_matches_dense_evolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let shapes = [(2, 4), (2, 5), (2, 6), (3, 3), (3, 4), (4, 3), (2, 3)];
    let mut worst = 0.0f64;
    let mut instances = 0;
    for k in 0..24 {
        let w = [0.0, 50.0, 100.0][k % 3];
        let graph: CouplingGraph = if k % 4 == 0 {
            build_chain(rng.random_range(8..=12), 2.9).unwrap()
        } else {
            let (r, c) = shapes[rng.random_range(0..shapes.len())];
            build_rectangle(r, c, 2.9, 1.1).unwrap().with_spread(0.1, rng.random()).unwrap()
        };
        assert!(graph.len() <= 12);
        let parity = if rng.random::<bool>() { Parity::Even } else { Parity::Odd };
        let pattern = checkerboard(&graph, parity);
        let d = sample_disorder(graph.len(), w, rng.random()).unwrap();
        let h = build_hamiltonian(&graph, &d, pattern.len()).unwrap();
        let mut psi = vec![Complex64::new(0.0, 0.0); h.basis().dim()];
        psi[h.basis().rank(pattern.mask(&graph).unwrap()).unwrap()] = Complex64::new(1.0, 0.0);
        for &t in &[10.0, 100.0, 1000.0] {
            let got = krylov_step(&h, &psi, t).unwrap();
            let want = dense_evolve(&h, &psi, t);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(err);
        }
        instances += 1;
    }
    let pass = worst <= 1e-10;
    report(2, pass, &format!("({instances} instances x 3 times, max |Δψ| = {worst:.2e})"));
    assert!(pass);
}

#[test]
fn criterion_3_polfed_matches_dense_on_ladder() {
    let graph = build_rectangle(7, 2, 2.9, 1.1).unwrap();
    let window = SpectralWindow::default();
    let mut worst = 0.0f64;
    let mut complete = true;
    for k in 0..10 {
        let d = sample_disorder(14, 50.0, realization_seed(2024, k)).unwrap();
        let h = build_hamiltonian(&graph, &d, 7).unwrap();
        let got = polfed(&h, window, PolfedConfig::default()).unwrap();
        let (e0, e1) = got.extremal;
        let (centre, half) = (0.5 * (e0 + e1), 0.5 * (e1 - e0));
        let mut all = dense::eigvalsh(3432, &h.to_dense()).unwrap();
        all.sort_by(|a, b| (a - centre).abs().total_cmp(&(b - centre).abs()));
        let mut want = all[..200].to_vec();
        want.sort_by(f64::total_cmp);
        complete &= got.eigenvalues.len() == 200;
        for (a, b) in got.eigenvalues.iter().zip(&want) {
            worst = worst.max((a - b).abs() / half);
        }
    }
    let pass = complete && worst <= 1e-8;
    report(3, pass, &format!("(10 realizations, n_ev = 200, max rescaled error {worst:.2e})"));
    assert!(pass);
}

#[test]
fn criterion_4_gap_ratio_limits() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_in(
        r#"
        geometry = { rows = 7, cols = 2 }
        w_list = [10.0, 100.0]
        realizations = 100
        mode = "gap_ratio"
        n_ev = 200
        seed_base = 4
        "#,
        dir.path(),
    );
    let report_ = run_experiment(&spec, RunOptions::default()).unwrap();
    let Summary::GapRatio(g) = report_.summary else { panic!("wrong summary") };
    let (weak, strong) = (&g.per_w[0], &g.per_w[1]);
    let pass = weak.n_realizations == 100
        && strong.n_realizations == 100
        && (0.515..=0.545).contains(&weak.mean_r)
        && (0.375..=0.405).contains(&strong.mean_r);
    report(
        4,
        pass,
        &format!(
            "(<r>(W=10) = {:.4} ± {:.4}, <r>(W=100) = {:.4} ± {:.4}, 100 realizations each)",
            weak.mean_r, weak.stderr, strong.mean_r, strong.stderr
        ),
    );
    assert!(pass);
}

fn quench_betas(dir: &Path, geometry: &str, w: f64, realizations: usize) -> (f64, f64, f64) {
    let spec = spec_in(
        &format!(
            r#"
            geometry = {geometry}
            w_list = [{w:?}]
            realizations = {realizations}
            mode = "quench"
            seed_base = 11
            record_occupations = false
            "#
        ),
        dir,
    );
    let start = Instant::now();
    let r = run_experiment(&spec, RunOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let Summary::Quench(q) = r.summary else { panic!("wrong summary") };
    let row = q.rows().next().expect("beta fit");
    (row.beta, row.stderr, secs / realizations as f64)
}

#[test]
fn criterion_5_anderson_chain_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let (beta, se, _) = quench_betas(dir.path(), "{ chain = 12 }", 50.0, 50);
    let pass = beta.abs() <= 0.03;
    report(5, pass, &format!("(12-site chain, W = 50, 50 realizations: beta = {beta:.4} ± {se:.4})"));
    assert!(pass);
}

/// Runs 3x4 and 3x6. The 3x8 ensemble (dimension 2 704 156) is out of reach
/// on a desk machine, so the criterion is reported as not met; the feasible
/// pair is still checked. The full check is `criterion_6_full_size_trend`.
#[test]
fn criterion_6_size_trend() {
    let dir = tempfile::tempdir().unwrap();
    let (b4, s4, t4) = quench_betas(&dir.path().join("3x4"), "{ rows = 3, cols = 4 }", 50.0, 30);
    let (b6, s6, t6) = quench_betas(&dir.path().join("3x6"), "{ rows = 3, cols = 6 }", 50.0, 30);
    let pair_ok = b6 - b4 > (s4 * s4 + s6 * s6).sqrt();
    // Cost scales with dimension times matvecs per unit time, and the latter
    // with the spectral width, which grows with the number of sites.
    let dim_ratio = 2_704_156.0 / 48_620.0;
    let per_real_hours = t6 * dim_ratio * (24.0f64 / 18.0).powi(2) / 3600.0;
    report(
        6,
        false,
        &format!(
            "(beta(3x4) = {b4:.4} ± {s4:.4}, beta(3x6) = {b6:.4} ± {s6:.4}, 3x4 < 3x6 {}; \
             3x8 not computed: about {per_real_hours:.1} h per realization here, {:.0} h for 30; \
             3x4 took {t4:.1} s and 3x6 {t6:.1} s per realization)",
            if pair_ok { "holds" } else { "does not hold" },
            30.0 * per_real_hours
        ),
    );
    assert!(pair_ok, "beta(3x4) = {b4} ± {s4}, beta(3x6) = {b6} ± {s6}");
}

#[test]
#[ignore = "the 3x8 ensemble needs tens of CPU-hours"]
fn criterion_6_full_size_trend() {
    let dir = tempfile::tempdir().unwrap();
    let sizes = ["{ rows = 3, cols = 4 }", "{ rows = 3, cols = 6 }", "{ rows = 3, cols = 8 }"];
    let res: Vec<_> = sizes
        .iter()
        .enumerate()
        .map(|(k, g)| quench_betas(&dir.path().join(k.to_string()), g, 50.0, 30))
        .collect();
    let pass = res.windows(2).all(|p| p[1].0 - p[0].0 > (p[0].1.powi(2) + p[1].1.powi(2)).sqrt());
    let text: Vec<String> = res.iter().map(|r| format!("{:.4} ± {:.4}", r.0, r.1)).collect();
    report(6, pass, &format!("(beta 3x4/3x6/3x8 = {})", text.join(", ")));
    assert!(pass);
}

/// Standard deviation of `W*` from `n` correlated Gaussian draws of
/// `(ln C, gamma)`, drawn with Box-Muller and a hand-rolled 2x2 Cholesky.
fn monte_carlo_w_star_std(ln_c: f64, gamma: f64, cov: [[f64; 2]; 2], thr: f64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(31_337);
    let mut normal = move || {
        let (u1, u2): (f64, f64) = (rng.random(), rng.random());
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let l11 = cov[0][0].sqrt();
    let l21 = cov[1][0] / l11;
    let l22 = (cov[1][1] - l21 * l21).sqrt();
    let mut vals = Vec::with_capacity(n);
    while vals.len() < n {
        let (z1, z2) = (normal(), normal());
        let a = ln_c + l11 * z1;
        let g = gamma + l21 * z1 + l22 * z2;
        if g > 0.0 {
            vals.push(((a - thr.ln()) / g).exp());
        }
    }
    let m = vals.iter().sum::<f64>() / n as f64;
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[test]
fn criterion_7_fit_chain() {
    let (c, gamma) = (2.0, 1.2);
    let ws = [20.0f64, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0];
    let exact: Vec<_> = ws.iter().map(|&w| (w, c * w.powf(-gamma), 0.0)).collect();
    let fit = fit_decay_law(&exact).unwrap();
    let closed = (c / 1e-2f64).powf(1.0 / gamma);
    let x = extract_w_star(&fit, 1e-2, 5000, 1).unwrap();
    let exact_ok = (fit.c - c).abs() <= 1e-10 * c
        && (fit.gamma - gamma).abs() <= 1e-10 * gamma
        && (x.w_star - closed).abs() <= 1e-10 * closed;

    let noise = [0.03, -0.02, 0.04, -0.05, 0.01, 0.02, -0.03];
    let noisy: Vec<_> = ws
        .iter()
        .zip(noise)
        .map(|(&w, e)| (w, c * w.powf(-gamma) * (1.0 + e), 0.0))
        .collect();
    let nf = fit_decay_law(&noisy).unwrap();
    let xs = extract_w_star(&nf, 1e-2, 5000, 1).unwrap();
    let oracle = monte_carlo_w_star_std(nf.c.ln(), nf.gamma, nf.covariance, 1e-2, 1_000_000);
    let rel = (xs.w_star_std / oracle - 1.0).abs();
    let pass = exact_ok && rel < 0.05;
    report(
        7,
        pass,
        &format!(
            "(C, gamma, W* exact to 1e-10: {exact_ok}; W* std {:.4} vs 1e6-draw {oracle:.4}, {:.2}% off)",
            xs.w_star_std,
            100.0 * rel
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_conservation_suite() {
    let times = TimeGrid::default().times().unwrap();
    let graphs = [
        build_chain(12, 2.9).unwrap(),
        build_rectangle(3, 4, 2.9, 1.1).unwrap(),
        build_rectangle(3, 3, 2.9, 1.1).unwrap(),
        build_rectangle(2, 5, 2.9, 1.1).unwrap(),
        build_rectangle(7, 2, 2.9, 1.1).unwrap(),
    ];
    let (mut worst_norm, mut worst_number, mut runs) = (0.0f64, 0.0f64, 0);
    let mut initial_exact = true;
    for (g, graph) in graphs.iter().enumerate() {
        for (k, w) in [0.0, 10.0, 50.0, 100.0].into_iter().enumerate() {
            for parity in [Parity::Even, Parity::Odd] {
                let pattern = checkerboard(graph, parity);
                let d = sample_disorder(graph.len(), w, (100 * g + k) as u64).unwrap();
                let h = build_hamiltonian(graph, &d, pattern.len()).unwrap();
                let trace = run_quench(&h, &pattern, 1000.0, &times).unwrap();
                worst_norm = worst_norm.max(trace.norm_drift);
                worst_number = worst_number.max(trace.number_drift);
                initial_exact &= trace.imbalance[0] == 1.0;
                runs += 1;
            }
        }
    }
    let pass = worst_norm <= 1e-9 && worst_number <= 1e-9 && initial_exact;
    report(
        8,
        pass,
        &format!(
            "({runs} quenches: max norm drift {worst_norm:.1e}, max number drift {worst_number:.1e}, I(0) = 1 exactly: {initial_exact})"
        ),
    );
    assert!(pass);
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if !(p.ends_with("manifest.json") || p.ends_with("spec.json")) {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn criterion_9_serial_and_parallel_sweeps_agree() {
    let sweeps = [
        r#"
        geometry = { rows = 2, cols = 5 }
        w_list = [25.0, 50.0, 75.0, 100.0]
        realizations = 6
        pattern = "both"
        mode = "quench"
        seed_base = 99
        "#,
        r#"
        geometry = { rows = 2, cols = 6 }
        w_list = [5.0, 50.0]
        realizations = 6
        mode = "gap_ratio"
        n_ev = 200
        seed_base = 99
        "#,
        // 6435 states: above the dense cutoff, so the filtered solver runs.
        r#"
        geometry = { rows = 3, cols = 5 }
        n_excitations = 7
        w_list = [50.0]
        realizations = 2
        mode = "spectrum"
        n_ev = 100
        seed_base = 99
        "#,
    ];
    let mut files = 0;
    let mut identical = true;
    for (k, toml) in sweeps.iter().enumerate() {
        let dir = tempfile::tempdir().unwrap();
        let runs: Vec<_> = [1, 4]
            .iter()
            .map(|&workers| {
                let out = dir.path().join(format!("{k}_{workers}"));
                run_experiment(&spec_in(toml, &out), RunOptions { workers: Some(workers), resume: false }).unwrap();
                result_files(&out)
            })
            .collect();
        files += runs[0].len();
        identical &= runs[0] == runs[1];
    }
    let pass = identical && files > 0;
    report(9, pass, &format!("({files} result files byte-identical between 1 and 4 workers: {identical})"));
    assert!(pass);
}
