//! Fits and curve readouts: imbalance exponents, their size and disorder
//! dependence, threshold crossings with resampled errors, and gap-ratio
//! boundaries.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::ImbalanceTrace;
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Default power-law window in ns.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (250.0, 1000.0);
pub const DEFAULT_BETA_THRESHOLD: f64 = 1e-2;
pub const DEFAULT_N_REP: usize = 5000;
pub const DEFAULT_R_THRESHOLD: f64 = 0.525;

/// Straight-line fit `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Covariance of `(intercept, slope)`.
    pub covariance: [[f64; 2]; 2],
    /// Residual sum of squares (weighted when weights are given).
    pub rss: f64,
    pub n_points: usize,
}

impl LinearFit {
    pub fn intercept_stderr(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn slope_stderr(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }
}

/// Least squares with optional weights. Without weights the covariance is
/// scaled by `RSS / (n − 2)` (zero for two points); with weights they are
/// taken as inverse variances and `(XᵀWX)⁻¹` is returned unscaled.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.len();
    if y.len() != n || weights.is_some_and(|w| w.len() != n) {
        return invalid("x, y and weights must have equal lengths");
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("line fit needs 2 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in fit input".into()));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let s: f64 = (0..n).map(w).sum();
    let xbar = (0..n).map(|i| w(i) * x[i]).sum::<f64>() / s;
    let ybar = (0..n).map(|i| w(i) * y[i]).sum::<f64>() / s;
    let sxx: f64 = (0..n).map(|i| w(i) * (x[i] - xbar).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w(i) * (x[i] - xbar) * (y[i] - ybar)).sum();
    let scale: f64 = (0..n).map(|i| w(i) * x[i] * x[i]).sum::<f64>().max(f64::MIN_POSITIVE);
    if sxx <= 1e-14 * scale {
        return Err(Error::Rank("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = (0..n).map(|i| w(i) * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let s2 = match weights {
        Some(_) => 1.0,
        None if n > 2 => rss / (n - 2) as f64,
        None => 0.0,
    };
    let covariance = [
        [s2 * (1.0 / s + xbar * xbar / sxx), -s2 * xbar / sxx],
        [-s2 * xbar / sxx, s2 / sxx],
    ];
    Ok(LinearFit {
        intercept,
        slope,
        covariance,
        rss,
        n_points: n,
    })
}

/// `I(t) ≈ amplitude · t^(−beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub beta: f64,
    pub amplitude: f64,
    pub beta_stderr: f64,
    pub fit_window: (f64, f64),
    /// Covariance of `(ln amplitude, slope)`; the slope is `−beta`.
    pub covariance: [[f64; 2]; 2],
    pub n_points: usize,
}

/// Log-log least squares of the imbalance over `[t_lo, t_hi]`. Samples with
/// `I ≤ 0` are skipped.
pub fn fit_power_law(trace: &ImbalanceTrace, t_lo: f64, t_hi: f64) -> Result<PowerLawFit> {
    if !(t_lo > 0.0 && t_lo < t_hi) {
        return invalid(format!("fit window needs 0 < t_lo < t_hi, got ({t_lo}, {t_hi})"));
    }
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut skipped = 0;
    for (&t, &i) in trace.times.iter().zip(&trace.imbalance) {
        if t < t_lo || t > t_hi {
            continue;
        }
        if i > 0.0 {
            lx.push(t.ln());
            ly.push(i.ln());
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} non-positive imbalance samples excluded from the power-law fit");
    }
    if lx.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs 4 positive samples in [{t_lo}, {t_hi}], found {}",
            lx.len()
        )));
    }
    let f = linear_fit(&lx, &ly, None)?;
    Ok(PowerLawFit {
        beta: -f.slope,
        amplitude: f.intercept.exp(),
        beta_stderr: f.slope_stderr(),
        fit_window: (t_lo, t_hi),
        covariance: f.covariance,
        n_points: f.n_points,
    })
}

/// Per-realization exponents: their mean and the standard error across
/// realizations.
pub fn beta_scatter(traces: &[ImbalanceTrace], t_lo: f64, t_hi: f64) -> Result<(f64, f64)> {
    let betas: Vec<f64> = traces
        .iter()
        .map(|t| fit_power_law(t, t_lo, t_hi).map(|f| f.beta))
        .collect::<Result<_>>()?;
    mean_stderr(&betas).ok_or_else(|| Error::InsufficientData("no traces".into()))
}

fn mean_stderr(v: &[f64]) -> Option<(f64, f64)> {
    let n = v.len();
    if n == 0 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub weighted: bool,
}

/// Line through `(L, beta, stderr)` points, weighted by `1/stderr²` when
/// every stderr is positive.
pub fn fit_beta_vs_size(points: &[(f64, f64, f64)]) -> Result<SizeFit> {
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let weighted = !points.is_empty() && points.iter().all(|p| p.2 > 0.0 && p.2.is_finite());
    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.2 * p.2)).collect();
    let f = linear_fit(&x, &y, weighted.then_some(&w[..]))?;
    Ok(SizeFit {
        slope: f.slope,
        intercept: f.intercept,
        slope_stderr: f.slope_stderr(),
        weighted,
    })
}

/// `beta = c · W^(−gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayLawFit {
    pub c: f64,
    pub gamma: f64,
    pub ln_c_stderr: f64,
    pub gamma_stderr: f64,
    /// Covariance of `(ln c, gamma)`.
    pub covariance: [[f64; 2]; 2],
    pub rss: f64,
    pub n_points: usize,
}

fn positive_points(points: &[(f64, f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0)) {
        return invalid(format!("disorder strengths must be positive, got {}", p.0));
    }
    let kept: Vec<_> = points.iter().filter(|p| p.1 > 0.0).collect();
    if kept.len() < points.len() {
        log::warn!("{} non-positive exponents excluded from the decay fit", points.len() - kept.len());
    }
    if kept.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs 3 positive exponents, found {}",
            kept.len()
        )));
    }
    Ok((kept.iter().map(|p| p.0).collect(), kept.iter().map(|p| p.1).collect()))
}

/// Least squares of `ln beta` on `ln W` over `(W, beta, stderr)` points.
pub fn fit_decay_law(points: &[(f64, f64, f64)]) -> Result<DecayLawFit> {
    let (w, beta) = positive_points(points)?;
    let lx: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = beta.iter().map(|v| v.ln()).collect();
    let f = linear_fit(&lx, &ly, None)?;
    let cov = f.covariance;
    Ok(DecayLawFit {
        c: f.intercept.exp(),
        gamma: -f.slope,
        ln_c_stderr: f.intercept_stderr(),
        gamma_stderr: f.slope_stderr(),
        covariance: [[cov[0][0], -cov[0][1]], [-cov[1][0], cov[1][1]]],
        rss: f.rss,
        n_points: f.n_points,
    })
}

/// `ln beta = a − b · W`, kept to compare residuals against the power law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialLawFit {
    pub a: f64,
    pub b: f64,
    pub rss: f64,
}

pub fn fit_exponential_law(points: &[(f64, f64, f64)]) -> Result<ExponentialLawFit> {
    let (w, beta) = positive_points(points)?;
    let ly: Vec<f64> = beta.iter().map(|v| v.ln()).collect();
    let f = linear_fit(&w, &ly, None)?;
    Ok(ExponentialLawFit {
        a: f.intercept,
        b: -f.slope,
        rss: f.rss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub w_star: f64,
    pub w_star_std: f64,
    pub threshold: f64,
    pub n_rep: usize,
    /// Fraction of draws discarded for `gamma ≤ 0`.
    pub rejected_fraction: f64,
    pub seed: u64,
}

/// Lower Cholesky factor of a symmetric positive semidefinite 2×2 matrix.
fn cholesky2(m: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let [[a, b], [b2, d]] = m;
    let scale = a.abs().max(d.abs()).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let not_psd = || Err(Error::Numeric(format!("covariance {m:?} is not positive semidefinite")));
    if !m.iter().flatten().all(|v| v.is_finite()) || (b - b2).abs() > tol || a < -tol || d < -tol {
        return not_psd();
    }
    let l11 = a.max(0.0).sqrt();
    let l21 = if l11 > 0.0 {
        b / l11
    } else if b.abs() <= tol {
        0.0
    } else {
        return not_psd();
    };
    let rest = d - l21 * l21;
    if rest < -tol {
        return not_psd();
    }
    Ok([[l11, 0.0], [l21, rest.max(0.0).sqrt()]])
}

/// Disorder at which the decay law reaches `threshold`, with the standard
/// deviation over `n_rep` Gaussian draws of `(ln c, gamma)`.
pub fn extract_w_star(fit: &DecayLawFit, threshold: f64, n_rep: usize, seed: u64) -> Result<ThresholdCrossing> {
    if !(threshold > 0.0) {
        return invalid(format!("threshold must be positive, got {threshold}"));
    }
    if n_rep == 0 {
        return invalid("n_rep must be at least 1");
    }
    if !(fit.gamma > 0.0) {
        return Err(Error::Domain(format!(
            "gamma = {} gives no finite threshold crossing",
            fit.gamma
        )));
    }
    let ln_c = fit.c.ln();
    let ln_thr = threshold.ln();
    let w_star = ((ln_c - ln_thr) / fit.gamma).exp();
    let l = cholesky2(fit.covariance)?;

    let mut stream = rng::stream(seed);
    let mut samples = Vec::with_capacity(n_rep);
    let mut rejected = 0usize;
    let max_attempts = n_rep.saturating_mul(1000);
    while samples.len() < n_rep {
        if samples.len() + rejected >= max_attempts {
            return Err(Error::Numeric(format!(
                "{rejected} of {} draws had gamma <= 0",
                samples.len() + rejected
            )));
        }
        let z1: f64 = StandardNormal.sample(&mut stream);
        let z2: f64 = StandardNormal.sample(&mut stream);
        let a = ln_c + l[0][0] * z1;
        let g = fit.gamma + l[1][0] * z1 + l[1][1] * z2;
        if g <= 0.0 {
            rejected += 1;
            continue;
        }
        samples.push(((a - ln_thr) / g).exp());
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = if samples.iter().any(|s| !s.is_finite()) {
        log::warn!("some resampled crossings overflow; the spread is unbounded");
        f64::INFINITY
    } else if samples.len() > 1 {
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    if rejected > 0 {
        log::warn!("{rejected} resampled fits with gamma <= 0 were redrawn");
    }
    Ok(ThresholdCrossing {
        w_star,
        w_star_std: std,
        threshold,
        n_rep,
        rejected_fraction: rejected as f64 / (rejected + samples.len()) as f64,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRange {
    Interior,
    /// Every point is at or above threshold; the value is the largest W.
    AboveRange,
    /// Every point is below threshold; the value is the smallest W.
    BelowRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicBoundary {
    pub w_e: f64,
    pub range: BoundaryRange,
}

fn check_sorted(curve: &[(f64, f64)], name: &str) -> Result<()> {
    if curve.len() < 2 {
        return invalid(format!("{name} needs at least 2 points"));
    }
    if curve.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Numeric(format!("{name} has non-finite values")));
    }
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return invalid(format!("{name} must be sorted by strictly increasing W"));
    }
    Ok(())
}

/// Largest W with `⟨r⟩ ≥ threshold`, interpolated to the crossing with the
/// next point.
pub fn ergodic_boundary(curve: &[(f64, f64)], threshold: f64) -> Result<ErgodicBoundary> {
    check_sorted(curve, "gap-ratio curve")?;
    let Some(i) = curve.iter().rposition(|p| p.1 >= threshold) else {
        return Ok(ErgodicBoundary {
            w_e: curve[0].0,
            range: BoundaryRange::BelowRange,
        });
    };
    if i + 1 == curve.len() {
        return Ok(ErgodicBoundary {
            w_e: curve[i].0,
            range: BoundaryRange::AboveRange,
        });
    }
    let ((w0, r0), (w1, r1)) = (curve[i], curve[i + 1]);
    Ok(ErgodicBoundary {
        w_e: w0 + (r0 - threshold) / (r0 - r1) * (w1 - w0),
        range: BoundaryRange::Interior,
    })
}

fn interpolate(curve: &[(f64, f64)], w: f64) -> f64 {
    let k = curve.partition_point(|p| p.0 < w);
    if k < curve.len() && curve[k].0 == w {
        return curve[k].1;
    }
    let ((w0, r0), (w1, r1)) = (curve[k - 1], curve[k]);
    r0 + (w - w0) / (w1 - w0) * (r1 - r0)
}

/// Smallest W in the common range where the piecewise-linear curves cross.
/// Curves that only touch, or coincide, give `None`.
pub fn curve_crossing(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<Option<f64>> {
    check_sorted(a, "first curve")?;
    check_sorted(b, "second curve")?;
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if lo > hi {
        return invalid(format!("curves do not overlap: [{lo}, {hi}] is empty"));
    }
    let mut grid: Vec<f64> = a
        .iter()
        .chain(b)
        .map(|p| p.0)
        .filter(|&w| w >= lo && w <= hi)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let diff: Vec<f64> = grid.iter().map(|&w| interpolate(a, w) - interpolate(b, w)).collect();

    let mut last: Option<usize> = None;
    for (k, &d) in diff.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        if let Some(j) = last {
            if diff[j].signum() != d.signum() {
                if j + 1 < k {
                    return Ok(Some(grid[j + 1]));
                }
                let (d0, w0, w1) = (diff[j], grid[j], grid[k]);
                return Ok(Some(w0 + d0 / (d0 - d) * (w1 - w0)));
            }
        }
        last = Some(k);
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAverage {
    pub mean: ImbalanceTrace,
    /// Pointwise standard error across traces (zero for a single trace).
    pub stderr: Vec<f64>,
    pub n_traces: usize,
}

pub fn ensemble_average(traces: &[ImbalanceTrace]) -> Result<EnsembleAverage> {
    let Some(first) = traces.first() else {
        return Err(Error::InsufficientData("no traces to average".into()));
    };
    if let Some(k) = traces.iter().position(|t| t.times != first.times) {
        return invalid(format!("trace {k} uses a different time grid"));
    }
    let n = first.times.len();
    let mut mean = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    let mut column = Vec::with_capacity(traces.len());
    for i in 0..n {
        column.clear();
        column.extend(traces.iter().map(|t| t.imbalance[i]));
        let (m, s) = mean_stderr(&column).expect("nonempty");
        mean.push(m);
        stderr.push(s);
    }
    let mut avg = ImbalanceTrace::from_series(first.times.clone(), mean)?;
    avg.norm_drift = traces.iter().map(|t| t.norm_drift).fold(0.0, f64::max);
    avg.number_drift = traces.iter().map(|t| t.number_drift).fold(0.0, f64::max);
    Ok(EnsembleAverage {
        mean: avg,
        stderr,
        n_traces: traces.len(),
    })
}
