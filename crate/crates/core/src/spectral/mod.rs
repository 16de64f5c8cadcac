//! Interior eigenvalues and level statistics.
//!
//! [`polfed`] chains the full pipeline: Lanczos extremes, rescaling to
//! `[-1, 1]`, a stochastic density estimate at the target, order selection
//! and filtered block Lanczos. [`dense_window`] is the exact counterpart used
//! for small sectors.

mod chebyshev;
mod dos;
mod gap;
mod lanczos;
mod polfed;

pub use chebyshev::{
    chebyshev_filter_apply, expected_count, filter_coefficients, rescale, select_order, ChebyshevFilter, Rescaled,
    DEFAULT_THRESHOLD, MAX_ORDER, MIN_ORDER,
};
pub use dos::{estimate_dos, jackson_kernel, DosConfig, DosEstimate, DOS_FLOOR};
pub use gap::{
    gap_ratios, mean_gap_ratio, mean_gap_ratio_with, realization_spectrum, EnsembleDescriptor, GapRatioSummary,
    RealizationGap, DENSE_LIMIT,
};
pub use lanczos::{extremal_eigenvalues, extremal_eigenvalues_with, ExtremalConfig, Extremes};
pub use polfed::{block_lanczos_polfed, BlockLanczosConfig};

use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{invalid, Result};
use crate::sparse::{Operator, SymmetricCsr};

/// Target and size of an interior eigenvalue window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralWindow {
    /// Target `σ` in rescaled units, inside `(-1, 1)`.
    pub target: f64,
    pub n_ev: usize,
    /// Chebyshev order; `None` selects it from the density estimate.
    pub order: Option<usize>,
    /// Filter acceptance level `p`.
    pub threshold: f64,
}

impl Default for SpectralWindow {
    fn default() -> Self {
        Self {
            target: 0.0,
            n_ev: 200,
            order: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl SpectralWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.target.abs() < 1.0) {
            return invalid(format!("target must lie in (-1, 1), got {}", self.target));
        }
        if self.n_ev < 2 {
            return invalid(format!("n_ev must be at least 2, got {}", self.n_ev));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return invalid(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if self.order == Some(0) {
            return invalid("Chebyshev order must be at least 1");
        }
        Ok(())
    }
}

/// Eigenvalues of a window together with the diagnostics of the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    /// Ascending, in MHz.
    pub eigenvalues: Vec<f64>,
    /// `‖H u − E u‖` in MHz for each eigenvalue. Zero for the dense solver,
    /// which does not form eigenvectors.
    pub residuals: Vec<f64>,
    /// The same eigenvalues in rescaled units.
    pub rescaled: Vec<f64>,
    pub extremal: (f64, f64),
    pub dos_estimate: Option<f64>,
    pub order_used: usize,
    pub sigma: f64,
    pub blocks_used: usize,
    pub matvecs: usize,
    pub soft_restarts: usize,
}

impl SpectralResult {
    /// CSV with columns `index,energy_MHz,residual`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,energy_MHz,residual")?;
        for (i, (e, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            writeln!(w, "{i},{e},{r}")?;
        }
        Ok(())
    }
}

/// Ratio of pass-band states to requested eigenvalues used when choosing the
/// filter order automatically.
pub const BAND_OVERSAMPLING: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolfedConfig {
    pub extremal: ExtremalConfig,
    pub dos: DosConfig,
    pub lanczos: BlockLanczosConfig,
}

/// Runs the complete filtered solver on `op`.
pub fn polfed<O: Operator>(op: &O, window: SpectralWindow, cfg: PolfedConfig) -> Result<SpectralResult> {
    window.validate()?;
    let dim = op.dim();
    if window.n_ev > dim {
        return invalid(format!("n_ev = {} exceeds dimension {dim}", window.n_ev));
    }
    let ext = extremal_eigenvalues_with(op, cfg.extremal)?;
    let h_r = rescale(op, ext.e0, ext.e1)?;
    let sigma = window.target;
    let (order, rho) = match window.order {
        Some(k) => (k, None),
        None => {
            let rho = estimate_dos(&h_r, sigma, cfg.dos)?;
            // Aim the pass band at a few more states than requested so the
            // outermost wanted eigenvalues are not at the filter threshold.
            let band = ((window.n_ev as f64 * BAND_OVERSAMPLING).ceil() as usize).min(dim);
            (select_order(sigma, rho, band, dim, window.threshold)?, Some(rho))
        }
    };
    log::debug!("filter order {order} at sigma = {sigma}, density {rho:?}");
    let attach = |mut r: SpectralResult| {
        r.dos_estimate = rho;
        r
    };
    match block_lanczos_polfed(&h_r, sigma, order, window.n_ev, cfg.lanczos) {
        Ok(r) => Ok(attach(r)),
        Err(crate::Error::PartialResult { converged, requested }) => Err(crate::Error::PartialResult {
            converged: Box::new(attach(*converged)),
            requested,
        }),
        Err(e) => Err(e),
    }
}

/// Exact eigenvalues of a window: the `n_ev` eigenvalues closest to the
/// target, with the same rescaling convention as [`polfed`] (extremes widened
/// by `margin · (e1 − e0)`).
pub fn dense_window(h: &SymmetricCsr, window: SpectralWindow, margin: f64) -> Result<SpectralResult> {
    window.validate()?;
    let dim = h.dim();
    if window.n_ev > dim {
        return invalid(format!("n_ev = {} exceeds dimension {dim}", window.n_ev));
    }
    let all = dense::eigvalsh(dim, &h.to_dense())?;
    let (lo, hi) = (all[0], all[dim - 1]);
    let pad = if hi > lo { margin * (hi - lo) } else { margin * lo.abs().max(1.0) };
    let (e0, e1) = (lo - pad, hi + pad);
    let to_r = |e: f64| (2.0 * e - e0 - e1) / (e1 - e0);
    let target = 0.5 * ((e1 - e0) * window.target + e0 + e1);

    // The nearest n_ev values form a contiguous run in the sorted spectrum.
    let split = all.partition_point(|&e| e < target);
    let (mut a, mut b) = (split, split);
    while b - a < window.n_ev {
        let take_left = match (a > 0, b < dim) {
            (true, true) => target - all[a - 1] <= all[b] - target,
            (l, _) => l,
        };
        if take_left {
            a -= 1;
        } else {
            b += 1;
        }
    }
    let eigenvalues = all[a..b].to_vec();
    Ok(SpectralResult {
        rescaled: eigenvalues.iter().map(|&e| to_r(e)).collect(),
        residuals: vec![0.0; eigenvalues.len()],
        eigenvalues,
        extremal: (e0, e1),
        dos_estimate: None,
        order_used: 0,
        sigma: window.target,
        blocks_used: 0,
        matvecs: 0,
        soft_restarts: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_validation() {
        assert!(SpectralWindow::default().validate().is_ok());
        for bad in [
            SpectralWindow { target: 1.0, ..Default::default() },
            SpectralWindow { n_ev: 1, ..Default::default() },
            SpectralWindow { threshold: 1.0, ..Default::default() },
            SpectralWindow { order: Some(0), ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn dense_window_picks_nearest() {
        let h = SymmetricCsr::from_upper(vec![-4.0, -1.0, 0.5, 2.0, 3.0, 4.0], &[]).unwrap();
        let w = SpectralWindow { n_ev: 3, ..Default::default() };
        let r = dense_window(&h, w, 0.0).unwrap();
        assert_eq!(r.eigenvalues, vec![-1.0, 0.5, 2.0]);
        assert_eq!(r.rescaled, vec![-0.25, 0.125, 0.5]);
    }

    #[test]
    fn toy_polfed_matches_dense() {
        let d: Vec<f64> = (0..8).map(|i| (i as f64 * 1.7).sin() * 5.0).collect();
        let off: Vec<(usize, usize, f64)> = (0..7).map(|i| (i, i + 1, 1.0 + 0.1 * i as f64)).collect();
        let h = SymmetricCsr::from_upper(d, &off).unwrap();
        let w = SpectralWindow { n_ev: 8, ..Default::default() };
        let r = polfed(&h, w, PolfedConfig::default()).unwrap();
        let exact = dense::eigvalsh(8, &h.to_dense()).unwrap();
        assert_eq!(r.eigenvalues.len(), 8);
        for (a, b) in r.eigenvalues.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}
