//! Adjacent gap ratios and their disorder average.

use rayon::prelude::*;
use serde::Serialize;

use super::{dense_window, polfed, PolfedConfig, SpectralResult, SpectralWindow};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{build_hamiltonian, enumerate_sector, sample_disorder};
use crate::lattice::CouplingGraph;
use crate::rng;

/// Sectors up to this dimension are diagonalized densely.
pub const DENSE_LIMIT: usize = 4000;

const MIN_SPACING: f64 = 1e-12;

/// `r_n = min(δ_n, δ_{n−1}) / max(δ_n, δ_{n−1})` for every interior level.
pub fn gap_ratios(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    if eigenvalues.len() < 3 {
        return invalid(format!("gap ratios need at least 3 levels, got {}", eigenvalues.len()));
    }
    let mut deltas = Vec::with_capacity(eigenvalues.len() - 1);
    for (i, w) in eigenvalues.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d.is_nan() || d < 0.0 {
            return invalid(format!("levels not ascending at index {i}: {} then {}", w[0], w[1]));
        }
        if d < MIN_SPACING {
            return Err(Error::DegenerateSpacing(i, i + 1));
        }
        deltas.push(d);
    }
    Ok(deltas.windows(2).map(|d| d[0].min(d[1]) / d[0].max(d[1])).collect())
}

/// A disorder ensemble on a fixed lattice and sector.
#[derive(Debug, Clone)]
pub struct EnsembleDescriptor {
    pub graph: CouplingGraph,
    /// Disorder half-width in MHz.
    pub w: f64,
    pub n_excitations: usize,
    pub seed_base: u64,
}

impl EnsembleDescriptor {
    pub fn seed(&self, index: usize) -> u64 {
        rng::realization_seed(self.seed_base, index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationGap {
    pub index: usize,
    pub seed: u64,
    pub mean_r: Option<f64>,
    pub n_levels: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRatioSummary {
    /// Mean over successful realizations of the per-realization mean.
    pub mean: f64,
    /// Standard error of `mean` across realizations.
    pub stderr: f64,
    pub succeeded: usize,
    pub realizations: Vec<RealizationGap>,
}

impl GapRatioSummary {
    pub fn failures(&self) -> impl Iterator<Item = &RealizationGap> {
        self.realizations.iter().filter(|r| r.error.is_some())
    }
}

/// Window eigenvalues of realization `index`: dense below [`DENSE_LIMIT`],
/// filtered Lanczos above it.
pub fn realization_spectrum(
    desc: &EnsembleDescriptor,
    window: SpectralWindow,
    index: usize,
    cfg: PolfedConfig,
) -> Result<SpectralResult> {
    let seed = desc.seed(index);
    let disorder = sample_disorder(desc.graph.len(), desc.w, seed)?;
    let h = build_hamiltonian(&desc.graph, &disorder, desc.n_excitations)?;
    if h.basis().dim() <= DENSE_LIMIT {
        dense_window(h.matrix(), window, cfg.extremal.margin)
    } else {
        polfed(&h, window, cfg)
    }
}

pub fn mean_gap_ratio(desc: &EnsembleDescriptor, window: SpectralWindow, realizations: usize) -> Result<GapRatioSummary> {
    mean_gap_ratio_with(desc, window, realizations, PolfedConfig::default())
}

/// Averages `r` within each realization, then across realizations. Failed
/// realizations are kept in the summary with their error message.
pub fn mean_gap_ratio_with(
    desc: &EnsembleDescriptor,
    window: SpectralWindow,
    realizations: usize,
    cfg: PolfedConfig,
) -> Result<GapRatioSummary> {
    if realizations < 2 {
        return invalid(format!("need at least 2 realizations, got {realizations}"));
    }
    window.validate()?;
    // Fail fast on a bad sector before spawning work.
    let dim = enumerate_sector(desc.graph.len(), desc.n_excitations)?.dim();
    if window.n_ev > dim {
        return invalid(format!("n_ev = {} exceeds sector dimension {dim}", window.n_ev));
    }

    let per: Vec<RealizationGap> = (0..realizations)
        .into_par_iter()
        .map(|index| {
            let seed = desc.seed(index);
            let outcome = realization_spectrum(desc, window, index, cfg)
                .and_then(|s| gap_ratios(&s.eigenvalues).map(|r| (s.eigenvalues.len(), r)));
            match outcome {
                Ok((n_levels, r)) => RealizationGap {
                    index,
                    seed,
                    mean_r: Some(r.iter().sum::<f64>() / r.len() as f64),
                    n_levels,
                    error: None,
                },
                Err(e) => {
                    log::warn!("realization {index} (seed {seed}) failed: {e}");
                    RealizationGap {
                        index,
                        seed,
                        mean_r: None,
                        n_levels: 0,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    let values: Vec<f64> = per.iter().filter_map(|r| r.mean_r).collect();
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "only {n} of {realizations} realizations produced gap ratios"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(GapRatioSummary {
        mean,
        stderr: (var / n as f64).sqrt(),
        succeeded: n,
        realizations: per,
    })
}
