use std::path::{Path, PathBuf};

use delocsim::analysis::{
    beta_scatter, ensemble_average, extract_w_star, fit_decay_law, fit_exponential_law, fit_power_law, DecayLawFit,
    ExponentialLawFit, PowerLawFit, ThresholdCrossing,
};
use serde::Serialize;

use crate::aggregate::{read_columns, read_trace, Fitted};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFit {
    pub path: PathBuf,
    pub power_law: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFits {
    pub fits: Vec<TraceFit>,
    /// Fit of the pointwise mean when several traces share a time grid.
    pub ensemble: Option<PowerLawFit>,
    /// Mean and standard error of the individual exponents.
    pub scatter: Option<(f64, f64)>,
}

pub fn fit_traces(paths: &[PathBuf], window: (f64, f64)) -> CliResult<TraceFits> {
    if paths.is_empty() {
        return Err(CliError::Validation("no trace files given".into()));
    }
    let traces = paths.iter().map(|p| read_trace(p)).collect::<CliResult<Vec<_>>>()?;
    let fits = paths
        .iter()
        .zip(&traces)
        .map(|(p, t)| {
            Ok(TraceFit {
                path: p.clone(),
                power_law: fit_power_law(t, window.0, window.1)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (ensemble, scatter) = if traces.len() > 1 {
        let avg = ensemble_average(&traces)?;
        (
            Some(fit_power_law(&avg.mean, window.0, window.1)?),
            Some(beta_scatter(&traces, window.0, window.1)?),
        )
    } else {
        (None, None)
    };
    Ok(TraceFits { fits, ensemble, scatter })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayChain {
    pub points: Vec<(f64, f64, f64)>,
    pub decay_law: DecayLawFit,
    pub exponential_law: Fitted<ExponentialLawFit>,
    pub w_star: Fitted<ThresholdCrossing>,
}

/// Reads `W_MHz,beta[,stderr]` rows and runs the decay-law chain.
pub fn fit_betas(path: &Path, threshold: f64, n_rep: usize, seed: u64) -> CliResult<DecayChain> {
    let points: Vec<(f64, f64, f64)> = read_columns(path, &["W_MHz", "beta"], &["stderr"])?
        .into_iter()
        .map(|r| (r[0].unwrap(), r[1].unwrap(), r[2].unwrap_or(0.0)))
        .collect();
    let decay = fit_decay_law(&points)?;
    Ok(DecayChain {
        exponential_law: fit_exponential_law(&points).into(),
        w_star: extract_w_star(&decay, threshold, n_rep, seed).into(),
        decay_law: decay,
        points,
    })
}
