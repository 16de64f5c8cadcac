//! Ensemble reductions over the per-realization files of a run directory.
//!
//! Everything here re-reads the files written by the workers, so a resumed
//! run and an uninterrupted one reduce exactly the same bytes.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use delocsim::analysis::{
    beta_scatter, ensemble_average, ergodic_boundary, extract_w_star, fit_decay_law, fit_exponential_law,
    fit_power_law, DecayLawFit, ErgodicBoundary, ExponentialLawFit, PowerLawFit, ThresholdCrossing,
};
use delocsim::dynamics::ImbalanceTrace;
use delocsim::spectral::gap_ratios;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::write_atomic;
use crate::spec::ExperimentSpec;

/// A fit that either produced a value or the reason it could not.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Fitted<T> {
    Value(T),
    Failed { error: String },
}

impl<T> Fitted<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Fitted::Value(v) => Some(v),
            Fitted::Failed { .. } => None,
        }
    }
}

impl<T> From<delocsim::Result<T>> for Fitted<T> {
    fn from(r: delocsim::Result<T>) -> Self {
        match r {
            Ok(v) => Fitted::Value(v),
            Err(e) => Fitted::Failed { error: e.to_string() },
        }
    }
}

pub fn w_dir(w: f64) -> String {
    format!("W{w}")
}

pub fn trace_path(w: f64, index: usize) -> String {
    format!("{}/trace_{index:04}.csv", w_dir(w))
}

pub fn spectrum_path(w: f64, index: usize) -> String {
    format!("{}/spectrum_{index:04}.csv", w_dir(w))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(format!("opening {}", path.display()), e))
}

pub fn read_trace(path: &Path) -> CliResult<ImbalanceTrace> {
    Ok(ImbalanceTrace::read_csv(open(path)?, &path.display().to_string())?)
}

/// Reads one numeric column (and optionally a second) from a headed CSV,
/// reporting the file and line of the first bad record.
pub fn read_columns(path: &Path, required: &[&str], optional: &[&str]) -> CliResult<Vec<Vec<Option<f64>>>> {
    let name = path.display().to_string();
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: name.clone(),
        line: line as usize,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let find = |c: &str| headers.iter().position(|h| h == c);
    let mut idx = Vec::new();
    for c in required {
        idx.push(Some(find(c).ok_or_else(|| parse_err(1, format!("missing column {c}")))?));
    }
    idx.extend(optional.iter().map(|c| find(c)));
    let names: Vec<&str> = required.iter().chain(optional).copied().collect();

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(idx.len());
        for (k, i) in idx.iter().enumerate() {
            let v = match i {
                Some(i) => {
                    let field = rec
                        .get(*i)
                        .ok_or_else(|| parse_err(line, format!("missing column {}", names[k])))?;
                    Some(
                        field
                            .parse::<f64>()
                            .map_err(|e| parse_err(line, format!("column {}: {e}", names[k])))?,
                    )
                }
                None => None,
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_spectrum(path: &Path) -> CliResult<Vec<f64>> {
    Ok(read_columns(path, &["energy_MHz"], &[])?
        .into_iter()
        .map(|r| r[0].expect("required column"))
        .collect())
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaRow {
    pub w: f64,
    /// Exponent of the ensemble-mean trace.
    pub beta: f64,
    /// Realization scatter of per-trace exponents when available, otherwise
    /// the slope error of the mean-trace fit.
    pub stderr: f64,
    pub stderr_source: &'static str,
    pub power_law: PowerLawFit,
    pub scatter: Fitted<(f64, f64)>,
    pub n_realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuenchSummary {
    pub geometry: String,
    pub fit_window: (f64, f64),
    pub spec_digest: String,
    pub per_w: Vec<Fitted<BetaRow>>,
    /// Whether beta never increases with W (a soft expectation).
    pub monotone_non_increasing: bool,
    pub decay_law: Fitted<DecayLawFit>,
    pub exponential_law: Fitted<ExponentialLawFit>,
    pub w_star: Fitted<ThresholdCrossing>,
}

impl QuenchSummary {
    pub fn rows(&self) -> impl Iterator<Item = &BetaRow> {
        self.per_w.iter().filter_map(Fitted::value)
    }
}

/// `(W, indices)` of the realizations to reduce.
pub type Completed = Vec<(f64, Vec<usize>)>;

fn beta_row(spec: &ExperimentSpec, dir: &Path, w: f64, indices: &[usize]) -> CliResult<Fitted<BetaRow>> {
    let traces = indices
        .iter()
        .map(|&i| read_trace(&dir.join(trace_path(w, i))))
        .collect::<CliResult<Vec<_>>>()?;
    if traces.is_empty() {
        return Ok(Fitted::Failed {
            error: format!("no completed realizations at W = {w}"),
        });
    }
    let avg = ensemble_average(&traces)?;
    let (lo, hi) = spec.fit_window;

    let mut csv = String::from("time_ns,imbalance,stderr\n");
    for ((t, i), s) in avg.mean.times.iter().zip(&avg.mean.imbalance).zip(&avg.stderr) {
        csv.push_str(&format!("{t},{i},{s}\n"));
    }
    write_atomic(&dir.join(w_dir(w)).join("mean.csv"), csv.as_bytes())?;

    let fit = match fit_power_law(&avg.mean, lo, hi) {
        Ok(f) => f,
        Err(e) => return Ok(Fitted::Failed { error: e.to_string() }),
    };
    let scatter: Fitted<(f64, f64)> = if traces.len() >= 2 {
        beta_scatter(&traces, lo, hi).into()
    } else {
        Fitted::Failed {
            error: "a single realization has no scatter".into(),
        }
    };
    let (stderr, stderr_source) = match scatter.value() {
        Some(&(_, se)) => (se, "realization_scatter"),
        None => (fit.beta_stderr, "fit_slope"),
    };
    Ok(Fitted::Value(BetaRow {
        w,
        beta: fit.beta,
        stderr,
        stderr_source,
        power_law: fit,
        scatter,
        n_realizations: traces.len(),
    }))
}

/// Mean traces, per-W exponents and the decay-law chain; writes
/// `W*/mean.csv`, `betas.csv` and `fits.json`.
pub fn quench_aggregates(spec: &ExperimentSpec, dir: &Path, completed: &Completed) -> CliResult<QuenchSummary> {
    let mut per_w = Vec::new();
    for (w, indices) in completed {
        per_w.push(beta_row(spec, dir, *w, indices)?);
    }

    let mut csv = String::from("W_MHz,beta,stderr,fit_stderr,n_realizations\n");
    let mut points = Vec::new();
    for r in per_w.iter().filter_map(Fitted::value) {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.w, r.beta, r.stderr, r.power_law.beta_stderr, r.n_realizations
        ));
        points.push((r.w, r.beta, r.stderr));
    }
    write_atomic(&dir.join("betas.csv"), csv.as_bytes())?;

    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = points.windows(2).all(|p| p[1].1 <= p[0].1);
    if !monotone {
        log::warn!("beta is not monotonically non-increasing in W: {points:?}");
    }
    let positive_w: Vec<_> = points.iter().copied().filter(|p| p.0 > 0.0).collect();
    let decay: Fitted<DecayLawFit> = fit_decay_law(&positive_w).into();
    let w_star = match decay.value() {
        Some(d) => extract_w_star(d, spec.beta_threshold, spec.n_rep, spec.seed_base).into(),
        None => Fitted::Failed {
            error: "no decay-law fit".into(),
        },
    };
    let summary = QuenchSummary {
        geometry: spec.geometry.label(),
        fit_window: spec.fit_window,
        spec_digest: spec.digest(),
        per_w,
        monotone_non_increasing: monotone,
        decay_law: decay,
        exponential_law: fit_exponential_law(&positive_w).into(),
        w_star,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&dir.join("fits.json"), json.as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationRatio {
    pub index: usize,
    pub seed: u64,
    pub mean_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRatioRow {
    pub w: f64,
    pub mean_r: f64,
    pub stderr: f64,
    pub n_realizations: usize,
    pub realizations: Vec<RealizationRatio>,
    pub failures: Vec<RealizationFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRatioReport {
    pub geometry: String,
    pub n_sites: usize,
    pub n_excitations: usize,
    pub n_ev: usize,
    pub sigma: f64,
    pub spec_digest: String,
    pub per_w: Vec<GapRatioRow>,
    pub ergodic_boundary: Fitted<ErgodicBoundary>,
}

/// Per-realization mean gap ratio from each spectrum file, then the
/// ensemble mean per W; writes `gap_ratio.csv` and `gap_ratio.json`.
pub fn gap_ratio_aggregates(
    spec: &ExperimentSpec,
    dir: &Path,
    completed: &Completed,
    task_failures: &[(f64, usize, String)],
) -> CliResult<GapRatioReport> {
    let mut per_w = Vec::new();
    for (w, indices) in completed {
        let mut realizations = Vec::new();
        let mut failures: Vec<RealizationFailure> = task_failures
            .iter()
            .filter(|f| f.0 == *w)
            .map(|f| RealizationFailure {
                index: f.1,
                seed: spec.seed(f.1),
                error: f.2.clone(),
            })
            .collect();
        for &index in indices {
            let levels = read_spectrum(&dir.join(spectrum_path(*w, index)))?;
            let seed = spec.seed(index);
            match gap_ratios(&levels) {
                Ok(r) => realizations.push(RealizationRatio {
                    index,
                    seed,
                    mean_r: r.iter().sum::<f64>() / r.len() as f64,
                }),
                Err(e) => failures.push(RealizationFailure {
                    index,
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        failures.sort_by_key(|f| f.index);
        let values: Vec<f64> = realizations.iter().map(|r| r.mean_r).collect();
        let (mean_r, stderr) = if values.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_stderr(&values)
        };
        per_w.push(GapRatioRow {
            w: *w,
            mean_r,
            stderr,
            n_realizations: values.len(),
            realizations,
            failures,
        });
    }

    let mut csv = String::from("W_MHz,mean_r,stderr,n_realizations\n");
    for r in &per_w {
        csv.push_str(&format!("{},{},{},{}\n", r.w, r.mean_r, r.stderr, r.n_realizations));
    }
    write_atomic(&dir.join("gap_ratio.csv"), csv.as_bytes())?;

    let mut curve: Vec<(f64, f64)> = per_w
        .iter()
        .filter(|r| r.n_realizations > 0)
        .map(|r| (r.w, r.mean_r))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let report = GapRatioReport {
        geometry: spec.geometry.label(),
        n_sites: spec.geometry.n_sites(),
        n_excitations: spec.spectral_excitations(),
        n_ev: spec.n_ev,
        sigma: spec.sigma,
        spec_digest: spec.digest(),
        per_w,
        ergodic_boundary: ergodic_boundary(&curve, spec.r_threshold).into(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&dir.join("gap_ratio.json"), json.as_bytes())?;
    Ok(report)
}

/// Every `(W, index)` of `spec` whose output file already exists.
pub fn completed_on_disk(spec: &ExperimentSpec, dir: &Path, path_of: fn(f64, usize) -> String) -> Completed {
    spec.w_list
        .iter()
        .map(|&w| {
            let done = (0..spec.realizations)
                .filter(|&i| PathBuf::from(dir).join(path_of(w, i)).is_file())
                .collect();
            (w, done)
        })
        .collect()
}
