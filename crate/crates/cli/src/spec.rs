//! Experiment description read from a TOML document.
//!
//! ```toml
//! geometry = { rows = 3, cols = 4 }   # or { chain = 12 }
//! w_list = [25.0, 50.0, 75.0, 100.0]
//! realizations = 30
//! mode = "quench"
//! out = "runs/ladder"
//!
//! [time_grid]
//! kind = "geometric"
//! t_min = 10.0
//! t_max = 1000.0
//! points = 40
//! ```
//!
//! Frequencies are in MHz (f = ω/2π) and times in ns.

use std::path::{Path, PathBuf};

use delocsim::analysis::{DEFAULT_BETA_THRESHOLD, DEFAULT_FIT_WINDOW, DEFAULT_N_REP, DEFAULT_R_THRESHOLD};
use delocsim::dynamics::{checkerboard, Parity, TimeGrid};
use delocsim::hamiltonian::{binomial, MAX_SITES};
use delocsim::lattice::{build_chain, build_rectangle, CouplingGraph, DEFAULT_J_NN, DEFAULT_J_NNN};
use delocsim::rng::realization_seed;
use delocsim::spectral::SpectralWindow;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySpec {
    Rectangle { rows: usize, cols: usize },
    Chain { chain: usize },
}

impl GeometrySpec {
    pub fn n_sites(&self) -> usize {
        match *self {
            GeometrySpec::Rectangle { rows, cols } => rows * cols,
            GeometrySpec::Chain { chain } => chain,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            GeometrySpec::Rectangle { rows, cols } => format!("{rows}x{cols}"),
            GeometrySpec::Chain { chain } => format!("chain{chain}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternPolicy {
    Even,
    Odd,
    /// Even parity for even realization indices, odd for odd ones.
    Both,
}

impl PatternPolicy {
    pub fn parity(self, index: usize) -> Parity {
        match self {
            PatternPolicy::Even => Parity::Even,
            PatternPolicy::Odd => Parity::Odd,
            PatternPolicy::Both if index % 2 == 0 => Parity::Even,
            PatternPolicy::Both => Parity::Odd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Quench,
    Spectrum,
    GapRatio,
    /// Recompute aggregates and fits from traces already on disk.
    FitOnly,
}

fn default_j_nn() -> f64 {
    DEFAULT_J_NN
}
fn default_j_nnn() -> f64 {
    DEFAULT_J_NNN
}
fn default_fit_window() -> (f64, f64) {
    DEFAULT_FIT_WINDOW
}
fn default_n_ev() -> usize {
    SpectralWindow::default().n_ev
}
fn default_threshold() -> f64 {
    SpectralWindow::default().threshold
}
fn default_beta_threshold() -> f64 {
    DEFAULT_BETA_THRESHOLD
}
fn default_n_rep() -> usize {
    DEFAULT_N_REP
}
fn default_r_threshold() -> f64 {
    DEFAULT_R_THRESHOLD
}
fn default_true() -> bool {
    true
}
fn default_pattern() -> PatternPolicy {
    PatternPolicy::Even
}
fn default_out() -> PathBuf {
    PathBuf::from("delocsim-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub geometry: GeometrySpec,
    #[serde(default = "default_j_nn")]
    pub j_nn: f64,
    /// Ignored for chains.
    #[serde(default = "default_j_nnn")]
    pub j_nnn: f64,
    pub w_list: Vec<f64>,
    pub realizations: usize,
    #[serde(default = "default_pattern")]
    pub pattern: PatternPolicy,
    #[serde(default)]
    pub time_grid: TimeGrid,
    #[serde(default = "default_fit_window")]
    pub fit_window: (f64, f64),
    #[serde(default)]
    pub seed_base: u64,
    pub mode: Mode,
    #[serde(default = "default_n_ev")]
    pub n_ev: usize,
    /// Spectral target in rescaled units.
    #[serde(default)]
    pub sigma: f64,
    /// Filter pass-band threshold for the spectral modes.
    #[serde(default = "default_threshold")]
    pub filter_threshold: f64,
    /// Sector for the spectral modes; half filling when absent. Quenches
    /// always use the sector of their checkerboard pattern.
    #[serde(default)]
    pub n_excitations: Option<usize>,
    #[serde(default = "default_beta_threshold")]
    pub beta_threshold: f64,
    #[serde(default = "default_n_rep")]
    pub n_rep: usize,
    #[serde(default = "default_r_threshold")]
    pub r_threshold: f64,
    #[serde(default = "default_true")]
    pub record_occupations: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl ExperimentSpec {
    /// Parses and validates a TOML document; `path` is used in messages only.
    pub fn from_toml_str(text: &str, path: &str) -> CliResult<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            CliError::Parse {
                path: path.to_string(),
                line,
                message: e.message().to_string(),
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn graph(&self) -> CliResult<CouplingGraph> {
        let g = match self.geometry {
            GeometrySpec::Rectangle { rows, cols } => build_rectangle(rows, cols, self.j_nn, self.j_nnn),
            GeometrySpec::Chain { chain } => build_chain(chain, self.j_nn),
        };
        g.map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn spectral_excitations(&self) -> usize {
        self.n_excitations.unwrap_or(self.geometry.n_sites() / 2)
    }

    pub fn window(&self) -> SpectralWindow {
        SpectralWindow {
            target: self.sigma,
            n_ev: self.n_ev,
            order: None,
            threshold: self.filter_threshold,
        }
    }

    pub fn seed(&self, index: usize) -> u64 {
        realization_seed(self.seed_base, index as u64)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.realizations < 1 {
            return bad("realizations must be at least 1".into());
        }
        if self.w_list.is_empty() {
            return bad("w_list must not be empty".into());
        }
        if let Some(w) = self.w_list.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return bad(format!("disorder strengths must be finite and non-negative, got {w}"));
        }
        let mut sorted = self.w_list.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return bad("w_list contains duplicates".into());
        }
        let n = self.geometry.n_sites();
        if n < 2 || n > MAX_SITES {
            return bad(format!("lattice must have between 2 and {MAX_SITES} sites, got {n}"));
        }
        let graph = self.graph()?;

        match self.mode {
            Mode::Quench | Mode::FitOnly => {
                let times = self.time_grid.times().map_err(|e| CliError::Validation(e.to_string()))?;
                let (lo, hi) = self.fit_window;
                let span = (times[1], *times.last().unwrap());
                if !(lo > 0.0 && lo < hi && lo >= span.0 && hi <= span.1) {
                    return bad(format!(
                        "fit window ({lo}, {hi}) must lie inside the sampled span [{}, {}]",
                        span.0, span.1
                    ));
                }
                for parity in [Parity::Even, Parity::Odd] {
                    if checkerboard(&graph, parity).is_empty() {
                        return bad("checkerboard pattern is empty".into());
                    }
                }
                if !(self.beta_threshold > 0.0) || self.n_rep == 0 {
                    return bad("beta_threshold must be positive and n_rep at least 1".into());
                }
            }
            Mode::Spectrum | Mode::GapRatio => {
                self.window().validate().map_err(|e| CliError::Validation(e.to_string()))?;
                let k = self.spectral_excitations();
                if k > n {
                    return bad(format!("n_excitations = {k} exceeds the {n} sites"));
                }
                let dim = binomial(n, k);
                if self.n_ev as u64 > dim {
                    return bad(format!("n_ev = {} exceeds sector dimension {dim}", self.n_ev));
                }
                if self.mode == Mode::GapRatio && self.n_ev < 3 {
                    return bad("gap ratios need n_ev of at least 3".into());
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, ignoring the output directory.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("spec serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}
