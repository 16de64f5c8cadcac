//! Quench dynamics from product states and the imbalance observable.

mod krylov;

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use krylov::{krylov_step, KrylovConfig, KrylovPropagator, KrylovStats, RAD_PER_MHZ_NS};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::SparseHamiltonian;
use crate::lattice::{CouplingGraph, SiteId};

/// Tolerance on norm and particle-number drift at every sample.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternLabel {
    CheckerboardEven,
    CheckerboardOdd,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialPattern {
    /// Sorted by site index.
    pub excited: Vec<SiteId>,
    pub label: PatternLabel,
}

impl InitialPattern {
    pub fn custom(graph: &CouplingGraph, mut excited: Vec<SiteId>) -> Result<Self> {
        for s in &excited {
            if !graph.sites.contains(s) {
                return invalid(format!("site {:?} is not in the graph", s));
            }
        }
        excited.sort_by_key(|s| s.index);
        excited.dedup();
        Ok(Self {
            excited,
            label: PatternLabel::Custom,
        })
    }

    pub fn len(&self) -> usize {
        self.excited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excited.is_empty()
    }

    /// Occupation bit mask in the graph's site order.
    pub fn mask(&self, graph: &CouplingGraph) -> Result<u32> {
        let mut mask = 0u32;
        for s in &self.excited {
            let p = graph
                .position(s.index)
                .ok_or_else(|| Error::InvalidArgument(format!("site {:?} is not in the graph", s)))?;
            mask |= 1 << p;
        }
        Ok(mask)
    }
}

/// Excites every site whose `(row + col)` parity matches.
pub fn checkerboard(graph: &CouplingGraph, parity: Parity) -> InitialPattern {
    let want = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    let mut excited: Vec<SiteId> = graph
        .sites
        .iter()
        .filter(|s| (s.row + s.col).rem_euclid(2) == want)
        .copied()
        .collect();
    excited.sort_by_key(|s| s.index);
    InitialPattern {
        excited,
        label: match parity {
            Parity::Even => PatternLabel::CheckerboardEven,
            Parity::Odd => PatternLabel::CheckerboardOdd,
        },
    }
}

/// Sample times in ns; always starts at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeGrid {
    /// `points` geometrically spaced times from `t_min` to `t_max`, plus 0.
    Geometric { t_min: f64, t_max: f64, points: usize },
    /// `points` equally spaced times from 0 to `t_max` inclusive.
    Linear { t_max: f64, points: usize },
    Explicit { times: Vec<f64> },
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::Geometric {
            t_min: 10.0,
            t_max: 1000.0,
            points: 40,
        }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Result<Vec<f64>> {
        let times = match *self {
            TimeGrid::Geometric { t_min, t_max, points } => {
                if !(t_min > 0.0 && t_max > t_min && points >= 2) {
                    return invalid("geometric grid needs 0 < t_min < t_max and at least two points");
                }
                let ratio = (t_max / t_min).ln();
                let mut t = vec![0.0];
                t.extend((0..points).map(|k| {
                    if k + 1 == points {
                        t_max
                    } else {
                        t_min * (ratio * k as f64 / (points - 1) as f64).exp()
                    }
                }));
                t
            }
            TimeGrid::Linear { t_max, points } => {
                if !(t_max > 0.0 && points >= 2) {
                    return invalid("linear grid needs t_max > 0 and at least two points");
                }
                (0..points)
                    .map(|k| if k + 1 == points { t_max } else { t_max * k as f64 / (points - 1) as f64 })
                    .collect()
            }
            TimeGrid::Explicit { ref times } => times.clone(),
        };
        validate_times(&times, f64::INFINITY)?;
        Ok(times)
    }

    pub fn t_max(&self) -> Result<f64> {
        Ok(*self.times()?.last().unwrap())
    }
}

fn validate_times(times: &[f64], t_max: f64) -> Result<()> {
    if times.first() != Some(&0.0) {
        return invalid("sample times must start at 0");
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("sample times must be strictly increasing");
    }
    if times.iter().any(|t| !t.is_finite() || *t > t_max) {
        return invalid(format!("sample times must lie in [0, {t_max}]"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceProvenance {
    pub w: f64,
    pub seed: u64,
    pub n_excitations: usize,
    pub pattern: PatternLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceTrace {
    pub times: Vec<f64>,
    pub imbalance: Vec<f64>,
    /// `occupations[t][site]`, sites in graph order.
    pub occupations: Option<Vec<Vec<f64>>>,
    /// Column labels for `occupations`.
    pub site_labels: Vec<String>,
    pub provenance: Option<TraceProvenance>,
    /// Largest `|‖ψ‖² − 1|` seen.
    pub norm_drift: f64,
    /// Largest `|Σ_j ⟨n_j⟩ − n|` seen.
    pub number_drift: f64,
}

impl ImbalanceTrace {
    pub fn from_series(times: Vec<f64>, imbalance: Vec<f64>) -> Result<Self> {
        if times.len() != imbalance.len() {
            return invalid("times and imbalance differ in length");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("times must be strictly increasing");
        }
        Ok(Self {
            times,
            imbalance,
            occupations: None,
            site_labels: Vec::new(),
            provenance: None,
            norm_drift: 0.0,
            number_drift: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `time_ns,imbalance` followed by one column per site
    /// when occupations are present. Floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "time_ns,imbalance")?;
        let occ = self.occupations.as_ref();
        if occ.is_some() {
            for label in &self.site_labels {
                write!(w, ",{label}")?;
            }
        }
        writeln!(w)?;
        for (k, (t, i)) in self.times.iter().zip(&self.imbalance).enumerate() {
            write!(w, "{t},{i}")?;
            if let Some(occ) = occ {
                for n in &occ[k] {
                    write!(w, ",{n}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the `time_ns` and `imbalance` columns of a trace CSV.
    pub fn read_csv<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, h)) => h?,
            None => return Err(parse_err(1, "empty file".into())),
        };
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let ti = cols.iter().position(|c| *c == "time_ns");
        let ii = cols.iter().position(|c| *c == "imbalance");
        let (ti, ii) = match (ti, ii) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(parse_err(1, "header must contain time_ns and imbalance".into())),
        };
        let mut times = Vec::new();
        let mut imbalance = Vec::new();
        for (k, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |idx: usize| -> Result<f64> {
                fields
                    .get(idx)
                    .ok_or_else(|| parse_err(k + 1, format!("missing column {}", cols[idx])))?
                    .parse::<f64>()
                    .map_err(|e| parse_err(k + 1, format!("column {}: {e}", cols[idx])))
            };
            times.push(get(ti)?);
            imbalance.push(get(ii)?);
        }
        Self::from_series(times, imbalance).map_err(|e| parse_err(0, e.to_string()))
    }
}

fn imbalance_from(occ: &[f64], excited_mask: u32) -> f64 {
    let (mut n1, mut l1, mut n0, mut l0) = (0.0, 0usize, 0.0, 0usize);
    for (j, &n) in occ.iter().enumerate() {
        if excited_mask >> j & 1 == 1 {
            n1 += n;
            l1 += 1;
        } else {
            n0 += n;
            l0 += 1;
        }
    }
    let n1 = if l1 > 0 { n1 / l1 as f64 } else { 0.0 };
    let n0 = if l0 > 0 { n0 / l0 as f64 } else { 0.0 };
    (n1 - n0) / (n1 + n0)
}

/// `⟨n_j⟩ = Σ_{s : bit j set} |ψ_s|²` for every site, and `‖ψ‖²`.
pub fn site_occupations(h: &SparseHamiltonian, psi: &[Complex64]) -> (Vec<f64>, f64) {
    let mut occ = vec![0.0; h.basis().n_sites()];
    let mut norm2 = 0.0;
    for (&s, a) in h.basis().states().iter().zip(psi) {
        let p = a.norm_sqr();
        norm2 += p;
        let mut bits = s;
        while bits != 0 {
            occ[bits.trailing_zeros() as usize] += p;
            bits &= bits - 1;
        }
    }
    (occ, norm2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuenchOptions {
    pub krylov: KrylovConfig,
    pub record_occupations: bool,
}

impl Default for QuenchOptions {
    fn default() -> Self {
        Self {
            krylov: KrylovConfig::default(),
            record_occupations: true,
        }
    }
}

pub fn run_quench(
    h: &SparseHamiltonian,
    pattern: &InitialPattern,
    t_max: f64,
    sample_times: &[f64],
) -> Result<ImbalanceTrace> {
    run_quench_with(h, pattern, t_max, sample_times, QuenchOptions::default())
}

/// Evolves the product state `pattern` and records the imbalance
/// `(⟨n₁⟩ − ⟨n₀⟩)/(⟨n₁⟩ + ⟨n₀⟩)` at each sample time, with `⟨n₁⟩` the mean
/// occupation of initially excited sites and `⟨n₀⟩` of initially empty ones.
///
/// Norm and particle number are checked at every sample against
/// [`CONSERVATION_TOL`].
pub fn run_quench_with(
    h: &SparseHamiltonian,
    pattern: &InitialPattern,
    t_max: f64,
    sample_times: &[f64],
    options: QuenchOptions,
) -> Result<ImbalanceTrace> {
    let n = h.n_excitations();
    if pattern.len() != n {
        return invalid(format!(
            "pattern excites {} sites but the Hamiltonian acts on the {n}-excitation sector",
            pattern.len()
        ));
    }
    validate_times(sample_times, t_max)?;
    let graph = h.graph();
    let mask = pattern.mask(graph)?;
    let start = h
        .basis()
        .rank(mask)
        .ok_or_else(|| Error::InvalidArgument("pattern is not a state of the sector".into()))?;

    let mut psi = vec![Complex64::new(0.0, 0.0); h.basis().dim()];
    psi[start] = Complex64::new(1.0, 0.0);
    let mut prop = KrylovPropagator::new(options.krylov);

    let mut imbalance = Vec::with_capacity(sample_times.len());
    let mut occupations = Vec::with_capacity(sample_times.len());
    let (mut norm_drift, mut number_drift) = (0.0f64, 0.0f64);
    let mut now = 0.0;
    for &t in sample_times {
        if t > now {
            prop.propagate(h, &mut psi, t - now)?;
            now = t;
        }
        let (occ, norm2) = site_occupations(h, &psi);
        let nd = (norm2 - 1.0).abs();
        let pd = (occ.iter().sum::<f64>() - n as f64).abs();
        if nd > CONSERVATION_TOL {
            return Err(Error::Conservation {
                time: t,
                quantity: "norm",
                drift: nd,
            });
        }
        if pd > CONSERVATION_TOL {
            return Err(Error::Conservation {
                time: t,
                quantity: "particle number",
                drift: pd,
            });
        }
        norm_drift = norm_drift.max(nd);
        number_drift = number_drift.max(pd);
        imbalance.push(imbalance_from(&occ, mask));
        if options.record_occupations {
            occupations.push(occ);
        }
    }
    log::debug!(
        "quench dim {}: {} Krylov steps, {} matvecs",
        h.basis().dim(),
        prop.stats.sub_steps,
        prop.stats.matvecs
    );

    Ok(ImbalanceTrace {
        times: sample_times.to_vec(),
        imbalance,
        occupations: options.record_occupations.then_some(occupations),
        site_labels: graph.sites.iter().map(|s| format!("n_r{}_c{}", s.row, s.col)).collect(),
        provenance: Some(TraceProvenance {
            w: h.realization().w,
            seed: h.realization().seed,
            n_excitations: n,
            pattern: pattern.label,
        }),
        norm_drift,
        number_drift,
    })
}
