//! Lanczos-Krylov propagation of `exp(-i 2π·10⁻³ H t) v` with `H` in MHz
//! and `t` in ns.
//!
//! Each sub-step builds an orthonormal Krylov basis `V_m` of dimension
//! `m ∈ [min_dim, max_dim]` (modified Gram-Schmidt plus one
//! reorthogonalization pass) and the tridiagonal projection `T_m`, then uses
//!
//! ```text
//! exp(-iθH) v ≈ ‖v‖ V_m exp(-iθT_m) e_1
//! ```
//!
//! The a-posteriori error estimate is `‖v‖ θβ_m |[exp(-iθT_m) e_1]_m|` where
//! `β_m` is the norm of the unnormalized next Lanczos vector. The basis grows
//! until the estimate drops below `tol`; when `max_dim` is reached the step is
//! halved (reusing the basis) until it does.

use num_complex::Complex64;

use crate::dense;
use crate::error::{invalid, Error, Result};
use crate::sparse::Operator;

/// Radians per MHz·ns.
pub const RAD_PER_MHZ_NS: f64 = 2.0 * std::f64::consts::PI * 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    pub tol: f64,
    pub min_dim: usize,
    pub max_dim: usize,
    pub max_halvings: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            min_dim: 6,
            max_dim: 30,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KrylovStats {
    pub sub_steps: usize,
    pub matvecs: usize,
    pub halvings: usize,
    pub largest_dim: usize,
}

/// Stateful propagator; remembers the last accepted step length so that long
/// propagations do not rediscover it on every call.
#[derive(Debug, Clone, Default)]
pub struct KrylovPropagator {
    pub config: KrylovConfig,
    pub stats: KrylovStats,
    step_hint: Option<f64>,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `exp(-iθT) e_1` from an eigen-decomposition of `T`.
fn small_exp(eig: &dense::SymmetricEigen, theta: f64) -> Vec<Complex64> {
    let m = eig.values.len();
    let weights: Vec<Complex64> = (0..m)
        .map(|l| Complex64::from_polar(1.0, -theta * eig.values[l]) * eig.vectors[(0, l)])
        .collect();
    (0..m)
        .map(|k| (0..m).map(|l| weights[l] * eig.vectors[(k, l)]).sum())
        .collect()
}

fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> Result<dense::SymmetricEigen> {
    let m = alphas.len();
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        t[i * m + i] = alphas[i];
        if i + 1 < m {
            t[i * m + i + 1] = betas[i];
            t[(i + 1) * m + i] = betas[i];
        }
    }
    dense::eigh(m, &t)
}

impl KrylovPropagator {
    pub fn new(config: KrylovConfig) -> Self {
        Self {
            config,
            stats: KrylovStats::default(),
            step_hint: None,
        }
    }

    /// Advances `v` in place by `dt` ns (negative `dt` runs backwards).
    pub fn propagate<O: Operator>(&mut self, op: &O, v: &mut Vec<Complex64>, dt: f64) -> Result<()> {
        if v.len() != op.dim() {
            return invalid(format!("state length {} does not match dimension {}", v.len(), op.dim()));
        }
        if !dt.is_finite() {
            return Err(Error::Numeric(format!("non-finite time step {dt}")));
        }
        if v.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
            return Err(Error::Numeric("state contains non-finite amplitudes".into()));
        }
        let mut remaining = dt;
        while remaining != 0.0 {
            let attempt = match self.step_hint {
                Some(h) if h < remaining.abs() => h.copysign(remaining),
                _ => remaining,
            };
            let taken = self.sub_step(op, v, attempt)?;
            if taken == remaining {
                remaining = 0.0;
            } else {
                remaining -= taken;
            }
            self.step_hint = Some(if taken == attempt { 2.0 * taken.abs() } else { taken.abs() });
        }
        Ok(())
    }

    /// One Krylov step of length at most `tau`; returns the length taken.
    fn sub_step<O: Operator>(&mut self, op: &O, v: &mut [Complex64], tau: f64) -> Result<f64> {
        let cfg = self.config;
        let dim = op.dim();
        let beta0 = norm(v);
        if beta0 == 0.0 || dim == 0 {
            return Ok(tau);
        }
        let max_dim = cfg.max_dim.min(dim);
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_dim);
        basis.push(v.iter().map(|x| x / beta0).collect());
        let mut alphas = Vec::with_capacity(max_dim);
        let mut betas = Vec::with_capacity(max_dim);
        let mut w = vec![Complex64::new(0.0, 0.0); dim];
        let mut scale = 0.0f64;

        let (tau, y) = loop {
            let j = basis.len() - 1;
            op.apply_into(&basis[j], &mut w);
            self.stats.matvecs += 1;
            let alpha = dot(&basis[j], &w).re;
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= vi * alpha;
            }
            if j > 0 {
                let b = betas[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= vi * b;
                }
            }
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= qi * c;
                }
            }
            let beta = norm(&w);
            alphas.push(alpha);
            scale = scale.max(alpha.abs()).max(beta);
            let m = alphas.len();
            let exhausted = m == dim || beta <= 1e-14 * scale.max(f64::MIN_POSITIVE);

            if m >= cfg.min_dim.min(dim) || exhausted {
                let eig = tridiagonal_eigen(&alphas, &betas)?;
                // Local error ≈ β0 · |τ β_m| · |e_mᵀ exp(−iτT) e1| with τ in radians.
                let estimate = |t: f64, y: &[Complex64]| beta0 * (RAD_PER_MHZ_NS * t * beta).abs() * y[m - 1].norm();
                let y = small_exp(&eig, RAD_PER_MHZ_NS * tau);
                if exhausted || estimate(tau, &y) <= cfg.tol {
                    break (tau, y);
                }
                if m == max_dim {
                    let mut t = tau;
                    let mut found = None;
                    for _ in 0..cfg.max_halvings {
                        t *= 0.5;
                        self.stats.halvings += 1;
                        let y = small_exp(&eig, RAD_PER_MHZ_NS * t);
                        if estimate(t, &y) <= cfg.tol {
                            found = Some((t, y));
                            break;
                        }
                    }
                    match found {
                        Some(hit) => break hit,
                        None => {
                            return Err(Error::Convergence(format!(
                                "Krylov step did not reach tolerance {:e} after {} halvings",
                                cfg.tol, cfg.max_halvings
                            )))
                        }
                    }
                }
            }
            betas.push(beta);
            basis.push(w.iter().map(|x| x / beta).collect());
        };

        for x in v.iter_mut() {
            *x = Complex64::new(0.0, 0.0);
        }
        for (q, c) in basis.iter().zip(&y) {
            let c = c * beta0;
            for (x, qi) in v.iter_mut().zip(q) {
                *x += qi * c;
            }
        }
        self.stats.sub_steps += 1;
        self.stats.largest_dim = self.stats.largest_dim.max(alphas.len());
        Ok(tau)
    }
}

/// Approximates `exp(-i 2π·10⁻³ H dt) v` for a normalized `v`.
pub fn krylov_step<O: Operator>(op: &O, v: &[Complex64], dt: f64) -> Result<Vec<Complex64>> {
    if v.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
        return Err(Error::Numeric("state contains non-finite amplitudes".into()));
    }
    let n = norm(v);
    if (n - 1.0).abs() > 1e-8 {
        return invalid(format!("state must be normalized, got norm {n}"));
    }
    let mut out = v.to_vec();
    if dt == 0.0 {
        return Ok(out);
    }
    KrylovPropagator::default().propagate(op, &mut out, dt)?;
    Ok(out)
}
