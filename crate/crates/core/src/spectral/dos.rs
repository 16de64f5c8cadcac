//! Stochastic kernel-polynomial estimate of the density of states of a
//! rescaled operator.

use crate::error::{invalid, Result};
use crate::rng;
use crate::sparse::Operator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosConfig {
    pub n_probe: usize,
    pub n_moments: usize,
    pub seed: u64,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            n_probe: 20,
            n_moments: 200,
            seed: 0xd05,
        }
    }
}

/// Floor returned in place of a non-positive estimate.
pub const DOS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DosEstimate {
    /// Normalized Chebyshev moments `μ_n = tr T_n(H_R) / dim`.
    pub moments: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jackson damping factors for `n` moments.
pub fn jackson_kernel(n: usize) -> Vec<f64> {
    let np1 = (n + 1) as f64;
    let q = std::f64::consts::PI / np1;
    (0..n)
        .map(|k| {
            let k = k as f64;
            ((np1 - k) * (q * k).cos() + (q * k).sin() / q.tan()) / np1
        })
        .collect()
}

impl DosEstimate {
    /// Moments from `n_probe` random ±1 vectors. Uses `T_{2n} = 2T_n² − T_0`
    /// and `T_{2n+1} = 2T_{n+1}T_n − T_1`, so `n_moments / 2` matvecs per probe.
    pub fn compute<O: Operator>(op: &O, cfg: DosConfig) -> Result<Self> {
        if cfg.n_probe == 0 || cfg.n_moments < 2 {
            return invalid("density estimate needs at least one probe and two moments");
        }
        let dim = op.dim();
        let m = cfg.n_moments;
        let mut mu = vec![0.0; m];
        let mut stream = rng::stream(cfg.seed);
        for _ in 0..cfg.n_probe {
            let r = rng::rademacher(&mut stream, dim);
            let mut prev = r.clone();
            let mut cur = op.apply(&r)?;
            let mut next = vec![0.0; dim];
            let a0 = dot(&r, &r);
            let a1 = dot(&r, &cur);
            mu[0] += a0;
            mu[1] += a1;
            let mut n = 1;
            while 2 * n < m {
                // cur = T_n r, prev = T_{n-1} r
                op.apply_into(&cur, &mut next);
                for (x, &p) in next.iter_mut().zip(&prev) {
                    *x = 2.0 * *x - p;
                }
                mu[2 * n] += 2.0 * dot(&cur, &cur) - a0;
                if 2 * n + 1 < m {
                    mu[2 * n + 1] += 2.0 * dot(&next, &cur) - a1;
                }
                std::mem::swap(&mut prev, &mut cur);
                std::mem::swap(&mut cur, &mut next);
                n += 1;
            }
        }
        let norm = (cfg.n_probe * dim) as f64;
        mu.iter_mut().for_each(|x| *x /= norm);
        Ok(Self { moments: mu })
    }

    /// Jackson-damped density at `x ∈ (-1, 1)`; unclamped.
    pub fn density_raw(&self, x: f64) -> f64 {
        let g = jackson_kernel(self.moments.len());
        let mut acc = g[0] * self.moments[0];
        let (mut prev, mut cur) = (1.0, x);
        for n in 1..self.moments.len() {
            acc += 2.0 * g[n] * self.moments[n] * cur;
            let next = 2.0 * x * cur - prev;
            prev = cur;
            cur = next;
        }
        acc / (std::f64::consts::PI * (1.0 - x * x).sqrt())
    }

    pub fn density(&self, x: f64) -> f64 {
        let raw = self.density_raw(x);
        if raw > DOS_FLOOR {
            raw
        } else {
            log::warn!("density estimate {raw:e} at {x} clamped to {DOS_FLOOR:e}");
            DOS_FLOOR
        }
    }
}

/// Normalized density `ρ̃(σ)` of a rescaled operator (integrates to 1 on [-1, 1]).
pub fn estimate_dos<O: Operator>(op: &O, sigma: f64, cfg: DosConfig) -> Result<f64> {
    if !(sigma.abs() < 1.0) {
        return invalid(format!("density target must lie in (-1, 1), got {sigma}"));
    }
    Ok(DosEstimate::compute(op, cfg)?.density(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SymmetricCsr;

    #[test]
    fn flat_spectrum() {
        let n = 2001;
        let d: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let op = SymmetricCsr::from_upper(d, &[]).unwrap();
        let rho = estimate_dos(&op, 0.0, DosConfig::default()).unwrap();
        assert!((rho - 0.5).abs() < 0.075, "{rho}");
    }

    #[test]
    fn gapped_two_level() {
        let op = SymmetricCsr::from_upper(vec![-1.0, 1.0], &[]).unwrap();
        let rho = estimate_dos(&op, 0.0, DosConfig::default()).unwrap();
        assert!(rho < 0.01, "{rho}");
    }

    #[test]
    fn moments_match_exact_traces() {
        let d = vec![-0.9, -0.2, 0.4, 0.75];
        let op = SymmetricCsr::from_upper(d.clone(), &[]).unwrap();
        let est = DosEstimate::compute(&op, DosConfig { n_moments: 9, ..DosConfig::default() }).unwrap();
        for (n, mu) in est.moments.iter().enumerate() {
            let exact: f64 = d.iter().map(|x: &f64| (n as f64 * x.acos()).cos()).sum::<f64>() / 4.0;
            assert!((mu - exact).abs() < 1e-12, "moment {n}: {mu} vs {exact}");
        }
    }

    #[test]
    fn jackson_endpoints() {
        let g = jackson_kernel(200);
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }
}
