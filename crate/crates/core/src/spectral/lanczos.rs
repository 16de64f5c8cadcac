//! Extremal eigenvalues by Lanczos with full reorthogonalization.

use crate::dense;
use crate::error::{Error, Result};
use crate::rng;
use crate::sparse::Operator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalConfig {
    /// Residual tolerance relative to the spectral scale.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
    /// Relative widening applied on each side of the interval.
    pub margin: f64,
    pub seed: u64,
}

impl Default for ExtremalConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            max_iter: 400,
            max_restarts: 5,
            margin: 1e-6,
            seed: 0x5eed,
        }
    }
}

/// Spectral bounds: `lower`/`upper` are the Lanczos estimates, `e0`/`e1` the
/// widened interval used for rescaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub lower: f64,
    pub upper: f64,
    pub e0: f64,
    pub e1: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

fn random_unit(seed: u64, dim: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut stream = rng::stream(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng::symmetric_f64(&mut stream, 1.0)).collect();
    let before = dot(&v, &v).sqrt();
    orthogonalize(&mut v, basis);
    let n = dot(&v, &v).sqrt();
    if n <= 1e-8 * before {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

pub fn extremal_eigenvalues<O: Operator>(op: &O) -> Result<Extremes> {
    extremal_eigenvalues_with(op, ExtremalConfig::default())
}

pub fn extremal_eigenvalues_with<O: Operator>(op: &O, cfg: ExtremalConfig) -> Result<Extremes> {
    let dim = op.dim();
    if dim < 2 {
        return Err(Error::InvalidArgument("extremal eigenvalues need dim >= 2".into()));
    }
    let max_iter = cfg.max_iter.min(dim);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut restarts = 0;
    basis.push(random_unit(cfg.seed, dim, &[]).expect("nonzero random vector"));
    let mut w = vec![0.0; dim];
    let mut scale = 0.0f64;

    loop {
        let j = basis.len() - 1;
        op.apply_into(&basis[j], &mut w);
        let alpha = dot(&basis[j], &w);
        orthogonalize(&mut w, &basis);
        let beta = dot(&w, &w).sqrt();
        alphas.push(alpha);
        scale = scale.max(alpha.abs()).max(beta);
        let k = alphas.len();
        let breakdown = beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) || beta == 0.0;

        let check = breakdown || k == max_iter || k % 5 == 0;
        if check {
            let mut t = vec![0.0; k * k];
            for i in 0..k {
                t[i * k + i] = alphas[i];
                if i + 1 < k {
                    t[i * k + i + 1] = betas[i];
                    t[(i + 1) * k + i] = betas[i];
                }
            }
            let eig = dense::eigh(k, &t)?;
            let (lo, hi) = (eig.values[0], eig.values[k - 1]);
            let tol = cfg.rel_tol * lo.abs().max(hi.abs()).max(hi - lo).max(f64::MIN_POSITIVE);
            let res_lo = beta * eig.vectors[(k - 1, 0)].abs();
            let res_hi = beta * eig.vectors[(k - 1, k - 1)].abs();
            let converged = res_lo <= tol && res_hi <= tol;

            let finish = |lo: f64, hi: f64| {
                let width = hi - lo;
                let pad = if width > 1e-12 * lo.abs().max(hi.abs()).max(1.0) {
                    cfg.margin * width
                } else {
                    cfg.margin * lo.abs().max(1.0)
                };
                Extremes {
                    lower: lo,
                    upper: hi,
                    e0: lo - pad,
                    e1: hi + pad,
                    iterations: k,
                }
            };

            if breakdown {
                if k < dim && restarts < cfg.max_restarts {
                    restarts += 1;
                    if let Some(v) = random_unit(rng::realization_seed(cfg.seed, restarts as u64), dim, &basis) {
                        betas.push(0.0);
                        basis.push(v);
                        continue;
                    }
                }
                if k < dim {
                    log::debug!("Lanczos stopped after {restarts} restarts on an invariant subspace of size {k}");
                }
                return Ok(finish(lo, hi));
            }
            if converged {
                return Ok(finish(lo, hi));
            }
            if k == max_iter {
                return Err(Error::Convergence(format!(
                    "extremal Lanczos not converged after {k} iterations (residuals {res_lo:e}, {res_hi:e})"
                )));
            }
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SymmetricCsr;

    #[test]
    fn two_by_two() {
        let h = SymmetricCsr::from_upper(vec![0.0, 0.0], &[(0, 1, 3.0)]).unwrap();
        let e = extremal_eigenvalues(&h).unwrap();
        assert!((e.lower + 3.0).abs() < 1e-12 && (e.upper - 3.0).abs() < 1e-12);
        assert!(e.e0 < e.lower && e.e1 > e.upper);
        assert!((e.upper - e.lower - 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_gets_valid_interval() {
        let h = SymmetricCsr::from_upper(vec![0.0; 50], &[]).unwrap();
        let e = extremal_eigenvalues(&h).unwrap();
        assert_eq!((e.lower, e.upper), (0.0, 0.0));
        assert!(e.e1 > e.e0);
    }

    #[test]
    fn reducible_matrix() {
        // Two decoupled blocks with different ranges.
        let h = SymmetricCsr::from_upper(vec![1.0, 1.0, -7.0, 9.0], &[(0, 1, 0.5)]).unwrap();
        let e = extremal_eigenvalues(&h).unwrap();
        assert!((e.lower + 7.0).abs() < 1e-10);
        assert!((e.upper - 9.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_tiny() {
        let h = SymmetricCsr::from_upper(vec![1.0], &[]).unwrap();
        assert!(extremal_eigenvalues(&h).is_err());
    }
}
