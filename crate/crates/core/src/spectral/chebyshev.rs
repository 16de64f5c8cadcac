//! Affine rescaling onto `[-1, 1]` and the Chebyshev spectral filter
//!
//! ```text
//! P(x) = (1/D) Σ_{n=0}^{K} c_n T_n(x),   c_n = sqrt(4 − 3δ_{n0}) cos(n arccos σ)
//! ```
//!
//! normalized so that `P(σ) = 1`. Eigenvalues near `σ` become the largest
//! eigenvalues of `P(H_R)`.

use crate::error::{invalid, Error, Result};
use crate::sparse::{Operator, Scalar};

/// Default filter acceptance level.
pub const DEFAULT_THRESHOLD: f64 = 0.16;
pub const MIN_ORDER: usize = 8;
pub const MAX_ORDER: usize = 1 << 16;

/// Lazy view `H_R = (2H − e0 − e1)/(e1 − e0)`.
#[derive(Debug, Clone, Copy)]
pub struct Rescaled<'a, O> {
    op: &'a O,
    e0: f64,
    e1: f64,
}

pub fn rescale<O: Operator>(op: &O, e0: f64, e1: f64) -> Result<Rescaled<'_, O>> {
    if !(e1 > e0) || !e0.is_finite() || !e1.is_finite() {
        return invalid(format!("rescaling needs e1 > e0, got ({e0}, {e1})"));
    }
    Ok(Rescaled { op, e0, e1 })
}

impl<'a, O: Operator> Rescaled<'a, O> {
    pub fn bounds(&self) -> (f64, f64) {
        (self.e0, self.e1)
    }

    pub fn inner(&self) -> &'a O {
        self.op
    }

    pub fn to_original(&self, eps: f64) -> f64 {
        ((self.e1 - self.e0) * eps + self.e0 + self.e1) / 2.0
    }

    pub fn to_rescaled(&self, energy: f64) -> f64 {
        (2.0 * energy - self.e0 - self.e1) / (self.e1 - self.e0)
    }

    /// Factor converting a residual norm of `H_R` into original units.
    pub fn half_width(&self) -> f64 {
        (self.e1 - self.e0) / 2.0
    }
}

impl<O: Operator> Operator for Rescaled<'_, O> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply_into<S: Scalar>(&self, x: &[S], y: &mut [S]) {
        self.op.apply_into(x, y);
        let shift = self.e0 + self.e1;
        let inv = 1.0 / (self.e1 - self.e0);
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = (*yi * 2.0 - xi * shift) * inv;
        }
    }
}

/// `c_n` for `n = 0..=order`.
pub fn filter_coefficients(sigma: f64, order: usize) -> Vec<f64> {
    let theta = sigma.acos();
    (0..=order)
        .map(|n| {
            let weight = if n == 0 { 1.0 } else { 2.0 };
            weight * (n as f64 * theta).cos()
        })
        .collect()
}

fn chebyshev_sum(coeffs: &[f64], x: f64) -> f64 {
    let mut prev = 1.0;
    let mut cur = x;
    let mut acc = coeffs[0];
    if coeffs.len() > 1 {
        acc += coeffs[1] * cur;
    }
    for &c in &coeffs[2.min(coeffs.len())..] {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
        acc += c * cur;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevFilter {
    sigma: f64,
    coeffs: Vec<f64>,
    norm: f64,
}

impl ChebyshevFilter {
    pub fn new(sigma: f64, order: usize) -> Result<Self> {
        if !(sigma.abs() < 1.0) {
            return invalid(format!("filter target must lie in (-1, 1), got {sigma}"));
        }
        if order < 1 {
            return invalid("filter order must be at least 1");
        }
        let coeffs = filter_coefficients(sigma, order);
        let norm = chebyshev_sum(&coeffs, sigma);
        Ok(Self { sigma, coeffs, norm })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The normalization `D = Σ c_n T_n(σ)`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Scalar filter value `P(x)` for `x ∈ [-1, 1]`.
    pub fn value(&self, x: f64) -> f64 {
        chebyshev_sum(&self.coeffs, x) / self.norm
    }

    /// `P(H_R) v` by the three-term recurrence; exactly `order` matvecs.
    pub fn apply<O: Operator, S: Scalar>(&self, op: &O, v: &[S]) -> Vec<S> {
        let n = v.len();
        let mut prev = v.to_vec();
        let mut cur = vec![S::zero(); n];
        op.apply_into(v, &mut cur);
        let mut acc: Vec<S> = v.iter().map(|&x| x * self.coeffs[0]).collect();
        for (a, &t) in acc.iter_mut().zip(&cur) {
            *a += t * self.coeffs[1];
        }
        let mut next = vec![S::zero(); n];
        for &c in &self.coeffs[2..] {
            op.apply_into(&cur, &mut next);
            for ((nx, &p), a) in next.iter_mut().zip(&prev).zip(acc.iter_mut()) {
                *nx = *nx * 2.0 - p;
                *a += *nx * c;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        let inv = 1.0 / self.norm;
        acc.iter_mut().for_each(|a| *a = *a * inv);
        acc
    }

    /// Distance from `σ` at which `P` first falls below `level` moving in
    /// direction `dir` (±1).
    fn crossing(&self, level: f64, dir: f64) -> Result<f64> {
        let sigma = self.sigma;
        let step = (1.0 - sigma * sigma).sqrt() / (8.0 * self.order() as f64);
        let mut inside = sigma;
        loop {
            let x = inside + dir * step;
            if x.abs() >= 1.0 {
                let edge = dir;
                if self.value(edge) < level {
                    return self.bisect(level, inside, edge);
                }
                return Err(Error::Numeric(format!(
                    "filter of order {} around {sigma} stays above {level} up to the spectrum edge",
                    self.order()
                )));
            }
            if self.value(x) < level {
                return self.bisect(level, inside, x);
            }
            inside = x;
        }
    }

    fn bisect(&self, level: f64, mut inside: f64, mut outside: f64) -> Result<f64> {
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if self.value(mid) >= level {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok((0.5 * (inside + outside) - self.sigma).abs())
    }

    /// Half-width of the pass band `{x : P(x) ≥ level}` around `σ`, averaged
    /// over both sides.
    pub fn pass_band(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return invalid(format!("threshold must lie in (0, 1), got {level}"));
        }
        Ok(0.5 * (self.crossing(level, 1.0)? + self.crossing(level, -1.0)?))
    }
}

/// `P(H_R) v` for a one-off application.
pub fn chebyshev_filter_apply<O: Operator, S: Scalar>(op: &O, v: &[S], sigma: f64, order: usize) -> Result<Vec<S>> {
    if v.len() != op.dim() {
        return invalid("vector length does not match operator");
    }
    Ok(ChebyshevFilter::new(sigma, order)?.apply(op, v))
}

/// Expected number of eigenvalues above `threshold` for a filter of `order`:
/// `2 ε ρ dim` with `ε` the pass-band half-width.
pub fn expected_count(sigma: f64, order: usize, rho: f64, dim: usize, threshold: f64) -> Result<f64> {
    let eps = ChebyshevFilter::new(sigma, order)?.pass_band(threshold)?;
    Ok(2.0 * eps * rho * dim as f64)
}

/// Smallest order in `[MIN_ORDER, MAX_ORDER]` whose expected pass-band count
/// does not exceed `n_ev`, by bisection on the (decreasing) count.
pub fn select_order(sigma: f64, rho: f64, n_ev: usize, dim: usize, threshold: f64) -> Result<usize> {
    if !(rho > 0.0 && rho.is_finite()) {
        return invalid(format!("density must be positive, got {rho}"));
    }
    if n_ev < 2 || n_ev > dim {
        return invalid(format!("need 2 <= n_ev <= dim, got n_ev = {n_ev}, dim = {dim}"));
    }
    let fits = |k: usize| -> Result<bool> { Ok(expected_count(sigma, k, rho, dim, threshold)? <= n_ev as f64) };
    if fits(MIN_ORDER)? {
        return Ok(MIN_ORDER);
    }
    if !fits(MAX_ORDER)? {
        return Err(Error::Numeric(format!(
            "no filter order up to {MAX_ORDER} isolates {n_ev} of {dim} states at density {rho}"
        )));
    }
    let (mut lo, mut hi) = (MIN_ORDER, MAX_ORDER);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
