//! Polynomially filtered block Lanczos for interior eigenvalues.
//!
//! The filter `P = P_σ^K(H_R)` maps eigenvalues near `σ` to the top of its
//! spectrum. Block Lanczos with full reorthogonalization finds the largest
//! eigenpairs of `P`:
//!
//! ```text
//! U_j = P Q_j − Q_{j−1} B_jᵀ,   A_j = Q_jᵀ U_j,
//! R_{j+1} = U_j − Q_j A_j,      Q_{j+1} B_{j+1} = R_{j+1}
//! ```
//!
//! Converged Ritz vectors span an (approximately) invariant subspace of
//! `H_R`; a Rayleigh-Ritz projection of `H_R` onto that span gives the
//! eigenvalues `ε_i = u_iᵀ H_R u_i`, each validated by `‖H_R u − ε u‖`.

use faer::Mat;

use super::chebyshev::{ChebyshevFilter, Rescaled};
use super::SpectralResult;
use crate::dense;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::sparse::Operator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLanczosConfig {
    pub block_size: usize,
    /// `None` allows a Krylov space of up to `3 n_ev` vectors, or the whole
    /// space when it has at most 512 dimensions. The iteration stops as soon
    /// as the window is converged.
    pub max_blocks: Option<usize>,
    /// Ritz residual tolerance of the filtered problem.
    pub filtered_tol: f64,
    /// Residual tolerance `‖H_R u − ε u‖` for reported pairs.
    pub residual_tol: f64,
    /// Blocks between convergence checks.
    pub check_every: usize,
    pub seed: u64,
}

impl Default for BlockLanczosConfig {
    fn default() -> Self {
        Self {
            block_size: 4,
            max_blocks: None,
            filtered_tol: 1e-8,
            residual_tol: 1e-6,
            check_every: 4,
            seed: 0xb10c,
        }
    }
}

const SMALL_SPACE: usize = 512;

impl BlockLanczosConfig {
    /// Block budget for `n_ev` eigenpairs in a space of dimension `dim`.
    pub fn blocks_for(&self, n_ev: usize, dim: usize) -> usize {
        self.max_blocks
            .unwrap_or_else(|| (3 * n_ev).max(dim.min(SMALL_SPACE)).div_ceil(self.block_size))
            .max(1)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Two passes of classical Gram-Schmidt against an orthonormal basis.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, w)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            axpy(w, -c, q);
        }
    }
}

struct Ritz {
    values: Vec<f64>,
    /// Columns are eigenvectors of the projected matrix, descending by value.
    vectors: Mat<f64>,
    residuals: Vec<f64>,
}

/// Eigenpairs of the block tridiagonal `T` (descending) and their Lanczos
/// residual norms `‖B_{m+1} y_last‖`.
fn ritz(a_blocks: &[Mat<f64>], b_blocks: &[Mat<f64>], next_b: &Mat<f64>, s: usize) -> Result<Ritz> {
    let nb = a_blocks.len();
    let n = nb * s;
    let mut t = Mat::<f64>::zeros(n, n);
    for (j, a) in a_blocks.iter().enumerate() {
        for r in 0..s {
            for c in 0..s {
                t[(j * s + r, j * s + c)] = 0.5 * (a[(r, c)] + a[(c, r)]);
            }
        }
    }
    // b_blocks[j] couples block j+1 (rows) to block j (cols).
    for (j, b) in b_blocks.iter().enumerate() {
        for r in 0..s {
            for c in 0..s {
                t[((j + 1) * s + r, j * s + c)] = b[(r, c)];
                t[(j * s + c, (j + 1) * s + r)] = b[(r, c)];
            }
        }
    }
    let eig = dense::eigh_mat(&t)?;
    let order: Vec<usize> = (0..n).rev().collect();
    let values: Vec<f64> = order.iter().map(|&i| eig.values[i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| eig.vectors[(r, order[c])]);
    let residuals = (0..n)
        .map(|c| {
            let mut acc = 0.0;
            for r in 0..s {
                let mut v = 0.0;
                for k in 0..s {
                    v += next_b[(r, k)] * vectors[((nb - 1) * s + k, c)];
                }
                acc += v * v;
            }
            acc.sqrt()
        })
        .collect();
    Ok(Ritz {
        values,
        vectors,
        residuals,
    })
}

fn max_orthogonality_error(basis: &[Vec<f64>], new: usize) -> f64 {
    let n = basis.len();
    let mut worst = 0.0f64;
    for i in n - new..n {
        for j in 0..=i {
            let d = dot(&basis[i], &basis[j]) - if i == j { 1.0 } else { 0.0 };
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Finds the `n_ev` eigenvalues of the rescaled operator nearest `sigma`,
/// returned in original units.
pub fn block_lanczos_polfed<O: Operator>(
    h_r: &Rescaled<'_, O>,
    sigma: f64,
    order: usize,
    n_ev: usize,
    cfg: BlockLanczosConfig,
) -> Result<SpectralResult> {
    let dim = h_r.dim();
    let s = cfg.block_size;
    if s == 0 {
        return invalid("block size must be positive");
    }
    if n_ev < 2 || n_ev > dim {
        return invalid(format!("need 2 <= n_ev <= dim, got n_ev = {n_ev}, dim = {dim}"));
    }
    let filter = ChebyshevFilter::new(sigma, order)?;
    let max_blocks = cfg.blocks_for(n_ev, dim).min(dim.div_ceil(s));
    if max_blocks * s < n_ev {
        return invalid(format!(
            "Krylov space of {max_blocks} blocks of {s} cannot hold {n_ev} eigenpairs"
        ));
    }

    let mut stream = rng::stream(cfg.seed);
    let mut soft_restarts = 0usize;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_blocks * s);

    // Orthonormalizes `cols` against `basis` and each other; returns the
    // triangular factor. Dependent columns become fresh random vectors.
    let qr = |mut cols: Vec<Vec<f64>>,
                  basis: &[Vec<f64>],
                  stream: &mut rand_chacha::ChaCha8Rng,
                  restarts: &mut usize|
     -> (Vec<Vec<f64>>, Mat<f64>) {
        let mut b = Mat::<f64>::zeros(s, s);
        let mut done: Vec<Vec<f64>> = Vec::with_capacity(s);
        for (c, mut w) in cols.drain(..).enumerate() {
            orthogonalize(&mut w, basis);
            let before = dot(&w, &w).sqrt();
            for _ in 0..2 {
                for (k, q) in done.iter().enumerate() {
                    let r = dot(q, &w);
                    b[(k, c)] += r;
                    axpy(&mut w, -r, q);
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > 1e-10 * before.max(1e-300) && norm > 1e-200 {
                b[(c, c)] = norm;
                w.iter_mut().for_each(|x| *x /= norm);
            } else if basis.len() + done.len() >= dim {
                // No room left: the Krylov space already spans everything.
                b[(c, c)] = norm;
            } else {
                *restarts += 1;
                loop {
                    let mut fresh: Vec<f64> = (0..dim).map(|_| rng::symmetric_f64(stream, 1.0)).collect();
                    orthogonalize(&mut fresh, basis);
                    orthogonalize(&mut fresh, &done);
                    let n = dot(&fresh, &fresh).sqrt();
                    if n > 1e-8 {
                        fresh.iter_mut().for_each(|x| *x /= n);
                        w = fresh;
                        break;
                    }
                }
            }
            done.push(w);
        }
        (done, b)
    };

    let start: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..dim).map(|_| rng::symmetric_f64(&mut stream, 1.0)).collect())
        .collect();
    let (mut q_cur, _) = qr(start, &[], &mut stream, &mut soft_restarts);
    let mut q_prev: Vec<Vec<f64>> = Vec::new();
    let mut b_cur = Mat::<f64>::zeros(s, s);
    let mut a_blocks: Vec<Mat<f64>> = Vec::new();
    let mut b_blocks: Vec<Mat<f64>> = Vec::new();
    let mut matvecs = 0usize;
    let mut result_pairs: Vec<(f64, f64)> = Vec::new();
    let mut blocks_used = 0;

    for j in 0..max_blocks {
        basis.extend(q_cur.iter().cloned());
        debug_assert!(
            max_orthogonality_error(&basis, s) <= 1e-10,
            "block Lanczos lost orthogonality"
        );
        let mut u: Vec<Vec<f64>> = q_cur.iter().map(|q| filter.apply(h_r, q)).collect();
        matvecs += s * order;
        // U -= Q_{j-1} B_jᵀ
        for (c, uc) in u.iter_mut().enumerate() {
            for (k, qp) in q_prev.iter().enumerate() {
                axpy(uc, -b_cur[(c, k)], qp);
            }
        }
        let mut a = Mat::<f64>::zeros(s, s);
        for r in 0..s {
            for c in 0..s {
                a[(r, c)] = dot(&q_cur[r], &u[c]);
            }
        }
        for (c, uc) in u.iter_mut().enumerate() {
            for (r, q) in q_cur.iter().enumerate() {
                axpy(uc, -a[(r, c)], q);
            }
        }
        a_blocks.push(a);
        let (q_next, b_next) = qr(u, &basis, &mut stream, &mut soft_restarts);

        let blocks = j + 1;
        let last = blocks == max_blocks || basis.len() + s > dim;
        if (blocks * s >= n_ev && blocks % cfg.check_every == 0) || last {
            let r = ritz(&a_blocks, &b_blocks, &b_next, s)?;
            let converged = r.residuals.iter().take_while(|&&x| x <= cfg.filtered_tol).count();
            log::debug!("block {blocks}: {converged} converged Ritz pairs");
            if converged >= n_ev || last {
                let pairs = extract(h_r, &basis, &r, converged, sigma, n_ev, cfg.residual_tol)?;
                matvecs += converged;
                let certified = pairs.len() >= n_ev && {
                    // Every eigenvalue closer to sigma than the farthest
                    // reported one must have a filter value above the
                    // smallest converged Ritz value, so none can be missing.
                    let reach = pairs.iter().map(|p| (p.0 - sigma).abs()).fold(0.0, f64::max);
                    let floor = filter.value((sigma - reach).max(-1.0)).min(filter.value((sigma + reach).min(1.0)));
                    converged == dim || floor > r.values[converged - 1]
                };
                if certified || last {
                    if !certified && pairs.len() >= n_ev {
                        log::warn!("interior window not certified complete after {blocks} blocks");
                    }
                    result_pairs = pairs;
                    blocks_used = blocks;
                    break;
                }
            }
        }
        b_blocks.push(b_next.clone());
        q_prev = std::mem::replace(&mut q_cur, q_next);
        b_cur = b_next;
    }

    let (e0, e1) = h_r.bounds();
    let result = SpectralResult {
        eigenvalues: result_pairs.iter().map(|p| h_r.to_original(p.0)).collect(),
        residuals: result_pairs.iter().map(|p| p.1 * h_r.half_width()).collect(),
        rescaled: result_pairs.iter().map(|p| p.0).collect(),
        extremal: (e0, e1),
        dos_estimate: None,
        order_used: order,
        sigma,
        blocks_used,
        matvecs,
        soft_restarts,
    };
    if result.eigenvalues.len() < n_ev {
        return Err(Error::PartialResult {
            converged: Box::new(result),
            requested: n_ev,
        });
    }
    Ok(result)
}

/// Forms the leading `converged` Ritz vectors, projects `H_R` onto their span
/// and returns up to `n_ev` validated `(ε, residual)` pairs nearest `sigma`,
/// ascending.
fn extract<O: Operator>(
    h_r: &Rescaled<'_, O>,
    basis: &[Vec<f64>],
    ritz: &Ritz,
    converged: usize,
    sigma: f64,
    n_ev: usize,
    residual_tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let dim = h_r.dim();
    let mut vectors: Vec<Vec<f64>> = (0..converged)
        .map(|c| {
            let mut v = vec![0.0; dim];
            for (k, q) in basis.iter().enumerate() {
                axpy(&mut v, ritz.vectors[(k, c)], q);
            }
            v
        })
        .collect();
    for i in 0..vectors.len() {
        let (head, tail) = vectors.split_at_mut(i);
        orthogonalize(&mut tail[0], head);
        let n = dot(&tail[0], &tail[0]).sqrt();
        tail[0].iter_mut().for_each(|x| *x /= n);
    }
    let hv: Vec<Vec<f64>> = vectors.iter().map(|v| h_r.apply(v)).collect::<Result<_>>()?;
    let c = vectors.len();
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    if c > 0 {
        let proj = Mat::from_fn(c, c, |i, k| 0.5 * (dot(&vectors[i], &hv[k]) + dot(&vectors[k], &hv[i])));
        let eig = dense::eigh_mat(&proj)?;
        for (l, &eps) in eig.values.iter().enumerate() {
            let mut res = vec![0.0; dim];
            for k in 0..c {
                let z = eig.vectors[(k, l)];
                axpy(&mut res, z, &hv[k]);
                axpy(&mut res, -eps * z, &vectors[k]);
            }
            let r = dot(&res, &res).sqrt();
            if r <= residual_tol {
                pairs.push((eps, r));
            }
        }
    }
    pairs.sort_by(|x, y| (x.0 - sigma).abs().total_cmp(&(y.0 - sigma).abs()));
    pairs.truncate(n_ev);
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(pairs)
}
