//! Fixed-excitation sectors, disorder sampling and assembly of the sector
//! Hamiltonian
//!
//! ```text
//! H = Σ_<ij> (J_ij / 2)(σˣ_i σˣ_j + σʸ_i σʸ_j) + Σ_i h_i n_i
//! ```
//!
//! In the occupation basis the XY term hops one excitation across a bond with
//! amplitude `J_ij` and the potential term is diagonal. All energies are
//! linear frequencies in MHz.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::CouplingGraph;
use crate::rng;
use crate::sparse::{Operator, Scalar, SymmetricCsr};

/// Largest supported number of sites.
pub const MAX_SITES: usize = 30;

const fn binomial_table() -> [[u64; MAX_SITES + 2]; MAX_SITES + 2] {
    let mut t = [[0u64; MAX_SITES + 2]; MAX_SITES + 2];
    let mut n = 0;
    while n < MAX_SITES + 2 {
        t[n][0] = 1;
        let mut k = 1;
        while k <= n {
            t[n][k] = t[n - 1][k - 1] + t[n - 1][k];
            k += 1;
        }
        n += 1;
    }
    t
}

static BINOMIAL: [[u64; MAX_SITES + 2]; MAX_SITES + 2] = binomial_table();

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n || n > MAX_SITES + 1 {
        0
    } else {
        BINOMIAL[n][k]
    }
}

/// All `n_sites`-bit configurations with exactly `n_excitations` set bits,
/// ascending. Bit `i` is the occupation of the `i`-th site of the graph.
///
/// Ranking uses the combinatorial number system: with set bits at positions
/// `p_1 < p_2 < ... < p_n`, `rank = Σ_k C(p_k, k)`, which coincides with the
/// position in ascending integer order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    n_sites: usize,
    n_excitations: usize,
    states: Vec<u32>,
}

impl SectorBasis {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_excitations(&self) -> usize {
        self.n_excitations
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, k: usize) -> u32 {
        self.states[k]
    }

    /// Position of `state`, or `None` if it is not in the sector.
    pub fn rank(&self, state: u32) -> Option<usize> {
        if state.count_ones() as usize != self.n_excitations || (self.n_sites < 32 && state >> self.n_sites != 0) {
            return None;
        }
        Some(rank_unchecked(state))
    }
}

#[inline]
fn rank_unchecked(mut state: u32) -> usize {
    let mut r = 0u64;
    let mut k = 1;
    while state != 0 {
        let p = state.trailing_zeros() as usize;
        r += BINOMIAL[p][k];
        k += 1;
        state &= state - 1;
    }
    r as usize
}

pub fn enumerate_sector(n_sites: usize, n_excitations: usize) -> Result<SectorBasis> {
    if n_sites > MAX_SITES {
        return Err(Error::Capacity {
            sites: n_sites,
            max: MAX_SITES,
        });
    }
    if n_excitations > n_sites {
        return invalid(format!("{n_excitations} excitations do not fit on {n_sites} sites"));
    }
    let dim = binomial(n_sites, n_excitations) as usize;
    let mut states = Vec::with_capacity(dim);
    if n_excitations == 0 {
        states.push(0);
    } else {
        let mut s: u32 = (1u32 << n_excitations) - 1;
        for _ in 0..dim {
            states.push(s);
            // Gosper: next integer with the same popcount.
            let c = s & s.wrapping_neg();
            let r = s.wrapping_add(c);
            s = (((r ^ s) >> 2) / c) | r;
        }
    }
    Ok(SectorBasis {
        n_sites,
        n_excitations,
        states,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    /// Disorder strength `W / 2π`, MHz.
    pub w: f64,
    /// On-site potentials `h_i / 2π`, MHz.
    pub potentials: Vec<f64>,
    pub seed: u64,
}

/// `len` independent uniform potentials in `[-w, w]`.
///
/// Draw `i` is `w * (2u - 1)` where `u` is the `i`-th [`rng::unit_f64`] of a
/// ChaCha8 stream seeded with `seed`, so the same `(len, w, seed)` reproduces
/// the potentials bit for bit on any platform. Changing `w` rescales the same
/// underlying draws.
pub fn sample_disorder(len: usize, w: f64, seed: u64) -> Result<DisorderRealization> {
    if !(w >= 0.0 && w.is_finite()) {
        return invalid(format!("disorder strength must be finite and non-negative, got {w}"));
    }
    let potentials = if w == 0.0 {
        vec![0.0; len]
    } else {
        let mut stream = rng::stream(seed);
        (0..len).map(|_| rng::symmetric_f64(&mut stream, w)).collect()
    };
    Ok(DisorderRealization { w, potentials, seed })
}

/// Sector-restricted Hamiltonian with the graph and disorder it was built from.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    basis: SectorBasis,
    matrix: SymmetricCsr,
    graph: CouplingGraph,
    realization: DisorderRealization,
}

impl SparseHamiltonian {
    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &SymmetricCsr {
        &self.matrix
    }

    pub fn graph(&self) -> &CouplingGraph {
        &self.graph
    }

    pub fn realization(&self) -> &DisorderRealization {
        &self.realization
    }

    pub fn n_excitations(&self) -> usize {
        self.basis.n_excitations
    }

    /// Checked `H v` on a complex state.
    pub fn apply_state(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.matrix.apply(v)
    }

    /// Row-major dense copy, for small systems and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        self.matrix.to_dense()
    }
}

impl Operator for SparseHamiltonian {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn apply_into<S: Scalar>(&self, x: &[S], y: &mut [S]) {
        self.matrix.apply_into(x, y)
    }
}

pub fn build_hamiltonian(
    graph: &CouplingGraph,
    realization: &DisorderRealization,
    n_excitations: usize,
) -> Result<SparseHamiltonian> {
    let n_sites = graph.len();
    if realization.potentials.len() != n_sites {
        return invalid(format!(
            "realization has {} potentials for {} sites",
            realization.potentials.len(),
            n_sites
        ));
    }
    let basis = enumerate_sector(n_sites, n_excitations)?;

    // Hop masks and amplitudes, one per bond with nonzero strength.
    let hops: Vec<(u32, u32, u32, f64)> = graph
        .bonds
        .iter()
        .filter(|b| b.strength != 0.0)
        .map(|b| {
            let i = graph.position(b.a.index).expect("validated graph") as u32;
            let j = graph.position(b.b.index).expect("validated graph") as u32;
            (1u32 << i, 1u32 << j, (1u32 << i) | (1u32 << j), b.strength)
        })
        .collect();
    let active = |s: u32, &(mi, mj, _, _): &(u32, u32, u32, f64)| ((s & mi) != 0) != ((s & mj) != 0);

    let dim = basis.dim();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    row_ptr.push(0usize);
    for &s in &basis.states {
        let count = hops.iter().filter(|h| active(s, h)).count();
        row_ptr.push(row_ptr.last().unwrap() + count);
    }
    let nnz = *row_ptr.last().unwrap();
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    let mut diag = Vec::with_capacity(dim);
    let mut row: Vec<(u32, f64)> = Vec::with_capacity(hops.len());
    for &s in &basis.states {
        let mut d = 0.0;
        let mut bits = s;
        while bits != 0 {
            d += realization.potentials[bits.trailing_zeros() as usize];
            bits &= bits - 1;
        }
        diag.push(d);

        row.clear();
        for h in hops.iter().filter(|h| active(s, h)) {
            row.push((rank_unchecked(s ^ h.2) as u32, h.3));
        }
        row.sort_unstable_by_key(|e| e.0);
        for &(c, v) in &row {
            cols.push(c);
            vals.push(v);
        }
    }

    Ok(SparseHamiltonian {
        basis,
        matrix: SymmetricCsr {
            diag,
            row_ptr,
            cols,
            vals,
        },
        graph: graph.clone(),
        realization: realization.clone(),
    })
}
