//! The sector Hamiltonian against a full-space construction from Kronecker
//! products of single-site Pauli operators.

use delocsim::dense;
use delocsim::hamiltonian::{build_hamiltonian, enumerate_sector, sample_disorder};
use delocsim::lattice::{build_rectangle, CouplingGraph};

type Dense = Vec<Vec<f64>>;

fn kron(a: &Dense, b: &Dense) -> Dense {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![0.0; n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            if a[i][j] == 0.0 {
                continue;
            }
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

/// Tensor product of single-site operators, `ops[i]` acting on site `i`,
/// where site `i` is bit `i` of the basis index (so the last site is the
/// leftmost Kronecker factor).
fn product(ops: &[&Dense]) -> Dense {
    let mut out = vec![vec![1.0]];
    for op in ops.iter().rev() {
        out = kron(&out, op);
    }
    out
}

fn embed(n: usize, placed: &[(usize, &Dense)]) -> Dense {
    let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let ops: Vec<&Dense> = (0..n)
        .map(|s| placed.iter().find(|p| p.0 == s).map_or(&id, |p| p.1))
        .collect();
    product(&ops)
}

fn add_scaled(acc: &mut Dense, m: &Dense, c: f64) {
    for (r, s) in acc.iter_mut().zip(m) {
        for (x, y) in r.iter_mut().zip(s) {
            *x += c * y;
        }
    }
}

/// `Σ_bonds J (σ⁺_a σ⁻_b + σ⁻_a σ⁺_b) + Σ_i h_i σ⁺_i σ⁻_i` on the full space.
fn full_space(graph: &CouplingGraph, h: &[f64]) -> Dense {
    let n = graph.len();
    let raise = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
    let lower = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
    let occ = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
    let dim = 1 << n;
    let mut out = vec![vec![0.0; dim]; dim];
    for (i, &hi) in h.iter().enumerate() {
        add_scaled(&mut out, &embed(n, &[(i, &occ)]), hi);
    }
    for b in &graph.bonds {
        let (a, c) = (graph.position(b.a.index).unwrap(), graph.position(b.b.index).unwrap());
        add_scaled(&mut out, &embed(n, &[(a, &raise), (c, &lower)]), b.strength);
        add_scaled(&mut out, &embed(n, &[(a, &lower), (c, &raise)]), b.strength);
    }
    out
}

fn check(rows: usize, cols: usize, n_exc: usize, spread: f64, seed: u64) {
    let graph = build_rectangle(rows, cols, 2.9, 1.1).unwrap().with_spread(spread, seed).unwrap();
    let disorder = sample_disorder(graph.len(), 30.0, seed).unwrap();
    let h = build_hamiltonian(&graph, &disorder, n_exc).unwrap();
    let full = full_space(&graph, &disorder.potentials);
    let states = enumerate_sector(graph.len(), n_exc).unwrap();
    let dim = states.dim();
    let ours = h.to_dense();
    let mut worst = 0.0f64;
    for (i, &si) in states.states().iter().enumerate() {
        for (j, &sj) in states.states().iter().enumerate() {
            worst = worst.max((ours[i * dim + j] - full[si as usize][sj as usize]).abs());
        }
    }
    assert!(worst < 1e-12, "{rows}x{cols}: entry mismatch {worst:e}");

    // Nothing leaks out of the sector.
    for (a, row) in full.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            if v != 0.0 {
                assert_eq!(a.count_ones(), b.count_ones());
            }
        }
    }

    let projected: Vec<f64> = states
        .states()
        .iter()
        .flat_map(|&si| states.states().iter().map(move |&sj| (si, sj)))
        .map(|(si, sj)| full[si as usize][sj as usize])
        .collect();
    let a = dense::eigvalsh(dim, &ours).unwrap();
    let b = dense::eigvalsh(dim, &projected).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn ladder_matches_pauli_construction() {
    check(2, 4, 4, 0.0, 1);
}

#[test]
fn square_with_spread_couplings() {
    check(3, 3, 4, 0.2, 2);
}

#[test]
fn wider_strip_off_half_filling() {
    check(2, 5, 3, 0.1, 3);
}
