use delocsim::dense;
use delocsim::dynamics::*;
use delocsim::hamiltonian::{build_hamiltonian, sample_disorder, SparseHamiltonian};
use delocsim::lattice::{build_chain, build_rectangle, CouplingGraph};
use num_complex::Complex64;

/// `exp(-i 2π·10⁻³ H t) ψ` through a full eigendecomposition.
fn dense_evolve(h: &SparseHamiltonian, psi: &[Complex64], t: f64) -> Vec<Complex64> {
    let dim = h.basis().dim();
    let eig = dense::eigh(dim, &h.to_dense()).unwrap();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for k in 0..dim {
        let overlap: Complex64 = (0..dim).map(|i| psi[i] * eig.vectors[(i, k)]).sum();
        let phase = Complex64::from_polar(1.0, -RAD_PER_MHZ_NS * eig.values[k] * t);
        for i in 0..dim {
            out[i] += eig.vectors[(i, k)] * overlap * phase;
        }
    }
    out
}

fn product_state(h: &SparseHamiltonian, graph: &CouplingGraph, parity: Parity) -> Vec<Complex64> {
    let mask = checkerboard(graph, parity).mask(graph).unwrap();
    let mut psi = vec![Complex64::new(0.0, 0.0); h.basis().dim()];
    psi[h.basis().rank(mask).unwrap()] = Complex64::new(1.0, 0.0);
    psi
}

fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn krylov_matches_dense_exponential() {
    let cases: Vec<(CouplingGraph, f64)> = vec![
        (build_chain(10, 2.9).unwrap(), 0.0),
        (build_rectangle(2, 5, 2.9, 1.1).unwrap(), 50.0),
        (build_rectangle(3, 4, 2.9, 1.1).unwrap(), 100.0),
        (build_rectangle(3, 3, 2.9, 1.1).unwrap(), 50.0),
    ];
    for (k, (graph, w)) in cases.iter().enumerate() {
        let d = sample_disorder(graph.len(), *w, 500 + k as u64).unwrap();
        let n_exc = checkerboard(graph, Parity::Even).len();
        let h = build_hamiltonian(graph, &d, n_exc).unwrap();
        let psi0 = product_state(&h, graph, Parity::Even);
        for &t in &[10.0, 100.0, 1000.0] {
            let got = krylov_step(&h, &psi0, t).unwrap();
            let want = dense_evolve(&h, &psi0, t);
            let err = distance(&got, &want);
            assert!(err < 1e-10, "case {k}, t = {t}: {err:e}");
        }
    }
}

#[test]
fn stepped_propagation_matches_single_shot() {
    let graph = build_rectangle(2, 4, 2.9, 1.1).unwrap();
    let d = sample_disorder(8, 50.0, 9).unwrap();
    let h = build_hamiltonian(&graph, &d, 4).unwrap();
    let psi0 = product_state(&h, &graph, Parity::Odd);
    let mut stepped = psi0.clone();
    let mut prop = KrylovPropagator::new(KrylovConfig::default());
    for _ in 0..20 {
        prop.propagate(&h, &mut stepped, 25.0).unwrap();
    }
    let want = dense_evolve(&h, &psi0, 500.0);
    assert!(distance(&stepped, &want) < 1e-10);
}

#[test]
fn quench_imbalance_matches_dense() {
    let graph = build_rectangle(3, 4, 2.9, 1.1).unwrap();
    let d = sample_disorder(12, 50.0, 77).unwrap();
    let h = build_hamiltonian(&graph, &d, 6).unwrap();
    let pattern = checkerboard(&graph, Parity::Even);
    let times = vec![0.0, 10.0, 100.0, 400.0, 1000.0];
    let trace = run_quench(&h, &pattern, 1000.0, &times).unwrap();
    assert_eq!(trace.imbalance[0], 1.0);

    let psi0 = product_state(&h, &graph, Parity::Even);
    let mask = pattern.mask(&graph).unwrap();
    for (&t, &got) in times.iter().zip(&trace.imbalance) {
        let psi = dense_evolve(&h, &psi0, t);
        let (mut on, mut off) = (0.0, 0.0);
        for (k, &s) in h.basis().states().iter().enumerate() {
            let p = psi[k].norm_sqr();
            on += p * (s & mask).count_ones() as f64;
            off += p * (s & !mask).count_ones() as f64;
        }
        let (n1, n0) = (on / 6.0, off / 6.0);
        let want = (n1 - n0) / (n1 + n0);
        assert!((got - want).abs() < 1e-10, "t = {t}: {got} vs {want}");
    }
}
