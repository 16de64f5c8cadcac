//! Lattice geometries and coupling graphs.
//!
//! Sites are indexed row-major: site `(row, col)` of an `rows x cols` array has
//! index `row * cols + col`. Bond strengths are linear frequencies in MHz
//! (`J / 2π`).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Default mean nearest-neighbour coupling, MHz.
pub const DEFAULT_J_NN: f64 = 2.9;
/// Default mean diagonal (next-nearest) coupling, MHz.
pub const DEFAULT_J_NNN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteId {
    pub index: usize,
    pub row: i32,
    pub col: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondKind {
    #[serde(rename = "NN")]
    Nearest,
    #[serde(rename = "NNN")]
    NextNearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub a: SiteId,
    pub b: SiteId,
    /// MHz.
    pub strength: f64,
    pub kind: BondKind,
}

impl Bond {
    fn key(&self) -> (usize, usize) {
        (self.a.index.min(self.b.index), self.a.index.max(self.b.index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    Chain,
    Ladder,
    Rectangle,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingGraph {
    pub sites: Vec<SiteId>,
    pub bonds: Vec<Bond>,
    pub geometry: Geometry,
}

impl CouplingGraph {
    /// Validates and assembles a graph from explicit sites and bonds.
    ///
    /// Duplicate bonds, self bonds, non-finite strengths and dangling endpoints
    /// are errors; a disconnected graph only logs a warning.
    pub fn new(sites: Vec<SiteId>, bonds: Vec<Bond>, geometry: Geometry) -> Result<Self> {
        let mut indices = HashSet::new();
        let mut coords = HashSet::new();
        for s in &sites {
            if !indices.insert(s.index) {
                return invalid(format!("duplicate site index {}", s.index));
            }
            if !coords.insert((s.row, s.col)) {
                return invalid(format!("duplicate site coordinate ({}, {})", s.row, s.col));
            }
        }
        let mut seen = HashSet::new();
        for b in &bonds {
            if b.a.index == b.b.index {
                return invalid(format!("self bond on site {}", b.a.index));
            }
            if !b.strength.is_finite() {
                return invalid(format!("non-finite strength on bond {:?}", b.key()));
            }
            for end in [b.a, b.b] {
                if !sites.contains(&end) {
                    return invalid(format!("bond endpoint {:?} is not a site", end));
                }
            }
            if !seen.insert(b.key()) {
                return invalid(format!("duplicate bond {:?}", b.key()));
            }
        }
        let graph = Self {
            sites,
            bonds,
            geometry,
        };
        if !graph.is_connected() {
            log::warn!("coupling graph with {} sites is not connected", graph.len());
        }
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn count(&self, kind: BondKind) -> usize {
        self.bonds.iter().filter(|b| b.kind == kind).count()
    }

    /// Position of a site with the given linear index in `sites`.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.sites.iter().position(|s| s.index == index)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.sites.len();
        if n <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for b in &self.bonds {
            if let (Some(i), Some(j)) = (self.position(b.a.index), self.position(b.b.index)) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|x| x)
    }

    /// Adds a seeded uniform perturbation in `[-delta, delta)` to every bond strength.
    pub fn with_spread(mut self, delta: f64, seed: u64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return invalid("spread must be finite and non-negative");
        }
        let mut stream = rng::stream(seed);
        for b in &mut self.bonds {
            b.strength += rng::symmetric_f64(&mut stream, delta);
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<graph>".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(g.sites, g.bonds, g.geometry)
    }
}

/// Rectangle construction with independent control over the two diagonal
/// orientations and optional per-bond spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleSpec {
    pub rows: usize,
    pub cols: usize,
    pub j_nn: f64,
    /// Diagonal `(r, c) - (r + 1, c + 1)`.
    pub j_nnn: f64,
    /// Anti-diagonal `(r, c + 1) - (r + 1, c)`; `None` uses `j_nnn`.
    #[serde(default)]
    pub j_nnn_anti: Option<f64>,
    /// Half-width of the uniform per-bond perturbation, MHz.
    #[serde(default)]
    pub spread: f64,
    #[serde(default)]
    pub spread_seed: u64,
}

impl RectangleSpec {
    pub fn new(rows: usize, cols: usize, j_nn: f64, j_nnn: f64) -> Self {
        Self {
            rows,
            cols,
            j_nn,
            j_nnn,
            j_nnn_anti: None,
            spread: 0.0,
            spread_seed: 0,
        }
    }

    pub fn build(&self) -> Result<CouplingGraph> {
        let (rows, cols) = (self.rows, self.cols);
        if rows == 0 || cols == 0 {
            return invalid(format!("dimensions must be positive, got {rows}x{cols}"));
        }
        if rows * cols < 2 {
            return invalid("a lattice needs at least two sites");
        }
        let anti = self.j_nnn_anti.unwrap_or(self.j_nnn);
        for (name, v) in [("j_nn", self.j_nn), ("j_nnn", self.j_nnn), ("j_nnn_anti", anti)] {
            if !v.is_finite() {
                return invalid(format!("{name} must be finite"));
            }
        }
        let site = |r: usize, c: usize| SiteId {
            index: r * cols + c,
            row: r as i32,
            col: c as i32,
        };
        let sites: Vec<SiteId> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| site(r, c))
            .collect();

        let mut bonds = Vec::new();
        let mut push = |a: SiteId, b: SiteId, strength: f64, kind: BondKind| {
            bonds.push(Bond {
                a,
                b,
                strength,
                kind,
            })
        };
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    push(site(r, c), site(r, c + 1), self.j_nn, BondKind::Nearest);
                }
                if r + 1 < rows {
                    push(site(r, c), site(r + 1, c), self.j_nn, BondKind::Nearest);
                }
            }
        }
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols.saturating_sub(1) {
                push(site(r, c), site(r + 1, c + 1), self.j_nnn, BondKind::NextNearest);
                push(site(r, c + 1), site(r + 1, c), anti, BondKind::NextNearest);
            }
        }

        let geometry = match rows.min(cols) {
            1 => Geometry::Chain,
            2 => Geometry::Ladder,
            _ => Geometry::Rectangle,
        };
        let graph = CouplingGraph::new(sites, bonds, geometry)?;
        if self.spread > 0.0 {
            graph.with_spread(self.spread, self.spread_seed)
        } else {
            Ok(graph)
        }
    }
}

/// `rows x cols` array with every NN bond at `j_nn` and both diagonals of each
/// plaquette at `j_nnn`.
pub fn build_rectangle(rows: usize, cols: usize, j_nn: f64, j_nnn: f64) -> Result<CouplingGraph> {
    RectangleSpec::new(rows, cols, j_nn, j_nnn).build()
}

pub fn build_chain(n: usize, j_nn: f64) -> Result<CouplingGraph> {
    if n < 2 {
        return invalid(format!("a chain needs at least two sites, got {n}"));
    }
    build_rectangle(1, n, j_nn, 0.0)
}

/// Coupler-mediated effective qubit-qubit coupling:
///
/// `g_eff = g12 + (g1c g2c / 2) (1 / (w1 - wc) + 1 / (w2 - wc))`
///
/// All arguments share one frequency unit.
pub fn effective_coupling(g12: f64, g1c: f64, g2c: f64, w1: f64, w2: f64, wc: f64) -> Result<f64> {
    if w1 == wc || w2 == wc {
        return Err(Error::Domain(format!(
            "coupler frequency {wc} is resonant with a qubit ({w1}, {w2})"
        )));
    }
    Ok(g12 + 0.5 * g1c * g2c * (1.0 / (w1 - wc) + 1.0 / (w2 - wc)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_rectangle() {
        let g = build_rectangle(1, 2, 3.0, 0.0).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.count(BondKind::Nearest), 1);
        assert_eq!(g.count(BondKind::NextNearest), 0);
        assert_eq!(g.bonds[0].strength, 3.0);
    }

    #[test]
    fn three_by_seven_counts() {
        let g = build_rectangle(3, 7, 2.9, 1.1).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g.count(BondKind::Nearest), 32);
        assert_eq!(g.count(BondKind::NextNearest), 24);
        assert_eq!(g.geometry, Geometry::Rectangle);
    }

    #[test]
    fn ladder_reference() {
        let g = build_rectangle(2, 7, 2.9, 1.1).unwrap();
        assert_eq!(g.len(), 14);
        assert_eq!(g.geometry, Geometry::Ladder);
    }

    #[test]
    fn chains() {
        assert_eq!(build_chain(2, 3.0).unwrap().bonds.len(), 1);
        let g = build_chain(21, 2.9).unwrap();
        assert_eq!(g.bonds.len(), 20);
        assert_eq!(g.geometry, Geometry::Chain);
        assert_eq!(build_chain(42, 2.9).unwrap().bonds.len(), 41);
        assert!(build_chain(1, 2.9).is_err());
    }

    #[test]
    fn bad_dimensions() {
        assert!(matches!(build_rectangle(0, 3, 1.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(build_rectangle(1, 1, 1.0, 0.0).is_err());
        assert!(build_rectangle(2, 2, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn row_major_indexing() {
        let g = build_rectangle(3, 4, 1.0, 1.0).unwrap();
        for s in &g.sites {
            assert_eq!(s.index, s.row as usize * 4 + s.col as usize);
        }
        for b in &g.bonds {
            let dr = (b.a.row - b.b.row).abs();
            let dc = (b.a.col - b.b.col).abs();
            match b.kind {
                BondKind::Nearest => assert_eq!(dr + dc, 1),
                BondKind::NextNearest => assert_eq!((dr, dc), (1, 1)),
            }
        }
    }

    #[test]
    fn anti_diagonal_override_and_spread() {
        let spec = RectangleSpec {
            j_nnn_anti: Some(0.1),
            ..RectangleSpec::new(3, 3, 2.9, 1.1)
        };
        let g = spec.build().unwrap();
        let anti: Vec<_> = g
            .bonds
            .iter()
            .filter(|b| b.kind == BondKind::NextNearest && b.a.col > b.b.col)
            .collect();
        assert_eq!(anti.len(), 4);
        assert!(anti.iter().all(|b| b.strength == 0.1));

        let spread = RectangleSpec {
            spread: 0.2,
            spread_seed: 5,
            ..RectangleSpec::new(3, 3, 2.9, 1.1)
        };
        let a = spread.build().unwrap();
        let b = spread.build().unwrap();
        assert_eq!(a, b);
        for (x, y) in a.bonds.iter().zip(&g.bonds) {
            if x.kind == BondKind::Nearest {
                assert!((x.strength - y.strength).abs() <= 0.2);
            }
        }
    }

    #[test]
    fn custom_graph_validation() {
        let s = |i: usize| SiteId {
            index: i,
            row: 0,
            col: i as i32,
        };
        let bond = |i, j| Bond {
            a: s(i),
            b: s(j),
            strength: 1.0,
            kind: BondKind::Nearest,
        };
        assert!(CouplingGraph::new(vec![s(0), s(1)], vec![bond(0, 1), bond(1, 0)], Geometry::Custom).is_err());
        assert!(CouplingGraph::new(vec![s(0), s(1)], vec![bond(0, 2)], Geometry::Custom).is_err());
        assert!(CouplingGraph::new(vec![s(0), s(1)], vec![bond(0, 0)], Geometry::Custom).is_err());
        let disconnected = CouplingGraph::new(vec![s(0), s(1), s(2)], vec![bond(0, 1)], Geometry::Custom).unwrap();
        assert!(!disconnected.is_connected());
    }

    #[test]
    fn json_provenance() {
        let g = build_rectangle(2, 3, 2.9, 1.1).unwrap();
        let back = CouplingGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        assert!(g.to_json().contains("\"NNN\""));
    }

    #[test]
    fn effective_coupling_values() {
        assert_eq!(effective_coupling(1.0, 0.0, 0.0, 3520.0, 3520.0, 4500.0).unwrap(), 1.0);
        let v = effective_coupling(0.0, 100.0, 100.0, 3520.0, 3520.0, 4520.0).unwrap();
        assert!((v + 10.0).abs() < 1e-12);
        let v = effective_coupling(5.0, 100.0, 100.0, 3520.0, 3520.0, 4520.0).unwrap();
        assert!((v + 5.0).abs() < 1e-12);
        assert!(matches!(
            effective_coupling(0.0, 1.0, 1.0, 4000.0, 3000.0, 4000.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bond_counts_small_grids() {
        for r in 1..=8usize {
            for c in 1..=8usize {
                if r * c < 2 {
                    continue;
                }
                let g = build_rectangle(r, c, 1.0, 0.5).unwrap();
                assert_eq!(g.count(BondKind::Nearest), r * (c - 1) + c * (r - 1));
                assert_eq!(g.count(BondKind::NextNearest), 2 * (r - 1) * (c - 1));
                assert!(g.is_connected());
            }
        }
    }

    proptest! {
        #[test]
        fn single_row_matches_chain(n in 2usize..40, j in -5.0f64..5.0, x in -5.0f64..5.0) {
            let row = build_rectangle(1, n, j, x).unwrap();
            let chain = build_chain(n, j).unwrap();
            prop_assert_eq!(row.bonds, chain.bonds);
        }

        #[test]
        fn effective_coupling_symmetric(
            g12 in -10.0f64..10.0, g1c in 0.0f64..200.0, g2c in 0.0f64..200.0,
            w1 in 3000.0f64..4000.0, w2 in 3000.0f64..4000.0, wc in 4100.0f64..6000.0,
        ) {
            let a = effective_coupling(g12, g1c, g2c, w1, w2, wc).unwrap();
            let b = effective_coupling(g12, g2c, g1c, w2, w1, wc).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
