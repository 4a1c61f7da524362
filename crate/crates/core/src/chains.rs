//! Dispersive chains: the connected components of the resonant effective
//! Hamiltonian in the `|m, n⟩` basis.
//!
//! At `g = ω√k` the transition `m+1 → m` keeps the photon shift `Δ = (2m+1)k`,
//! so a chain through `(m_min, n_base)` visits `n_m = n_base + k(m² − m_min²)`,
//! with `m_min = 0` for integer `J` and `1/2` otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coefficients::displacement_element;
use crate::error::{Error, Result};
use crate::hamiltonians::{resonant_photon_shift, ResonanceIndex};
use crate::hilbert::{ladder_element, HalfInteger};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonanceRow {
    pub m: HalfInteger,
    /// `(2m+1)k`, in units of ω.
    pub rate: i64,
}

/// Phase rates `(2m+1)kω` of the `P_m J− P_{m+1}` terms in the `H₃` frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceTable {
    pub j: HalfInteger,
    pub k: u32,
    pub rows: Vec<ResonanceRow>,
}

pub fn resonance_table(j: HalfInteger, k: u32) -> Result<ResonanceTable> {
    ResonanceIndex::new(k)?;
    let rows = j.magnetic_values().map(|m| ResonanceRow { m, rate: resonant_photon_shift(m, k) }).collect();
    Ok(ResonanceTable { j, k, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChainNode {
    pub m: HalfInteger,
    pub n: usize,
}

impl ChainNode {
    pub fn new(m: HalfInteger, n: usize) -> Self {
        ChainNode { m, n }
    }

    fn dot_id(&self) -> String {
        format!("\"{},{}\"", self.m, self.n)
    }
}

/// `lower` has spin `m`, `upper` has `m + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainEdge {
    pub lower: ChainNode,
    pub upper: ChainNode,
    /// `|⟨lower|H_eff|upper⟩|` in units of ω₀ (spin factor only when off resonance).
    pub weight: f64,
}

/// Edge weights (units of ω₀) at or below this are dropped. Laguerre factors
/// have exact roots at some resonant `β² = k`, e.g. `L_2^2(2) = 0`, which
/// evaluate to ~1e-16 instead of zero.
pub const ZERO_WEIGHT: f64 = 1e-12;

/// Which first-order secular coupling the graph describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coupling {
    /// `g = ω√k`
    Resonant(u32),
    /// Away from every resonance: only `m = ∓1/2` of half-integer `J` stay coupled.
    OffResonant,
}

fn resonant_beta(k: u32) -> f64 {
    (k as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainGraph {
    pub j: HalfInteger,
    pub coupling: Coupling,
    pub n_max: usize,
    pub nodes: Vec<ChainNode>,
    pub edges: Vec<ChainEdge>,
    pub components: Vec<Vec<ChainNode>>,
}

/// `(1/2) ⟨m|J−|m+1⟩ |⟨n_lo|D(β)|n_lo+d⟩|`: the magnitude of the secular element
/// `Ω^d_{n_lo}(β) √((n_lo+d)!/n_lo!)` times the spin ladder factor.
fn secular_weight(j: HalfInteger, m: HalfInteger, n_lo: usize, d: usize, beta: f64) -> f64 {
    0.5 * ladder_element(j, m) * displacement_element(n_lo, n_lo + d, beta).abs()
}

/// Neighbour of `(m, n)` at spin `m + 1`, or `None` when it falls outside `0..=n_max`.
fn upper_partner(node: ChainNode, k: u32, n_max: usize) -> Option<ChainNode> {
    let n = node.n as i64 + resonant_photon_shift(node.m, k);
    (0..=n_max as i64).contains(&n).then(|| ChainNode::new(node.m.offset(1), n as usize))
}

impl ChainGraph {
    fn assemble(j: HalfInteger, coupling: Coupling, n_max: usize, nodes: Vec<ChainNode>, edges: Vec<ChainEdge>) -> Self {
        let index: BTreeMap<ChainNode, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for e in &edges {
            let (a, b) = (find(&mut parent, index[&e.lower]), find(&mut parent, index[&e.upper]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<ChainNode>> = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(*node);
        }
        let mut components: Vec<Vec<ChainNode>> = groups.into_values().collect();
        for c in &mut components {
            c.sort();
        }
        components.sort();
        ChainGraph { j, coupling, n_max, nodes, edges, components }
    }

    /// Symmetric adjacency as a set of canonical-index pairs `(lo, hi)`.
    pub fn adjacency(&self) -> BTreeSet<(usize, usize)> {
        let stride = self.n_max + 1;
        let idx = |node: &ChainNode| (node.m.twice() + self.j.twice()) as usize / 2 * stride + node.n;
        self.edges
            .iter()
            .map(|e| {
                let (a, b) = (idx(&e.lower), idx(&e.upper));
                (a.min(b), a.max(b))
            })
            .collect()
    }

    pub fn component_of(&self, node: ChainNode) -> Option<&[ChainNode]> {
        self.components.iter().find(|c| c.binary_search(&node).is_ok()).map(|c| c.as_slice())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph chains {\n  node [shape=circle];\n");
        for node in &self.nodes {
            let _ = writeln!(out, "  {} [label=\"m={}\\nn={}\"];", node.dot_id(), node.m, node.n);
        }
        for e in &self.edges {
            let _ = writeln!(out, "  {} -- {} [label=\"{:.4}\"];", e.lower.dot_id(), e.upper.dot_id(), e.weight);
        }
        out.push_str("}\n");
        out
    }
}

fn m_min(j: HalfInteger) -> HalfInteger {
    if j.is_integer() {
        HalfInteger::ZERO
    } else {
        HalfInteger::HALF
    }
}

/// The single chain through `(m_min, n_base)`.
pub fn build_chain_graph(j: HalfInteger, k: u32, n_base: usize, n_max: usize) -> Result<ChainGraph> {
    ResonanceIndex::new(k)?;
    let base = m_min(j);
    let photon = |m: HalfInteger| -> usize {
        // k(m² − m_min²) = k((2m)² − (2m_min)²)/4, always an integer
        let q = m.twice() * m.twice() - base.twice() * base.twice();
        n_base + (k as i64 * q / 4) as usize
    };
    let top = photon(j);
    if top > n_max {
        return Err(Error::CutoffTooSmall { n_max, required: top });
    }
    let nodes: Vec<ChainNode> = j.magnetic_values().map(|m| ChainNode::new(m, photon(m))).collect();
    let beta = resonant_beta(k);
    let edges = nodes
        .windows(2)
        .filter_map(|w| {
            let d = w[0].n.abs_diff(w[1].n);
            let weight = secular_weight(j, w[0].m, w[0].n.min(w[1].n), d, beta);
            (weight > ZERO_WEIGHT).then_some(ChainEdge { lower: w[0], upper: w[1], weight })
        })
        .collect();
    Ok(ChainGraph::assemble(j, Coupling::Resonant(k), n_max, nodes, edges))
}

/// Every `|m, n⟩` with `n ≤ n_max`, connected by the secular couplings of `coupling`.
pub fn full_chain_graph(j: HalfInteger, coupling: Coupling, n_max: usize) -> Result<ChainGraph> {
    let nodes: Vec<ChainNode> =
        j.magnetic_values().flat_map(|m| (0..=n_max).map(move |n| ChainNode::new(m, n))).collect();
    let mut edges = Vec::new();
    match coupling {
        Coupling::Resonant(k) => {
            ResonanceIndex::new(k)?;
            let beta = resonant_beta(k);
            for &node in nodes.iter().filter(|n| n.m < j) {
                if let Some(up) = upper_partner(node, k, n_max) {
                    let weight = secular_weight(j, node.m, node.n.min(up.n), node.n.abs_diff(up.n), beta);
                    if weight > ZERO_WEIGHT {
                        edges.push(ChainEdge { lower: node, upper: up, weight });
                    }
                }
            }
        }
        Coupling::OffResonant => {
            if !j.is_integer() {
                let lo = HalfInteger::from_twice(-1);
                for n in 0..=n_max {
                    // spin factor only: the Ω_n^0(β) photon factor depends on g
                    let weight = 0.5 * ladder_element(j, lo);
                    edges.push(ChainEdge { lower: ChainNode::new(lo, n), upper: ChainNode::new(HalfInteger::HALF, n), weight });
                }
            }
        }
    }
    Ok(ChainGraph::assemble(j, coupling, n_max, nodes, edges))
}

/// States in no multi-node component.
pub fn decoupled_states(j: HalfInteger, coupling: Coupling, n_max: usize) -> Result<BTreeSet<ChainNode>> {
    let graph = full_chain_graph(j, coupling, n_max)?;
    Ok(graph.components.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect())
}
