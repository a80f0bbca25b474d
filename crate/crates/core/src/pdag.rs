//! Markov-equivalence machinery: essential graphs, unshielded colliders,
//! covered edges and the structural Hamming distance.

use crate::dag::{bit, bits, Dag, NodeId};
use crate::error::{Error, Result};

/// Partially directed graph. `directed[u]` holds the heads of directed edges
/// leaving `u`; `undirected[u]` is a symmetric neighbour mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pdag {
    directed: Vec<u64>,
    undirected: Vec<u64>,
}

/// Edge status of an unordered pair `(a, b)` with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairStatus {
    Absent,
    Undirected,
    /// `a -> b`
    Forward,
    /// `a <- b`
    Backward,
}

impl Pdag {
    pub fn empty(n: usize) -> Self {
        Pdag {
            directed: vec![0; n],
            undirected: vec![0; n],
        }
    }

    pub fn from_edges(
        n: usize,
        directed: &[(NodeId, NodeId)],
        undirected: &[(NodeId, NodeId)],
    ) -> Result<Self> {
        let mut p = Pdag::empty(n);
        let check = |v: NodeId| {
            if v >= n {
                Err(Error::NodeOutOfRange { node: v, n })
            } else {
                Ok(())
            }
        };
        for &(u, v) in directed.iter().chain(undirected) {
            check(u)?;
            check(v)?;
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if p.status(u, v) != PairStatus::Absent {
                return Err(Error::EdgeExists(u, v));
            }
            if directed.contains(&(u, v)) {
                p.directed[u] |= bit(v);
            } else {
                p.undirected[u] |= bit(v);
                p.undirected[v] |= bit(u);
            }
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.directed.len()
    }

    pub fn has_directed(&self, u: NodeId, v: NodeId) -> bool {
        self.directed[u] & bit(v) != 0
    }

    pub fn has_undirected(&self, u: NodeId, v: NodeId) -> bool {
        self.undirected[u] & bit(v) != 0
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n()).flat_map(move |u| bits(self.directed[u]).map(move |v| (u, v)))
    }

    /// Undirected edges as `(a, b)` with `a < b`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n()).flat_map(move |u| {
            bits(self.undirected[u])
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Status of the pair read from the smaller index.
    pub fn status(&self, u: NodeId, v: NodeId) -> PairStatus {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        if self.undirected[a] & bit(b) != 0 {
            PairStatus::Undirected
        } else if self.directed[a] & bit(b) != 0 {
            PairStatus::Forward
        } else if self.directed[b] & bit(a) != 0 {
            PairStatus::Backward
        } else {
            PairStatus::Absent
        }
    }

    fn adjacent(&self, u: NodeId, v: NodeId) -> bool {
        (self.directed[u] | self.undirected[u]) & bit(v) != 0 || self.directed[v] & bit(u) != 0
    }

    fn orient(&mut self, u: NodeId, v: NodeId) {
        self.undirected[u] &= !bit(v);
        self.undirected[v] &= !bit(u);
        self.directed[u] |= bit(v);
    }
}

/// Unshielded colliders `(x, y, z)` with `x < z`, `x -> y <- z`, `x` and `z`
/// non-adjacent.
pub fn unshielded_colliders(dag: &Dag) -> Vec<(NodeId, NodeId, NodeId)> {
    let mut out = Vec::new();
    for y in 0..dag.n() {
        let pa = dag.parents_mask(y);
        for x in bits(pa) {
            for z in bits(pa & !((bit(x) << 1) - 1)) {
                if !dag.adjacent(x, z) {
                    out.push((x, y, z));
                }
            }
        }
    }
    out
}

/// Same skeleton and same unshielded colliders.
pub fn is_markov_equivalent(g1: &Dag, g2: &Dag) -> Result<bool> {
    if g1.n() != g2.n() {
        return Err(Error::SizeMismatch(g1.n(), g2.n()));
    }
    Ok(g1.skeleton() == g2.skeleton() && unshielded_colliders(g1) == unshielded_colliders(g2))
}

/// Essential graph of `dag`: unshielded colliders oriented, then Meek's
/// rules 1-3 applied to a fixed point.
pub fn to_pdag(dag: &Dag) -> Pdag {
    let n = dag.n();
    let mut p = Pdag::empty(n);
    for (u, v) in dag.edges() {
        p.undirected[u] |= bit(v);
        p.undirected[v] |= bit(u);
    }
    for (x, y, z) in unshielded_colliders(dag) {
        p.orient(x, y);
        p.orient(z, y);
    }
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in bits(p.undirected[a]) {
                if p.has_undirected(a, b) && meek_orients(&p, a, b) {
                    p.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    p
}

/// Whether Meek rule 1, 2 or 3 forces the undirected edge `a - b` to `a -> b`.
fn meek_orients(p: &Pdag, a: NodeId, b: NodeId) -> bool {
    let n = p.n();
    let into_a = (0..n).filter(|&c| p.has_directed(c, a));
    // R1: c -> a - b, c and b non-adjacent
    for c in into_a {
        if c != b && !p.adjacent(c, b) {
            return true;
        }
    }
    // R2: a -> c -> b
    if bits(p.directed[a]).any(|c| p.has_directed(c, b)) {
        return true;
    }
    // R3: a - c1 -> b, a - c2 -> b, c1 and c2 non-adjacent
    let mids: Vec<NodeId> = bits(p.undirected[a])
        .filter(|&c| p.has_directed(c, b))
        .collect();
    for (i, &c1) in mids.iter().enumerate() {
        for &c2 in &mids[i + 1..] {
            if !p.adjacent(c1, c2) {
                return true;
            }
        }
    }
    false
}

/// Number of unordered pairs whose status (absent, undirected, forward,
/// backward) differs.
pub fn shd(p1: &Pdag, p2: &Pdag) -> Result<usize> {
    if p1.n() != p2.n() {
        return Err(Error::SizeMismatch(p1.n(), p2.n()));
    }
    let n = p1.n();
    let mut d = 0;
    for a in 0..n {
        for b in (a + 1)..n {
            if p1.status(a, b) != p2.status(a, b) {
                d += 1;
            }
        }
    }
    Ok(d)
}

/// Edges `x -> y` with `Pa(y) = Pa(x) + {x}`.
pub fn covered_edges(dag: &Dag) -> Vec<(NodeId, NodeId)> {
    dag.edges()
        .filter(|&(x, y)| dag.parents_mask(y) == dag.parents_mask(x) | bit(x))
        .collect()
}
