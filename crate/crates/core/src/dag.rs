//! Directed acyclic graphs over at most 64 nodes.
//!
//! Parent and child sets are stored as `u64` bit masks, so membership tests are
//! O(1) and neighbourhood iteration walks set bits. Names live at the I/O
//! boundary; inside the crate nodes are dense indices.

use std::fmt;

use crate::error::{Error, Result};

/// Dense node index in `[0, n)`.
pub type NodeId = usize;

/// Largest supported node count.
pub const MAX_NODES: usize = 64;

/// Iterates the indices of the set bits of `mask`, lowest first.
pub fn bits(mut mask: u64) -> impl Iterator<Item = NodeId> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(i)
        }
    })
}

#[inline]
pub(crate) fn bit(i: NodeId) -> u64 {
    1u64 << i
}

/// Mask with the lowest `n` bits set.
#[inline]
pub(crate) fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    parents: Vec<u64>,
    children: Vec<u64>,
}

impl Dag {
    /// The graph on `n` nodes without edges.
    pub fn empty(n: usize) -> Result<Self> {
        if n > MAX_NODES {
            return Err(Error::TooManyNodes(n));
        }
        Ok(Dag {
            parents: vec![0; n],
            children: vec![0; n],
        })
    }

    /// Builds a graph from an edge list, rejecting self-loops, duplicates and cycles.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut dag = Dag::empty(n)?;
        for &(u, v) in edges {
            dag.add_edge(u, v)?;
        }
        Ok(dag)
    }

    /// Builds a graph from per-node parent masks. The caller guarantees acyclicity.
    pub(crate) fn from_parent_masks(parents: Vec<u64>) -> Self {
        let n = parents.len();
        debug_assert!(n <= MAX_NODES);
        let mut children = vec![0u64; n];
        for (v, &p) in parents.iter().enumerate() {
            for u in bits(p) {
                children[u] |= bit(v);
            }
        }
        let dag = Dag { parents, children };
        debug_assert!(dag.is_acyclic());
        dag
    }

    pub fn n(&self) -> usize {
        self.parents.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(|p| p.count_ones() as usize).sum()
    }

    #[inline]
    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.children[u] & bit(v) != 0
    }

    /// True if `u` and `v` are joined by an edge in either direction.
    #[inline]
    pub fn adjacent(&self, u: NodeId, v: NodeId) -> bool {
        (self.children[u] | self.parents[u]) & bit(v) != 0
    }

    #[inline]
    pub fn parents_mask(&self, v: NodeId) -> u64 {
        self.parents[v]
    }

    #[inline]
    pub fn children_mask(&self, u: NodeId) -> u64 {
        self.children[u]
    }

    pub fn parent_masks(&self) -> &[u64] {
        &self.parents
    }

    pub fn parents(&self, v: NodeId) -> impl Iterator<Item = NodeId> {
        bits(self.parents[v])
    }

    pub fn children(&self, u: NodeId) -> impl Iterator<Item = NodeId> {
        bits(self.children[u])
    }

    /// All edges in `(from, to)` lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n()).flat_map(move |u| self.children(u).map(move |v| (u, v)))
    }

    fn check_node(&self, v: NodeId) -> Result<()> {
        if v >= self.n() {
            Err(Error::NodeOutOfRange { node: v, n: self.n() })
        } else {
            Ok(())
        }
    }

    /// Inserts `u -> v`, refusing anything that breaks acyclicity.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        if self.has_edge(u, v) {
            return Err(Error::EdgeExists(u, v));
        }
        if self.reaches(v, u) {
            return Err(Error::Cycle(u, v));
        }
        self.set_edge(u, v);
        Ok(())
    }

    pub fn remove_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        self.check_node(u)?;
        self.check_node(v)?;
        if !self.has_edge(u, v) {
            return Err(Error::MissingEdge(u, v));
        }
        self.clear_edge(u, v);
        Ok(())
    }

    /// Replaces `u -> v` by `v -> u`.
    pub fn reverse_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        self.remove_edge(u, v)?;
        if self.reaches(u, v) {
            self.set_edge(u, v);
            return Err(Error::Cycle(v, u));
        }
        self.set_edge(v, u);
        Ok(())
    }

    #[inline]
    pub(crate) fn set_edge(&mut self, u: NodeId, v: NodeId) {
        self.children[u] |= bit(v);
        self.parents[v] |= bit(u);
    }

    #[inline]
    pub(crate) fn clear_edge(&mut self, u: NodeId, v: NodeId) {
        self.children[u] &= !bit(v);
        self.parents[v] &= !bit(u);
    }

    /// True if a directed path with at least one edge leads from `u` to `v`.
    pub fn reaches(&self, u: NodeId, v: NodeId) -> bool {
        let mut seen = 0u64;
        let mut frontier = self.children[u];
        while frontier != 0 {
            if frontier & bit(v) != 0 {
                return true;
            }
            seen |= frontier;
            let mut next = 0u64;
            for w in bits(frontier) {
                next |= self.children[w];
            }
            frontier = next & !seen;
        }
        false
    }

    /// Kahn order; ties resolved by lowest index.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let n = self.n();
        let mut indeg: Vec<u32> = self.parents.iter().map(|p| p.count_ones()).collect();
        let mut ready: u64 = (0..n).filter(|&v| indeg[v] == 0).fold(0, |m, v| m | bit(v));
        let mut order = Vec::with_capacity(n);
        while ready != 0 {
            let v = ready.trailing_zeros() as usize;
            ready &= !bit(v);
            order.push(v);
            for c in bits(self.children[v]) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready |= bit(c);
                }
            }
        }
        order
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().len() == self.n()
    }

    /// Unordered adjacency as symmetric neighbour masks.
    pub fn skeleton(&self) -> Vec<u64> {
        (0..self.n())
            .map(|v| self.parents[v] | self.children[v])
            .collect()
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self.edges().map(|(u, v)| format!("{u}->{v}")).collect();
        write!(f, "Dag(n={}, [{}])", self.n(), edges.join(", "))
    }
}
