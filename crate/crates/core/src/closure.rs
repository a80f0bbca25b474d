//! Reachability matrix of a DAG with incremental maintenance under edge
//! insertion and deletion.

use crate::dag::{bit, bits, Dag, NodeId};
use crate::error::{Error, Result};

/// Entry `(u, v)` is set iff a directed path with at least one edge runs from
/// `u` to `v`. Rows (descendants) and columns (ancestors) are both stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosureMatrix {
    desc: Vec<u64>,
    anc: Vec<u64>,
}

impl ClosureMatrix {
    pub fn n(&self) -> usize {
        self.desc.len()
    }

    #[inline]
    pub fn reaches(&self, u: NodeId, v: NodeId) -> bool {
        self.desc[u] & bit(v) != 0
    }

    #[inline]
    pub fn descendants(&self, u: NodeId) -> u64 {
        self.desc[u]
    }

    #[inline]
    pub fn ancestors(&self, v: NodeId) -> u64 {
        self.anc[v]
    }

    /// True if some node is an ancestor of both `x` and `y`.
    #[inline]
    pub fn share_ancestor(&self, x: NodeId, y: NodeId) -> bool {
        self.anc[x] & self.anc[y] != 0
    }

    pub fn is_irreflexive(&self) -> bool {
        (0..self.n()).all(|v| !self.reaches(v, v))
    }

    /// Adds `u -> v` to the underlying graph.
    pub fn insert(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        if u == v || self.reaches(v, u) {
            return Err(Error::Cycle(u, v));
        }
        let gained_desc = bit(v) | self.desc[v];
        let gained_anc = bit(u) | self.anc[u];
        for a in bits(gained_anc) {
            self.desc[a] |= gained_desc;
        }
        for d in bits(gained_desc) {
            self.anc[d] |= gained_anc;
        }
        Ok(())
    }

    /// Rebuilds the rows of `u` and its ancestors after `u -> v` was removed.
    /// `dag` must already be the graph without the edge.
    pub(crate) fn repair_after_delete(&mut self, dag: &Dag, u: NodeId) {
        let affected = self.anc[u] | bit(u);
        // Reverse topological order: descendants are final before their parents.
        for &a in dag.topological_order().iter().rev() {
            if affected & bit(a) == 0 {
                continue;
            }
            let mut row = 0u64;
            for c in dag.children(a) {
                row |= bit(c) | self.desc[c];
            }
            self.desc[a] = row;
        }
        self.rebuild_ancestors();
    }

    fn rebuild_ancestors(&mut self) {
        for a in self.anc.iter_mut() {
            *a = 0;
        }
        for u in 0..self.desc.len() {
            for v in bits(self.desc[u]) {
                self.anc[v] |= bit(u);
            }
        }
    }
}

/// Closure by a union pass in reverse topological order, O(|V| + |E|) word
/// operations for graphs of at most 64 nodes.
pub fn transitive_closure(dag: &Dag) -> ClosureMatrix {
    let n = dag.n();
    let mut desc = vec![0u64; n];
    for &u in dag.topological_order().iter().rev() {
        let mut row = 0u64;
        for c in dag.children(u) {
            row |= bit(c) | desc[c];
        }
        desc[u] = row;
    }
    let mut m = ClosureMatrix {
        desc,
        anc: vec![0; n],
    };
    m.rebuild_ancestors();
    m
}

/// Closure of the graph with `u -> v` added.
pub fn closure_after_insert(
    closure: &ClosureMatrix,
    (u, v): (NodeId, NodeId),
) -> Result<ClosureMatrix> {
    let mut next = closure.clone();
    next.insert(u, v)?;
    Ok(next)
}

/// Closure of `dag` with `u -> v` removed; `dag` still contains the edge.
pub fn closure_after_delete(
    closure: &ClosureMatrix,
    dag: &Dag,
    (u, v): (NodeId, NodeId),
) -> Result<ClosureMatrix> {
    if u >= dag.n() || v >= dag.n() || !dag.has_edge(u, v) {
        return Err(Error::MissingEdge(u, v));
    }
    let mut without = dag.clone();
    without.clear_edge(u, v);
    let mut next = closure.clone();
    next.repair_after_delete(&without, u);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dfs_oracle(dag: &Dag) -> Vec<Vec<bool>> {
        let n = dag.n();
        let mut out = vec![vec![false; n]; n];
        for s in 0..n {
            let mut stack: Vec<usize> = dag.children(s).collect();
            while let Some(x) = stack.pop() {
                if !out[s][x] {
                    out[s][x] = true;
                    stack.extend(dag.children(x));
                }
            }
        }
        out
    }

    fn assert_matches(c: &ClosureMatrix, dag: &Dag) {
        let oracle = dfs_oracle(dag);
        for u in 0..dag.n() {
            for v in 0..dag.n() {
                assert_eq!(c.reaches(u, v), oracle[u][v], "({u},{v}) in {dag:?}");
                assert_eq!(c.ancestors(v) & bit(u) != 0, oracle[u][v]);
            }
        }
    }

    fn random_dag(n: usize, order: &[usize], coin: &[bool]) -> Dag {
        let mut g = Dag::empty(n).unwrap();
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if coin[k % coin.len()] {
                    g.add_edge(order[i], order[j]).unwrap();
                }
                k += 1;
            }
        }
        g
    }

    #[test]
    fn chain_and_empty() {
        let empty = Dag::empty(3).unwrap();
        let c = transitive_closure(&empty);
        assert!((0..3).all(|u| c.descendants(u) == 0));

        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let c = transitive_closure(&chain);
        let set: Vec<(usize, usize)> = (0..3)
            .flat_map(|u| (0..3).map(move |v| (u, v)))
            .filter(|&(u, v)| c.reaches(u, v))
            .collect();
        assert_eq!(set, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn insert_examples() {
        let g = Dag::from_edges(3, &[(0, 1)]).unwrap();
        let c = closure_after_insert(&transitive_closure(&g), (1, 2)).unwrap();
        assert!(c.reaches(1, 2) && c.reaches(0, 2));

        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            closure_after_insert(&transitive_closure(&chain), (2, 0)),
            Err(Error::Cycle(2, 0))
        );

        // two components joined: only ancestors(u) x descendants(v) gain entries
        let g = Dag::from_edges(6, &[(0, 1), (2, 3), (4, 5)]).unwrap();
        let c = closure_after_insert(&transitive_closure(&g), (1, 2)).unwrap();
        let mut h = g.clone();
        h.add_edge(1, 2).unwrap();
        assert_eq!(c, transitive_closure(&h));
        assert!(c.reaches(0, 3) && !c.reaches(0, 5));
    }

    #[test]
    fn delete_examples() {
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let c = closure_after_delete(&transitive_closure(&chain), &chain, (1, 2)).unwrap();
        assert!(c.reaches(0, 1) && !c.reaches(0, 2) && !c.reaches(1, 2));

        let tri = Dag::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let c = closure_after_delete(&transitive_closure(&tri), &tri, (0, 2)).unwrap();
        assert!(c.reaches(0, 2));

        assert_eq!(
            closure_after_delete(&transitive_closure(&chain), &chain, (0, 2)),
            Err(Error::MissingEdge(0, 2))
        );
    }

    proptest! {
        #[test]
        fn closure_equals_dfs(perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(),
                              coin in proptest::collection::vec(any::<bool>(), 28)) {
            let g = random_dag(8, &perm, &coin);
            let c = transitive_closure(&g);
            assert_matches(&c, &g);
            prop_assert!(c.is_irreflexive());
        }

        #[test]
        fn delete_equals_recompute(perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(),
                                   coin in proptest::collection::vec(any::<bool>(), 28),
                                   pick in any::<usize>()) {
            let g = random_dag(8, &perm, &coin);
            let edges: Vec<_> = g.edges().collect();
            prop_assume!(!edges.is_empty());
            let e = edges[pick % edges.len()];
            let c = closure_after_delete(&transitive_closure(&g), &g, e).unwrap();
            let mut h = g.clone();
            h.remove_edge(e.0, e.1).unwrap();
            assert_matches(&c, &h);
        }

        #[test]
        fn random_mutation_sequences(ops in proptest::collection::vec((0usize..10, 0usize..10), 1..200)) {
            let mut g = Dag::empty(10).unwrap();
            let mut c = transitive_closure(&g);
            for (u, v) in ops {
                if u == v { continue; }
                if g.has_edge(u, v) {
                    c = closure_after_delete(&c, &g, (u, v)).unwrap();
                    g.remove_edge(u, v).unwrap();
                } else if !c.reaches(v, u) {
                    c = closure_after_insert(&c, (u, v)).unwrap();
                    g.add_edge(u, v).unwrap();
                }
                prop_assert_eq!(&c, &transitive_closure(&g));
            }
        }
    }
}
