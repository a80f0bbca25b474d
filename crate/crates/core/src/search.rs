//! Greedy hill climbing over DAGs with insert, delete and reverse moves, plus
//! the swap-equivalent move that changes only the prior score.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::{closure_after_delete, closure_after_insert, transitive_closure, ClosureMatrix};
use crate::dag::{bit, Dag, NodeId};
use crate::enumerate::{enumerate_dags, MAX_ENUMERATION_NODES};
use crate::error::{Error, Result};
use crate::joint::JointPrior;
use crate::pdag::covered_edges;
use crate::score::{prior_term, PriorKind, ScoreCache, ScoreConfig};

/// Smallest score gain that counts as an improvement.
pub const IMPROVEMENT: f64 = 1e-9;

/// Equivalence-class members examined per swap.
pub const SWAP_STATE_LIMIT: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Insert,
    Delete,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeOperator {
    pub kind: OpKind,
    pub u: NodeId,
    pub v: NodeId,
}

/// Everything the search keeps about the current graph.
#[derive(Clone, Debug)]
pub struct SearchState {
    pub dag: Dag,
    pub closure: ClosureMatrix,
    /// Family score per node.
    pub families: Vec<f64>,
    pub data_score: f64,
    pub prior_score: f64,
}

impl SearchState {
    pub fn new(dag: Dag, cache: &ScoreCache, prior: &JointPrior, cfg: &ScoreConfig) -> Result<Self> {
        if dag.n() != cache.data().n_vars() {
            return Err(Error::Inconsistent(format!(
                "graph has {} nodes, data has {} variables",
                dag.n(),
                cache.data().n_vars()
            )));
        }
        if cfg.prior == PriorKind::Informative && !prior.is_empty() && prior.u.n_nodes != dag.n() {
            return Err(Error::Inconsistent(format!(
                "prior built for {} nodes, graph has {}",
                prior.u.n_nodes,
                dag.n()
            )));
        }
        let closure = transitive_closure(&dag);
        let families = (0..dag.n())
            .map(|v| cache.family(v, dag.parents_mask(v)))
            .collect::<Result<Vec<_>>>()?;
        let data_score = families.iter().sum();
        let prior_score = prior_term(&closure, prior, cfg);
        Ok(SearchState {
            dag,
            closure,
            families,
            data_score,
            prior_score,
        })
    }

    pub fn total(&self) -> f64 {
        self.data_score + self.prior_score
    }
}

/// Score change of a move; an escape from a forbidden configuration counts as
/// an infinite gain.
fn combine(data_delta: f64, old_prior: f64, new_prior: f64) -> f64 {
    match (old_prior == f64::NEG_INFINITY, new_prior == f64::NEG_INFINITY) {
        (true, true) => data_delta,
        (true, false) => f64::INFINITY,
        _ => data_delta + (new_prior - old_prior),
    }
}

/// Closure after `op`, or `None` when the move would create a cycle.
fn closure_after(state: &SearchState, op: EdgeOperator) -> Option<ClosureMatrix> {
    let EdgeOperator { kind, u, v } = op;
    match kind {
        OpKind::Insert => closure_after_insert(&state.closure, (u, v)).ok(),
        OpKind::Delete => closure_after_delete(&state.closure, &state.dag, (u, v)).ok(),
        OpKind::Reverse => {
            let without = closure_after_delete(&state.closure, &state.dag, (u, v)).ok()?;
            closure_after_insert(&without, (v, u)).ok()
        }
    }
}

fn data_delta(state: &SearchState, op: EdgeOperator, cache: &ScoreCache) -> Result<f64> {
    let EdgeOperator { kind, u, v } = op;
    let pa = |x: NodeId| state.dag.parents_mask(x);
    Ok(match kind {
        OpKind::Insert => cache.family(v, pa(v) | bit(u))? - state.families[v],
        OpKind::Delete => cache.family(v, pa(v) & !bit(u))? - state.families[v],
        OpKind::Reverse => {
            cache.family(v, pa(v) & !bit(u))? - state.families[v] + cache.family(u, pa(u) | bit(v))?
                - state.families[u]
        }
    })
}

/// Candidate moves in `(kind, u, v)` order, before the acyclicity check.
fn candidates(dag: &Dag) -> Vec<EdgeOperator> {
    let n = dag.n();
    let mut ops = Vec::new();
    for kind in [OpKind::Insert, OpKind::Delete, OpKind::Reverse] {
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                let ok = match kind {
                    OpKind::Insert => !dag.adjacent(u, v),
                    OpKind::Delete | OpKind::Reverse => dag.has_edge(u, v),
                };
                if ok {
                    ops.push(EdgeOperator { kind, u, v });
                }
            }
        }
    }
    ops
}

/// Every applicable move with its exact change in total score, in
/// `(kind, u, v)` order.
pub fn neighbors(
    state: &SearchState,
    cache: &ScoreCache,
    prior: &JointPrior,
    cfg: &ScoreConfig,
) -> Result<Vec<(EdgeOperator, f64)>> {
    let informative = cfg.prior == PriorKind::Informative && !prior.is_empty();
    let scored: Vec<Option<(EdgeOperator, f64)>> = candidates(&state.dag)
        .into_par_iter()
        .map(|op| -> Result<Option<(EdgeOperator, f64)>> {
            let needs_closure = informative || op.kind != OpKind::Delete;
            let closure = if needs_closure {
                match closure_after(state, op) {
                    Some(c) => Some(c),
                    None => return Ok(None),
                }
            } else {
                None
            };
            let dd = data_delta(state, op, cache)?;
            let new_prior = match (&closure, informative) {
                (Some(c), true) => prior_term(c, prior, cfg),
                _ => state.prior_score,
            };
            Ok(Some((op, combine(dd, state.prior_score, new_prior))))
        })
        .collect::<Result<_>>()?;
    Ok(scored.into_iter().flatten().collect())
}

/// Applies `op`, updating the closure, families and both scores.
pub fn apply(
    state: &SearchState,
    op: EdgeOperator,
    cache: &ScoreCache,
    prior: &JointPrior,
    cfg: &ScoreConfig,
) -> Result<SearchState> {
    let closure = closure_after(state, op).ok_or(Error::Cycle(op.u, op.v))?;
    let mut dag = state.dag.clone();
    match op.kind {
        OpKind::Insert => dag.add_edge(op.u, op.v)?,
        OpKind::Delete => dag.remove_edge(op.u, op.v)?,
        OpKind::Reverse => dag.reverse_edge(op.u, op.v)?,
    }
    let mut families = state.families.clone();
    for x in [op.u, op.v] {
        families[x] = cache.family(x, dag.parents_mask(x))?;
    }
    let data_score = families.iter().sum();
    let prior_score = prior_term(&closure, prior, cfg);
    let next = SearchState {
        dag,
        closure,
        families,
        data_score,
        prior_score,
    };
    debug_assert!(next.closure == transitive_closure(&next.dag));
    Ok(next)
}

/// Moves to the Markov-equivalent DAG with the highest prior score among the
/// equivalence-class members reachable by covered-edge reversals (at most
/// [`SWAP_STATE_LIMIT`] of them, visited breadth first). Returns the input
/// unchanged unless the prior strictly improves.
pub fn swap_equivalent(
    state: &SearchState,
    cache: &ScoreCache,
    prior: &JointPrior,
    cfg: &ScoreConfig,
) -> Result<SearchState> {
    if cfg.prior == PriorKind::Uniform || prior.is_empty() {
        return Ok(state.clone());
    }
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut queue: VecDeque<Dag> = VecDeque::new();
    seen.insert(state.dag.parent_masks().to_vec());
    queue.push_back(state.dag.clone());
    let mut best: Option<(Dag, ClosureMatrix, f64)> = None;
    let mut best_prior = state.prior_score;
    while let Some(g) = queue.pop_front() {
        for (x, y) in covered_edges(&g) {
            if seen.len() >= SWAP_STATE_LIMIT {
                break;
            }
            let mut h = g.clone();
            h.reverse_edge(x, y)?;
            if !seen.insert(h.parent_masks().to_vec()) {
                continue;
            }
            let closure = transitive_closure(&h);
            let p = prior_term(&closure, prior, cfg);
            let improves = if best_prior == f64::NEG_INFINITY {
                p > f64::NEG_INFINITY
            } else {
                p > best_prior + IMPROVEMENT
            };
            if improves {
                best_prior = p;
                best = Some((h.clone(), closure, p));
            }
            queue.push_back(h);
        }
    }
    let Some((dag, closure, prior_score)) = best else {
        return Ok(state.clone());
    };
    let families = (0..dag.n())
        .map(|v| cache.family(v, dag.parents_mask(v)))
        .collect::<Result<Vec<_>>>()?;
    let data_score = families.iter().sum();
    Ok(SearchState {
        dag,
        closure,
        families,
        data_score,
        prior_score,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    Insert,
    Delete,
    Reverse,
    Swap,
}

/// One accepted step of a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    #[serde(rename = "operator")]
    pub kind: Move,
    pub edge: Option<(NodeId, NodeId)>,
    pub data_score: f64,
    pub prior_score: f64,
    /// 1-based configuration index of each prior part.
    pub configuration: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub swap: bool,
    pub max_steps: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            swap: false,
            max_steps: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub state: SearchState,
    pub trace: Vec<TraceStep>,
}

fn trace_step(step: usize, kind: Move, edge: Option<(NodeId, NodeId)>, s: &SearchState, prior: &JointPrior) -> TraceStep {
    TraceStep {
        step,
        kind,
        edge,
        data_score: s.data_score,
        prior_score: s.prior_score,
        configuration: prior
            .part_codes(&s.closure)
            .into_iter()
            .map(|c| c as u64 + 1)
            .collect(),
    }
}

/// Hill climbing from `start`: repeatedly takes the best improving move (ties
/// go to the lowest `(kind, u, v)`), optionally followed by a swap to a better
/// equivalent DAG, until nothing improves.
pub fn greedy_search(
    start: Dag,
    cache: &ScoreCache,
    prior: &JointPrior,
    cfg: &ScoreConfig,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let mut state = SearchState::new(start, cache, prior, cfg)?;
    let mut trace = Vec::new();
    for step in 0..opts.max_steps {
        let mut best: Option<(EdgeOperator, f64)> = None;
        for (op, d) in neighbors(&state, cache, prior, cfg)? {
            if d > IMPROVEMENT && best.is_none_or(|(_, b)| d > b) {
                best = Some((op, d));
            }
        }
        let Some((op, _)) = best else { break };
        state = apply(&state, op, cache, prior, cfg)?;
        let kind = match op.kind {
            OpKind::Insert => Move::Insert,
            OpKind::Delete => Move::Delete,
            OpKind::Reverse => Move::Reverse,
        };
        trace.push(trace_step(step, kind, Some((op.u, op.v)), &state, prior));
        if opts.swap {
            let swapped = swap_equivalent(&state, cache, prior, cfg)?;
            if swapped.dag != state.dag {
                state = swapped;
                trace.push(trace_step(step, Move::Swap, None, &state, prior));
            }
        }
    }
    Ok(SearchResult { state, trace })
}

/// Best-scoring DAG over all DAGs on `n <= 6` nodes; ties keep the first in
/// enumeration order. Also returns every score in that order.
pub fn exhaustive_search(
    cache: &ScoreCache,
    prior: &JointPrior,
    cfg: &ScoreConfig,
) -> Result<(SearchState, Vec<f64>)> {
    let n = cache.data().n_vars();
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::TooLarge {
            what: "exhaustive search",
            n,
            max: MAX_ENUMERATION_NODES,
        });
    }
    let mut best: Option<SearchState> = None;
    let mut scores = Vec::new();
    for g in enumerate_dags(n)? {
        let s = SearchState::new(g, cache, prior, cfg)?;
        scores.push(s.total());
        if best.as_ref().is_none_or(|b| s.total() > b.total()) {
            best = Some(s);
        }
    }
    Ok((best.expect("at least one DAG"), scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::estimate::estimate_u_exact;
    use crate::joint::{fit_joint, FitOptions};
    use crate::path::{beliefs_from_statements, BeliefStatement, PathVariable, StatementKind};
    use crate::pdag::is_markov_equivalent;
    use crate::rng::RngSeed;
    use crate::score::total_score;
    use rand::Rng;
    use std::sync::Arc;

    fn chain_data(rows: usize, seed: u64) -> Dataset {
        let mut rng = RngSeed::new(seed, 0).rng();
        let mut cols = vec![Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..rows {
            let x: u16 = rng.random_range(0..2);
            let y = if rng.random_bool(0.85) { x } else { 1 - x };
            let z = if rng.random_bool(0.85) { y } else { 1 - y };
            cols[0].push(x);
            cols[1].push(y);
            cols[2].push(z);
        }
        Dataset::new(vec!["X".into(), "Y".into(), "Z".into()], vec![2, 2, 2], cols).unwrap()
    }

    fn causal_prior(from: usize, to: usize, p: f64) -> JointPrior {
        let r = vec![PathVariable::new(from, to).unwrap()];
        let u = estimate_u_exact(&r, 3).unwrap();
        let st = [BeliefStatement { from, to, kind: StatementKind::Causes, p }];
        let b = beliefs_from_statements(&st, &[u.marginal(0)]).unwrap();
        fit_joint(&b, &u, &FitOptions::default()).unwrap()
    }

    fn empty_prior(n: usize) -> JointPrior {
        JointPrior::empty(&estimate_u_exact(&[], n).unwrap())
    }

    #[test]
    fn neighbour_counts() {
        let cache = ScoreCache::new(Arc::new(chain_data(20, 1)), 1.0).unwrap();
        let prior = empty_prior(3);
        let cfg = ScoreConfig::default();
        let s = SearchState::new(Dag::empty(3).unwrap(), &cache, &prior, &cfg).unwrap();
        let ops = neighbors(&s, &cache, &prior, &cfg).unwrap();
        assert_eq!(ops.len(), 6);
        assert!(ops.iter().all(|(o, _)| o.kind == OpKind::Insert));

        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = SearchState::new(chain, &cache, &prior, &cfg).unwrap();
        let ops: Vec<EdgeOperator> = neighbors(&s, &cache, &prior, &cfg).unwrap().into_iter().map(|x| x.0).collect();
        assert!(!ops.contains(&EdgeOperator { kind: OpKind::Insert, u: 2, v: 0 }));
        assert!(ops.contains(&EdgeOperator { kind: OpKind::Insert, u: 0, v: 2 }));
    }

    #[test]
    fn deltas_match_recomputation() {
        let cache = ScoreCache::new(Arc::new(chain_data(60, 2)), 1.0).unwrap();
        let prior = causal_prior(0, 2, 0.9);
        let cfg = ScoreConfig::default();
        for g in enumerate_dags(3).unwrap() {
            let s = SearchState::new(g.clone(), &cache, &prior, &cfg).unwrap();
            let before = total_score(&g, &s.closure, &cache, &prior, &cfg).unwrap();
            assert!((before - s.total()).abs() < 1e-9);
            for (op, d) in neighbors(&s, &cache, &prior, &cfg).unwrap() {
                let next = apply(&s, op, &cache, &prior, &cfg).unwrap();
                let after = total_score(&next.dag, &transitive_closure(&next.dag), &cache, &prior, &cfg).unwrap();
                assert!((after - before - d).abs() < 1e-9, "{op:?}");
            }
        }
    }

    #[test]
    fn empty_data_keeps_empty_graph() {
        let data = Dataset::new(vec!["A".into(), "B".into(), "C".into()], vec![2, 3, 2], vec![vec![]; 3]).unwrap();
        let cache = ScoreCache::new(Arc::new(data), 1.0).unwrap();
        let cfg = ScoreConfig { prior: PriorKind::Uniform, ..Default::default() };
        let r = greedy_search(Dag::empty(3).unwrap(), &cache, &empty_prior(3), &cfg, &SearchOptions::default()).unwrap();
        assert_eq!(r.state.dag.edge_count(), 0);
        assert!(r.trace.is_empty());
    }

    #[test]
    fn greedy_matches_exhaustive_on_chain_data() {
        let prior = causal_prior(0, 2, 0.9);
        let cfg = ScoreConfig::default();
        let mut agree = 0;
        for seed in 0..20 {
            let cache = ScoreCache::new(Arc::new(chain_data(100, seed)), 1.0).unwrap();
            let opts = SearchOptions { swap: true, ..Default::default() };
            let r = greedy_search(Dag::empty(3).unwrap(), &cache, &prior, &cfg, &opts).unwrap();
            let (best, _) = exhaustive_search(&cache, &prior, &cfg).unwrap();
            if (r.state.total() - best.total()).abs() < 1e-9 {
                agree += 1;
            }
        }
        assert!(agree >= 19, "{agree}/20");
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let cache = ScoreCache::new(Arc::new(chain_data(150, 7)), 1.0).unwrap();
        let prior = causal_prior(0, 2, 0.9);
        let cfg = ScoreConfig::default();
        let opts = SearchOptions { swap: true, ..Default::default() };
        let a = greedy_search(Dag::empty(3).unwrap(), &cache, &prior, &cfg, &opts).unwrap();
        let b = greedy_search(Dag::empty(3).unwrap(), &cache, &prior, &cfg, &opts).unwrap();
        assert_eq!(a.trace, b.trace);
        let mut last = SearchState::new(Dag::empty(3).unwrap(), &cache, &prior, &cfg).unwrap().total();
        for t in &a.trace {
            let total = t.data_score + t.prior_score;
            assert!(total >= last - 1e-9);
            last = total;
        }
    }

    #[test]
    fn swap_reorients_chain_towards_prior() {
        let cache = ScoreCache::new(Arc::new(chain_data(50, 3)), 1.0).unwrap();
        let prior = causal_prior(0, 2, 0.9);
        let cfg = ScoreConfig::default();
        // X <- Y <- Z
        let g = Dag::from_edges(3, &[(1, 0), (2, 1)]).unwrap();
        let s = SearchState::new(g.clone(), &cache, &prior, &cfg).unwrap();
        let t = swap_equivalent(&s, &cache, &prior, &cfg).unwrap();
        assert_eq!(t.dag, Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        assert!(t.prior_score > s.prior_score);
        assert!((t.data_score - s.data_score).abs() < 1e-9);
        assert!(is_markov_equivalent(&g, &t.dag).unwrap());

        // a collider has no covered edges
        let c = Dag::from_edges(3, &[(0, 1), (2, 1)]).unwrap();
        let s = SearchState::new(c.clone(), &cache, &prior, &cfg).unwrap();
        assert_eq!(swap_equivalent(&s, &cache, &prior, &cfg).unwrap().dag, c);

        // an uninformative prior never swaps
        let flat = {
            let r = vec![PathVariable::new(0, 2).unwrap()];
            let u = estimate_u_exact(&r, 3).unwrap();
            let b = crate::path::BeliefSet::new(
                r,
                vec![crate::path::BeliefDistribution::from_array(u.marginal(0)).unwrap()],
            )
            .unwrap();
            fit_joint(&b, &u, &FitOptions::default()).unwrap()
        };
        let s = SearchState::new(g.clone(), &cache, &flat, &cfg).unwrap();
        assert_eq!(swap_equivalent(&s, &cache, &flat, &cfg).unwrap().dag, g);
    }
}
