//! BDeu data score with a concurrent per-family cache, and the total score
//! `data + prior`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use libm::lgamma;
use serde::{Deserialize, Serialize};

use crate::closure::ClosureMatrix;
use crate::dag::{bit, bits, Dag};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::joint::{JointPrior, PriorMode};

/// Dense count tables are used up to this many cells.
const DENSE_CELLS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Informative,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub ess: f64,
    pub prior: PriorKind,
    pub drop_count_factor: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            ess: 1.0,
            prior: PriorKind::Informative,
            drop_count_factor: false,
        }
    }
}

impl ScoreConfig {
    pub fn prior_mode(&self) -> PriorMode {
        if self.drop_count_factor {
            PriorMode::DropCount
        } else {
            PriorMode::Full
        }
    }
}

/// Mixed-radix parent configuration per row; the lowest-indexed parent
/// varies fastest.
pub fn parent_configurations(data: &Dataset, parents: u64) -> (Vec<usize>, usize) {
    let mut idx = vec![0usize; data.n_rows()];
    let mut stride = 1usize;
    for p in bits(parents) {
        for (i, &v) in idx.iter_mut().zip(data.column(p)) {
            *i += v as usize * stride;
        }
        stride = stride.saturating_mul(data.arity(p));
    }
    (idx, stride)
}

/// BDeu local log marginal likelihood of `child` given the parent set
/// `parents` (a bit mask).
pub fn bdeu_family_score(data: &Dataset, child: usize, parents: u64, ess: f64) -> Result<f64> {
    let n = data.n_vars();
    if child >= n || (n < 64 && parents >> n != 0) {
        return Err(Error::Arity(format!("family {child} <- {parents:#b} outside {n} variables")));
    }
    if parents & bit(child) != 0 {
        return Err(Error::SelfLoop(child));
    }
    if !(ess > 0.0) {
        return Err(Error::Parse(format!("equivalent sample size must be positive, got {ess}")));
    }
    let r = data.arity(child);
    let (idx, q) = parent_configurations(data, parents);
    let a_j = ess / q as f64;
    let a_jk = a_j / r as f64;
    let (lg_j, lg_jk) = (lgamma(a_j), lgamma(a_jk));
    let child_col = data.column(child);

    let mut score = 0.0;
    let mut family = |counts: &[u32]| {
        let n_j: u32 = counts.iter().sum();
        if n_j == 0 {
            return;
        }
        score += lg_j - lgamma(a_j + n_j as f64);
        for &c in counts {
            if c > 0 {
                score += lgamma(a_jk + c as f64) - lg_jk;
            }
        }
    };
    if q.checked_mul(r).is_some_and(|cells| cells <= DENSE_CELLS) {
        let mut counts = vec![0u32; q * r];
        for (&j, &k) in idx.iter().zip(child_col) {
            counts[j * r + k as usize] += 1;
        }
        for j in 0..q {
            family(&counts[j * r..(j + 1) * r]);
        }
    } else {
        let mut counts: HashMap<usize, Vec<u32>> = HashMap::new();
        for (&j, &k) in idx.iter().zip(child_col) {
            counts.entry(j).or_insert_with(|| vec![0; r])[k as usize] += 1;
        }
        let mut keys: Vec<&usize> = counts.keys().collect();
        keys.sort_unstable();
        for j in keys {
            family(&counts[j]);
        }
    }
    Ok(score)
}

/// Family scores for one dataset and equivalent sample size, shared safely
/// between threads.
#[derive(Debug)]
pub struct ScoreCache {
    data: Arc<Dataset>,
    ess: f64,
    shards: Vec<RwLock<HashMap<u64, f64>>>,
}

impl ScoreCache {
    pub fn new(data: Arc<Dataset>, ess: f64) -> Result<Self> {
        if !(ess > 0.0) {
            return Err(Error::Parse(format!("equivalent sample size must be positive, got {ess}")));
        }
        let shards = (0..data.n_vars()).map(|_| RwLock::new(HashMap::new())).collect();
        Ok(ScoreCache { data, ess, shards })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.read().unwrap().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached [`bdeu_family_score`].
    pub fn family(&self, child: usize, parents: u64) -> Result<f64> {
        let shard = self
            .shards
            .get(child)
            .ok_or_else(|| Error::Arity(format!("no variable {child}")))?;
        if let Some(&s) = shard.read().unwrap().get(&parents) {
            return Ok(s);
        }
        let s = bdeu_family_score(&self.data, child, parents, self.ess)?;
        shard.write().unwrap().insert(parents, s);
        Ok(s)
    }
}

fn check_dims(dag: &Dag, data: &Dataset) -> Result<()> {
    if dag.n() != data.n_vars() {
        return Err(Error::Inconsistent(format!(
            "graph has {} nodes, data has {} variables",
            dag.n(),
            data.n_vars()
        )));
    }
    Ok(())
}

/// Sum of the BDeu family scores of `dag`.
pub fn data_log_score(dag: &Dag, cache: &ScoreCache) -> Result<f64> {
    check_dims(dag, cache.data())?;
    (0..dag.n()).map(|v| cache.family(v, dag.parents_mask(v))).sum()
}

/// Prior score of the graph summarised by `closure`, or 0 under a uniform prior.
pub fn prior_term(closure: &ClosureMatrix, prior: &JointPrior, cfg: &ScoreConfig) -> f64 {
    match cfg.prior {
        PriorKind::Uniform => 0.0,
        PriorKind::Informative if prior.is_empty() => 0.0,
        PriorKind::Informative => prior.score_closure(closure, cfg.prior_mode()),
    }
}

/// `data score + prior score`. Minus infinity when the prior forbids the
/// graph's configuration.
pub fn total_score(
    dag: &Dag,
    closure: &ClosureMatrix,
    cache: &ScoreCache,
    prior: &JointPrior,
    cfg: &ScoreConfig,
) -> Result<f64> {
    if cfg.prior == PriorKind::Informative && !prior.is_empty() && prior.u.n_nodes != dag.n() {
        return Err(Error::Inconsistent(format!(
            "prior built for {} nodes, graph has {}",
            prior.u.n_nodes,
            dag.n()
        )));
    }
    Ok(data_log_score(dag, cache)? + prior_term(closure, prior, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::transitive_closure;
    use crate::enumerate::enumerate_dags;
    use crate::pdag::is_markov_equivalent;
    use crate::rng::RngSeed;
    use proptest::prelude::*;
    use rand::Rng;

    fn dataset(cols: Vec<Vec<u16>>, arities: Vec<usize>) -> Dataset {
        let names = (0..cols.len()).map(|i| format!("V{i}")).collect();
        Dataset::new(names, arities, cols).unwrap()
    }

    fn random_data(n: usize, rows: usize, seed: u64) -> Dataset {
        let mut rng = RngSeed::new(seed, 0).rng();
        let arities: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
        let mut cols: Vec<Vec<u16>> = vec![Vec::new(); n];
        for _ in 0..rows {
            // correlated columns so that families differ
            let base: u16 = rng.random_range(0..3);
            for (v, col) in cols.iter_mut().enumerate() {
                let x = if rng.random_bool(0.6) { base } else { rng.random_range(0..3) };
                col.push(x % arities[v] as u16);
            }
        }
        dataset(cols, arities)
    }

    #[test]
    fn lgamma_reference_values() {
        for (x, want) in [
            (0.5, 0.5723649429247004),
            (1.5, -0.12078223763524543),
            (2.5, 0.2846828704729196),
            (1e-3, 6.907178885383854),
            (3.7, 1.4280723266653883),
            (10.0, 12.801827480081467),
            (100.5, 361.4355404677776),
            (1234.25, 7548.771422345795),
        ] {
            let got = lgamma(x);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "lgamma({x}) = {got}");
        }
    }

    #[test]
    fn closed_form_single_family() {
        let d = dataset(vec![vec![1, 0, 1]], vec![2]);
        let s = bdeu_family_score(&d, 0, 0, 1.0).unwrap();
        assert!((s - -2.772588722239782).abs() < 1e-12, "{s}");
    }

    #[test]
    fn empty_data_scores_zero() {
        let d = dataset(vec![vec![], vec![], vec![]], vec![2, 3, 4]);
        for child in 0..3 {
            for parents in 0..8u64 {
                if parents & bit(child) == 0 {
                    assert_eq!(bdeu_family_score(&d, child, parents, 1.0).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn errors() {
        let d = dataset(vec![vec![0, 1], vec![1, 1]], vec![2, 2]);
        assert!(bdeu_family_score(&d, 0, 1, 1.0).is_err());
        assert!(bdeu_family_score(&d, 2, 0, 1.0).is_err());
        assert!(bdeu_family_score(&d, 0, 0, 0.0).is_err());
        let cache = ScoreCache::new(Arc::new(d), 1.0).unwrap();
        assert!(data_log_score(&Dag::empty(3).unwrap(), &cache).is_err());
    }

    #[test]
    fn cache_hits_match_fresh_values() {
        let d = Arc::new(random_data(4, 50, 1));
        let cache = ScoreCache::new(d.clone(), 1.0).unwrap();
        for _ in 0..2 {
            for child in 0..4 {
                for parents in 0..16u64 {
                    if parents & bit(child) != 0 {
                        continue;
                    }
                    let fresh = bdeu_family_score(&d, child, parents, 1.0).unwrap();
                    assert_eq!(cache.family(child, parents).unwrap().to_bits(), fresh.to_bits());
                }
            }
        }
        assert_eq!(cache.len(), 4 * 8);
    }

    #[test]
    fn concurrent_lookups_agree_with_serial() {
        use rayon::prelude::*;
        let d = Arc::new(random_data(5, 80, 2));
        let cache = ScoreCache::new(d.clone(), 1.0).unwrap();
        let keys: Vec<(usize, u64)> = (0..5)
            .flat_map(|c| (0..32u64).filter(move |p| p & bit(c) == 0).map(move |p| (c, p)))
            .collect();
        let par: Vec<f64> = keys
            .par_iter()
            .chain(keys.par_iter())
            .map(|&(c, p)| cache.family(c, p).unwrap())
            .collect();
        for (i, &(c, p)) in keys.iter().chain(&keys).enumerate() {
            assert_eq!(par[i].to_bits(), bdeu_family_score(&d, c, p, 1.0).unwrap().to_bits());
        }
    }

    #[test]
    fn two_variable_orientations_tie() {
        let d = Arc::new(random_data(2, 40, 3));
        let cache = ScoreCache::new(d, 1.0).unwrap();
        let a = data_log_score(&Dag::from_edges(2, &[(0, 1)]).unwrap(), &cache).unwrap();
        let b = data_log_score(&Dag::from_edges(2, &[(1, 0)]).unwrap(), &cache).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn score_equivalence_on_three_nodes() {
        let all: Vec<Dag> = enumerate_dags(3).unwrap().collect();
        for seed in 0..3 {
            let cache = ScoreCache::new(Arc::new(random_data(3, 60, 10 + seed)), 1.0).unwrap();
            let scores: Vec<f64> = all.iter().map(|g| data_log_score(g, &cache).unwrap()).collect();
            for i in 0..all.len() {
                for j in 0..all.len() {
                    if is_markov_equivalent(&all[i], &all[j]).unwrap() {
                        assert!((scores[i] - scores[j]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn dependence_beats_independence() {
        let mut rng = RngSeed::new(4, 0).rng();
        let mut cols = vec![Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..200 {
            let x: u16 = rng.random_range(0..2);
            let y = if rng.random_bool(0.9) { x } else { 1 - x };
            let z = if rng.random_bool(0.9) { y } else { 1 - y };
            cols[0].push(x);
            cols[1].push(y);
            cols[2].push(z);
        }
        let cache = ScoreCache::new(Arc::new(dataset(cols, vec![2, 2, 2])), 1.0).unwrap();
        let chain = data_log_score(&Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap(), &cache).unwrap();
        let empty = data_log_score(&Dag::empty(3).unwrap(), &cache).unwrap();
        assert!(chain > empty);
    }

    #[test]
    fn data_term_grows_with_rows() {
        let d = random_data(3, 200, 5);
        let g = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let small = data_log_score(&g, &ScoreCache::new(Arc::new(d.head(10)), 1.0).unwrap()).unwrap();
        let large = data_log_score(&g, &ScoreCache::new(Arc::new(d), 1.0).unwrap()).unwrap();
        assert!(large.abs() > small.abs());
        let c = transitive_closure(&g);
        assert!(c.reaches(0, 2));
    }

    proptest! {
        #[test]
        fn family_change_touches_one_term(seed in 0u64..1000, child in 0usize..4, extra in 0usize..4) {
            prop_assume!(child != extra);
            let d = Arc::new(random_data(4, 30, seed));
            let cache = ScoreCache::new(d, 1.0).unwrap();
            let g = Dag::empty(4).unwrap();
            let mut h = g.clone();
            h.add_edge(extra, child).unwrap();
            let delta = cache.family(child, bit(extra)).unwrap() - cache.family(child, 0).unwrap();
            let full = data_log_score(&h, &cache).unwrap() - data_log_score(&g, &cache).unwrap();
            prop_assert!((delta - full).abs() < 1e-10);
        }
    }
}
