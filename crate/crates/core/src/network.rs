//! Categorical Bayesian networks: random parameters, ancestral sampling and
//! a JSON file format.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dag::{bit, bits, Dag, NodeId, MAX_NODES};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// CPT columns must sum to one within this.
const NORMALIZATION_TOL: f64 = 1e-9;

/// A DAG over categorical variables with one conditional table per node.
/// `cpts[v][j][s]` is `P(v = s | parents of v in configuration j)`, where `j`
/// is mixed radix over the parents with the lowest-indexed parent fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalBn {
    names: Vec<String>,
    states: Vec<Vec<String>>,
    dag: Dag,
    cpts: Vec<Vec<Vec<f64>>>,
}

fn default_states(arity: usize) -> Vec<String> {
    (0..arity).map(|s| format!("s{s}")).collect()
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("V{i}")).collect()
}

/// Number of parent configurations of `v`.
fn n_configs(dag: &Dag, arities: &[usize], v: NodeId) -> usize {
    bits(dag.parents_mask(v)).map(|p| arities[p]).product()
}

impl CategoricalBn {
    pub fn new(names: Vec<String>, states: Vec<Vec<String>>, dag: Dag, cpts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = dag.n();
        if names.len() != n || states.len() != n || cpts.len() != n {
            return Err(Error::Inconsistent(format!(
                "{} names, {} state lists, {} tables for {n} nodes",
                names.len(),
                states.len(),
                cpts.len()
            )));
        }
        let arities: Vec<usize> = states.iter().map(Vec::len).collect();
        for v in 0..n {
            if arities[v] < 2 {
                return Err(Error::Arity(format!("variable {} has {} states", names[v], arities[v])));
            }
            let q = n_configs(&dag, &arities, v);
            if cpts[v].len() != q {
                return Err(Error::Inconsistent(format!(
                    "variable {} has {} columns, expected {q}",
                    names[v],
                    cpts[v].len()
                )));
            }
            for (j, col) in cpts[v].iter().enumerate() {
                if col.len() != arities[v] {
                    return Err(Error::Inconsistent(format!(
                        "variable {} column {j} has {} entries, expected {}",
                        names[v],
                        col.len(),
                        arities[v]
                    )));
                }
                let sum: f64 = col.iter().sum();
                if col.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::InvalidProbability(format!(
                        "variable {} column {j} sums to {sum}",
                        names[v]
                    )));
                }
            }
        }
        Ok(CategoricalBn {
            names,
            states,
            dag,
            cpts,
        })
    }

    pub fn n(&self) -> usize {
        self.dag.n()
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arities(&self) -> Vec<usize> {
        self.states.iter().map(Vec::len).collect()
    }

    pub fn cpt(&self, v: NodeId) -> &[Vec<f64>] {
        &self.cpts[v]
    }

    /// Probability of one full assignment.
    pub fn joint_prob(&self, assignment: &[usize]) -> f64 {
        let arities = self.arities();
        (0..self.n())
            .map(|v| {
                let j = config_index(self.dag.parents_mask(v), &arities, |p| assignment[p]);
                self.cpts[v][j][assignment[v]]
            })
            .product()
    }

    pub fn to_json(&self) -> Result<String> {
        let variables = (0..self.n())
            .map(|v| NetworkVariable {
                name: self.names[v].clone(),
                states: self.states[v].clone(),
                parents: self.dag.parents(v).map(|p| self.names[p].clone()).collect(),
                cpt: self.cpts[v].clone(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&NetworkFile { variables })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        let n = file.variables.len();
        if n > MAX_NODES {
            return Err(Error::TooManyNodes(n));
        }
        let names: Vec<String> = file.variables.iter().map(|v| v.name.clone()).collect();
        let index = |name: &str| -> Result<NodeId> {
            names
                .iter()
                .position(|x| x == name)
                .ok_or_else(|| Error::Parse(format!("unknown parent {name:?}")))
        };
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Parse(format!("duplicate variable {a:?}")));
            }
        }
        let mut dag = Dag::empty(n)?;
        for (v, var) in file.variables.iter().enumerate() {
            for p in &var.parents {
                dag.add_edge(index(p)?, v)?;
            }
        }
        let (states, cpts) = file.variables.into_iter().map(|v| (v.states, v.cpt)).unzip();
        CategoricalBn::new(names, states, dag, cpts)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    variables: Vec<NetworkVariable>,
}

#[derive(Serialize, Deserialize)]
struct NetworkVariable {
    name: String,
    states: Vec<String>,
    parents: Vec<String>,
    cpt: Vec<Vec<f64>>,
}

fn config_index(parents: u64, arities: &[usize], state: impl Fn(NodeId) -> usize) -> usize {
    let mut j = 0;
    let mut stride = 1;
    for p in bits(parents) {
        j += state(p) * stride;
        stride *= arities[p];
    }
    j
}

fn check_gamma(shape: f64, scale: f64) -> Result<Gamma<f64>> {
    if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma shape {shape}, scale {scale}")));
    }
    Gamma::new(shape, scale).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// One draw from Gamma(shape, scale).
pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(check_gamma(shape, scale)?.sample(rng))
}

/// Parameterizes `dag` with CPT columns of normalized Gamma(shape, scale)
/// draws, i.e. Dirichlet(shape, ..., shape).
pub fn random_cpts<R: Rng + ?Sized>(
    dag: &Dag,
    arities: &[usize],
    shape: f64,
    scale: f64,
    rng: &mut R,
) -> Result<CategoricalBn> {
    let gamma = check_gamma(shape, scale)?;
    let n = dag.n();
    if arities.len() != n {
        return Err(Error::SizeMismatch(arities.len(), n));
    }
    let mut cpts = Vec::with_capacity(n);
    for v in 0..n {
        let q = n_configs(dag, arities, v);
        let mut table = Vec::with_capacity(q);
        for _ in 0..q {
            let mut col: Vec<f64> = (0..arities[v]).map(|_| gamma.sample(rng)).collect();
            let mut sum: f64 = col.iter().sum();
            if sum == 0.0 {
                // every draw underflowed; fall back to one certain state
                let s = rng.random_range(0..col.len());
                col[s] = 1.0;
                sum = 1.0;
            }
            col.iter_mut().for_each(|p| *p /= sum);
            table.push(col);
        }
        cpts.push(table);
    }
    CategoricalBn::new(
        default_names(n),
        arities.iter().map(|&a| default_states(a)).collect(),
        dag.clone(),
        cpts,
    )
}

/// Same structure and names as `bn`, with fresh arities and random CPTs.
pub fn reparameterize<R: Rng + ?Sized>(
    bn: &CategoricalBn,
    arities: &[usize],
    shape: f64,
    scale: f64,
    rng: &mut R,
) -> Result<CategoricalBn> {
    let mut fresh = random_cpts(&bn.dag, arities, shape, scale, rng)?;
    fresh.names = bn.names.clone();
    Ok(fresh)
}

fn draw<R: Rng + ?Sized>(col: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s, &p) in col.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    // rounding left u above the last partial sum; take the last state with mass
    col.iter().rposition(|&p| p > 0.0).unwrap_or(col.len() - 1)
}

/// Ancestral sampling of `rows` complete rows.
pub fn forward_sample<R: Rng + ?Sized>(bn: &CategoricalBn, rows: usize, rng: &mut R) -> Result<Dataset> {
    let n = bn.n();
    let arities = bn.arities();
    let order = bn.dag.topological_order();
    let mut columns = vec![Vec::with_capacity(rows); n];
    let mut row = vec![0usize; n];
    for _ in 0..rows {
        for &v in &order {
            let j = config_index(bn.dag.parents_mask(v), &arities, |p| row[p]);
            row[v] = draw(&bn.cpts[v][j], rng);
        }
        for (col, &s) in columns.iter_mut().zip(&row) {
            col.push(s as u16);
        }
    }
    Dataset::new(bn.names.clone(), arities, columns)
}

/// Random sparse DAG on `n` nodes in which each node draws up to
/// `max_parents` parents among the six nodes just before it in a random
/// order, plus occasionally one more from anywhere earlier.
pub fn synthetic_structure<R: Rng + ?Sized>(n: usize, max_parents: usize, rng: &mut R) -> Result<Dag> {
    let mut dag = Dag::empty(n)?;
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(rng);
    for i in 1..n {
        let k = rng.random_range(1..=max_parents.min(i).max(1));
        // favour nearby predecessors so the graph has long paths
        let mut pool: Vec<NodeId> = order[i.saturating_sub(6)..i].to_vec();
        pool.shuffle(rng);
        let mut chosen = 0u64;
        for &p in pool.iter().take(k) {
            chosen |= bit(p);
        }
        if rng.random_bool(0.25) {
            chosen |= bit(order[rng.random_range(0..i)]);
        }
        for p in bits(chosen) {
            dag.add_edge(p, order[i])?;
        }
    }
    Ok(dag)
}

/// A synthetic network: [`synthetic_structure`] with 3 or 4 states per node
/// and Dirichlet(0.5) CPTs.
pub fn synthetic_network<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CategoricalBn> {
    let dag = synthetic_structure(n, 2, rng)?;
    let arities: Vec<usize> = (0..n).map(|_| rng.random_range(3..=4)).collect();
    random_cpts(&dag, &arities, 0.5, 1.0, rng)
}
