//! Replicated simulation experiments. Every replication draws from its own
//! RNG stream, so results do not depend on thread count, and aggregates are
//! always recomputed from the per-replication records.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::closure::transitive_closure;
use crate::dag::{Dag, NodeId};
use crate::error::{Error, Result};
use crate::estimate::{estimate_u_exact, estimate_u_fact, kl_between, tally_samples, ConfigTally};
use crate::joint::{fit_joint, is_coherent, FitOptions, JointPrior};
use crate::network::{forward_sample, random_cpts, reparameterize, CategoricalBn};
use crate::path::{
    beliefs_from_statements, distribution_on, value_of, BeliefSet, BeliefStatement,
    PathVariable, StatementKind,
};
use crate::pdag::{shd, to_pdag};
use crate::rng::RngSeed;
use crate::sampler::DagSampler;
use crate::score::{PriorKind, ScoreCache, ScoreConfig};
use crate::search::{exhaustive_search, greedy_search, SearchOptions};

/// Dirichlet concentration of random CPT columns.
const CPT_SHAPE: f64 = 0.5;

/// One measured value of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub arm: String,
    pub nodes: usize,
    pub size: u64,
    pub metric: String,
    pub replication: u64,
    pub value: f64,
}

/// Mean and sample standard deviation of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub experiment: String,
    pub arm: String,
    pub nodes: usize,
    pub size: u64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
}

/// Aggregates sorted by `(experiment, arm, nodes, size, metric)`.
pub fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut cells: BTreeMap<(&str, &str, usize, u64, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        cells
            .entry((&r.experiment, &r.arm, r.nodes, r.size, &r.metric))
            .or_default()
            .push(r.value);
    }
    cells
        .into_iter()
        .map(|((experiment, arm, nodes, size, metric), v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            Aggregate {
                experiment: experiment.to_owned(),
                arm: arm.to_owned(),
                nodes,
                size,
                metric: metric.to_owned(),
                mean,
                std,
                n,
            }
        })
        .collect()
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

impl ExperimentReport {
    fn new(experiment: &str, seed: u64, params: serde_json::Value, records: Vec<Record>) -> Self {
        let aggregates = aggregate(&records);
        ExperimentReport {
            experiment: experiment.to_owned(),
            seed,
            params,
            records,
            aggregates,
        }
    }

    /// Aggregate table: experiment, arm, nodes, size, metric, mean, std, n.
    pub fn report_csv(&self) -> Result<String> {
        to_csv(&self.aggregates)
    }

    pub fn records_csv(&self) -> Result<String> {
        to_csv(&self.records)
    }

    pub fn provenance_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "params": self.params,
            "version": env!("CARGO_PKG_VERSION"),
            "replication_streams": "stream = (replication << 8) | purpose",
        }))?)
    }

    /// Mean of one cell, if present.
    pub fn mean(&self, arm: &str, nodes: usize, size: u64, metric: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.arm == arm && a.nodes == nodes && a.size == size && a.metric == metric)
            .map(|a| a.mean)
    }
}

pub fn read_records_csv(text: &str) -> Result<Vec<Record>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Seed of one replication's RNG stream for a given purpose.
pub fn rep_seed(seed: u64, replication: u64, purpose: u8) -> RngSeed {
    RngSeed::new(seed, (replication << 8) | purpose as u64)
}

fn random_arities<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(3..=4)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreeNodeParams {
    pub reps: usize,
    pub seed: u64,
    /// Rows sampled per replication.
    pub rows: usize,
    /// Dataset prefixes that are scored.
    pub sizes: Vec<usize>,
    pub ess: f64,
    /// Belief strength.
    pub p: f64,
}

impl Default for ThreeNodeParams {
    fn default() -> Self {
        ThreeNodeParams {
            reps: 1000,
            seed: 0,
            rows: 200,
            sizes: (10..=200).step_by(10).collect(),
            ess: 1.0,
            p: 0.9,
        }
    }
}

fn single_belief_prior(kind: StatementKind, p: f64) -> Result<JointPrior> {
    let r = [PathVariable::new(0, 2)?];
    let u = estimate_u_exact(&r, 3)?;
    let st = [BeliefStatement { from: 0, to: 2, kind, p }];
    let b = beliefs_from_statements(&st, &[u.marginal(0)])?;
    fit_joint(&b, &u, &FitOptions::default())
}

/// Exhaustive scoring of all 25 DAGs on three nodes for every arm and
/// dataset prefix.
fn three_node(
    name: &str,
    truth: Dag,
    arms: Vec<(&str, Option<JointPrior>)>,
    params: &ThreeNodeParams,
) -> Result<ExperimentReport> {
    let true_pdag = to_pdag(&truth);
    let flat = JointPrior::none(3);
    let per_rep = (0..params.reps as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Record>> {
            let mut rng = rep_seed(params.seed, r, 0).rng();
            let arities = random_arities(3, &mut rng);
            let bn = random_cpts(&truth, &arities, CPT_SHAPE, 1.0, &mut rng)?;
            let data = forward_sample(&bn, params.rows, &mut rng)?;
            let mut out = Vec::new();
            for &size in &params.sizes {
                let cache = ScoreCache::new(Arc::new(data.head(size)), params.ess)?;
                for (arm, prior) in &arms {
                    let cfg = ScoreConfig {
                        ess: params.ess,
                        prior: if prior.is_some() { PriorKind::Informative } else { PriorKind::Uniform },
                        drop_count_factor: false,
                    };
                    let (best, _) = exhaustive_search(&cache, prior.as_ref().unwrap_or(&flat), &cfg)?;
                    let pdag_ok = to_pdag(&best.dag) == true_pdag;
                    let dag_ok = best.dag == truth;
                    let skel_ok = best.dag.skeleton() == truth.skeleton();
                    for (metric, v) in [
                        ("pdag_recovered", pdag_ok),
                        ("dag_recovered", dag_ok),
                        ("skeleton_recovered", skel_ok),
                        ("pdag_without_dag", pdag_ok && !dag_ok),
                    ] {
                        out.push(Record {
                            experiment: name.to_owned(),
                            arm: (*arm).to_owned(),
                            nodes: 3,
                            size: size as u64,
                            metric: metric.to_owned(),
                            replication: r,
                            value: v as u8 as f64,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let params_json = json!({
        "reps": params.reps,
        "rows": params.rows,
        "sizes": params.sizes,
        "ess": params.ess,
        "p": params.p,
        "cpt_shape": CPT_SHAPE,
        "arms": arms.iter().map(|a| a.0).collect::<Vec<_>>(),
    });
    Ok(ExperimentReport::new(name, params.seed, params_json, per_rep.concat()))
}

/// True network X -> Y -> Z; informative belief P(X => Z) = p versus a
/// uniform prior.
pub fn chain_experiment(params: &ThreeNodeParams) -> Result<ExperimentReport> {
    let truth = Dag::from_edges(3, &[(0, 1), (1, 2)])?;
    let arms = vec![
        ("informative", Some(single_belief_prior(StatementKind::Causes, params.p)?)),
        ("uniform", None),
    ];
    three_node("chain", truth, arms, params)
}

/// True network X -> Y <- Z; a correct belief that X and Z are not
/// associated, a uniform prior, and an incorrect belief that they are.
pub fn collider_experiment(params: &ThreeNodeParams) -> Result<ExperimentReport> {
    let truth = Dag::from_edges(3, &[(0, 1), (2, 1)])?;
    let arms = vec![
        ("correct", Some(single_belief_prior(StatementKind::NotAssociated, params.p)?)),
        ("uniform", None),
        ("incorrect", Some(single_belief_prior(StatementKind::Associated, params.p)?)),
    ];
    three_node("collider", truth, arms, params)
}

fn pairs(p: &[(usize, usize)]) -> Vec<PathVariable> {
    p.iter().map(|&(a, b)| PathVariable { from: a, to: b }).collect()
}

/// The three variable sets compared by the factored-estimate experiments:
/// two parts of one, two and three chained pairs.
pub fn partition_sets() -> Vec<(&'static str, Vec<PathVariable>)> {
    vec![
        ("R1", pairs(&[(0, 1), (2, 3)])),
        ("R2", pairs(&[(0, 1), (1, 2), (3, 4), (4, 5)])),
        ("R3", pairs(&[(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)])),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactVsFullParams {
    pub nodes: Vec<usize>,
    pub samples: u64,
    pub laplace: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for FactVsFullParams {
    fn default() -> Self {
        FactVsFullParams {
            nodes: (10..=35).collect(),
            samples: 100_000,
            laplace: 0.0,
            reps: 1,
            seed: 0,
        }
    }
}

/// `KL(FULL || FACT)` for each variable set and node count, with both
/// estimates read from the same sampled DAGs.
pub fn fact_vs_full_experiment(params: &FactVsFullParams) -> Result<ExperimentReport> {
    let sets = partition_sets();
    let vars: Vec<Vec<PathVariable>> = sets.iter().map(|s| s.1.clone()).collect();
    let mut records = Vec::new();
    for r in 0..params.reps as u64 {
        for &n in &params.nodes {
            let tallies = tally_samples(&vars, n, params.samples, rep_seed(params.seed, r, n as u8))?;
            for ((name, _), t) in sets.iter().zip(&tallies) {
                let kl = kl_between(&t.full(params.laplace)?, &t.fact(params.laplace)?)?;
                records.push(Record {
                    experiment: "fact-vs-full".into(),
                    arm: (*name).into(),
                    nodes: n,
                    size: params.samples,
                    metric: "kl_full_fact".into(),
                    replication: r,
                    value: kl,
                });
            }
        }
    }
    let params_json = json!({
        "nodes": params.nodes,
        "samples": params.samples,
        "laplace": params.laplace,
        "reps": params.reps,
    });
    Ok(ExperimentReport::new("fact-vs-full", params.seed, params_json, records))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmallNParams {
    pub nodes: Vec<usize>,
    /// Increasing sample sizes; each replication reads them as prefixes of
    /// one stream of sampled DAGs.
    pub samples: Vec<u64>,
    pub laplace: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for SmallNParams {
    fn default() -> Self {
        SmallNParams {
            nodes: vec![4, 5, 6],
            samples: (100..=10_000).step_by(100).collect(),
            laplace: 1.0,
            reps: 1000,
            seed: 0,
        }
    }
}

/// `KL(exact || FULL)` and `KL(exact || FACT)` against the exact `U` for
/// two disjoint pairs on a few nodes.
pub fn small_n_experiment(params: &SmallNParams) -> Result<ExperimentReport> {
    let r = pairs(&[(0, 1), (2, 3)]);
    if params.samples.windows(2).any(|w| w[0] >= w[1]) || params.samples.first() == Some(&0) {
        return Err(Error::InvalidParameter("sample sizes must be positive and increasing".into()));
    }
    let mut records = Vec::new();
    for &n in &params.nodes {
        let exact = estimate_u_exact(&r, n)?;
        let sampler = DagSampler::new(n)?;
        let per_rep = (0..params.reps as u64)
            .into_par_iter()
            .map(|rep| -> Result<Vec<Record>> {
                let mut rng = rep_seed(params.seed, rep, n as u8).rng();
                let mut tally = ConfigTally::new(&r, n)?;
                let mut out = Vec::new();
                for &s in &params.samples {
                    while tally.samples() < s {
                        tally.add(&sampler.sample(&mut rng));
                    }
                    for (arm, est) in [("full", tally.full(params.laplace)?), ("fact", tally.fact(params.laplace)?)] {
                        out.push(Record {
                            experiment: "small-n-approx".into(),
                            arm: arm.into(),
                            nodes: n,
                            size: s,
                            metric: "kl_exact".into(),
                            replication: rep,
                            value: kl_between(&exact, &est)?,
                        });
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        records.extend(per_rep.into_iter().flatten());
    }
    let params_json = json!({
        "nodes": params.nodes,
        "samples": params.samples,
        "laplace": params.laplace,
        "reps": params.reps,
    });
    Ok(ExperimentReport::new("small-n-approx", params.seed, params_json, records))
}

#[derive(Clone, Debug)]
pub struct LargeParams {
    pub network: CategoricalBn,
    /// Number of node-disjoint components carrying beliefs.
    pub nc: usize,
    /// Nodes per component.
    pub cs: usize,
    pub coherent: bool,
    pub sizes: Vec<usize>,
    pub reps: usize,
    /// DAGs sampled to estimate `U`.
    pub samples: u64,
    pub laplace: f64,
    pub ess: f64,
    pub seed: u64,
    /// Belief draws per component before giving up on the coherence target.
    pub max_retries: usize,
    pub fit: FitOptions,
}

impl LargeParams {
    pub fn new(network: CategoricalBn) -> Self {
        LargeParams {
            network,
            nc: 3,
            cs: 4,
            coherent: false,
            sizes: vec![100, 200, 500, 1000, 2000, 5000, 10_000],
            reps: 50,
            samples: 100_000,
            laplace: f64::EPSILON,
            ess: 1.0,
            seed: 0,
            max_retries: 1000,
            fit: FitOptions::default(),
        }
    }
}

/// Probability redraws per node group before the group itself is redrawn.
pub const GROUP_TRIES: usize = 20;

/// Random path beliefs about `truth`: `nc` disjoint groups of `cs` nodes, one
/// belief per pair within a group, each putting a uniform `p` in [0.5, 0.99]
/// on the true value and the rest in proportion to `U`. A group's beliefs are
/// redrawn until they are coherent (or incoherent) as requested, with fresh
/// nodes every [`GROUP_TRIES`] draws; `max_retries` bounds the draws per group.
pub fn generate_beliefs<R: Rng + ?Sized>(
    truth: &Dag,
    nc: usize,
    cs: usize,
    coherent: bool,
    samples: u64,
    laplace: f64,
    u_seed: RngSeed,
    max_retries: usize,
    fit: &FitOptions,
    rng: &mut R,
) -> Result<(BeliefSet, crate::estimate::UEstimate)> {
    let n = truth.n();
    if nc * cs > n || cs < 2 {
        return Err(Error::InvalidParameter(format!("nc = {nc}, cs = {cs} on {n} nodes")));
    }
    let closure = transitive_closure(truth);
    let pairs = |group: &[NodeId]| -> Result<Vec<PathVariable>> {
        let mut out = Vec::new();
        for i in 0..cs {
            for j in (i + 1)..cs {
                out.push(PathVariable::new(group[i], group[j])?);
            }
        }
        Ok(out)
    };
    let mut free: Vec<NodeId> = (0..n).collect();
    let mut variables = Vec::new();
    let mut dists = Vec::new();
    for _ in 0..nc {
        let mut found = None;
        let mut group = Vec::new();
        let mut vars = Vec::new();
        let mut u = None;
        for attempt in 0..max_retries {
            if attempt % GROUP_TRIES == 0 {
                group = free.choose_multiple(rng, cs).copied().collect();
                vars = pairs(&group)?;
                // the same draws as the final estimate, so this part is identical
                u = Some(estimate_u_fact(&vars, n, samples, laplace, u_seed)?);
            }
            let u = u.as_ref().expect("set on the first attempt");
            let ds = (0..vars.len())
                .map(|k| {
                    distribution_on(&[value_of(&closure, &vars[k])], rng.random_range(0.5..=0.99), u.marginal(k))
                })
                .collect::<Result<Vec<_>>>()?;
            let targets: Vec<[f64; 4]> = ds.iter().map(|d| d.as_array()).collect();
            if is_coherent(&u.parts[0], &targets, fit.tol) == coherent {
                found = Some(ds);
                break;
            }
        }
        let ds = found.ok_or(Error::CoherenceUnreachable(max_retries))?;
        free.retain(|v| !group.contains(v));
        variables.extend(vars);
        dists.extend(ds);
    }
    let u = estimate_u_fact(&variables, n, samples, laplace, u_seed)?;
    Ok((BeliefSet::new(variables, dists)?, u))
}

/// Greedy search from the empty graph under a uniform prior, an informative
/// prior, and an informative prior with swaps; SHD to the true essential
/// graph.
pub fn large_experiment(params: &LargeParams) -> Result<ExperimentReport> {
    let truth = params.network.dag().clone();
    let n = truth.n();
    let true_pdag = to_pdag(&truth);
    let max_rows = params.sizes.iter().copied().max().unwrap_or(0);
    let flat = JointPrior::none(n);
    let per_rep = (0..params.reps as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Record>> {
            let mut rng = rep_seed(params.seed, r, 0).rng();
            let arities = random_arities(n, &mut rng);
            let bn = reparameterize(&params.network, &arities, CPT_SHAPE, 1.0, &mut rng)?;
            let data = forward_sample(&bn, max_rows, &mut rng)?;
            let (beliefs, u) = generate_beliefs(
                &truth,
                params.nc,
                params.cs,
                params.coherent,
                params.samples,
                params.laplace,
                rep_seed(params.seed, r, 2),
                params.max_retries,
                &params.fit,
                &mut rep_seed(params.seed, r, 1).rng(),
            )?;
            let prior = fit_joint(&beliefs, &u, &params.fit)?;
            let rec = |arm: &str, size: usize, metric: &str, value: f64| Record {
                experiment: "large".into(),
                arm: arm.into(),
                nodes: n,
                size: size as u64,
                metric: metric.into(),
                replication: r,
                value,
            };
            let mut out = vec![rec(
                "beliefs",
                0,
                "i_aggregate",
                prior.parts.iter().map(|p| p.i_aggregate).sum(),
            )];
            for &size in &params.sizes {
                let cache = ScoreCache::new(Arc::new(data.head(size)), params.ess)?;
                let arms = [
                    ("uniform", PriorKind::Uniform, false),
                    ("informative", PriorKind::Informative, false),
                    ("informative-swap", PriorKind::Informative, true),
                ];
                for (arm, kind, swap) in arms {
                    let cfg = ScoreConfig {
                        ess: params.ess,
                        prior: kind,
                        drop_count_factor: false,
                    };
                    let p = if kind == PriorKind::Uniform { &flat } else { &prior };
                    let opts = SearchOptions {
                        swap,
                        ..Default::default()
                    };
                    let res = greedy_search(Dag::empty(n)?, &cache, p, &cfg, &opts)?;
                    out.push(rec(arm, size, "shd", shd(&to_pdag(&res.state.dag), &true_pdag)? as f64));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let params_json = json!({
        "nodes": n,
        "edges": truth.edge_count(),
        "nc": params.nc,
        "cs": params.cs,
        "coherent": params.coherent,
        "sizes": params.sizes,
        "reps": params.reps,
        "samples": params.samples,
        "laplace": params.laplace,
        "ess": params.ess,
        "max_retries": params.max_retries,
        "cpt_shape": CPT_SHAPE,
        "arms": ["uniform", "informative", "informative-swap"],
    });
    Ok(ExperimentReport::new("large", params.seed, params_json, per_rep.concat()))
}
