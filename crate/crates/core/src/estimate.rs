//! The uninformative configuration distribution `U` and configuration counts.
//!
//! `U_C` is the fraction of all labeled DAGs on `n` nodes whose configuration
//! is `C`. It is estimated from uniform samples, either as one joint table
//! (full) or as a product of per-part tables over an independent partition
//! (factored), or computed exactly by enumeration for tiny `n`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::transitive_closure;
use crate::enumerate::{count_dags, for_each_parent_masks, ln_big, MAX_ENUMERATION_NODES};
use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::path::{
    code_of, digit_of, independent_partition, valid_codes, Configuration, PathValue, PathVariable,
};
use crate::rng::RngSeed;
use crate::sampler::DagSampler;

/// Samples drawn per work unit; each unit owns one RNG substream.
const CHUNK: u64 = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UMethod {
    Full,
    Fact,
    Exact,
}

/// Distribution over the valid configurations of one group of variables.
#[derive(Clone, Debug, PartialEq)]
pub struct UPart {
    /// Indices into the estimate's variable list, in code order.
    pub variables: Vec<usize>,
    /// Valid 0-based part codes, ascending.
    codes: Vec<u32>,
    probs: Vec<f64>,
    /// Probability of a valid code that was never sampled.
    unseen: f64,
}

impl UPart {
    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Probability of a part code; 0 when the code is invalid.
    pub fn prob(&self, code: u32) -> f64 {
        match self.codes.binary_search(&code) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    /// Marginal of the `k`-th variable of the part.
    pub fn marginal(&self, k: usize) -> [f64; 4] {
        let m = self.variables.len();
        let mut out = [0.0; 4];
        for (&c, &p) in self.codes.iter().zip(&self.probs) {
            out[digit_of(c, k, m)] += p;
        }
        out
    }
}

/// Estimated (or exact) `U` over a list of path variables.
#[derive(Clone, Debug, PartialEq)]
pub struct UEstimate {
    pub variables: Vec<PathVariable>,
    pub parts: Vec<UPart>,
    pub n_nodes: usize,
    pub method: UMethod,
    pub samples: u64,
    pub laplace: f64,
    pub seed: Option<RngSeed>,
    /// Natural log of the number of labeled DAGs on `n_nodes`.
    pub log_n: f64,
}

impl UEstimate {
    /// Probability of a full configuration, the product over parts.
    pub fn prob(&self, config: &Configuration) -> f64 {
        self.parts
            .iter()
            .map(|p| p.prob(config.code(&p.variables)))
            .product()
    }

    /// Marginal of variable `k` of the estimate's variable list.
    pub fn marginal(&self, k: usize) -> [f64; 4] {
        for p in &self.parts {
            if let Some(i) = p.variables.iter().position(|&v| v == k) {
                return p.marginal(i);
            }
        }
        panic!("variable {k} is not covered by the estimate")
    }

    /// Index of the part holding variable `k`.
    pub fn part_of(&self, k: usize) -> Option<usize> {
        self.parts.iter().position(|p| p.variables.contains(&k))
    }

    /// Every configuration with non-zero probability, with that probability.
    pub fn support(&self) -> Vec<(Configuration, f64)> {
        let m = self.variables.len();
        let mut out = vec![(vec![PathValue::Forward; m], 1.0)];
        for part in &self.parts {
            let k = part.variables.len();
            let mut next = Vec::with_capacity(out.len() * part.len());
            for (values, p) in &out {
                for (&c, &q) in part.codes.iter().zip(&part.probs) {
                    if q == 0.0 {
                        continue;
                    }
                    let mut v = values.clone();
                    for (i, &var) in part.variables.iter().enumerate() {
                        v[var] = PathValue::from_digit(digit_of(c, i, k) as u32);
                    }
                    next.push((v, p * q));
                }
            }
            out = next;
        }
        out.into_iter().map(|(v, p)| (Configuration::new(v), p)).collect()
    }

    /// `ln N_C`, estimated as `ln N + ln U_C`.
    pub fn log_count_for(&self, config: &Configuration) -> Result<f64> {
        let u = self.prob(config);
        if u <= 0.0 {
            return Err(Error::InvalidConfiguration);
        }
        Ok(self.log_n + u.ln())
    }
}

fn check_nodes(variables: &[PathVariable], n: usize) -> Result<()> {
    for v in variables {
        for node in [v.from, v.to] {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n });
            }
        }
    }
    crate::path::check_distinct_pairs(variables)
}

/// Samples `samples` DAGs and tallies each part's configuration code.
fn count_samples(
    variables: &[PathVariable],
    parts: &[Vec<usize>],
    n: usize,
    samples: u64,
    seed: RngSeed,
) -> Result<Vec<HashMap<u32, u64>>> {
    let sampler = DagSampler::new(n)?;
    let chunks = samples.div_ceil(CHUNK);
    let empty = || vec![HashMap::new(); parts.len()];
    let merged = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.substream(c);
            let mut tally = empty();
            let draws = CHUNK.min(samples - c * CHUNK);
            for _ in 0..draws {
                let g = sampler.sample(&mut rng);
                let closure = transitive_closure(&g);
                for (t, part) in tally.iter_mut().zip(parts) {
                    *t.entry(code_of(&closure, variables, part)).or_insert(0) += 1;
                }
            }
            tally
        })
        .reduce(empty, |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                for (code, k) in y {
                    *x.entry(code).or_insert(0) += k;
                }
            }
            a
        });
    Ok(merged)
}

/// Laplace-smoothed table `(S_c + l) / (S + c l)` over the valid codes of a part.
fn smoothed_part(
    variables: &[PathVariable],
    part: Vec<usize>,
    counts: &HashMap<u32, u64>,
    samples: u64,
    laplace: f64,
) -> Result<UPart> {
    let sub: Vec<PathVariable> = part.iter().map(|&k| variables[k]).collect();
    let codes = valid_codes(&sub)?;
    let denom = samples as f64 + codes.len() as f64 * laplace;
    let probs = codes
        .iter()
        .map(|c| (*counts.get(c).unwrap_or(&0) as f64 + laplace) / denom)
        .collect();
    Ok(UPart {
        variables: part,
        codes,
        probs,
        unseen: laplace / denom,
    })
}

fn check_sampling(samples: u64, laplace: f64) -> Result<()> {
    if samples == 0 {
        return Err(Error::Parse("sample size must be at least 1".into()));
    }
    if !(laplace >= 0.0 && laplace.is_finite()) {
        return Err(Error::Parse(format!("invalid Laplace parameter {laplace}")));
    }
    Ok(())
}

fn sampled_estimate(
    variables: &[PathVariable],
    parts: Vec<Vec<usize>>,
    method: UMethod,
    n: usize,
    samples: u64,
    laplace: f64,
    seed: RngSeed,
) -> Result<UEstimate> {
    check_nodes(variables, n)?;
    check_sampling(samples, laplace)?;
    for p in &parts {
        if p.len() > crate::path::MAX_PART_VARIABLES {
            return Err(Error::TooManyVariables(p.len()));
        }
    }
    let counts = count_samples(variables, &parts, n, samples, seed)?;
    let parts = parts
        .into_iter()
        .zip(&counts)
        .map(|(p, c)| smoothed_part(variables, p, c, samples, laplace))
        .collect::<Result<Vec<_>>>()?;
    Ok(UEstimate {
        variables: variables.to_vec(),
        parts,
        n_nodes: n,
        method,
        samples,
        laplace,
        seed: Some(seed),
        log_n: ln_big(&count_dags(n)),
    })
}

/// One joint table over all variables from `samples` uniform DAGs.
pub fn estimate_u_full(
    variables: &[PathVariable],
    n: usize,
    samples: u64,
    laplace: f64,
    seed: RngSeed,
) -> Result<UEstimate> {
    let all = (0..variables.len()).collect();
    sampled_estimate(variables, vec![all], UMethod::Full, n, samples, laplace, seed)
}

/// One table per independent-partition part, all from the same samples.
pub fn estimate_u_fact(
    variables: &[PathVariable],
    n: usize,
    samples: u64,
    laplace: f64,
    seed: RngSeed,
) -> Result<UEstimate> {
    let parts = independent_partition(variables).parts;
    sampled_estimate(variables, parts, UMethod::Fact, n, samples, laplace, seed)
}

/// Running counts of full configurations over sampled DAGs. Both the full and
/// the factored estimate can be read off at any point, so one stream of
/// samples serves both estimators and every prefix length.
#[derive(Clone, Debug)]
pub struct ConfigTally {
    variables: Vec<PathVariable>,
    n: usize,
    all: Vec<usize>,
    counts: HashMap<u32, u64>,
    samples: u64,
    seed: Option<RngSeed>,
}

impl ConfigTally {
    pub fn new(variables: &[PathVariable], n: usize) -> Result<Self> {
        check_nodes(variables, n)?;
        if variables.len() > crate::path::MAX_PART_VARIABLES {
            return Err(Error::TooManyVariables(variables.len()));
        }
        Ok(ConfigTally {
            variables: variables.to_vec(),
            n,
            all: (0..variables.len()).collect(),
            counts: HashMap::new(),
            samples: 0,
            seed: None,
        })
    }

    pub fn add(&mut self, dag: &Dag) {
        let closure = transitive_closure(dag);
        *self.counts.entry(code_of(&closure, &self.variables, &self.all)).or_insert(0) += 1;
        self.samples += 1;
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    fn estimate(&self, parts: Vec<Vec<usize>>, method: UMethod, laplace: f64) -> Result<UEstimate> {
        check_sampling(self.samples, laplace)?;
        let m = self.variables.len();
        let parts = parts
            .into_iter()
            .map(|part| {
                let mut marg: HashMap<u32, u64> = HashMap::new();
                for (&code, &k) in &self.counts {
                    let sub = part.iter().fold(0u32, |acc, &v| (acc << 2) | digit_of(code, v, m) as u32);
                    *marg.entry(sub).or_insert(0) += k;
                }
                smoothed_part(&self.variables, part, &marg, self.samples, laplace)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UEstimate {
            variables: self.variables.clone(),
            parts,
            n_nodes: self.n,
            method,
            samples: self.samples,
            laplace,
            seed: self.seed,
            log_n: ln_big(&count_dags(self.n)),
        })
    }

    pub fn full(&self, laplace: f64) -> Result<UEstimate> {
        self.estimate(vec![self.all.clone()], UMethod::Full, laplace)
    }

    pub fn fact(&self, laplace: f64) -> Result<UEstimate> {
        self.estimate(independent_partition(&self.variables).parts, UMethod::Fact, laplace)
    }
}

/// Tallies several variable sets over the same `samples` DAGs. The draws are
/// the ones [`estimate_u_full`] makes under the same seed.
pub fn tally_samples(sets: &[Vec<PathVariable>], n: usize, samples: u64, seed: RngSeed) -> Result<Vec<ConfigTally>> {
    let sampler = DagSampler::new(n)?;
    let fresh = sets
        .iter()
        .map(|s| ConfigTally::new(s, n))
        .collect::<Result<Vec<_>>>()?;
    let chunks = samples.div_ceil(CHUNK);
    let mut out = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.substream(c);
            let mut t = fresh.clone();
            for _ in 0..CHUNK.min(samples - c * CHUNK) {
                let g = sampler.sample(&mut rng);
                t.iter_mut().for_each(|x| x.add(&g));
            }
            t
        })
        .reduce(
            || fresh.clone(),
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    for (code, k) in y.counts {
                        *x.counts.entry(code).or_insert(0) += k;
                    }
                    x.samples += y.samples;
                }
                a
            },
        );
    out.iter_mut().for_each(|t| t.seed = Some(seed));
    Ok(out)
}

/// `U` over no path variables on `n` nodes.
pub fn empty_estimate(n: usize) -> UEstimate {
    UEstimate {
        variables: Vec::new(),
        parts: Vec::new(),
        n_nodes: n,
        method: UMethod::Exact,
        samples: 0,
        laplace: 0.0,
        seed: None,
        log_n: ln_big(&count_dags(n)),
    }
}

/// Exact joint `U` by enumerating every DAG on `n <= 6` nodes.
pub fn estimate_u_exact(variables: &[PathVariable], n: usize) -> Result<UEstimate> {
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::TooLarge {
            what: "exact U",
            n,
            max: MAX_ENUMERATION_NODES,
        });
    }
    check_nodes(variables, n)?;
    let all: Vec<usize> = (0..variables.len()).collect();
    let mut counts: HashMap<u32, u64> = HashMap::new();
    let mut total = 0u64;
    for_each_parent_masks(n, &mut |m| {
        let closure = transitive_closure(&Dag::from_parent_masks(m.to_vec()));
        *counts.entry(code_of(&closure, variables, &all)).or_insert(0) += 1;
        total += 1;
    })?;
    let part = smoothed_part(variables, all, &counts, total, 0.0)?;
    Ok(UEstimate {
        variables: variables.to_vec(),
        parts: vec![part],
        n_nodes: n,
        method: UMethod::Exact,
        samples: total,
        laplace: 0.0,
        seed: None,
        log_n: (total as f64).ln(),
    })
}

/// Exact configuration counts `N_C` on `n <= 6` nodes, keyed by 1-based index.
pub fn exact_counts(variables: &[PathVariable], n: usize) -> Result<BTreeMap<u128, u64>> {
    let u = estimate_u_exact(variables, n)?;
    let total = u.samples as f64;
    Ok(u.parts[0]
        .codes
        .iter()
        .zip(&u.parts[0].probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| (c as u128 + 1, (p * total).round() as u64))
        .collect())
}

/// `sum p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(format!("lengths {} and {}", p.len(), q.len())));
    }
    let mut d = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::SupportMismatch(format!("q is 0 where p is {a} (entry {i})")));
            }
            d += a * (a / b).ln();
        }
    }
    Ok(d)
}

/// KL divergence between two estimates over the same variables, summed over
/// the support of `p`.
pub fn kl_between(p: &UEstimate, q: &UEstimate) -> Result<f64> {
    if p.variables != q.variables {
        return Err(Error::SupportMismatch("estimates cover different variables".into()));
    }
    let (ps, qs): (Vec<f64>, Vec<f64>) = p
        .support()
        .into_iter()
        .map(|(c, x)| (x, q.prob(&c)))
        .unzip();
    kl_divergence(&ps, &qs)
}

#[derive(Serialize, Deserialize)]
struct PartFile {
    variables: Vec<usize>,
    /// 1-based part configuration index to probability, for sampled codes
    probabilities: BTreeMap<u64, f64>,
    unseen_valid: f64,
}

#[derive(Serialize, Deserialize)]
struct EstimateFile {
    method: UMethod,
    n_nodes: usize,
    samples: u64,
    laplace: f64,
    laplace_denominator: String,
    seed: Option<RngSeed>,
    variables: Vec<[usize; 2]>,
    parts: Vec<PartFile>,
}

impl UEstimate {
    pub fn to_json(&self) -> Result<String> {
        let file = EstimateFile {
            method: self.method,
            n_nodes: self.n_nodes,
            samples: self.samples,
            laplace: self.laplace,
            laplace_denominator: "valid-configurations".into(),
            seed: self.seed,
            variables: self.variables.iter().map(|v| [v.from, v.to]).collect(),
            parts: self
                .parts
                .iter()
                .map(|p| PartFile {
                    variables: p.variables.clone(),
                    probabilities: p
                        .codes
                        .iter()
                        .zip(&p.probs)
                        .filter(|(_, &x)| x != p.unseen)
                        .map(|(&c, &x)| (c as u64 + 1, x))
                        .collect(),
                    unseen_valid: p.unseen,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EstimateFile = serde_json::from_str(text)?;
        let variables = file
            .variables
            .iter()
            .map(|&[a, b]| PathVariable::new(a, b))
            .collect::<Result<Vec<_>>>()?;
        check_nodes(&variables, file.n_nodes)?;
        let mut covered = vec![false; variables.len()];
        let mut parts = Vec::new();
        for p in file.parts {
            for &k in &p.variables {
                if k >= variables.len() || covered[k] {
                    return Err(Error::Parse(format!("part variable {k} out of range or repeated")));
                }
                covered[k] = true;
            }
            let sub: Vec<PathVariable> = p.variables.iter().map(|&k| variables[k]).collect();
            let codes = valid_codes(&sub)?;
            let mut probs = vec![p.unseen_valid; codes.len()];
            for (&idx, &x) in &p.probabilities {
                let code = idx.checked_sub(1).ok_or_else(|| Error::Parse("index 0".into()))? as u32;
                let i = codes
                    .binary_search(&code)
                    .map_err(|_| Error::Parse(format!("configuration {idx} is invalid")))?;
                probs[i] = x;
            }
            let s: f64 = probs.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Parse(format!("part table sums to {s}")));
            }
            parts.push(UPart {
                variables: p.variables,
                codes,
                probs,
                unseen: p.unseen_valid,
            });
        }
        if covered.iter().any(|c| !c) {
            return Err(Error::Parse("some variables belong to no part".into()));
        }
        let log_n = if file.method == UMethod::Exact {
            (file.samples as f64).ln()
        } else {
            ln_big(&count_dags(file.n_nodes))
        };
        Ok(UEstimate {
            variables,
            parts,
            n_nodes: file.n_nodes,
            method: file.method,
            samples: file.samples,
            laplace: file.laplace,
            seed: file.seed,
            log_n,
        })
    }
}
