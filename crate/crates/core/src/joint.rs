//! Fitting the joint distribution `J` over configurations from marginal path
//! beliefs, and the prior score `ln(J_C / N_C)`.
//!
//! Coherent marginals are matched by iterative proportional fitting started
//! from `U`, which converges to the distribution closest to `U` in KL
//! divergence. Incoherent marginals first go through a GEMA pass: an EM
//! iteration on the mixture of per-variable projections, whose marginals are
//! the nearest coherent beliefs it finds. `J` is then the IPFP fit of `U` to
//! those adjusted marginals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::ClosureMatrix;
use crate::error::{Error, Result};
use crate::estimate::{UEstimate, UPart};
use crate::path::{code_of, digit_of, BeliefSet, Configuration, PathValue, PathVariable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Largest accepted marginal residual.
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
    /// GEMA stops once no adjusted marginal moves by more than this in one
    /// iteration.
    pub gema_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_sweeps: 10_000,
            max_outer: 1_000,
            gema_tol: 8e-5,
        }
    }
}

/// Per-code digit of each part variable.
struct Digits {
    by_var: Vec<Vec<u8>>,
}

impl Digits {
    fn new(part: &UPart) -> Self {
        let m = part.variables.len();
        Digits {
            by_var: (0..m)
                .map(|k| part.codes().iter().map(|&c| digit_of(c, k, m) as u8).collect())
                .collect(),
        }
    }

    fn marginal(&self, k: usize, table: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (&d, &p) in self.by_var[k].iter().zip(table) {
            out[d as usize] += p;
        }
        out
    }

    fn residual(&self, table: &[f64], targets: &[[f64; 4]]) -> f64 {
        (0..targets.len())
            .map(|k| {
                let m = self.marginal(k, table);
                (0..4).map(|j| (m[j] - targets[k][j]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpfpResult {
    pub table: Vec<f64>,
    pub converged: bool,
    pub residual: f64,
    pub sweeps: usize,
}

fn check_support(part: &UPart, digits: &Digits, targets: &[[f64; 4]]) -> Result<()> {
    if targets.len() != part.variables.len() {
        return Err(Error::SizeMismatch(targets.len(), part.variables.len()));
    }
    for (k, t) in targets.iter().enumerate() {
        let m = digits.marginal(k, part.probs());
        for j in 0..4 {
            if t[j] > 0.0 && m[j] <= 0.0 {
                return Err(Error::ZeroSupport {
                    var: part.variables[k],
                    value: PathValue::from_digit(j as u32),
                });
            }
        }
    }
    Ok(())
}

fn ipfp_with(
    start: &[f64],
    digits: &Digits,
    targets: &[[f64; 4]],
    tol: f64,
    max_sweeps: usize,
    stop_on_plateau: bool,
) -> IpfpResult {
    let mut table = start.to_vec();
    let mut history: Vec<f64> = Vec::new();
    let mut residual = digits.residual(&table, targets);
    let mut sweeps = 0;
    while residual > tol && sweeps < max_sweeps {
        for (k, t) in targets.iter().enumerate() {
            let m = digits.marginal(k, &table);
            let mut factor = [0.0; 4];
            for j in 0..4 {
                factor[j] = if m[j] > 0.0 { t[j] / m[j] } else { 0.0 };
            }
            for (p, &d) in table.iter_mut().zip(&digits.by_var[k]) {
                *p *= factor[d as usize];
            }
        }
        sweeps += 1;
        residual = digits.residual(&table, targets);
        history.push(residual);
        // an incoherent target set leaves the residual on a plateau
        if stop_on_plateau && sweeps >= 1000 && residual > 0.9 * history[sweeps - 501] {
            break;
        }
    }
    IpfpResult {
        table,
        converged: residual <= tol,
        residual,
        sweeps,
    }
}

/// Iterative proportional fitting of a `U` part table to per-variable
/// marginal targets (one `[f64; 4]` per part variable, in part order).
pub fn ipfp(part: &UPart, targets: &[[f64; 4]], tol: f64, max_sweeps: usize) -> Result<IpfpResult> {
    let digits = Digits::new(part);
    check_support(part, &digits, targets)?;
    Ok(ipfp_with(part.probs(), &digits, targets, tol, max_sweeps, true))
}

/// True when IPFP matches every target within `tol`.
pub fn is_coherent(part: &UPart, targets: &[[f64; 4]], tol: f64) -> bool {
    match ipfp(part, targets, tol, FitOptions::default().max_sweeps) {
        Ok(r) => r.converged,
        Err(_) => false,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GemaResult {
    pub table: Vec<f64>,
    /// Coherent marginals the table satisfies.
    pub adjusted: Vec<[f64; 4]>,
    /// `sum_k KL(input_k || adjusted_k)`.
    pub i_aggregate: f64,
    pub iterations: usize,
    pub coherent_input: bool,
    pub residual: f64,
}

fn kl4(p: &[f64; 4], q: &[f64; 4]) -> f64 {
    (0..4)
        .filter(|&j| p[j] > 0.0)
        .map(|j| if q[j] > 0.0 { p[j] * (p[j] / q[j]).ln() } else { f64::INFINITY })
        .sum()
}

/// Joint with coherent marginals as close as GEMA gets to `targets`. Coherent
/// input is fitted by IPFP directly.
pub fn gema(part: &UPart, targets: &[[f64; 4]], opts: &FitOptions) -> Result<GemaResult> {
    let digits = Digits::new(part);
    check_support(part, &digits, targets)?;
    let direct = ipfp_with(part.probs(), &digits, targets, opts.tol, opts.max_sweeps, true);
    if direct.converged {
        let adjusted = (0..targets.len()).map(|k| digits.marginal(k, &direct.table)).collect();
        return Ok(GemaResult {
            table: direct.table,
            adjusted,
            i_aggregate: 0.0,
            iterations: 0,
            coherent_input: true,
            residual: direct.residual,
        });
    }

    let m = targets.len() as f64;
    let mut p = part.probs().to_vec();
    let mut marg: Vec<[f64; 4]> = (0..targets.len()).map(|k| digits.marginal(k, &p)).collect();
    let mut iterations = 0;
    while iterations < opts.max_outer {
        let ratios: Vec<[f64; 4]> = targets
            .iter()
            .zip(&marg)
            .map(|(t, mk)| {
                let mut r = [0.0; 4];
                for j in 0..4 {
                    r[j] = if mk[j] > 0.0 { t[j] / mk[j] } else { 0.0 };
                }
                r
            })
            .collect();
        for (i, x) in p.iter_mut().enumerate() {
            let s: f64 = ratios
                .iter()
                .zip(&digits.by_var)
                .map(|(r, d)| r[d[i] as usize])
                .sum();
            *x *= s / m;
        }
        iterations += 1;
        let next: Vec<[f64; 4]> = (0..targets.len()).map(|k| digits.marginal(k, &p)).collect();
        let moved = next
            .iter()
            .zip(&marg)
            .flat_map(|(a, b)| (0..4).map(move |j| (a[j] - b[j]).abs()))
            .fold(0.0, f64::max);
        marg = next;
        if moved < opts.gema_tol {
            break;
        }
    }

    // The mixture table realises `marg`, so IPFP can only be slow here (targets
    // near the boundary). If it stops short, the marginals the fitted table
    // does realise are taken as the adjusted ones.
    let mut fit = ipfp_with(part.probs(), &digits, &marg, opts.tol, opts.max_sweeps, false);
    if !fit.converged {
        marg = (0..targets.len()).map(|k| digits.marginal(k, &fit.table)).collect();
        fit.residual = digits.residual(&fit.table, &marg);
    }
    let i_aggregate = targets.iter().zip(&marg).map(|(t, a)| kl4(t, a)).sum();
    Ok(GemaResult {
        table: fit.table,
        adjusted: marg,
        i_aggregate,
        iterations,
        coherent_input: false,
        residual: fit.residual,
    })
}

/// Fitted table for one part of the prior.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPart {
    /// Indices into the prior's variable list, in code order.
    pub variables: Vec<usize>,
    codes: Vec<u32>,
    log_probs: Vec<f64>,
    /// `ln U` per code, aligned with `codes`.
    log_u: Vec<f64>,
    pub input: Vec<[f64; 4]>,
    pub adjusted: Vec<[f64; 4]>,
    pub coherent: bool,
    pub iterations: usize,
    pub residual: f64,
    pub i_aggregate: f64,
}

impl JointPart {
    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, code: u32) -> f64 {
        match self.codes.binary_search(&code) {
            Ok(i) => self.log_probs[i],
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn log_ratio(&self, code: u32, mode: PriorMode) -> f64 {
        match self.codes.binary_search(&code) {
            Ok(i) => match mode {
                PriorMode::Full => self.log_probs[i] - self.log_u[i],
                PriorMode::DropCount => self.log_probs[i],
            },
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Whether the prior score divides by the configuration count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    #[default]
    Full,
    DropCount,
}

/// The factorised joint `J`, one table per part of the companion `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPrior {
    pub variables: Vec<PathVariable>,
    pub parts: Vec<JointPart>,
    pub u: UEstimate,
    pub options: FitOptions,
}

/// Fits every part of `u` to the beliefs on its variables; IPFP first, GEMA
/// when IPFP cannot match the input.
pub fn fit_joint(beliefs: &BeliefSet, u: &UEstimate, opts: &FitOptions) -> Result<JointPrior> {
    if beliefs.variables() != u.variables.as_slice() {
        return Err(Error::Inconsistent(
            "beliefs and U estimate cover different path variables".into(),
        ));
    }
    let dists = beliefs.dists();
    let parts = u
        .parts
        .par_iter()
        .enumerate()
        .map(|(i, part)| {
            let targets: Vec<[f64; 4]> = part.variables.iter().map(|&k| dists[k].as_array()).collect();
            fit_part(part, targets, opts).map_err(|e| Error::Part {
                part: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JointPrior {
        variables: u.variables.clone(),
        parts,
        u: u.clone(),
        options: *opts,
    })
}

fn fit_part(part: &UPart, targets: Vec<[f64; 4]>, opts: &FitOptions) -> Result<JointPart> {
    let g = gema(part, &targets, opts)?;
    if g.residual > opts.tol {
        return Err(Error::NotConverged {
            residual: g.residual,
            iterations: g.iterations,
        });
    }
    Ok(JointPart {
        variables: part.variables.clone(),
        codes: part.codes().to_vec(),
        log_probs: g.table.iter().map(|p| p.ln()).collect(),
        log_u: part.probs().iter().map(|p| p.ln()).collect(),
        input: targets,
        adjusted: g.adjusted,
        coherent: g.coherent_input,
        iterations: g.iterations,
        residual: g.residual,
        i_aggregate: g.i_aggregate,
    })
}

impl JointPrior {
    /// A prior over no path variables; it scores every graph 0.
    pub fn empty(u: &UEstimate) -> Self {
        JointPrior {
            variables: Vec::new(),
            parts: Vec::new(),
            u: u.clone(),
            options: FitOptions::default(),
        }
    }

    /// The empty prior on `n` nodes.
    pub fn none(n: usize) -> Self {
        Self::empty(&crate::estimate::empty_estimate(n))
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// `ln J_C` of a full configuration.
    pub fn log_prob(&self, config: &Configuration) -> f64 {
        self.parts
            .iter()
            .map(|p| p.log_prob(config.code(&p.variables)))
            .sum()
    }

    /// Contribution of one part to the prior score for part code `code`.
    pub fn part_score(&self, part: usize, code: u32, mode: PriorMode) -> f64 {
        self.parts[part].log_ratio(code, mode)
    }

    /// Graph-independent term of the prior score.
    pub fn constant(&self, mode: PriorMode) -> f64 {
        match mode {
            PriorMode::Full if !self.is_empty() => -self.u.log_n,
            _ => 0.0,
        }
    }

    /// Part codes of the graph summarised by `closure`.
    pub fn part_codes(&self, closure: &ClosureMatrix) -> Vec<u32> {
        self.parts
            .iter()
            .map(|p| code_of(closure, &self.variables, &p.variables))
            .collect()
    }

    /// Prior score of a graph from its closure.
    pub fn score_closure(&self, closure: &ClosureMatrix, mode: PriorMode) -> f64 {
        self.parts
            .iter()
            .map(|p| p.log_ratio(code_of(closure, &self.variables, &p.variables), mode))
            .sum::<f64>()
            + self.constant(mode)
    }

    /// Adjusted (coherent) marginal of variable `k`.
    pub fn adjusted_marginal(&self, k: usize) -> Option<[f64; 4]> {
        self.parts.iter().find_map(|p| {
            p.variables
                .iter()
                .position(|&v| v == k)
                .map(|i| p.adjusted[i])
        })
    }
}

/// `ln J_C - ln N_C`, or `ln J_C` alone in drop-count mode. Minus infinity
/// marks a configuration the prior forbids. A prior without path variables
/// scores 0.
pub fn prior_log_score(j: &JointPrior, config: &Configuration, mode: PriorMode) -> f64 {
    if j.is_empty() {
        return 0.0;
    }
    j.parts
        .iter()
        .map(|p| p.log_ratio(config.code(&p.variables), mode))
        .sum::<f64>()
        + j.constant(mode)
}

#[derive(Serialize, Deserialize)]
struct PartFile {
    variables: Vec<usize>,
    /// 1-based part configuration index to `ln J`
    log_probabilities: std::collections::BTreeMap<u64, f64>,
    input: Vec<[f64; 4]>,
    adjusted: Vec<[f64; 4]>,
    coherent: bool,
    iterations: usize,
    residual: f64,
    i_aggregate: f64,
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    variables: Vec<[usize; 2]>,
    options: FitOptions,
    parts: Vec<PartFile>,
    u: serde_json::Value,
}

impl JointPrior {
    pub fn to_json(&self) -> Result<String> {
        let file = PriorFile {
            variables: self.variables.iter().map(|v| [v.from, v.to]).collect(),
            options: self.options,
            parts: self
                .parts
                .iter()
                .map(|p| PartFile {
                    variables: p.variables.clone(),
                    log_probabilities: p
                        .codes
                        .iter()
                        .zip(&p.log_probs)
                        .filter(|(_, l)| l.is_finite())
                        .map(|(&c, &l)| (c as u64 + 1, l))
                        .collect(),
                    input: p.input.clone(),
                    adjusted: p.adjusted.clone(),
                    coherent: p.coherent,
                    iterations: p.iterations,
                    residual: p.residual,
                    i_aggregate: p.i_aggregate,
                })
                .collect(),
            u: serde_json::from_str(&self.u.to_json()?)?,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PriorFile = serde_json::from_str(text)?;
        let u = UEstimate::from_json(&file.u.to_string())?;
        let variables: Vec<PathVariable> = file
            .variables
            .iter()
            .map(|&[a, b]| PathVariable::new(a, b))
            .collect::<Result<_>>()?;
        if !variables.is_empty() && variables != u.variables {
            return Err(Error::Inconsistent("prior and U cover different variables".into()));
        }
        let mut parts = Vec::new();
        for p in file.parts {
            let up = u
                .parts
                .iter()
                .find(|q| q.variables == p.variables)
                .ok_or_else(|| Error::Parse("prior part has no matching U part".into()))?;
            let codes = up.codes().to_vec();
            let mut log_probs = vec![f64::NEG_INFINITY; codes.len()];
            for (&idx, &l) in &p.log_probabilities {
                let code = idx.checked_sub(1).ok_or_else(|| Error::Parse("index 0".into()))? as u32;
                let i = codes
                    .binary_search(&code)
                    .map_err(|_| Error::Parse(format!("configuration {idx} is invalid")))?;
                log_probs[i] = l;
            }
            parts.push(JointPart {
                variables: p.variables,
                codes,
                log_probs,
                log_u: up.probs().iter().map(|x| x.ln()).collect(),
                input: p.input,
                adjusted: p.adjusted,
                coherent: p.coherent,
                iterations: p.iterations,
                residual: p.residual,
                i_aggregate: p.i_aggregate,
            });
        }
        Ok(JointPrior {
            variables,
            parts,
            u,
            options: file.options,
        })
    }
}
