use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use bnpp::closure::transitive_closure;
use bnpp::dag::Dag;
use bnpp::data::Dataset;
use bnpp::error::Error;
use bnpp::estimate::{estimate_u_exact, estimate_u_fact, estimate_u_full, UEstimate};
use bnpp::experiment::{
    chain_experiment, collider_experiment, fact_vs_full_experiment, large_experiment, small_n_experiment,
    ExperimentReport, FactVsFullParams, LargeParams, SmallNParams, ThreeNodeParams,
};
use bnpp::io::{dag_from_json, dag_to_json, load_dataset, parse_beliefs, pdag_to_json, write_arities, GraphFile, NodeNames};
use bnpp::joint::{fit_joint, FitOptions, JointPrior};
use bnpp::network::{forward_sample, synthetic_network, CategoricalBn};
use bnpp::pdag::{shd, to_pdag, PairStatus, Pdag};
use bnpp::rng::RngSeed;
use bnpp::sampler::DagSampler;
use bnpp::score::{PriorKind, ScoreCache, ScoreConfig};
use bnpp::search::{exhaustive_search, greedy_search, SearchOptions, SearchState};

#[derive(Parser)]
#[command(name = "bnpp", version, about = "Bayesian network structure learning with path-belief priors")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn a network from data, optionally with path beliefs.
    Learn(LearnArgs),
    /// Fit the joint prior for a beliefs file and report coherence.
    Priors(PriorsArgs),
    /// Score a given graph against data.
    Score(ScoreArgs),
    /// Sample a dataset from a network file.
    Simulate(SimulateArgs),
    /// Sample DAGs uniformly at random.
    SampleDags(SampleDagsArgs),
    /// Compare a learned graph with the true one.
    Evaluate(EvaluateArgs),
    /// Run a replicated experiment.
    Experiment(ExperimentArgs),
    /// Write a random synthetic network.
    GenerateNetwork(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Full,
    Fact,
    Exact,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Operator {
    Standard,
    Swap,
}

#[derive(Args)]
struct PriorArgs {
    /// Path beliefs JSON.
    #[arg(long)]
    beliefs: Option<PathBuf>,
    /// DAGs sampled to estimate U.
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    /// Laplace correction l.
    #[arg(long, default_value_t = f64::EPSILON)]
    laplace: f64,
    #[arg(long, value_enum, default_value_t = Method::Fact)]
    method: Method,
    /// Score with ln J only, without the -ln N_C term.
    #[arg(long)]
    drop_count_factor: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LearnArgs {
    /// Dataset CSV (arities from <stem>.arities.json when present).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    /// BDeu equivalent sample size.
    #[arg(long, default_value_t = 1.0)]
    ess: f64,
    #[arg(long, value_enum, default_value_t = Operator::Standard)]
    operator: Operator,
    /// Ignore beliefs and use a uniform structure prior.
    #[arg(long)]
    uniform_prior: bool,
    /// Score every DAG instead of hill climbing (at most 6 variables).
    #[arg(long)]
    exhaustive: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PriorsArgs {
    #[command(flatten)]
    prior: PriorArgs,
    /// Number of nodes; names come from the beliefs file, then V0, V1, ...
    #[arg(long, required_unless_present = "data")]
    nodes: Option<usize>,
    /// Take node names from this dataset's header instead of --nodes.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    data: PathBuf,
    /// Graph JSON.
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 1.0)]
    ess: f64,
    #[arg(long)]
    uniform_prior: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Network JSON.
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; arities go to <stem>.arities.json beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleDagsArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file, one JSON edge list per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Learned graph or PDAG JSON.
    #[arg(long)]
    graph: PathBuf,
    /// True network JSON or graph JSON.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Chain,
    Collider,
    FactVsFull,
    SmallNApprox,
    Large,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// DAGs sampled for U (fact-vs-full, large).
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    laplace: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    ess: f64,
    /// Sample sizes (rows, or DAG samples for small-n-approx), comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<u64>>,
    /// Node counts, comma separated (fact-vs-full, small-n-approx).
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    /// Network JSON (large).
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    nc: usize,
    #[arg(long, default_value_t = 4)]
    cs: usize,
    /// Require coherent generated beliefs (large); incoherent by default.
    #[arg(long)]
    coherent: bool,
    #[arg(long, default_value_t = 1000)]
    max_retries: usize,
    /// Replications and U sample sizes of the original study (slow).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// An error with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Part { source, .. } => exit_code(source),
        Error::Inconsistent(_)
        | Error::SizeMismatch(..)
        | Error::NodeOutOfRange { .. }
        | Error::Arity(_)
        | Error::TooManyNodes(_)
        | Error::TooLarge { .. } => 3,
        Error::ZeroSupport { .. } | Error::NotConverged { .. } | Error::TooManyVariables(_) => 4,
        Error::CoherenceUnreachable(_) => 5,
        _ => 2,
    }
}

type Res<T> = Result<T, Failure>;

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    fs::write(path, text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn estimate(args: &PriorArgs, spec_vars: &[bnpp::path::PathVariable], n: usize) -> Res<UEstimate> {
    let seed = RngSeed::new(args.seed, 0);
    Ok(match args.method {
        Method::Full => estimate_u_full(spec_vars, n, args.samples, args.laplace, seed)?,
        Method::Fact => estimate_u_fact(spec_vars, n, args.samples, args.laplace, seed)?,
        Method::Exact => estimate_u_exact(spec_vars, n)?,
    })
}

/// Fits the prior described by `args` over nodes named `names`.
fn build_prior(args: &PriorArgs, nodes: NodeNames) -> Res<(JointPrior, Vec<String>)> {
    let Some(path) = &args.beliefs else {
        let n = match nodes {
            NodeNames::Fixed(v) => v.len(),
            NodeNames::Count(n) => n,
        };
        let names = match nodes {
            NodeNames::Fixed(v) => v.to_vec(),
            NodeNames::Count(n) => (0..n).map(|i| format!("V{i}")).collect(),
        };
        return Ok((JointPrior::none(n), names));
    };
    let (spec, names) = parse_beliefs(&read(path)?, nodes)?;
    let u = estimate(args, &spec.variables, names.len())?;
    let beliefs = spec.resolve(&u)?;
    Ok((fit_joint(&beliefs, &u, &FitOptions::default())?, names))
}

fn score_config(ess: f64, uniform: bool, args: &PriorArgs) -> ScoreConfig {
    ScoreConfig {
        ess,
        prior: if uniform || args.beliefs.is_none() {
            PriorKind::Uniform
        } else {
            PriorKind::Informative
        },
        drop_count_factor: args.drop_count_factor,
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Full => "full",
        Method::Fact => "fact",
        Method::Exact => "exact",
    }
}

fn learn(a: LearnArgs) -> Res<()> {
    let data = load_dataset(&a.data)?;
    let names = data.names().to_vec();
    let n = data.n_vars();
    let prior = if a.uniform_prior {
        JointPrior::none(n)
    } else {
        build_prior(&a.prior, NodeNames::Fixed(&names))?.0
    };
    let cfg = score_config(a.ess, a.uniform_prior, &a.prior);
    let cache = ScoreCache::new(Arc::new(data), a.ess)?;
    let (state, trace) = if a.exhaustive {
        (exhaustive_search(&cache, &prior, &cfg)?.0, Vec::new())
    } else {
        let opts = SearchOptions {
            swap: a.operator == Operator::Swap,
            ..Default::default()
        };
        let r = greedy_search(Dag::empty(n)?, &cache, &prior, &cfg, &opts)?;
        (r.state, r.trace)
    };
    write(&a.out.join("graph.json"), &dag_to_json(&state.dag, &names)?)?;
    write(&a.out.join("pdag.json"), &pdag_to_json(&to_pdag(&state.dag), &names)?)?;
    let mut lines = String::new();
    for t in &trace {
        lines.push_str(&serde_json::to_string(t).map_err(Error::from)?);
        lines.push('\n');
    }
    write(&a.out.join("trace.jsonl"), &lines)?;
    let informative = cfg.prior == PriorKind::Informative;
    if informative {
        write(&a.out.join("prior.json"), &prior.to_json()?)?;
    }
    let provenance = json!({
        "command": "learn",
        "data": a.data,
        "beliefs": if informative { a.prior.beliefs.clone() } else { None },
        "seed": a.prior.seed,
        "samples": a.prior.samples,
        "laplace": a.prior.laplace,
        "method": method_name(a.prior.method),
        "ess": a.ess,
        "operator": if a.operator == Operator::Swap { "swap" } else { "standard" },
        "uniform_prior": !informative,
        "exhaustive": a.exhaustive,
        "drop_count_factor": a.prior.drop_count_factor,
        "data_score": state.data_score,
        "prior_score": state.prior_score,
        "steps": trace.len(),
    });
    write(&a.out.join("provenance.json"), &to_pretty(&provenance)?)?;
    Ok(())
}

fn to_pretty(v: &serde_json::Value) -> Res<String> {
    Ok(serde_json::to_string_pretty(v).map_err(Error::from)?)
}

fn priors(a: PriorsArgs) -> Res<()> {
    if a.prior.beliefs.is_none() {
        return Err(Failure {
            code: 2,
            message: "--beliefs is required".into(),
        });
    }
    let header;
    let nodes = match (&a.data, a.nodes) {
        (Some(d), _) => {
            header = Dataset::read_csv(fs::File::open(d).map_err(Error::from)?, None)?.names().to_vec();
            NodeNames::Fixed(&header)
        }
        (None, Some(n)) => NodeNames::Count(n),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let (prior, names) = build_prior(&a.prior, nodes)?;
    let variables: Vec<_> = prior
        .variables
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let part = prior.parts.iter().find(|p| p.variables.contains(&k)).expect("covered");
            let i = part.variables.iter().position(|&x| x == k).expect("covered");
            json!({
                "from": names[v.from],
                "to": names[v.to],
                "input": part.input[i],
                "adjusted": part.adjusted[i],
            })
        })
        .collect();
    let parts: Vec<_> = prior
        .parts
        .iter()
        .map(|p| {
            json!({
                "variables": p.variables,
                "coherent": p.coherent,
                "iterations": p.iterations,
                "residual": p.residual,
                "i_aggregate": p.i_aggregate,
            })
        })
        .collect();
    let report = json!({
        "nodes": names,
        "variables": variables,
        "parts": parts,
        "i_aggregate": prior.parts.iter().map(|p| p.i_aggregate).sum::<f64>(),
    });
    let text = to_pretty(&report)?;
    write(&a.out.join("prior.json"), &prior.to_json()?)?;
    write(&a.out.join("coherence.json"), &text)?;
    println!("{text}");
    Ok(())
}

/// Reorders a graph over `names` into the node order `target`.
fn align(names: &[String], dag: &Dag, target: &[String]) -> Res<Dag> {
    if names.len() != target.len() || names.iter().any(|x| !target.contains(x)) {
        return Err(Failure {
            code: 3,
            message: format!("node sets differ: {names:?} vs {target:?}"),
        });
    }
    let pos = |i: usize| target.iter().position(|t| *t == names[i]).expect("checked");
    let edges: Vec<_> = dag.edges().map(|(u, v)| (pos(u), pos(v))).collect();
    Ok(Dag::from_edges(target.len(), &edges)?)
}

fn score(a: ScoreArgs) -> Res<()> {
    let data = load_dataset(&a.data)?;
    let names = data.names().to_vec();
    let (gnames, g) = dag_from_json(&read(&a.graph)?)?;
    let dag = align(&gnames, &g, &names)?;
    let prior = if a.uniform_prior {
        JointPrior::none(names.len())
    } else {
        build_prior(&a.prior, NodeNames::Fixed(&names))?.0
    };
    let cfg = score_config(a.ess, a.uniform_prior, &a.prior);
    let cache = ScoreCache::new(Arc::new(data), a.ess)?;
    let s = SearchState::new(dag, &cache, &prior, &cfg)?;
    let configuration: Vec<u64> = prior
        .part_codes(&transitive_closure(&s.dag))
        .into_iter()
        .map(|c| c as u64 + 1)
        .collect();
    let out = json!({
        "data_score": s.data_score,
        "prior_score": s.prior_score,
        "total": s.total(),
        "configuration": configuration,
    });
    println!("{}", to_pretty(&out)?);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Res<()> {
    let bn = CategoricalBn::from_json(&read(&a.network)?)?;
    let data = forward_sample(&bn, a.rows, &mut RngSeed::new(a.seed, 0).rng())?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write(&a.out, &String::from_utf8_lossy(&buf))?;
    write_arities(&a.out, &data)?;
    Ok(())
}

fn sample_dags(a: SampleDagsArgs) -> Res<()> {
    let sampler = DagSampler::new(a.nodes)?;
    let mut rng = RngSeed::new(a.seed, 0).rng();
    let mut out = String::new();
    for _ in 0..a.count {
        let g = sampler.sample(&mut rng);
        let edges: Vec<(usize, usize)> = g.edges().collect();
        out.push_str(&serde_json::to_string(&edges).map_err(Error::from)?);
        out.push('\n');
    }
    write(&a.out, &out)
}

/// Reads a graph or PDAG file, or the structure of a network file, as an
/// essential graph.
fn read_pdag(path: &Path) -> Res<(Vec<String>, Pdag)> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    if value.get("variables").is_some() {
        let bn = CategoricalBn::from_json(&text)?;
        return Ok((bn.names().to_vec(), to_pdag(bn.dag())));
    }
    let file: GraphFile = serde_json::from_value(value).map_err(Error::from)?;
    if file.undirected.as_ref().is_some_and(|u| !u.is_empty()) {
        let (names, p) = bnpp::io::pdag_from_json(&text)?;
        return Ok((names, p));
    }
    let (names, dag) = dag_from_json(&text)?;
    Ok((names, to_pdag(&dag)))
}

fn evaluate(a: EvaluateArgs) -> Res<()> {
    let (ln, learned) = read_pdag(&a.graph)?;
    let (tn, truth) = read_pdag(&a.truth)?;
    if ln.len() != tn.len() || ln.iter().any(|x| !tn.contains(x)) {
        return Err(Failure {
            code: 3,
            message: format!("node sets differ: {ln:?} vs {tn:?}"),
        });
    }
    let pos: Vec<usize> = ln.iter().map(|x| tn.iter().position(|t| t == x).expect("checked")).collect();
    // learned graph in the truth's node order
    let mut directed = Vec::new();
    for (u, v) in learned.directed_edges() {
        directed.push((pos[u], pos[v]));
    }
    let undirected: Vec<_> = learned.undirected_edges().map(|(u, v)| (pos[u], pos[v])).collect();
    let learned = Pdag::from_edges(tn.len(), &directed, &undirected)?;
    let (mut extra, mut missing, mut misoriented) = (0, 0, 0);
    for x in 0..tn.len() {
        for y in (x + 1)..tn.len() {
            match (truth.status(x, y), learned.status(x, y)) {
                (t, l) if t == l => {}
                (PairStatus::Absent, _) => extra += 1,
                (_, PairStatus::Absent) => missing += 1,
                _ => misoriented += 1,
            }
        }
    }
    let out = json!({
        "shd": shd(&learned, &truth)?,
        "extra": extra,
        "missing": missing,
        "misoriented": misoriented,
    });
    println!("{}", to_pretty(&out)?);
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Res<()> {
    let report: ExperimentReport = match a.name {
        ExperimentName::Chain | ExperimentName::Collider => {
            let mut p = ThreeNodeParams {
                seed: a.seed,
                ess: a.ess,
                ..Default::default()
            };
            if a.full_scale {
                p.reps = 10_000;
            }
            if let Some(r) = a.reps {
                p.reps = r;
            }
            if let Some(s) = &a.sizes {
                p.sizes = s.iter().map(|&x| x as usize).collect();
                p.rows = p.sizes.iter().copied().max().unwrap_or(0);
            }
            match a.name {
                ExperimentName::Chain => chain_experiment(&p)?,
                _ => collider_experiment(&p)?,
            }
        }
        ExperimentName::FactVsFull => {
            let mut p = FactVsFullParams {
                seed: a.seed,
                ..Default::default()
            };
            if a.full_scale {
                p.samples = 1_000_000;
            }
            if let Some(s) = a.samples {
                p.samples = s;
            }
            if let Some(l) = a.laplace {
                p.laplace = l;
            }
            if let Some(n) = &a.nodes {
                p.nodes = n.clone();
            }
            if let Some(r) = a.reps {
                p.reps = r;
            }
            fact_vs_full_experiment(&p)?
        }
        ExperimentName::SmallNApprox => {
            let mut p = SmallNParams {
                seed: a.seed,
                ..Default::default()
            };
            if let Some(s) = &a.sizes {
                p.samples = s.clone();
            }
            if let Some(l) = a.laplace {
                p.laplace = l;
            }
            if let Some(n) = &a.nodes {
                p.nodes = n.clone();
            }
            if let Some(r) = a.reps {
                p.reps = r;
            }
            small_n_experiment(&p)?
        }
        ExperimentName::Large => {
            let Some(path) = &a.network else {
                return Err(Failure {
                    code: 2,
                    message: "large needs --network".into(),
                });
            };
            let mut p = LargeParams::new(CategoricalBn::from_json(&read(path)?)?);
            p.seed = a.seed;
            p.nc = a.nc;
            p.cs = a.cs;
            p.coherent = a.coherent;
            p.ess = a.ess;
            p.max_retries = a.max_retries;
            if a.full_scale {
                p.samples = 1_000_000;
                p.reps = 100;
            }
            if let Some(s) = a.samples {
                p.samples = s;
            }
            if let Some(l) = a.laplace {
                p.laplace = l;
            }
            if let Some(s) = &a.sizes {
                p.sizes = s.iter().map(|&x| x as usize).collect();
            }
            if let Some(r) = a.reps {
                p.reps = r;
            }
            large_experiment(&p)?
        }
    };
    let stem = &report.experiment;
    write(&a.out.join(format!("{stem}_report.csv")), &report.report_csv()?)?;
    write(&a.out.join(format!("{stem}_records.csv")), &report.records_csv()?)?;
    write(&a.out.join(format!("{stem}_provenance.json")), &report.provenance_json()?)?;
    Ok(())
}

fn generate(a: GenerateArgs) -> Res<()> {
    let bn = synthetic_network(a.nodes, &mut RngSeed::new(a.seed, 0).rng())?;
    write(&a.out, &bn.to_json()?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Learn(a) => learn(a),
        Cmd::Priors(a) => priors(a),
        Cmd::Score(a) => score(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::SampleDags(a) => sample_dags(a),
        Cmd::Evaluate(a) => evaluate(a),
        Cmd::Experiment(a) => experiment(a),
        Cmd::GenerateNetwork(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bnpp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
