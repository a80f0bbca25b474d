//! JSON graph and belief files, and dataset loading.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dag::{Dag, NodeId, MAX_NODES};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::UEstimate;
use crate::path::{distribution_from_statement, BeliefDistribution, BeliefSet, PathVariable, StatementKind};
use crate::pdag::Pdag;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undirected: Option<Vec<(String, String)>>,
}

fn index_of(names: &[String], name: &str) -> Result<NodeId> {
    names
        .iter()
        .position(|x| x == name)
        .ok_or_else(|| Error::Inconsistent(format!("unknown node {name:?}")))
}

fn resolve(names: &[String], pairs: &[(String, String)]) -> Result<Vec<(NodeId, NodeId)>> {
    pairs
        .iter()
        .map(|(a, b)| Ok((index_of(names, a)?, index_of(names, b)?)))
        .collect()
}

fn named(names: &[String], pairs: impl Iterator<Item = (NodeId, NodeId)>) -> Vec<(String, String)> {
    pairs.map(|(a, b)| (names[a].clone(), names[b].clone())).collect()
}

fn check_names(names: &[String]) -> Result<()> {
    if names.len() > MAX_NODES {
        return Err(Error::TooManyNodes(names.len()));
    }
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::Parse(format!("duplicate node name {a:?}")));
        }
    }
    Ok(())
}

pub fn dag_to_json(dag: &Dag, names: &[String]) -> Result<String> {
    if names.len() != dag.n() {
        return Err(Error::SizeMismatch(names.len(), dag.n()));
    }
    let file = GraphFile {
        nodes: names.to_vec(),
        edges: named(names, dag.edges()),
        undirected: None,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Reads a graph file as a DAG; a non-empty `undirected` list is rejected.
pub fn dag_from_json(text: &str) -> Result<(Vec<String>, Dag)> {
    let file: GraphFile = serde_json::from_str(text)?;
    check_names(&file.nodes)?;
    if file.undirected.as_ref().is_some_and(|u| !u.is_empty()) {
        return Err(Error::Parse("graph has undirected edges".into()));
    }
    let dag = Dag::from_edges(file.nodes.len(), &resolve(&file.nodes, &file.edges)?)?;
    Ok((file.nodes, dag))
}

pub fn pdag_to_json(pdag: &Pdag, names: &[String]) -> Result<String> {
    if names.len() != pdag.n() {
        return Err(Error::SizeMismatch(names.len(), pdag.n()));
    }
    let file = GraphFile {
        nodes: names.to_vec(),
        edges: named(names, pdag.directed_edges()),
        undirected: Some(named(names, pdag.undirected_edges())),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn pdag_from_json(text: &str) -> Result<(Vec<String>, Pdag)> {
    let file: GraphFile = serde_json::from_str(text)?;
    check_names(&file.nodes)?;
    let undirected = file.undirected.unwrap_or_default();
    let pdag = Pdag::from_edges(
        file.nodes.len(),
        &resolve(&file.nodes, &file.edges)?,
        &resolve(&file.nodes, &undirected)?,
    )?;
    Ok((file.nodes, pdag))
}

#[derive(Deserialize)]
struct BeliefsFile {
    beliefs: Vec<RawBelief>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBelief {
    from: String,
    to: String,
    dist: Option<BeliefDistribution>,
    statement: Option<StatementKind>,
    p: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BeliefEntry {
    Dist(BeliefDistribution),
    Statement(StatementKind, f64),
}

/// Parsed beliefs file. Statement entries need the uninformative marginals,
/// so they become distributions only in [`BeliefSpec::resolve`].
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefSpec {
    pub variables: Vec<PathVariable>,
    pub entries: Vec<BeliefEntry>,
}

/// How node names in a beliefs file map to indices.
pub enum NodeNames<'a> {
    /// Names are fixed, e.g. by a dataset header.
    Fixed(&'a [String]),
    /// `n` nodes: names are taken in order of first appearance and the rest
    /// are filled with `V<i>`.
    Count(usize),
}

/// Parses a beliefs file and returns it with the node names in use.
pub fn parse_beliefs(text: &str, nodes: NodeNames) -> Result<(BeliefSpec, Vec<String>)> {
    let file: BeliefsFile = serde_json::from_str(text)?;
    let (mut names, limit, fixed) = match nodes {
        NodeNames::Fixed(n) => (n.to_vec(), n.len(), true),
        NodeNames::Count(n) => (Vec::new(), n, false),
    };
    if limit > MAX_NODES {
        return Err(Error::TooManyNodes(limit));
    }
    let mut lookup = |name: &str| -> Result<NodeId> {
        if let Some(i) = names.iter().position(|x| x == name) {
            return Ok(i);
        }
        if fixed || names.len() == limit {
            return Err(Error::Inconsistent(format!("node {name:?} is not among the {limit} nodes")));
        }
        names.push(name.to_owned());
        Ok(names.len() - 1)
    };
    let mut variables = Vec::new();
    let mut entries = Vec::new();
    for (i, b) in file.beliefs.into_iter().enumerate() {
        variables.push(PathVariable::new(lookup(&b.from)?, lookup(&b.to)?)?);
        entries.push(match (b.dist, b.statement, b.p) {
            (Some(d), None, None) => BeliefEntry::Dist(d),
            (None, Some(kind), Some(p)) => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Belief(i, format!("probability {p} outside [0, 1]")));
                }
                BeliefEntry::Statement(kind, p)
            }
            _ => return Err(Error::Belief(i, "give either \"dist\" or \"statement\" with \"p\"".into())),
        });
    }
    let mut k = 0;
    while names.len() < limit {
        let candidate = format!("V{k}");
        k += 1;
        if !names.contains(&candidate) {
            names.push(candidate);
        }
    }
    crate::path::check_distinct_pairs(&variables)?;
    Ok((BeliefSpec { variables, entries }, names))
}

impl BeliefSpec {
    pub fn resolve(&self, u: &UEstimate) -> Result<BeliefSet> {
        if u.variables != self.variables {
            return Err(Error::Inconsistent("estimate covers different path variables".into()));
        }
        let dists = self
            .entries
            .iter()
            .enumerate()
            .map(|(k, e)| match *e {
                BeliefEntry::Dist(d) => BeliefDistribution::from_array(d.as_array()),
                BeliefEntry::Statement(kind, p) => distribution_from_statement(kind, p, u.marginal(k)),
            })
            .collect::<Result<Vec<_>>>()?;
        BeliefSet::new(self.variables.clone(), dists)
    }
}

/// `<dir>/<stem>.arities.json` next to a dataset.
pub fn arity_sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.arities.json"))
}

#[derive(Serialize, Deserialize)]
struct AritiesFile {
    arities: BTreeMap<String, usize>,
}

/// Loads a dataset CSV. Arities listed in the sidecar file (if present)
/// override the inferred ones.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let data = Dataset::read_csv(fs::File::open(path)?, None)?;
    let sidecar = arity_sidecar(path);
    if !sidecar.exists() {
        return Ok(data);
    }
    let file: AritiesFile = serde_json::from_str(&fs::read_to_string(&sidecar)?)?;
    let mut arities = data.arities().to_vec();
    for (name, a) in file.arities {
        arities[index_of(data.names(), &name)?] = a;
    }
    data.with_arities(arities)
}

pub fn write_arities(path: &Path, data: &Dataset) -> Result<()> {
    let arities = data.names().iter().cloned().zip(data.arities().iter().copied()).collect();
    fs::write(arity_sidecar(path), serde_json::to_string_pretty(&AritiesFile { arities })?)?;
    Ok(())
}
