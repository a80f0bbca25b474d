//! Path variables, belief sets and configurations.
//!
//! A path variable over an ordered pair `(X, Y)` records which ancestral
//! relation holds between the two nodes in a DAG: a directed path `X => Y`,
//! one `Y => X`, a shared ancestor without either path, or none of these.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::closure::ClosureMatrix;
use crate::dag::{bit, NodeId};
use crate::error::{Error, Result};

/// Per-part limit on path variables for table enumeration.
pub const MAX_PART_VARIABLES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathValue {
    Forward,
    Backward,
    Confounded,
    NoConnection,
}

impl PathValue {
    /// Canonical digit order.
    pub const ALL: [PathValue; 4] = [
        PathValue::Forward,
        PathValue::Backward,
        PathValue::Confounded,
        PathValue::NoConnection,
    ];

    #[inline]
    pub fn digit(self) -> u32 {
        self as u32
    }

    #[inline]
    pub fn from_digit(d: u32) -> PathValue {
        PathValue::ALL[(d & 3) as usize]
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PathValue::Forward => "=>",
            PathValue::Backward => "<=",
            PathValue::Confounded => "<=>",
            PathValue::NoConnection => "-/-",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PathVariable {
    pub from: NodeId,
    pub to: NodeId,
}

impl PathVariable {
    pub fn new(from: NodeId, to: NodeId) -> Result<Self> {
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        Ok(PathVariable { from, to })
    }

    fn unordered(&self) -> (NodeId, NodeId) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

/// Probabilities over the four path values, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefDistribution {
    pub forward: f64,
    pub backward: f64,
    pub confounded: f64,
    pub none: f64,
}

impl BeliefDistribution {
    pub fn new(forward: f64, backward: f64, confounded: f64, none: f64) -> Result<Self> {
        Self::from_array([forward, backward, confounded, none])
    }

    pub fn from_array(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return Err(Error::InvalidProbability(format!("{p:?} has an entry outside [0, 1]")));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbability(format!("{p:?} sums to {s}")));
        }
        Ok(BeliefDistribution {
            forward: p[0],
            backward: p[1],
            confounded: p[2],
            none: p[3],
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.forward, self.backward, self.confounded, self.none]
    }

    pub fn prob(&self, v: PathValue) -> f64 {
        self.as_array()[v as usize]
    }
}

/// Path variables with one marginal distribution each.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefSet {
    variables: Vec<PathVariable>,
    dists: Vec<BeliefDistribution>,
}

impl BeliefSet {
    pub fn new(variables: Vec<PathVariable>, dists: Vec<BeliefDistribution>) -> Result<Self> {
        if variables.len() != dists.len() {
            return Err(Error::SizeMismatch(variables.len(), dists.len()));
        }
        check_distinct_pairs(&variables)?;
        Ok(BeliefSet { variables, dists })
    }

    pub fn empty() -> Self {
        BeliefSet {
            variables: Vec::new(),
            dists: Vec::new(),
        }
    }

    pub fn variables(&self) -> &[PathVariable] {
        &self.variables
    }

    pub fn dists(&self) -> &[BeliefDistribution] {
        &self.dists
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

pub(crate) fn check_distinct_pairs(variables: &[PathVariable]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for (i, v) in variables.iter().enumerate() {
        if v.from == v.to {
            return Err(Error::SelfLoop(v.from));
        }
        if !seen.insert(v.unordered()) {
            return Err(Error::Belief(i, "pair already has a path variable".into()));
        }
    }
    Ok(())
}

/// A joint assignment of path values, aligned with a list of path variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub values: Vec<PathValue>,
}

impl Configuration {
    pub fn new(values: Vec<PathValue>) -> Self {
        Configuration { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 1-based base-4 index; the first variable is the most significant digit.
    pub fn index(&self) -> u128 {
        self.values
            .iter()
            .fold(0u128, |acc, v| acc * 4 + v.digit() as u128)
            + 1
    }

    pub fn from_index(index: u128, len: usize) -> Self {
        let mut code = index - 1;
        let mut values = vec![PathValue::Forward; len];
        for slot in values.iter_mut().rev() {
            *slot = PathValue::from_digit((code & 3) as u32);
            code >>= 2;
        }
        Configuration { values }
    }

    /// 0-based code of the sub-configuration on `vars`.
    pub fn code(&self, vars: &[usize]) -> u32 {
        vars.iter()
            .fold(0u32, |acc, &k| (acc << 2) | self.values[k].digit())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<&str> = self.values.iter().map(|v| v.symbol()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// Digit of variable `k` (0-based, most significant first) in a part code of
/// `m` variables.
#[inline]
pub(crate) fn digit_of(code: u32, k: usize, m: usize) -> usize {
    ((code >> (2 * (m - 1 - k))) & 3) as usize
}

/// Undirected graph with one edge per path variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintGraph {
    /// Nodes appearing in some variable, ascending.
    pub nodes: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

pub fn constraint_graph(variables: &[PathVariable]) -> ConstraintGraph {
    let mut nodes: Vec<NodeId> = variables.iter().flat_map(|v| [v.from, v.to]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    ConstraintGraph {
        nodes,
        edges: variables.iter().map(|v| (v.from, v.to)).collect(),
    }
}

/// Node-disjoint groups of path-variable indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndependentPartition {
    pub parts: Vec<Vec<usize>>,
}

/// Connected components of the constraint graph. Parts are ordered by their
/// first variable; variables keep their input order inside a part.
pub fn independent_partition(variables: &[PathVariable]) -> IndependentPartition {
    let graph = constraint_graph(variables);
    let mut parent: BTreeMap<NodeId, NodeId> = graph.nodes.iter().map(|&v| (v, v)).collect();
    fn find(parent: &mut BTreeMap<NodeId, NodeId>, x: NodeId) -> NodeId {
        let p = parent[&x];
        if p == x {
            return x;
        }
        let r = find(parent, p);
        parent.insert(x, r);
        r
    }
    for &(a, b) in &graph.edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent.insert(ra.max(rb), ra.min(rb));
        }
    }
    let mut by_root: Vec<(NodeId, Vec<usize>)> = Vec::new();
    for (k, v) in variables.iter().enumerate() {
        let root = find(&mut parent, v.from);
        match by_root.iter_mut().find(|(r, _)| *r == root) {
            Some((_, part)) => part.push(k),
            None => by_root.push((root, vec![k])),
        }
    }
    IndependentPartition {
        parts: by_root.into_iter().map(|(_, p)| p).collect(),
    }
}

/// Path value of `var` in the graph summarised by `closure`.
#[inline]
pub fn value_of(closure: &ClosureMatrix, var: &PathVariable) -> PathValue {
    if closure.reaches(var.from, var.to) {
        PathValue::Forward
    } else if closure.reaches(var.to, var.from) {
        PathValue::Backward
    } else if closure.share_ancestor(var.from, var.to) {
        PathValue::Confounded
    } else {
        PathValue::NoConnection
    }
}

/// The configuration a DAG induces on `variables`, read off its closure.
pub fn configuration_of(closure: &ClosureMatrix, variables: &[PathVariable]) -> Configuration {
    Configuration {
        values: variables.iter().map(|v| value_of(closure, v)).collect(),
    }
}

/// Code of the sub-configuration on `vars` read directly from a closure.
#[inline]
pub(crate) fn code_of(closure: &ClosureMatrix, variables: &[PathVariable], vars: &[usize]) -> u32 {
    vars.iter()
        .fold(0u32, |acc, &k| (acc << 2) | value_of(closure, &variables[k]).digit())
}

/// Minimal witness graph for a (partial) configuration: one edge per directed
/// value, one fresh latent parent per confounded value. Cycles are allowed so
/// that contradictions show up as implied relations.
#[derive(Clone)]
struct Witness {
    /// compact node index per variable endpoint
    ends: Vec<(usize, usize)>,
    latent_base: usize,
    desc: Vec<u64>,
}

impl Witness {
    fn new(variables: &[PathVariable]) -> Self {
        let graph = constraint_graph(variables);
        let index = |v: NodeId| graph.nodes.binary_search(&v).unwrap();
        let ends: Vec<(usize, usize)> = variables.iter().map(|v| (index(v.from), index(v.to))).collect();
        let latent_base = graph.nodes.len();
        Witness {
            ends,
            latent_base,
            desc: vec![0; latent_base + variables.len()],
        }
    }

    fn insert(&mut self, a: usize, b: usize) {
        let gained = bit(b) | self.desc[b];
        for x in 0..self.desc.len() {
            if x == a || self.desc[x] & bit(a) != 0 {
                self.desc[x] |= gained;
            }
        }
    }

    fn assign(&mut self, k: usize, v: PathValue) {
        let (x, y) = self.ends[k];
        match v {
            PathValue::Forward => self.insert(x, y),
            PathValue::Backward => self.insert(y, x),
            PathValue::Confounded => {
                let h = self.latent_base + k;
                self.insert(h, x);
                self.insert(h, y);
            }
            PathValue::NoConnection => {}
        }
    }

    /// Whether the declared value of variable `k` contradicts what the
    /// witness implies.
    fn contradicts(&self, k: usize, v: PathValue) -> bool {
        let (x, y) = self.ends[k];
        let fwd = self.desc[x] & bit(y) != 0;
        let bwd = self.desc[y] & bit(x) != 0;
        match v {
            PathValue::Forward => bwd,
            PathValue::Backward => fwd,
            PathValue::Confounded => fwd || bwd,
            PathValue::NoConnection => {
                fwd || bwd || {
                    let both = bit(x) | bit(y);
                    self.desc.iter().any(|&d| d & both == both)
                }
            }
        }
    }
}

/// Validity through the latent-witness construction: `C` is invalid iff one
/// declared value contradicts a relation implied by the others (a directed
/// value against the reverse path, a confounded value against any path, no
/// connection against any path or shared ancestor).
pub fn is_valid(config: &Configuration, variables: &[PathVariable]) -> bool {
    assert_eq!(config.len(), variables.len());
    let mut w = Witness::new(variables);
    for (k, &v) in config.values.iter().enumerate() {
        w.assign(k, v);
    }
    config
        .values
        .iter()
        .enumerate()
        .all(|(k, &v)| !w.contradicts(k, v))
}

/// Codes (0-based, canonical order) of all valid configurations of `variables`.
pub(crate) fn valid_codes(variables: &[PathVariable]) -> Result<Vec<u32>> {
    if variables.len() > MAX_PART_VARIABLES {
        return Err(Error::TooManyVariables(variables.len()));
    }
    let mut out = Vec::new();
    let mut values = Vec::with_capacity(variables.len());
    extend_valid(&Witness::new(variables), &mut values, 0, &mut out);
    Ok(out)
}

// Contradictions only accumulate as more values are fixed, so invalid
// prefixes are pruned.
fn extend_valid(w: &Witness, values: &mut Vec<PathValue>, code: u32, out: &mut Vec<u32>) {
    let k = values.len();
    if k == w.ends.len() {
        out.push(code);
        return;
    }
    for v in PathValue::ALL {
        let mut next = w.clone();
        next.assign(k, v);
        values.push(v);
        if values.iter().enumerate().all(|(i, &vi)| !next.contradicts(i, vi)) {
            extend_valid(&next, values, (code << 2) | v.digit(), out);
        }
        values.pop();
    }
}

/// Valid configurations of `variables` in canonical index order.
pub fn enumerate_valid_configurations(variables: &[PathVariable]) -> Result<Vec<Configuration>> {
    let m = variables.len();
    Ok(valid_codes(variables)?
        .into_iter()
        .map(|c| Configuration::from_index(c as u128 + 1, m))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatementKind {
    Causes,
    NotCauses,
    Associated,
    NotAssociated,
}

impl StatementKind {
    /// Path values the statement asserts.
    pub fn values(self) -> &'static [PathValue] {
        use PathValue::*;
        match self {
            StatementKind::Causes => &[Forward],
            StatementKind::NotCauses => &[Backward, Confounded, NoConnection],
            StatementKind::Associated => &[Forward, Backward, Confounded],
            StatementKind::NotAssociated => &[NoConnection],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeliefStatement {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: StatementKind,
    pub p: f64,
}

/// Puts mass `p` on the asserted values and `1 - p` on the rest, splitting each
/// side in proportion to `reference` (the uninformative marginal).
pub fn distribution_from_statement(
    kind: StatementKind,
    p: f64,
    reference: [f64; 4],
) -> Result<BeliefDistribution> {
    distribution_on(kind.values(), p, reference)
}

/// Mass `p` on `values` and `1 - p` on the other path values, each side split
/// in proportion to `reference`.
pub fn distribution_on(values: &[PathValue], p: f64, reference: [f64; 4]) -> Result<BeliefDistribution> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidProbability(format!("statement probability {p}")));
    }
    let mut out = [0.0; 4];
    let mut spread = |mass: f64, set: &[usize]| {
        let total: f64 = set.iter().map(|&i| reference[i]).sum();
        for &i in set {
            out[i] = if total > 0.0 {
                mass * reference[i] / total
            } else {
                mass / set.len() as f64
            };
        }
    };
    let ins: Vec<usize> = values.iter().map(|v| *v as usize).collect();
    let outs: Vec<usize> = (0..4).filter(|i| !ins.contains(i)).collect();
    spread(p, &ins);
    spread(1.0 - p, &outs);
    // renormalise rounding
    let s: f64 = out.iter().sum();
    for x in out.iter_mut() {
        *x /= s;
    }
    BeliefDistribution::from_array(out)
}

/// Belief set from statements; `reference[i]` is the uninformative marginal of
/// statement `i`'s path variable.
pub fn beliefs_from_statements(
    statements: &[BeliefStatement],
    reference: &[[f64; 4]],
) -> Result<BeliefSet> {
    if statements.len() != reference.len() {
        return Err(Error::SizeMismatch(statements.len(), reference.len()));
    }
    let mut vars = Vec::with_capacity(statements.len());
    let mut dists = Vec::with_capacity(statements.len());
    for (s, r) in statements.iter().zip(reference) {
        vars.push(PathVariable::new(s.from, s.to)?);
        dists.push(distribution_from_statement(s.kind, s.p, *r)?);
    }
    BeliefSet::new(vars, dists)
}
