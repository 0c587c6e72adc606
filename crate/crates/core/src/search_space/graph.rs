use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::space::{SearchSpaceDef, Template};
use crate::{Error, Result};

/// A cell: a DAG whose nodes carry operation ids.
///
/// Node 0 is the input and node `num_nodes - 1` the output; nodes are stored in
/// the order they were given and that order is part of the identity (no
/// isomorphism canonization).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellGraph {
    num_nodes: usize,
    adjacency: Vec<bool>,
    node_ops: Vec<usize>,
}

impl CellGraph {
    pub fn new(num_nodes: usize, adjacency: Vec<bool>, node_ops: Vec<usize>) -> Result<Self> {
        if adjacency.len() != num_nodes * num_nodes {
            return Err(Error::Dimension(format!(
                "adjacency has {} entries, expected {}",
                adjacency.len(),
                num_nodes * num_nodes
            )));
        }
        if node_ops.len() != num_nodes {
            return Err(Error::Dimension(format!(
                "{} node ops for {num_nodes} nodes",
                node_ops.len()
            )));
        }
        Ok(CellGraph {
            num_nodes,
            adjacency,
            node_ops,
        })
    }

    pub fn from_matrix(adjacency: &[Vec<u8>], node_ops: Vec<usize>) -> Result<Self> {
        let n = adjacency.len();
        if adjacency.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension("adjacency matrix is not square".into()));
        }
        if adjacency.iter().flatten().any(|&b| b > 1) {
            return Err(Error::Dimension("adjacency entries must be 0 or 1".into()));
        }
        let flat = adjacency.iter().flatten().map(|&b| b == 1).collect();
        CellGraph::new(n, flat, node_ops)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn node_ops(&self) -> &[usize] {
        &self.node_ops
    }

    /// Ops of the internal nodes, i.e. everything but input and output.
    pub fn internal_ops(&self) -> &[usize] {
        if self.num_nodes < 2 {
            return &[];
        }
        &self.node_ops[1..self.num_nodes - 1]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.num_nodes + to]
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    pub fn matrix(&self) -> Vec<Vec<u8>> {
        self.adjacency
            .chunks(self.num_nodes.max(1))
            .take(self.num_nodes)
            .map(|row| row.iter().map(|&e| u8::from(e)).collect())
            .collect()
    }

    /// Serialized form used for hashing: node count, node ops, then the
    /// adjacency rows as bit strings.
    pub fn serialize_canonical(&self) -> String {
        let ops: Vec<String> = self.node_ops.iter().map(|o| o.to_string()).collect();
        let rows: Vec<String> = self
            .adjacency
            .chunks(self.num_nodes.max(1))
            .take(self.num_nodes)
            .map(|row| row.iter().map(|&e| if e { '1' } else { '0' }).collect())
            .collect();
        format!(
            "cell/v1;n={};ops={};adj={}",
            self.num_nodes,
            ops.join(","),
            rows.join("/")
        )
    }

    /// SHA-256 of [`serialize_canonical`](Self::serialize_canonical), as 64
    /// lowercase hex characters.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.serialize_canonical().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn canonical_digest(cell: &CellGraph) -> String {
    cell.digest()
}

#[derive(Serialize, Deserialize)]
struct CellRepr {
    adjacency: Vec<Vec<u8>>,
    node_ops: Vec<usize>,
}

impl Serialize for CellGraph {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CellRepr {
            adjacency: self.matrix(),
            node_ops: self.node_ops.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellGraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CellRepr::deserialize(d)?;
        CellGraph::from_matrix(&repr.adjacency, repr.node_ops).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewNodes(usize),
    Acyclicity,
    Sources(Vec<usize>),
    Sinks(Vec<usize>),
    OffPath(usize),
    InputOp,
    OutputOp,
    UnknownOp { node: usize, op: usize },
    OpMembership { node: usize, op: usize },
    TemplateMismatch(String),
    Limits(String),
}

impl Violation {
    /// Stable category name.
    pub fn key(&self) -> &'static str {
        match self {
            Violation::TooFewNodes(_) => "node count",
            Violation::Acyclicity => "acyclicity",
            Violation::Sources(_) => "single input",
            Violation::Sinks(_) => "single output",
            Violation::OffPath(_) => "path coverage",
            Violation::InputOp => "input op",
            Violation::OutputOp => "output op",
            Violation::UnknownOp { .. } => "unknown op",
            Violation::OpMembership { .. } => "op membership",
            Violation::TemplateMismatch(_) => "template",
            Violation::Limits(_) => "limits",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewNodes(n) => write!(f, "node count: {n} < 2"),
            Violation::Acyclicity => write!(f, "acyclicity: graph contains a cycle"),
            Violation::Sources(v) => {
                write!(f, "single input: in-degree-0 nodes {v:?}, expected [0]")
            }
            Violation::Sinks(v) => write!(
                f,
                "single output: out-degree-0 nodes {v:?}, expected the last node"
            ),
            Violation::OffPath(n) => {
                write!(f, "path coverage: node {n} is not on an input->output path")
            }
            Violation::InputOp => write!(f, "input op: node 0 must carry the input operation"),
            Violation::OutputOp => {
                write!(f, "output op: last node must carry the output operation")
            }
            Violation::UnknownOp { node, op } => {
                write!(f, "unknown op: node {node} has op id {op}")
            }
            Violation::OpMembership { node, op } => {
                write!(
                    f,
                    "op membership: node {node} uses op {op} outside the allowed set"
                )
            }
            Violation::TemplateMismatch(d) => write!(f, "template: {d}"),
            Violation::Limits(d) => write!(f, "limits: {d}"),
        }
    }
}

/// Checks that depend only on the adjacency: acyclicity, a single source at
/// node 0, a single sink at the last node, and every node on a source-sink
/// path.
pub(crate) fn structural_violations(n: usize, adjacency: &[bool]) -> Vec<Violation> {
    let mut out = Vec::new();
    if n < 2 {
        out.push(Violation::TooFewNodes(n));
        return out;
    }
    let edge = |i: usize, j: usize| adjacency[i * n + j];

    let mut indeg: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| edge(i, j)).count())
        .collect();
    let outdeg: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| edge(i, j)).count())
        .collect();

    let mut queue: VecDeque<usize> = (0..n).filter(|&j| indeg[j] == 0).collect();
    let mut visited = 0;
    while let Some(i) = queue.pop_front() {
        visited += 1;
        for j in 0..n {
            if edge(i, j) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    queue.push_back(j);
                }
            }
        }
    }
    if visited != n {
        out.push(Violation::Acyclicity);
    }

    let sources: Vec<usize> = (0..n).filter(|&j| (0..n).all(|i| !edge(i, j))).collect();
    if sources != [0] {
        out.push(Violation::Sources(sources));
    }
    let sinks: Vec<usize> = (0..n).filter(|&i| outdeg[i] == 0).collect();
    if sinks != [n - 1] {
        out.push(Violation::Sinks(sinks));
    }

    let reach = |start: usize, forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let e = if forward { edge(i, j) } else { edge(j, i) };
                if e && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    let from_input = reach(0, true);
    let to_output = reach(n - 1, false);
    for node in 1..n - 1 {
        if !(from_input[node] && to_output[node]) {
            out.push(Violation::OffPath(node));
        }
    }
    out
}

/// Every violated cell invariant; empty means the cell is valid in `space`.
pub fn validate(cell: &CellGraph, space: &SearchSpaceDef) -> Vec<Violation> {
    let n = cell.num_nodes;
    let mut out = structural_violations(n, &cell.adjacency);
    if n < 2 {
        return out;
    }
    let vocab = space.vocab();
    if cell.node_ops[0] != vocab.input_id() {
        out.push(Violation::InputOp);
    }
    if cell.node_ops[n - 1] != vocab.output_id() {
        out.push(Violation::OutputOp);
    }
    for (offset, &op) in cell.internal_ops().iter().enumerate() {
        let node = offset + 1;
        if vocab.get(op).is_none() {
            out.push(Violation::UnknownOp { node, op });
        } else if !space.allowed_ops().contains(&op) {
            out.push(Violation::OpMembership { node, op });
        }
    }
    match space.template() {
        Template::Slots { slots, adjacency } => {
            if n != slots + 2 {
                out.push(Violation::TemplateMismatch(format!(
                    "{n} nodes, template has {}",
                    slots + 2
                )));
            } else {
                let same = adjacency
                    .iter()
                    .flatten()
                    .zip(&cell.adjacency)
                    .all(|(&t, &c)| (t == 1) == c);
                if !same {
                    out.push(Violation::TemplateMismatch(
                        "adjacency differs from template".into(),
                    ));
                }
            }
        }
        Template::FreeDag {
            max_nodes,
            max_edges,
        } => {
            if n > *max_nodes {
                out.push(Violation::Limits(format!("{n} nodes > {max_nodes}")));
            }
            let edges = cell.edge_count();
            if edges > *max_edges {
                out.push(Violation::Limits(format!("{edges} edges > {max_edges}")));
            }
        }
    }
    out
}
