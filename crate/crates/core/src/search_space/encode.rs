use ndarray::{Array1, Array2};

use super::graph::CellGraph;
use super::vocab::OpVocabulary;
use crate::{Error, Result};

/// GCN input for one cell: one-hot node features and the normalized
/// propagation matrix, both including an appended global node (last row).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGraph {
    pub features: Array2<f64>,
    pub norm_adjacency: Array2<f64>,
}

impl EncodedGraph {
    /// Node count including the global node.
    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn global_index(&self) -> usize {
        self.features.nrows() - 1
    }
}

/// Encodes a cell as `D^-1/2 (A + A^T + I) D^-1/2` over the cell plus a global
/// node linked to every other node, with one-hot features over `vocab`.
pub fn encode(cell: &CellGraph, vocab: &OpVocabulary) -> Result<EncodedGraph> {
    let n = cell.num_nodes();
    let total = n + 1;
    let global = n;

    let mut features = Array2::<f64>::zeros((total, vocab.len()));
    for (node, &op) in cell.node_ops().iter().enumerate() {
        if op >= vocab.len() {
            return Err(Error::Encoding(format!(
                "node {node} has unknown op id {op}"
            )));
        }
        features[[node, op]] = 1.0;
    }
    features[[global, vocab.global_id()]] = 1.0;

    let mut sym = Array2::<f64>::eye(total);
    for i in 0..n {
        for j in 0..n {
            if i != j && (cell.has_edge(i, j) || cell.has_edge(j, i)) {
                sym[[i, j]] = 1.0;
            }
        }
        sym[[i, global]] = 1.0;
        sym[[global, i]] = 1.0;
    }
    let inv_sqrt: Array1<f64> = sym.sum_axis(ndarray::Axis(1)).mapv(|d| 1.0 / d.sqrt());
    let mut norm_adjacency = sym;
    for ((i, j), v) in norm_adjacency.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    Ok(EncodedGraph {
        features,
        norm_adjacency,
    })
}
