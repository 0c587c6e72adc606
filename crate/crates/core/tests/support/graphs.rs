#![allow(dead_code)]

use mpnas_core::search_space::{encode, CellGraph, EncodedGraph, OpVocabulary};
use rand::Rng;

/// Chain `0→1→…→n−1` plus forward edges with probability 0.3, uniformly
/// random searchable ops on the internal nodes.
pub fn random_encoded_graph<R: Rng + ?Sized>(n: usize, rng: &mut R) -> EncodedGraph {
    let vocab = OpVocabulary::unified();
    let mut adj = vec![vec![0u8; n]; n];
    for i in 0..n - 1 {
        adj[i][i + 1] = 1;
        for j in i + 2..n {
            if rng.random::<f64>() < 0.3 {
                adj[i][j] = 1;
            }
        }
    }
    let mut ops = vec![vocab.input_id()];
    ops.extend((1..n - 1).map(|_| rng.random_range(0..vocab.searchable().count())));
    ops.push(vocab.output_id());
    encode(&CellGraph::from_matrix(&adj, ops).expect("square"), &vocab).expect("known ops")
}
