//! Cell-based search spaces: operation vocabularies, cell graphs, encoding,
//! sampling and counting.

mod census;
mod encode;
mod graph;
mod sample;
mod space;
mod vocab;

pub use census::{count_cell_classes, count_topologies, NB101_GRAPHS};
pub use encode::{encode, EncodedGraph};
pub use graph::{canonical_digest, validate, CellGraph, Violation};
pub use sample::sample_uniform;
pub use space::{count_space, SearchSpaceDef, SpaceFile, Template};
pub use vocab::{
    benchmark_op_sets, build_unified_vocabulary, builtin_operation, OpDecl, OpKind, OpVocabulary,
    Operation,
};
