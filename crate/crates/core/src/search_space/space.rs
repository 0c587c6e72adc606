use std::path::Path;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::graph::{structural_violations, CellGraph};
use super::vocab::{build_unified_vocabulary, OpDecl, OpVocabulary};
use crate::{Error, Result};

/// Shape of the cells a space admits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Template {
    /// Fixed adjacency over `slots + 2` nodes: node 0 is the input, node
    /// `slots + 1` the output, nodes `1..=slots` are operation slots.
    Slots {
        slots: usize,
        adjacency: Vec<Vec<u8>>,
    },
    /// Variable topology, bounded by node and edge counts (input and output
    /// included in `max_nodes`).
    FreeDag { max_nodes: usize, max_edges: usize },
}

impl Template {
    pub fn slots(slots: usize, edges: &[(usize, usize)]) -> Self {
        let n = slots + 2;
        let mut adjacency = vec![vec![0u8; n]; n];
        for &(i, j) in edges {
            adjacency[i][j] = 1;
        }
        Template::Slots { slots, adjacency }
    }

    /// NB201's cell written with operations on nodes: every edge of the
    /// four-state cell becomes an op node.
    pub fn nb201() -> Self {
        // states s0 (input), s1, s2, s3 (output); op nodes:
        // 1: s0->s1, 2: s0->s2, 3: s1->s2, 4: s0->s3, 5: s1->s3, 6: s2->s3
        Template::slots(
            6,
            &[
                (0, 1),
                (0, 2),
                (0, 4),
                (1, 3),
                (1, 5),
                (2, 6),
                (3, 6),
                (4, 7),
                (5, 7),
                (6, 7),
            ],
        )
    }

    /// A four-slot cell with two parallel branches and a skip path.
    pub fn four_slot() -> Self {
        Template::slots(4, &[(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (3, 5), (4, 5)])
    }

    /// `slots` op nodes in a single chain.
    pub fn chain(slots: usize) -> Self {
        let edges: Vec<_> = (0..=slots).map(|i| (i, i + 1)).collect();
        Template::slots(slots, &edges)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpaceDef {
    name: String,
    template: Template,
    allowed_ops: Vec<usize>,
    vocab: Arc<OpVocabulary>,
}

/// On-disk form of a search space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceFile {
    pub name: String,
    pub template: Template,
    pub allowed_ops: Vec<String>,
    pub vocab: Vec<OpDecl>,
}

impl SearchSpaceDef {
    pub fn new(
        name: impl Into<String>,
        template: Template,
        allowed_ops: &[&str],
        vocab: Arc<OpVocabulary>,
    ) -> Result<Self> {
        let name = name.into();
        let invalid = |detail: String| Error::InvalidSpace {
            space: name.clone(),
            detail,
        };
        let mut ids = Vec::with_capacity(allowed_ops.len());
        for op in allowed_ops {
            let id = vocab
                .id_of(op)
                .ok_or_else(|| invalid(format!("allowed op `{op}` not in vocabulary")))?;
            if vocab.get(id).is_none_or(|o| o.kind.is_special()) {
                return Err(invalid(format!("`{op}` is not a searchable operation")));
            }
            if ids.contains(&id) {
                return Err(invalid(format!("allowed op `{op}` listed twice")));
            }
            ids.push(id);
        }
        if ids.is_empty() {
            return Err(invalid("no allowed operations".into()));
        }
        match &template {
            Template::Slots { slots, adjacency } => {
                let n = slots + 2;
                if *slots < 1 {
                    return Err(invalid("template needs at least one slot".into()));
                }
                if adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
                    return Err(invalid(format!("template adjacency must be {n}x{n}")));
                }
                if adjacency.iter().flatten().any(|&b| b > 1) {
                    return Err(invalid("template adjacency entries must be 0 or 1".into()));
                }
                let flat: Vec<bool> = adjacency.iter().flatten().map(|&b| b == 1).collect();
                let violations = structural_violations(n, &flat);
                if !violations.is_empty() {
                    let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                    return Err(invalid(format!(
                        "template is not a valid cell: {}",
                        list.join(", ")
                    )));
                }
            }
            Template::FreeDag {
                max_nodes,
                max_edges,
            } => {
                if *max_nodes < 3 {
                    return Err(invalid("free-DAG spaces need max_nodes >= 3".into()));
                }
                if *max_edges < 1 {
                    return Err(invalid("free-DAG spaces need max_edges >= 1".into()));
                }
            }
        }
        Ok(SearchSpaceDef {
            name,
            template,
            allowed_ops: ids,
            vocab,
        })
    }

    /// A template space over every searchable op of the unified vocabulary.
    pub fn mixed_ops(name: impl Into<String>, template: Template) -> Self {
        let vocab = Arc::new(OpVocabulary::unified());
        let names: Vec<String> = vocab.searchable().map(|o| o.name.clone()).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        SearchSpaceDef::new(name, template, &refs, vocab).expect("unified ops are valid")
    }

    pub fn from_file_repr(file: SpaceFile) -> Result<Self> {
        let vocab = build_unified_vocabulary(&[file.vocab])?;
        let allowed: Vec<&str> = file.allowed_ops.iter().map(String::as_str).collect();
        SearchSpaceDef::new(file.name, file.template, &allowed, Arc::new(vocab))
    }

    pub fn to_file_repr(&self) -> SpaceFile {
        SpaceFile {
            name: self.name.clone(),
            template: self.template.clone(),
            allowed_ops: self
                .allowed_ops
                .iter()
                .map(|&id| self.vocab.get(id).expect("validated").name.clone())
                .collect(),
            vocab: self.vocab.to_decls(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SpaceFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        SearchSpaceDef::from_file_repr(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_file_repr()).expect("serializable");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn allowed_ops(&self) -> &[usize] {
        &self.allowed_ops
    }

    pub fn vocab(&self) -> &Arc<OpVocabulary> {
        &self.vocab
    }

    pub fn num_slots(&self) -> Option<usize> {
        match self.template {
            Template::Slots { slots, .. } => Some(slots),
            Template::FreeDag { .. } => None,
        }
    }

    /// Builds the cell that fills the template's slots with `ops` (vocabulary
    /// ids). The result is not validated.
    pub fn cell_from_slots(&self, ops: &[usize]) -> Result<CellGraph> {
        let Template::Slots { slots, adjacency } = &self.template else {
            return Err(Error::Unsupported(format!(
                "space `{}` has no slot template",
                self.name
            )));
        };
        if ops.len() != *slots {
            return Err(Error::Dimension(format!(
                "expected {slots} slot ops, got {}",
                ops.len()
            )));
        }
        let mut node_ops = Vec::with_capacity(slots + 2);
        node_ops.push(self.vocab.input_id());
        node_ops.extend_from_slice(ops);
        node_ops.push(self.vocab.output_id());
        let adj: Vec<bool> = adjacency.iter().flatten().map(|&b| b == 1).collect();
        CellGraph::new(slots + 2, adj, node_ops)
    }

    /// Number of cells in a slot template space: `|allowed_ops|^slots`.
    pub fn count(&self) -> Result<BigUint> {
        match self.template {
            Template::Slots { slots, .. } => {
                let slots = u32::try_from(slots)
                    .map_err(|_| Error::Size("slot count overflows u32".into()))?;
                Ok(BigUint::from(self.allowed_ops.len()).pow(slots))
            }
            Template::FreeDag { .. } => Err(Error::Unsupported(
                "counting free-DAG spaces is not supported".into(),
            )),
        }
    }

    /// Iterates every cell of a slot template space in mixed-radix order
    /// (last slot fastest).
    pub fn enumerate(&self) -> Result<impl Iterator<Item = CellGraph> + '_> {
        let slots = self.num_slots().ok_or_else(|| {
            Error::Unsupported(format!("space `{}` cannot be enumerated", self.name))
        })?;
        let radix = self.allowed_ops.len();
        let total = self.count()?;
        let total: u64 =
            u64::try_from(total).map_err(|_| Error::Size("space too large to enumerate".into()))?;
        Ok((0..total).map(move |mut code| {
            let mut ops = vec![0usize; slots];
            for slot in (0..slots).rev() {
                ops[slot] = self.allowed_ops[(code % radix as u64) as usize];
                code /= radix as u64;
            }
            self.cell_from_slots(&ops).expect("template shape is fixed")
        }))
    }
}

/// `count` as a free function.
pub fn count_space(space: &SearchSpaceDef) -> Result<BigUint> {
    space.count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_powers() {
        let vocab = Arc::new(OpVocabulary::unified());
        let nb201 = SearchSpaceDef::new(
            "nb201",
            Template::nb201(),
            &["conv1-d1", "conv3-d1", "avgpool", "skip", "zeroize"],
            vocab,
        )
        .unwrap();
        assert_eq!(count_space(&nb201).unwrap(), BigUint::from(15_625u32));

        let mixed = SearchSpaceDef::mixed_ops("nb201-mixed", Template::nb201());
        assert_eq!(count_space(&mixed).unwrap(), BigUint::from(1_771_561u32));
    }

    #[test]
    fn six_slot_counts_are_exact_powers() {
        let vocab = Arc::new(OpVocabulary::unified());
        let names: Vec<String> = vocab.searchable().map(|o| o.name.clone()).collect();
        for k in 1..=11usize {
            let refs: Vec<&str> = names[..k].iter().map(String::as_str).collect();
            let space = SearchSpaceDef::new("s", Template::nb201(), &refs, vocab.clone()).unwrap();
            assert_eq!(space.count().unwrap(), BigUint::from(k).pow(6));
        }
    }

    #[test]
    fn singleton_space() {
        let vocab = Arc::new(OpVocabulary::unified());
        let space = SearchSpaceDef::new("one", Template::chain(1), &["skip"], vocab).unwrap();
        assert_eq!(space.count().unwrap(), BigUint::from(1u32));
        assert_eq!(space.enumerate().unwrap().count(), 1);
    }

    #[test]
    fn free_dag_count_is_unsupported() {
        let vocab = Arc::new(OpVocabulary::unified());
        let space = SearchSpaceDef::new(
            "nb101",
            Template::FreeDag {
                max_nodes: 7,
                max_edges: 9,
            },
            &["conv1-d1", "conv3-d1", "maxpool"],
            vocab,
        )
        .unwrap();
        assert!(matches!(space.count(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn invalid_definitions() {
        let vocab = Arc::new(OpVocabulary::unified());
        assert!(SearchSpaceDef::new("x", Template::chain(2), &["input"], vocab.clone()).is_err());
        assert!(SearchSpaceDef::new("x", Template::chain(2), &["nope"], vocab.clone()).is_err());
        assert!(SearchSpaceDef::new("x", Template::chain(0), &["skip"], vocab.clone()).is_err());
        // slot 2 is disconnected from the output
        let dangling = Template::slots(2, &[(0, 1), (0, 2), (1, 3)]);
        assert!(SearchSpaceDef::new("x", dangling, &["skip"], vocab).is_err());
    }

    #[test]
    fn file_round_trip() {
        let space = SearchSpaceDef::mixed_ops("four", Template::four_slot());
        let json = serde_json::to_string(&space.to_file_repr()).unwrap();
        let back = SearchSpaceDef::from_file_repr(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, space);
    }

    #[test]
    fn enumeration_covers_space() {
        let vocab = Arc::new(OpVocabulary::unified());
        let space = SearchSpaceDef::new(
            "s",
            Template::four_slot(),
            &["skip", "zeroize", "linear"],
            vocab,
        )
        .unwrap();
        let cells: Vec<_> = space.enumerate().unwrap().collect();
        assert_eq!(cells.len(), 81);
        let digests: std::collections::HashSet<_> = cells.iter().map(|c| c.digest()).collect();
        assert_eq!(digests.len(), 81);
    }
}
