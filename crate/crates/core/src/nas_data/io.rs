use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::table::{ArchPerfPair, Direction, Normalization, TaskTable};
use crate::search_space::{CellGraph, SearchSpaceDef, SpaceFile, Template};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceRef {
    Inline(SpaceFile),
    /// Path to a space file, relative to the dataset file.
    File(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordRepr {
    pub ops: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
    pub score: f64,
}

/// On-disk dataset: `ops` are vocabulary ids of the internal nodes, in node
/// order; `adjacency` (over input, internal nodes, output) is omitted for
/// template spaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub task_id: String,
    pub space: SpaceRef,
    pub metric: String,
    pub direction: Direction,
    pub records: Vec<RecordRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

fn record_cell(space: &SearchSpaceDef, rec: &RecordRepr) -> std::result::Result<CellGraph, String> {
    match (space.template(), &rec.adjacency) {
        (
            Template::Slots {
                adjacency: tmpl, ..
            },
            adj,
        ) => {
            if let Some(adj) = adj {
                if adj != tmpl {
                    return Err("adjacency differs from the space template".into());
                }
            }
            space.cell_from_slots(&rec.ops).map_err(|e| e.to_string())
        }
        (Template::FreeDag { .. }, None) => Err("free-DAG spaces require an adjacency".into()),
        (Template::FreeDag { .. }, Some(adj)) => {
            let vocab = space.vocab();
            let mut node_ops = Vec::with_capacity(rec.ops.len() + 2);
            node_ops.push(vocab.input_id());
            node_ops.extend_from_slice(&rec.ops);
            node_ops.push(vocab.output_id());
            CellGraph::from_matrix(adj, node_ops).map_err(|e| e.to_string())
        }
    }
}

pub fn parse_dataset(
    file: DatasetFile,
    origin: &str,
    base_dir: Option<&Path>,
) -> Result<TaskTable> {
    let space = match file.space {
        SpaceRef::Inline(repr) => SearchSpaceDef::from_file_repr(repr)?,
        SpaceRef::File(rel) => {
            let p = match base_dir {
                Some(dir) => dir.join(&rel),
                None => rel.into(),
            };
            SearchSpaceDef::load(p)?
        }
    };
    let space = Arc::new(space);
    let mut records = Vec::with_capacity(file.records.len());
    for (i, rec) in file.records.iter().enumerate() {
        let arch = record_cell(&space, rec).map_err(|detail| Error::Record {
            path: origin.to_string(),
            record: i,
            detail,
        })?;
        records.push(ArchPerfPair {
            arch,
            score: rec.score,
        });
    }
    let direction = if file.normalization.is_some() {
        Direction::HigherBetter
    } else {
        file.direction
    };
    let mut table = TaskTable::new(file.task_id, space, file.metric, direction, records).map_err(
        |e| match e {
            Error::Record { record, detail, .. } => Error::Record {
                path: origin.to_string(),
                record,
                detail,
            },
            other => other,
        },
    )?;
    table.set_normalization(file.normalization);
    Ok(table)
}

pub fn load_task_table(path: impl AsRef<Path>) -> Result<TaskTable> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: DatasetFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: origin.clone(),
        detail: e.to_string(),
    })?;
    parse_dataset(file, &origin, path.parent())
}

pub fn to_dataset_file(table: &TaskTable) -> DatasetFile {
    let space = table.space();
    let template_space = space.num_slots().is_some();
    let records = table
        .records()
        .iter()
        .map(|r| RecordRepr {
            ops: r.arch.internal_ops().to_vec(),
            adjacency: (!template_space).then(|| r.arch.matrix()),
            score: r.score,
        })
        .collect();
    DatasetFile {
        task_id: table.task_id().to_string(),
        space: SpaceRef::Inline(space.to_file_repr()),
        metric: table.metric_name().to_string(),
        direction: table.direction(),
        records,
        normalization: table.normalization().copied(),
    }
}

pub fn save_task_table(table: &TaskTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&to_dataset_file(table)).expect("serializable");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
