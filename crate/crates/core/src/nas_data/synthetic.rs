use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::table::{ArchPerfPair, Direction, TaskTable};
use crate::search_space::{sample_uniform, CellGraph, OpKind, SearchSpaceDef};
use crate::{Error, Result};

/// Desk-scale stand-in for trained accuracy:
/// `score = sum over slots of weight[op] + interaction * (#distinct conv kernels)`.
#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    space: Arc<SearchSpaceDef>,
    /// Indexed by vocabulary id; `None` for ops outside the space.
    weight_by_op: Vec<Option<f64>>,
    interaction: f64,
}

impl SyntheticObjective {
    /// `weights[i]` belongs to `space.allowed_ops()[i]`.
    pub fn new(space: Arc<SearchSpaceDef>, weights: &[f64], interaction: f64) -> Result<Self> {
        if weights.len() != space.allowed_ops().len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} allowed ops",
                weights.len(),
                space.allowed_ops().len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || !interaction.is_finite() {
            return Err(Error::Domain("synthetic weights must be finite".into()));
        }
        let mut weight_by_op = vec![None; space.vocab().len()];
        for (&op, &w) in space.allowed_ops().iter().zip(weights) {
            weight_by_op[op] = Some(w);
        }
        Ok(SyntheticObjective {
            space,
            weight_by_op,
            interaction,
        })
    }

    /// Weights drawn from `Normal(0, 1)`.
    pub fn random<R: Rng + ?Sized>(
        space: Arc<SearchSpaceDef>,
        interaction: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let weights: Vec<f64> = space
            .allowed_ops()
            .iter()
            .map(|_| normal.sample(rng))
            .collect();
        SyntheticObjective::new(space, &weights, interaction).expect("finite weights")
    }

    pub fn space(&self) -> &Arc<SearchSpaceDef> {
        &self.space
    }

    pub fn score(&self, cell: &CellGraph) -> Result<f64> {
        let vocab = self.space.vocab();
        let mut total = 0.0;
        let mut kernels = BTreeSet::new();
        for &op in cell.internal_ops() {
            let w = self
                .weight_by_op
                .get(op)
                .copied()
                .flatten()
                .ok_or_else(|| Error::UnknownArchitecture(format!("op {op} outside the space")))?;
            total += w;
            let o = vocab.get(op).expect("weighted ops exist");
            if o.kind == OpKind::Convolution {
                kernels.insert(o.kernel);
            }
        }
        Ok(total + self.interaction * kernels.len() as f64)
    }
}

/// Table of synthetic scores over `space`: the full enumeration when
/// `sample` is `None`, otherwise `sample` distinct uniformly drawn cells.
pub fn make_synthetic_ground_truth<R: Rng + ?Sized>(
    space: Arc<SearchSpaceDef>,
    weights: &[f64],
    interaction: f64,
    sample: Option<usize>,
    rng: &mut R,
) -> Result<(TaskTable, SyntheticObjective)> {
    let objective = SyntheticObjective::new(space.clone(), weights, interaction)?;
    let table = synthetic_table(&objective, "synthetic", sample, rng)?;
    Ok((table, objective))
}

pub fn synthetic_table<R: Rng + ?Sized>(
    objective: &SyntheticObjective,
    task_id: &str,
    sample: Option<usize>,
    rng: &mut R,
) -> Result<TaskTable> {
    let space = objective.space.clone();
    if space.num_slots().is_none() {
        return Err(Error::Unsupported(
            "synthetic ground truth needs a slot template space".into(),
        ));
    }
    let cells: Vec<CellGraph> = match sample {
        None => space.enumerate()?.collect(),
        Some(n) => {
            let size = space.count()?;
            if size < n.into() {
                return Err(Error::Size(format!(
                    "space has {size} cells, {n} requested"
                )));
            }
            let mut seen = HashSet::with_capacity(n);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let cell = sample_uniform(&space, rng)?;
                if seen.insert(cell.digest()) {
                    out.push(cell);
                }
            }
            out
        }
    };
    let records = cells
        .into_iter()
        .map(|arch| {
            let score = objective.score(&arch)?;
            Ok(ArchPerfPair { arch, score })
        })
        .collect::<Result<Vec<_>>>()?;
    TaskTable::new(
        task_id,
        space,
        "synthetic",
        Direction::HigherBetter,
        records,
    )
}
