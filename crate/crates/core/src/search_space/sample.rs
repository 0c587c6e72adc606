use rand::Rng;

use super::graph::CellGraph;
use super::space::SearchSpaceDef;
use crate::{Error, Result};

/// Fills every slot of a template space independently and uniformly from the
/// allowed operations.
pub fn sample_uniform<R: Rng + ?Sized>(space: &SearchSpaceDef, rng: &mut R) -> Result<CellGraph> {
    let slots = space.num_slots().ok_or_else(|| {
        Error::Unsupported(format!(
            "space `{}` is not a slot template; free-DAG sampling is not supported",
            space.name()
        ))
    })?;
    let allowed = space.allowed_ops();
    let ops: Vec<usize> = (0..slots)
        .map(|_| allowed[rng.random_range(0..allowed.len())])
        .collect();
    space.cell_from_slots(&ops)
}
