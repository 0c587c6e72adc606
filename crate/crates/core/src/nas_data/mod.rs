//! Architecture/performance tables and synthetic task generation.

mod io;
mod synthetic;
mod table;

pub use io::{
    load_task_table, parse_dataset, save_task_table, to_dataset_file, DatasetFile, RecordRepr,
    SpaceRef,
};
pub use synthetic::{make_synthetic_ground_truth, synthetic_table, SyntheticObjective};
pub use table::{
    make_noise_task, make_pure_noise_task, normalize_scores, split_indices, split_support_query,
    ArchPerfPair, Direction, Normalization, SupportQuerySplit, TaskCollection, TaskTable,
};
