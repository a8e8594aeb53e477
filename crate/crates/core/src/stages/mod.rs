//! Prune, Count, Filter, Merge and Group, plus the partitioned driver.

mod checkpoint;
mod count;
mod index;
mod pipeline;
mod prune;
mod wire;

pub use checkpoint::{CheckpointDir, StageKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use count::{count, flush_table, merge_runs, merge_runs_sorted, FrequencyTable};
pub use index::{
    filter, group, groups_from_bytes, groups_to_bytes, merge_indexes, Candidate, CandidateIndex,
    GroupResult, StoredRead, Thresholds,
};
pub use pipeline::{
    run_pipeline, run_pipeline_on, PipelineConfig, PipelineResult, StageRun, StorageBinding,
    PIPELINE_KEYS,
};
pub use prune::{prune, PruneFilter};
