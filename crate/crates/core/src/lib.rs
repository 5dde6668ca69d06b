//! Object-aware trajectory augmentation for grid puzzles.
//!
//! The crate covers a grid action engine, parsing of recorded solver traces,
//! synthesis of expert trajectories into a training dataset, Push-and-Pull
//! object clustering, and the metrics used to evaluate it.

pub mod action;
pub mod augment;
pub mod dataset;
pub mod dbscan;
pub mod grid;
pub mod metrics;
pub mod pnp;
pub mod task;
pub mod trace;

pub use action::{apply_action, ActionArgs, ActionError, ActionKind};
pub use augment::{
    assign_rtg, attach_pnp, build_dataset, default_experts, generate_random_grid, generate_trace, is_expert_trace,
    parse_experts, AugmentError, Dataset, ExpertTrace,
};
pub use dataset::{read_dataset, write_dataset, EvalPair, StepRecord, TrajectoryRecord, WINDOW};
pub use grid::{components, Color, Coord, Grid, GridError, Selection};
pub use metrics::{exact_match_accuracy, recall, silhouette, MetricReport, MetricsError, ObjectGroundTruth};
pub use pnp::{cluster, cluster_map, ClusterMap, Clustering, PnpError, PnpParams};
pub use task::{task_rule_oracle, GeneratorParams, TaskError, TaskKind, TaskSpec};
pub use trace::{parse_o2arc, serialize_trace, Trace, TraceError};
