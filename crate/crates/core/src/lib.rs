pub mod aggregation;
pub mod cg;
pub mod error;
pub mod hashing;
pub mod metrics;
pub mod partitioners;
pub mod simulator;
pub mod types;
pub mod workload;

pub use error::{Error, Result};
pub use hashing::HashSeed;
pub use metrics::{MetricsRow, MetricsSeries, Sample};
pub use partitioners::{Partitioner, PartitionerParams, RouteRecord, Strategy};
pub use simulator::{run, run_stream, RunResult, SimConfig, UtilizationMode};
pub use types::{
    normalize_capacities, CapacityProfile, Key, Message, Signal, SignalKind, WorkloadSpec,
};
pub use workload::CapacitySchedule;
