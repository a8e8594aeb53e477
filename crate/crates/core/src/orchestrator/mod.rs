//! Multi-instance workload placement over a shared device pool.

mod compare;
mod plan;
mod scenario;
mod simulate;
mod workload;

pub use compare::{
    compare_strategies, run_strategy, saturation_point, sweep, ComparisonReport, StrategyRuns,
    SweepPoint, Verdict, DEDICATED_TOLERANCE, DEFAULT_REPEATS,
};
pub use plan::{plan, AllocationPlan, Assignment, Strategy, TargetSpec};
pub use scenario::{Scenario, SCENARIO_KEYS};
pub use simulate::{simulate, FabricSetup, InstanceResult, SimResult, Summary, INSTANCE_CSV_HEADER};
pub use workload::{HostModel, WorkloadModel};
