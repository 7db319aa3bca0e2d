//! Load generation and the scaling and failover experiments.

pub mod experiment;
pub mod plan;
pub mod report;
pub mod scenario;

pub use experiment::{
    cis_services, run_failover, run_scaling, run_scaling_experiment, synthetic_world, Check,
    Deployment, DeploymentConfig, FailoverConfig, FailoverRun, RateSchedule, ScalingRun,
    StepOutcome, Verdict, BATCH_INTERVAL_MS, DEFAULT_STATIONS, GROWTH_TOLERANCE,
};
pub use plan::{parse_plan, read_plan, FaultKind, FaultStep};
pub use report::{ReportRow, RunReport};
pub use scenario::{Generator, LoadScenario, Message, ScenarioKind, BASE_EPOCH_MS};
