//! Steady-state estimation of power transmission networks from SCADA and PMU
//! measurements: weighted least squares, robust measurement selection, moment
//! relaxations and warm-started tracking.

pub mod bench;
pub mod cases;
pub mod error;
pub mod estimation;
pub mod measurement;
pub mod network;
pub mod noise;
pub mod powerflow;
pub mod robust;
pub mod sdp;
pub mod tracking;

pub use error::{Error, Result};
pub use measurement::{
    evaluate_h, power_injections, HermitianForm, LinearForm, MeasurementKind, MeasurementMatrices,
    NetworkModel, StateVector,
};
pub use network::{
    build_branch_admittance, build_bus_admittance, emit_case, parse_case, Branch, Bus, BusType,
    Generator, Network,
};
pub use estimation::{
    estimate_wls, metrics, multistart, objective_cost, objective_gradient, EstimateResult,
    EstimationProblem, Metrics, VoltageTerm, Weights, WlsOptions,
};
pub use noise::{
    inject_faults, simulate_pmu, simulate_scada, ErrorChainConfig, Measurement, MeasurementPlan,
    MeasurementSet,
};
pub use robust::{
    enumerate_oracle, solve_lasso, solve_robust, BudgetMode, Grouping, LassoResult, RobustOptions,
    RobustResult, SelectionMask,
};
pub use powerflow::{solve_power_flow, PowerFlowOptions, PowerFlowResult};
pub use tracking::{
    detect_change, run_trajectory, step, StepRecord, TrackMode, TrackerOptions, TrackerState,
    TrajectoryReport,
};
