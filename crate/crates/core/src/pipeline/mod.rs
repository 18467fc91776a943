//! Macro-pipelined processing-element architecture.
//!
//! A dense layer of `N_n` neurons over `N_I` inputs runs on `N_PE`
//! multipliers for `N_n N_I / N_PE` cycles, scheduled neuron-by-neuron or
//! input-by-input. Stages are chained through valid/ready FIFOs.

pub mod config;
pub mod datapath;
pub mod memory;
pub mod reference;
pub mod sim;

pub use config::{
    analytic_performance, complex_stage_cycles, poly_pe_for, Activation, AnalyticPerformance, NnLayout, Schedule,
    StageConfig, POLY_REFERENCE_PE,
};
pub use datapath::{CountPath, Datapath, FxPath, RangePath};
pub use memory::{ComplexMemory, PackedMemory, StageMemory};
pub use reference::{LinearWeights, NnWeights, PolyWeights};
pub use sim::{
    simulate_nn_canceller, simulate_poly_canceller, simulate_stage, trace_to_csv, CancellerSimulation, CycleReport,
    Handshake, NnHardware, PolyHardware, SimOptions, StageReport, StageSimulation, TraceRecord,
};
