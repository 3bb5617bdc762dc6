//! Discrete-event simulation of per-class FCFS server pools fed by job
//! streams.

mod calendar;
mod estimate;
mod model;
mod sim;
pub mod trace;

pub use calendar::{Calendar, Event};
pub use estimate::{DemandEstimator, EstimationMode, MIN_WINDOW_SAMPLES};
pub use model::{
    residual_obligation, Allocation, ClassDemand, ClassError, ClusterState, CompletedStreamError,
    DemandEstimate, EstimateSource, IncomingStream, ServiceClass, StreamRecord,
};
pub use sim::{
    run, InvalidConfig, ReallocationMode, SimConfig, SimError, SimulationReport, WaitTally,
};
pub use trace::{TraceKind, TraceRecord};
