//! Simulation and control of a server cluster selling SLA-bound job
//! streams.
//!
//! Each service class submits streams of jobs. Accepted streams earn a
//! charge and pay a penalty when their jobs' average wait exceeds an
//! obligation. Policies decide which streams to admit and how to split
//! the servers among the classes.

pub mod accounting;
pub mod engine;
pub mod policies;
pub mod queue_math;
pub mod scenario;
pub mod stochastic;
