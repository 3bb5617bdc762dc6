use std::fmt;

use thiserror::Error;

use crate::queue_math::QueueParams;
use crate::stochastic::{Distribution, DistributionError};

/// Static demand and contract parameters of one service type.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceClass {
    pub name: String,
    /// Job submission rate within one stream.
    pub gamma: f64,
    /// Jobs per stream.
    pub jobs: u32,
    pub service: Distribution,
    /// Interarrival law of the jobs in one stream; its mean is `1 / gamma`.
    pub interarrival: Distribution,
    /// Stream submission rate.
    pub delta: f64,
    pub charge: f64,
    /// Bound on a stream's average job wait.
    pub obligation: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassError {
    #[error("class {class}: {field} must be {expected}, got {value}")]
    Field {
        class: String,
        field: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("class {class}: {field}: {source}")]
    Distribution {
        class: String,
        field: &'static str,
        source: DistributionError,
    },
}

impl ServiceClass {
    /// Class with Poisson job submissions inside each stream.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        gamma: f64,
        jobs: u32,
        service: Distribution,
        delta: f64,
        charge: f64,
        obligation: f64,
        penalty: f64,
    ) -> Self {
        Self {
            name: name.into(),
            gamma,
            jobs,
            service,
            interarrival: Distribution::Exponential { rate: gamma },
            delta,
            charge,
            obligation,
            penalty,
        }
    }

    pub fn mean_service(&self) -> f64 {
        self.service.mean()
    }

    /// Load if every submitted stream were accepted: `delta * k * b`.
    pub fn potential_load(&self) -> f64 {
        self.delta * self.jobs as f64 * self.mean_service()
    }

    /// Mean number of simultaneously active streams with no admission
    /// control: `delta * k / gamma`.
    pub fn stream_intensity(&self) -> f64 {
        self.delta * self.jobs as f64 / self.gamma
    }

    /// Checks every field, collecting all violations.
    pub fn validate(&self) -> Vec<ClassError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, field: &'static str, expected: &'static str, value: f64| {
            if !ok {
                errors.push(ClassError::Field {
                    class: self.name.clone(),
                    field,
                    expected,
                    value,
                });
            }
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        check(pos(self.gamma), "gamma", "positive", self.gamma);
        check(self.jobs >= 1, "jobs", "at least 1", self.jobs as f64);
        check(nonneg(self.delta), "delta", "non-negative", self.delta);
        check(nonneg(self.charge), "charge", "non-negative", self.charge);
        check(pos(self.obligation), "obligation", "positive", self.obligation);
        check(nonneg(self.penalty), "penalty", "non-negative", self.penalty);
        for (field, d) in [("service", &self.service), ("interarrival", &self.interarrival)] {
            if let Err(source) = d.validate() {
                errors.push(ClassError::Distribution {
                    class: self.name.clone(),
                    field,
                    source,
                });
            }
        }
        if errors.is_empty() && self.gamma > 0.0 {
            let expected = 1.0 / self.gamma;
            if (self.interarrival.mean() - expected).abs() > 1e-9 * expected {
                errors.push(ClassError::Field {
                    class: self.name.clone(),
                    field: "interarrival",
                    expected: "mean 1/gamma",
                    value: self.interarrival.mean(),
                });
            }
        }
        errors
    }
}

/// Live state of one accepted stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    pub id: u64,
    pub class: usize,
    /// Jobs whose service has completed.
    pub completed: u32,
    /// Sum of the recorded waits of the completed jobs.
    pub wait_sum: f64,
    pub arrived: u32,
    pub jobs: u32,
    pub gamma: f64,
    pub admitted_at: f64,
}

impl StreamRecord {
    pub fn new(id: u64, class: usize, jobs: u32, gamma: f64, admitted_at: f64) -> Self {
        Self {
            id,
            class,
            completed: 0,
            wait_sum: 0.0,
            arrived: 0,
            jobs,
            gamma,
            admitted_at,
        }
    }

    /// Mean wait over completed jobs, zero before the first completion.
    pub fn mean_wait(&self) -> f64 {
        if self.completed == 0 {
            0.0
        } else {
            self.wait_sum / self.completed as f64
        }
    }

    pub fn remaining(&self) -> u32 {
        self.jobs - self.completed
    }

    pub fn is_complete(&self) -> bool {
        self.completed >= self.jobs
    }

    pub fn record_completion(&mut self, wait: f64) {
        debug_assert!(self.completed < self.jobs);
        self.completed += 1;
        self.wait_sum += wait;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("residual obligation queried for a completed stream ({completed} of {jobs} jobs)")]
pub struct CompletedStreamError {
    pub completed: u32,
    pub jobs: u32,
}

/// Largest average wait the remaining `jobs - completed` jobs may have
/// without the stream breaching `obligation`. Negative when the breach is
/// already certain.
pub fn residual_obligation(
    obligation: f64,
    jobs: u32,
    completed: u32,
    mean_wait: f64,
) -> Result<f64, CompletedStreamError> {
    if completed >= jobs {
        return Err(CompletedStreamError { completed, jobs });
    }
    let done = completed as f64;
    Ok((obligation * jobs as f64 - mean_wait * done) / (jobs - completed) as f64)
}

/// Number of servers assigned to each class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Allocation(Vec<usize>);

impl Allocation {
    pub fn new(servers: Vec<usize>) -> Self {
        Self(servers)
    }

    pub fn zeros(classes: usize) -> Self {
        Self(vec![0; classes])
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, class: usize) -> usize {
        self.0[class]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    /// Copy with one server moved from `from` to `to`, if `from` has one.
    pub fn moved(&self, from: usize, to: usize) -> Option<Self> {
        if self.0[from] == 0 {
            return None;
        }
        let mut next = self.0.clone();
        next[from] -= 1;
        next[to] += 1;
        Some(Self(next))
    }
}

impl From<Vec<usize>> for Allocation {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimateSource {
    #[default]
    Oracle,
    Measured,
}

/// Current traffic parameters of one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassDemand {
    pub lambda: f64,
    pub ca2: f64,
    pub b: f64,
    pub cb2: f64,
    /// Stream submission rate.
    pub delta: f64,
}

impl ClassDemand {
    pub fn queue(&self, servers: usize) -> QueueParams {
        QueueParams::new(servers, self.lambda, self.b, self.ca2, self.cb2)
    }

    pub fn offered_load(&self) -> f64 {
        self.lambda * self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandEstimate {
    pub classes: Vec<ClassDemand>,
    pub source: EstimateSource,
}

impl DemandEstimate {
    /// Parameters known from the scenario: `lambda = sum of the active
    /// streams' gamma`, `ca2` from the per-stream interarrival law, `b` and
    /// `cb2` from the service law.
    pub fn oracle(classes: &[ServiceClass], active: &[Vec<StreamRecord>]) -> Self {
        let classes = classes
            .iter()
            .zip(active)
            .map(|(class, streams)| {
                let (b, cb2) = class.service.moments();
                ClassDemand {
                    lambda: streams.iter().map(|s| s.gamma).sum(),
                    ca2: class.interarrival.scv(),
                    b,
                    cb2,
                    delta: class.delta,
                }
            })
            .collect();
        Self {
            classes,
            source: EstimateSource::Oracle,
        }
    }
}

/// A stream offered for admission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomingStream {
    pub class: usize,
    pub jobs: u32,
    pub gamma: f64,
}

/// What a policy sees at a decision epoch.
#[derive(Debug, Clone, Copy)]
pub struct ClusterState<'a> {
    pub classes: &'a [ServiceClass],
    pub demand: &'a DemandEstimate,
    pub streams: &'a [Vec<StreamRecord>],
    pub allocation: &'a Allocation,
}

impl ClusterState<'_> {
    pub fn total_servers(&self) -> usize {
        self.allocation.total()
    }

    pub fn active(&self, class: usize) -> usize {
        self.streams[class].len()
    }

    pub fn classes_len(&self) -> usize {
        self.classes.len()
    }
}
