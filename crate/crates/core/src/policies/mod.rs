//! Server allocation and stream admission rules.

mod allocation;
mod current_state;
mod revenue;
mod threshold;

pub use allocation::{offered_loads_allocation, potential_loads_allocation, WeightRule};
pub use current_state::{
    completion_reallocation, current_state_admission, floor_classes, improve_allocation,
    offered_loads_target, Admission, ImproveMode,
};
pub use revenue::{
    expected_revenue_current, revenue_delta_accept, revenue_delta_accept_reference,
    revenue_delta_realloc,
};
pub use threshold::{
    compute_threshold, erlang_loss_pmf, potential_loads_from_demand, stream_intensity,
    threshold_admission, threshold_revenue_rate, Threshold, ThresholdEntry, ThresholdForm,
    ThresholdSearch, ThresholdTable,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Allocation, ClusterState, IncomingStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationRule {
    /// Re-partition by current offered loads at every stream arrival and
    /// completion.
    OfferedLoads,
    /// Partition once by potential loads.
    PotentialLoadsStatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionRule {
    AdmitAll,
    CurrentState,
    CurrentStateOptimized,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyTunables {
    /// Threshold search tolerance; `None` means `1e-6 delta c`.
    pub epsilon: Option<f64>,
    /// Threshold search cap; `None` means `10 sigma + 100`.
    pub cap: Option<u32>,
    /// Relative parameter change that triggers a threshold table rebuild.
    pub drift: f64,
    pub threshold_form: ThresholdForm,
}

impl Default for PolicyTunables {
    fn default() -> Self {
        Self {
            epsilon: None,
            cap: None,
            drift: 0.1,
            threshold_form: ThresholdForm::default(),
        }
    }
}

impl PolicyTunables {
    pub fn search(&self) -> ThresholdSearch {
        ThresholdSearch {
            epsilon: self.epsilon,
            cap: self.cap,
            form: self.threshold_form,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("{admission:?} admission cannot run with {allocation:?} allocation")]
    Pairing {
        allocation: AllocationRule,
        admission: AdmissionRule,
    },
    #[error("unknown policy {0:?}")]
    Unknown(String),
}

/// A complete decision procedure: allocation rule, admission rule and
/// their tunables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyBundle {
    pub allocation: AllocationRule,
    pub admission: AdmissionRule,
    pub weights: WeightRule,
    pub tunables: PolicyTunables,
}

impl PolicyBundle {
    pub const NAMES: [&'static str; 4] = [
        "admit_all",
        "current_state",
        "current_state_optimized",
        "threshold",
    ];

    pub fn new(allocation: AllocationRule, admission: AdmissionRule) -> Result<Self, PolicyError> {
        let bundle = Self {
            allocation,
            admission,
            weights: WeightRule::default(),
            tunables: PolicyTunables::default(),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Bundle for one of [`Self::NAMES`].
    pub fn named(name: &str) -> Result<Self, PolicyError> {
        use AdmissionRule::*;
        use AllocationRule::*;
        match name {
            "admit_all" => Self::new(OfferedLoads, AdmitAll),
            "current_state" => Self::new(OfferedLoads, CurrentState),
            "current_state_optimized" => Self::new(OfferedLoads, CurrentStateOptimized),
            "threshold" => Self::new(PotentialLoadsStatic, Threshold),
            other => Err(PolicyError::Unknown(other.to_string())),
        }
    }

    pub fn with_weights(self, weights: WeightRule) -> Self {
        Self { weights, ..self }
    }

    pub fn with_tunables(self, tunables: PolicyTunables) -> Self {
        Self { tunables, ..self }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        use AdmissionRule::*;
        use AllocationRule::*;
        match (self.allocation, self.admission) {
            (PotentialLoadsStatic, Threshold)
            | (OfferedLoads, CurrentState | CurrentStateOptimized)
            | (_, AdmitAll) => Ok(()),
            (allocation, admission) => Err(PolicyError::Pairing {
                allocation,
                admission,
            }),
        }
    }

    pub fn controller(&self) -> Controller {
        Controller {
            bundle: *self,
            table: None,
            pending: None,
        }
    }
}

impl fmt::Display for PolicyBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.allocation, self.admission) {
            (AllocationRule::OfferedLoads, AdmissionRule::AdmitAll) => "admit_all",
            (AllocationRule::PotentialLoadsStatic, AdmissionRule::AdmitAll) => "admit_all_static",
            (_, AdmissionRule::CurrentState) => "current_state",
            (_, AdmissionRule::CurrentStateOptimized) => "current_state_optimized",
            (_, AdmissionRule::Threshold) => "threshold",
        };
        f.write_str(name)
    }
}

/// Per-run decision maker built from a [`PolicyBundle`]. The only state it
/// keeps is the threshold table.
#[derive(Debug, Clone)]
pub struct Controller {
    bundle: PolicyBundle,
    table: Option<ThresholdTable>,
    pending: Option<Allocation>,
}

impl Controller {
    pub fn bundle(&self) -> &PolicyBundle {
        &self.bundle
    }

    pub fn table(&self) -> Option<&ThresholdTable> {
        self.table.as_ref()
    }

    fn build_table(&self, state: &ClusterState<'_>) -> ThresholdTable {
        ThresholdTable::build(
            state.classes,
            &state.demand.classes,
            state.total_servers(),
            self.bundle.weights,
            &self.bundle.tunables.search(),
        )
    }

    pub fn initial_allocation(&mut self, state: &ClusterState<'_>) -> Allocation {
        match self.bundle.allocation {
            AllocationRule::OfferedLoads => offered_loads_target(state, None, self.bundle.weights),
            AllocationRule::PotentialLoadsStatic => {
                let table = self.build_table(state);
                let alloc = table.allocation.clone();
                self.table = Some(table);
                alloc
            }
        }
    }

    pub fn on_submission(&mut self, state: &ClusterState<'_>, incoming: &IncomingStream) -> Admission {
        let weights = self.bundle.weights;
        match (self.bundle.allocation, self.bundle.admission) {
            (AllocationRule::OfferedLoads, AdmissionRule::AdmitAll) => {
                Admission::Accept(Some(offered_loads_target(state, Some(incoming), weights)))
            }
            (_, AdmissionRule::CurrentState) => {
                current_state_admission(state, incoming, weights, false)
            }
            (_, AdmissionRule::CurrentStateOptimized) => {
                current_state_admission(state, incoming, weights, true)
            }
            (AllocationRule::PotentialLoadsStatic, admission) => {
                let drift = self.bundle.tunables.drift;
                let rebuilt = match &self.table {
                    Some(t) if !t.is_stale(&state.demand.classes, drift) => None,
                    _ => {
                        let table = self.build_table(state);
                        let alloc = table.allocation.clone();
                        self.table = Some(table);
                        Some(alloc).filter(|a| a != state.allocation)
                    }
                };
                let admit = admission == AdmissionRule::AdmitAll || {
                    let table = self.table.as_ref().expect("table built above");
                    threshold_admission(state.active(incoming.class), table.threshold(incoming.class))
                };
                if admit {
                    Admission::Accept(rebuilt)
                } else {
                    self.pending = rebuilt;
                    Admission::Reject
                }
            }
            (AllocationRule::OfferedLoads, AdmissionRule::Threshold) => {
                unreachable!("rejected by PolicyBundle::validate")
            }
        }
    }

    /// Allocation change decided alongside a rejection, such as a rebuilt
    /// threshold table's partition.
    pub fn take_pending(&mut self) -> Option<Allocation> {
        self.pending.take()
    }

    /// Reallocation after a stream of `class` completed.
    pub fn on_completion(&mut self, state: &ClusterState<'_>, class: usize) -> Option<Allocation> {
        match self.bundle.allocation {
            AllocationRule::OfferedLoads => {
                let optimize = self.bundle.admission == AdmissionRule::CurrentStateOptimized;
                Some(completion_reallocation(state, class, self.bundle.weights, optimize))
            }
            AllocationRule::PotentialLoadsStatic => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_bundles_are_valid() {
        for name in PolicyBundle::NAMES {
            let b = PolicyBundle::named(name).unwrap();
            assert_eq!(b.to_string(), name);
        }
        assert!(PolicyBundle::named("greedy").is_err());
    }

    #[test]
    fn pairing_is_enforced() {
        assert!(PolicyBundle::new(AllocationRule::OfferedLoads, AdmissionRule::Threshold).is_err());
        assert!(PolicyBundle::new(AllocationRule::PotentialLoadsStatic, AdmissionRule::CurrentState).is_err());
        assert!(PolicyBundle::new(AllocationRule::PotentialLoadsStatic, AdmissionRule::AdmitAll).is_ok());
    }
}
