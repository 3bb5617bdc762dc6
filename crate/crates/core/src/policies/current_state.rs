//! Admission and reallocation driven by the state of every active stream.

use crate::engine::{Allocation, ClusterState, IncomingStream};

use super::allocation::{offered_loads_allocation, WeightRule};
use super::revenue::DeltaEvaluator;

/// Outcome of an admission decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    /// Accept; switch to the allocation if one is given.
    Accept(Option<Allocation>),
    Reject,
}

impl Admission {
    pub fn is_accept(&self) -> bool {
        matches!(self, Self::Accept(_))
    }
}

/// Which expected-revenue change the hill climb maximises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImproveMode {
    /// A stream of the perturbed class is being offered.
    Arrival(IncomingStream),
    /// A stream of the perturbed class has just completed.
    Completion,
}

/// Classes that must keep a server: those with active streams, plus the
/// class of a stream about to be accepted.
pub fn floor_classes(state: &ClusterState<'_>, incoming: Option<&IncomingStream>) -> Vec<bool> {
    (0..state.classes_len())
        .map(|j| state.active(j) > 0 || incoming.is_some_and(|inc| inc.class == j))
        .collect()
}

/// Offered-loads partition of the current demand, with the incoming
/// stream's rate folded into its class when one is given.
pub fn offered_loads_target(
    state: &ClusterState<'_>,
    incoming: Option<&IncomingStream>,
    weights: WeightRule,
) -> Allocation {
    let rho: Vec<f64> = state
        .demand
        .classes
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let extra = incoming.filter(|inc| inc.class == j).map_or(0.0, |inc| inc.gamma);
            (d.lambda + extra) * d.b
        })
        .collect();
    let alpha = weights.weights(state.classes);
    let floor = floor_classes(state, incoming);
    offered_loads_allocation(&rho, &alpha, state.total_servers(), &floor)
}

/// Local search over single-server moves between `class` and each other
/// class, in both directions, taking the best strict improvement until none
/// is left.
///
/// Ties between neighbours go to the move towards `class`, then to the
/// lowest other class index. Moves that would leave a floored class
/// without a server are skipped. Returns the final allocation and its
/// expected revenue change relative to `state.allocation`.
pub fn improve_allocation(
    state: &ClusterState<'_>,
    start: &Allocation,
    class: usize,
    mode: ImproveMode,
) -> (Allocation, f64) {
    let incoming = match mode {
        ImproveMode::Arrival(inc) => Some(inc),
        ImproveMode::Completion => None,
    };
    let floor = floor_classes(state, incoming.as_ref());
    let mut eval = DeltaEvaluator::new(state, incoming.as_ref());
    hill_climb(&mut |a: &Allocation| eval.delta(a), start, class, &floor)
}

pub(crate) fn neighbours(current: &Allocation, class: usize, floor: &[bool]) -> Vec<Allocation> {
    let m = current.classes();
    let allowed = |a: &Allocation, from: usize| !floor[from] || a.get(from) >= 1;
    let mut out = Vec::with_capacity(2 * m.saturating_sub(1));
    for j in (0..m).filter(|&j| j != class) {
        if let Some(a) = current.moved(j, class).filter(|a| allowed(a, j)) {
            out.push(a);
        }
    }
    for j in (0..m).filter(|&j| j != class) {
        if let Some(a) = current.moved(class, j).filter(|a| allowed(a, class)) {
            out.push(a);
        }
    }
    out
}

pub(crate) fn hill_climb(
    delta: &mut dyn FnMut(&Allocation) -> f64,
    start: &Allocation,
    class: usize,
    floor: &[bool],
) -> (Allocation, f64) {
    let mut current = start.clone();
    let mut best = delta(&current);
    loop {
        let mut step: Option<(Allocation, f64)> = None;
        for candidate in neighbours(&current, class, floor) {
            let value = delta(&candidate);
            if step.as_ref().is_none_or(|(_, v)| value > *v) {
                step = Some((candidate, value));
            }
        }
        match step {
            Some((next, value)) if value > best => {
                current = next;
                best = value;
            }
            _ => return (current, best),
        }
    }
}

/// Offered-loads reallocation with the incoming stream counted, accepted
/// iff the expected revenue change is strictly positive. With `optimize`
/// the candidate is first improved by [`improve_allocation`].
pub fn current_state_admission(
    state: &ClusterState<'_>,
    incoming: &IncomingStream,
    weights: WeightRule,
    optimize: bool,
) -> Admission {
    let start = offered_loads_target(state, Some(incoming), weights);
    let (target, delta) = if optimize {
        improve_allocation(state, &start, incoming.class, ImproveMode::Arrival(*incoming))
    } else {
        let d = DeltaEvaluator::new(state, Some(incoming)).delta(&start);
        (start, d)
    };
    if delta > 0.0 {
        Admission::Accept(Some(target))
    } else {
        Admission::Reject
    }
}

/// Reallocation after a stream of `class` completed; `state` already
/// excludes that stream.
pub fn completion_reallocation(
    state: &ClusterState<'_>,
    class: usize,
    weights: WeightRule,
    optimize: bool,
) -> Allocation {
    let start = offered_loads_target(state, None, weights);
    if optimize {
        improve_allocation(state, &start, class, ImproveMode::Completion).0
    } else {
        start
    }
}
