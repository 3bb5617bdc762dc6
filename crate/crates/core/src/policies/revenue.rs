//! Expected-revenue bookkeeping over the active streams.
//!
//! `g(x; lambda, k, n)` below is [`penalty_probability`] with the class's
//! estimated `b`, `ca2` and `cb2`.

use crate::engine::{residual_obligation, Allocation, ClusterState, IncomingStream, StreamRecord};
use crate::queue_math::{gign_wait, penalty_probability, std_normal_sf, QueueParams};

/// Residual obligation and remaining job count of each stream in a class.
pub(crate) fn stream_terms(obligation: f64, streams: &[StreamRecord]) -> Vec<(f64, f64)> {
    streams
        .iter()
        .filter(|s| !s.is_complete())
        .map(|s| {
            let x = residual_obligation(obligation, s.jobs, s.completed, s.mean_wait())
                .expect("active streams are incomplete");
            (x, s.remaining() as f64)
        })
        .collect()
}

/// Same result as calling [`penalty_probability`] for each term, with the
/// waiting-time formula evaluated once.
pub(crate) fn penalty_sum(params: &QueueParams, terms: &[(f64, f64)]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    if params.is_saturated() {
        return terms.len() as f64;
    }
    let beta = match gign_wait(params) {
        Ok(beta) => beta,
        Err(_) => return terms.len() as f64,
    };
    terms
        .iter()
        .map(|&(x, k)| {
            if x <= 0.0 {
                1.0
            } else if beta <= 0.0 {
                0.0
            } else {
                std_normal_sf((x - beta) / (beta / k).sqrt())
            }
        })
        .sum()
}

/// Expected revenue from the current streams of one class if nothing
/// changes: `c L - r sum_t g(q_t; lambda, k - l_t, n)`.
pub fn expected_revenue_current(state: &ClusterState<'_>, class: usize, servers: usize) -> f64 {
    let spec = &state.classes[class];
    let streams = &state.streams[class];
    let params = state.demand.classes[class].queue(servers);
    let terms = stream_terms(spec.obligation, streams);
    spec.charge * streams.len() as f64 - spec.penalty * penalty_sum(&params, &terms)
}

/// Penalty-sum lookups for hill climbing, memoised per class and server
/// count so that each neighbour costs `O(m)`.
pub(crate) struct DeltaEvaluator {
    classes: Vec<ClassTerms>,
    base: f64,
}

struct ClassTerms {
    penalty: f64,
    terms: Vec<(f64, f64)>,
    // demand after the decision, before it, and the old server count
    after: QueueParams,
    before_cost: f64,
    cache: Vec<Option<f64>>,
}

impl ClassTerms {
    fn cost(&mut self, servers: usize) -> f64 {
        if self.cache.len() <= servers {
            self.cache.resize(servers + 1, None);
        }
        if let Some(c) = self.cache[servers] {
            return c;
        }
        let c = self.penalty * penalty_sum(&self.after.with_servers(servers), &self.terms);
        self.cache[servers] = Some(c);
        c
    }
}

impl DeltaEvaluator {
    /// Change in expected revenue when `incoming` (if any) is accepted and
    /// the servers move from `state.allocation` to the evaluated allocation.
    pub(crate) fn new(state: &ClusterState<'_>, incoming: Option<&IncomingStream>) -> Self {
        let old = state.allocation;
        let classes = state
            .classes
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                let demand = &state.demand.classes[j];
                let before = demand.queue(old.get(j));
                let mut terms = stream_terms(spec.obligation, &state.streams[j]);
                let mut after = before;
                if let Some(inc) = incoming.filter(|inc| inc.class == j) {
                    after = after.with_lambda(demand.lambda + inc.gamma);
                }
                let before_cost = spec.penalty * penalty_sum(&before, &terms);
                if let Some(inc) = incoming.filter(|inc| inc.class == j) {
                    terms.push((spec.obligation, inc.jobs as f64));
                }
                ClassTerms {
                    penalty: spec.penalty,
                    terms,
                    after,
                    before_cost,
                    cache: Vec::new(),
                }
            })
            .collect::<Vec<_>>();
        let base = incoming.map_or(0.0, |inc| state.classes[inc.class].charge)
            + classes.iter().map(|c| c.before_cost).sum::<f64>();
        Self { classes, base }
    }

    pub(crate) fn delta(&mut self, alloc: &Allocation) -> f64 {
        let mut cost = 0.0;
        for (j, class) in self.classes.iter_mut().enumerate() {
            cost += class.cost(alloc.get(j));
        }
        self.base - cost
    }
}

/// Expected revenue change from accepting `incoming` and moving from
/// `old_alloc` to `new_alloc`:
///
/// `c_i - r_i g_i(q_i; lambda_i + gamma_i, k_i, n'_i) - sum_j r_j sum_t dg_j(t)`
///
/// where the existing streams of the incoming class see the raised arrival
/// rate and every other class only its new server count.
pub fn revenue_delta_accept(
    state: &ClusterState<'_>,
    incoming: &IncomingStream,
    new_alloc: &Allocation,
    old_alloc: &Allocation,
) -> f64 {
    let view = ClusterState {
        allocation: old_alloc,
        ..*state
    };
    DeltaEvaluator::new(&view, Some(incoming)).delta(new_alloc)
}

/// Expected revenue change of a pure reallocation:
/// `-sum_j r_j sum_t [g_j(q_jt; lambda_j, k_j - l_t, n'_j) - g_j(...; n_j)]`.
pub fn revenue_delta_realloc(
    state: &ClusterState<'_>,
    new_alloc: &Allocation,
    old_alloc: &Allocation,
) -> f64 {
    let view = ClusterState {
        allocation: old_alloc,
        ..*state
    };
    DeltaEvaluator::new(&view, None).delta(new_alloc)
}

/// Direct evaluation of the acceptance delta from individual
/// [`penalty_probability`] calls; the reference for the memoised path.
pub fn revenue_delta_accept_reference(
    state: &ClusterState<'_>,
    incoming: &IncomingStream,
    new_alloc: &Allocation,
    old_alloc: &Allocation,
) -> f64 {
    let i = incoming.class;
    let spec = &state.classes[i];
    let demand = &state.demand.classes[i];
    let new_stream = demand
        .queue(new_alloc.get(i))
        .with_lambda(demand.lambda + incoming.gamma);
    let mut delta = spec.charge
        - spec.penalty * penalty_probability(spec.obligation, &new_stream, incoming.jobs as f64);
    for (j, class) in state.classes.iter().enumerate() {
        let d = &state.demand.classes[j];
        let lambda_after = if j == i { d.lambda + incoming.gamma } else { d.lambda };
        let after = d.queue(new_alloc.get(j)).with_lambda(lambda_after);
        let before = d.queue(old_alloc.get(j));
        for s in &state.streams[j] {
            let x = residual_obligation(class.obligation, s.jobs, s.completed, s.mean_wait())
                .expect("active stream");
            let k = s.remaining() as f64;
            let dg = penalty_probability(x, &after, k) - penalty_probability(x, &before, k);
            delta -= class.penalty * dg;
        }
    }
    delta
}
