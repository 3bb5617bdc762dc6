//! Static per-class admission thresholds.
//!
//! With servers partitioned once by potential load, each class is treated
//! in isolation: the number of its active streams under a threshold `M`
//! follows the Erlang loss model with `M` trunks and intensity
//! `sigma = delta k / gamma`, and `M` is picked to maximise the expected
//! revenue rate.

use serde::{Deserialize, Serialize};

use crate::engine::{Allocation, ClassDemand, ServiceClass};
use crate::queue_math::penalty_probability;

use super::allocation::{offered_loads_allocation, WeightRule};

/// Admission limit on concurrently active streams of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Finite(u32),
    Unbounded,
}

impl Threshold {
    pub fn admits(&self, active: usize) -> bool {
        match *self {
            Self::Finite(m) => (active as u64) < m as u64,
            Self::Unbounded => true,
        }
    }
}

/// Accept iff fewer than the threshold's streams are active.
pub fn threshold_admission(active: usize, threshold: Threshold) -> bool {
    threshold.admits(active)
}

/// How the revenue rate of a threshold is assembled from the loss-model
/// state probabilities `p_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdForm {
    /// `sum_{j=0}^{M} p_j delta (c - r g(q; j gamma))`. Because `g` grows
    /// with `j`, this is non-increasing in `M`.
    Verbatim,
    /// `sum_{j=0}^{M-1} p_j delta (c - r g(q; j gamma))`: streams offered in
    /// the blocked state earn nothing.
    #[default]
    ExcludeBlocked,
    /// `sum_{j=0}^{M-1} p_j delta (c - r g(q; (j+1) gamma))`: a stream
    /// accepted with `j` others active sees the load including itself.
    AcceptedLoad,
}

impl ThresholdForm {
    // (highest state earning revenue, load offset applied to j)
    fn layout(self, m: u32) -> (Option<u32>, u32) {
        match self {
            Self::Verbatim => (Some(m), 0),
            Self::ExcludeBlocked => (m.checked_sub(1), 0),
            Self::AcceptedLoad => (m.checked_sub(1), 1),
        }
    }
}

/// Erlang loss state distribution with `max` trunks, by the ratio
/// recurrence `p_j = p_{j-1} sigma / j` and a final normalisation.
pub fn erlang_loss_pmf(sigma: f64, max: u32) -> Vec<f64> {
    let mut p = Vec::with_capacity(max as usize + 1);
    p.push(1.0);
    for j in 1..=max as usize {
        let next = p[j - 1] * sigma / j as f64;
        if next > 1e200 {
            // rescale to stay finite; normalisation removes the factor
            p.iter_mut().for_each(|v| *v *= 1e-200);
            p.push(next * 1e-200);
        } else {
            p.push(next);
        }
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

fn penalty_at(class: &ServiceClass, demand: &ClassDemand, servers: usize, streams: u32) -> f64 {
    let params = demand.queue(servers).with_lambda(streams as f64 * class.gamma);
    penalty_probability(class.obligation, &params, class.jobs as f64)
}

/// Stream intensity `delta k / gamma` at the estimated submission rate.
pub fn stream_intensity(class: &ServiceClass, demand: &ClassDemand) -> f64 {
    demand.delta * class.jobs as f64 / class.gamma
}

/// Expected revenue per unit time of `class` with `servers` servers under
/// threshold `max`. The stream submission rate is `demand.delta`.
pub fn threshold_revenue_rate(
    class: &ServiceClass,
    demand: &ClassDemand,
    servers: usize,
    max: u32,
    form: ThresholdForm,
) -> f64 {
    RevenueCurve::new(class, demand, servers, form).rate(max)
}

/// Per-state earnings `delta (c - r g)`, cached across thresholds.
struct RevenueCurve<'a> {
    class: &'a ServiceClass,
    demand: &'a ClassDemand,
    servers: usize,
    form: ThresholdForm,
    sigma: f64,
    earnings: Vec<f64>,
}

impl<'a> RevenueCurve<'a> {
    fn new(class: &'a ServiceClass, demand: &'a ClassDemand, servers: usize, form: ThresholdForm) -> Self {
        Self {
            class,
            demand,
            servers,
            form,
            sigma: stream_intensity(class, demand),
            earnings: Vec::new(),
        }
    }

    fn earning(&mut self, streams: u32) -> f64 {
        let idx = streams as usize;
        while self.earnings.len() <= idx {
            let j = self.earnings.len() as u32;
            let g = penalty_at(self.class, self.demand, self.servers, j);
            self.earnings
                .push(self.demand.delta * (self.class.charge - self.class.penalty * g));
        }
        self.earnings[idx]
    }

    fn rate(&mut self, max: u32) -> f64 {
        let (top, offset) = self.form.layout(max);
        let Some(top) = top else {
            return 0.0;
        };
        let p = erlang_loss_pmf(self.sigma, max);
        (0..=top).map(|j| p[j as usize] * self.earning(j + offset)).sum()
    }
}

/// Search limits for [`compute_threshold`]; `None` selects the defaults
/// `epsilon = 1e-6 delta c` and `cap = 10 sigma + 100`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThresholdSearch {
    pub epsilon: Option<f64>,
    pub cap: Option<u32>,
    pub form: ThresholdForm,
}

impl ThresholdSearch {
    pub fn epsilon_for(&self, class: &ServiceClass, demand: &ClassDemand) -> f64 {
        self.epsilon
            .unwrap_or(1e-6 * demand.delta * class.charge)
            .max(f64::MIN_POSITIVE)
    }

    pub fn cap_for(&self, class: &ServiceClass, demand: &ClassDemand) -> u32 {
        self.cap.unwrap_or_else(|| {
            let sigma = stream_intensity(class, demand);
            (10.0 * sigma + 100.0).ceil().min(u32::MAX as f64) as u32
        })
    }
}

/// Scans `R(M)` for `M = 1, 2, ...` and returns the `M` preceding the first
/// decrease.
///
/// An increase below epsilon ends the scan as unbounded, provided `R(cap)`
/// is not below the current value by more than epsilon; otherwise the
/// plateau is a shoulder before a peak and the scan continues. Reaching the
/// cap is unbounded too. A class without servers admits nothing.
pub fn compute_threshold(
    class: &ServiceClass,
    demand: &ClassDemand,
    servers: usize,
    search: &ThresholdSearch,
) -> Threshold {
    if servers == 0 {
        return Threshold::Finite(0);
    }
    let epsilon = search.epsilon_for(class, demand);
    let cap = search.cap_for(class, demand).max(1);
    let mut curve = RevenueCurve::new(class, demand, servers, search.form);
    let mut tail: Option<f64> = None;
    let mut prev = curve.rate(1);
    for m in 2..=cap {
        let cur = curve.rate(m);
        if cur < prev {
            return Threshold::Finite(m - 1);
        }
        if cur - prev < epsilon {
            let limit = *tail.get_or_insert_with(|| curve.rate(cap));
            if limit >= cur - epsilon {
                return Threshold::Unbounded;
            }
        }
        prev = cur;
    }
    Threshold::Unbounded
}

/// Static partition in proportion to `delta k b` from the given demand,
/// every class with positive potential load keeping a server.
pub fn potential_loads_from_demand(
    classes: &[ServiceClass],
    demand: &[ClassDemand],
    total: usize,
    weights: WeightRule,
) -> Allocation {
    let phi: Vec<f64> = classes
        .iter()
        .zip(demand)
        .map(|(c, d)| d.delta * c.jobs as f64 * d.b)
        .collect();
    let floor: Vec<bool> = phi.iter().map(|&p| p > 0.0).collect();
    offered_loads_allocation(&phi, &weights.weights(classes), total, &floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEntry {
    pub threshold: Threshold,
    pub servers: usize,
    pub sigma: f64,
}

/// Thresholds and static allocation for one set of demand parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub entries: Vec<ThresholdEntry>,
    pub allocation: Allocation,
    basis: Vec<ClassDemand>,
}

impl ThresholdTable {
    pub fn build(
        classes: &[ServiceClass],
        demand: &[ClassDemand],
        total: usize,
        weights: WeightRule,
        search: &ThresholdSearch,
    ) -> Self {
        let allocation = potential_loads_from_demand(classes, demand, total, weights);
        let entries = classes
            .iter()
            .zip(demand)
            .enumerate()
            .map(|(i, (class, d))| {
                let servers = allocation.get(i);
                ThresholdEntry {
                    threshold: compute_threshold(class, d, servers, search),
                    servers,
                    sigma: stream_intensity(class, d),
                }
            })
            .collect();
        Self {
            entries,
            allocation,
            basis: demand.to_vec(),
        }
    }

    pub fn threshold(&self, class: usize) -> Threshold {
        self.entries[class].threshold
    }

    /// True when a parameter the table depends on moved by more than
    /// `drift` relative to the values it was built from. Arrival rates of
    /// jobs are excluded; they follow the admitted stream count.
    pub fn is_stale(&self, demand: &[ClassDemand], drift: f64) -> bool {
        let moved = |old: f64, new: f64| {
            let diff = (new - old).abs();
            diff > 1e-9 && diff > drift * old.abs().max(new.abs())
        };
        self.basis.iter().zip(demand).any(|(old, new)| {
            moved(old.delta, new.delta)
                || moved(old.b, new.b)
                || moved(old.cb2, new.cb2)
                || moved(old.ca2, new.ca2)
        })
    }
}
