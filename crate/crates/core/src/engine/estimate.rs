//! Traffic parameter estimation at policy decision epochs.

use serde::{Deserialize, Serialize};

use super::model::{ClassDemand, DemandEstimate, EstimateSource, ServiceClass, StreamRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    /// Parameters taken from the scenario definition.
    #[default]
    Oracle,
    /// Sample moments observed since the previous decision, smoothed.
    Measured,
}

/// Windows with fewer samples than this leave the previous estimate in
/// place and keep accumulating.
pub const MIN_WINDOW_SAMPLES: u64 = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    /// Sample mean and squared coefficient of variation.
    fn mean_scv(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, if mean > 0.0 { var / (mean * mean) } else { 0.0 })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassWindow {
    last_arrival: Option<f64>,
    interarrivals: Moments,
    service: Moments,
    arrivals_est: Option<(f64, f64)>,
    service_est: Option<(f64, f64)>,
    submissions: u64,
}

fn fold(
    window: &mut Moments,
    estimate: &mut Option<(f64, f64)>,
    smoothing: f64,
) {
    if window.n < MIN_WINDOW_SAMPLES {
        return;
    }
    let fresh = window.mean_scv();
    *estimate = Some(match *estimate {
        None => fresh,
        Some((m, s)) => (
            smoothing * fresh.0 + (1.0 - smoothing) * m,
            smoothing * fresh.1 + (1.0 - smoothing) * s,
        ),
    });
    *window = Moments::default();
}

/// Produces a [`DemandEstimate`] at each decision epoch.
///
/// In measured mode the per-class job arrival process is the merge of all
/// that class's streams; its interarrival moments give `lambda` and `ca2`.
/// `delta` is the long-run submission count over elapsed time once enough
/// submissions were seen. Anything not yet measured falls back to the
/// scenario values.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandEstimator {
    mode: EstimationMode,
    smoothing: f64,
    windows: Vec<ClassWindow>,
}

impl DemandEstimator {
    pub fn new(mode: EstimationMode, smoothing: f64, classes: usize) -> Self {
        Self {
            mode,
            smoothing,
            windows: vec![ClassWindow::default(); classes],
        }
    }

    pub fn mode(&self) -> EstimationMode {
        self.mode
    }

    pub fn observe_arrival(&mut self, class: usize, time: f64) {
        let w = &mut self.windows[class];
        if let Some(last) = w.last_arrival {
            w.interarrivals.add(time - last);
        }
        w.last_arrival = Some(time);
    }

    pub fn observe_service(&mut self, class: usize, duration: f64) {
        self.windows[class].service.add(duration);
    }

    pub fn observe_submission(&mut self, class: usize) {
        self.windows[class].submissions += 1;
    }

    /// The class has no active streams left; the gap until its next
    /// arrival says nothing about the merged arrival process.
    pub fn observe_idle(&mut self, class: usize) {
        self.windows[class].last_arrival = None;
    }

    pub fn estimate(&mut self, classes: &[ServiceClass], active: &[Vec<StreamRecord>], now: f64) -> DemandEstimate {
        let oracle = DemandEstimate::oracle(classes, active);
        if self.mode == EstimationMode::Oracle {
            return oracle;
        }
        let smoothing = self.smoothing;
        let classes = self
            .windows
            .iter_mut()
            .zip(oracle.classes)
            .zip(active)
            .map(|((w, base), streams)| {
                fold(&mut w.interarrivals, &mut w.arrivals_est, smoothing);
                fold(&mut w.service, &mut w.service_est, smoothing);
                let (lambda, ca2) = match w.arrivals_est {
                    _ if streams.is_empty() => (0.0, w.arrivals_est.map_or(base.ca2, |e| e.1)),
                    Some((mean, scv)) if mean > 0.0 => (1.0 / mean, scv),
                    _ => (base.lambda, base.ca2),
                };
                let (b, cb2) = w.service_est.unwrap_or((base.b, base.cb2));
                let delta = if w.submissions >= MIN_WINDOW_SAMPLES && now > 0.0 {
                    w.submissions as f64 / now
                } else {
                    base.delta
                };
                ClassDemand { lambda, ca2, b, cb2, delta }
            })
            .collect();
        DemandEstimate {
            classes,
            source: EstimationMode::Measured.into(),
        }
    }
}

impl From<EstimationMode> for EstimateSource {
    fn from(mode: EstimationMode) -> Self {
        match mode {
            EstimationMode::Oracle => Self::Oracle,
            EstimationMode::Measured => Self::Measured,
        }
    }
}
