//! Revenue bookkeeping, per-stream SLA assessment and batch-means output
//! analysis.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::engine::{ServiceClass, StreamRecord};

/// Net earning of a completed stream: the charge, less the penalty when
/// its average wait exceeds the obligation. Equality is compliant.
pub fn assess_stream(record: &StreamRecord, class: &ServiceClass) -> f64 {
    debug_assert!(record.is_complete());
    if is_violation(record, class) {
        class.charge - class.penalty
    } else {
        class.charge
    }
}

pub fn is_violation(record: &StreamRecord, class: &ServiceClass) -> bool {
    record.mean_wait() > class.obligation
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub time: f64,
    pub class: usize,
    pub net: f64,
    pub penalized: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassTally {
    pub accepted: u64,
    pub rejected: u64,
    pub completed: u64,
    pub penalized: u64,
    pub net: f64,
}

/// Counts attributed to one batch of the run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchTally {
    pub accepted: u64,
    pub rejected: u64,
    pub penalized: u64,
    pub completed: u64,
    pub net: f64,
}

/// Stream outcomes of one run. Revenue is attributed at stream completion.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueLedger {
    pub classes: Vec<ClassTally>,
    pub completions: Vec<Completion>,
    pub batches: Vec<BatchTally>,
    warmup: f64,
    batch_length: f64,
}

impl RevenueLedger {
    /// Ledger whose batches split `(warmup, horizon]` into `batches` equal
    /// portions. Events before the warm-up are tallied per class but belong
    /// to no batch.
    pub fn new(classes: usize, horizon: f64, batches: usize, warmup: f64) -> Self {
        let batches = batches.max(1);
        Self {
            classes: vec![ClassTally::default(); classes],
            completions: Vec::new(),
            batches: vec![BatchTally::default(); batches],
            warmup,
            batch_length: (horizon - warmup) / batches as f64,
        }
    }

    pub fn batch_length(&self) -> f64 {
        self.batch_length
    }

    pub fn warmup(&self) -> f64 {
        self.warmup
    }

    /// Batch containing `time`, `None` during the warm-up. The horizon
    /// itself belongs to the last batch.
    pub fn batch_index(&self, time: f64) -> Option<usize> {
        if time < self.warmup {
            return None;
        }
        let idx = ((time - self.warmup) / self.batch_length) as usize;
        Some(idx.min(self.batches.len() - 1))
    }

    fn batch_mut(&mut self, time: f64) -> Option<&mut BatchTally> {
        let idx = self.batch_index(time)?;
        self.batches.get_mut(idx)
    }

    pub fn record_admission(&mut self, time: f64, class: usize, accepted: bool) {
        let tally = &mut self.classes[class];
        if accepted {
            tally.accepted += 1;
        } else {
            tally.rejected += 1;
        }
        if let Some(b) = self.batch_mut(time) {
            if accepted {
                b.accepted += 1;
            } else {
                b.rejected += 1;
            }
        }
    }

    /// Books a completed stream and returns its net earning.
    pub fn record_completion(&mut self, time: f64, record: &StreamRecord, class: &ServiceClass) -> f64 {
        let penalized = is_violation(record, class);
        let net = assess_stream(record, class);
        let tally = &mut self.classes[record.class];
        tally.completed += 1;
        tally.penalized += u64::from(penalized);
        tally.net += net;
        if let Some(b) = self.batch_mut(time) {
            b.completed += 1;
            b.penalized += u64::from(penalized);
            b.net += net;
        }
        self.completions.push(Completion {
            time,
            class: record.class,
            net,
            penalized,
        });
        net
    }

    pub fn total_net(&self) -> f64 {
        self.completions.iter().map(|c| c.net).sum()
    }

    /// Revenue earned per unit time over each batch.
    pub fn batch_rates(&self) -> Vec<f64> {
        self.batches.iter().map(|b| b.net / self.batch_length).collect()
    }

    /// Net earnings attributed within `[start, end)`, per unit time.
    pub fn revenue_rate(&self, start: f64, end: f64) -> f64 {
        revenue_rate(&self.completions, start, end)
    }
}

/// Net earnings of the completions within `[start, end)`, divided by the
/// interval length.
pub fn revenue_rate(completions: &[Completion], start: f64, end: f64) -> f64 {
    debug_assert!(end > start);
    let net: f64 = completions
        .iter()
        .filter(|c| c.time >= start && c.time < end)
        .map(|c| c.net)
        .sum();
    net / (end - start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("at least two batches are needed, got {0}")]
pub struct TooFewBatches(pub usize);

/// Batch-means summary with a 95% Student-t confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub batches: usize,
    pub batch_length: f64,
    pub values: Vec<f64>,
    pub mean: f64,
    pub half_width: f64,
}

impl BatchStats {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &BatchStats) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Two-sided 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

pub fn batch_confidence(values: &[f64], batch_length: f64) -> Result<BatchStats, TooFewBatches> {
    let n = values.len();
    if n < 2 {
        return Err(TooFewBatches(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half_width = t_quantile_975(n - 1) * (var / n as f64).sqrt();
    Ok(BatchStats {
        batches: n,
        batch_length,
        values: values.to_vec(),
        mean,
        half_width,
    })
}
