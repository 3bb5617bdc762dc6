//! Variate generation with analytically known moments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("{0} must be finite and positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("branch probability must lie strictly between 0 and 1, got {0}")]
    BranchProbability(f64),
}

/// A positive random variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    /// Mixture of two exponentials: mean `mean1` with probability `p1`,
    /// otherwise mean `mean2`.
    Hyperexponential2 { p1: f64, mean1: f64, mean2: f64 },
}

fn positive(name: &'static str, v: f64) -> Result<(), DistributionError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(DistributionError::NonPositive(name, v))
    }
}

impl Distribution {
    pub fn exponential(rate: f64) -> Result<Self, DistributionError> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn exponential_with_mean(mean: f64) -> Result<Self, DistributionError> {
        positive("mean", mean)?;
        Ok(Self::Exponential { rate: 1.0 / mean })
    }

    pub fn deterministic(value: f64) -> Result<Self, DistributionError> {
        positive("value", value)?;
        Ok(Self::Deterministic { value })
    }

    pub fn hyperexponential2(p1: f64, mean1: f64, mean2: f64) -> Result<Self, DistributionError> {
        let d = Self::Hyperexponential2 { p1, mean1, mean2 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        match *self {
            Self::Exponential { rate } => positive("rate", rate),
            Self::Deterministic { value } => positive("value", value),
            Self::Hyperexponential2 { p1, mean1, mean2 } => {
                if !(p1 > 0.0 && p1 < 1.0) {
                    return Err(DistributionError::BranchProbability(p1));
                }
                positive("mean1", mean1)?;
                positive("mean2", mean2)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Deterministic { value } => value,
            Self::Hyperexponential2 { p1, mean1, mean2 } => p1 * mean1 + (1.0 - p1) * mean2,
        }
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        match *self {
            Self::Exponential { .. } => 1.0,
            Self::Deterministic { .. } => 0.0,
            Self::Hyperexponential2 { p1, mean1, mean2 } => {
                let m = self.mean();
                let second = 2.0 * (p1 * mean1 * mean1 + (1.0 - p1) * mean2 * mean2);
                second / (m * m) - 1.0
            }
        }
    }

    /// `(mean, scv)`.
    pub fn moments(&self) -> (f64, f64) {
        (self.mean(), self.scv())
    }

    /// Same shape, rescaled to the given mean.
    pub fn with_mean(&self, mean: f64) -> Self {
        let s = mean / self.mean();
        match *self {
            Self::Exponential { rate } => Self::Exponential { rate: rate / s },
            Self::Deterministic { value } => Self::Deterministic { value: value * s },
            Self::Hyperexponential2 { p1, mean1, mean2 } => Self::Hyperexponential2 {
                p1,
                mean1: mean1 * s,
                mean2: mean2 * s,
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => {
                let e: f64 = rng.sample(Exp1);
                e / rate
            }
            Self::Deterministic { value } => value,
            Self::Hyperexponential2 { p1, mean1, mean2 } => {
                let mean = if rng.random::<f64>() < p1 { mean1 } else { mean2 };
                let e: f64 = rng.sample(Exp1);
                e * mean
            }
        }
    }
}

/// Independent, reproducible random substream.
///
/// A `(seed, stream_id)` pair always yields the same sequence, and distinct
/// stream ids never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn sample(&mut self, d: &Distribution) -> f64 {
        d.sample(&mut self.rng)
    }
}

/// What a substream is used for. Mixed into the stream id so that the
/// inputs of one source never depend on how another source was consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    StreamSubmissions = 1,
    JobInterarrivals = 2,
    ServiceTimes = 3,
}

/// Stream id for `purpose` of `class`, optionally further keyed by the
/// ordinal of a submitted stream within its class.
pub fn substream_id(purpose: Purpose, class: usize, ordinal: u64) -> u64 {
    ((purpose as u64) << 60) | ((class as u64 & 0xfff) << 48) | (ordinal & 0xffff_ffff_ffff)
}
