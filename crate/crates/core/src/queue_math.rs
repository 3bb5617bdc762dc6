//! Closed-form queueing and probability functions shared by the policies.
//!
//! Everything here is a pure function of its arguments. Saturated
//! subsystems (offered load at or above the server count) are an error for
//! the waiting-time formulas and a certain penalty for
//! [`penalty_probability`].

use thiserror::Error;

/// Arguments outside the domain of a delay formula.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("no servers allocated")]
    NoServers,
    #[error("offered load {rho} is not below server count {n}")]
    Saturated { n: usize, rho: f64 },
    #[error("invalid offered load {0}")]
    InvalidLoad(f64),
}

/// Demand and capacity of one service pool.
///
/// The offered load is always derived as `lambda * b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    /// Servers in the pool.
    pub n: usize,
    /// Job arrival rate.
    pub lambda: f64,
    /// Mean service time, strictly positive.
    pub b: f64,
    /// Squared coefficient of variation of interarrival intervals.
    pub ca2: f64,
    /// Squared coefficient of variation of service times.
    pub cb2: f64,
}

impl QueueParams {
    pub fn new(n: usize, lambda: f64, b: f64, ca2: f64, cb2: f64) -> Self {
        Self { n, lambda, b, ca2, cb2 }
    }

    /// Poisson arrivals and exponential service.
    pub fn markovian(n: usize, lambda: f64, b: f64) -> Self {
        Self::new(n, lambda, b, 1.0, 1.0)
    }

    pub fn rho(&self) -> f64 {
        self.lambda * self.b
    }

    pub fn with_servers(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn is_valid(&self) -> bool {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        finite_nonneg(self.lambda)
            && self.b.is_finite()
            && self.b > 0.0
            && finite_nonneg(self.ca2)
            && finite_nonneg(self.cb2)
    }

    /// True when the pool cannot keep up with its arrivals.
    pub fn is_saturated(&self) -> bool {
        self.n == 0 || self.rho() >= self.n as f64
    }
}

fn check_domain(n: usize, rho: f64) -> Result<(), DomainError> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(DomainError::InvalidLoad(rho));
    }
    if n == 0 {
        return Err(DomainError::NoServers);
    }
    if rho >= n as f64 {
        return Err(DomainError::Saturated { n, rho });
    }
    Ok(())
}

/// Erlang loss probability with `n` trunks, by the ratio recurrence
/// `B(j) = rho B(j-1) / (j + rho B(j-1))`. Never overflows.
pub fn erlang_b(n: usize, rho: f64) -> f64 {
    let mut b = 1.0;
    for j in 1..=n {
        let t = rho * b;
        b = t / (j as f64 + t);
    }
    b
}

/// Probability that an arriving job has to queue in an M/M/n system
/// (Erlang delay formula).
pub fn erlang_c(n: usize, rho: f64) -> Result<f64, DomainError> {
    check_domain(n, rho)?;
    let b = erlang_b(n, rho);
    let nf = n as f64;
    let c = nf * b / (nf - rho * (1.0 - b));
    Ok(c.clamp(0.0, 1.0))
}

/// Mean waiting time in M/M/n: `b / (n - rho) * C(n, rho)`.
pub fn mmn_wait(n: usize, rho: f64, b: f64) -> Result<f64, DomainError> {
    let c = erlang_c(n, rho)?;
    Ok(b / (n as f64 - rho) * c)
}

/// GI/G/n mean waiting time: the M/M/n value scaled by `(ca2 + cb2) / 2`.
pub fn gign_wait(p: &QueueParams) -> Result<f64, DomainError> {
    let w = mmn_wait(p.n, p.rho(), p.b)?;
    Ok((p.ca2 + p.cb2) / 2.0 * w)
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

// Rational approximation of the upper tail for x >= 0, |error| < 7.5e-8.
fn upper_tail_nonneg(x: f64) -> f64 {
    const P: f64 = 0.231_641_9;
    const B: [f64; 5] = [
        0.319_381_530,
        -0.356_563_782,
        1.781_477_937,
        -1.821_255_978,
        1.330_274_429,
    ];
    let t = 1.0 / (1.0 + P * x);
    let poly = t * (B[0] + t * (B[1] + t * (B[2] + t * (B[3] + t * B[4]))));
    std_normal_pdf(x) * poly
}

/// `1 - Phi(x)`, evaluated without cancellation in the upper tail.
pub fn std_normal_sf(x: f64) -> f64 {
    if x >= 0.0 {
        upper_tail_nonneg(x)
    } else {
        1.0 - upper_tail_nonneg(-x)
    }
}

/// Standard normal CDF, absolute error below 1e-7.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - upper_tail_nonneg(x)
    } else {
        upper_tail_nonneg(-x)
    }
}

/// Probability that the average wait over the next `k` jobs exceeds `x`.
///
/// The average is treated as normal with mean equal to the GI/G/n wait
/// `beta` and variance `beta / k`. A saturated pool pays the penalty with
/// certainty, and so does any non-positive residual allowance.
pub fn penalty_probability(x: f64, p: &QueueParams, k: f64) -> f64 {
    if p.is_saturated() {
        return 1.0;
    }
    let beta = match gign_wait(p) {
        Ok(beta) => beta,
        Err(_) => return 1.0,
    };
    if x <= 0.0 {
        return 1.0;
    }
    if beta <= 0.0 {
        return 0.0;
    }
    std_normal_sf((x - beta) / (beta / k).sqrt())
}
