//! Generalized inverse Gaussian draws of order 1/2.
//!
//! The latent mixture weight has full conditional density proportional to
//!
//! ```text
//! w^(-1/2) exp(-(chi / w + psi w) / 2),    w > 0
//! ```
//!
//! i.e. GIG(lambda = 1/2, chi, psi). If `X ~ GIG(1/2, chi, psi)` then
//! `1/X ~ GIG(-1/2, psi, chi)`, which is the inverse Gaussian distribution
//! with mean `sqrt(psi/chi)` and shape `psi`, so one exact inverse-Gaussian
//! draw (Michael, Schucany and Haas) suffices. The chi -> 0 limit is
//! Gamma(1/2, rate psi/2), reached through `z^2 / psi` with standard
//! normal `z`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Draws from GIG(1/2, chi, psi). Requires `psi > 0` and `chi >= 0`.
pub fn sample_gig_half<R: Rng + ?Sized>(chi: f64, psi: f64, rng: &mut R) -> f64 {
    debug_assert!(psi > 0.0 && psi.is_finite(), "psi = {psi}");
    debug_assert!(chi >= 0.0 && chi.is_finite(), "chi = {chi}");
    let z: f64 = StandardNormal.sample(rng);
    let y = z * z;
    if chi * psi < 1e-10 {
        // Gamma(1/2, rate psi/2) limit; also avoids the cancellation the
        // inverse-Gaussian roots would suffer at extreme mean values.
        return (y / psi).max(f64::MIN_POSITIVE);
    }
    let m = (psi / chi).sqrt();
    let s = psi;
    // Larger root first (pure additions), smaller root via x1 x2 = m^2.
    let x2 = m + (m / (2.0 * s)) * (m * y + (4.0 * m * s * y + m * m * y * y).sqrt());
    let x1 = m * m / x2;
    let u: f64 = rng.random();
    let v = if u <= m / (m + x1) { x1 } else { x2 };
    (1.0 / v).max(f64::MIN_POSITIVE)
}
