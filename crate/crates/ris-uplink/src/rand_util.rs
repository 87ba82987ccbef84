//! Deterministic scalar draws shared by channel synthesis and the driver.
//!
//! Everything routes through [`rand_core::RngCore`] so the exact bit stream
//! is pinned by the ChaCha seed alone, independent of distribution-crate
//! version churn.

use std::f64::consts::PI;

use rand_core::RngCore;

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    // Top 53 bits of a u64 scaled into the unit interval.
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One standard-normal pair via the Box–Muller transform.
pub(crate) fn standard_normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    // 1 - u keeps the log argument in (0, 1], avoiding ln(0).
    let r = (-2.0 * (1.0 - unit_f64(rng)).ln()).sqrt();
    let angle = 2.0 * PI * unit_f64(rng);
    (r * angle.cos(), r * angle.sin())
}

/// Uniform phase in `(-pi, pi]`.
pub(crate) fn uniform_phase(rng: &mut impl RngCore) -> f64 {
    PI - 2.0 * PI * unit_f64(rng)
}
