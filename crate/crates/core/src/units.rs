//! Unit conventions shared by every module.
//!
//! Lengths are meters, times are seconds, velocities at type boundaries are
//! km/hr. Meters per second only appear inside formulas.

/// km/hr per m/s. The only place this factor is spelled out.
pub const KMH_PER_MPS: f64 = 3.6;

#[inline]
pub fn mps_to_kmh(v: f64) -> f64 {
    v * KMH_PER_MPS
}

#[inline]
pub fn kmh_to_mps(v: f64) -> f64 {
    v / KMH_PER_MPS
}
