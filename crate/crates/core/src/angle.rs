//! Angle normalization shared by every module.

use std::f64::consts::{PI, TAU};

/// Wrap an angle into `[-pi, pi)`.
#[inline]
pub fn wrap(angle: f64) -> f64 {
    let shifted = (angle + PI).rem_euclid(TAU);
    // rem_euclid may round up to exactly TAU for tiny negative inputs
    if shifted >= TAU {
        -PI
    } else {
        shifted - PI
    }
}

/// Smallest signed difference `a - b`, wrapped into `[-pi, pi)`.
#[inline]
pub fn diff(a: f64, b: f64) -> f64 {
    wrap(a - b)
}
