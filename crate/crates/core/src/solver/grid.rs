use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::dynamics::ReducedState;
use crate::{Error, Result};

/// Regular grid over `[0, r_max] x [-pi, pi) x [-pi, pi)`.
///
/// Range nodes include both endpoints; the angle axes are periodic and omit the
/// duplicate `+pi` node. Flat storage is `(i_r * n_xi_a + i_xi_a) * n_xi_t + i_xi_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_xi_a: usize,
    pub n_xi_t: usize,
    pub r_max: f64,
}

/// Cell location along one axis: lower node, upper node and fraction toward the upper.
#[derive(Debug, Clone, Copy)]
struct AxisPos {
    lo: usize,
    hi: usize,
    frac: f64,
}

// Fractions this close to a node are snapped onto it.
const NODE_SNAP: f64 = 1e-9;

impl GridSpec {
    pub fn new(n_r: usize, n_xi_a: usize, n_xi_t: usize, r_max: f64) -> Result<Self> {
        let grid = Self {
            n_r,
            n_xi_a,
            n_xi_t,
            r_max,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn cubic(n: usize, r_max: f64) -> Result<Self> {
        Self::new(n, n, n, r_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r < 3 || self.n_xi_a < 3 || self.n_xi_t < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 3 nodes per dimension, got {}x{}x{}",
                self.n_r, self.n_xi_a, self.n_xi_t
            )));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "r_max must be positive, got {}",
                self.r_max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_r * self.n_xi_a * self.n_xi_t
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes in one constant-range slab.
    #[inline]
    pub fn slab_len(&self) -> usize {
        self.n_xi_a * self.n_xi_t
    }

    #[inline]
    pub fn dr(&self) -> f64 {
        self.r_max / (self.n_r - 1) as f64
    }

    #[inline]
    pub fn dxi_a(&self) -> f64 {
        TAU / self.n_xi_a as f64
    }

    #[inline]
    pub fn dxi_t(&self) -> f64 {
        TAU / self.n_xi_t as f64
    }

    #[inline]
    pub fn index(&self, i_r: usize, i_a: usize, i_t: usize) -> usize {
        (i_r * self.n_xi_a + i_a) * self.n_xi_t + i_t
    }

    #[inline]
    pub fn unravel(&self, index: usize) -> (usize, usize, usize) {
        let i_t = index % self.n_xi_t;
        let rest = index / self.n_xi_t;
        (rest / self.n_xi_a, rest % self.n_xi_a, i_t)
    }

    #[inline]
    pub fn r_at(&self, i_r: usize) -> f64 {
        if i_r + 1 == self.n_r {
            self.r_max
        } else {
            i_r as f64 * self.dr()
        }
    }

    #[inline]
    pub fn xi_a_at(&self, i_a: usize) -> f64 {
        -PI + i_a as f64 * self.dxi_a()
    }

    #[inline]
    pub fn xi_t_at(&self, i_t: usize) -> f64 {
        -PI + i_t as f64 * self.dxi_t()
    }

    pub fn node_state(&self, i_r: usize, i_a: usize, i_t: usize) -> ReducedState {
        ReducedState {
            r: self.r_at(i_r),
            xi_a: self.xi_a_at(i_a),
            xi_t: self.xi_t_at(i_t),
        }
    }

    /// Same node count on both angle axes, so exchanging them maps nodes to nodes.
    pub fn is_swappable(&self) -> bool {
        self.n_xi_a == self.n_xi_t
    }

    /// Index of the node whose angle axes are exchanged.
    #[inline]
    pub fn swapped_index(&self, index: usize) -> usize {
        let (i, j, k) = self.unravel(index);
        self.index(i, k, j)
    }

    /// Nearest angle node on a periodic axis with `n` nodes.
    pub fn nearest_angle_node(n: usize, xi: f64) -> usize {
        let pos = (angle::wrap(xi) + PI) / (TAU / n as f64);
        (pos.round() as usize) % n
    }

    fn locate_r(&self, r: f64) -> AxisPos {
        let pos = (r.clamp(0.0, self.r_max) / self.dr()).clamp(0.0, (self.n_r - 1) as f64);
        let pos = snap(pos);
        let lo = (pos.floor() as usize).min(self.n_r - 2);
        AxisPos {
            lo,
            hi: lo + 1,
            frac: pos - lo as f64,
        }
    }

    fn locate_angle(n: usize, xi: f64) -> AxisPos {
        let pos = snap((angle::wrap(xi) + PI) / (TAU / n as f64));
        let lo = (pos.floor() as usize).min(n - 1);
        let mut frac = pos - lo as f64;
        if frac < 0.0 {
            frac = 0.0;
        }
        AxisPos {
            lo,
            hi: (lo + 1) % n,
            frac,
        }
    }

    /// Trilinear interpolation of node data, clamped in range and periodic in both
    /// angles.
    pub fn interpolate(&self, data: &[f64], state: &ReducedState) -> f64 {
        debug_assert_eq!(data.len(), self.len());
        let r = self.locate_r(state.r);
        let a = Self::locate_angle(self.n_xi_a, state.xi_a);
        let t = Self::locate_angle(self.n_xi_t, state.xi_t);
        let at = |i, j, k| data[self.index(i, j, k)];
        let along_t = |i, j| lerp(at(i, j, t.lo), at(i, j, t.hi), t.frac);
        let along_a = |i| lerp(along_t(i, a.lo), along_t(i, a.hi), a.frac);
        lerp(along_a(r.lo), along_a(r.hi), r.frac)
    }
}

#[inline]
fn lerp(lo: f64, hi: f64, frac: f64) -> f64 {
    if frac == 0.0 {
        lo
    } else if frac == 1.0 {
        hi
    } else {
        lo + frac * (hi - lo)
    }
}

#[inline]
fn snap(pos: f64) -> f64 {
    let nearest = pos.round();
    if (pos - nearest).abs() < NODE_SNAP {
        nearest
    } else {
        pos
    }
}
