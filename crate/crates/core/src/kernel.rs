//! The rectangle partition of the z-plane and the bivariate normal
//! rectangle probabilities that feed every coefficient of the LP.
//!
//! Cells are `R_{k,k'} = [k tau1, (k+1) tau1) x [k' tau2, (k'+1) tau2)`.
//! A grid over `B = [-b, b]^2` uses `k = -b/tau ..= b/tau`, i.e.
//! `2b/tau + 1` cells per axis, so the last layer of cells pokes out to
//! `b + tau`. This matches the variable counts of the full-size problem
//! (501 cells per axis at `tau = 0.02`, `b = 5`).

use crate::error::{Error, Result};
use crate::normal;
use serde::{Deserialize, Serialize};

/// A half-open cell `[lo1, hi1) x [lo2, hi2)` with its integer index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo1: f64,
    pub hi1: f64,
    pub lo2: f64,
    pub hi2: f64,
    pub index: (i64, i64),
}

impl Rect {
    /// A rectangle with arbitrary (possibly infinite) bounds, for queries.
    pub fn bounds(lo1: f64, hi1: f64, lo2: f64, hi2: f64) -> Self {
        Rect {
            lo1,
            hi1,
            lo2,
            hi2,
            index: (0, 0),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.lo1 + self.hi1), 0.5 * (self.lo2 + self.hi2))
    }

    pub fn shifted(&self, d1: f64, d2: f64) -> Self {
        Rect {
            lo1: self.lo1 + d1,
            hi1: self.hi1 + d1,
            lo2: self.lo2 + d2,
            hi2: self.hi2 + d2,
            index: self.index,
        }
    }
}

/// `P[(Z1, Z2) in rect]` for independent `Z_k ~ N(delta_k, 1)`.
pub fn rect_prob(delta1: f64, delta2: f64, rect: &Rect) -> f64 {
    normal::shifted_interval(rect.lo1, rect.hi1, delta1) * normal::shifted_interval(rect.lo2, rect.hi2, delta2)
}

/// Regular grid of cells. Cell `(i1, i2)` has integer index
/// `(k_lo[0] + i1, k_lo[1] + i2)`; cells are ordered row-major in `i1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectGrid {
    pub tau: [f64; 2],
    pub b: f64,
    pub k_lo: [i64; 2],
    pub n: [usize; 2],
}

impl RectGrid {
    /// Grid covering `[-b, b]^2` with `2b/tau + 1` cells per axis.
    pub fn new(tau1: f64, tau2: f64, b: f64) -> Result<Self> {
        let mut k_lo = [0i64; 2];
        let mut n = [0usize; 2];
        for (axis, tau) in [tau1, tau2].into_iter().enumerate() {
            if !(tau > 0.0) || !(b > 0.0) {
                return Err(Error::Config("grid spacing and half-width must be positive".into()));
            }
            let ratio = b / tau;
            let k = ratio.round();
            if (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::Config(format!("tau = {tau} does not divide b = {b}")));
            }
            k_lo[axis] = -(k as i64);
            n[axis] = 2 * k as usize + 1;
        }
        Ok(RectGrid {
            tau: [tau1, tau2],
            b,
            k_lo,
            n,
        })
    }

    pub fn square(tau: f64, b: f64) -> Result<Self> {
        RectGrid::new(tau, tau, b)
    }

    pub fn n1(&self) -> usize {
        self.n[0]
    }

    pub fn n2(&self) -> usize {
        self.n[1]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n[1] + i2
    }

    pub fn cell(&self, idx: usize) -> (usize, usize) {
        (idx / self.n[1], idx % self.n[1])
    }

    /// Edge `e` (0 ..= n) on `axis`: `(k_lo + e) tau`.
    pub fn edge(&self, axis: usize, e: usize) -> f64 {
        (self.k_lo[axis] + e as i64) as f64 * self.tau[axis]
    }

    pub fn edges(&self, axis: usize) -> Vec<f64> {
        (0..=self.n[axis]).map(|e| self.edge(axis, e)).collect()
    }

    pub fn rect(&self, i1: usize, i2: usize) -> Rect {
        Rect {
            lo1: self.edge(0, i1),
            hi1: self.edge(0, i1 + 1),
            lo2: self.edge(1, i2),
            hi2: self.edge(1, i2 + 1),
            index: (self.k_lo[0] + i1 as i64, self.k_lo[1] + i2 as i64),
        }
    }

    pub fn rects(&self) -> impl Iterator<Item = Rect> + '_ {
        (0..self.n[0]).flat_map(move |i1| (0..self.n[1]).map(move |i2| self.rect(i1, i2)))
    }

    /// Cell position containing `z` on `axis`, if inside the grid.
    pub fn locate(&self, axis: usize, z: f64) -> Option<usize> {
        let k = (z / self.tau[axis]).floor() as i64;
        let i = k - self.k_lo[axis];
        // guard against floor landing one cell off at exact edges
        let i = if i >= 0 && (i as usize) < self.n[axis] && z < self.edge(axis, i as usize) {
            i - 1
        } else if i >= 0 && (i as usize) < self.n[axis] && z >= self.edge(axis, i as usize + 1) {
            i + 1
        } else {
            i
        };
        if i < 0 || i as usize >= self.n[axis] {
            None
        } else {
            Some(i as usize)
        }
    }

    /// `P[Z_axis in cell i]` for every cell on `axis`, with `Z ~ N(delta, 1)`.
    pub fn axis_probs(&self, axis: usize, delta: f64) -> Vec<f64> {
        axis_interval_probs(&self.edges(axis), delta)
    }

    /// Sum of all cell probabilities, i.e. `P[(Z1, Z2) in grid]`.
    pub fn coverage(&self, delta1: f64, delta2: f64) -> f64 {
        let lo1 = self.edge(0, 0);
        let hi1 = self.edge(0, self.n[0]);
        let lo2 = self.edge(1, 0);
        let hi2 = self.edge(1, self.n[1]);
        normal::shifted_interval(lo1, hi1, delta1) * normal::shifted_interval(lo2, hi2, delta2)
    }
}

/// Interval probabilities `P[e_i <= Z < e_{i+1}]` for `Z ~ N(delta, 1)`.
pub fn axis_interval_probs(edges: &[f64], delta: f64) -> Vec<f64> {
    edges
        .windows(2)
        .map(|w| normal::shifted_interval(w[0], w[1], delta))
        .collect()
}
