//! Multiple testing and decision procedures on a common footing: the
//! discretized procedures produced by the LP, and the analytic baselines.

pub mod analytic;

pub use analytic::{calibrate_song_chi_alpha2, discretize_analytic, song_chi_size, AnalyticKind, AnalyticProcedure};

use crate::actions::{ActionSpace, SpaceKind};
use crate::error::{Error, Result};
use crate::kernel::RectGrid;
use crate::lp::{objective, SparseLp};
use crate::loss::LossSpec;
use crate::prior::Prior;
use crate::trial::{true_nulls, DerivedScale};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Cells whose most likely action has probability below `1 - RANDOMIZED_TOL`
/// count as randomized.
pub const RANDOMIZED_TOL: f64 = 1e-6;

/// Anything that assigns rejection probabilities to hypothesis sets.
pub trait Procedure {
    fn space(&self) -> &ActionSpace;

    /// `P[action satisfies pred]` when `Z ~ N((delta1, delta2), I)`.
    fn prob_where(&self, delta1: f64, delta2: f64, pred: &dyn Fn(u8) -> bool) -> f64;

    /// Probability of rejecting at least the hypotheses in `h` (or, for
    /// decisions, of recommending treatment to every subpopulation in `h`).
    fn power(&self, delta1: f64, delta2: f64, h: u8) -> f64 {
        self.prob_where(delta1, delta2, &|a| a & h == h)
    }

    /// Probability of a Type I error at `(delta1, delta2)`.
    fn fwer_at(&self, scale: &DerivedScale, delta1: f64, delta2: f64, strict: bool) -> f64 {
        self.error_rate(delta1, delta2, true_nulls(scale, delta1, delta2).mask(), strict)
    }

    /// Probability of an error when the hypotheses in `truth` are the true
    /// nulls.
    fn error_rate(&self, delta1: f64, delta2: f64, truth: u8, strict: bool) -> f64 {
        if truth == 0 {
            return 0.0;
        }
        let space = self.space().clone();
        self.prob_where(delta1, delta2, &|a| space.is_error(a, truth, strict))
    }

    /// Probability of each action in the space, in space order.
    fn action_probs(&self, delta1: f64, delta2: f64) -> Vec<f64> {
        self.space()
            .actions
            .iter()
            .map(|&s| self.prob_where(delta1, delta2, &|a| a == s))
            .collect()
    }
}

/// A procedure that is constant on every cell of a grid and takes no action
/// outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteProcedure {
    pub label: String,
    pub grid: RectGrid,
    pub space: ActionSpace,
    /// `m[cell * n_free + j]` is the probability of free action `j`; the
    /// remainder of each cell is the empty action.
    pub m: Vec<f64>,
}

impl DiscreteProcedure {
    pub fn new(label: impl Into<String>, grid: RectGrid, space: ActionSpace, m: Vec<f64>) -> Result<Self> {
        let p = DiscreteProcedure {
            label: label.into(),
            grid,
            space,
            m,
        };
        p.validate()?;
        Ok(p)
    }

    /// The procedure encoded by an LP solution. Entries are clipped to
    /// `[0, 1]` to remove solver round-off.
    pub fn from_lp(label: impl Into<String>, lp: &SparseLp, x: &[f64]) -> Result<Self> {
        let nf = lp.n_free();
        let mut m: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        for blk in m.chunks_mut(nf) {
            let s: f64 = blk.iter().sum();
            if s > 1.0 {
                blk.iter_mut().for_each(|v| *v /= s);
            }
        }
        DiscreteProcedure::new(label, lp.grid.clone(), lp.space.clone(), m)
    }

    /// Deterministic procedure from one action per cell (`0` = none,
    /// otherwise an action of the space).
    pub fn from_actions(label: impl Into<String>, grid: RectGrid, space: ActionSpace, actions: &[u8]) -> Result<Self> {
        let nf = space.n_free();
        if actions.len() != grid.len() {
            return Err(Error::Config("one action per cell required".into()));
        }
        let mut m = vec![0.0; grid.len() * nf];
        for (cell, &a) in actions.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let pos = space.position(a).ok_or(Error::ActionSpace {
                action: a,
                space: space.name(),
            })?;
            m[cell * nf + pos - 1] = 1.0;
        }
        DiscreteProcedure::new(label, grid, space, m)
    }

    pub fn validate(&self) -> Result<()> {
        let nf = self.space.n_free();
        if self.m.len() != self.grid.len() * nf {
            return Err(Error::Config(format!(
                "procedure has {} entries, grid and action space need {}",
                self.m.len(),
                self.grid.len() * nf
            )));
        }
        for blk in self.m.chunks(nf) {
            if blk.iter().any(|v| !(*v >= -1e-12)) || blk.iter().sum::<f64>() > 1.0 + 1e-9 {
                return Err(Error::Config("cell probabilities must be nonnegative and sum to at most 1".into()));
            }
        }
        Ok(())
    }

    pub fn n_free(&self) -> usize {
        self.space.n_free()
    }

    /// Distribution over all actions of the space in `cell`, empty action
    /// first.
    pub fn cell_dist(&self, cell: usize) -> Vec<f64> {
        let nf = self.n_free();
        let blk = &self.m[cell * nf..(cell + 1) * nf];
        let mut out = Vec::with_capacity(nf + 1);
        out.push((1.0 - blk.iter().sum::<f64>()).max(0.0));
        out.extend_from_slice(blk);
        out
    }

    /// Most likely action in `cell` (ties go to the earlier action).
    pub fn dominant(&self, cell: usize) -> u8 {
        let d = self.cell_dist(cell);
        let mut best = 0;
        for (i, v) in d.iter().enumerate() {
            if *v > d[best] {
                best = i;
            }
        }
        self.space.actions[best]
    }

    pub fn dominant_actions(&self) -> Vec<u8> {
        (0..self.grid.len()).map(|c| self.dominant(c)).collect()
    }

    /// Cells whose most likely action has probability below `1 - tol`.
    pub fn randomized_cells(&self, tol: f64) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&c| self.cell_dist(c).iter().cloned().fold(0.0, f64::max) < 1.0 - tol)
            .collect()
    }

    /// Probability that each cell takes an action satisfying `pred`.
    pub fn cell_mass(&self, pred: &dyn Fn(u8) -> bool) -> Vec<f64> {
        let nf = self.n_free();
        let free = self.space.free_actions();
        let sel: Vec<bool> = free.iter().map(|a| pred(*a)).collect();
        let empty = pred(0);
        self.m
            .chunks(nf)
            .map(|blk| {
                let s: f64 = blk.iter().zip(&sel).filter(|(_, k)| **k).map(|(v, _)| v).sum();
                if empty {
                    s + (1.0 - blk.iter().sum::<f64>()).max(0.0)
                } else {
                    s
                }
            })
            .collect()
    }

    /// `sum_cells c . m`: the prior-weighted expected loss avoided relative
    /// to never acting. For the indicator loss this is the weighted sum of
    /// powers reported as "one minus Bayes risk".
    pub fn expected_gain(&self, loss: &LossSpec, prior: &Prior) -> Result<f64> {
        let (c, _) = objective(&self.grid, &self.space, loss, prior)?;
        Ok(c.iter().zip(&self.m).map(|(a, b)| a * b).sum())
    }

    /// Bayes risk over the whole plane: the expected loss of never acting,
    /// minus [`Self::expected_gain`].
    pub fn bayes_risk(&self, loss: &LossSpec, prior: &Prior) -> Result<f64> {
        let mut base = 0.0;
        for (w, comp) in &prior.components {
            base += w * loss.empty_action_mean(comp)?;
        }
        Ok(base - self.expected_gain(loss, prior)?)
    }

    /// Number of cells where rejecting `h` switches off when moving one cell
    /// up along `axis` (the most likely action decides).
    pub fn monotonicity_violations(&self, h: u8, axis: usize) -> usize {
        let dom = self.dominant_actions();
        let (n1, n2) = (self.grid.n1(), self.grid.n2());
        let mut bad = 0;
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let (j1, j2) = if axis == 0 { (i1 + 1, i2) } else { (i1, i2 + 1) };
                if j1 >= n1 || j2 >= n2 {
                    continue;
                }
                let here = dom[self.grid.index(i1, i2)] & h == h;
                let next = dom[self.grid.index(j1, j2)] & h == h;
                if here && !next {
                    bad += 1;
                }
            }
        }
        bad
    }

    /// Cells whose support includes an action rejecting both subpopulation
    /// nulls without the combined null.
    pub fn incoherent_cells(&self) -> usize {
        if self.space.kind != SpaceKind::Testing {
            return 0;
        }
        let mass = self.cell_mass(&|a| a & 3 == 3 && a & 4 == 0);
        mass.iter().filter(|v| **v > 0.0).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: DiscreteProcedure = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    /// Region map, one row per cell: grid indices, lower-left corner, the
    /// most likely action, and for randomized cells the full distribution.
    pub fn write_regions_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k1,k2,z1_lo,z2_lo,action,randomized,distribution")?;
        for cell in 0..self.grid.len() {
            let (i1, i2) = self.grid.cell(cell);
            let k1 = self.grid.k_lo[0] + i1 as i64;
            let k2 = self.grid.k_lo[1] + i2 as i64;
            let d = self.cell_dist(cell);
            let top = d.iter().cloned().fold(0.0, f64::max);
            let randomized = top < 1.0 - RANDOMIZED_TOL;
            let dist = if randomized {
                self.space
                    .actions
                    .iter()
                    .zip(&d)
                    .filter(|(_, p)| **p > RANDOMIZED_TOL)
                    .map(|(a, p)| format!("{}={:.6}", self.space.label(*a), p))
                    .collect::<Vec<_>>()
                    .join(";")
            } else {
                String::new()
            };
            writeln!(
                out,
                "{},{},{:.6},{:.6},{},{},{}",
                k1,
                k2,
                self.grid.edge(0, i1),
                self.grid.edge(1, i2),
                self.space.label(self.dominant(cell)),
                randomized as u8,
                dist
            )?;
        }
        Ok(())
    }
}

impl Procedure for DiscreteProcedure {
    fn space(&self) -> &ActionSpace {
        &self.space
    }

    fn prob_where(&self, delta1: f64, delta2: f64, pred: &dyn Fn(u8) -> bool) -> f64 {
        let p1 = self.grid.axis_probs(0, delta1);
        let p2 = self.grid.axis_probs(1, delta2);
        let mass = self.cell_mass(pred);
        let n2 = self.grid.n2();
        let mut total = 0.0;
        for (i1, a) in p1.iter().enumerate() {
            let row = &mass[i1 * n2..(i1 + 1) * n2];
            total += a * row.iter().zip(&p2).map(|(m, b)| m * b).sum::<f64>();
        }
        // outside the grid nothing is done, so the empty action takes that mass
        if pred(0) {
            total += 1.0 - self.grid.coverage(delta1, delta2);
        }
        total
    }
}
