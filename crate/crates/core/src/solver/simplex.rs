//! Dense revised simplex for small LPs `max c.x, A x (<= | =) b, x >= 0`,
//! with columns that can be appended between solves. Used for the column
//! generation master and for the purification subproblem.
//!
//! The basis inverse is kept explicitly and updated in product form,
//! with a fresh Gauss-Jordan factorization every `REFACTOR` pivots.

use crate::error::{Error, Result};

const REFACTOR: usize = 64;
const BLAND_AFTER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Reduced cost needed to enter the basis.
    pub optimality: f64,
    /// Smallest usable pivot element.
    pub pivot: f64,
    /// Primal feasibility (also the Harris ratio-test slack).
    pub feasibility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            optimality: 1e-10,
            pivot: 1e-11,
            feasibility: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simplex {
    m: usize,
    rhs: Vec<f64>,
    cols: Vec<Vec<f64>>,
    cost: Vec<f64>,
    kind: Vec<Kind>,
    /// Structural column ids in insertion order.
    structural: Vec<usize>,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
    pub tol: Tolerances,
    pub pivots: usize,
    phase1_duals: Option<Vec<f64>>,
}

impl Simplex {
    /// Rows with the given right-hand sides and senses and no structural
    /// columns yet. Every `Le` row gets a slack; rows that cannot start
    /// from a slack (negative rhs, or equality) get an artificial.
    pub fn new(rhs: Vec<f64>, sense: &[Sense]) -> Self {
        let m = rhs.len();
        assert_eq!(sense.len(), m);
        let mut s = Simplex {
            m,
            rhs,
            cols: Vec::new(),
            cost: Vec::new(),
            kind: Vec::new(),
            structural: Vec::new(),
            basis: vec![usize::MAX; m],
            position: Vec::new(),
            binv: vec![0.0; m * m],
            xb: vec![0.0; m],
            since_refactor: 0,
            tol: Tolerances::default(),
            pivots: 0,
            phase1_duals: None,
        };
        for i in 0..m {
            let unit = |v: f64| {
                let mut c = vec![0.0; m];
                c[i] = v;
                c
            };
            if sense[i] == Sense::Le {
                let id = s.push(unit(1.0), 0.0, Kind::Slack);
                if s.rhs[i] >= 0.0 {
                    s.basis[i] = id;
                }
            }
            if s.basis[i] == usize::MAX {
                let sign = if s.rhs[i] >= 0.0 { 1.0 } else { -1.0 };
                let id = s.push(unit(sign), 0.0, Kind::Artificial);
                s.basis[i] = id;
            }
        }
        for (r, &b) in s.basis.iter().enumerate() {
            s.position[b] = Some(r);
        }
        s.refactor().expect("initial basis is diagonal");
        s
    }

    fn push(&mut self, col: Vec<f64>, cost: f64, kind: Kind) -> usize {
        self.cols.push(col);
        self.cost.push(cost);
        self.kind.push(kind);
        self.position.push(None);
        self.cols.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    /// Append a structural column; returns its index among structural
    /// columns.
    pub fn add_column(&mut self, col: Vec<f64>, cost: f64) -> usize {
        assert_eq!(col.len(), self.m);
        let id = self.push(col, cost, Kind::Structural);
        self.structural.push(id);
        self.structural.len() - 1
    }

    pub fn n_structural(&self) -> usize {
        self.structural.len()
    }

    /// Values of the structural columns.
    pub fn primal(&self) -> Vec<f64> {
        self.structural
            .iter()
            .map(|&id| self.position[id].map_or(0.0, |r| self.xb[r].max(0.0)))
            .collect()
    }

    pub fn objective(&self) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(b, x)| self.cost[*b] * x).sum()
    }

    /// Total value of basic artificials.
    pub fn infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(b, _)| self.kind[**b] == Kind::Artificial)
            .map(|(_, x)| x.abs())
            .sum()
    }

    /// Row duals `y = c_B B^-1` for the phase-two costs.
    pub fn duals(&self) -> Vec<f64> {
        self.duals_for(&self.cost)
    }

    /// Row duals of the most recent phase-one solve.
    pub fn phase_one_duals(&self) -> Option<&[f64]> {
        self.phase1_duals.as_deref()
    }

    fn duals_for(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, v) in y.iter_mut().zip(row) {
                    *yi += cb * v;
                }
            }
        }
        y
    }

    fn phase1_costs(&self) -> Vec<f64> {
        self.kind
            .iter()
            .map(|k| if *k == Kind::Artificial { -1.0 } else { 0.0 })
            .collect()
    }

    /// Drive artificials out (phase one). Returns the remaining
    /// infeasibility.
    pub fn solve_phase_one(&mut self) -> Result<f64> {
        let costs = self.phase1_costs();
        self.iterate(&costs, true)?;
        self.phase1_duals = Some(self.duals_for(&costs));
        Ok(self.infeasibility())
    }

    /// Phase one if needed, then phase two.
    pub fn solve(&mut self) -> Result<Status> {
        if self.infeasibility() > self.tol.feasibility {
            let inf = self.solve_phase_one()?;
            if inf > self.tol.feasibility {
                return Ok(Status::Infeasible);
            }
        }
        let costs = self.cost.clone();
        self.iterate(&costs, false)?;
        Ok(Status::Optimal)
    }

    fn iterate(&mut self, cost: &[f64], phase_one: bool) -> Result<()> {
        let m = self.m;
        let mut stalled = 0usize;
        let mut last_obj = f64::NEG_INFINITY;
        let limit = 50 * (m + self.cols.len()) + 1000;
        let mut alpha = vec![0.0; m];
        for _ in 0..limit {
            let y = self.duals_for(cost);
            let bland = stalled >= BLAND_AFTER;
            let mut enter = None;
            let mut best = self.tol.optimality;
            for j in 0..self.cols.len() {
                if self.position[j].is_some() {
                    continue;
                }
                if !phase_one && self.kind[j] == Kind::Artificial {
                    continue;
                }
                let col = &self.cols[j];
                let d = cost[j] - col.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
                let scale = 1.0 + cost[j].abs();
                if d > best * scale {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d / scale;
                }
            }
            let Some(q) = enter else {
                self.refactor()?;
                self.refine_primal();
                return Ok(());
            };
            // alpha = B^-1 a_q
            let col = &self.cols[q];
            for (r, a) in alpha.iter_mut().enumerate() {
                let row = &self.binv[r * m..(r + 1) * m];
                *a = row.iter().zip(col).map(|(u, v)| u * v).sum();
            }
            let leave = self.ratio_test(&alpha, phase_one);
            let Some(r) = leave else {
                return Err(Error::Solver("LP is unbounded".into()));
            };
            let theta = if self.kind[self.basis[r]] == Kind::Artificial && !phase_one {
                0.0
            } else {
                (self.xb[r].max(0.0)) / alpha[r]
            };
            for (i, x) in self.xb.iter_mut().enumerate() {
                if i != r {
                    *x -= theta * alpha[i];
                }
            }
            self.xb[r] = theta;
            self.pivot(r, q, &alpha);
            let obj: f64 = self.basis.iter().zip(&self.xb).map(|(b, x)| cost[*b] * x).sum();
            if obj > last_obj + 1e-13 * (1.0 + obj.abs()) {
                stalled = 0;
            } else {
                stalled += 1;
            }
            last_obj = last_obj.max(obj);
            if self.since_refactor >= REFACTOR {
                self.refactor()?;
            }
        }
        Err(Error::Solver("simplex iteration limit reached".into()))
    }

    fn ratio_test(&self, alpha: &[f64], phase_one: bool) -> Option<usize> {
        let tol = self.tol;
        // basic artificials in phase two are pinned at zero
        if !phase_one {
            let mut best: Option<(usize, f64)> = None;
            for (r, a) in alpha.iter().enumerate() {
                if self.kind[self.basis[r]] == Kind::Artificial && a.abs() > tol.pivot {
                    if best.is_none_or(|(_, v)| a.abs() > v) {
                        best = Some((r, a.abs()));
                    }
                }
            }
            if let Some((r, _)) = best {
                return Some(r);
            }
        }
        let mut theta_max = f64::INFINITY;
        for (r, a) in alpha.iter().enumerate() {
            if *a > tol.pivot {
                theta_max = theta_max.min((self.xb[r].max(0.0) + tol.feasibility) / a);
            }
        }
        if !theta_max.is_finite() {
            return None;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (r, a) in alpha.iter().enumerate() {
            if *a > tol.pivot && self.xb[r].max(0.0) / a <= theta_max && pick.is_none_or(|(_, v)| *a > v) {
                pick = Some((r, *a));
            }
        }
        pick.map(|(r, _)| r)
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        {
            let row = &mut self.binv[r * m..(r + 1) * m];
            for v in row.iter_mut() {
                *v /= piv;
            }
        }
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
        for (i, a) in alpha.iter().enumerate() {
            if i == r || *a == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= a * p;
            }
        }
        let old = self.basis[r];
        self.position[old] = None;
        self.basis[r] = q;
        self.position[q] = Some(r);
        self.since_refactor += 1;
        self.pivots += 1;
    }

    /// One step of iterative refinement on `x_B`.
    fn refine_primal(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for (c, &b) in self.basis.iter().enumerate() {
            for (r, v) in resid.iter_mut().enumerate() {
                *v -= self.cols[b][r] * self.xb[c];
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.xb[r] += row.iter().zip(&resid).map(|(u, v)| u * v).sum::<f64>();
        }
    }

    /// Recompute `B^-1` and `x_B` from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (c, &b) in self.basis.iter().enumerate() {
            for r in 0..m {
                a[r * m + c] = self.cols[b][r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let (mut best, mut br) = (0.0, col);
            for r in col..m {
                let v = a[r * m + col].abs();
                if v > best {
                    best = v;
                    br = r;
                }
            }
            if best < 1e-14 {
                return Err(Error::Solver("singular basis".into()));
            }
            if br != col {
                for k in 0..m {
                    a.swap(br * m + k, col * m + k);
                    inv.swap(br * m + k, col * m + k);
                }
            }
            let p = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[col * m + k];
                    inv[r * m + k] -= f * inv[col * m + k];
                }
            }
        }
        self.binv = inv;
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&self.rhs).map(|(u, b)| u * b).sum();
            self.xb[r] = if v.abs() < 1e-14 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut s = Simplex::new(vec![4.0, 12.0, 18.0], &[Sense::Le; 3]);
        s.add_column(vec![1.0, 0.0, 3.0], 3.0);
        s.add_column(vec![0.0, 2.0, 2.0], 5.0);
        assert_eq!(s.solve().unwrap(), Status::Optimal);
        let x = s.primal();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective() - 36.0).abs() < 1e-12);
        let y = s.duals();
        assert!((y[0]).abs() < 1e-12 && (y[1] - 1.5).abs() < 1e-12 && (y[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn needs_phase_one() {
        // max -x - y, x + y = 1, -x <= -0.25
        let mut s = Simplex::new(vec![1.0, -0.25], &[Sense::Eq, Sense::Le]);
        s.add_column(vec![1.0, -1.0], -1.0);
        s.add_column(vec![1.0, 0.0], -2.0);
        assert_eq!(s.solve().unwrap(), Status::Optimal);
        let x = s.primal();
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility_and_recovers_after_new_column() {
        // x <= 1 and -x <= -2 cannot both hold
        let mut s = Simplex::new(vec![1.0, -2.0], &[Sense::Le, Sense::Le]);
        s.add_column(vec![1.0, -1.0], 1.0);
        assert_eq!(s.solve().unwrap(), Status::Infeasible);
        let y = s.phase_one_duals().unwrap().to_vec();
        // Farkas: y >= 0, y.A >= 0 on columns, y.b < 0
        assert!(y.iter().all(|v| *v >= -1e-12));
        assert!(y[0] * 1.0 + y[1] * -1.0 >= -1e-12);
        assert!(y[0] * 1.0 + y[1] * -2.0 < 0.0);
        s.add_column(vec![0.0, -1.0], 0.0);
        assert_eq!(s.solve().unwrap(), Status::Optimal);
    }
}
