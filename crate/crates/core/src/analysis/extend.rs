//! Monotone closure of a discretized procedure beyond its grid.
//!
//! Each axis of the extended layout has the grid cells followed by one
//! upper tail cell `[upper edge, inf)`. Below the grid nothing is ever
//! rejected, so no lower tail cell is stored.

use crate::actions::SpaceKind;
use crate::normal;
use crate::procedures::DiscreteProcedure;
use crate::trial::{true_nulls, DerivedScale, H01, H02, H0C};
use serde::{Deserialize, Serialize};

/// Probability mass below which an action counts as not taken when a
/// randomized cell is replaced by its envelope, and below which a cell
/// counts as deterministic.
pub const ENVELOPE_TOL: f64 = 1e-6;

/// How randomized cells enter the closure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomization {
    /// Realize the procedure with a shared uniform `u` and close each
    /// deterministic level separately.
    #[default]
    Levels,
    /// A cell rejects every hypothesis any of its actions rejects with
    /// probability above [`ENVELOPE_TOL`].
    Envelope,
}

/// One deterministic realization and its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub weight: f64,
    /// Hypotheses rejected in each extended cell, `(n1 + 1) x (n2 + 1)`,
    /// row-major in `z1`.
    pub masks: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedProcedure {
    pub base: DiscreteProcedure,
    /// Decisions only: flag any recommended subpopulation without benefit.
    pub strict: bool,
    pub mode: Randomization,
    pub levels: Vec<Level>,
    /// Cells whose most likely action has probability below
    /// `1 - ENVELOPE_TOL`.
    pub randomized_cells: usize,
    /// Largest probability of a non-dominant action in a cell treated as
    /// deterministic; a bound on what rounding those cells can hide.
    pub rounding_slack: f64,
}

/// Hypotheses whose truth makes `action` an error, as a mask.
pub fn claim_mask(kind: SpaceKind, action: u8, strict: bool) -> u8 {
    match kind {
        SpaceKind::Testing => action,
        SpaceKind::Decision if strict => action & (H01 | H02),
        SpaceKind::Decision => match action {
            0 => 0,
            1 => H01,
            2 => H02,
            _ => H0C,
        },
    }
}

/// Monotone closure of per-cell claim masks on the extended layout:
/// `H01` is rejected at `z1` when it is rejected at some `z1' <= z1` in the
/// same row, `H02` likewise along columns, and `H0C` when it is rejected
/// somewhere to the lower left.
pub fn close(grid: &crate::kernel::RectGrid, claims: &[u8]) -> Vec<u8> {
    let (n1, n2) = (grid.n1(), grid.n2());
    let (w1, w2) = (n1 + 1, n2 + 1);
    let mut masks = vec![0u8; w1 * w2];
    let at = |i1: usize, i2: usize| i1 * w2 + i2;
    for i2 in 0..n2 {
        let mut on = false;
        for i1 in 0..w1 {
            on |= i1 < n1 && claims[grid.index(i1, i2)] & H01 != 0;
            if on {
                masks[at(i1, i2)] |= H01;
            }
        }
    }
    for i1 in 0..n1 {
        let mut on = false;
        for i2 in 0..w2 {
            on |= i2 < n2 && claims[grid.index(i1, i2)] & H02 != 0;
            if on {
                masks[at(i1, i2)] |= H02;
            }
        }
    }
    let mut reach = vec![false; w1 * w2];
    for i1 in 0..w1 {
        for i2 in 0..w2 {
            let own = i1 < n1 && i2 < n2 && claims[grid.index(i1, i2)] & H0C != 0;
            let left = i1 > 0 && reach[at(i1 - 1, i2)];
            let below = i2 > 0 && reach[at(i1, i2 - 1)];
            reach[at(i1, i2)] = own || left || below;
            if reach[at(i1, i2)] {
                masks[at(i1, i2)] |= H0C;
            }
        }
    }
    masks
}

/// Order in which a cell's actions are stacked on `[0, 1]`: larger
/// rejection sets take the low values of `u`, so levels are nested.
fn stacking_order(actions: &[u8]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..actions.len()).collect();
    idx.sort_by_key(|&i| (std::cmp::Reverse(actions[i].count_ones()), std::cmp::Reverse(actions[i])));
    idx
}

pub fn extend_procedure(base: &DiscreteProcedure, strict: bool) -> ExtendedProcedure {
    extend_procedure_with(base, strict, Randomization::default())
}

pub fn extend_procedure_with(base: &DiscreteProcedure, strict: bool, mode: Randomization) -> ExtendedProcedure {
    let kind = base.space.kind;
    let actions = base.space.actions.clone();
    let n_cells = base.grid.len();
    let dists: Vec<Vec<f64>> = (0..n_cells).map(|c| base.cell_dist(c)).collect();
    let top = |d: &[f64]| d.iter().cloned().fold(0.0, f64::max);
    let randomized: Vec<bool> = dists.iter().map(|d| top(d) < 1.0 - ENVELOPE_TOL).collect();
    let randomized_cells = randomized.iter().filter(|r| **r).count();
    let rounding_slack = dists
        .iter()
        .zip(&randomized)
        .filter(|(_, r)| !**r)
        .map(|(d, _)| 1.0 - top(d))
        .fold(0.0, f64::max)
        .max(0.0);
    let dominant: Vec<u8> = (0..n_cells).map(|c| claim_mask(kind, base.dominant(c), strict)).collect();

    let levels = match mode {
        Randomization::Envelope => {
            let claims: Vec<u8> = dists
                .iter()
                .zip(&dominant)
                .zip(&randomized)
                .map(|((d, dom), r)| {
                    if !*r {
                        return *dom;
                    }
                    d.iter()
                        .zip(&actions)
                        .filter(|(p, _)| **p > ENVELOPE_TOL)
                        .fold(0u8, |acc, (_, a)| acc | claim_mask(kind, *a, strict))
                })
                .collect();
            vec![Level {
                weight: 1.0,
                masks: close(&base.grid, &claims),
            }]
        }
        Randomization::Levels => {
            let order = stacking_order(&actions);
            // cumulative break points of every randomized cell
            let mut cuts = vec![0.0, 1.0];
            for (d, _) in dists.iter().zip(&randomized).filter(|(_, r)| **r) {
                let mut acc = 0.0;
                for &i in &order {
                    acc += d[i];
                    if acc > 0.0 && acc < 1.0 {
                        cuts.push(acc);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            cuts.windows(2)
                .filter(|w| w[1] > w[0])
                .map(|w| {
                    let u = 0.5 * (w[0] + w[1]);
                    let claims: Vec<u8> = (0..n_cells)
                        .map(|c| {
                            if !randomized[c] {
                                return dominant[c];
                            }
                            let mut acc = 0.0;
                            let mut pick = actions[order[order.len() - 1]];
                            for &i in &order {
                                acc += dists[c][i];
                                if u < acc {
                                    pick = actions[i];
                                    break;
                                }
                            }
                            claim_mask(kind, pick, strict)
                        })
                        .collect();
                    Level {
                        weight: w[1] - w[0],
                        masks: close(&base.grid, &claims),
                    }
                })
                .collect()
        }
    };
    ExtendedProcedure {
        base: base.clone(),
        strict,
        mode,
        levels,
        randomized_cells,
        rounding_slack,
    }
}

impl ExtendedProcedure {
    pub fn dims(&self) -> (usize, usize) {
        (self.base.grid.n1() + 1, self.base.grid.n2() + 1)
    }

    /// Probabilities of the extended cells along `axis` at mean `delta`.
    pub fn axis_probs(&self, axis: usize, delta: f64) -> Vec<f64> {
        let mut p = self.base.grid.axis_probs(axis, delta);
        let n = self.base.grid.edges(axis).len() - 1;
        p.push(normal::sf(self.base.grid.edge(axis, n) - delta));
        p
    }

    /// Extended cell containing `(z1, z2)`, or `None` below the grid.
    pub fn locate(&self, z1: f64, z2: f64) -> Option<(usize, usize)> {
        let g = &self.base.grid;
        let one = |axis: usize, z: f64| -> Option<usize> {
            let n = g.edges(axis).len() - 1;
            if z < g.edge(axis, 0) {
                None
            } else if z >= g.edge(axis, n) {
                Some(n)
            } else {
                g.locate(axis, z)
            }
        };
        Some((one(0, z1)?, one(1, z2)?))
    }

    /// Hypotheses rejected at `(z1, z2)` on some level.
    pub fn mask_at(&self, z1: f64, z2: f64) -> u8 {
        match self.locate(z1, z2) {
            Some((i1, i2)) => self.levels.iter().fold(0, |acc, l| acc | l.masks[i1 * self.dims().1 + i2]),
            None => 0,
        }
    }

    /// Probability of rejecting any hypothesis in `h`.
    pub fn prob_any(&self, delta1: f64, delta2: f64, h: u8) -> f64 {
        let p1 = self.axis_probs(0, delta1);
        let p2 = self.axis_probs(1, delta2);
        let w2 = p2.len();
        self.levels
            .iter()
            .map(|l| {
                l.weight
                    * p1.iter()
                        .enumerate()
                        .map(|(i1, a)| {
                            let row = &l.masks[i1 * w2..(i1 + 1) * w2];
                            a * row.iter().zip(&p2).filter(|(m, _)| **m & h != 0).map(|(_, b)| b).sum::<f64>()
                        })
                        .sum::<f64>()
            })
            .sum()
    }

    pub fn fwer_at(&self, scale: &DerivedScale, delta1: f64, delta2: f64) -> f64 {
        let truth = true_nulls(scale, delta1, delta2).mask();
        if truth == 0 {
            return 0.0;
        }
        self.prob_any(delta1, delta2, truth)
    }

    /// Whether every level is monotone in the sense the closure builds.
    pub fn is_monotone(&self) -> bool {
        let (w1, w2) = self.dims();
        self.levels.iter().all(|l| {
            let m = |i1: usize, i2: usize| l.masks[i1 * w2 + i2];
            for i1 in 0..w1 {
                for i2 in 0..w2 {
                    let here = m(i1, i2);
                    if i1 + 1 < w1 {
                        let right = m(i1 + 1, i2);
                        if (here & H01 != 0 && right & H01 == 0) || (here & H0C != 0 && right & H0C == 0) {
                            return false;
                        }
                    }
                    if i2 + 1 < w2 {
                        let up = m(i1, i2 + 1);
                        if (here & H02 != 0 && up & H02 == 0) || (here & H0C != 0 && up & H0C == 0) {
                            return false;
                        }
                    }
                }
            }
            true
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::ActionSpace;
    use crate::kernel::RectGrid;
    use crate::procedures::Procedure;

    fn with_actions(f: impl Fn(f64, f64) -> u8) -> DiscreteProcedure {
        let grid = RectGrid::square(1.0, 3.0).unwrap();
        let acts: Vec<u8> = grid.rects().map(|r| {
            let (z1, z2) = r.center();
            f(z1, z2)
        })
        .collect();
        DiscreteProcedure::from_actions("t", grid, ActionSpace::testing(), &acts).unwrap()
    }

    #[test]
    fn h01_block_extends_to_the_right() {
        // rejects H01 on [1,2) x [0,1)
        let p = with_actions(|z1, z2| if (1.0..2.0).contains(&z1) && (0.0..1.0).contains(&z2) { H01 } else { 0 });
        let e = extend_procedure(&p, false);
        for z1 in [1.0, 1.5, 2.5, 3.9, 50.0] {
            assert_eq!(e.mask_at(z1, 0.5), H01, "z1 = {z1}");
        }
        assert_eq!(e.mask_at(0.9, 0.5), 0);
        assert_eq!(e.mask_at(50.0, 1.5), 0);
        assert_eq!(e.mask_at(50.0, -0.5), 0);
        assert!(e.is_monotone());
    }

    #[test]
    fn half_plane_is_already_closed_on_the_grid() {
        let scale = DerivedScale::from_rho(0.5f64.sqrt(), [2.0, 2.0]);
        let p = with_actions(|z1, z2| if scale.z_c(z1, z2) > 1.0 { H0C } else { 0 });
        let e = extend_procedure(&p, false);
        let (w1, w2) = e.dims();
        assert_eq!(e.levels.len(), 1);
        for i1 in 0..w1 - 1 {
            for i2 in 0..w2 - 1 {
                assert_eq!(e.levels[0].masks[i1 * w2 + i2], p.dominant(p.grid.index(i1, i2)));
            }
        }
        // the upper tails are all rejecting once reachable
        assert_eq!(e.mask_at(100.0, -1.0), H0C);
        assert_eq!(e.mask_at(-1.0, 100.0), H0C);
        assert_eq!(e.mask_at(100.0, -2.5), 0);
    }

    #[test]
    fn extension_dominates_base_fwer() {
        let scale = DerivedScale::from_rho(0.5f64.sqrt(), [2.0, 2.0]);
        let p = with_actions(|z1, z2| {
            let mut a = 0;
            if scale.z_c(z1, z2) > 1.645 {
                a |= H0C;
                if z1 > 1.9 {
                    a |= H01;
                }
                if z2 > 1.9 {
                    a |= H02;
                }
            }
            a
        });
        let e = extend_procedure(&p, false);
        for (d1, d2) in [(0.0, 0.0), (0.0, 2.0), (3.0, 0.0), (-1.0, 1.0), (1.5, -1.5), (0.0, -4.0)] {
            let a = e.fwer_at(&scale, d1, d2);
            let b = p.fwer_at(&scale, d1, d2, false);
            assert!(a >= b - 1e-15, "({d1},{d2}): {a} < {b}");
        }
    }

    #[test]
    fn randomized_cell_by_levels_and_envelope() {
        let scale = DerivedScale::from_rho(0.5f64.sqrt(), [2.0, 2.0]);
        let grid = RectGrid::square(1.0, 2.0).unwrap();
        let nf = 6;
        let mut m = vec![0.0; grid.len() * nf];
        let cell = grid.index(2, 2);
        m[cell * nf + 2] = 0.3; // H0C with probability 0.3
        let p = DiscreteProcedure::new("r", grid, ActionSpace::testing(), m).unwrap();
        let env = extend_procedure_with(&p, false, Randomization::Envelope);
        assert_eq!(env.randomized_cells, 1);
        assert_eq!(env.mask_at(0.5, 0.5), H0C);
        assert_eq!(env.mask_at(9.0, 9.0), H0C);
        let lev = extend_procedure(&p, false);
        assert_eq!(lev.levels.len(), 2);
        assert!((lev.levels[0].weight - 0.3).abs() < 1e-15);
        // at the global null the base cell errs with probability 0.3 and
        // the closure adds the upper-right quadrant on that level only
        let d = lev.fwer_at(&scale, 0.0, 0.0);
        let quadrant = normal::sf(0.0) * normal::sf(0.0);
        assert!((d - 0.3 * quadrant).abs() < 1e-12, "{d}");
        assert!(env.fwer_at(&scale, 0.0, 0.0) > d);
        assert!(lev.fwer_at(&scale, 0.0, 0.0) >= p.fwer_at(&scale, 0.0, 0.0, false));
    }

    #[test]
    fn deterministic_rounding_is_reported() {
        let grid = RectGrid::square(1.0, 1.0).unwrap();
        let nf = 6;
        let mut m = vec![0.0; grid.len() * nf];
        m[2] = 1.0 - 1e-8;
        m[3] = 1e-8;
        let p = DiscreteProcedure::new("r", grid, ActionSpace::testing(), m).unwrap();
        let e = extend_procedure(&p, false);
        assert_eq!(e.randomized_cells, 0);
        assert!((e.rounding_slack - 1e-8).abs() < 1e-15);
    }

    #[test]
    fn decision_claims() {
        assert_eq!(claim_mask(SpaceKind::Decision, 3, false), H0C);
        assert_eq!(claim_mask(SpaceKind::Decision, 3, true), H01 | H02);
        assert_eq!(claim_mask(SpaceKind::Testing, H01 | H0C, false), H01 | H0C);
    }
}
