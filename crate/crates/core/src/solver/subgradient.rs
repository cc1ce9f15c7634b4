//! Projected subgradient warm start: step along `c` while every dense row
//! holds, otherwise step against one randomly chosen violated row, then
//! project each cell back onto its simplex block.

use super::project::project_all;
use super::{IterRecord, SolverConfig, StepRule};
use crate::lp::{separable_dot, SparseLp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct SubgradientResult {
    pub x: Vec<f64>,
    /// Best dense-feasible objective seen (within `feasibility_tol`).
    pub best_feasible: Option<f64>,
    pub iterations: usize,
    pub stabilized: bool,
    pub log: Vec<IterRecord>,
}

/// Row activities sharing the per-cell weighted sums between rows with
/// equal weight vectors.
pub(crate) fn activities_grouped(lp: &SparseLp, groups: &[(Vec<f64>, Vec<usize>)], x: &[f64]) -> Vec<f64> {
    let nf = lp.n_free();
    let n2 = lp.grid.n2();
    let mut out = vec![0.0; lp.rows.len()];
    for (w, rows) in groups {
        let s = crate::lp::weighted_cell_sums(w, x, nf);
        for &i in rows {
            let r = &lp.rows[i];
            out[i] = separable_dot(&r.axis[0], &r.axis[1], &s, n2);
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Squared norm of a separable row: `|a1|^2 |a2|^2 |w|^2`.
fn row_norm_sq(lp: &SparseLp, i: usize) -> f64 {
    let r = &lp.rows[i];
    let s = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    s(&r.axis[0]) * s(&r.axis[1]) * s(&r.weights)
}

pub fn subgradient_phase(lp: &SparseLp, cfg: &SolverConfig, x0: Option<&[f64]>) -> SubgradientResult {
    let nf = lp.n_free();
    let n2 = lp.grid.n2();
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; lp.n_vars()],
    };
    project_all(&mut x, nf);
    let groups = lp.weight_groups();
    let c_norm = norm(&lp.c);
    let gamma = match cfg.step_rule {
        StepRule::Diminishing { gamma } => gamma.unwrap_or(if c_norm > 0.0 { 1.0 / c_norm } else { 0.0 }),
        StepRule::Polyak { .. } => 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut log = Vec::new();
    let mut best_feasible: Option<f64> = None;
    let mut history: Vec<Option<f64>> = Vec::new();
    let mut stabilized = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        iterations = k;
        let act = activities_grouped(lp, &groups, &x);
        let violated: Vec<usize> = act
            .iter()
            .zip(&lp.rows)
            .enumerate()
            .filter(|(_, (a, r))| **a > r.rhs + 1e-12)
            .map(|(i, _)| i)
            .collect();
        let max_violation = act
            .iter()
            .zip(&lp.rows)
            .map(|(a, r)| a - r.rhs)
            .fold(0.0, f64::max);
        let obj = lp.objective(&x);
        if max_violation <= cfg.feasibility_tol && best_feasible.is_none_or(|b| obj > b) {
            best_feasible = Some(obj);
        }
        history.push(best_feasible);
        if c_norm == 0.0 && violated.is_empty() {
            log.push(IterRecord {
                iter: k,
                objective: obj,
                max_violation,
                step: 0.0,
            });
            stabilized = true;
            break;
        }
        let step;
        if violated.is_empty() {
            step = match cfg.step_rule {
                StepRule::Diminishing { .. } => gamma / (k as f64).sqrt(),
                StepRule::Polyak { target } => ((target - obj).max(0.0) / (c_norm * c_norm)).max(1e-12),
            };
            x.par_iter_mut().zip(lp.c.par_iter()).for_each(|(v, c)| *v += step * c);
        } else {
            let i = violated[rng.gen_range(0..violated.len())];
            let r = &lp.rows[i];
            step = match cfg.step_rule {
                StepRule::Diminishing { .. } => gamma / (k as f64).sqrt(),
                StepRule::Polyak { .. } => (act[i] - r.rhs) / row_norm_sq(lp, i).max(1e-300),
            };
            let (a1, a2, w) = (&r.axis[0], &r.axis[1], &r.weights);
            x.par_chunks_mut(n2 * nf).enumerate().for_each(|(i1, row)| {
                let f1 = step * a1[i1];
                if f1 == 0.0 {
                    return;
                }
                for (i2, blk) in row.chunks_mut(nf).enumerate() {
                    let f = f1 * a2[i2];
                    for (v, wj) in blk.iter_mut().zip(w) {
                        *v -= f * wj;
                    }
                }
            });
        }
        project_all(&mut x, nf);
        log.push(IterRecord {
            iter: k,
            objective: obj,
            max_violation,
            step,
        });
        if k > cfg.window {
            if let (Some(now), Some(then)) = (history[k - 1], history[k - 1 - cfg.window]) {
                let rel = (now - then) / then.abs().max(1e-12);
                if rel < cfg.improvement_tol {
                    stabilized = true;
                    break;
                }
            }
        }
    }
    if !stabilized {
        log::info!("subgradient phase hit {} iterations without stabilizing", cfg.max_iters);
    }
    SubgradientResult {
        x,
        best_feasible,
        iterations,
        stabilized,
        log,
    }
}
