//! Exact refinement by Dantzig-Wolfe column generation.
//!
//! The cells only interact through the dense rows, so the structural part
//! `X = prod_cells {x >= 0, sum x <= 1}` is handled implicitly: its vertices
//! pick one action per cell, and the best vertex for given row duals is a
//! per-cell argmax. The master LP keeps one row per dense row plus a
//! convexity row and is solved by the dense simplex.

use super::simplex::{Sense, Simplex, Status};
use super::{ColgenRecord, SolverConfig};
use crate::error::{Error, Result};
use crate::lp::{separable_dot, weighted_cell_sums, SparseLp};
use rayon::prelude::*;

/// Per-cell pricing against dense-row duals.
pub(crate) struct Pricer<'a> {
    pub lp: &'a SparseLp,
    pub groups: Vec<(Vec<f64>, Vec<usize>)>,
    /// Per-cell action held fixed (0 = none, `j + 1` = free action `j`),
    /// or [`FREE`] for cells the solver may choose.
    pub frozen: Option<Vec<u8>>,
}

/// Marker for a cell that is not frozen.
pub const FREE: u8 = u8::MAX;

/// Reduced values of every action in every cell.
pub(crate) struct CellValues {
    /// `r[cell * nf + j]`
    pub r: Vec<f64>,
    /// Magnitude of the terms making up each cell's reduced values.
    pub scale: Vec<f64>,
}

impl<'a> Pricer<'a> {
    pub fn new(lp: &'a SparseLp) -> Self {
        Pricer {
            lp,
            groups: lp.weight_groups(),
            frozen: None,
        }
    }

    pub fn with_frozen(lp: &'a SparseLp, frozen: Vec<u8>) -> Self {
        assert_eq!(frozen.len(), lp.n_cells());
        Pricer {
            frozen: Some(frozen),
            ..Pricer::new(lp)
        }
    }

    fn frozen_at(&self, cell: usize) -> Option<u8> {
        self.frozen.as_ref().map(|f| f[cell]).filter(|a| *a != FREE)
    }

    /// The vertex that takes no action in every free cell.
    pub fn base_vertex(&self) -> Vec<u8> {
        match &self.frozen {
            Some(f) => f.iter().map(|a| if *a == FREE { 0 } else { *a }).collect(),
            None => vec![0u8; self.lp.n_cells()],
        }
    }

    /// `Q_p[cell] = sum_{i in group p} y_i a1_i[i1] a2_i[i2]`, or `None`
    /// for groups whose duals all vanish.
    fn q_vectors(&self, y: &[f64]) -> Vec<Option<Vec<f64>>> {
        let n2 = self.lp.grid.n2();
        let n = self.lp.n_cells();
        self.groups
            .iter()
            .map(|(_, rows)| {
                let live: Vec<usize> = rows.iter().copied().filter(|&i| y[i] != 0.0).collect();
                if live.is_empty() {
                    return None;
                }
                let mut q = vec![0.0; n];
                q.par_chunks_mut(n2).enumerate().for_each(|(i1, out)| {
                    for &i in &live {
                        let r = &self.lp.rows[i];
                        let f = y[i] * r.axis[0][i1];
                        if f == 0.0 {
                            continue;
                        }
                        for (o, a2) in out.iter_mut().zip(&r.axis[1]) {
                            *o += f * a2;
                        }
                    }
                });
                Some(q)
            })
            .collect()
    }

    /// Best vertex for duals `y` (objective included when `with_cost`) and
    /// `sum_cells max(0, max_j r_j)`.
    pub fn price(&self, y: &[f64], with_cost: bool) -> (Vec<u8>, f64) {
        let nf = self.lp.n_free();
        let n2 = self.lp.grid.n2();
        let q = self.q_vectors(y);
        let c = &self.lp.c;
        let mut choice = vec![0u8; self.lp.n_cells()];
        let partial: Vec<f64> = choice
            .par_chunks_mut(n2)
            .enumerate()
            .map(|(i1, out)| {
                let mut sum = 0.0;
                for (i2, ch) in out.iter_mut().enumerate() {
                    let cell = i1 * n2 + i2;
                    let mut best = 0.0;
                    let mut arg = 0u8;
                    let fixed = self.frozen_at(cell);
                    for j in 0..nf {
                        if fixed.is_some_and(|a| a != j as u8 + 1) {
                            continue;
                        }
                        let mut r = if with_cost { c[cell * nf + j] } else { 0.0 };
                        for ((w, _), qp) in self.groups.iter().zip(&q) {
                            if let Some(qp) = qp {
                                r -= w[j] * qp[cell];
                            }
                        }
                        if r > best || fixed.is_some() {
                            best = r;
                            arg = j as u8 + 1;
                        }
                    }
                    if fixed == Some(0) {
                        best = 0.0;
                        arg = 0;
                    }
                    *ch = arg;
                    sum += best;
                }
                sum
            })
            .collect();
        (choice, partial.iter().sum())
    }

    pub fn cell_values(&self, y: &[f64]) -> CellValues {
        let nf = self.lp.n_free();
        let q = self.q_vectors(y);
        let c = &self.lp.c;
        let n = self.lp.n_cells();
        let mut r = vec![0.0; n * nf];
        let mut scale = vec![0.0; n];
        r.par_chunks_mut(nf).zip(scale.par_iter_mut()).enumerate().for_each(|(cell, (out, sc))| {
            let mut mag: f64 = 0.0;
            for (j, o) in out.iter_mut().enumerate() {
                let mut v = c[cell * nf + j];
                let mut m = v.abs();
                for ((w, _), qp) in self.groups.iter().zip(&q) {
                    if let Some(qp) = qp {
                        v -= w[j] * qp[cell];
                        m += (w[j] * qp[cell]).abs();
                    }
                }
                *o = v;
                mag = mag.max(m);
            }
            *sc = mag;
        });
        CellValues { r, scale }
    }

    /// Dense-row activities and objective of a vertex.
    pub fn vertex_column(&self, v: &[u8]) -> (Vec<f64>, f64) {
        let nf = self.lp.n_free();
        let n2 = self.lp.grid.n2();
        let mut act = vec![0.0; self.lp.rows.len()];
        for (w, rows) in &self.groups {
            let s: Vec<f64> = v.par_iter().map(|&a| if a == 0 { 0.0 } else { w[a as usize - 1] }).collect();
            for &i in rows {
                let r = &self.lp.rows[i];
                act[i] = separable_dot(&r.axis[0], &r.axis[1], &s, n2);
            }
        }
        let cost_parts: Vec<f64> = v
            .par_chunks(n2)
            .enumerate()
            .map(|(i1, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0)
                    .map(|(i2, a)| self.lp.c[(i1 * n2 + i2) * nf + *a as usize - 1])
                    .sum::<f64>()
            })
            .collect();
        (act, cost_parts.iter().sum())
    }

    pub fn point_column(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let nf = self.lp.n_free();
        let n2 = self.lp.grid.n2();
        let mut act = vec![0.0; self.lp.rows.len()];
        for (w, rows) in &self.groups {
            let s = weighted_cell_sums(w, x, nf);
            for &i in rows {
                let r = &self.lp.rows[i];
                act[i] = separable_dot(&r.axis[0], &r.axis[1], &s, n2);
            }
        }
        (act, self.lp.objective(x))
    }

    /// Lagrangian upper bound `y.b + max_{x in X} (c - A'y).x` for `y >= 0`.
    pub fn upper_bound(&self, y: &[f64]) -> f64 {
        let yc: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
        let (_, val) = self.price(&yc, true);
        yc.iter().zip(&self.lp.rows).map(|(a, r)| a * r.rhs).sum::<f64>() + val
    }
}

enum Column {
    Vertex(Vec<u8>),
    Point(Vec<f64>),
}

pub(crate) enum ColgenResult {
    Optimal {
        x: Vec<f64>,
        duals: Vec<f64>,
        upper_bound: f64,
    },
    Feasible {
        x: Vec<f64>,
    },
    Infeasible {
        bound: f64,
        certificate: Vec<f64>,
    },
}

pub(crate) struct Colgen {
    pub result: ColgenResult,
    pub iterations: usize,
    pub pivots: usize,
    pub log: Vec<ColgenRecord>,
}

struct Master<'p, 'a> {
    pricer: &'p Pricer<'a>,
    simplex: Simplex,
    columns: Vec<Column>,
}

impl<'p, 'a> Master<'p, 'a> {
    fn new(pricer: &'p Pricer<'a>) -> Self {
        let lp = pricer.lp;
        let n_d = lp.rows.len();
        let mut rhs = lp.rhs();
        rhs.push(1.0);
        let mut sense = vec![Sense::Le; n_d];
        sense.push(Sense::Eq);
        Master {
            pricer,
            simplex: Simplex::new(rhs, &sense),
            columns: Vec::new(),
        }
    }

    fn add(&mut self, col: Column) {
        let (mut act, cost) = match &col {
            Column::Vertex(v) => self.pricer.vertex_column(v),
            Column::Point(x) => self.pricer.point_column(x),
        };
        act.push(1.0);
        self.simplex.add_column(act, cost);
        self.columns.push(col);
    }

    fn primal_x(&self) -> Vec<f64> {
        let lp = self.pricer.lp;
        let nf = lp.n_free();
        let lam = self.simplex.primal();
        let mut x = vec![0.0; lp.n_vars()];
        for (l, col) in lam.iter().zip(&self.columns) {
            if *l <= 0.0 {
                continue;
            }
            match col {
                Column::Vertex(v) => {
                    x.par_chunks_mut(nf).zip(v.par_iter()).for_each(|(blk, a)| {
                        if *a != 0 {
                            blk[*a as usize - 1] += l;
                        }
                    });
                }
                Column::Point(p) => {
                    x.par_iter_mut().zip(p.par_iter()).for_each(|(a, b)| *a += l * b);
                }
            }
        }
        x
    }
}

fn dense_part(y: &[f64], n_d: usize) -> (Vec<f64>, f64) {
    (y[..n_d].to_vec(), y[n_d])
}

/// Run column generation. With `feasibility_only` it stops as soon as the
/// master is feasible.
pub(crate) fn column_generation(
    pricer: &Pricer,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
    feasibility_only: bool,
) -> Result<Colgen> {
    let lp = pricer.lp;
    let n_d = lp.rows.len();
    let mut master = Master::new(pricer);
    master.add(Column::Vertex(pricer.base_vertex()));
    if let Some(x) = warm {
        master.add(Column::Point(x.to_vec()));
    }
    if !feasibility_only {
        let (v, _) = pricer.price(&vec![0.0; n_d], true);
        master.add(Column::Vertex(v));
    }
    let mut log = Vec::new();
    let mut best_ub = f64::INFINITY;
    let mut best_y: Option<Vec<f64>> = None;
    let feas_tol = master.simplex.tol.feasibility;
    // smoothing weight for the stability center (Wentges)
    let mut smooth = cfg.smoothing;
    for it in 1..=cfg.max_colgen_iters {
        if master.simplex.infeasibility() > feas_tol {
            let inf = master.simplex.solve_phase_one()?;
            if inf > feas_tol {
                let y_full = master.simplex.phase_one_duals().expect("phase one ran").to_vec();
                let (y, sigma) = dense_part(&y_full, n_d);
                let (v, val) = pricer.price(&y, false);
                log.push(ColgenRecord {
                    iter: it,
                    phase: 1,
                    primal: -inf,
                    upper_bound: f64::NAN,
                    columns: master.columns.len(),
                });
                log::debug!("phase 1 iter {it}: infeasibility {inf:.3e}, price {:.3e}", val - sigma);
                if val - sigma > 1e-9 * (1.0 + sigma.abs()) {
                    master.add(Column::Vertex(v));
                    continue;
                }
                // the bound is positively homogeneous in y, so rescale to max 1
                let top = y.iter().cloned().fold(0.0, f64::max);
                let cert: Vec<f64> = y.iter().map(|v| if top > 0.0 { v.max(0.0) / top } else { 0.0 }).collect();
                let (_, val_c) = pricer.price(&cert, false);
                let bound = cert.iter().zip(&lp.rows).map(|(a, r)| a * r.rhs).sum::<f64>() + val_c;
                return Ok(Colgen {
                    result: ColgenResult::Infeasible {
                        bound,
                        certificate: cert,
                    },
                    iterations: it,
                    pivots: master.simplex.pivots,
                    log,
                });
            }
        }
        if feasibility_only {
            return Ok(Colgen {
                result: ColgenResult::Feasible { x: master.primal_x() },
                iterations: it,
                pivots: master.simplex.pivots,
                log,
            });
        }
        if master.simplex.solve()? == Status::Infeasible {
            continue;
        }
        let y_full = master.simplex.duals();
        let (y, sigma) = dense_part(&y_full, n_d);
        let y: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
        let primal = master.simplex.objective();
        let ub_master = pricer.upper_bound(&y);
        if ub_master < best_ub {
            best_ub = ub_master;
            best_y = Some(y.clone());
        }
        log.push(ColgenRecord {
            iter: it,
            phase: 2,
            primal,
            upper_bound: best_ub,
            columns: master.columns.len(),
        });
        log::debug!("phase 2 iter {it}: primal {primal:.9} bound {best_ub:.9}");
        if best_ub - primal <= cfg.gap_tol {
            return Ok(Colgen {
                result: ColgenResult::Optimal {
                    x: master.primal_x(),
                    duals: best_y.unwrap_or(y),
                    upper_bound: best_ub,
                },
                iterations: it,
                pivots: master.simplex.pivots,
                log,
            });
        }
        // price at a point between the stability center and the master duals
        let center = best_y.clone().unwrap_or_else(|| y.clone());
        let mut added = false;
        while !added {
            let y_price: Vec<f64> = if smooth > 0.0 {
                center.iter().zip(&y).map(|(c, m)| smooth * c + (1.0 - smooth) * m).collect()
            } else {
                y.clone()
            };
            let (v, val) = pricer.price(&y_price, true);
            if smooth > 0.0 {
                let ub = y_price.iter().zip(&lp.rows).map(|(a, r)| a * r.rhs).sum::<f64>() + val;
                if ub < best_ub {
                    best_ub = ub;
                    best_y = Some(y_price.clone());
                }
            }
            // reduced cost of the candidate with respect to the master duals
            let (act, cost) = pricer.vertex_column(&v);
            let rc = cost - act.iter().zip(&y_full[..n_d]).map(|(a, b)| a * b).sum::<f64>() - sigma;
            if rc > 1e-13 * (1.0 + primal.abs()) {
                master.add(Column::Vertex(v));
                added = true;
            } else if smooth > 0.0 {
                smooth = 0.0;
            } else {
                log::warn!(
                    "column generation stalled with gap {:.3e}",
                    best_ub - primal
                );
                return Ok(Colgen {
                    result: ColgenResult::Optimal {
                        x: master.primal_x(),
                        duals: best_y.unwrap_or(y),
                            upper_bound: best_ub,
                    },
                    iterations: it,
                    pivots: master.simplex.pivots,
                    log,
                });
            }
        }
        if smooth == 0.0 && cfg.smoothing > 0.0 {
            smooth = cfg.smoothing;
        }
    }
    Err(Error::Solver(format!(
        "column generation did not converge in {} iterations (gap {:.3e})",
        cfg.max_colgen_iters,
        best_ub - master.simplex.objective()
    )))
}

/// Given near-optimal duals, fix every cell whose best action wins by a
/// clear margin and re-solve the small LP over the remaining cells. The
/// result is a basic solution, so at most as many cells as there are dense
/// rows stay randomized. Returns `None` if the restricted LP is
/// infeasible or too large.
pub(crate) fn purify(pricer: &Pricer, y: &[f64], x_ref: &[f64], tie_tol: f64, max_free: usize) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let lp = pricer.lp;
    let nf = lp.n_free();
    let n_d = lp.rows.len();
    let vals = pricer.cell_values(y);
    let mut x = vec![0.0; lp.n_vars()];
    let mut free_cells = Vec::new();
    for cell in 0..lp.n_cells() {
        let r = &vals.r[cell * nf..(cell + 1) * nf];
        let mut best = 0.0;
        let mut second = f64::NEG_INFINITY;
        let mut arg = None;
        for (j, v) in r.iter().enumerate() {
            if *v > best {
                second = best;
                best = *v;
                arg = Some(j);
            } else if *v > second {
                second = *v;
            }
        }
        if arg.is_none() {
            second = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        let blk = &x_ref[cell * nf..(cell + 1) * nf];
        let s: f64 = blk.iter().sum();
        let fractional = blk.iter().any(|v| *v > 1e-9 && *v < 1.0 - 1e-9) || (s > 1e-9 && s < 1.0 - 1e-9);
        let tied = best - second <= tie_tol * vals.scale[cell];
        if let Some(a) = pricer.frozen_at(cell) {
            if a > 0 {
                x[cell * nf + a as usize - 1] = 1.0;
            }
        } else if tied || fractional {
            free_cells.push(cell);
        } else if let Some(j) = arg {
            x[cell * nf + j] = 1.0;
        }
    }
    if free_cells.len() > max_free {
        return Ok(None);
    }
    let fixed = pricer.point_column(&x).0;
    let m = n_d + free_cells.len();
    let mut rhs: Vec<f64> = lp.rows.iter().zip(&fixed).map(|(r, a)| r.rhs - a).collect();
    rhs.extend(std::iter::repeat_n(1.0, free_cells.len()));
    let mut sub = Simplex::new(rhs, &vec![Sense::Le; m]);
    for (t, &cell) in free_cells.iter().enumerate() {
        let (i1, i2) = lp.grid.cell(cell);
        for j in 0..nf {
            let mut col = vec![0.0; m];
            for (i, row) in lp.rows.iter().enumerate() {
                col[i] = row.coef(i1, i2, j);
            }
            col[n_d + t] = 1.0;
            sub.add_column(col, lp.c[cell * nf + j]);
        }
    }
    if sub.solve()? == Status::Infeasible {
        return Ok(None);
    }
    let z = sub.primal();
    for (t, &cell) in free_cells.iter().enumerate() {
        for j in 0..nf {
            x[cell * nf + j] = z[t * nf + j];
        }
    }
    let duals: Vec<f64> = sub.duals()[..n_d].iter().map(|v| v.max(0.0)).collect();
    Ok(Some((x, duals)))
}
