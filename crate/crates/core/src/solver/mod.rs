//! Two-phase solver for the block-sparse LP: a projected subgradient warm
//! start followed by exact refinement with a certified duality gap.

pub mod colgen;
pub mod project;
pub mod simplex;
pub mod subgradient;

use crate::error::{Error, Result};
use crate::lp::SparseLp;
use colgen::{column_generation, purify, ColgenResult, Pricer};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

pub use project::{project_all, project_block};
pub use subgradient::{subgradient_phase, SubgradientResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `eta_k = gamma / sqrt(k)`; `gamma` defaults to `1 / |c|`.
    Diminishing { gamma: Option<f64> },
    /// Polyak steps toward a known objective value.
    Polyak { target: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMethod {
    /// Dantzig-Wolfe column generation over the per-cell blocks.
    ColumnGeneration,
    /// Materialize the whole LP for the dense simplex; tiny problems only.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub step_rule: StepRule,
    pub improvement_tol: f64,
    pub window: usize,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub max_colgen_iters: usize,
    pub rng_seed: u64,
    pub refine_method: RefineMethod,
    pub feasibility_tol: f64,
    pub activity_tol: f64,
    /// Weight on the best-bound duals when pricing (0 disables smoothing).
    pub smoothing: f64,
    /// Re-solve near-tied cells so the final solution is basic.
    pub purify: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_rule: StepRule::Diminishing { gamma: None },
            improvement_tol: 1e-3,
            window: 50,
            gap_tol: 1e-8,
            max_iters: 500,
            max_colgen_iters: 5000,
            rng_seed: 0,
            refine_method: RefineMethod::ColumnGeneration,
            feasibility_tol: 1e-4,
            activity_tol: 1e-7,
            smoothing: 0.5,
            purify: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.improvement_tol, self.gap_tol, self.feasibility_tol, self.activity_tol];
        if pos.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_iters == 0 || self.max_colgen_iters == 0 || self.window == 0 {
            return Err(Error::Config("iteration limits must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::Config("smoothing must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One line of the subgradient iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub step: f64,
}

/// One line of the column generation log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColgenRecord {
    pub iter: usize,
    pub phase: u8,
    pub primal: f64,
    pub upper_bound: f64,
    pub columns: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolveCounts {
    pub subgradient: usize,
    pub column_generation: usize,
    pub pivots: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// `c.x`, the expected loss removed relative to never acting.
    pub objective: f64,
    /// Expected loss on the grid, `base_value - c.x`.
    pub risk: f64,
    /// Duals of the dense rows.
    pub duals: Vec<f64>,
    /// Lagrangian bound certified by `duals`.
    pub upper_bound: f64,
    pub gap: f64,
    pub active_set: Vec<usize>,
    pub max_violation: f64,
    /// Share of variables farther than 1e-6 from {0, 1}.
    pub randomized_fraction: f64,
    /// Cells whose most likely action has probability below `1 - 1e-6`.
    pub randomized_cells: usize,
    pub counts: SolveCounts,
    pub wall_time: f64,
    pub purified: bool,
    #[serde(skip)]
    pub subgradient_log: Vec<IterRecord>,
    #[serde(skip)]
    pub colgen_log: Vec<ColgenRecord>,
}

impl LpSolution {
    /// Largest `|nu_i (rhs_i - a_i . x)|`.
    pub fn complementary_slackness(&self, lp: &SparseLp) -> f64 {
        lp.activities(&self.x)
            .iter()
            .zip(&lp.rows)
            .zip(&self.duals)
            .map(|((a, r), y)| (y * (r.rhs - a)).abs())
            .fold(0.0, f64::max)
    }

    /// Write both iteration logs as line-delimited JSON.
    pub fn write_logs<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.subgradient_log {
            writeln!(out, "{}", serde_json::json!({"stage": "subgradient", "record": r}))?;
        }
        for r in &self.colgen_log {
            writeln!(out, "{}", serde_json::json!({"stage": "column_generation", "record": r}))?;
        }
        Ok(())
    }
}

/// Primal point and duals saved for a warm restart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n_vars: usize,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
}

pub fn save_checkpoint(path: &Path, sol: &LpSolution) -> Result<()> {
    let cp = Checkpoint {
        n_vars: sol.x.len(),
        x: sol.x.clone(),
        duals: sol.duals.clone(),
    };
    std::fs::write(path, serde_json::to_vec(&cp)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let cp: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
    if cp.x.len() != cp.n_vars {
        return Err(Error::Config("checkpoint is truncated".into()));
    }
    Ok(cp)
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    /// `certificate` is a nonnegative row weighting with
    /// `y.b + max_x (-y.A x) = bound < 0`.
    Infeasible { bound: f64, certificate: Vec<f64> },
}

/// Subgradient warm start followed by exact refinement.
pub fn solve(lp: &SparseLp, cfg: &SolverConfig) -> Result<LpSolution> {
    cfg.validate()?;
    let start = Instant::now();
    let warm = subgradient_phase(lp, cfg, None);
    let mut sol = refine_exact(lp, &warm.x, cfg)?;
    sol.counts.subgradient = warm.iterations;
    sol.subgradient_log = warm.log;
    sol.wall_time = start.elapsed().as_secs_f64();
    Ok(sol)
}

/// Exact solve warm-started at `x_warm` (which must satisfy the per-cell
/// blocks), returning primal, dense-row duals and a certified gap.
pub fn refine_exact(lp: &SparseLp, x_warm: &[f64], cfg: &SolverConfig) -> Result<LpSolution> {
    cfg.validate()?;
    if x_warm.len() != lp.n_vars() || lp.structural_violation(x_warm) > 1e-9 {
        return Err(Error::Config("warm start does not satisfy the per-cell blocks".into()));
    }
    match cfg.refine_method {
        RefineMethod::ColumnGeneration => refine_colgen(&Pricer::new(lp), Some(x_warm), cfg),
        RefineMethod::Dense => refine_dense(lp, cfg),
    }
}

/// Solve with some cells held at a fixed action. `frozen[cell]` is 0 for
/// no action, `j + 1` for free action `j`, or [`FREE`].
pub fn solve_frozen(lp: &SparseLp, frozen: Vec<u8>, cfg: &SolverConfig) -> Result<LpSolution> {
    cfg.validate()?;
    let nf = lp.n_free() as u8;
    if frozen.len() != lp.n_cells() || frozen.iter().any(|a| *a != FREE && *a > nf) {
        return Err(Error::Config("frozen actions do not match the LP".into()));
    }
    refine_colgen(&Pricer::with_frozen(lp, frozen), None, cfg)
}

pub use colgen::FREE;

fn refine_colgen(pricer: &Pricer, x_warm: Option<&[f64]>, cfg: &SolverConfig) -> Result<LpSolution> {
    let start = Instant::now();
    let lp = pricer.lp;
    let cg = column_generation(pricer, cfg, x_warm, false)?;
    let (x, duals, ub) = match cg.result {
        ColgenResult::Optimal {
            x, duals, upper_bound, ..
        } => (x, duals, upper_bound),
        ColgenResult::Infeasible { bound, certificate } => return Err(Error::Infeasible { bound, certificate }),
        ColgenResult::Feasible { .. } => unreachable!("optimization run"),
    };
    let mut best = (lp.objective(&x), x, duals, ub);
    let mut purified = false;
    if cfg.purify {
        for tie in [1e-9, 1e-7, 1e-5, 1e-3] {
            let Some((xp, yp)) = purify(pricer, &best.2, &best.1, tie, 600)? else {
                continue;
            };
            if lp.max_violation(&xp) > 1e-9 {
                continue;
            }
            let obj = lp.objective(&xp);
            let ub_p = pricer.upper_bound(&yp);
            let (ub_use, y_use) = if ub_p <= best.3 { (ub_p, yp) } else { (best.3, best.2.clone()) };
            if ub_use - obj <= (best.3 - best.0).max(cfg.gap_tol) {
                best = (obj, xp, y_use, ub_use);
                purified = true;
                break;
            }
        }
    }
    let (objective, x, duals, upper_bound) = best;
    Ok(finish(lp, cfg, x, duals, objective, upper_bound, cg.iterations, cg.pivots, cg.log, purified, start))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    lp: &SparseLp,
    cfg: &SolverConfig,
    x: Vec<f64>,
    duals: Vec<f64>,
    objective: f64,
    upper_bound: f64,
    iterations: usize,
    pivots: usize,
    log: Vec<ColgenRecord>,
    purified: bool,
    start: Instant,
) -> LpSolution {
    let act = lp.activities(&x);
    let active_set = act
        .iter()
        .zip(&lp.rows)
        .enumerate()
        .filter(|(_, (a, r))| (*a - r.rhs).abs() <= cfg.activity_tol * r.rhs.abs().max(1.0))
        .map(|(i, _)| i)
        .collect();
    let max_violation = act.iter().zip(&lp.rows).map(|(a, r)| a - r.rhs).fold(0.0, f64::max);
    let nf = lp.n_free();
    let off = x.iter().filter(|v| **v > 1e-6 && **v < 1.0 - 1e-6).count();
    let randomized_cells = x
        .chunks(nf)
        .filter(|b| {
            let empty = 1.0 - b.iter().sum::<f64>();
            b.iter().cloned().fold(empty, f64::max) < 1.0 - 1e-6
        })
        .count();
    LpSolution {
        risk: lp.base_value - objective,
        gap: (upper_bound - objective).max(0.0),
        randomized_fraction: off as f64 / x.len().max(1) as f64,
        randomized_cells,
        x,
        objective,
        duals,
        upper_bound,
        active_set,
        max_violation,
        counts: SolveCounts {
            subgradient: 0,
            column_generation: iterations,
            pivots,
        },
        wall_time: start.elapsed().as_secs_f64(),
        purified,
        subgradient_log: Vec::new(),
        colgen_log: log,
    }
}

fn refine_dense(lp: &SparseLp, cfg: &SolverConfig) -> Result<LpSolution> {
    let start = Instant::now();
    let nf = lp.n_free();
    let n_d = lp.rows.len();
    let m = n_d + lp.n_cells();
    if lp.n_vars() > 20_000 {
        return Err(Error::Config("dense refinement is only for tiny problems".into()));
    }
    let mut rhs = lp.rhs();
    rhs.extend(std::iter::repeat_n(1.0, lp.n_cells()));
    let mut s = simplex::Simplex::new(rhs, &vec![simplex::Sense::Le; m]);
    for cell in 0..lp.n_cells() {
        for j in 0..nf {
            let mut col = vec![0.0; m];
            for (i, c) in col.iter_mut().enumerate().take(n_d) {
                *c = lp.coef(i, cell, j);
            }
            col[n_d + cell] = 1.0;
            s.add_column(col, lp.c[cell * nf + j]);
        }
    }
    match s.solve()? {
        simplex::Status::Infeasible => {
            let y: Vec<f64> = s.phase_one_duals().unwrap_or(&[])[..n_d].iter().map(|v| v.clamp(0.0, 1.0)).collect();
            let pricer = Pricer::new(lp);
            let (_, val) = pricer.price(&y, false);
            let bound = y.iter().zip(&lp.rows).map(|(a, r)| a * r.rhs).sum::<f64>() + val;
            Err(Error::Infeasible { bound, certificate: y })
        }
        simplex::Status::Optimal => {
            let x = s.primal();
            let duals: Vec<f64> = s.duals()[..n_d].iter().map(|v| v.max(0.0)).collect();
            let ub = Pricer::new(lp).upper_bound(&duals);
            let obj = lp.objective(&x);
            Ok(finish(lp, cfg, x, duals, obj, ub, 1, s.pivots, Vec::new(), false, start))
        }
    }
}

/// Is there any procedure satisfying every dense row? Answers with a
/// feasible point or a certificate of infeasibility.
pub fn check_feasible(lp: &SparseLp, cfg: &SolverConfig) -> Result<Feasibility> {
    cfg.validate()?;
    let pricer = Pricer::new(lp);
    let cg = column_generation(&pricer, cfg, None, true)?;
    Ok(match cg.result {
        ColgenResult::Feasible { x } => Feasibility::Feasible(x),
        ColgenResult::Infeasible { bound, certificate } => Feasibility::Infeasible { bound, certificate },
        ColgenResult::Optimal { x, .. } => Feasibility::Feasible(x),
    })
}

/// Lagrangian upper bound on the LP optimum for any nonnegative duals.
pub fn lagrangian_bound(lp: &SparseLp, duals: &[f64]) -> f64 {
    Pricer::new(lp).upper_bound(duals)
}
