//! Solve, extend, verify and bound: the steps every workflow shares.

use super::config::Problem;
use crate::analysis::{dual_lower_bound, extend_procedure, verify_fwer, BoundOptions, DualCertificate, ExtendedProcedure, FwerVerification, VerifyOptions};
use crate::error::{Error, Result};
use crate::lp::{build_lp, fwer_row, GridPoint, LpDims, RowTag, SparseLp};
use crate::procedures::{AnalyticProcedure, DiscreteProcedure, Procedure};
use crate::solver::{solve, LpSolution, SolverConfig};
use crate::trial::{mask_label, DerivedScale, H01, H02, H0C};
use serde::{Deserialize, Serialize};

/// Power rows are lowered this far below the largest attainable power when
/// the requirement is clamped.
const CLAMP_SLACK: f64 = 1e-7;

/// Song-Chi thresholds for the baseline comparison.
pub const SONG_CHI_ALPHA0: f64 = 0.045;
pub const SONG_CHI_ALPHA1: f64 = 0.1;

/// The rows of the power-and-risk table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub label: String,
    /// Expected loss of rejecting nothing minus the Bayes risk; one minus
    /// the Bayes risk when the prior puts unit expected loss on the empty
    /// action.
    pub one_minus_bayes_risk: f64,
    pub bayes_risk: f64,
    /// `P[reject H01]` at `(delta1_min, 0)`.
    pub h01_power: f64,
    /// `P[reject H02]` at `(0, delta2_min)`.
    pub h02_power: f64,
    /// Mean of the two subpopulation powers at `(delta1_min, delta2_min)`.
    pub both_power: f64,
    /// `P[reject H0C]` at `(delta1_min, delta2_min)`.
    pub h0c_power: f64,
}

pub const TABLE1_COLUMNS: [&str; 5] = ["one_minus_bayes_risk", "h01_power", "h02_power", "both_power", "h0c_power"];

impl Table1Row {
    pub fn new(label: impl Into<String>, p: &dyn Procedure, scale: &DerivedScale, gain: f64, risk: f64) -> Self {
        let [d1, d2] = scale.delta_min;
        Table1Row {
            label: label.into(),
            one_minus_bayes_risk: gain,
            bayes_risk: risk,
            h01_power: p.power(d1, 0.0, H01),
            h02_power: p.power(0.0, d2, H02),
            both_power: 0.5 * (p.power(d1, d2, H01) + p.power(d1, d2, H02)),
            h0c_power: p.power(d1, d2, H0C),
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.one_minus_bayes_risk, self.h01_power, self.h02_power, self.both_power, self.h0c_power]
    }
}

/// How the power requirement was met.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerUse {
    pub target: f64,
    /// Power on the right-hand side of the row that was solved.
    pub rhs_used: f64,
    /// Largest attainable power, when it had to be computed.
    pub max_power: Option<f64>,
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub lp: SparseLp,
    pub sol: LpSolution,
    pub procedure: DiscreteProcedure,
    pub power: Option<PowerUse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRow {
    pub row: usize,
    pub label: String,
    pub dual: f64,
    pub activity: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub table: Table1Row,
    pub power: Option<PowerUse>,
    pub objective: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub max_violation: f64,
    pub complementary_slackness: f64,
    pub dims: LpDims,
    pub constraint_points: usize,
    pub active: Vec<ActiveRow>,
    pub randomized_cells: usize,
    pub incoherent_cells: usize,
    pub solve_seconds: f64,
}

/// One round of adding the verification's worst points as constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRound {
    pub round: usize,
    pub max_grid_fwer: f64,
    pub certified_bound: f64,
    pub added: Vec<AddedRow>,
    pub objective_after: f64,
}

/// An error row added during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddedRow {
    pub delta: [f64; 2],
    pub nulls: u8,
    /// Lowered below `alpha - margin` by the error mass the extension puts
    /// outside the grid at this point.
    pub rhs: f64,
}

/// Add an error row, replacing any earlier row at the same point.
pub fn add_error_row(lp: &mut SparseLp, row: &AddedRow, strict: bool) {
    lp.rows
        .retain(|r| !matches!(r.tag, RowTag::Fwer { delta, .. } if delta == row.delta));
    let p = GridPoint {
        delta: row.delta,
        nulls: row.nulls,
    };
    lp.rows.push(fwer_row(&lp.grid, &lp.space, &p, row.rhs, strict));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub table: Table1Row,
    /// Error rates at the active constraint points.
    pub active_fwer: Vec<f64>,
    pub meets_power: bool,
    /// `lower_bound <= bayes_risk`.
    pub below_plain: bool,
    /// Dual floor with constraint violations charged at the dual prices.
    pub lagrangian_floor: f64,
    pub below_lagrangian: bool,
}

fn power_row_index(lp: &SparseLp) -> Option<usize> {
    lp.rows.iter().position(|r| matches!(r.tag, RowTag::Power { .. }))
}

/// Largest `H0C` power at the minimum effect attainable under the other
/// rows of `lp`.
pub fn max_power(lp: &SparseLp, cfg: &SolverConfig) -> Result<f64> {
    let k = power_row_index(lp).ok_or_else(|| Error::Config("LP has no power row".into()))?;
    let mut aux = lp.clone();
    let row = aux.rows.remove(k);
    let nf = aux.n_free();
    let n2 = aux.grid.n2();
    for cell in 0..aux.n_cells() {
        let (i1, i2) = (cell / n2, cell % n2);
        for j in 0..nf {
            aux.c[cell * nf + j] = -row.coef(i1, i2, j);
        }
    }
    aux.base_value = 0.0;
    Ok(solve(&aux, cfg)?.objective)
}

/// Solve `lp`, lowering an unattainable power requirement to the largest
/// attainable power when the shortfall is at most `shortfall_tol`.
pub fn solve_with_power(mut lp: SparseLp, shortfall_tol: f64, cfg: &SolverConfig) -> Result<Solved> {
    let k = power_row_index(&lp);
    let target = k.map(|k| -lp.rows[k].rhs);
    let first = solve(&lp, cfg);
    let (sol, power) = match (first, k, target) {
        (Ok(sol), _, t) => (
            sol,
            t.map(|t| PowerUse {
                target: t,
                rhs_used: t,
                max_power: None,
                clamped: false,
            }),
        ),
        (Err(Error::Infeasible { bound, certificate }), Some(k), Some(t)) => {
            let p_max = max_power(&lp, cfg)?;
            if t - p_max > shortfall_tol {
                log::error!("power {t} is out of reach: at most {p_max:.6} is attainable");
                return Err(Error::Infeasible { bound, certificate });
            }
            let used = p_max - CLAMP_SLACK;
            log::warn!("power {t} is out of reach; solving at {used:.7} (largest attainable {p_max:.7})");
            lp.rows[k].rhs = -used;
            let sol = solve(&lp, cfg)?;
            (
                sol,
                Some(PowerUse {
                    target: t,
                    rhs_used: used,
                    max_power: Some(p_max),
                    clamped: true,
                }),
            )
        }
        (Err(e), _, _) => return Err(e),
    };
    let procedure = DiscreteProcedure::from_lp("optimal", &lp, &sol.x)?;
    Ok(Solved { lp, sol, procedure, power })
}

/// Build and solve the problem's LP.
pub fn solve_problem(problem: &Problem, label: &str) -> Result<Solved> {
    let lp = build_lp(
        &problem.design,
        &problem.grid,
        &problem.constraints,
        &problem.loss,
        &problem.prior,
        &problem.settings,
        Vec::new(),
    )?;
    let lp = with_power(lp, problem.power);
    let mut s = solve_with_power(lp, problem.shortfall_tol, &problem.solver)?;
    s.procedure.label = label.to_string();
    Ok(s)
}

/// Set the power row's requirement.
pub fn with_power(mut lp: SparseLp, power: f64) -> SparseLp {
    if let Some(k) = power_row_index(&lp) {
        lp.rows[k].rhs = -power;
    }
    lp
}

pub fn summarize(problem: &Problem, s: &Solved) -> Result<Summary> {
    let p = &s.procedure;
    let table = if problem.loss.space_kind() == crate::actions::SpaceKind::Testing {
        Table1Row::new(
            p.label.clone(),
            p,
            &problem.scale,
            p.expected_gain(&problem.loss, &problem.prior)?,
            p.bayes_risk(&problem.loss, &problem.prior)?,
        )
    } else {
        let [d1, d2] = problem.scale.delta_min;
        Table1Row {
            label: p.label.clone(),
            one_minus_bayes_risk: p.expected_gain(&problem.loss, &problem.prior)?,
            bayes_risk: p.bayes_risk(&problem.loss, &problem.prior)?,
            h01_power: p.power(d1, 0.0, H01),
            h02_power: p.power(0.0, d2, H02),
            both_power: 0.5 * (p.power(d1, d2, H01) + p.power(d1, d2, H02)),
            h0c_power: p.power(d1, d2, H01 | H02),
        }
    };
    let acts = s.lp.activities(&s.sol.x);
    let active = s
        .sol
        .active_set
        .iter()
        .map(|&i| ActiveRow {
            row: i,
            label: s.lp.rows[i].label(),
            dual: s.sol.duals[i],
            activity: acts[i],
            rhs: s.lp.rows[i].rhs,
        })
        .collect();
    Ok(Summary {
        table,
        power: s.power.clone(),
        objective: s.sol.objective,
        upper_bound: s.sol.upper_bound,
        gap: s.sol.gap,
        max_violation: s.sol.max_violation,
        complementary_slackness: s.sol.complementary_slackness(&s.lp),
        dims: s.lp.dims(),
        constraint_points: s.lp.rows.iter().filter(|r| matches!(r.tag, RowTag::Fwer { .. })).count(),
        active,
        randomized_cells: s.sol.randomized_cells,
        incoherent_cells: p.incoherent_cells(),
        solve_seconds: s.sol.wall_time,
    })
}

pub fn verify_options(problem: &Problem) -> VerifyOptions {
    VerifyOptions {
        fine_tau: problem.fine_tau,
        b_prime: problem.b_prime,
        ..VerifyOptions::default()
    }
}

/// Extend and verify; while verification fails and rounds remain, add the
/// worst sampled points as error rows and solve again.
pub fn certify(problem: &Problem, mut s: Solved) -> Result<(Solved, ExtendedProcedure, FwerVerification, Vec<RefinementRound>)> {
    let strict = problem.settings.strict_decision;
    let opts = verify_options(problem);
    let alpha = problem.design.alpha;
    let rhs = alpha - problem.settings.alpha_margin;
    let mut rounds = Vec::new();
    loop {
        let ext = extend_procedure(&s.procedure, strict);
        let v = verify_fwer(&ext, &problem.scale, alpha, &opts)?;
        log::info!(
            "verification: max {:.6} at ({:.4}, {:.4}), certified {:.6}, pass {}",
            v.max_grid_fwer,
            v.argmax[0],
            v.argmax[1],
            v.certified_bound,
            v.pass
        );
        if v.pass || rounds.len() >= problem.refine_rounds || v.peaks.is_empty() {
            return Ok((s, ext, v, rounds));
        }
        let added: Vec<AddedRow> = v
            .peaks
            .iter()
            .take(problem.refine_points)
            .map(|p| {
                let g = GridPoint {
                    delta: p.delta,
                    nulls: p.true_nulls,
                };
                let inside = fwer_row(&s.lp.grid, &s.lp.space, &g, rhs, strict).activity(&s.lp.grid, &s.sol.x);
                AddedRow {
                    delta: p.delta,
                    nulls: p.true_nulls,
                    rhs: rhs - (p.fwer - inside).max(0.0),
                }
            })
            .collect();
        let mut lp = s.lp.clone();
        for r in &added {
            log::info!(
                "adding error row at ({:.4}, {:.4}) [{}] with rhs {:.6}",
                r.delta[0],
                r.delta[1],
                mask_label(r.nulls),
                r.rhs
            );
            add_error_row(&mut lp, r, strict);
        }
        if let Some(pw) = &s.power {
            lp = with_power(lp, pw.target);
        }
        let label = s.procedure.label.clone();
        s = solve_with_power(lp, problem.shortfall_tol, &problem.solver)?;
        s.procedure.label = label;
        rounds.push(RefinementRound {
            round: rounds.len() + 1,
            max_grid_fwer: v.max_grid_fwer,
            certified_bound: v.certified_bound,
            added,
            objective_after: s.sol.objective,
        });
    }
}

pub fn bound(problem: &Problem, s: &Solved) -> Result<DualCertificate> {
    let opts = BoundOptions {
        power: s.power.as_ref().map(|p| p.target),
        ..BoundOptions::default()
    };
    dual_lower_bound(&s.sol, &s.lp, &problem.loss, &problem.prior, problem.design.alpha, &opts)
}

/// The analytic procedures at level `alpha`.
pub fn analytic_baselines(scale: &DerivedScale, alpha: f64) -> Result<Vec<AnalyticProcedure>> {
    Ok(vec![
        AnalyticProcedure::ump(scale, alpha)?,
        AnalyticProcedure::rosenbaum(scale, alpha)?,
        AnalyticProcedure::bergmann_hommel(scale, alpha)?,
        AnalyticProcedure::song_chi_calibrated(scale, alpha, SONG_CHI_ALPHA0, SONG_CHI_ALPHA1)?,
    ])
}

pub fn baseline_row(problem: &Problem, b: &AnalyticProcedure) -> Result<Table1Row> {
    Ok(Table1Row::new(
        b.label(),
        b,
        &problem.scale,
        b.expected_gain(&problem.loss, &problem.prior)?,
        b.bayes_risk(&problem.loss, &problem.prior)?,
    ))
}

/// Baseline rows with their weak-duality checks against `cert`.
pub fn baselines(problem: &Problem, cert: Option<&DualCertificate>) -> Result<Vec<BaselineRow>> {
    analytic_baselines(&problem.scale, problem.design.alpha)?
        .iter()
        .map(|b| {
            let table = baseline_row(problem, b)?;
            let (active_fwer, meets_power, below_plain, floor, below_lagrangian) = match cert {
                Some(c) => {
                    let f: Vec<f64> = c
                        .active_fwer
                        .iter()
                        .zip(&c.active_nulls)
                        .map(|((d1, d2, _), nulls)| b.error_rate(*d1, *d2, *nulls, false))
                        .collect();
                    let caps = vec![0.0; c.active_caps.len()];
                    let floor = c.floor_for(&f, table.h0c_power, &caps)?;
                    (
                        f,
                        table.h0c_power >= c.power,
                        c.lower_bound <= table.bayes_risk,
                        floor,
                        floor <= table.bayes_risk,
                    )
                }
                None => (Vec::new(), table.h0c_power >= problem.power, true, f64::NEG_INFINITY, true),
            };
            Ok(BaselineRow {
                table,
                active_fwer,
                meets_power,
                below_plain,
                lagrangian_floor: floor,
                below_lagrangian,
            })
        })
        .collect()
}
