//! The named workflows.

use super::config::{PriorBlock, Problem, RunConfig, Workflow};
use super::pipeline::{
    add_error_row, baseline_row, baselines, bound, certify, solve_problem, solve_with_power, summarize, with_power, Solved, Table1Row,
};
use super::report::{
    AblationResult, CurvePoint, CurveTable, DecisionRow, MatchedBaseline, MinimaxResult, MinimaxStep, Outcome, Provenance,
    RunReport,
};
use crate::actions::{ActionSpace, SpaceKind};
use crate::analysis::FwerVerification;
use crate::error::{Error, Result};
use crate::lp::{build_lp, risk_cap_row, ConstraintGrid, RowTag, SparseLp};
use crate::procedures::{DiscreteProcedure, Procedure};
use crate::solver::{check_feasible, solve, Feasibility};
use crate::trial::ALL_NULLS;
use rayon::prelude::*;
use std::time::Instant;

/// A finished run: the report and the artifacts behind it.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: RunReport,
    pub solved: Solved,
}

fn require(problem: &Problem, kind: SpaceKind, workflow: &str) -> Result<()> {
    if problem.loss.space_kind() != kind {
        return Err(Error::Config(format!("the {workflow} workflow needs a {kind:?} loss")));
    }
    Ok(())
}

fn outcome(v: &FwerVerification) -> Outcome {
    if v.pass {
        Outcome::Verified
    } else {
        Outcome::VerificationFailed
    }
}

fn empty_report(config: &RunConfig, workflow: Workflow, problem: &Problem, s: &Solved, start: Instant) -> Result<RunReport> {
    Ok(RunReport {
        name: config.name.clone(),
        workflow,
        outcome: Outcome::Solved,
        summary: summarize(problem, s)?,
        baselines: Vec::new(),
        certificate: None,
        verification: None,
        refinement: Vec::new(),
        minimax: None,
        decisions: Vec::new(),
        ablation: None,
        provenance: Provenance::new(config, start.elapsed().as_secs_f64())?,
    })
}

/// Constrained Bayes solve with FWER verification, dual bound and the
/// analytic baselines.
pub fn run_bayes(config: &RunConfig) -> Result<Run> {
    let start = Instant::now();
    let problem = config.problem()?;
    require(&problem, SpaceKind::Testing, "bayes")?;
    let s = solve_problem(&problem, &config.name)?;
    let (s, _, v, rounds) = certify(&problem, s)?;
    let cert = bound(&problem, &s)?;
    let mut report = empty_report(config, Workflow::Bayes, &problem, &s, start)?;
    report.baselines = baselines(&problem, Some(&cert))?;
    report.outcome = outcome(&v);
    report.certificate = Some(cert);
    report.verification = Some(v);
    report.refinement = rounds;
    report.provenance.wall_seconds = start.elapsed().as_secs_f64();
    Ok(Run { report, solved: s })
}

/// The three minimum-effect alternatives.
pub fn default_alternatives(problem: &Problem) -> Vec<[f64; 2]> {
    let [d1, d2] = problem.scale.delta_min;
    vec![[d1, 0.0], [0.0, d2], [d1, d2]]
}

/// Risk of `p` at a point alternative.
pub fn risk_at(p: &DiscreteProcedure, problem: &Problem, delta: [f64; 2]) -> f64 {
    p.action_probs(delta[0], delta[1])
        .iter()
        .zip(&p.space.actions)
        .map(|(q, a)| q * problem.loss.value(*a, delta[0], delta[1]))
        .sum()
}

/// Largest loss of any action at `delta` when normalizing, else 1.
pub fn loss_scale(space: &ActionSpace, problem: &Problem, delta: [f64; 2], normalize: bool) -> f64 {
    if !normalize {
        return 1.0;
    }
    let top = space
        .actions
        .iter()
        .map(|a| problem.loss.value(*a, delta[0], delta[1]))
        .fold(0.0, f64::max);
    if top > 0.0 {
        top
    } else {
        1.0
    }
}

fn set_caps(lp: &mut SparseLp, problem: &Problem, alts: &[[f64; 2]], scales: &[f64], cap: f64) {
    lp.rows.retain(|r| !matches!(r.tag, RowTag::RiskCap { .. }));
    for (a, s) in alts.iter().zip(scales) {
        lp.rows.push(risk_cap_row(&lp.grid, &lp.space, &problem.loss, *a, cap * s));
    }
}

/// Minimax risk over finitely many alternatives by bisection on a common
/// risk cap; the returned procedure is the Bayes-best one meeting the cap
/// at the upper end of the final bracket.
pub fn run_minimax(config: &RunConfig, alternatives: Option<Vec<[f64; 2]>>) -> Result<Run> {
    let start = Instant::now();
    let problem = config.problem()?;
    require(&problem, SpaceKind::Testing, "minimax")?;
    let alts = alternatives
        .or_else(|| config.minimax.alternatives.clone())
        .unwrap_or_else(|| default_alternatives(&problem));
    if alts.is_empty() {
        return Err(Error::Config("minimax needs at least one alternative".into()));
    }
    let base = build_lp(
        &problem.design,
        &problem.grid,
        &problem.constraints,
        &problem.loss,
        &problem.prior,
        &problem.settings,
        Vec::new(),
    )?;
    let mut lp = with_power(base, problem.power);
    let normalize = config.minimax.normalize;
    let scales: Vec<f64> = alts.iter().map(|d| loss_scale(&lp.space, &problem, *d, normalize)).collect();
    let top = alts
        .iter()
        .zip(&scales)
        .flat_map(|(d, s)| lp.space.actions.iter().map(move |a| problem.loss.value(*a, d[0], d[1]) / s))
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, top);
    let mut steps = Vec::new();
    set_caps(&mut lp, &problem, &alts, &scales, hi);
    match check_feasible(&lp, &problem.solver)? {
        Feasibility::Feasible(_) => steps.push(MinimaxStep { cap: hi, feasible: true }),
        Feasibility::Infeasible { bound, certificate } => {
            log::error!("no procedure meets the constraints even with the risk cap at {hi}");
            return Err(Error::Infeasible { bound, certificate });
        }
    }
    while hi - lo >= config.minimax.tol && steps.len() < config.minimax.max_solves {
        let mid = 0.5 * (lo + hi);
        set_caps(&mut lp, &problem, &alts, &scales, mid);
        let feasible = matches!(check_feasible(&lp, &problem.solver)?, Feasibility::Feasible(_));
        log::info!("cap {mid:.6}: {}", if feasible { "feasible" } else { "infeasible" });
        if feasible {
            hi = mid;
        } else {
            lo = mid;
        }
        steps.push(MinimaxStep { cap: mid, feasible });
    }
    set_caps(&mut lp, &problem, &alts, &scales, hi);
    let sol = solve(&lp, &problem.solver)?;
    let procedure = DiscreteProcedure::from_lp(config.name.clone(), &lp, &sol.x)?;
    let risks: Vec<f64> = alts
        .iter()
        .zip(&scales)
        .map(|(d, s)| risk_at(&procedure, &problem, *d) / s)
        .collect();
    let worst = risks
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    let s = Solved {
        lp,
        sol,
        procedure,
        power: None,
    };
    let mut report = empty_report(config, Workflow::Minimax, &problem, &s, start)?;
    report.minimax = Some(MinimaxResult {
        value: hi,
        lower: lo,
        maximizer: alts[worst],
        alternatives: alts,
        risks,
        solves: steps.len(),
        steps,
        normalized: normalize,
    });
    Ok(Run { report, solved: s })
}

/// Recommendation probabilities at the alternatives of the decision table.
pub fn decision_table(p: &DiscreteProcedure, problem: &Problem) -> Vec<DecisionRow> {
    let [d1, d2] = problem.scale.delta_min;
    [[d1, 0.0], [0.0, d2], [d1, d2], [0.0, 0.0]]
        .into_iter()
        .map(|delta| {
            let q = p.action_probs(delta[0], delta[1]);
            DecisionRow {
                delta,
                probs: [q[0], q[1], q[2], q[3]],
            }
        })
        .collect()
}

/// Bayes-optimal treatment recommendations under an aggregate error
/// constraint.
pub fn run_decision(config: &RunConfig) -> Result<Run> {
    let start = Instant::now();
    let problem = config.problem()?;
    require(&problem, SpaceKind::Decision, "decision")?;
    let s = solve_problem(&problem, &config.name)?;
    let (s, _, v, rounds) = certify(&problem, s)?;
    let cert = bound(&problem, &s)?;
    let mut report = empty_report(config, Workflow::Decision, &problem, &s, start)?;
    report.decisions = decision_table(&s.procedure, &problem);
    report.outcome = outcome(&v);
    report.certificate = Some(cert);
    report.verification = Some(v);
    report.refinement = rounds;
    report.provenance.wall_seconds = start.elapsed().as_secs_f64();
    Ok(Run { report, solved: s })
}

/// Solve with error rows at the global null only (plus the power row) and
/// report the error rates that result elsewhere.
pub fn run_global_null_ablation(config: &RunConfig) -> Result<Run> {
    let start = Instant::now();
    let mut problem = config.problem()?;
    require(&problem, SpaceKind::Testing, "ablation")?;
    problem.constraints = ConstraintGrid::global_null();
    let s = solve_problem(&problem, &format!("{}-global-null", config.name))?;
    let p = &s.procedure;
    let [d1, d2] = problem.scale.delta_min;
    let extreme = p
        .dominant_actions()
        .iter()
        .filter(|a| **a == 0 || **a == ALL_NULLS)
        .count();
    let mut report = empty_report(config, Workflow::AblateGlobalNull, &problem, &s, start)?;
    report.ablation = Some(AblationResult {
        fwer_single_benefit: [p.fwer_at(&problem.scale, d1, 0.0, false), p.fwer_at(&problem.scale, 0.0, d2, false)],
        fwer_global_null: p.fwer_at(&problem.scale, 0.0, 0.0, false),
        all_or_nothing_share: extreme as f64 / p.grid.len() as f64,
    });
    Ok(Run { report, solved: s })
}

fn grid_points(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| from + i as f64 * step).collect()
}

/// Optimal risk and powers across required `H0C` powers. The LP is built
/// once; only the power row changes between points.
pub fn run_tradeoff(config: &RunConfig) -> Result<CurveTable> {
    let start = Instant::now();
    let problem = config.problem()?;
    require(&problem, SpaceKind::Testing, "tradeoff")?;
    let lp = build_lp(
        &problem.design,
        &problem.grid,
        &problem.constraints,
        &problem.loss,
        &problem.prior,
        &problem.settings,
        Vec::new(),
    )?;
    let t = &config.tradeoff;
    let points: Vec<CurvePoint> = grid_points(t.from, t.to, t.step)
        .par_iter()
        .map(|&x| match solve_with_power(with_power(lp.clone(), x), problem.shortfall_tol, &problem.solver) {
            Ok(s) => {
                match table_row(&problem, &s, format!("{x:.3}")) {
                    Ok(row) => CurvePoint {
                        x,
                        row: Some(row),
                        power_rhs_used: s.power.map(|p| p.rhs_used),
                        error: None,
                    },
                    Err(e) => failed(x, e),
                }
            }
            Err(e) => failed(x, e),
        })
        .collect();
    let (overlay, matched) = if t.baselines {
        let m = matched_baselines(&problem, &lp)?;
        (m.iter().map(|m| m.baseline.clone()).collect(), m)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(CurveTable {
        name: config.name.clone(),
        x_label: "required H0C power".into(),
        points,
        overlay,
        matched,
        inverse_ratio: None,
        provenance: Provenance::new(config, start.elapsed().as_secs_f64())?,
    })
}

fn table_row(problem: &Problem, s: &Solved, label: String) -> Result<Table1Row> {
    let p = &s.procedure;
    Ok(Table1Row::new(
        label,
        p,
        &problem.scale,
        p.expected_gain(&problem.loss, &problem.prior)?,
        p.bayes_risk(&problem.loss, &problem.prior)?,
    ))
}

/// Each analytic baseline against the optimum at its `H0C` power; `lp` is
/// the problem's LP with any power requirement. Baselines whose power the
/// grid cannot reach are skipped.
pub fn matched_baselines(problem: &Problem, lp: &SparseLp) -> Result<Vec<MatchedBaseline>> {
    super::pipeline::analytic_baselines(&problem.scale, problem.design.alpha)?
        .iter()
        .map(|b| {
            let baseline = baseline_row(problem, b)?;
            let s = match solve_with_power(with_power(lp.clone(), baseline.h0c_power), problem.shortfall_tol, &problem.solver) {
                Ok(s) => s,
                Err(e @ Error::Infeasible { .. }) => {
                    log::warn!("{}: no optimum at power {:.4}: {e}", baseline.label, baseline.h0c_power);
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let optimum = table_row(problem, &s, format!("optimal@{:.4}", baseline.h0c_power))?;
            let (o, v) = (optimum.values(), baseline.values());
            Ok(Some(MatchedBaseline {
                power_rhs_used: s.power.map(|p| p.rhs_used).unwrap_or(baseline.h0c_power),
                advantage: [0, 1, 2, 3, 4].map(|i| o[i] - v[i]),
                baseline,
                optimum,
            }))
        })
        .filter_map(Result::transpose)
        .collect()
}

/// The analytic baselines against the optimum at matching `H0C` power.
pub fn run_baseline_comparison(config: &RunConfig) -> Result<Vec<MatchedBaseline>> {
    let problem = config.problem()?;
    require(&problem, SpaceKind::Testing, "baseline")?;
    let lp = build_lp(
        &problem.design,
        &problem.grid,
        &problem.constraints,
        &problem.loss,
        &problem.prior,
        &problem.settings,
        Vec::new(),
    )?;
    matched_baselines(&problem, &lp)
}

fn failed(x: f64, e: Error) -> CurvePoint {
    log::warn!("sweep point {x}: {e}");
    CurvePoint {
        x,
        row: None,
        power_rhs_used: None,
        error: Some(e.to_string()),
    }
}

fn solve_at_ratio(config: &RunConfig, ratio: f64) -> Result<CurvePoint> {
    let mut c = config.clone();
    c.design.n = None;
    c.design.n_ratio = ratio;
    let problem = c.problem()?;
    let s = solve_problem(&problem, &format!("n/n_min={ratio:.4}"))?;
    let row = table_row(&problem, &s, s.procedure.label.clone())?;
    Ok(CurvePoint {
        x: ratio,
        row: Some(row),
        power_rhs_used: s.power.map(|p| p.rhs_used),
        error: None,
    })
}

/// Subpopulation powers as the sample size grows; with a target power,
/// the smallest `n / n_min` whose optimum under the subpopulation-only
/// prior reaches it for both subpopulations.
pub fn run_sample_size_sweep(config: &RunConfig) -> Result<CurveTable> {
    let start = Instant::now();
    require(&config.problem()?, SpaceKind::Testing, "sample-size")?;
    let ss = &config.sample_size;
    let (points, inverse_ratio) = match ss.target_power {
        None => {
            let pts = ss
                .ratios
                .par_iter()
                .map(|&r| solve_at_ratio(config, r).unwrap_or_else(|e| failed(r, e)))
                .collect();
            (pts, None)
        }
        Some(x) => {
            let mut c = config.clone();
            c.objective.prior = PriorBlock::Named("subpop-only".into());
            let mut pts = Vec::new();
            let reach = |r: f64, pts: &mut Vec<CurvePoint>| -> Result<bool> {
                let p = solve_at_ratio(&c, r)?;
                let row = p.row.as_ref().expect("solved");
                let ok = row.h01_power.min(row.h02_power) >= x;
                pts.push(p);
                Ok(ok)
            };
            let (mut lo, mut hi) = (1.0, ss.max_ratio);
            let ratio = if reach(lo, &mut pts)? {
                lo
            } else {
                if !reach(hi, &mut pts)? {
                    return Err(Error::Bisection(format!("power {x} is not reached by n = {hi} n_min")));
                }
                while hi - lo >= ss.tol {
                    let mid = 0.5 * (lo + hi);
                    if reach(mid, &mut pts)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            };
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            (pts, Some(ratio))
        }
    };
    Ok(CurveTable {
        name: config.name.clone(),
        x_label: "n / n_min".into(),
        points,
        overlay: Vec::new(),
        matched: Vec::new(),
        inverse_ratio,
        provenance: Provenance::new(config, start.elapsed().as_secs_f64())?,
    })
}

/// Rebuild the solved LP of a testing or decision run from its config and
/// report: the configured rows, the rows added during refinement, and the
/// power requirement actually used.
pub fn rebuild_lp(config: &RunConfig, report: &RunReport) -> Result<(Problem, SparseLp)> {
    let mut problem = config.problem()?;
    if report.workflow == Workflow::AblateGlobalNull {
        problem.constraints = ConstraintGrid::global_null();
    }
    let mut lp = build_lp(
        &problem.design,
        &problem.grid,
        &problem.constraints,
        &problem.loss,
        &problem.prior,
        &problem.settings,
        Vec::new(),
    )?;
    for round in &report.refinement {
        for r in &round.added {
            add_error_row(&mut lp, r, problem.settings.strict_decision);
        }
    }
    if let Some(p) = &report.summary.power {
        lp = with_power(lp, p.rhs_used);
    }
    if let Some(m) = &report.minimax {
        let scales: Vec<f64> = m
            .alternatives
            .iter()
            .map(|d| loss_scale(&lp.space, &problem, *d, m.normalized))
            .collect();
        set_caps(&mut lp, &problem, &m.alternatives, &scales, m.value);
    }
    Ok((problem, lp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Component;

    fn tiny(power: f64) -> RunConfig {
        let mut c = RunConfig::from_json(
            r#"{"name":"tiny","design":{"p1":0.5},
                "grid":{"tau":0.25,"b":4,"constraint_points":43,"b_prime":6,"fine_tau":0.002,"refine_rounds":2},
                "objective":{"loss":{"kind":"indicator"},"prior":"sym"}}"#,
        )
        .unwrap();
        c.objective.power = Some(power);
        c
    }

    #[test]
    fn bayes_run_reports_consistent_numbers() {
        let run = run_bayes(&tiny(0.85)).unwrap();
        let r = &run.report;
        let s = &r.summary;
        assert!(s.gap <= 1e-6, "gap {}", s.gap);
        assert!(s.complementary_slackness <= 1e-6);
        assert!((s.table.one_minus_bayes_risk + s.table.bayes_risk - 1.0).abs() < 1e-9);
        assert!(s.table.h0c_power >= 0.85 - 1e-6);
        let cert = r.certificate.as_ref().unwrap();
        assert!(cert.lower_bound <= cert.primal_risk + 1e-6);
        assert_eq!(r.baselines.len(), 4);
        assert!(s.active.iter().any(|a| a.label == "power"));
    }

    #[test]
    fn unreachable_power_is_infeasible_with_certificate() {
        match run_bayes(&tiny(0.999)) {
            Err(Error::Infeasible { certificate, .. }) => assert!(!certificate.is_empty()),
            other => panic!("expected infeasibility, got {:?}", other.map(|r| r.report.outcome)),
        }
    }

    #[test]
    fn single_alternative_minimax_matches_point_mass_bayes() {
        let mut c = tiny(0.85);
        c.workflow = Workflow::Minimax;
        let p = c.problem().unwrap();
        let d = [p.scale.delta_min[0], 0.0];
        let run = run_minimax(&c, Some(vec![d])).unwrap();
        let m = run.report.minimax.as_ref().unwrap();
        assert!(m.solves <= c.minimax.max_solves);

        let mut b = c.clone();
        b.workflow = Workflow::Bayes;
        b.objective.prior = PriorBlock::Components(vec![(1.0, Component::PointMass { mean: d })]);
        let pb = b.problem().unwrap();
        let s = solve_problem(&pb, "point").unwrap();
        let space = ActionSpace::testing();
        let bayes = risk_at(&s.procedure, &pb, d) / loss_scale(&space, &pb, d, true);
        assert!(m.normalized);
        assert!(bayes <= m.risks[0] + 1e-6);
        assert!(m.risks[0] - bayes <= c.minimax.tol + 1e-6, "{} vs {}", m.risks[0], bayes);
    }

    #[test]
    fn tradeoff_relaxing_power_never_raises_risk() {
        let mut c = tiny(0.85);
        c.workflow = Workflow::Tradeoff;
        c.tradeoff.from = 0.8;
        c.tradeoff.to = 0.86;
        c.tradeoff.step = 0.02;
        let t = run_tradeoff(&c).unwrap();
        assert_eq!(t.points.len(), 4);
        let risks: Vec<f64> = t.points.iter().map(|p| p.row.as_ref().unwrap().bayes_risk).collect();
        assert!(risks.windows(2).all(|w| w[0] <= w[1] + 1e-7), "{risks:?}");
        assert!(!t.matched.is_empty() && t.matched.len() <= 4);
        for m in &t.matched {
            assert!(m.optimum.h0c_power >= m.power_rhs_used - 1e-6);
        }
    }

    #[test]
    fn ablation_rejects_all_or_nothing() {
        let mut c = tiny(0.85);
        c.workflow = Workflow::AblateGlobalNull;
        let run = run_global_null_ablation(&c).unwrap();
        let a = run.report.ablation.unwrap();
        assert!(a.fwer_global_null <= 0.05 + 1e-9);
        assert!(a.fwer_single_benefit[0] > 0.05);
        assert!(a.all_or_nothing_share > 0.99);
    }

    #[test]
    fn rebuilt_lp_matches_the_solved_one() {
        let run = run_bayes(&tiny(0.85)).unwrap();
        let (_, lp) = rebuild_lp(&tiny(0.85), &run.report).unwrap();
        assert_eq!(lp.rows.len(), run.solved.lp.rows.len());
        assert!((lp.objective(&run.solved.sol.x) - run.solved.sol.objective).abs() < 1e-9);
        assert!(lp.max_violation(&run.solved.sol.x) < 1e-7);
    }
}
