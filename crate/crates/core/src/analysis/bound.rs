//! Lower bound on the Bayes risk over all procedures, from the duals of a
//! solved LP.
//!
//! For fixed multipliers the Lagrangian is minimized pointwise in `z`: at
//! each `(z1, z2)` take the action with the smallest value of
//!
//! ```text
//! int L(s; d) phi(z - d) dLambda(d)
//!   - 1[H0C in s] nu_p phi(z - d_min)
//!   + sum_j 1[s errs at d_j] nu_j phi(z - d_j)
//!   + sum_i nu_i L(s; d_i) phi(z - d_i)        (risk caps)
//! ```
//!
//! and integrate the minimum over the plane.

use crate::actions::{ActionSpace, SpaceKind};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::lp::{RowTag, SparseLp};
use crate::normal;
use crate::prior::Prior;
use crate::solver::LpSolution;
use crate::trial::H0C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundOptions {
    /// Integrate over `[-half_width, half_width]^2`.
    pub half_width: f64,
    pub panel: f64,
    pub order: usize,
    /// Panels whose nodes disagree on the minimizing action are split in
    /// four, at most this many times.
    pub max_depth: usize,
    /// Power the bounded procedures must reach; the power row's
    /// right-hand side when absent.
    pub power: Option<f64>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            half_width: 10.0,
            panel: 0.25,
            order: 8,
            max_depth: 7,
            power: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub nu_p: f64,
    /// `(delta1, delta2, nu)` for every error row with a positive dual.
    pub active_fwer: Vec<(f64, f64, f64)>,
    /// True nulls charged by each row of `active_fwer`.
    #[serde(default)]
    pub active_nulls: Vec<u8>,
    /// `(delta1, delta2, cap, nu)` for risk caps with a positive dual.
    pub active_caps: Vec<(f64, f64, f64, f64)>,
    pub alpha: f64,
    pub power: f64,
    pub lower_bound: f64,
    pub primal_risk: f64,
    pub bound_gap: f64,
    /// Change in the integral between the two finest refinement levels.
    pub quadrature_error: f64,
    /// `nu_p` times the minimum-effect mass outside the integration box,
    /// already subtracted from `lower_bound`.
    pub tail_term: f64,
    pub panels: usize,
}

impl DualCertificate {
    /// Lower bound on the risk of a procedure with error rates `fwer` at
    /// the points of `active_fwer` (same order), `H0C` power `power` at the
    /// minimum effect, and risks `cap_risk` at the points of `active_caps`.
    /// For a procedure meeting every constraint this is at most
    /// `lower_bound` below its risk; otherwise the violations are charged
    /// at the dual prices.
    pub fn floor_for(&self, fwer: &[f64], power: f64, cap_risk: &[f64]) -> Result<f64> {
        if fwer.len() != self.active_fwer.len() || cap_risk.len() != self.active_caps.len() {
            return Err(Error::Config("one value per active row is needed".into()));
        }
        let errors: f64 = self.active_fwer.iter().zip(fwer).map(|((_, _, nu), f)| nu * (f - self.alpha)).sum();
        let caps: f64 = self.active_caps.iter().zip(cap_risk).map(|((_, _, cap, nu), r)| nu * (r - cap)).sum();
        Ok(self.lower_bound - errors - caps - self.nu_p * (self.power - power))
    }
}

/// One multiplier term of the Lagrangian.
struct Term {
    delta: [f64; 2],
    /// Coefficient multiplying `phi(z - delta)` for each candidate action.
    coef: Vec<f64>,
}

struct Integrand<'a> {
    loss: &'a LossSpec,
    prior: &'a Prior,
    actions: Vec<u8>,
    terms: Vec<Term>,
}

impl Integrand<'_> {
    /// Value for every candidate action at `z`.
    fn values(&self, z1: f64, z2: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (w, comp) in &self.prior.components {
            let (m, sd) = (comp.mean(), comp.sd());
            let s = [0, 1].map(|k| (1.0 + sd[k] * sd[k]).sqrt());
            let marg = [z1, z2]
                .iter()
                .enumerate()
                .map(|(k, z)| normal::pdf((z - m[k]) / s[k]) / s[k])
                .collect::<Vec<_>>();
            let a = [false, true].map(|cov| self.loss.axis_density(0, cov, m[0], sd[0], z1));
            let b = [false, true].map(|cov| self.loss.axis_density(1, cov, m[1], sd[1], z2));
            for (v, act) in out.iter_mut().zip(&self.actions) {
                let c1 = act & 1 != 0;
                let c2 = act & 2 != 0;
                *v += w * (a[c1 as usize] * marg[1] + marg[0] * b[c2 as usize]);
            }
        }
        for t in &self.terms {
            let dens = normal::pdf(z1 - t.delta[0]) * normal::pdf(z2 - t.delta[1]);
            if dens == 0.0 {
                continue;
            }
            for (v, c) in out.iter_mut().zip(&t.coef) {
                *v += c * dens;
            }
        }
    }
}

/// Candidate actions for the unconstrained minimization: every subset, so
/// that the bound also covers procedures outside the LP's action space.
fn candidates(space: &ActionSpace) -> Vec<u8> {
    match space.kind {
        SpaceKind::Testing => (0u8..8).collect(),
        SpaceKind::Decision => vec![0, 1, 2, 3],
    }
}

struct Quad<'a> {
    f: &'a Integrand<'a>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    max_depth: usize,
}

impl Quad<'_> {
    /// Integral of the pointwise minimum over a panel at the finest level
    /// and at the level above, plus the number of leaf panels.
    fn panel(&self, x0: f64, x1: f64, y0: f64, y1: f64, depth: usize) -> (f64, f64, usize) {
        let n = self.nodes.len();
        let (hx, hy) = (0.5 * (x1 - x0), 0.5 * (y1 - y0));
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let mut vals = vec![0.0; self.f.actions.len()];
        let mut total = 0.0;
        let mut arg0 = None;
        let mut uniform = true;
        for i in 0..n {
            let z1 = cx + hx * self.nodes[i];
            for j in 0..n {
                let z2 = cy + hy * self.nodes[j];
                self.f.values(z1, z2, &mut vals);
                let (k, v) = vals
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (k, v)| if *v < acc.1 { (k, *v) } else { acc });
                match arg0 {
                    None => arg0 = Some(k),
                    Some(a) if a != k => uniform = false,
                    _ => {}
                }
                total += self.weights[i] * self.weights[j] * v;
            }
        }
        let gl = total * hx * hy;
        if uniform || depth == self.max_depth {
            return (gl, gl, 1);
        }
        let quarters = [(x0, cx, y0, cy), (cx, x1, y0, cy), (x0, cx, cy, y1), (cx, x1, cy, y1)];
        let mut fine = 0.0;
        let mut coarse = 0.0;
        let mut count = 0;
        for (a, b, c, d) in quarters {
            let (f, g, k) = self.panel(a, b, c, d, depth + 1);
            fine += f;
            coarse += g;
            count += k;
        }
        if depth + 1 == self.max_depth {
            coarse = gl;
        }
        (fine, coarse, count)
    }
}

/// Lower bound on the Bayes risk of every procedure meeting the original
/// constraints at level `alpha` (and the power and risk-cap rows at their
/// right-hand sides).
pub fn dual_lower_bound(
    sol: &LpSolution,
    lp: &SparseLp,
    loss: &LossSpec,
    prior: &Prior,
    alpha: f64,
    opts: &BoundOptions,
) -> Result<DualCertificate> {
    if sol.duals.len() != lp.rows.len() {
        return Err(Error::Config("solution carries no duals for this LP".into()));
    }
    if sol.duals.iter().any(|y| !(*y >= 0.0)) {
        return Err(Error::Config("duals must be nonnegative".into()));
    }
    prior.validate()?;
    let space = &lp.space;
    let actions = candidates(space);
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut nu_p = 0.0;
    let mut power = 0.0;
    let mut active_fwer = Vec::new();
    let mut active_nulls = Vec::new();
    let mut active_caps = Vec::new();
    let mut power_delta = [0.0, 0.0];
    for (row, &y) in lp.rows.iter().zip(&sol.duals) {
        if let RowTag::Power { delta } = row.tag {
            power = opts.power.unwrap_or(-row.rhs);
            power_delta = delta;
        }
        if y <= 0.0 {
            continue;
        }
        let in_space = |a: u8| space.position(a).filter(|p| *p > 0).map(|p| row.weights[p - 1]);
        match row.tag {
            RowTag::Fwer { delta, nulls } => {
                let coef = actions
                    .iter()
                    .map(|&a| {
                        let e = if a == 0 {
                            0.0
                        } else {
                            in_space(a).unwrap_or(((a & nulls) != 0) as u8 as f64)
                        };
                        y * e
                    })
                    .collect();
                terms.push(Term { delta, coef });
                constant -= y * alpha;
                active_fwer.push((delta[0], delta[1], y));
                active_nulls.push(nulls);
            }
            RowTag::Power { delta } => {
                let coef = actions
                    .iter()
                    .map(|&a| {
                        let h = if a == 0 { 0.0 } else { in_space(a).map(|w| -w).unwrap_or(((a & H0C) != 0) as u8 as f64) };
                        -y * h
                    })
                    .collect();
                terms.push(Term { delta, coef });
                constant += y * power;
                nu_p = y;
            }
            RowTag::RiskCap { delta, cap } => {
                let coef = actions.iter().map(|&a| y * loss.value(a, delta[0], delta[1])).collect();
                terms.push(Term { delta, coef });
                constant -= y * cap;
                active_caps.push((delta[0], delta[1], cap, y));
            }
        }
    }
    let f = Integrand {
        loss,
        prior,
        actions,
        terms,
    };
    let rule = normal::gauss_legendre(opts.order);
    let quad = Quad {
        f: &f,
        nodes: rule.nodes,
        weights: rule.weights,
        max_depth: opts.max_depth.max(1),
    };
    let h = opts.half_width;
    let n = (2.0 * h / opts.panel).ceil() as usize;
    let width = 2.0 * h / n as f64;
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let parts: Vec<(f64, f64, usize)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let x0 = -h + i as f64 * width;
            let y0 = -h + j as f64 * width;
            quad.panel(x0, x0 + width, y0, y0 + width, 0)
        })
        .collect();
    let fine: f64 = parts.iter().map(|p| p.0).sum();
    let coarse: f64 = parts.iter().map(|p| p.1).sum();
    let panels = parts.iter().map(|p| p.2).sum();
    let inside = normal::shifted_interval(-h, h, power_delta[0]) * normal::shifted_interval(-h, h, power_delta[1]);
    let tail_term = nu_p * (1.0 - inside);
    let lower_bound = fine + constant - tail_term;

    let mut base = 0.0;
    for (w, comp) in &prior.components {
        base += w * loss.empty_action_mean(comp)?;
    }
    let primal_risk = base - lp.objective(&sol.x);
    Ok(DualCertificate {
        nu_p,
        active_fwer,
        active_nulls,
        active_caps,
        alpha,
        power,
        lower_bound,
        primal_risk,
        bound_gap: (primal_risk - lower_bound).abs(),
        quadrature_error: (fine - coarse).abs(),
        tail_term,
        panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RectGrid;
    use crate::lp::{objective, power_row, ConstraintGrid};
    use crate::solver::{SolveCounts, LpSolution};
    use crate::trial::DerivedScale;

    fn empty_solution(lp: &SparseLp) -> LpSolution {
        LpSolution {
            x: vec![0.0; lp.n_vars()],
            objective: 0.0,
            risk: lp.base_value,
            duals: vec![0.0; lp.rows.len()],
            upper_bound: 0.0,
            gap: 0.0,
            active_set: vec![],
            max_violation: 0.0,
            randomized_fraction: 0.0,
            randomized_cells: 0,
            counts: SolveCounts::default(),
            wall_time: 0.0,
            purified: false,
            subgradient_log: vec![],
            colgen_log: vec![],
        }
    }

    #[test]
    fn zero_duals_give_the_unconstrained_bayes_risk() {
        // without constraints, rejecting every hypothesis is optimal for
        // the indicator loss, with risk 0
        let scale = DerivedScale::from_rho(0.5f64.sqrt(), [2.0693, 2.0693]);
        let loss = LossSpec::indicator(scale.delta_min);
        let prior = Prior::builtin("sym", &scale).unwrap();
        let grid = RectGrid::square(1.0, 2.0).unwrap();
        let space = ActionSpace::testing();
        let (c, base_value) = objective(&grid, &space, &loss, &prior).unwrap();
        let lp = SparseLp {
            grid: grid.clone(),
            space: space.clone(),
            c,
            rows: vec![power_row(&grid, &space, &scale, 0.9)],
            base_value,
        };
        let cert = dual_lower_bound(&empty_solution(&lp), &lp, &loss, &prior, 0.05, &BoundOptions::default()).unwrap();
        assert!(cert.lower_bound.abs() < 1e-12, "{}", cert.lower_bound);
        assert_eq!(cert.nu_p, 0.0);
        assert!(cert.active_fwer.is_empty());
    }

    #[test]
    fn single_global_null_dual_matches_closed_form() {
        // point prior at (m, m), indicator loss, one error row at the origin
        // with dual nu. Reject everything where the loss density beats the
        // penalty: 2 phi(z - m) > nu phi(z), i.e. m (z1 + z2) - m^2 > ln(nu/2).
        // Oracle: closed-form half-plane probabilities.
        let m = 2.0;
        let nu = 3.0;
        let scale = DerivedScale::from_rho(0.5f64.sqrt(), [1.0, 1.0]);
        let loss = LossSpec::indicator(scale.delta_min);
        let prior = Prior::point_mass([m, m]);
        let grid = RectGrid::square(1.0, 1.0).unwrap();
        let space = ActionSpace::testing();
        let (c, base_value) = objective(&grid, &space, &loss, &prior).unwrap();
        let g = ConstraintGrid::global_null();
        let row = crate::lp::fwer_row(&grid, &space, &g.points[0], 0.05, false);
        let lp = SparseLp {
            grid,
            space,
            c,
            rows: vec![row],
            base_value,
        };
        let mut sol = empty_solution(&lp);
        sol.duals = vec![nu];
        let cert = dual_lower_bound(&sol, &lp, &loss, &prior, 0.05, &BoundOptions::default()).unwrap();
        // with S = z1 + z2 ~ N(mu, 2), reject iff S > t, t = (ln(nu/2) + m^2) / m
        let t = ((nu / 2.0).ln() + m * m) / m;
        let sd = 2f64.sqrt();
        let miss = normal::cdf((t - 2.0 * m) / sd);
        let err = normal::sf(t / sd);
        let oracle = 2.0 * miss + nu * err - nu * 0.05;
        assert!((cert.lower_bound - oracle).abs() < 1e-6, "{} vs {oracle}", cert.lower_bound);
        // the Lagrangian minimizer itself sits exactly on its floor, and
        // rejecting nothing (risk 2, no errors) sits above it
        let floor = cert.floor_for(&[err], 0.0, &[]).unwrap();
        assert!((floor - 2.0 * miss).abs() < 1e-6);
        assert!(cert.floor_for(&[0.0], 0.0, &[]).unwrap() <= 2.0);
        assert!(cert.floor_for(&[], 0.0, &[]).is_err());
    }
}
