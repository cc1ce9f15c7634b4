//! Assembly of the discretized problem into a block-sparse LP.
//!
//! Variables are `x[cell * n_free + j]`, the probability of taking free
//! action `j` (every action but the empty one) in a cell. Each cell carries
//! the structural block `x >= 0, sum_j x <= 1`; the remaining mass goes to
//! the empty action. Every coupling ("dense") row has coefficients of the
//! separable form `axis1[i1] * axis2[i2] * weights[j]`, which is what keeps
//! the 1.5M-variable problem cheap to store and price.

use crate::actions::{ActionSpace, SpaceKind};
use crate::error::{Error, Result};
use crate::kernel::{Rect, RectGrid};
use crate::loss::LossSpec;
use crate::normal;
use crate::prior::{self, Component, Prior};
use crate::trial::{true_nulls, DerivedScale, TrialDesign, H0C};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// A point on the null boundary with its set of true nulls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub delta: [f64; 2],
    pub nulls: u8,
}

/// How to space the points of the constraint grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintGridSpec {
    /// Fixed spacing along each boundary line.
    Spacing(f64),
    /// Pick a spacing that yields exactly this many points.
    TargetCount(usize),
    /// Only the global null `(0, 0)`.
    GlobalNullOnly,
}

impl Default for ConstraintGridSpec {
    fn default() -> Self {
        ConstraintGridSpec::TargetCount(105)
    }
}

/// Points on the three lines `delta1 = 0`, `delta2 = 0` and
/// `rho1 delta1 + rho2 delta2 = 0`, clipped to `[-b, b]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGrid {
    pub spacing: f64,
    pub points: Vec<GridPoint>,
}

impl ConstraintGrid {
    pub fn build(scale: &DerivedScale, b: f64, spec: ConstraintGridSpec) -> Result<Self> {
        match spec {
            ConstraintGridSpec::Spacing(t) => ConstraintGrid::with_spacing(scale, b, t),
            ConstraintGridSpec::TargetCount(n) => ConstraintGrid::with_count(scale, b, n),
            ConstraintGridSpec::GlobalNullOnly => Ok(ConstraintGrid::global_null()),
        }
    }

    pub fn global_null() -> Self {
        ConstraintGrid {
            spacing: f64::INFINITY,
            points: vec![GridPoint {
                delta: [0.0, 0.0],
                nulls: crate::trial::ALL_NULLS,
            }],
        }
    }

    pub fn with_spacing(scale: &DerivedScale, b: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !(b > 0.0) {
            return Err(Error::Config("constraint spacing and b must be positive".into()));
        }
        let eps = 1e-12;
        let [r1, r2] = scale.rho;
        let mut points = vec![GridPoint {
            delta: [0.0, 0.0],
            nulls: crate::trial::ALL_NULLS,
        }];
        let k_axis = ((b + eps) / tau).floor() as i64;
        let mut push = |d: [f64; 2], extra: u8| {
            let nulls = true_nulls(scale, d[0], d[1]).mask() | extra;
            points.push(GridPoint { delta: d, nulls });
        };
        for k in (-k_axis..=k_axis).filter(|k| *k != 0) {
            push([k as f64 * tau, 0.0], crate::trial::H02);
        }
        for k in (-k_axis..=k_axis).filter(|k| *k != 0) {
            push([0.0, k as f64 * tau], crate::trial::H01);
        }
        let k_diag = ((b + eps) / (r1.max(r2) * tau)).floor() as i64;
        for k in (-k_diag..=k_diag).filter(|k| *k != 0) {
            let t = k as f64 * tau;
            push([r2 * t, -r1 * t], H0C);
        }
        Ok(ConstraintGrid { spacing: tau, points })
    }

    /// Number of points `with_spacing` would produce.
    pub fn count_for(scale: &DerivedScale, b: f64, tau: f64) -> usize {
        let eps = 1e-12;
        let rmax = scale.rho[0].max(scale.rho[1]);
        1 + 4 * ((b + eps) / tau).floor() as usize + 2 * ((b + eps) / (rmax * tau)).floor() as usize
    }

    /// Spacing giving exactly `target` points: the count is a step
    /// function of the spacing, so scan its breakpoints and take the
    /// midpoint of the widest-spacing interval that hits the target.
    pub fn spacing_for_count(scale: &DerivedScale, b: f64, target: usize) -> Result<f64> {
        if target == 1 {
            return Err(Error::Config("use the global-null grid for a single point".into()));
        }
        let rmax = scale.rho[0].max(scale.rho[1]);
        let kmax = target.max(8) as i64 * 4;
        let mut cuts: Vec<f64> = (1..=kmax).flat_map(|k| [b / k as f64, b / (rmax * k as f64)]).collect();
        cuts.push(b / rmax * 2.0);
        cuts.sort_by(|a, b| b.total_cmp(a));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut nearest = (usize::MAX, 0usize);
        for w in cuts.windows(2) {
            let (hi, lo) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let n = ConstraintGrid::count_for(scale, b, mid);
            if n == target {
                return Ok(mid);
            }
            let diff = n.abs_diff(target);
            if diff < nearest.0 {
                nearest = (diff, n);
            }
        }
        Err(Error::Config(format!(
            "no constraint spacing yields {target} points (closest count {})",
            nearest.1
        )))
    }

    pub fn with_count(scale: &DerivedScale, b: f64, target: usize) -> Result<Self> {
        if target == 1 {
            return Ok(ConstraintGrid::global_null());
        }
        let tau = ConstraintGrid::spacing_for_count(scale, b, target)?;
        let g = ConstraintGrid::with_spacing(scale, b, tau)?;
        debug_assert_eq!(g.points.len(), target);
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowTag {
    /// Error-rate row at a null-boundary point.
    Fwer { delta: [f64; 2], nulls: u8 },
    /// Negated power row for `H0C` at the minimum-effect alternative.
    Power { delta: [f64; 2] },
    /// Risk cap at an alternative, used by the minimax search.
    RiskCap { delta: [f64; 2], cap: f64 },
}

/// Coupling row `sum_cells axis[0][i1] axis[1][i2] sum_j weights[j] x_cj <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseRow {
    pub axis: [Vec<f64>; 2],
    pub weights: Vec<f64>,
    pub rhs: f64,
    pub tag: RowTag,
}

impl DenseRow {
    #[inline]
    pub fn coef(&self, i1: usize, i2: usize, j: usize) -> f64 {
        self.axis[0][i1] * self.axis[1][i2] * self.weights[j]
    }

    /// Row value `a . x`.
    pub fn activity(&self, grid: &RectGrid, x: &[f64]) -> f64 {
        let nf = self.weights.len();
        let s = weighted_cell_sums(&self.weights, x, nf);
        separable_dot(&self.axis[0], &self.axis[1], &s, grid.n2())
    }

    pub fn label(&self) -> String {
        match &self.tag {
            RowTag::Fwer { delta, nulls } => format!(
                "fwer({:.4},{:.4})[{}]",
                delta[0],
                delta[1],
                crate::trial::mask_label(*nulls)
            ),
            RowTag::Power { .. } => "power".into(),
            RowTag::RiskCap { delta, .. } => format!("cap({:.4},{:.4})", delta[0], delta[1]),
        }
    }
}

/// `s[cell] = sum_j weights[j] x[cell * nf + j]`.
pub fn weighted_cell_sums(weights: &[f64], x: &[f64], nf: usize) -> Vec<f64> {
    x.par_chunks(nf)
        .map(|blk| blk.iter().zip(weights).map(|(a, w)| a * w).sum())
        .collect()
}

/// `sum_{i1,i2} a1[i1] a2[i2] s[i1 * n2 + i2]`, summed in a fixed order so
/// results do not depend on the thread count.
pub fn separable_dot(a1: &[f64], a2: &[f64], s: &[f64], n2: usize) -> f64 {
    let partial: Vec<f64> = s
        .par_chunks(n2)
        .zip(a1.par_iter())
        .map(|(row, w1)| {
            if *w1 == 0.0 {
                return 0.0;
            }
            w1 * row.iter().zip(a2).map(|(v, w2)| v * w2).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Options for assembling an LP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSettings {
    /// Error rows use `alpha - alpha_margin` as right-hand side.
    pub alpha_margin: f64,
    /// Include the `H0C` power row (testing problems only).
    pub power_row: bool,
    /// Use the stricter decision error rule (any recommended
    /// subpopulation without benefit counts as an error).
    pub strict_decision: bool,
}

impl Default for LpSettings {
    fn default() -> Self {
        LpSettings {
            alpha_margin: 1e-4,
            power_row: true,
            strict_decision: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpDims {
    pub n_v: usize,
    pub n_d: usize,
    pub n_s: usize,
}

/// The canonical problem `max c.x` subject to dense rows and per-cell
/// simplex blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseLp {
    pub grid: RectGrid,
    pub space: ActionSpace,
    /// `c[cell * n_free + j]`: expected loss reduction from taking action
    /// `j + 1` instead of the empty action in the cell.
    pub c: Vec<f64>,
    pub rows: Vec<DenseRow>,
    /// Expected loss on the grid of the procedure that never acts.
    pub base_value: f64,
}

impl SparseLp {
    pub fn n_cells(&self) -> usize {
        self.grid.len()
    }

    pub fn n_free(&self) -> usize {
        self.space.n_free()
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn dims(&self) -> LpDims {
        let n_v = self.n_vars();
        LpDims {
            n_v,
            n_d: self.rows.len(),
            n_s: self.n_cells() + n_v,
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let partial: Vec<f64> = self
            .c
            .par_chunks(4096)
            .zip(x.par_chunks(4096))
            .map(|(c, x)| c.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        partial.iter().sum()
    }

    /// Expected loss on the grid: `base_value - c.x`.
    pub fn risk(&self, x: &[f64]) -> f64 {
        self.base_value - self.objective(x)
    }

    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.activity(&self.grid, x)).collect()
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs).collect()
    }

    /// Largest positive dense-row residual `a.x - rhs`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.activities(x)
            .iter()
            .zip(&self.rows)
            .map(|(a, r)| a - r.rhs)
            .fold(0.0, f64::max)
    }

    /// Largest violation of `x >= 0, sum <= 1` over all cells.
    pub fn structural_violation(&self, x: &[f64]) -> f64 {
        x.chunks(self.n_free())
            .map(|b| {
                let neg = b.iter().fold(0.0f64, |m, v| m.max(-v));
                let over = b.iter().sum::<f64>() - 1.0;
                neg.max(over)
            })
            .fold(0.0, f64::max)
    }

    pub fn coef(&self, row: usize, cell: usize, j: usize) -> f64 {
        let (i1, i2) = self.grid.cell(cell);
        self.rows[row].coef(i1, i2, j)
    }

    /// The dense-row matrix written out in full (rows x variables); only
    /// sensible for tiny grids.
    pub fn dense_matrix(&self) -> Vec<Vec<f64>> {
        let nf = self.n_free();
        (0..self.rows.len())
            .map(|r| {
                (0..self.n_vars())
                    .map(|v| self.coef(r, v / nf, v % nf))
                    .collect()
            })
            .collect()
    }

    /// Row indices grouped by identical weight vectors.
    pub fn weight_groups(&self) -> Vec<(Vec<f64>, Vec<usize>)> {
        let mut groups: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            match groups.iter_mut().find(|(w, _)| *w == r.weights) {
                Some(g) => g.1.push(i),
                None => groups.push((r.weights.clone(), vec![i])),
            }
        }
        groups
    }

    /// A copy with the dense rows replaced.
    pub fn with_rows(&self, rows: Vec<DenseRow>) -> SparseLp {
        SparseLp {
            grid: self.grid.clone(),
            space: self.space.clone(),
            c: self.c.clone(),
            rows,
            base_value: self.base_value,
        }
    }

    /// Write the full problem in CPLEX LP text format, including the
    /// per-cell structural rows.
    pub fn write_lp_format<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let nf = self.n_free();
        let name = |v: usize| format!("x{}_{}", v / nf, v % nf + 1);
        writeln!(out, "\\ {} cells, {} actions per cell", self.n_cells(), nf)?;
        writeln!(out, "Maximize")?;
        write!(out, " obj:")?;
        for (v, c) in self.c.iter().enumerate() {
            if *c != 0.0 {
                write!(out, " {:+e} {}", c, name(v))?;
            }
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for (r, row) in self.rows.iter().enumerate() {
            write!(out, " d{r}:")?;
            let mut any = false;
            for v in 0..self.n_vars() {
                let a = self.coef(r, v / nf, v % nf);
                if a != 0.0 {
                    write!(out, " {:+e} {}", a, name(v))?;
                    any = true;
                }
            }
            if !any {
                write!(out, " 0 {}", name(0))?;
            }
            writeln!(out, " <= {:e}", row.rhs)?;
        }
        for cell in 0..self.n_cells() {
            write!(out, " s{cell}:")?;
            for j in 0..nf {
                write!(out, " + {}", name(cell * nf + j))?;
            }
            writeln!(out, " <= 1")?;
        }
        writeln!(out, "End")
    }
}

/// Error-rate row at a boundary point: weight 1 on every action that is a
/// Type I error there.
pub fn fwer_row(grid: &RectGrid, space: &ActionSpace, point: &GridPoint, rhs: f64, strict: bool) -> DenseRow {
    let weights = space
        .free_actions()
        .iter()
        .map(|a| space.is_error(*a, point.nulls, strict) as u8 as f64)
        .collect();
    DenseRow {
        axis: [grid.axis_probs(0, point.delta[0]), grid.axis_probs(1, point.delta[1])],
        weights,
        rhs,
        tag: RowTag::Fwer {
            delta: point.delta,
            nulls: point.nulls,
        },
    }
}

/// `P[reject H0C] >= power` at the minimum-effect alternative, negated.
pub fn power_row(grid: &RectGrid, space: &ActionSpace, scale: &DerivedScale, power: f64) -> DenseRow {
    let d = scale.both_min();
    let weights = space
        .free_actions()
        .iter()
        .map(|a| if a & H0C != 0 { -1.0 } else { 0.0 })
        .collect();
    DenseRow {
        axis: [grid.axis_probs(0, d[0]), grid.axis_probs(1, d[1])],
        weights,
        rhs: -power,
        tag: RowTag::Power { delta: d },
    }
}

/// Risk at a point alternative is at most `cap`; written relative to the
/// empty action so that it is linear in the free variables.
pub fn risk_cap_row(grid: &RectGrid, space: &ActionSpace, loss: &LossSpec, delta: [f64; 2], cap: f64) -> DenseRow {
    let empty = loss.value(0, delta[0], delta[1]);
    let weights = space
        .free_actions()
        .iter()
        .map(|a| loss.value(*a, delta[0], delta[1]) - empty)
        .collect();
    DenseRow {
        axis: [grid.axis_probs(0, delta[0]), grid.axis_probs(1, delta[1])],
        weights,
        rhs: cap - empty * grid.coverage(delta[0], delta[1]),
        tag: RowTag::RiskCap { delta, cap },
    }
}

/// Per-axis expectations for one prior component: `e[i] = E[P(Z in I_i)]`
/// and `a[cov][i] = E[loss_axis(cov, delta) P(Z in I_i)]`.
#[derive(Debug, Clone)]
pub struct AxisMoments {
    pub e: Vec<f64>,
    pub a: [Vec<f64>; 2],
}

pub fn axis_moments(edges: &[f64], loss: &LossSpec, k: usize, mean: f64, sd: f64) -> AxisMoments {
    let n = edges.len() - 1;
    if sd == 0.0 {
        let e: Vec<f64> = crate::kernel::axis_interval_probs(edges, mean);
        let a = [false, true].map(|cov| {
            let l = loss.axis(k, cov, mean);
            e.iter().map(|p| l * p).collect()
        });
        return AxisMoments { e, a };
    }
    let tot = (1.0 + sd * sd).sqrt();
    let e = edges
        .windows(2)
        .map(|w| normal::shifted_interval(w[0] / tot, w[1] / tot, mean / tot))
        .collect();
    let lo = mean - prior::SUPPORT_SDS * sd;
    let hi = mean + prior::SUPPORT_SDS * sd;
    let (xs, ws) = normal::panel_nodes(lo, hi, &[loss.delta_min[k]], sd / 4.0, 16);
    let mut a = [vec![0.0; n], vec![0.0; n]];
    for (d, w) in xs.iter().zip(&ws) {
        let dens = w * normal::pdf((d - mean) / sd) / sd;
        let l = [loss.axis(k, false, *d), loss.axis(k, true, *d)];
        if l[0] == 0.0 && l[1] == 0.0 {
            continue;
        }
        for (i, win) in edges.windows(2).enumerate() {
            let p = normal::shifted_interval(win[0], win[1], *d) * dens;
            a[0][i] += l[0] * p;
            a[1][i] += l[1] * p;
        }
    }
    AxisMoments { e, a }
}

/// Objective vector and never-act loss for a separable loss and a product
/// prior.
pub fn objective(grid: &RectGrid, space: &ActionSpace, loss: &LossSpec, prior: &Prior) -> Result<(Vec<f64>, f64)> {
    loss.validate()?;
    prior.validate()?;
    if space.kind != loss.space_kind() {
        return Err(Error::Config(format!(
            "loss expects the {:?} action space, got {:?}",
            loss.space_kind(),
            space.kind
        )));
    }
    loss.bound_on(prior)?;
    let nf = space.n_free();
    let (n1, n2) = (grid.n1(), grid.n2());
    let edges = [grid.edges(0), grid.edges(1)];
    let cover: Vec<[usize; 2]> = space
        .free_actions()
        .iter()
        .map(|a| [space.covers(*a, 0) as usize, space.covers(*a, 1) as usize])
        .collect();
    let mut c = vec![0.0; n1 * n2 * nf];
    let mut base = 0.0;
    for (w, comp) in &prior.components {
        if *w == 0.0 {
            continue;
        }
        let (m, s) = (comp.mean(), comp.sd());
        let ax = [
            axis_moments(&edges[0], loss, 0, m[0], s[0]),
            axis_moments(&edges[1], loss, 1, m[1], s[1]),
        ];
        base += w
            * (ax[0].a[0].iter().sum::<f64>() * ax[1].e.iter().sum::<f64>()
                + ax[0].e.iter().sum::<f64>() * ax[1].a[0].iter().sum::<f64>());
        c.par_chunks_mut(n2 * nf).enumerate().for_each(|(i1, row)| {
            for i2 in 0..n2 {
                for (j, cov) in cover.iter().enumerate() {
                    let g1 = ax[0].a[0][i1] - ax[0].a[cov[0]][i1];
                    let g2 = ax[1].a[0][i2] - ax[1].a[cov[1]][i2];
                    row[i2 * nf + j] += w * (g1 * ax[1].e[i2] + ax[0].e[i1] * g2);
                }
            }
        });
    }
    for v in c.iter_mut() {
        if v.abs() < 1e-300 {
            *v = 0.0;
        }
    }
    Ok((c, base))
}

/// `E_prior[L(action; delta) P_delta(rect)]`, computed directly from the
/// two-dimensional integral (no axis factorization).
pub fn objective_coeff(rect: &Rect, action: u8, loss: &LossSpec, prior: &Prior) -> Result<f64> {
    let f = |d1: f64, d2: f64| loss.value(action, d1, d2) * crate::kernel::rect_prob(d1, d2, rect);
    let mut total = 0.0;
    for (w, comp) in &prior.components {
        if *w == 0.0 {
            continue;
        }
        let v = match comp {
            Component::PointMass { .. } => prior::integrate_component(&f, comp)?,
            Component::Normal { .. } => {
                prior::integrate_component_split(&f, comp, [&[loss.delta_min[0]], &[loss.delta_min[1]]])
            }
        };
        total += w * v;
    }
    Ok(total)
}

/// Build the testing LP (or the decision LP when the loss is a decision
/// loss): objective, one error row per constraint-grid point, the power
/// row, then `extra_rows`.
pub fn build_lp(
    design: &TrialDesign,
    grid: &RectGrid,
    constraints: &ConstraintGrid,
    loss: &LossSpec,
    prior: &Prior,
    settings: &LpSettings,
    extra_rows: Vec<DenseRow>,
) -> Result<SparseLp> {
    design.validate()?;
    let scale = design.scale();
    for k in 0..2 {
        if (loss.delta_min[k] - scale.delta_min[k]).abs() > 1e-9 * scale.delta_min[k] {
            return Err(Error::Config("loss thresholds do not match the design scale".into()));
        }
    }
    let space = ActionSpace::for_kind(loss.space_kind());
    let (c, base_value) = objective(grid, &space, loss, prior)?;
    let rhs = design.alpha - settings.alpha_margin;
    let mut rows: Vec<DenseRow> = constraints
        .points
        .par_iter()
        .map(|p| fwer_row(grid, &space, p, rhs, settings.strict_decision))
        .collect();
    if space.kind == SpaceKind::Testing && settings.power_row {
        rows.push(power_row(grid, &space, &scale, 1.0 - design.beta));
    }
    for r in &extra_rows {
        if r.weights.len() != space.n_free() || r.axis[0].len() != grid.n1() || r.axis[1].len() != grid.n2() {
            return Err(Error::Config("extra row does not match the grid or action space".into()));
        }
    }
    rows.extend(extra_rows);
    Ok(SparseLp {
        grid: grid.clone(),
        space,
        c,
        rows,
        base_value,
    })
}

/// Decision LP: recommendation actions, no power row.
pub fn build_decision_lp(
    design: &TrialDesign,
    grid: &RectGrid,
    constraints: &ConstraintGrid,
    loss: &LossSpec,
    prior: &Prior,
    strict: bool,
) -> Result<SparseLp> {
    if loss.space_kind() != SpaceKind::Decision {
        return Err(Error::Config("decision LP needs a decision loss".into()));
    }
    let settings = LpSettings {
        strict_decision: strict,
        power_row: false,
        ..LpSettings::default()
    };
    build_lp(design, grid, constraints, loss, prior, &settings, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::{H01, H02};

    fn sym() -> TrialDesign {
        TrialDesign::common_variance(0.5, 1.0, 0.05, 0.1).unwrap()
    }

    #[test]
    fn constraint_grid_hits_target_count() {
        for p1 in [0.5, 0.63] {
            let s = TrialDesign::common_variance(p1, 1.0, 0.05, 0.1).unwrap().scale();
            let g = ConstraintGrid::with_count(&s, 5.0, 105).unwrap();
            assert_eq!(g.len(), 105);
            let origins = g.points.iter().filter(|p| p.delta == [0.0, 0.0]).count();
            assert_eq!(origins, 1);
            for p in &g.points {
                assert!(p.nulls != 0);
                assert!(p.delta[0].abs() <= 5.0 + 1e-9 && p.delta[1].abs() <= 5.0 + 1e-9);
            }
        }
        let s = sym().scale();
        assert_eq!(ConstraintGrid::count_for(&s, 5.0, 5.0 / 17.0), 1 + 68 + 2 * 24);
    }

    #[test]
    fn diagonal_points_carry_combined_null() {
        let s = TrialDesign::common_variance(0.63, 1.0, 0.05, 0.1).unwrap().scale();
        let g = ConstraintGrid::with_spacing(&s, 5.0, 0.3).unwrap();
        let diag: Vec<_> = g.points.iter().filter(|p| p.delta[0] != 0.0 && p.delta[1] != 0.0).collect();
        assert!(!diag.is_empty());
        for p in diag {
            assert!(p.nulls & H0C != 0);
            if p.delta[0] > 0.0 {
                assert_eq!(p.nulls, H02 | H0C);
            } else {
                assert_eq!(p.nulls, H01 | H0C);
            }
        }
    }

    #[test]
    fn fwer_row_weights_follow_true_nulls() {
        let grid = RectGrid::square(1.0, 2.0).unwrap();
        let space = ActionSpace::testing();
        let global = fwer_row(&grid, &space, &ConstraintGrid::global_null().points[0], 0.05, false);
        assert_eq!(global.weights, vec![1.0; 6]);
        let p = GridPoint {
            delta: [0.7, -0.5],
            nulls: H02 | H0C,
        };
        let row = fwer_row(&grid, &space, &p, 0.05, false);
        // {H01}, {H02}, {H0C}, {H01,H0C}, {H02,H0C}, all
        assert_eq!(row.weights, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let p = GridPoint {
            delta: [0.7, 0.0],
            nulls: H02,
        };
        assert_eq!(fwer_row(&grid, &space, &p, 0.05, false).weights, vec![0.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn decision_rows_skip_empty_recommendation() {
        let grid = RectGrid::square(1.0, 2.0).unwrap();
        let space = ActionSpace::decision();
        let s = sym().scale();
        let t = 0.3;
        let d = [s.delta_min[0], -t];
        let p = GridPoint {
            delta: d,
            nulls: true_nulls(&s, d[0], d[1]).mask(),
        };
        let row = fwer_row(&grid, &space, &p, 0.05, false);
        let both = s.rho[0] * s.delta_min[0] <= s.rho[1] * t;
        assert_eq!(row.weights, vec![0.0, 1.0, both as u8 as f64]);
    }

    #[test]
    fn paper_scale_dimensions() {
        let d = sym();
        let s = d.scale();
        let grid = RectGrid::square(0.02, 5.0).unwrap();
        let cg = ConstraintGrid::with_count(&s, 5.0, 105).unwrap();
        let loss = LossSpec::indicator(s.delta_min);
        let prior = Prior::builtin("sym", &s).unwrap();
        let lp = build_lp(&d, &grid, &cg, &loss, &prior, &LpSettings::default(), vec![]).unwrap();
        assert_eq!(
            lp.dims(),
            LpDims {
                n_v: 1_506_006,
                n_d: 106,
                n_s: 1_757_007
            }
        );
    }

    #[test]
    fn objective_matches_direct_integral() {
        let d = sym();
        let s = d.scale();
        let grid = RectGrid::square(0.5, 3.0).unwrap();
        let space = ActionSpace::testing();
        for (name, tol, cells) in [
            ("sym", 1e-14, vec![0usize, 17, 60, 168]),
            ("asym", 1e-14, vec![0, 17, 60, 168]),
            ("sym-normal", 1e-9, vec![60]),
        ] {
            let prior = Prior::builtin(name, &s).unwrap();
            let loss = LossSpec::indicator(s.delta_min);
            let (c, base) = objective(&grid, &space, &loss, &prior).unwrap();
            for &cell in &cells {
                let (i1, i2) = grid.cell(cell);
                let rect = grid.rect(i1, i2);
                let empty = objective_coeff(&rect, 0, &loss, &prior).unwrap();
                for (j, a) in space.free_actions().iter().enumerate() {
                    let direct = empty - objective_coeff(&rect, *a, &loss, &prior).unwrap();
                    assert!((c[cell * 6 + j] - direct).abs() < tol, "{name} {cell} {j}");
                }
            }
            if prior.is_discrete() {
                let direct_base: f64 = grid
                    .rects()
                    .map(|r| objective_coeff(&r, 0, &loss, &prior).unwrap())
                    .sum();
                assert!((base - direct_base).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn objective_coefficient_examples() {
        let s = sym().scale();
        let r = Rect::bounds(0.3, 0.8, -1.0, 2.0);
        let loss = LossSpec::indicator(s.delta_min);
        let all = H01 | H02 | H0C;
        let prior = Prior::builtin("sym", &s).unwrap();
        assert_eq!(objective_coeff(&r, all, &loss, &prior).unwrap(), 0.0);
        let [a, b] = s.delta_min;
        let pm = Prior::point_mass([a, b]);
        let v = objective_coeff(&r, 0, &loss, &pm).unwrap();
        assert!((v - 2.0 * crate::kernel::rect_prob(a, b, &r)).abs() < 1e-15);
        let v = objective_coeff(&r, H01 | H0C, &loss, &prior).unwrap();
        let hand = 0.25 * crate::kernel::rect_prob(0.0, b, &r) + 0.25 * crate::kernel::rect_prob(a, b, &r);
        assert!((v - hand).abs() < 1e-15);
    }

    #[test]
    fn everything_rejected_hits_grid_mass() {
        let d = sym();
        let s = d.scale();
        let grid = RectGrid::square(0.5, 5.0).unwrap();
        let cg = ConstraintGrid::with_count(&s, 5.0, 105).unwrap();
        let loss = LossSpec::indicator(s.delta_min);
        let prior = Prior::builtin("sym", &s).unwrap();
        let lp = build_lp(&d, &grid, &cg, &loss, &prior, &LpSettings::default(), vec![]).unwrap();
        let mut x = vec![0.0; lp.n_vars()];
        for cell in 0..lp.n_cells() {
            x[cell * 6 + 5] = 1.0;
        }
        let act = lp.activities(&x);
        assert!((act[0] - grid.coverage(0.0, 0.0)).abs() < 1e-12);
        for (row, a) in lp.rows.iter().zip(&act) {
            for v in row.axis[0].iter().chain(&row.axis[1]) {
                assert!((0.0..=1.0).contains(v));
            }
            if let RowTag::Fwer { delta, .. } = row.tag {
                assert!((a - grid.coverage(delta[0], delta[1])).abs() < 1e-12);
            }
        }
        assert!((lp.risk(&x) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn lp_text_export_mentions_every_row() {
        let d = sym();
        let s = d.scale();
        let grid = RectGrid::square(1.0, 1.0).unwrap();
        let cg = ConstraintGrid::with_spacing(&s, 1.0, 1.0).unwrap();
        let loss = LossSpec::indicator(s.delta_min);
        let prior = Prior::builtin("sym", &s).unwrap();
        let lp = build_lp(&d, &grid, &cg, &loss, &prior, &LpSettings::default(), vec![]).unwrap();
        let mut buf = Vec::new();
        lp.write_lp_format(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches(" d").count(), lp.rows.len());
        assert_eq!(text.lines().filter(|l| l.starts_with(" s")).count(), lp.n_cells());
        assert!(text.trim_end().ends_with("End"));
    }
}
