//! Enlarge the region where a solved procedure may reject: keep it fixed on
//! `B` and optimize a new rectangle layer out to `B'`.

use crate::error::{Error, Result};
use crate::kernel::RectGrid;
use crate::loss::LossSpec;
use crate::lp::{build_lp, ConstraintGrid, DenseRow, LpSettings};
use crate::prior::Prior;
use crate::procedures::DiscreteProcedure;
use crate::solver::{solve_frozen, LpSolution, SolverConfig, FREE};
use crate::trial::TrialDesign;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Augmented {
    pub procedure: DiscreteProcedure,
    /// Bayes risk before and after the new layer.
    pub risk_before: f64,
    pub risk_after: f64,
    /// Cells of `B' \ B` that take some action.
    pub active_outer_cells: usize,
    pub outer_cells: usize,
    pub dense_rows: usize,
    #[serde(skip)]
    pub solution: Option<LpSolution>,
}

/// Place `base` on the larger grid `outer` (same spacing, contained).
pub fn embed(base: &DiscreteProcedure, outer: &RectGrid) -> Result<(Vec<f64>, Vec<bool>)> {
    let g = &base.grid;
    if (g.tau[0] - outer.tau[0]).abs() > 1e-12 || (g.tau[1] - outer.tau[1]).abs() > 1e-12 {
        return Err(Error::Config("grids must share the cell size".into()));
    }
    let off = [0, 1].map(|k| g.k_lo[k] - outer.k_lo[k]);
    if off.iter().any(|o| *o < 0) || (0..2).any(|k| off[k] as usize + g.n[k] > outer.n[k]) {
        return Err(Error::Config("base grid is not inside the larger grid".into()));
    }
    let nf = base.n_free();
    let mut x = vec![0.0; outer.len() * nf];
    let mut inner = vec![false; outer.len()];
    for i1 in 0..g.n1() {
        for i2 in 0..g.n2() {
            let src = g.index(i1, i2);
            let dst = outer.index(i1 + off[0] as usize, i2 + off[1] as usize);
            x[dst * nf..(dst + 1) * nf].copy_from_slice(&base.m[src * nf..(src + 1) * nf]);
            inner[dst] = true;
        }
    }
    Ok((x, inner))
}

/// Optimize the cells of `B' = [-b', b']^2` outside the base grid with the
/// base held fixed, under error constraints on the null boundary within
/// `B'` and the original power constraint.
#[allow(clippy::too_many_arguments)]
pub fn extend_region_lp(
    base: &DiscreteProcedure,
    b_prime: f64,
    design: &TrialDesign,
    constraint_spacing: f64,
    loss: &LossSpec,
    prior: &Prior,
    settings: &LpSettings,
    cfg: &SolverConfig,
) -> Result<Augmented> {
    let g = &base.grid;
    if !(b_prime > g.b) || (b_prime.round() - b_prime).abs() > 1e-9 {
        return Err(Error::Config("b' must be an integer larger than b".into()));
    }
    let outer = RectGrid::new(g.tau[0], g.tau[1], b_prime)?;
    let constraints = ConstraintGrid::with_spacing(&design.scale(), b_prime, constraint_spacing)?;
    let mut lp = build_lp(design, &outer, &constraints, loss, prior, settings, Vec::new())?;
    let (x_base, inner) = embed(base, &outer)?;
    // the fixed inner cells only shift each row, so they leave the LP as
    // constants and the inner cells are frozen at "no action"
    let shifts = lp.activities(&x_base);
    lp.rows = lp
        .rows
        .into_iter()
        .zip(shifts)
        .map(|(r, s)| DenseRow { rhs: r.rhs - s, ..r })
        .collect();
    let frozen: Vec<u8> = inner.iter().map(|i| if *i { 0 } else { FREE }).collect();
    let sol = solve_frozen(&lp, frozen, cfg)?;
    let x: Vec<f64> = sol.x.iter().zip(&x_base).map(|(a, b)| a + b).collect();
    let procedure = DiscreteProcedure::from_lp(format!("{}+b'={b_prime}", base.label), &lp, &x)?;
    let nf = base.n_free();
    let active_outer_cells = inner
        .iter()
        .enumerate()
        .filter(|(c, i)| !**i && sol.x[c * nf..(c + 1) * nf].iter().sum::<f64>() > 1e-9)
        .count();
    Ok(Augmented {
        risk_before: base.bayes_risk(loss, prior)?,
        risk_after: procedure.bayes_risk(loss, prior)?,
        active_outer_cells,
        outer_cells: inner.iter().filter(|i| !**i).count(),
        dense_rows: lp.rows.len(),
        procedure,
        solution: Some(sol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::ActionSpace;

    #[test]
    fn outer_layer_cell_count() {
        let base = RectGrid::square(0.1, 5.0).unwrap();
        let outer = RectGrid::square(0.1, 6.0).unwrap();
        let p = DiscreteProcedure::from_actions("z", base.clone(), ActionSpace::testing(), &vec![0; base.len()]).unwrap();
        let (_, inner) = embed(&p, &outer).unwrap();
        assert_eq!(inner.iter().filter(|i| !**i).count(), 121 * 121 - 101 * 101);
    }

    #[test]
    fn embedding_keeps_cell_positions() {
        let base = RectGrid::square(0.5, 1.0).unwrap();
        let outer = RectGrid::square(0.5, 2.0).unwrap();
        let acts: Vec<u8> = (0..base.len()).map(|c| if c == 7 { 4 } else { 0 }).collect();
        let p = DiscreteProcedure::from_actions("z", base.clone(), ActionSpace::testing(), &acts).unwrap();
        let (x, _) = embed(&p, &outer).unwrap();
        let r = base.rect(base.cell(7).0, base.cell(7).1);
        let (z1, z2) = r.center();
        let (j1, j2) = (outer.locate(0, z1).unwrap(), outer.locate(1, z2).unwrap());
        let dst = outer.index(j1, j2);
        assert_eq!(x[dst * 6 + 2], 1.0);
        assert_eq!(x.iter().sum::<f64>(), 1.0);
    }
}
