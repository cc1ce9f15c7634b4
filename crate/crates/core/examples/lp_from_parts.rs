//! Assemble and solve a small problem from the library's building blocks
//! instead of a run config: trial design, cell grid, null-boundary points,
//! loss, prior, LP and solver.

use optimal_mtp::kernel::RectGrid;
use optimal_mtp::loss::LossSpec;
use optimal_mtp::lp::{build_lp, ConstraintGrid, LpSettings};
use optimal_mtp::prior::Prior;
use optimal_mtp::procedures::{DiscreteProcedure, Procedure};
use optimal_mtp::solver::{solve, SolverConfig};
use optimal_mtp::trial::{TrialDesign, H01, H02, H0C};

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // two equal subpopulations, unit variances, power 0.85 for the combined test
    let mut design = TrialDesign::new(0.5, [[1.0; 2]; 2], 1.0, 1.0, 0.05, 0.15)?;
    design.n = design.n_min()?;
    let scale = design.scale();
    println!("n_min = {:.2}, minimum effects ({:.3}, {:.3})", design.n, scale.delta_min[0], scale.delta_min[1]);

    let grid = RectGrid::square(0.25, 4.0)?;
    let points = ConstraintGrid::with_count(&scale, 4.0, 45)?;
    let loss = LossSpec::indicator(scale.delta_min);
    let prior = Prior::builtin("sym", &scale)?;
    let lp = build_lp(&design, &grid, &points, &loss, &prior, &LpSettings::default(), Vec::new())?;
    let d = lp.dims();
    println!("{} variables, {} dense rows, {} cells", d.n_v, d.n_d, grid.len());

    let sol = solve(&lp, &SolverConfig::default())?;
    println!(
        "objective {:.6}, certified gap {:.1e}, {} randomized cells",
        sol.objective, sol.gap, sol.randomized_cells
    );
    let m = DiscreteProcedure::from_lp("small", &lp, &sol.x)?;
    let [d1, d2] = scale.delta_min;
    println!(
        "power: H01 {:.4} at (d1, 0), H02 {:.4} at (0, d2), H0C {:.4} at (d1, d2)",
        m.power(d1, 0.0, H01),
        m.power(0.0, d2, H02),
        m.power(d1, d2, H0C)
    );
    println!("FWER at the global null {:.5}", m.fwer_at(&scale, 0.0, 0.0, false));
    Ok(())
}
