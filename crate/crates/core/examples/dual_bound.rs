//! Lower bound on the Bayes risk of every procedure meeting the original
//! constraints, from the duals of the discretized problem, checked
//! against the analytic procedures.

use optimal_mtp::workflows::{run_bayes, RunConfig};

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let preset = std::env::args().nth(1).unwrap_or_else(|| "asym".into());
    let mut config = RunConfig::preset(&preset)?;
    config.objective.power = Some(0.88);
    let run = run_bayes(&config)?;
    let c = run.report.certificate.as_ref().expect("bound");

    println!(
        "lower bound {:.6}, optimum risk {:.6}, gap {:.6}",
        c.lower_bound, c.primal_risk, c.bound_gap
    );
    println!(
        "power dual {:.4}, {} active error rows, {} quadrature panels, quadrature change {:.1e}",
        c.nu_p,
        c.active_fwer.len(),
        c.panels,
        c.quadrature_error
    );
    for b in &run.report.baselines {
        println!(
            "{:<16} risk {:.4}  meets constraints {:<5} above bound {:<5} Lagrangian floor {:.4} ({})",
            b.table.label,
            b.table.bayes_risk,
            b.meets_power,
            b.below_plain,
            b.lagrangian_floor,
            if b.below_lagrangian { "holds" } else { "VIOLATED" }
        );
    }
    Ok(())
}
