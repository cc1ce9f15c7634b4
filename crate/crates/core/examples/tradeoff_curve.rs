//! Bayes risk and powers of the optimum as the required H0C power moves
//! from 0.80 to 0.90, with the analytic procedures overlaid.

use optimal_mtp::workflows::export::write_curves;
use optimal_mtp::workflows::{run_tradeoff, RunConfig, Workflow};

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let preset = std::env::args().nth(1).unwrap_or_else(|| "sym".into());
    let mut config = RunConfig::preset(&preset)?;
    config.workflow = Workflow::Tradeoff;
    config.tradeoff.step = 0.01;

    let table = run_tradeoff(&config)?;
    write_curves(&table, std::io::stdout().lock())?;
    println!();
    for m in &table.matched {
        println!(
            "{:<16} at H0C power {:.4}: optimum gains {:+.4} in 1-risk, {:+.4} H01, {:+.4} H02",
            m.baseline.label, m.power_rhs_used, m.advantage[0], m.advantage[1], m.advantage[2]
        );
    }
    Ok(())
}
