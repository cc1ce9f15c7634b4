//! Subpopulation power as the sample size grows past n_min, then the
//! smallest n reaching a target power for both subpopulations.

use optimal_mtp::workflows::{run_sample_size_sweep, RunConfig, Workflow};

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut config = RunConfig::preset("sym")?;
    config.workflow = Workflow::SampleSize;
    config.objective.power = Some(0.9);
    config.sample_size.ratios = vec![1.0, 1.02, 1.04, 1.06];

    let forward = run_sample_size_sweep(&config)?;
    println!("{:>8} {:>8} {:>8} {:>8}", "n/n_min", "1-risk", "H01", "H0C");
    for p in &forward.points {
        match &p.row {
            Some(r) => println!("{:>8.3} {:>8.4} {:>8.4} {:>8.4}", p.x, r.one_minus_bayes_risk, r.h01_power, r.h0c_power),
            None => println!("{:>8.3} failed: {}", p.x, p.error.as_deref().unwrap_or("")),
        }
    }

    config.sample_size.target_power = Some(0.45);
    config.sample_size.max_ratio = 1.2;
    config.sample_size.tol = 5e-3;
    let inverse = run_sample_size_sweep(&config)?;
    println!(
        "both subpopulations reach power 0.45 at n/n_min = {:.4} ({} solves)",
        inverse.inverse_ratio.expect("inverse mode"),
        inverse.points.len()
    );
    Ok(())
}
