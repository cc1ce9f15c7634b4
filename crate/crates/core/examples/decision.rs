//! Treatment recommendations under two decision losses: false positives
//! twice as costly as false negatives, and the reverse.

use optimal_mtp::workflows::{run_decision, LossBlock, RunConfig, Workflow};

fn solve(false_pos: f64, false_neg: f64) -> optimal_mtp::Result<Vec<[f64; 4]>> {
    let mut config = RunConfig::preset("sym")?;
    config.name = format!("decision-fp{false_pos}-fn{false_neg}");
    config.workflow = Workflow::Decision;
    config.objective.loss = LossBlock::Decision { false_pos, false_neg };
    let run = run_decision(&config)?;
    println!("{} ({:?})", config.name, run.report.outcome);
    println!("  {:>16} {:>8} {:>8} {:>8} {:>8}", "alternative", "none", "{1}", "{2}", "{1,2}");
    for row in &run.report.decisions {
        let [a, b, c, d] = row.probs;
        println!(
            "  ({:>6.3}, {:>6.3}) {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            row.delta[0], row.delta[1], a, b, c, d
        );
    }
    Ok(run.report.decisions.iter().map(|r| r.probs).collect())
}

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let d1 = solve(2.0, 1.0)?;
    let d2 = solve(1.0, 2.0)?;
    // rows: (d1, 0), (0, d2), (d1, d2), (0, 0)
    println!("P[{{1,2}}] at (d1, d2): second minus first = {:.4}", d2[2][3] - d1[2][3]);
    println!("P[{{1}}] at (d1, 0): first minus second = {:.4}", d1[0][1] - d2[0][1]);
    Ok(())
}
