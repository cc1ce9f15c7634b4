use clap::{Args, Parser, Subcommand};
use optimal_mtp::analysis::{extend_procedure, verify_fwer};
use optimal_mtp::procedures::DiscreteProcedure;
use optimal_mtp::solver::{load_checkpoint, refine_exact};
use optimal_mtp::workflows::pipeline::{bound, verify_options, Solved};
use optimal_mtp::workflows::*;
use optimal_mtp::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Optimal multiple testing procedures for two subpopulations.
#[derive(Parser)]
#[command(name = "mtp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset: sym, asym, sym-normal or asym-normal.
    #[arg(long, default_value = "sym")]
    preset: String,
    /// Required H0C power at the minimum effect.
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Sample size as a multiple of n_min.
    #[arg(long)]
    n_ratio: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    constraint_points: Option<usize>,
    #[arg(long)]
    tau_g: Option<f64>,
    #[arg(long)]
    refine_rounds: Option<usize>,
    /// Cell width 0.02 instead of 0.1. Expect hours per solve.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the config's `output_dir` when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunDir {
    /// Directory written by an earlier run.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Constrained Bayes solve, verification and bound.
    Bayes(Common),
    /// Minimax risk over finitely many alternatives.
    Minimax {
        #[command(flatten)]
        common: Common,
        /// An alternative `d1,d2`; repeat for more.
        #[arg(long = "alternative", value_parser = parse_pair)]
        alternatives: Vec<[f64; 2]>,
    },
    /// Treatment recommendations under a decision loss.
    Decision {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2.0)]
        false_pos: f64,
        #[arg(long, default_value_t = 1.0)]
        false_neg: f64,
    },
    /// Optimal risk and powers across required H0C powers.
    Tradeoff {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        no_baselines: bool,
    },
    /// Subpopulation powers as the sample size grows.
    Samplesize {
        #[command(flatten)]
        common: Common,
        /// Values of n / n_min, comma separated.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        /// Find the smallest n / n_min reaching this subpopulation power.
        #[arg(long)]
        target_power: Option<f64>,
    },
    /// Solve with the error constraint at the global null only.
    AblateGlobalNull(Common),
    /// Re-verify the FWER of a saved procedure.
    Verify(RunDir),
    /// Recompute the dual lower bound of a saved run.
    Bound(RunDir),
    /// Re-export region and curve files of a saved run.
    Export {
        #[command(flatten)]
        run: RunDir,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [a, b] => Ok([a, b]),
        _ => Err(format!("expected d1,d2, got '{s}'")),
    }
}

impl Common {
    fn config(&self, workflow: Workflow) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::preset(&self.preset)?,
        };
        c.workflow = workflow;
        if self.paper_scale {
            log::warn!("spacing 0.02: 501 x 501 cells, about 1.5M variables; expect a very long run");
            c.grid.tau = 0.02;
        }
        if let Some(v) = self.power {
            c.objective.power = Some(v);
        }
        if let Some(v) = self.alpha {
            c.design.alpha = v;
        }
        if let Some(v) = self.n_ratio {
            c.design.n_ratio = v;
        }
        if let Some(v) = self.tau {
            c.grid.tau = v;
        }
        if let Some(v) = self.b {
            c.grid.b = v;
        }
        if let Some(v) = self.constraint_points {
            c.grid.constraint_points = Some(v);
            c.grid.tau_g = None;
        }
        if let Some(v) = self.tau_g {
            c.grid.tau_g = Some(v);
        }
        if let Some(v) = self.refine_rounds {
            c.grid.refine_rounds = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(o) = &self.out {
            c.output_dir = Some(o.clone());
        }
        Ok(c)
    }
}

fn out_dir(c: &RunConfig) -> PathBuf {
    c.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(&c.name))
}

fn finish(run: &Run, config: &RunConfig) -> Result<bool> {
    let r = &run.report;
    print!("{}", r.table_text());
    if let Some(p) = &r.summary.power {
        if p.clamped {
            println!("power requirement {:.4} lowered to {:.6}", p.target, p.rhs_used);
        }
    }
    if let Some(v) = &r.verification {
        println!(
            "fwer: grid max {:.6} at ({:.3}, {:.3}), certified {:.6}",
            v.max_grid_fwer, v.argmax[0], v.argmax[1], v.certified_bound
        );
    }
    if let Some(c) = &r.certificate {
        println!("bound: {:.6} <= risk {:.6} (gap {:.6})", c.lower_bound, c.primal_risk, c.bound_gap);
    }
    if let Some(m) = &r.minimax {
        println!(
            "minimax value {:.4} (bracket [{:.4}, {:.4}], {} solves), worst at ({:.3}, {:.3})",
            m.value, m.lower, m.value, m.solves, m.maximizer[0], m.maximizer[1]
        );
    }
    for d in &r.decisions {
        println!(
            "({:.3}, {:.3}): none {:.4}  {{1}} {:.4}  {{2}} {:.4}  {{1,2}} {:.4}",
            d.delta[0], d.delta[1], d.probs[0], d.probs[1], d.probs[2], d.probs[3]
        );
    }
    if let Some(a) = &r.ablation {
        println!(
            "fwer at single-benefit alternatives {:.4} / {:.4}, global null {:.4}",
            a.fwer_single_benefit[0], a.fwer_single_benefit[1], a.fwer_global_null
        );
    }
    let dir = out_dir(config);
    write_run(run, config, &dir)?;
    println!("outcome {:?}; wrote {}", r.outcome, dir.display());
    Ok(r.outcome != Outcome::VerificationFailed)
}

fn finish_curves(t: &CurveTable, config: &RunConfig) -> Result<bool> {
    let mut text = Vec::new();
    optimal_mtp::workflows::export::write_curves(t, &mut text)?;
    print!("{}", String::from_utf8_lossy(&text));
    for m in &t.matched {
        println!(
            "{} vs optimum at H0C power {:.4}: risk gain {:+.4}, H01 {:+.4}, H02 {:+.4}",
            m.baseline.label, m.power_rhs_used, m.advantage[0], m.advantage[1], m.advantage[2]
        );
    }
    if let Some(r) = t.inverse_ratio {
        println!("n / n_min = {r:.4}");
    }
    let dir = out_dir(config);
    write_curve_run(t, config, &dir)?;
    println!("wrote {}", dir.display());
    Ok(t.points.iter().all(|p| p.error.is_none()))
}

fn load_run(dir: &Path) -> Result<(RunConfig, RunReport, DiscreteProcedure)> {
    let config = RunConfig::load(&dir.join("config.json"))?;
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let procedure = DiscreteProcedure::from_json(&std::fs::read_to_string(dir.join("procedure.json"))?)?;
    Ok((config, report, procedure))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bayes(c) => {
            let config = c.config(Workflow::Bayes)?;
            finish(&run_bayes(&config)?, &config)
        }
        Command::Minimax { common, alternatives } => {
            let config = common.config(Workflow::Minimax)?;
            let alts = (!alternatives.is_empty()).then_some(alternatives);
            finish(&run_minimax(&config, alts)?, &config)
        }
        Command::Decision {
            common,
            false_pos,
            false_neg,
        } => {
            let mut config = common.config(Workflow::Decision)?;
            config.objective.loss = LossBlock::Decision { false_pos, false_neg };
            config.validate()?;
            finish(&run_decision(&config)?, &config)
        }
        Command::Tradeoff {
            common,
            from,
            to,
            step,
            no_baselines,
        } => {
            let mut config = common.config(Workflow::Tradeoff)?;
            let t = &mut config.tradeoff;
            t.from = from.unwrap_or(t.from);
            t.to = to.unwrap_or(t.to);
            t.step = step.unwrap_or(t.step);
            t.baselines &= !no_baselines;
            config.validate()?;
            finish_curves(&run_tradeoff(&config)?, &config)
        }
        Command::Samplesize {
            common,
            ratios,
            target_power,
        } => {
            let mut config = common.config(Workflow::SampleSize)?;
            if !ratios.is_empty() {
                config.sample_size.ratios = ratios;
            }
            config.sample_size.target_power = target_power.or(config.sample_size.target_power);
            config.validate()?;
            finish_curves(&run_sample_size_sweep(&config)?, &config)
        }
        Command::AblateGlobalNull(c) => {
            let config = c.config(Workflow::AblateGlobalNull)?;
            finish(&run_global_null_ablation(&config)?, &config)
        }
        Command::Verify(d) => {
            let (config, _, procedure) = load_run(&d.run)?;
            let problem = config.problem()?;
            let ext = extend_procedure(&procedure, problem.settings.strict_decision);
            let v = verify_fwer(&ext, &problem.scale, problem.design.alpha, &verify_options(&problem))?;
            println!(
                "grid max {:.6} at ({:.3}, {:.3}); certified {:.6}; {}",
                v.max_grid_fwer,
                v.argmax[0],
                v.argmax[1],
                v.certified_bound,
                if v.pass { "pass" } else { "FAIL" }
            );
            Ok(v.pass)
        }
        Command::Bound(d) => {
            let (config, report, _) = load_run(&d.run)?;
            let (problem, lp) = rebuild_lp(&config, &report)?;
            let cp = load_checkpoint(&d.run.join("checkpoint.json"))?;
            if cp.n_vars != lp.n_vars() {
                return Err(Error::Config("checkpoint does not match the rebuilt LP".into()));
            }
            let sol = refine_exact(&lp, &cp.x, &problem.solver)?;
            let procedure = DiscreteProcedure::from_lp(config.name.clone(), &lp, &sol.x)?;
            let s = Solved {
                lp,
                sol,
                procedure,
                power: report.summary.power.clone(),
            };
            let c = bound(&problem, &s)?;
            println!(
                "lower bound {:.6}; risk {:.6}; gap {:.6}; quadrature error {:.1e}",
                c.lower_bound, c.primal_risk, c.bound_gap, c.quadrature_error
            );
            Ok(true)
        }
        Command::Export { run, out } => {
            std::fs::create_dir_all(&out)?;
            let mut wrote = Vec::new();
            let saved = run.run.join("procedure.json");
            if saved.exists() {
                let p = DiscreteProcedure::from_json(&std::fs::read_to_string(saved)?)?;
                let path = out.join("regions.csv");
                export_regions(&p, &path)?;
                wrote.push(path);
            }
            let curves = run.run.join("curves.json");
            if curves.exists() {
                let t: CurveTable = serde_json::from_str(&std::fs::read_to_string(curves)?)?;
                let path = out.join("curves.csv");
                export_curves(&t, &path)?;
                wrote.push(path);
            }
            if wrote.is_empty() {
                return Err(Error::Config(format!("nothing to export in {}", run.run.display())));
            }
            for p in wrote {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
