//! Run configuration: a JSON document with design, grid, objective and
//! solver blocks plus per-workflow settings.

use crate::error::{Error, Result};
use crate::kernel::RectGrid;
use crate::loss::LossSpec;
use crate::lp::{ConstraintGrid, LpSettings};
use crate::prior::{Component, Prior};
use crate::solver::SolverConfig;
use crate::trial::{DerivedScale, TrialDesign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Cell counts above this trigger a long-run warning.
const LARGE_GRID_CELLS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workflow {
    #[default]
    Bayes,
    Minimax,
    Decision,
    Tradeoff,
    SampleSize,
    AblateGlobalNull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    /// Proportion of subpopulation 1.
    pub p1: f64,
    /// Outcome variances `[subpopulation][arm]`.
    #[serde(default = "unit_variances")]
    pub sigma2: [[f64; 2]; 2],
    #[serde(default = "one")]
    pub delta_min: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Sets `n_min` through the UMP power `1 - beta`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Total sample size; `n_ratio * n_min` when absent.
    #[serde(default)]
    pub n: Option<f64>,
    #[serde(default = "one")]
    pub n_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub tau: f64,
    pub b: f64,
    /// Number of constraint points on the null boundary.
    pub constraint_points: Option<usize>,
    /// Spacing of constraint points; overrides `constraint_points`.
    pub tau_g: Option<f64>,
    /// Half-width of the box sampled during FWER verification.
    pub b_prime: f64,
    pub fine_tau: f64,
    /// Rounds of adding the verification's worst points as constraints.
    pub refine_rounds: usize,
    /// Points added per round.
    pub refine_points: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            tau: 0.1,
            b: 5.0,
            constraint_points: Some(105),
            tau_g: None,
            b_prime: 8.0,
            fine_tau: 1e-4,
            refine_rounds: 0,
            refine_points: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossBlock {
    Indicator,
    Proportional,
    Decision { false_pos: f64, false_neg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorBlock {
    Named(String),
    Components(Vec<(f64, Component)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveBlock {
    pub loss: LossBlock,
    pub prior: PriorBlock,
    /// Required power for `H0C` at the minimum effect; `1 - beta` when
    /// absent. Ignored by decision problems.
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default = "default_margin")]
    pub alpha_margin: f64,
    /// A power requirement this far above the largest attainable power is
    /// lowered to it with a warning instead of failing.
    #[serde(default = "default_shortfall")]
    pub power_shortfall_tol: f64,
    #[serde(default)]
    pub strict_decision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimaxBlock {
    /// Alternatives; the three minimum-effect alternatives when absent.
    pub alternatives: Option<Vec<[f64; 2]>>,
    pub tol: f64,
    pub max_solves: usize,
    /// Divide the loss at each alternative by its largest value, so a risk
    /// reads as one minus the mean power over the subpopulations that
    /// benefit there.
    pub normalize: bool,
}

impl Default for MinimaxBlock {
    fn default() -> Self {
        MinimaxBlock {
            alternatives: None,
            tol: 1e-3,
            max_solves: 12,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TradeoffBlock {
    pub from: f64,
    pub to: f64,
    pub step: f64,
    pub baselines: bool,
}

impl Default for TradeoffBlock {
    fn default() -> Self {
        TradeoffBlock {
            from: 0.8,
            to: 0.9,
            step: 0.005,
            baselines: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSizeBlock {
    /// Values of `n / n_min` for the forward sweep.
    pub ratios: Vec<f64>,
    /// When set, find the smallest `n / n_min` reaching this subpopulation
    /// power instead.
    pub target_power: Option<f64>,
    pub max_ratio: f64,
    pub tol: f64,
}

impl Default for SampleSizeBlock {
    fn default() -> Self {
        SampleSizeBlock {
            ratios: vec![1.0, 1.01, 1.02, 1.03, 1.04, 1.05, 1.06],
            target_power: None,
            max_ratio: 2.0,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub workflow: Workflow,
    pub design: DesignBlock,
    #[serde(default)]
    pub grid: GridBlock,
    pub objective: ObjectiveBlock,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub minimax: MinimaxBlock,
    #[serde(default)]
    pub tradeoff: TradeoffBlock,
    #[serde(default)]
    pub sample_size: SampleSizeBlock,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn unit_variances() -> [[f64; 2]; 2] {
    [[1.0; 2]; 2]
}
fn one() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.05
}
fn default_beta() -> f64 {
    0.1
}
fn default_margin() -> f64 {
    1e-4
}
fn default_shortfall() -> f64 {
    0.005
}

pub const PRESETS: [&str; 4] = ["sym", "asym", "sym-normal", "asym-normal"];

/// Everything a workflow needs, resolved from a config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub design: TrialDesign,
    pub scale: DerivedScale,
    pub grid: RectGrid,
    pub constraints: ConstraintGrid,
    pub loss: LossSpec,
    pub prior: Prior,
    pub settings: LpSettings,
    /// Required `H0C` power.
    pub power: f64,
    pub shortfall_tol: f64,
    pub solver: SolverConfig,
    pub b_prime: f64,
    pub fine_tau: f64,
    pub refine_rounds: usize,
    pub refine_points: usize,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// A shipped preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "sym" => include_str!("../../../../configs/sym.json"),
            "asym" => include_str!("../../../../configs/asym.json"),
            "sym-normal" => include_str!("../../../../configs/sym-normal.json"),
            "asym-normal" => include_str!("../../../../configs/asym-normal.json"),
            other => return Err(Error::UnknownName(format!("preset '{other}'"))),
        };
        Self::from_json(text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn sha256(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_string(self)?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let g = &self.grid;
        if !(g.tau > 0.0) || !(g.b > 0.0) {
            return bad("grid tau and b must be positive".into());
        }
        if !(g.b_prime > g.b) || (g.b_prime.round() - g.b_prime).abs() > 1e-9 {
            return bad(format!("b' = {} must be an integer above b = {}", g.b_prime, g.b));
        }
        if !(g.fine_tau > 0.0) {
            return bad("fine_tau must be positive".into());
        }
        match (g.constraint_points, g.tau_g) {
            (_, Some(t)) if !(t > 0.0) => return bad("tau_g must be positive".into()),
            (None, None) => return bad("give constraint_points or tau_g".into()),
            (Some(0), None) => return bad("constraint_points must be at least 1".into()),
            _ => {}
        }
        let d = &self.design;
        if let Some(n) = d.n {
            if !(n > 0.0) {
                return bad("design n must be positive".into());
            }
        }
        if !(d.n_ratio > 0.0) {
            return bad("n_ratio must be positive".into());
        }
        let o = &self.objective;
        if let Some(p) = o.power {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("power {p} must lie in (0, 1)"));
            }
        }
        if !(o.alpha_margin >= 0.0 && o.alpha_margin < d.alpha) {
            return bad("alpha_margin must lie in [0, alpha)".into());
        }
        if !(o.power_shortfall_tol >= 0.0) {
            return bad("power_shortfall_tol must be nonnegative".into());
        }
        if let LossBlock::Decision { false_pos, false_neg } = o.loss {
            if !(false_pos >= 0.0 && false_neg >= 0.0) {
                return bad("decision penalties must be nonnegative".into());
            }
        }
        let decision = matches!(o.loss, LossBlock::Decision { .. });
        if decision != (self.workflow == Workflow::Decision) {
            return bad("decision losses go with the decision workflow and only there".into());
        }
        if let PriorBlock::Named(n) = &o.prior {
            if !["sym", "asym", "sym-normal", "asym-normal", "subpop-only"].contains(&n.as_str()) {
                return Err(Error::UnknownName(format!("prior '{n}'")));
            }
        }
        let m = &self.minimax;
        if !(m.tol > 0.0) || m.max_solves == 0 {
            return bad("minimax tol and max_solves must be positive".into());
        }
        if matches!(&m.alternatives, Some(a) if a.is_empty()) {
            return bad("minimax needs at least one alternative".into());
        }
        let t = &self.tradeoff;
        if !(t.step > 0.0) || !(t.from > 0.0 && t.from <= t.to && t.to < 1.0) {
            return bad("tradeoff range must satisfy 0 < from <= to < 1 with a positive step".into());
        }
        let s = &self.sample_size;
        if s.ratios.iter().any(|r| !(*r > 0.0)) || !(s.max_ratio > 1.0) || !(s.tol > 0.0) {
            return bad("sample-size ratios, max_ratio and tol must be positive".into());
        }
        if let Some(x) = s.target_power {
            if !(x > 0.0 && x < 1.0) {
                return bad("target power must lie in (0, 1)".into());
            }
        }
        self.solver.validate()
    }

    /// Resolve the design, grids, loss and prior.
    pub fn problem(&self) -> Result<Problem> {
        self.validate()?;
        let d = &self.design;
        let mut design = TrialDesign::new(d.p1, d.sigma2, 1.0, d.delta_min, d.alpha, d.beta)?;
        design.n = match d.n {
            Some(n) => n,
            None => d.n_ratio * design.n_min()?,
        };
        design.validate()?;
        let scale = design.scale();
        let g = &self.grid;
        let grid = RectGrid::square(g.tau, g.b)?;
        if grid.len() > LARGE_GRID_CELLS {
            log::warn!("{} cells: expect a long run", grid.len());
        }
        let constraints = match (g.tau_g, g.constraint_points) {
            (Some(t), _) => ConstraintGrid::with_spacing(&scale, g.b, t)?,
            (None, Some(k)) => ConstraintGrid::with_count(&scale, g.b, k)?,
            (None, None) => unreachable!("validated"),
        };
        log::info!("{} constraint points, spacing {:.6}", constraints.len(), constraints.spacing);
        let loss = match self.objective.loss {
            LossBlock::Indicator => LossSpec::indicator(scale.delta_min),
            LossBlock::Proportional => LossSpec::proportional(scale.delta_min),
            LossBlock::Decision { false_pos, false_neg } => LossSpec::decision(false_pos, false_neg, scale.delta_min),
        };
        loss.validate()?;
        let prior = match &self.objective.prior {
            PriorBlock::Named(n) => Prior::builtin(n, &scale)?,
            PriorBlock::Components(c) => Prior::new(c.clone())?,
        };
        let settings = LpSettings {
            alpha_margin: self.objective.alpha_margin,
            power_row: self.workflow != Workflow::Decision,
            strict_decision: self.objective.strict_decision,
        };
        let mut solver = self.solver.clone();
        solver.rng_seed = self.seed;
        Ok(Problem {
            design,
            scale,
            grid,
            constraints,
            loss,
            prior,
            settings,
            power: self.objective.power.unwrap_or(1.0 - d.beta),
            shortfall_tol: self.objective.power_shortfall_tol,
            solver,
            b_prime: g.b_prime,
            fine_tau: g.fine_tau,
            refine_rounds: g.refine_rounds,
            refine_points: g.refine_points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_resolve() {
        for name in PRESETS {
            let c = RunConfig::preset(name).unwrap();
            let p = c.problem().unwrap();
            assert_eq!(p.constraints.len(), 105);
            assert_eq!(p.grid.n1(), 101);
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let s = r#"{"name":"x","design":{"p1":0.5,"p":1},"objective":{"loss":{"kind":"indicator"},"prior":"sym"}}"#;
        assert!(RunConfig::from_json(s).is_err());
    }

    #[test]
    fn unknown_prior_is_rejected() {
        let s = r#"{"name":"x","design":{"p1":0.5},"objective":{"loss":{"kind":"indicator"},"prior":"flat"}}"#;
        assert!(matches!(RunConfig::from_json(s), Err(Error::UnknownName(_))));
    }

    #[test]
    fn decision_loss_needs_decision_workflow() {
        let s = r#"{"name":"x","design":{"p1":0.5},"objective":{"loss":{"kind":"decision","false_pos":2,"false_neg":1},"prior":"sym"}}"#;
        assert!(RunConfig::from_json(s).is_err());
        let s = s.replace(r#""name":"x","#, r#""name":"x","workflow":"decision","#);
        assert!(RunConfig::from_json(&s).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::preset("sym").unwrap();
        let mut b = a.clone();
        assert_eq!(a.sha256().unwrap(), b.sha256().unwrap());
        b.objective.power = Some(0.88);
        assert_ne!(a.sha256().unwrap(), b.sha256().unwrap());
        assert_eq!(a.sha256().unwrap().len(), 64);
    }

    #[test]
    fn explicit_components_prior() {
        let s = r#"{"name":"x","design":{"p1":0.5},"objective":{"loss":{"kind":"indicator"},
            "prior":[[0.5,{"type":"point_mass","mean":[0,0]}],[0.5,{"type":"normal","mean":[1,1],"sd":[0.5,0.5]}]]}}"#;
        let p = RunConfig::from_json(s).unwrap().problem().unwrap();
        assert_eq!(p.prior.components.len(), 2);
    }
}
