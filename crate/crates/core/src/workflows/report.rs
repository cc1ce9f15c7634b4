//! Run reports and their provenance.

use super::config::{RunConfig, Workflow};
use super::pipeline::{BaselineRow, RefinementRound, Summary, Table1Row};
use crate::analysis::{DualCertificate, FwerVerification};
use crate::error::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Solved and the FWER certificate holds.
    Verified,
    /// Solved, but the FWER certificate does not hold at `alpha`.
    VerificationFailed,
    /// Solved without FWER verification.
    Solved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub crate_version: String,
    pub threads: usize,
    pub seed: u64,
    pub wall_seconds: f64,
}

impl Provenance {
    pub fn new(config: &RunConfig, wall_seconds: f64) -> Result<Self> {
        Ok(Provenance {
            config_sha256: config.sha256()?,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            seed: config.seed,
            wall_seconds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxStep {
    pub cap: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxResult {
    /// Upper end of the final bracket: a cap some procedure meets.
    pub value: f64,
    pub lower: f64,
    pub alternatives: Vec<[f64; 2]>,
    /// Risk of the returned procedure at each alternative.
    pub risks: Vec<f64>,
    /// Alternative where the returned procedure's risk is largest.
    pub maximizer: [f64; 2],
    pub steps: Vec<MinimaxStep>,
    pub solves: usize,
    /// Risks and caps are on the normalized scale.
    #[serde(default)]
    pub normalized: bool,
}

/// Recommendation probabilities at one alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub delta: [f64; 2],
    /// Probabilities of recommending nothing, `{1}`, `{2}` and `{1,2}`.
    pub probs: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    /// Error rates at `(delta1_min, 0)` and `(0, delta2_min)`.
    pub fwer_single_benefit: [f64; 2],
    pub fwer_global_null: f64,
    /// Share of cells whose action is "nothing" or "everything".
    pub all_or_nothing_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub workflow: Workflow,
    pub outcome: Outcome,
    pub summary: Summary,
    #[serde(default)]
    pub baselines: Vec<BaselineRow>,
    pub certificate: Option<DualCertificate>,
    pub verification: Option<FwerVerification>,
    #[serde(default)]
    pub refinement: Vec<RefinementRound>,
    pub minimax: Option<MinimaxResult>,
    #[serde(default)]
    pub decisions: Vec<DecisionRow>,
    pub ablation: Option<AblationResult>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The report with timing fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.provenance.wall_seconds = 0.0;
        r.summary.solve_seconds = 0.0;
        r
    }

    /// Plain-text table of the power rows, optimum first.
    pub fn table_text(&self) -> String {
        let mut rows: Vec<&Table1Row> = vec![&self.summary.table];
        rows.extend(self.baselines.iter().map(|b| &b.table));
        let mut out = format!(
            "{:<22}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
            "procedure", "1-risk", "H01", "H02", "both", "H0C"
        );
        for r in rows {
            let v = r.values();
            out.push_str(&format!(
                "{:<22}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>10.4}\n",
                r.label, v[0], v[1], v[2], v[3], v[4]
            ));
        }
        out
    }
}

/// A baseline next to the optimum solved at the baseline's own `H0C`
/// power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedBaseline {
    pub baseline: Table1Row,
    pub optimum: Table1Row,
    pub power_rhs_used: f64,
    /// Optimum minus baseline, column by column.
    pub advantage: [f64; 5],
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Required `H0C` power, or `n / n_min` for sample-size sweeps.
    pub x: f64,
    pub row: Option<Table1Row>,
    pub power_rhs_used: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub name: String,
    /// What `x` measures.
    pub x_label: String,
    pub points: Vec<CurvePoint>,
    /// Fixed procedures drawn as single points.
    pub overlay: Vec<Table1Row>,
    #[serde(default)]
    pub matched: Vec<MatchedBaseline>,
    /// Inverse sample-size search result, `n / n_min`.
    pub inverse_ratio: Option<f64>,
    pub provenance: Provenance,
}
