//! Files written by a run.

use super::config::RunConfig;
use super::pipeline::TABLE1_COLUMNS;
use super::report::CurveTable;
use super::runs::Run;
use crate::error::Result;
use crate::procedures::DiscreteProcedure;
use crate::solver::save_checkpoint;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// One row per cell, see [`DiscreteProcedure::write_regions_csv`].
pub fn export_regions(procedure: &DiscreteProcedure, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    procedure.write_regions_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Sweep points then overlay rows, one column per table row.
pub fn export_curves(table: &CurveTable, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_curves(table, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(table: &CurveTable, mut out: W) -> Result<()> {
    writeln!(out, "x,label,{},power_rhs_used,error", TABLE1_COLUMNS.join(","))?;
    for p in &table.points {
        let cols = match &p.row {
            Some(r) => r.values().iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(","),
            None => vec![""; 5].join(","),
        };
        let label = p.row.as_ref().map(|r| r.label.as_str()).unwrap_or("");
        let rhs = p.power_rhs_used.map(|v| format!("{v:.7}")).unwrap_or_default();
        let err = p.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(out, "{:.6},{},{},{},{}", p.x, label, cols, rhs, err)?;
    }
    for r in &table.overlay {
        let cols = r.values().iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",");
        writeln!(out, ",{},{},,", r.label, cols)?;
    }
    Ok(())
}

/// Write the frozen config, report, procedure, region map, checkpoint and
/// solver logs of a run into `dir`. Returns the files written.
pub fn write_run(run: &Run, config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        "config.json",
        "report.json",
        "procedure.json",
        "regions.csv",
        "checkpoint.json",
        "iterations.jsonl",
    ]
    .map(|f| dir.join(f));
    fs::write(&files[0], config.to_json()?)?;
    fs::write(&files[1], run.report.to_json()?)?;
    fs::write(&files[2], run.solved.procedure.to_json()?)?;
    export_regions(&run.solved.procedure, &files[3])?;
    save_checkpoint(&files[4], &run.solved.sol)?;
    let mut logs = BufWriter::new(File::create(&files[5])?);
    run.solved.sol.write_logs(&mut logs)?;
    logs.flush()?;
    Ok(files.to_vec())
}

/// Write a sweep's frozen config, JSON table and CSV curves into `dir`.
pub fn write_curve_run(table: &CurveTable, config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = ["config.json", "curves.json", "curves.csv"].map(|f| dir.join(f));
    fs::write(&files[0], config.to_json()?)?;
    fs::write(&files[1], serde_json::to_string_pretty(table)?)?;
    export_curves(table, &files[2])?;
    Ok(files.to_vec())
}
