use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use ssada_core::metrics::{ResultGrid, BASELINE};

/// Evaluation AUPRC of one cell after `round` rounds (round 0 is the start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub seed: u64,
    pub domain: String,
    pub method: String,
    pub round: usize,
    pub labeled: usize,
    pub auprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub grid: ResultGrid,
    pub curves: Vec<CurvePoint>,
}

pub const GRID_TABLE: &str = "grid.txt";
pub const GRID_JSON: &str = "grid.json";
pub const DELTAS: &str = "deltas.tsv";
pub const CURVES: &str = "curves.csv";

impl ExperimentReport {
    pub fn render_curves(&self) -> String {
        let mut out = String::from("seed,domain,method,round,labeled,auprc\n");
        for c in &self.curves {
            // `{}` on f64 prints the shortest text that parses back to the same bits.
            writeln!(out, "{},{},{},{},{},{}", c.seed, c.domain, c.method, c.round, c.labeled, c.auprc)
                .expect("writing to a String");
        }
        out
    }

    /// Domains where `method`'s mean is at least `baseline mean + margin`.
    pub fn count_at_least(&self, method: &str, margin: f64) -> Result<usize> {
        let rows = self.grid.deltas(method, BASELINE)?;
        Ok(rows.iter().filter(|r| r.delta >= margin).count())
    }
}

/// Writes the grid table, the JSON grid, the delta table and the learning
/// curves into `dir`, returning the paths written.
pub fn emit_results(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut json = serde_json::to_string_pretty(&report.grid)?;
    json.push('\n');
    let files = [
        (GRID_TABLE, report.grid.render_table()),
        (GRID_JSON, json),
        (DELTAS, report.grid.render_deltas(BASELINE)?),
        (CURVES, report.render_curves()),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

/// Reads a grid written by [`emit_results`].
pub fn load_grid(dir: impl AsRef<Path>) -> Result<ResultGrid> {
    let path = dir.as_ref().join(GRID_JSON);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
