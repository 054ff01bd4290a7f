use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, delta_table, DeltaRow, DomainSeries};
use crate::error::{Error, Result};

pub const GRID_SCHEMA_VERSION: u32 = 1;

/// Name of the no-adaptation column.
pub const BASELINE: &str = "baseline";

/// One (domain, method) cell: one value per seed, in `ResultGrid::seeds` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub domain: String,
    pub method: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: Option<f64>,
}

/// Machine-readable domain x method result grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub domains: Vec<String>,
    pub methods: Vec<String>,
    pub cells: Vec<GridCell>,
}

impl ResultGrid {
    pub fn new(seeds: Vec<u64>, domains: Vec<String>, methods: Vec<String>) -> Self {
        Self {
            schema_version: GRID_SCHEMA_VERSION,
            seeds,
            domains,
            methods,
            cells: Vec::new(),
        }
    }

    pub fn insert(&mut self, domain: &str, method: &str, values: Vec<f64>) -> Result<()> {
        if !self.domains.iter().any(|d| d == domain) || !self.methods.iter().any(|m| m == method) {
            return Err(Error::invalid(format!("cell {domain}/{method} outside the grid")));
        }
        if values.len() != self.seeds.len() {
            return Err(Error::invalid(format!(
                "cell {domain}/{method} has {} values for {} seeds",
                values.len(),
                self.seeds.len()
            )));
        }
        let agg = aggregate(&values)?;
        let cell = GridCell {
            domain: domain.to_string(),
            method: method.to_string(),
            values,
            mean: agg.mean,
            std: agg.std,
        };
        match self
            .cells
            .iter_mut()
            .find(|c| c.domain == domain && c.method == method)
        {
            Some(existing) => *existing = cell,
            None => self.cells.push(cell),
        }
        Ok(())
    }

    pub fn get(&self, domain: &str, method: &str) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.domain == domain && c.method == method)
    }

    /// Per-domain series for `method`, in grid domain order.
    pub fn series(&self, method: &str) -> Result<Vec<DomainSeries<f64>>> {
        self.domains
            .iter()
            .map(|d| {
                self.get(d, method)
                    .map(|c| DomainSeries {
                        domain: d.clone(),
                        values: c.values.clone(),
                    })
                    .ok_or_else(|| Error::invalid(format!("missing cell {d}/{method}")))
            })
            .collect()
    }

    pub fn deltas(&self, method: &str, baseline: &str) -> Result<Vec<DeltaRow<f64>>> {
        delta_table(&self.series(method)?, &self.series(baseline)?)
    }

    /// Tab-delimited table: one row per domain, one `mean±std` column per method.
    pub fn render_table(&self) -> String {
        let mut out = String::from("domain");
        for m in &self.methods {
            out.push('\t');
            out.push_str(m);
        }
        out.push('\n');
        for d in &self.domains {
            out.push_str(d);
            for m in &self.methods {
                out.push('\t');
                match self.get(d, m) {
                    Some(c) => out.push_str(&cell_text(c.mean, c.std)),
                    None => out.push('-'),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Tab-delimited deltas of every non-baseline method against `baseline`.
    pub fn render_deltas(&self, baseline: &str) -> Result<String> {
        let mut out = String::from("domain\tmethod\tbaseline_mean\tmethod_mean\tdelta\n");
        if self.cells.is_empty() {
            return Ok(out);
        }
        for m in self.methods.iter().filter(|m| *m != baseline) {
            for row in self.deltas(m, baseline)? {
                writeln!(
                    out,
                    "{}\t{}\t{:.4}\t{:.4}\t{:+.4}",
                    row.domain, m, row.baseline_mean, row.method_mean, row.delta
                )
                .expect("writing to a String");
            }
        }
        Ok(out)
    }
}

fn cell_text(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{mean:.4}±{s:.4}"),
        None => format!("{mean:.4}"),
    }
}
