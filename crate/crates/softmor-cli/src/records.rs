//! Benchmark run records and their CSV form.

use anyhow::{bail, Context, Result};

pub const CSV_HEADER: &str =
    "scenario,method,n_v,error,t_fom_s,t_rom_offline_s,t_rom_online_s,speedup";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub method: String,
    pub n_v: usize,
    pub error: f64,
    pub t_fom_s: f64,
    pub t_rom_offline_s: f64,
    pub t_rom_online_s: f64,
    pub speedup: f64,
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6e},{:.6},{:.6},{:.6},{:.3}",
            self.scenario,
            self.method,
            self.n_v,
            self.error,
            self.t_fom_s,
            self.t_rom_offline_s,
            self.t_rom_online_s,
            self.speedup
        )
    }

    /// Entries whose error exceeds 100% (or failed outright) are excluded
    /// from plots, mirroring how the benchmark tables are read.
    pub fn is_plottable(&self) -> bool {
        self.error.is_finite() && self.error <= 1.0
    }
}

pub fn to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    let header = lines.next().context("empty records file")?;
    if header.trim() != CSV_HEADER {
        bail!("unexpected records header: {header}");
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            bail!("line {}: expected 8 columns, found {}", i + 2, cols.len());
        }
        records.push(RunRecord {
            scenario: cols[0].to_string(),
            method: cols[1].to_string(),
            n_v: cols[2].parse().with_context(|| format!("line {}: n_v", i + 2))?,
            error: cols[3].parse().with_context(|| format!("line {}: error", i + 2))?,
            t_fom_s: cols[4].parse().with_context(|| format!("line {}: t_fom_s", i + 2))?,
            t_rom_offline_s: cols[5]
                .parse()
                .with_context(|| format!("line {}: t_rom_offline_s", i + 2))?,
            t_rom_online_s: cols[6]
                .parse()
                .with_context(|| format!("line {}: t_rom_online_s", i + 2))?,
            speedup: cols[7].parse().with_context(|| format!("line {}: speedup", i + 2))?,
        });
    }
    Ok(records)
}
