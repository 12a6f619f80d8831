//! CSV and JSON emission of sweep results and per-iteration traces.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{SweepResult, TrialRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "algorithm",
    "n_nodes",
    "connectivity",
    "snr_db",
    "trials",
    "converged_count",
    "mean_convergence_iters",
    "sd_convergence_iters",
    "mean_final_sigma_phi_deg",
    "sd_final_sigma_phi_deg",
];

const TRACE_HEADER: [&str; 4] = [
    "trial",
    "k",
    "sigma_phi_deg_state",
    "sigma_phi_deg_components",
];
const CELL_HEADER: [&str; 4] = ["algorithm", "n_nodes", "connectivity", "snr_db"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config {
                key: "format".into(),
                reason: format!("unknown format `{other}` (expected csv or json)"),
            }),
        }
    }
}

/// 17 significant digits, enough to recover every `f64` bit for bit.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in &result.cells {
        w.write_record([
            c.algorithm.to_string(),
            c.n_nodes.to_string(),
            num(c.connectivity),
            num(c.snr_db),
            c.trials.to_string(),
            c.converged_count.to_string(),
            opt(c.mean_convergence_iters),
            opt(c.sd_convergence_iters),
            opt(c.mean_final_sigma_phi_deg),
            opt(c.sd_final_sigma_phi_deg),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// serde_json prints the shortest decimal that parses back to the same bits.
pub fn write_json<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn parse_json<R: Read>(input: R) -> Result<SweepResult> {
    Ok(serde_json::from_reader(input)?)
}

pub fn emit_results(result: &SweepResult, format: OutputFormat, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(result, &mut out)?,
        OutputFormat::Json => write_json(result, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

/// One row per iteration of every record. With `with_cell` the rows are
/// prefixed by the cell columns so several cells can share one file.
pub fn write_trace<W: Write>(records: &[TrialRecord], with_cell: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = Vec::new();
    if with_cell {
        header.extend(CELL_HEADER);
    }
    header.extend(TRACE_HEADER);
    w.write_record(&header)?;
    for r in records {
        for p in &r.sigma_phi_trace {
            let mut row = Vec::with_capacity(header.len());
            if with_cell {
                row.extend([
                    r.algorithm.to_string(),
                    r.n_nodes.to_string(),
                    num(r.connectivity),
                    num(r.snr_db),
                ]);
            }
            row.extend([
                r.trial.to_string(),
                p.k.to_string(),
                num(p.sigma_phi_deg_state),
                num(p.sigma_phi_deg_components),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
