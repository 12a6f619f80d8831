use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dpa_sync::experiment::{
    parse_config, run_cell, summarize, write_csv, write_json, write_trace, Algorithm,
    ConfigOverrides, ExperimentConfig, OutputFormat, SweepResult, TrialRecord,
};

/// Monte Carlo simulator for decentralized frequency and phase consensus.
#[derive(Parser)]
#[command(name = "dpa-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full sweep described by the config and flags.
    Run(Opts),
    /// Run a single cell and print per-trial results and the iteration trace.
    Trial(Opts),
}

#[derive(Args)]
struct Opts {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    connectivity: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    /// mpac, dfpc or both, comma-separated.
    #[arg(long, value_delimiter = ',')]
    algorithm: Option<Vec<Algorithm>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eta_deg: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Summary destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Also write per-iteration dispersion, to `<output>.trace.csv` or stdout.
    #[arg(long)]
    trace: bool,
}

impl Opts {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            n_nodes: self.nodes.clone(),
            connectivity: self.connectivity.clone(),
            snr_db: self.snr_db.clone(),
            algorithms: self.algorithm.clone(),
            trials: self.trials,
            seed: self.seed,
            eta_deg: self.eta_deg,
            max_iterations: self.max_iters,
            gamma: self.gamma,
        }
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let cfg = parse_config(self.config.as_deref(), &self.overrides())?;
        Ok(cfg)
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn trace_path(output: &Path) -> PathBuf {
    let mut name = output.file_stem().unwrap_or_default().to_os_string();
    name.push(".trace.csv");
    output.with_file_name(name)
}

fn emit(
    opts: &Opts,
    result: &SweepResult,
    records: &[TrialRecord],
    trace: bool,
    with_cell: bool,
) -> Result<()> {
    let mut out = sink(opts.output.as_deref())?;
    match opts.format {
        OutputFormat::Csv => write_csv(result, &mut out)?,
        OutputFormat::Json => write_json(result, &mut out)?,
    }
    out.flush()?;
    if trace {
        let path = opts.output.as_deref().map(trace_path);
        let mut out = sink(path.as_deref())?;
        if path.is_none() {
            writeln!(out)?;
        }
        write_trace(records, with_cell, &mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn run(opts: &Opts) -> Result<()> {
    let cfg = opts.load()?;
    let mut result = SweepResult::default();
    let mut all = Vec::new();
    for cell in cfg.cells() {
        eprintln!(
            "{} N={} c={} snr={} dB: {} trials",
            cell.algorithm, cell.n_nodes, cell.connectivity, cell.snr_db, cfg.trials
        );
        let records = run_cell(&cfg, cell)?;
        result.cells.push(summarize(cell, &records));
        if opts.trace {
            all.extend(records);
        }
    }
    emit(opts, &result, &all, opts.trace, true)
}

fn trial(opts: &Opts) -> Result<()> {
    let cfg = opts.load()?;
    let cells = cfg.cells();
    let [cell] = cells.as_slice() else {
        bail!(
            "`trial` needs a single cell, the config describes {}",
            cells.len()
        );
    };
    let records = run_cell(&cfg, *cell)?;
    for r in &records {
        let k = r.convergence_iteration.map_or_else(
            || "did not converge".to_string(),
            |k| format!("converged at {k}"),
        );
        eprintln!(
            "trial {}: {k}, final sigma_phi {:.6} deg (components {:.6} deg)",
            r.trial, r.final_sigma_phi_deg, r.final_sigma_phi_components_deg
        );
    }
    let result = SweepResult {
        cells: vec![summarize(*cell, &records)],
    };
    emit(opts, &result, &records, true, false)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(o) => run(&o),
        Command::Trial(o) => trial(&o),
    }
}
