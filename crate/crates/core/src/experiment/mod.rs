//! Seeded Monte Carlo harness.
//!
//! A sweep is the Cartesian product of node counts, connectivities, SNRs and
//! algorithms, with `trials` independent trials per cell. Each trial draws a
//! fresh topology and fresh oscillators, then runs the chosen protocol for up
//! to `max_iterations` rounds. One round spans one update interval. Each
//! oscillator drifts and is re-observed by its node before the protocol makes
//! one synchronous update.
//!
//! The two protocols differ in what they act on:
//!
//! * MPAC nodes keep free-running oscillators and refine consensus estimates
//!   from their fresh observations and the incoming messages.
//! * DFPC nodes re-tune their oscillators to the mixed values every round, so
//!   the next round's observations start from the steered state.
//!
//! Synchronization is measured on the per-node end-of-interval phase
//! `2 pi f_n T + theta_n` of each protocol's output. The first round at which
//! its dispersion drops to `eta` is the convergence iteration; the dispersion
//! after the last round is the residual error.
//!
//! Seeds: trial `t` of the cell `(N, c, SNR)` uses
//! `derive_path(seed, [Cell::key(), t])`; node `n` draws from
//! `derive_seed(trial_seed, n)` and the topology from
//! `derive_seed(trial_seed, TOPOLOGY_STREAM)`. The algorithm is not part of
//! the key, so MPAC and DFPC runs of the same trial see the same graph and the
//! same noise.

mod config;
mod output;

pub use config::{parse_config, parse_config_str, ConfigOverrides, CONFIG_KEYS};
pub use output::{
    emit_results, parse_json, write_csv, write_json, write_trace, OutputFormat, CSV_HEADER,
};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{dfpc_step, metropolis_weights, MixingMatrix};
use crate::error::{Error, Result};
use crate::graph::{check_feasible, generate_random_topology, NetworkTopology};
use crate::metrics::{end_of_interval_phase, sigma_phi, total_phase_error};
use crate::mpac::{MpacConfig, MpacState, Observation, DEFAULT_GAMMA};
use crate::oscillator::{NoiseModel, OscillatorState, SimulationParams};
use crate::seed::{derive_path, derive_seed, node_streams, rng_from_seed, TOPOLOGY_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mpac,
    Dfpc,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Mpac => "mpac",
            Algorithm::Dfpc => "dfpc",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mpac" => Ok(Algorithm::Mpac),
            "dfpc" => Ok(Algorithm::Dfpc),
            other => Err(Error::Config {
                key: "algorithms".into(),
                reason: format!("unknown algorithm `{other}` (expected mpac or dfpc)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_nodes: Vec<usize>,
    pub connectivity: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub max_iterations: usize,
    pub eta_deg: f64,
    pub seed: u64,
    /// End a trial at its convergence iteration instead of running the full
    /// horizon. The residual error is then the value at convergence.
    pub stop_at_convergence: bool,
    /// Oscillator and receiver parameters; `snr` is overwritten per cell.
    pub params: SimulationParams,
    pub gamma: f64,
    pub node_weight: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_nodes: vec![20],
            connectivity: vec![0.2],
            snr_db: vec![0.0],
            algorithms: vec![Algorithm::Mpac, Algorithm::Dfpc],
            trials: 1000,
            max_iterations: 500,
            eta_deg: 1.0,
            seed: 0,
            stop_at_convergence: false,
            params: SimulationParams::default(),
            gamma: DEFAULT_GAMMA,
            node_weight: 1.0,
        }
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_err("trials", "must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(config_err("max_iterations", "must be at least 1"));
        }
        if !(self.eta_deg.is_finite() && self.eta_deg > 0.0) {
            return Err(config_err("eta_deg", "must be positive"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(config_err("gamma", "must be positive and finite"));
        }
        if !(self.node_weight.is_finite() && self.node_weight > 0.0) {
            return Err(config_err("node_weight", "must be positive and finite"));
        }
        for (key, empty) in [
            ("n_nodes", self.n_nodes.is_empty()),
            ("connectivity", self.connectivity.is_empty()),
            ("snr_db", self.snr_db.is_empty()),
            ("algorithms", self.algorithms.is_empty()),
        ] {
            if empty {
                return Err(config_err(key, "list is empty"));
            }
        }
        for &n in &self.n_nodes {
            if n < 2 {
                return Err(config_err(
                    "n_nodes",
                    format!("{n} is below the minimum of 2"),
                ));
            }
        }
        for &snr in &self.snr_db {
            if !snr.is_finite() {
                return Err(config_err("snr_db", "must be finite"));
            }
        }
        for &n in &self.n_nodes {
            for &c in &self.connectivity {
                check_feasible(n, c).map_err(|e| config_err("connectivity", e.to_string()))?;
            }
        }
        for &snr in &self.snr_db {
            let p = self.params.with_snr_db(snr);
            p.validate()
                .map_err(|e| config_err("params", e.to_string()))?;
            NoiseModel::build(&p).map_err(|e| config_err("params", e.to_string()))?;
        }
        Ok(())
    }

    /// Sweep cells in output order: nodes, connectivity, SNR, algorithm.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &n_nodes in &self.n_nodes {
            for &connectivity in &self.connectivity {
                for &snr_db in &self.snr_db {
                    for &algorithm in &self.algorithms {
                        cells.push(Cell {
                            algorithm,
                            n_nodes,
                            connectivity,
                            snr_db,
                        });
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub n_nodes: usize,
    pub connectivity: f64,
    pub snr_db: f64,
}

impl Cell {
    /// Seed label shared by every algorithm run in this cell.
    pub fn key(&self) -> u64 {
        derive_path(
            self.n_nodes as u64,
            &[self.connectivity.to_bits(), self.snr_db.to_bits()],
        )
    }
}

/// Everything a single trial needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub cell: Cell,
    pub params: SimulationParams,
    pub noise: NoiseModel,
    pub gamma: f64,
    pub node_weight: f64,
    pub max_iterations: usize,
    pub eta_deg: f64,
    pub stop_at_convergence: bool,
}

impl TrialSpec {
    pub fn new(config: &ExperimentConfig, cell: Cell) -> Result<Self> {
        check_feasible(cell.n_nodes, cell.connectivity)?;
        let params = config.params.with_snr_db(cell.snr_db);
        params.validate()?;
        Ok(Self {
            cell,
            params,
            noise: NoiseModel::build(&params)?,
            gamma: config.gamma,
            node_weight: config.node_weight,
            max_iterations: config.max_iterations,
            eta_deg: config.eta_deg,
            stop_at_convergence: config.stop_at_convergence,
        })
    }

    /// Replaces the noise model derived from the parameters.
    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub k: usize,
    /// Dispersion of the end-of-interval phases, degrees.
    pub sigma_phi_deg_state: f64,
    /// Dispersion of the per-node injected phase errors, degrees.
    pub sigma_phi_deg_components: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub n_nodes: usize,
    pub connectivity: f64,
    pub snr_db: f64,
    /// First round with dispersion at or below `eta`; `None` if never.
    pub convergence_iteration: Option<usize>,
    pub final_sigma_phi_deg: f64,
    pub final_sigma_phi_components_deg: f64,
    pub sigma_phi_trace: Vec<TracePoint>,
}

/// A trial's record together with its final internal state.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub topology: NetworkTopology,
    pub oscillators: Vec<OscillatorState>,
    pub final_freq: Vec<f64>,
    pub final_phase: Vec<f64>,
}

enum Protocol {
    Mpac(MpacState, MpacConfig),
    Dfpc(MixingMatrix),
}

/// Seed of trial `trial` in `cell` under master seed `master`.
pub fn trial_seed(master: u64, cell: &Cell, trial: usize) -> u64 {
    derive_path(master, &[cell.key(), trial as u64])
}

/// Runs one trial and keeps its final state.
pub fn simulate_trial(spec: &TrialSpec, trial: usize, seed: u64) -> Result<TrialOutcome> {
    let cell = spec.cell;
    let n = cell.n_nodes;
    let t = spec.params.update_interval;
    let eta = spec.eta_deg.to_radians();

    let mut topo_rng = rng_from_seed(derive_seed(seed, TOPOLOGY_STREAM));
    let topology = generate_random_topology(n, cell.connectivity, &mut topo_rng)?;
    let mut rngs = node_streams(seed, n);
    let mut osc: Vec<OscillatorState> = rngs
        .iter_mut()
        .map(|r| OscillatorState::sample_initial(&spec.params, r))
        .collect();

    let mut protocol = match cell.algorithm {
        Algorithm::Mpac => {
            let cfg = MpacConfig::uniform(n, spec.node_weight, spec.gamma);
            // baseband frame: the carrier sits at offset 0
            Protocol::Mpac(MpacState::new(&topology, &cfg, 0.0)?, cfg)
        }
        Algorithm::Dfpc => Protocol::Dfpc(metropolis_weights(&topology)),
    };

    let mut freq = vec![0.0; n];
    let mut phase = vec![0.0; n];
    let mut observations = vec![Observation::default(); n];
    let mut end_phase = vec![0.0; n];
    let mut injected = vec![0.0; n];
    let mut trace = Vec::with_capacity(spec.max_iterations);
    let mut convergence_iteration = None;

    for k in 1..=spec.max_iterations {
        for (s, rng) in osc.iter_mut().zip(rngs.iter_mut()) {
            s.evolve(&spec.noise, t, rng);
            s.observe(&spec.noise, rng);
        }
        for (o, s) in observations.iter_mut().zip(&osc) {
            *o = Observation::new(s.freq_obs, s.phase_obs);
        }
        match &mut protocol {
            Protocol::Mpac(state, cfg) => {
                state.iterate(&topology, &observations, cfg)?;
                freq.copy_from_slice(&state.consensus_freq);
                phase.copy_from_slice(&state.consensus_phase);
            }
            Protocol::Dfpc(mix) => {
                let f_obs: Vec<f64> = observations.iter().map(|o| o.freq).collect();
                let p_obs: Vec<f64> = observations.iter().map(|o| o.phase).collect();
                let (f, p) = dfpc_step(&f_obs, &p_obs, mix)?;
                for (s, (&fi, &pi)) in osc.iter_mut().zip(f.iter().zip(&p)) {
                    s.steer(fi, pi);
                }
                freq = f;
                phase = p;
            }
        }
        for i in 0..n {
            end_phase[i] = end_of_interval_phase(freq[i], phase[i], t);
            injected[i] = total_phase_error(&osc[i].error_components(), t);
        }
        let sigma_state = sigma_phi(&end_phase)?;
        if !sigma_state.is_finite() {
            return Err(Error::NonFinite("sigma_phi"));
        }
        trace.push(TracePoint {
            k,
            sigma_phi_deg_state: sigma_state.to_degrees(),
            sigma_phi_deg_components: sigma_phi(&injected)?.to_degrees(),
        });
        if convergence_iteration.is_none() && sigma_state <= eta {
            convergence_iteration = Some(k);
            if spec.stop_at_convergence {
                break;
            }
        }
    }

    let last = *trace.last().expect("max_iterations >= 1");
    Ok(TrialOutcome {
        record: TrialRecord {
            trial,
            algorithm: cell.algorithm,
            n_nodes: n,
            connectivity: cell.connectivity,
            snr_db: cell.snr_db,
            convergence_iteration,
            final_sigma_phi_deg: last.sigma_phi_deg_state,
            final_sigma_phi_components_deg: last.sigma_phi_deg_components,
            sigma_phi_trace: trace,
        },
        topology,
        oscillators: osc,
        final_freq: freq,
        final_phase: phase,
    })
}

pub fn run_trial(spec: &TrialSpec, trial: usize, seed: u64) -> Result<TrialRecord> {
    simulate_trial(spec, trial, seed).map(|o| o.record)
}

/// All trials of one cell, in trial order. Trials run in parallel.
pub fn run_cell(config: &ExperimentConfig, cell: Cell) -> Result<Vec<TrialRecord>> {
    let spec = TrialSpec::new(config, cell)?;
    (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(&spec, t, trial_seed(config.seed, &cell, t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub algorithm: Algorithm,
    pub n_nodes: usize,
    pub connectivity: f64,
    pub snr_db: f64,
    pub trials: usize,
    pub converged_count: usize,
    /// Over converged trials only; `None` when none converged.
    pub mean_convergence_iters: Option<f64>,
    /// Sample standard deviation; `None` below two converged trials.
    pub sd_convergence_iters: Option<f64>,
    pub mean_final_sigma_phi_deg: Option<f64>,
    pub sd_final_sigma_phi_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellSummary>,
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.len() >= 2)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

pub fn summarize(cell: Cell, records: &[TrialRecord]) -> CellSummary {
    let iters: Vec<f64> = records
        .iter()
        .filter_map(|r| r.convergence_iteration.map(|k| k as f64))
        .collect();
    let finals: Vec<f64> = records.iter().map(|r| r.final_sigma_phi_deg).collect();
    let (mean_it, sd_it) = mean_sd(&iters);
    let (mean_fin, sd_fin) = mean_sd(&finals);
    CellSummary {
        algorithm: cell.algorithm,
        n_nodes: cell.n_nodes,
        connectivity: cell.connectivity,
        snr_db: cell.snr_db,
        trials: records.len(),
        converged_count: iters.len(),
        mean_convergence_iters: mean_it,
        sd_convergence_iters: sd_it,
        mean_final_sigma_phi_deg: mean_fin,
        sd_final_sigma_phi_deg: sd_fin,
    }
}

/// Runs every cell and returns the summaries together with all trial records.
pub fn run_sweep_with_records(
    config: &ExperimentConfig,
) -> Result<(SweepResult, Vec<Vec<TrialRecord>>)> {
    config.validate()?;
    let mut result = SweepResult::default();
    let mut all = Vec::new();
    for cell in config.cells() {
        let records = run_cell(config, cell)?;
        result.cells.push(summarize(cell, &records));
        all.push(records);
    }
    Ok((result, all))
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep_with_records(config).map(|(r, _)| r)
}
