//! Flat `key = value` configuration files.
//!
//! ```text
//! # sweep over network size
//! n_nodes = 10, 20, 50
//! connectivity = 0.2
//! snr_db = 0
//! algorithms = mpac, dfpc
//! trials = 200
//! seed = 7
//! ```
//!
//! Blank lines and `#` comments are ignored. Lists are comma-separated.
//! Simulation parameters (`carrier_freq`, `update_interval`, ...) use the same
//! flat namespace. Absent keys keep their defaults.

use std::path::Path;
use std::str::FromStr;

use super::{Algorithm, ExperimentConfig};
use crate::error::{Error, Result};

pub const CONFIG_KEYS: &[&str] = &[
    "n_nodes",
    "connectivity",
    "snr_db",
    "algorithms",
    "trials",
    "max_iterations",
    "eta_deg",
    "seed",
    "stop_at_convergence",
    "gamma",
    "node_weight",
    "carrier_freq",
    "sample_rate",
    "update_interval",
    "beta1",
    "beta2",
    "jitter_power_db",
    "init_freq_rel_sd",
    "crlb_freq_scaled_by_fs",
];

/// Values given on the command line; each one replaces the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub n_nodes: Option<Vec<usize>>,
    pub connectivity: Option<Vec<f64>>,
    pub snr_db: Option<Vec<f64>>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub eta_deg: Option<f64>,
    pub max_iterations: Option<usize>,
    pub gamma: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.n_nodes {
            cfg.n_nodes = v.clone();
        }
        if let Some(v) = &self.connectivity {
            cfg.connectivity = v.clone();
        }
        if let Some(v) = &self.snr_db {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = &self.algorithms {
            cfg.algorithms = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eta_deg {
            cfg.eta_deg = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
    }
}

fn scalar<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Config {
        key: key.into(),
        reason: format!(
            "cannot parse `{}` as {}",
            raw.trim(),
            std::any::type_name::<T>()
        ),
    })
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

fn set(cfg: &mut ExperimentConfig, key: &str, raw: &str) -> Result<()> {
    let p = &mut cfg.params;
    match key {
        "n_nodes" => cfg.n_nodes = list(key, raw)?,
        "connectivity" => cfg.connectivity = list(key, raw)?,
        "snr_db" => cfg.snr_db = list(key, raw)?,
        "algorithms" => cfg.algorithms = list(key, raw)?,
        "trials" => cfg.trials = scalar(key, raw)?,
        "max_iterations" => cfg.max_iterations = scalar(key, raw)?,
        "eta_deg" => cfg.eta_deg = scalar(key, raw)?,
        "seed" => cfg.seed = scalar(key, raw)?,
        "stop_at_convergence" => cfg.stop_at_convergence = scalar(key, raw)?,
        "gamma" => cfg.gamma = scalar(key, raw)?,
        "node_weight" => cfg.node_weight = scalar(key, raw)?,
        "carrier_freq" => p.carrier_freq = scalar(key, raw)?,
        "sample_rate" => p.sample_rate = scalar(key, raw)?,
        "update_interval" => p.update_interval = scalar(key, raw)?,
        "beta1" => p.beta1 = scalar(key, raw)?,
        "beta2" => p.beta2 = scalar(key, raw)?,
        "jitter_power_db" => p.jitter_power_db = scalar(key, raw)?,
        "init_freq_rel_sd" => p.init_freq_rel_sd = scalar(key, raw)?,
        "crlb_freq_scaled_by_fs" => p.crlb_freq_scaled_by_fs = scalar(key, raw)?,
        _ => {
            return Err(Error::Config {
                key: key.into(),
                reason: "unknown key".into(),
            })
        }
    }
    Ok(())
}

/// Parses config text and applies overrides, without validating.
pub fn parse_config_str(text: &str, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            key: line.to_string(),
            reason: format!("line {}: expected `key = value`", lineno + 1),
        })?;
        set(&mut cfg, key.trim(), value)?;
    }
    overrides.apply(&mut cfg);
    Ok(cfg)
}

/// Reads `path` (defaults only when `None`), applies overrides and validates.
pub fn parse_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let cfg = parse_config_str(&text, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"\n# nothing here\n").unwrap();
        let cfg = parse_config(Some(f.path()), &ConfigOverrides::default()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.params.carrier_freq, 1e9);
        assert_eq!(cfg.gamma, 1e12);
        assert_eq!(cfg.eta_deg, 1.0);
        assert_eq!(cfg.trials, 1000);
    }

    #[test]
    fn lists_and_scalars() {
        let text = "n_nodes = 10, 20,50\nsnr_db=-5,0.5 # trailing\nalgorithms = dfpc\nseed = 18446744073709551615\nupdate_interval = 2e-4\nstop_at_convergence = true\n";
        let cfg = parse_config_str(text, &ConfigOverrides::default()).unwrap();
        assert_eq!(cfg.n_nodes, vec![10, 20, 50]);
        assert_eq!(cfg.snr_db, vec![-5.0, 0.5]);
        assert_eq!(cfg.algorithms, vec![Algorithm::Dfpc]);
        assert_eq!(cfg.seed, u64::MAX);
        assert_eq!(cfg.params.update_interval, 2e-4);
        assert!(cfg.stop_at_convergence);
    }

    #[test]
    fn flags_override_file() {
        let o = ConfigOverrides {
            snr_db: Some(vec![10.0]),
            ..Default::default()
        };
        let cfg = parse_config_str("snr_db = 0\ntrials = 3", &o).unwrap();
        assert_eq!(cfg.snr_db, vec![10.0]);
        assert_eq!(cfg.trials, 3);
    }

    #[test]
    fn errors_name_the_key() {
        let none = ConfigOverrides::default();
        assert_eq!(
            key_of(parse_config_str("n_node = 3", &none).unwrap_err()),
            "n_node"
        );
        assert_eq!(
            key_of(parse_config_str("trials = many", &none).unwrap_err()),
            "trials"
        );
        assert_eq!(
            key_of(parse_config_str("trials = -1", &none).unwrap_err()),
            "trials"
        );
        assert_eq!(
            key_of(parse_config_str("algorithms = mpac, kf", &none).unwrap_err()),
            "algorithms"
        );
        assert!(parse_config_str("just words", &none).is_err());
    }

    #[test]
    fn infeasible_connectivity_cites_minimum() {
        let cfg = parse_config_str(
            "n_nodes = 5\nconnectivity = 0.1",
            &ConfigOverrides::default(),
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("connectivity"), "{msg}");
        assert!(msg.contains("0.4"), "{msg}");
    }

    #[test]
    fn every_key_is_accepted() {
        for key in CONFIG_KEYS {
            let value = match *key {
                "algorithms" => "mpac",
                "stop_at_convergence" | "crlb_freq_scaled_by_fs" => "false",
                _ => "1",
            };
            parse_config_str(&format!("{key} = {value}"), &ConfigOverrides::default()).unwrap();
        }
    }
}
