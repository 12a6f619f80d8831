//! Local oscillator state, its stochastic evolution between updates, and the
//! noisy estimates neighbors obtain of it.
//!
//! Frequencies are carried as offsets from the carrier `f_c` (baseband), so a
//! node at `f_c + 12 Hz` stores `12.0`. Every consensus operation used here is
//! translation-equivariant, so the offset frame changes nothing but the
//! floating-point floor: absolute values near 1 GHz would quantize to about
//! 1e-7 Hz.
//!
//! Phases are unwrapped reals in radians.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and noise parameters shared by all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    /// Carrier frequency `f_c`, Hz.
    pub carrier_freq: f64,
    /// Receiver sampling rate `f_s`, Hz.
    pub sample_rate: f64,
    /// Update interval `T`, seconds. One consensus round spans one interval.
    pub update_interval: f64,
    /// Linear SNR of the exchanged signals.
    pub snr: f64,
    /// Allan deviation coefficients.
    pub beta1: f64,
    pub beta2: f64,
    /// Integrated phase noise power `A`, dB.
    pub jitter_power_db: f64,
    /// Initial frequency spread relative to the carrier (1e-4 = 100 ppm).
    pub init_freq_rel_sd: f64,
    /// Scale the normalized frequency CRLB by `f_s` to express it in Hz.
    pub crlb_freq_scaled_by_fs: bool,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            carrier_freq: 1e9,
            sample_rate: 1e7,
            update_interval: 1e-4,
            snr: 1.0,
            beta1: 5e-19,
            beta2: 5e-19,
            jitter_power_db: -53.46,
            init_freq_rel_sd: 1e-4,
            crlb_freq_scaled_by_fs: true,
        }
    }
}

impl SimulationParams {
    /// Samples per observation window, `L = T f_s`.
    pub fn sample_count(&self) -> f64 {
        self.update_interval * self.sample_rate
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr = db_to_linear(snr_db);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("sample_rate", self.sample_rate),
            ("update_interval", self.update_interval),
            ("snr", self.snr),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("{v} must be positive and finite"),
                ));
            }
        }
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("init_freq_rel_sd", self.init_freq_rel_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("{v} must be non-negative and finite"),
                ));
            }
        }
        if !self.jitter_power_db.is_finite() {
            return Err(Error::NonFinite("jitter_power_db"));
        }
        if self.sample_count() < 1.0 {
            return Err(Error::invalid(
                "update_interval",
                format!("T * f_s = {} is below one sample", self.sample_count()),
            ));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Standard deviations of the four noise channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-interval frequency drift, Hz.
    pub sigma_f: f64,
    /// Per-interval phase jitter, rad.
    pub sigma_theta: f64,
    /// Frequency estimation error, Hz (or cycles/sample when unscaled).
    pub sigma_f_meas: f64,
    /// Phase estimation error, rad.
    pub sigma_theta_meas: f64,
}

impl NoiseModel {
    pub const fn zero() -> Self {
        Self {
            sigma_f: 0.0,
            sigma_theta: 0.0,
            sigma_f_meas: 0.0,
            sigma_theta_meas: 0.0,
        }
    }

    /// Allan-deviation drift, integrated-jitter and CRLB estimation noise.
    pub fn build(params: &SimulationParams) -> Result<Self> {
        let t = params.update_interval;
        let l = params.sample_count();
        let sigma_f = params.carrier_freq * (params.beta1 / t + params.beta2 * t).sqrt();
        let sigma_theta = (2.0 * db_to_linear(params.jitter_power_db)).sqrt();
        let sigma_theta_meas = 2.0 / (l * params.snr);
        let mut sigma_f_meas = (6.0 / (TAU * TAU * l.powi(3) * params.snr)).sqrt();
        if params.crlb_freq_scaled_by_fs {
            sigma_f_meas *= params.sample_rate;
        }
        let model = Self {
            sigma_f,
            sigma_theta,
            sigma_f_meas,
            sigma_theta_meas,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_f", self.sigma_f),
            ("sigma_theta", self.sigma_theta),
            ("sigma_f_meas", self.sigma_f_meas),
            ("sigma_theta_meas", self.sigma_theta_meas),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
            if v < 0.0 {
                return Err(Error::invalid(name, "negative standard deviation"));
            }
        }
        Ok(())
    }
}

/// Convenience wrapper matching the module-level operation name.
pub fn build_noise_model(params: &SimulationParams) -> Result<NoiseModel> {
    NoiseModel::build(params)
}

/// True and observed electrical state of one node, plus the noise draws of the
/// most recent interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OscillatorState {
    /// Frequency offset from the carrier, Hz.
    pub freq_true: f64,
    pub phase_true: f64,
    pub freq_obs: f64,
    pub phase_obs: f64,
    pub last_drift: f64,
    pub last_jitter: f64,
    pub last_freq_meas_err: f64,
    pub last_phase_meas_err: f64,
}

/// The per-interval error draws that make up a node's total phase error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorComponents {
    pub drift: f64,
    pub freq_meas_err: f64,
    pub jitter: f64,
    pub phase_meas_err: f64,
}

fn normal(sd: f64) -> Normal<f64> {
    // sd is validated non-negative and finite by NoiseModel
    Normal::new(0.0, sd).expect("valid standard deviation")
}

fn draw<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> f64 {
    normal(sd).sample(rng)
}

impl OscillatorState {
    /// Initial frequency offset `~ N(0, (init_freq_rel_sd * f_c)^2)` and phase
    /// `~ U(0, 2pi)`. Observations start equal to the truth.
    pub fn sample_initial<R: Rng + ?Sized>(params: &SimulationParams, rng: &mut R) -> Self {
        let freq = draw(params.init_freq_rel_sd * params.carrier_freq, rng);
        let phase = Uniform::new(0.0, TAU).expect("non-empty range").sample(rng);
        Self::at(freq, phase)
    }

    /// Noise-free state at the given frequency offset and phase.
    pub fn at(freq: f64, phase: f64) -> Self {
        Self {
            freq_true: freq,
            phase_true: phase,
            freq_obs: freq,
            phase_obs: phase,
            ..Self::default()
        }
    }

    /// Advances one update interval with explicit drift and jitter:
    /// the frequency walks by `drift` and the phase picks up the mid-interval
    /// ramp `-pi T drift` plus `jitter`.
    pub fn evolve_with(&mut self, drift: f64, jitter: f64, update_interval: f64) {
        self.freq_true += drift;
        self.phase_true += drift_phase(drift, update_interval) + jitter;
        self.last_drift = drift;
        self.last_jitter = jitter;
    }

    pub fn evolve<R: Rng + ?Sized>(
        &mut self,
        noise: &NoiseModel,
        update_interval: f64,
        rng: &mut R,
    ) {
        let drift = draw(noise.sigma_f, rng);
        let jitter = draw(noise.sigma_theta, rng);
        self.evolve_with(drift, jitter, update_interval);
    }

    pub fn observe_with(&mut self, freq_err: f64, phase_err: f64) {
        self.freq_obs = self.freq_true + freq_err;
        self.phase_obs = self.phase_true + phase_err;
        self.last_freq_meas_err = freq_err;
        self.last_phase_meas_err = phase_err;
    }

    pub fn observe<R: Rng + ?Sized>(&mut self, noise: &NoiseModel, rng: &mut R) {
        let freq_err = draw(noise.sigma_f_meas, rng);
        let phase_err = draw(noise.sigma_theta_meas, rng);
        self.observe_with(freq_err, phase_err);
    }

    /// Re-tunes the oscillator to a new frequency offset and phase, as a node
    /// does after a linear-consensus update.
    pub fn steer(&mut self, freq: f64, phase: f64) {
        self.freq_true = freq;
        self.phase_true = phase;
    }

    pub fn error_components(&self) -> ErrorComponents {
        ErrorComponents {
            drift: self.last_drift,
            freq_meas_err: self.last_freq_meas_err,
            jitter: self.last_jitter,
            phase_meas_err: self.last_phase_meas_err,
        }
    }
}

/// Phase picked up over one interval from a frequency step, `-pi T df`.
pub fn drift_phase(drift: f64, update_interval: f64) -> f64 {
    -PI * update_interval * drift
}

/// Initial states for `n_nodes` nodes drawn from a single stream.
pub fn init_states<R: Rng + ?Sized>(
    params: &SimulationParams,
    n_nodes: usize,
    rng: &mut R,
) -> Result<Vec<OscillatorState>> {
    if n_nodes < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: n_nodes,
        });
    }
    Ok((0..n_nodes)
        .map(|_| OscillatorState::sample_initial(params, rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn sample_sd(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn default_noise_model_values() {
        let m = NoiseModel::build(&SimulationParams::default()).unwrap();
        assert!((m.sigma_f - 70.710_678_472_208_13).abs() < 1e-9);
        assert!((m.sigma_theta - 3.002_721_114_394_275_6e-3).abs() < 1e-15);
        assert!((m.sigma_theta.to_degrees() - 0.172).abs() < 1e-3);
        assert!((m.sigma_theta_meas - 2e-3).abs() < 1e-18);
        assert!((m.sigma_f_meas - 123.280_888_812_299_96).abs() < 1e-9);

        let unscaled = NoiseModel::build(&SimulationParams {
            crlb_freq_scaled_by_fs: false,
            ..Default::default()
        })
        .unwrap();
        assert!((unscaled.sigma_f_meas - 1.232_808_888_123e-5).abs() < 1e-16);
    }

    #[test]
    fn degenerate_params_are_rejected() {
        let p = SimulationParams {
            update_interval: 0.0,
            ..Default::default()
        };
        assert!(NoiseModel::build(&p).is_err());
        assert!(p.validate().is_err());
        let p = SimulationParams {
            snr: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn measurement_noise_decreases_with_snr() {
        let mut prev = NoiseModel::build(&SimulationParams::default().with_snr_db(-20.0)).unwrap();
        for db in [-10.0, 0.0, 10.0, 20.0, 60.0] {
            let m = NoiseModel::build(&SimulationParams::default().with_snr_db(db)).unwrap();
            assert!(m.sigma_f_meas < prev.sigma_f_meas);
            assert!(m.sigma_theta_meas < prev.sigma_theta_meas);
            prev = m;
        }
        assert!(prev.sigma_theta_meas < 1e-8);
    }

    #[test]
    fn drift_grows_as_interval_shrinks_below_adev_minimum() {
        // minimum of b1/T + b2 T sits at T = sqrt(b1/b2) = 1 s
        let at = |t: f64| {
            NoiseModel::build(&SimulationParams {
                update_interval: t,
                ..Default::default()
            })
            .unwrap()
            .sigma_f
        };
        assert!(at(1e-5) > at(1e-4));
        assert!(at(1e-4) > at(1e-2));
    }

    #[test]
    fn zero_noise_leaves_state_unchanged() {
        let mut rng = rng_from_seed(0);
        let mut s = OscillatorState::at(12.5, 1.0);
        let before = s;
        s.evolve(&NoiseModel::zero(), 1e-4, &mut rng);
        s.observe(&NoiseModel::zero(), &mut rng);
        assert_eq!(s.freq_true, before.freq_true);
        assert_eq!(s.phase_true, before.phase_true);
        assert_eq!(s.freq_obs, s.freq_true);
        assert_eq!(s.phase_obs, s.phase_true);
    }

    #[test]
    fn forced_drift_phase_increment() {
        let mut s = OscillatorState::at(0.0, 0.0);
        s.evolve_with(70.711, 0.0, 1e-4);
        assert!((s.phase_true - (-0.022_214_515_812_798_784)).abs() < 1e-15);
        assert_eq!(s.freq_true, 70.711);
        s.evolve_with(0.0, 1e-3, 1e-4);
        assert!((s.phase_true - (-0.022_214_515_812_798_784 + 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn observation_bookkeeping_is_consistent() {
        let noise = NoiseModel::build(&SimulationParams::default()).unwrap();
        let mut rng = rng_from_seed(4);
        let mut s = OscillatorState::sample_initial(&SimulationParams::default(), &mut rng);
        for _ in 0..100 {
            s.evolve(&noise, 1e-4, &mut rng);
            s.observe(&noise, &mut rng);
            // one rounding in the sum, one in the difference
            let ulp = |x: f64| 2.0 * f64::EPSILON * x.abs();
            assert!((s.freq_obs - s.freq_true - s.last_freq_meas_err).abs() <= ulp(s.freq_obs));
            assert!((s.phase_obs - s.phase_true - s.last_phase_meas_err).abs() <= ulp(s.phase_obs));
        }
    }

    #[test]
    fn initial_state_moments() {
        let params = SimulationParams::default();
        let mut rng = rng_from_seed(21);
        let states = init_states(&params, 1_000_000, &mut rng).unwrap();
        let freqs: Vec<f64> = states.iter().map(|s| s.freq_true).collect();
        let phases: Vec<f64> = states.iter().map(|s| s.phase_true).collect();
        let sd = sample_sd(&freqs);
        assert!((sd / 1e5 - 1.0).abs() < 0.01, "sd {sd}");
        let mean_phase = phases.iter().sum::<f64>() / phases.len() as f64;
        assert!((mean_phase - PI).abs() < 0.01);
        assert!(phases.iter().all(|&p| (0.0..TAU).contains(&p)));
        assert!(init_states(&params, 1, &mut rng).is_err());
    }

    #[test]
    fn initial_states_are_seed_deterministic() {
        let params = SimulationParams::default();
        let a = init_states(&params, 16, &mut rng_from_seed(8)).unwrap();
        let b = init_states(&params, 16, &mut rng_from_seed(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evolution_and_observation_moments() {
        let noise = NoiseModel::build(&SimulationParams::default()).unwrap();
        let mut rng = rng_from_seed(77);
        let mut s = OscillatorState::at(0.0, 0.0);
        let n = 1_000_000;
        let mut steps = Vec::with_capacity(n);
        let mut phase_errs = Vec::with_capacity(n);
        for _ in 0..n {
            let f0 = s.freq_true;
            s.evolve(&noise, 1e-4, &mut rng);
            s.observe(&noise, &mut rng);
            steps.push(s.freq_true - f0);
            phase_errs.push(s.phase_obs - s.phase_true);
        }
        assert!((sample_sd(&steps) / noise.sigma_f - 1.0).abs() < 0.01);
        assert!((sample_sd(&phase_errs) / noise.sigma_theta_meas - 1.0).abs() < 0.01);
    }
}
