//! Message-passing average consensus.
//!
//! Every directed edge `m -> n` carries a message `(mu_f, mu_theta, s)`: the
//! weighted average of everything node `m` has heard *except* what came from
//! `n`, and the (damped) total weight behind that average. A node's estimate
//! combines its own observation with all incoming messages:
//!
//! ```text
//! f_n(k) = (w_n f^_n(k) + sum_m s_{m->n} mu^f_{m->n}) / (w_n + sum_m s_{m->n})
//! ```
//!
//! and its outgoing message to `m` repeats the sum without the term received
//! from `m`, with weight `f_gamma(w_n + sum_{l != m} s_{l->n})`. Rounds are
//! synchronous: every output of round `k` reads only round `k-1` messages.
//!
//! On a tree the estimates are exact after `diameter` rounds. On graphs with
//! cycles the fixed point is the minimizer computed by
//! [`crate::analysis::closed_form_consensus`], reached geometrically at a rate
//! that slows as `gamma` grows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NetworkTopology;

/// Damping map `gamma x / (gamma + x)`. Keeps message weights below `gamma`.
pub fn f_gamma(x: f64, gamma: f64) -> f64 {
    gamma * x / (gamma + x)
}

pub const DEFAULT_GAMMA: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpacConfig {
    pub gamma: f64,
    pub node_weights: Vec<f64>,
}

impl MpacConfig {
    pub fn uniform(n_nodes: usize, weight: f64, gamma: f64) -> Self {
        Self {
            gamma,
            node_weights: vec![weight; n_nodes],
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(
                "gamma",
                format!("{} must be positive and finite", self.gamma),
            ));
        }
        if self.node_weights.len() != n_nodes {
            return Err(Error::DimensionMismatch {
                expected: n_nodes,
                found: self.node_weights.len(),
            });
        }
        if let Some(w) = self
            .node_weights
            .iter()
            .find(|w| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::invalid(
                "node_weights",
                format!("{w} must be positive and finite"),
            ));
        }
        Ok(())
    }
}

/// A node's own estimate of its frequency and phase for the current round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub freq: f64,
    pub phase: f64,
}

impl Observation {
    pub fn new(freq: f64, phase: f64) -> Self {
        Self { freq, phase }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpacMessage {
    pub mu_f: f64,
    pub mu_theta: f64,
    pub scale: f64,
}

/// Running sums `(sum s, sum s mu_f, sum s mu_theta)` over a set of messages.
#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    weight: f64,
    freq: f64,
    phase: f64,
}

impl Partial {
    fn of(m: &MpacMessage) -> Self {
        Self {
            weight: m.scale,
            freq: m.scale * m.mu_f,
            phase: m.scale * m.mu_theta,
        }
    }

    fn add(self, other: Self) -> Self {
        Self {
            weight: self.weight + other.weight,
            freq: self.freq + other.freq,
            phase: self.phase + other.phase,
        }
    }

    /// Folds in the node's own observation; returns `(total weight, f, theta)`.
    fn combine(self, weight: f64, obs: Observation) -> (f64, f64, f64) {
        let den = weight + self.weight;
        (
            den,
            (weight * obs.freq + self.freq) / den,
            (weight * obs.phase + self.phase) / den,
        )
    }
}

fn sum_left(msgs: &[MpacMessage]) -> Partial {
    msgs.iter()
        .fold(Partial::default(), |acc, m| acc.add(Partial::of(m)))
}

/// Right-to-left sum, so that `sum_left(..i) + sum_right(i+1..)` matches the
/// prefix/suffix tables built in [`MpacState::iterate`].
fn sum_right(msgs: &[MpacMessage]) -> Partial {
    msgs.iter()
        .rev()
        .fold(Partial::default(), |acc, m| acc.add(Partial::of(m)))
}

/// Messages in flight plus each node's current estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MpacState {
    /// `inbox[n][i]` is the message from `neighbors(n)[i]` to `n`.
    inbox: Vec<Vec<MpacMessage>>,
    /// `reverse[n][i]` is the slot of `n` in the neighbor list of
    /// `neighbors(n)[i]`.
    reverse: Vec<Vec<usize>>,
    pub consensus_freq: Vec<f64>,
    pub consensus_phase: Vec<f64>,
    pub iteration: usize,
}

impl MpacState {
    /// Initial messages `(initial_freq, pi, f_gamma(w_m))` on every directed
    /// edge `m -> n`. Estimates start at `(initial_freq, pi)`.
    pub fn new(topology: &NetworkTopology, config: &MpacConfig, initial_freq: f64) -> Result<Self> {
        let n_nodes = topology.n_nodes();
        config.validate(n_nodes)?;
        if !initial_freq.is_finite() {
            return Err(Error::NonFinite("initial_freq"));
        }
        let inbox = (0..n_nodes)
            .map(|n| {
                topology
                    .adj(n)
                    .iter()
                    .map(|&m| MpacMessage {
                        mu_f: initial_freq,
                        mu_theta: PI,
                        scale: f_gamma(config.node_weights[m], config.gamma),
                    })
                    .collect()
            })
            .collect();
        let reverse = (0..n_nodes)
            .map(|n| {
                topology
                    .adj(n)
                    .iter()
                    .map(|&m| {
                        topology
                            .neighbor_slot(m, n)
                            .expect("adjacency is symmetric")
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            inbox,
            reverse,
            consensus_freq: vec![initial_freq; n_nodes],
            consensus_phase: vec![PI; n_nodes],
            iteration: 0,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.inbox.len()
    }

    /// Message currently held on edge `from -> to`.
    pub fn message(
        &self,
        topology: &NetworkTopology,
        from: usize,
        to: usize,
    ) -> Option<&MpacMessage> {
        let slot = topology.neighbor_slot(to, from)?;
        self.inbox.get(to)?.get(slot)
    }

    /// Messages delivered to `node`, ordered like `topology.neighbors(node)`.
    pub fn incoming(&self, node: usize) -> &[MpacMessage] {
        &self.inbox[node]
    }

    pub fn n_messages(&self) -> usize {
        self.inbox.iter().map(Vec::len).sum()
    }

    pub fn messages(&self) -> impl Iterator<Item = &MpacMessage> {
        self.inbox.iter().flatten()
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.n_nodes() {
            return Err(Error::NodeOutOfRange {
                node,
                n_nodes: self.n_nodes(),
            });
        }
        Ok(())
    }

    /// Estimate of `node` for the next round from the current inbox.
    pub fn update_node(
        &self,
        node: usize,
        obs: Observation,
        config: &MpacConfig,
    ) -> Result<(f64, f64)> {
        self.check_node(node)?;
        let (_, f, theta) = sum_left(&self.inbox[node]).combine(config.node_weights[node], obs);
        Ok((f, theta))
    }

    /// Message `node -> recipient` for the next round from the current inbox.
    pub fn compute_outgoing(
        &self,
        topology: &NetworkTopology,
        node: usize,
        recipient: usize,
        obs: Observation,
        config: &MpacConfig,
    ) -> Result<MpacMessage> {
        self.check_node(node)?;
        let slot = topology
            .neighbor_slot(node, recipient)
            .ok_or(Error::NotNeighbors {
                from: node,
                to: recipient,
            })?;
        let msgs = &self.inbox[node];
        let excl = sum_left(&msgs[..slot]).add(sum_right(&msgs[slot + 1..]));
        let (den, mu_f, mu_theta) = excl.combine(config.node_weights[node], obs);
        Ok(MpacMessage {
            mu_f,
            mu_theta,
            scale: f_gamma(den, config.gamma),
        })
    }

    /// One synchronous round: every node updates its estimate, then every
    /// directed edge gets a fresh message, all from the previous inbox.
    pub fn iterate(
        &mut self,
        topology: &NetworkTopology,
        observations: &[Observation],
        config: &MpacConfig,
    ) -> Result<()> {
        let n_nodes = self.n_nodes();
        if observations.len() != n_nodes {
            return Err(Error::DimensionMismatch {
                expected: n_nodes,
                found: observations.len(),
            });
        }
        let mut next: Vec<Vec<MpacMessage>> = self.inbox.clone();
        let mut suffix: Vec<Partial> = Vec::new();
        for n in 0..n_nodes {
            let msgs = &self.inbox[n];
            let weight = config.node_weights[n];
            let obs = observations[n];

            let (_, f, theta) = sum_left(msgs).combine(weight, obs);
            self.consensus_freq[n] = f;
            self.consensus_phase[n] = theta;

            suffix.clear();
            suffix.resize(msgs.len() + 1, Partial::default());
            for i in (0..msgs.len()).rev() {
                suffix[i] = suffix[i + 1].add(Partial::of(&msgs[i]));
            }
            let mut prefix = Partial::default();
            for (i, &m) in topology.adj(n).iter().enumerate() {
                let (den, mu_f, mu_theta) = prefix.add(suffix[i + 1]).combine(weight, obs);
                next[m][self.reverse[n][i]] = MpacMessage {
                    mu_f,
                    mu_theta,
                    scale: f_gamma(den, config.gamma),
                };
                prefix = prefix.add(Partial::of(&msgs[i]));
            }
        }
        self.inbox = next;
        self.iteration += 1;
        Ok(())
    }

    /// Iterates with fixed observations until no estimate moves by more than
    /// `tol` between rounds, or `max_iterations` rounds have run. Returns the
    /// number of rounds executed.
    pub fn iterate_until_settled(
        &mut self,
        topology: &NetworkTopology,
        observations: &[Observation],
        config: &MpacConfig,
        tol: f64,
        max_iterations: usize,
    ) -> Result<usize> {
        for round in 1..=max_iterations {
            let prev_f = self.consensus_freq.clone();
            let prev_t = self.consensus_phase.clone();
            self.iterate(topology, observations, config)?;
            let moved = self
                .consensus_freq
                .iter()
                .zip(&prev_f)
                .chain(self.consensus_phase.iter().zip(&prev_t))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if round > 1 && moved <= tol {
                return Ok(round);
            }
        }
        Ok(max_iterations)
    }
}

/// Module-level constructor mirroring the protocol's input step.
pub fn init_mpac(
    topology: &NetworkTopology,
    config: &MpacConfig,
    initial_freq: f64,
) -> Result<MpacState> {
    MpacState::new(topology, config, initial_freq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_random_topology, min_connectivity};
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    const FC: f64 = 1e9;

    fn obs(values: &[(f64, f64)]) -> Vec<Observation> {
        values
            .iter()
            .map(|&(f, t)| Observation::new(f, t))
            .collect()
    }

    #[test]
    fn f_gamma_values() {
        assert_eq!(f_gamma(0.0, 1e12), 0.0);
        assert_eq!(f_gamma(1e12, 1e12), 5e11);
        assert!((f_gamma(1.0, 1e12) - 0.999_999_999_999).abs() < 1e-15);
        for x in [1e-3, 1.0, 1e6, 1e12, 1e15] {
            assert!(f_gamma(x, 1e12) < 1e12);
            assert!(f_gamma(x, 1e12) <= x);
        }
    }

    #[test]
    fn initial_messages() {
        let g = generate_random_topology(12, 0.3, &mut rng_from_seed(2)).unwrap();
        let cfg = MpacConfig::uniform(12, 1.0, 1e12);
        let s = init_mpac(&g, &cfg, FC).unwrap();
        assert_eq!(s.n_messages(), g.n_directed_edges());
        for m in s.messages() {
            assert_eq!(m.mu_f, FC);
            assert_eq!(m.mu_theta, PI);
            assert!((m.scale - 1.0).abs() < 1e-11);
        }
        let two = NetworkTopology::path(2).unwrap();
        assert_eq!(
            init_mpac(&two, &MpacConfig::uniform(2, 1.0, 1e12), FC)
                .unwrap()
                .n_messages(),
            2
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let g = NetworkTopology::path(3).unwrap();
        assert!(init_mpac(&g, &MpacConfig::uniform(3, 0.0, 1e12), FC).is_err());
        assert!(init_mpac(&g, &MpacConfig::uniform(3, 1.0, 0.0), FC).is_err());
        assert!(init_mpac(&g, &MpacConfig::uniform(3, 1.0, f64::INFINITY), FC).is_err());
        assert!(init_mpac(&g, &MpacConfig::uniform(2, 1.0, 1e12), FC).is_err());
    }

    #[test]
    fn two_node_first_update_averages_with_prior() {
        let g = NetworkTopology::path(2).unwrap();
        let cfg = MpacConfig::uniform(2, 1.0, 1e12);
        let s = init_mpac(&g, &cfg, FC).unwrap();
        let f_hat = FC + 3.0e4;
        let (f, _) = s
            .update_node(0, Observation::new(f_hat, 1.0), &cfg)
            .unwrap();
        assert!(((f - (f_hat + FC) / 2.0) / f).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_returns_own_observation() {
        let g = NetworkTopology::from_edges(3, &[(0, 1)]).unwrap();
        let cfg = MpacConfig::uniform(3, 1.0, 1e12);
        let s = init_mpac(&g, &cfg, FC).unwrap();
        assert_eq!(
            s.update_node(2, Observation::new(7.0, 0.5), &cfg).unwrap(),
            (7.0, 0.5)
        );
    }

    #[test]
    fn identical_inputs_are_reproduced() {
        let g = NetworkTopology::star(5).unwrap();
        let cfg = MpacConfig::uniform(5, 1.0, 1e12);
        let s = init_mpac(&g, &cfg, 42.0).unwrap();
        let (f, t) = s.update_node(0, Observation::new(42.0, PI), &cfg).unwrap();
        assert_eq!(f, 42.0);
        assert!((t - PI).abs() <= 2.0 * f64::EPSILON * PI);
    }

    #[test]
    fn two_node_outgoing_carries_only_own_observation() {
        let g = NetworkTopology::path(2).unwrap();
        let cfg = MpacConfig::uniform(2, 1.0, 1e12);
        let s = init_mpac(&g, &cfg, FC).unwrap();
        let m = s
            .compute_outgoing(&g, 0, 1, Observation::new(5.0, 0.25), &cfg)
            .unwrap();
        assert_eq!(m.mu_f, 5.0);
        assert_eq!(m.mu_theta, 0.25);
        assert_eq!(m.scale, f_gamma(1.0, 1e12));
        assert!(matches!(
            s.compute_outgoing(&g, 0, 0, Observation::default(), &cfg),
            Err(Error::NotNeighbors { .. })
        ));
    }

    #[test]
    fn leaf_message_toward_hub_is_leaf_observation() {
        let g = NetworkTopology::star(6).unwrap();
        let cfg = MpacConfig::uniform(6, 1.0, 1e12);
        let mut s = init_mpac(&g, &cfg, 0.0).unwrap();
        let o = obs(&[
            (0.0, 0.0),
            (1.0, 0.1),
            (2.0, 0.2),
            (3.0, 0.3),
            (4.0, 0.4),
            (5.0, 0.5),
        ]);
        s.iterate(&g, &o, &cfg).unwrap();
        for (leaf, ob) in o.iter().enumerate().skip(1) {
            let m = s.message(&g, leaf, 0).unwrap();
            assert_eq!((m.mu_f, m.mu_theta), (ob.freq, ob.phase));
            assert!(m.scale < cfg.gamma);
        }
    }

    #[test]
    fn consensus_state_is_a_fixed_point() {
        let g = generate_random_topology(10, 0.4, &mut rng_from_seed(6)).unwrap();
        let cfg = MpacConfig::uniform(10, 1.0, 1e12);
        let mut s = init_mpac(&g, &cfg, FC).unwrap();
        let o = vec![Observation::new(FC, PI); 10];
        for _ in 0..50 {
            s.iterate(&g, &o, &cfg).unwrap();
            assert!(s
                .consensus_freq
                .iter()
                .all(|&f| (f - FC).abs() <= 1e-13 * FC));
            assert!(s
                .consensus_phase
                .iter()
                .all(|&t| (t - PI).abs() <= 1e-13 * PI));
        }
    }

    #[test]
    fn two_nodes_reach_the_mean_in_two_rounds() {
        let g = NetworkTopology::path(2).unwrap();
        let cfg = MpacConfig::uniform(2, 1.0, 1e12);
        let (a, b) = (-3.0e4, 5.0e4);
        let o = obs(&[(a, 1.0), (b, 2.0)]);
        let mut s = init_mpac(&g, &cfg, 0.0).unwrap();
        s.iterate(&g, &o, &cfg).unwrap();
        s.iterate(&g, &o, &cfg).unwrap();
        for n in 0..2 {
            assert!((s.consensus_freq[n] - (a + b) / 2.0).abs() <= 1e-11 * (a - b).abs());
        }
        assert_eq!(s.iteration, 2);
    }

    #[test]
    fn observation_count_must_match() {
        let g = NetworkTopology::path(3).unwrap();
        let cfg = MpacConfig::uniform(3, 1.0, 1e12);
        let mut s = init_mpac(&g, &cfg, 0.0).unwrap();
        assert!(s.iterate(&g, &[Observation::default(); 2], &cfg).is_err());
    }

    #[test]
    fn tree_scales_reach_a_fixed_point() {
        let g = NetworkTopology::path(6).unwrap();
        let cfg = MpacConfig::uniform(6, 1.0, 1e12);
        let o: Vec<_> = (0..6).map(|i| Observation::new(i as f64, 0.0)).collect();
        let mut s = init_mpac(&g, &cfg, 0.0).unwrap();
        for _ in 0..10 {
            s.iterate(&g, &o, &cfg).unwrap();
        }
        let before: Vec<f64> = s.messages().map(|m| m.scale).collect();
        s.iterate(&g, &o, &cfg).unwrap();
        for (a, b) in before.iter().zip(s.messages().map(|m| m.scale)) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    fn random_case(seed: u64, n: usize) -> (NetworkTopology, Vec<Observation>) {
        let mut rng = rng_from_seed(seed);
        let lo = min_connectivity(n);
        let c = lo + (1.0 - lo) * rng.random::<f64>();
        let g = generate_random_topology(n, c, &mut rng).unwrap();
        let o = (0..n)
            .map(|_| Observation::new(rng.random_range(-1e5..1e5), rng.random_range(0.0..6.0)))
            .collect();
        (g, o)
    }

    proptest! {
        #[test]
        fn node_order_does_not_matter(seed in any::<u64>(), n in 2usize..12, perm_seed in any::<u64>()) {
            let (g, o) = random_case(seed, n);
            let cfg = MpacConfig::uniform(n, 1.0, 1e12);
            let mut reference = init_mpac(&g, &cfg, 0.0).unwrap();
            let mut manual = reference.clone();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from_seed(perm_seed));
            for _ in 0..4 {
                reference.iterate(&g, &o, &cfg).unwrap();

                let mut next = manual.clone();
                for &node in &order {
                    let (f, t) = manual.update_node(node, o[node], &cfg).unwrap();
                    next.consensus_freq[node] = f;
                    next.consensus_phase[node] = t;
                    for &m in g.neighbors(node).unwrap() {
                        let msg = manual.compute_outgoing(&g, node, m, o[node], &cfg).unwrap();
                        let slot = g.neighbor_slot(m, node).unwrap();
                        next.inbox[m][slot] = msg;
                    }
                }
                next.iteration += 1;
                manual = next;
                prop_assert_eq!(&manual, &reference);
            }
        }

        #[test]
        fn estimates_stay_in_the_hull_of_inputs_and_prior(seed in any::<u64>(), n in 2usize..12, gamma_exp in 0i32..13) {
            let (g, o) = random_case(seed, n);
            let cfg = MpacConfig::uniform(n, 1.0, 10f64.powi(gamma_exp));
            let mut s = init_mpac(&g, &cfg, 0.0).unwrap();
            let f_lo = o.iter().map(|x| x.freq).fold(0.0, f64::min);
            let f_hi = o.iter().map(|x| x.freq).fold(0.0, f64::max);
            let t_lo = o.iter().map(|x| x.phase).fold(PI, f64::min);
            let t_hi = o.iter().map(|x| x.phase).fold(PI, f64::max);
            let slack = 1e-9 * (f_hi - f_lo).max(1.0);
            for _ in 0..30 {
                s.iterate(&g, &o, &cfg).unwrap();
                for i in 0..n {
                    prop_assert!(s.consensus_freq[i] >= f_lo - slack && s.consensus_freq[i] <= f_hi + slack);
                    prop_assert!(s.consensus_phase[i] >= t_lo - 1e-12 && s.consensus_phase[i] <= t_hi + 1e-12);
                }
                for m in s.messages() {
                    prop_assert!(m.mu_f.is_finite() && m.mu_theta.is_finite());
                    prop_assert!(m.scale > 0.0 && m.scale < cfg.gamma);
                }
            }
        }
    }
}
