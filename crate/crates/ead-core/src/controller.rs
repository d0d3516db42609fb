//! The switching state machine: rolling entropy window, threshold
//! comparison, and the minimum-duration gate that prevents oscillation.
//!
//! Decision rule, evaluated once per generated token:
//!
//! * active = Small, mean entropy > tau, and c >= min_duration -> switch to Large
//! * active = Large, mean entropy <= tau, and c >= min_duration -> switch to Small
//! * otherwise -> stay
//!
//! where `c` counts tokens generated since the last switch. Equality
//! sits on the stay-small side: a mean exactly at the threshold keeps
//! (or hands back to) the small model.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logits::EntropyBits;
use crate::metrics::UsageStats;
use crate::serde_util::float_or_inf;

/// Which of the two models is generating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Small,
    Large,
}

impl ModelRole {
    pub fn flipped(self) -> ModelRole {
        match self {
            ModelRole::Small => ModelRole::Large,
            ModelRole::Large => ModelRole::Small,
        }
    }
}

impl std::fmt::Display for ModelRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelRole::Small => write!(f, "small"),
            ModelRole::Large => write!(f, "large"),
        }
    }
}

/// Switching parameters.
///
/// `tau` is in bits and may be `f64::INFINITY` (spelled `inf` in config
/// files), which makes the large model unreachable from a small start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    /// Entropy threshold in bits.
    #[serde(with = "float_or_inf")]
    pub tau: f64,
    /// Rolling window size `w` for entropy smoothing.
    pub window_size: usize,
    /// Minimum tokens between switches (`d_min`).
    pub min_duration: usize,
    /// Model that generates the first token.
    pub initial_role: ModelRole,
    /// Clear the entropy window when a switch happens. Off by default:
    /// the window is shared across both models, so the mean mixes
    /// entropies from before and after a switch.
    #[serde(default)]
    pub reset_window_on_switch: bool,
}

impl SwitchConfig {
    /// Defaults: smoothing window of 5, minimum duration of 10 tokens,
    /// starting on the small model.
    pub fn new(tau: f64) -> Self {
        SwitchConfig {
            tau,
            window_size: 5,
            min_duration: 10,
            initial_role: ModelRole::Small,
            reset_window_on_switch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tau must be >= 0 (or inf), got {}",
                self.tau
            )));
        }
        if self.window_size < 1 {
            return Err(Error::InvalidConfig("window_size must be >= 1".into()));
        }
        if self.min_duration < 1 {
            return Err(Error::InvalidConfig("min_duration must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fixed-capacity window over the most recent entropies.
#[derive(Debug, Clone)]
pub struct EntropyWindow {
    values: VecDeque<f64>,
    capacity: usize,
}

impl EntropyWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be >= 1");
        EntropyWindow {
            values: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Append `h` and return the arithmetic mean of the last
    /// `min(capacity, count)` entries. The mean is recomputed from the
    /// stored values each call, so it is exactly the mean of what is in
    /// the window — no incremental-sum drift.
    pub fn push_and_mean(&mut self, h: EntropyBits) -> EntropyBits {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(h.value());
        let sum: f64 = self.values.iter().sum();
        EntropyBits::new(sum / self.values.len() as f64).expect("mean of valid entropies")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }
}

/// What the automaton decided at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stay,
    SwitchToLarge,
    SwitchToSmall,
}

impl Decision {
    pub fn is_switch(self) -> bool {
        !matches!(self, Decision::Stay)
    }
}

/// Mutable per-stream switching state. Owned by exactly one generation
/// stream; never shared.
#[derive(Debug, Clone)]
pub struct ControllerState {
    active: ModelRole,
    tokens_since_switch: usize,
    window: EntropyWindow,
    switch_count: usize,
}

impl ControllerState {
    pub fn new(cfg: &SwitchConfig) -> Self {
        ControllerState {
            active: cfg.initial_role,
            tokens_since_switch: 0,
            window: EntropyWindow::new(cfg.window_size),
            switch_count: 0,
        }
    }

    pub fn active(&self) -> ModelRole {
        self.active
    }

    /// Tokens generated since the last switch (or since the start).
    pub fn tokens_since_switch(&self) -> usize {
        self.tokens_since_switch
    }

    pub fn switch_count(&self) -> usize {
        self.switch_count
    }

    /// Advance by one token whose pre-temperature entropy was `h`:
    /// push into the window, count the token for the model that just
    /// produced it, then evaluate the switch rule. Returns the decision
    /// and the rolling mean it was based on.
    pub fn step(&mut self, h: EntropyBits, cfg: &SwitchConfig) -> (Decision, EntropyBits) {
        let mean = self.window.push_and_mean(h);
        self.tokens_since_switch += 1;
        let decision = decide(self.active, self.tokens_since_switch, mean, cfg);
        if decision.is_switch() {
            self.active = self.active.flipped();
            self.tokens_since_switch = 0;
            self.switch_count += 1;
            if cfg.reset_window_on_switch {
                self.window.clear();
            }
        }
        (decision, mean)
    }
}

/// The pure decision rule. Does not mutate anything.
pub fn decide(active: ModelRole, c: usize, h_bar: EntropyBits, cfg: &SwitchConfig) -> Decision {
    if c < cfg.min_duration {
        return Decision::Stay;
    }
    match active {
        ModelRole::Small if h_bar.value() > cfg.tau => Decision::SwitchToLarge,
        ModelRole::Large if h_bar.value() <= cfg.tau => Decision::SwitchToSmall,
        _ => Decision::Stay,
    }
}

/// Run the automaton offline over a recorded entropy sequence.
///
/// `schedule[i]` is the role that produced token `i`; it matches the
/// roles a full generation run records when it observes the same
/// per-step entropies under the same config.
pub fn replay(entropies: &[f64], cfg: &SwitchConfig) -> Result<(Vec<ModelRole>, UsageStats)> {
    cfg.validate()?;
    if entropies.is_empty() {
        return Err(Error::InvalidInput("empty entropy trace".into()));
    }
    let mut state = ControllerState::new(cfg);
    let mut schedule = Vec::with_capacity(entropies.len());
    for &h in entropies {
        schedule.push(state.active());
        state.step(EntropyBits::new(h)?, cfg);
    }
    let small = schedule.iter().filter(|r| **r == ModelRole::Small).count();
    let large = schedule.len() - small;
    let stats = UsageStats::from_counts(small, large, state.switch_count())?;
    Ok((schedule, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: f64) -> EntropyBits {
        EntropyBits::new(v).unwrap()
    }

    #[test]
    fn window_mean_single_element() {
        let mut w = EntropyWindow::new(5);
        assert_eq!(w.push_and_mean(bits(1.0)).value(), 1.0);
    }

    #[test]
    fn window_mean_fewer_than_capacity() {
        let mut w = EntropyWindow::new(5);
        w.push_and_mean(bits(1.0));
        w.push_and_mean(bits(2.0));
        assert_eq!(w.push_and_mean(bits(3.0)).value(), 2.0);
    }

    #[test]
    fn window_mean_evicts_oldest() {
        let mut w = EntropyWindow::new(2);
        w.push_and_mean(bits(1.0));
        w.push_and_mean(bits(2.0));
        // Only the last two (2.0, 4.0) count.
        assert_eq!(w.push_and_mean(bits(4.0)).value(), 3.0);
    }

    #[test]
    fn decide_switch_to_large() {
        let cfg = SwitchConfig {
            tau: 0.5,
            window_size: 5,
            min_duration: 10,
            initial_role: ModelRole::Small,
            reset_window_on_switch: false,
        };
        assert_eq!(
            decide(ModelRole::Small, 10, bits(0.7), &cfg),
            Decision::SwitchToLarge
        );
    }

    #[test]
    fn decide_gated_by_min_duration() {
        let cfg = SwitchConfig {
            tau: 0.5,
            window_size: 5,
            min_duration: 10,
            initial_role: ModelRole::Small,
            reset_window_on_switch: false,
        };
        assert_eq!(decide(ModelRole::Small, 9, bits(0.7), &cfg), Decision::Stay);
    }

    #[test]
    fn decide_boundary_equality_goes_small() {
        let cfg = SwitchConfig {
            tau: 0.5,
            window_size: 5,
            min_duration: 10,
            initial_role: ModelRole::Large,
            reset_window_on_switch: false,
        };
        // H-bar == tau uses <=, so the large model hands back.
        assert_eq!(
            decide(ModelRole::Large, 10, bits(0.5), &cfg),
            Decision::SwitchToSmall
        );
        assert_eq!(decide(ModelRole::Large, 10, bits(0.6), &cfg), Decision::Stay);
    }

    #[test]
    fn step_switches_after_gate_opens() {
        let cfg = SwitchConfig {
            tau: 0.5,
            window_size: 1,
            min_duration: 3,
            initial_role: ModelRole::Small,
            reset_window_on_switch: false,
        };
        let mut st = ControllerState::new(&cfg);
        let d1 = st.step(bits(0.9), &cfg).0;
        let d2 = st.step(bits(0.9), &cfg).0;
        let d3 = st.step(bits(0.9), &cfg).0;
        assert_eq!([d1, d2, d3], [Decision::Stay, Decision::Stay, Decision::SwitchToLarge]);
        assert_eq!(st.active(), ModelRole::Large);
        assert_eq!(st.tokens_since_switch(), 0);
        assert_eq!(st.switch_count(), 1);
    }

    #[test]
    fn infinite_tau_never_switches_from_small() {
        let cfg = SwitchConfig::new(f64::INFINITY);
        let mut st = ControllerState::new(&cfg);
        for _ in 0..100 {
            let (d, _) = st.step(bits(7.9), &cfg);
            assert_eq!(d, Decision::Stay);
        }
        assert_eq!(st.active(), ModelRole::Small);
        assert_eq!(st.switch_count(), 0);
    }

    #[test]
    fn zero_tau_switches_once_and_stays_large() {
        let cfg = SwitchConfig {
            tau: 0.0,
            window_size: 1,
            min_duration: 2,
            initial_role: ModelRole::Small,
            reset_window_on_switch: false,
        };
        let mut st = ControllerState::new(&cfg);
        let mut decisions = Vec::new();
        for _ in 0..10 {
            decisions.push(st.step(bits(0.4), &cfg).0);
        }
        assert_eq!(decisions[0], Decision::Stay);
        assert_eq!(decisions[1], Decision::SwitchToLarge);
        assert!(decisions[2..].iter().all(|d| *d == Decision::Stay));
        assert_eq!(st.active(), ModelRole::Large);
        assert_eq!(st.switch_count(), 1);
    }

    #[test]
    fn replay_all_below_tau_stays_small() {
        let cfg = SwitchConfig::new(0.5);
        let (schedule, stats) = replay(&[0.0; 20], &cfg).unwrap();
        assert!(schedule.iter().all(|r| *r == ModelRole::Small));
        assert_eq!(stats.switches, 0);
        assert_eq!(stats.tokens_small, 20);
    }

    #[test]
    fn replay_step_pulse_schedule() {
        // Hand-run of the automaton on [1 x5, 0 x5] bits with tau=0.5,
        // w=1, d_min=2, starting small:
        //   i0 stay (c=1), i1 c=2 mean 1 > 0.5 -> to large (i0, i1 small),
        //   i2..i4 large (mean 1, stays), i5 mean 0 <= 0.5, c=4 -> to
        //   small (i2..i5 large), i6..i9 small (mean 0 never > tau).
        let trace = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let cfg = SwitchConfig {
            tau: 0.5,
            window_size: 1,
            min_duration: 2,
            initial_role: ModelRole::Small,
            reset_window_on_switch: false,
        };
        let (schedule, stats) = replay(&trace, &cfg).unwrap();
        use ModelRole::{Large as L, Small as S};
        assert_eq!(schedule, vec![S, S, L, L, L, L, S, S, S, S]);
        assert_eq!(stats.switches, 2);
        assert_eq!(stats.tokens_small, 6);
        assert_eq!(stats.tokens_large, 4);
    }

    #[test]
    fn replay_short_trace_never_opens_gate() {
        let cfg = SwitchConfig {
            tau: 0.0,
            window_size: 1,
            min_duration: 50,
            initial_role: ModelRole::Large,
            reset_window_on_switch: false,
        };
        let (schedule, stats) = replay(&[3.0; 10], &cfg).unwrap();
        assert!(schedule.iter().all(|r| *r == ModelRole::Large));
        assert_eq!(stats.switches, 0);
    }

    #[test]
    fn replay_rejects_empty_trace() {
        let cfg = SwitchConfig::new(0.5);
        assert!(matches!(replay(&[], &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SwitchConfig::new(0.5);
        cfg.window_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SwitchConfig::new(-0.1);
        assert!(cfg.validate().is_err());
        cfg = SwitchConfig::new(0.5);
        cfg.min_duration = 0;
        assert!(cfg.validate().is_err());
        assert!(SwitchConfig::new(f64::INFINITY).validate().is_ok());
        assert!(SwitchConfig::new(0.0).validate().is_ok());
    }
}
