//! Agent-based model of evaluative attention.
//!
//! Each step one evaluator arrives. With probability `entry_gamma` they
//! publish a fresh benchmark (authority 1, no debt); otherwise they reuse
//! incumbent `i` with probability proportional to
//! `A_i^alpha * exp(-beta * O_i)`, which bumps both its authority `A_i` and
//! its over-fit debt `O_i` by one. Every debt not bumped this step decays by
//! `decay_delta`. An entrant skips both the bump and the decay on its birth
//! step.
//!
//! Concentration is tracked as the HHI of authority after every step.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How unselected debts are forgiven each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayLaw {
    /// `O <- max(0, O - delta)`
    #[default]
    Subtractive,
    /// `O <- (1 - delta) * O`
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub matthew_alpha: f64,
    pub overfit_beta: f64,
    pub entry_gamma: f64,
    pub decay_delta: f64,
    pub steps: usize,
    pub initial_benchmarks: usize,
    pub seed: u64,
    pub decay_law: DecayLaw,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            matthew_alpha: 1.5,
            overfit_beta: 0.02,
            entry_gamma: 1e-4,
            decay_delta: 0.1,
            steps: 10_000,
            initial_benchmarks: 1,
            seed: DEFAULT_SEED,
            decay_law: DecayLaw::Subtractive,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::invalid(format!("{what} out of range: {v}")));
        if !(self.matthew_alpha.is_finite() && self.matthew_alpha > 0.0) {
            return bad("matthew_alpha (must be > 0)", self.matthew_alpha);
        }
        if !(self.overfit_beta.is_finite() && self.overfit_beta >= 0.0) {
            return bad("overfit_beta (must be >= 0)", self.overfit_beta);
        }
        if !(0.0..=1.0).contains(&self.entry_gamma) {
            return bad("entry_gamma (must lie in [0, 1])", self.entry_gamma);
        }
        if !(0.0..1.0).contains(&self.decay_delta) {
            return bad("decay_delta (must lie in [0, 1))", self.decay_delta);
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.initial_benchmarks == 0 {
            return Err(Error::invalid("initial_benchmarks must be at least 1"));
        }
        Ok(())
    }

    fn decay(&self, debt: f64) -> f64 {
        match self.decay_law {
            DecayLaw::Subtractive => (debt - self.decay_delta).max(0.0),
            DecayLaw::Multiplicative => debt * (1.0 - self.decay_delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub authority: Vec<f64>,
    pub debt: Vec<f64>,
    pub step: u64,
}

/// What happened on one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Entry,
    Reuse(usize),
}

impl SimState {
    pub fn new(initial_benchmarks: usize) -> Self {
        SimState {
            authority: vec![1.0; initial_benchmarks],
            debt: vec![0.0; initial_benchmarks],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.authority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authority.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.authority.is_empty() || self.authority.len() != self.debt.len() {
            return Err(Error::invalid("state needs equal, nonzero numbers of authorities and debts"));
        }
        if self.authority.iter().any(|a| !(*a >= 1.0)) || self.debt.iter().any(|o| !(*o >= 0.0)) {
            return Err(Error::invalid("state requires every A >= 1 and every O >= 0"));
        }
        Ok(())
    }

    /// Advances one step in place. Always consumes exactly two `u64` draws
    /// from `rng` (entry test, then selection), so the draws for step `t`
    /// occupy a fixed position of the stream.
    pub fn advance<R: Rng + ?Sized>(&mut self, config: &SimConfig, rng: &mut R) -> StepEvent {
        let u_entry: f64 = rng.random();
        let u_pick: f64 = rng.random();
        self.step += 1;

        if u_entry < config.entry_gamma {
            for o in &mut self.debt {
                *o = config.decay(*o);
            }
            self.authority.push(1.0);
            self.debt.push(0.0);
            return StepEvent::Entry;
        }

        let weights = unnormalized_weights(self, config.matthew_alpha, config.overfit_beta);
        let total: f64 = weights.iter().sum();
        debug_assert!(
            (weights.iter().map(|w| w / total).sum::<f64>() - 1.0).abs() < 1e-12,
            "selection distribution does not sum to 1"
        );
        let target = u_pick * total;
        let mut cumulative = 0.0;
        let mut chosen = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            cumulative += w;
            if target < cumulative {
                chosen = i;
                break;
            }
        }

        for (i, o) in self.debt.iter_mut().enumerate() {
            if i != chosen {
                *o = config.decay(*o);
            }
        }
        self.authority[chosen] += 1.0;
        self.debt[chosen] += 1.0;
        StepEvent::Reuse(chosen)
    }
}

/// `A_i^alpha * exp(-beta * O_i)` scaled by the largest such weight.
fn unnormalized_weights(state: &SimState, alpha: f64, beta: f64) -> Vec<f64> {
    let logs: Vec<f64> = state
        .authority
        .iter()
        .zip(&state.debt)
        .map(|(a, o)| alpha * a.ln() - beta * o)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - max).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDistribution {
    pub probabilities: Vec<f64>,
}

pub fn selection_probabilities(state: &SimState, matthew_alpha: f64, overfit_beta: f64) -> Result<SelectionDistribution> {
    state.validate()?;
    let w = unnormalized_weights(state, matthew_alpha, overfit_beta);
    let total: f64 = w.iter().sum();
    Ok(SelectionDistribution {
        probabilities: w.iter().map(|x| x / total).collect(),
    })
}

/// Functional form of [`SimState::advance`].
pub fn step<R: Rng + ?Sized>(state: &SimState, config: &SimConfig, rng: &mut R) -> SimState {
    let mut next = state.clone();
    next.advance(config, rng);
    next
}

/// Generator used by [`run`] for a given seed.
pub fn rng_for_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub hhi_per_step: Vec<f64>,
    pub n_benchmarks_per_step: Vec<usize>,
    pub entry_events: usize,
    pub final_state: SimState,
}

pub fn run(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = rng_for_seed(config.seed);
    let mut state = SimState::new(config.initial_benchmarks);
    let mut hhi_per_step = Vec::with_capacity(config.steps);
    let mut sizes = Vec::with_capacity(config.steps);
    let mut entry_events = 0;
    // authorities are integers, so both sums stay exact below 2^53
    let mut sum = config.initial_benchmarks as f64;
    let mut sum_sq = sum;
    for _ in 0..config.steps {
        match state.advance(config, &mut rng) {
            StepEvent::Entry => {
                entry_events += 1;
                sum += 1.0;
                sum_sq += 1.0;
            }
            StepEvent::Reuse(i) => {
                let a = state.authority[i];
                sum += 1.0;
                sum_sq += a * a - (a - 1.0) * (a - 1.0);
            }
        }
        hhi_per_step.push(sum_sq / (sum * sum));
        sizes.push(state.len());
    }
    Ok(Trajectory {
        hhi_per_step,
        n_benchmarks_per_step: sizes,
        entry_events,
        final_state: state,
    })
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;

/// Mean of the last `ceil(tail_fraction * len)` values.
pub fn tail_mean(values: &[f64], tail_fraction: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::invalid(format!("tail_fraction must lie in (0, 1], got {tail_fraction}")));
    }
    let exact = tail_fraction * values.len() as f64;
    if exact < 1.0 - 1e-9 {
        return Err(Error::invalid(format!(
            "tail_fraction {tail_fraction} covers less than one of {} steps",
            values.len()
        )));
    }
    // tolerate representation error such as 0.1 * 10_000 = 1000.000...1
    let count = ((exact - 1e-9).ceil() as usize).min(values.len());
    let tail = &values[values.len() - count..];
    Ok(tail.iter().sum::<f64>() / count as f64)
}

pub fn steady_state_hhi(traj: &Trajectory, tail_fraction: f64) -> Result<f64> {
    tail_mean(&traj.hhi_per_step, tail_fraction)
}

/// `step,n_benchmarks,hhi` with one row per step.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let io = |e| Error::io("<trajectory>", e);
    writeln!(w, "step,n_benchmarks,hhi").map_err(io)?;
    for (i, (h, n)) in traj.hhi_per_step.iter().zip(&traj.n_benchmarks_per_step).enumerate() {
        writeln!(w, "{},{},{}", i + 1, n, h).map_err(io)?;
    }
    Ok(())
}
