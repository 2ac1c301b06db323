//! A concrete population of relays with per-relay reward and cost.
//!
//! The homogeneous game, the multi-class game and the private-cost game all
//! reduce to this representation for the round simulator, the learner and
//! the brute-force oracle.

use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::error::{check_finite, invalid, Result};

/// What a silent relay earns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SilentPayoff {
    /// Negation of what an active relay earns.
    ZeroSum,
    /// Constant `-alpha` whatever the others do.
    FixedRegret { alpha: f64 },
    /// Nothing gained, nothing lost.
    Zero,
}

/// One relay: the reward it is offered per first delivery, its energy cost
/// per time unit and the device class it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relay {
    pub reward: f64,
    pub cost: f64,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub contact: ContactParams,
    pub relays: Vec<Relay>,
    pub silent: SilentPayoff,
}

impl Population {
    pub fn new(contact: ContactParams, relays: Vec<Relay>, silent: SilentPayoff) -> Result<Self> {
        contact.validate()?;
        if relays.is_empty() {
            return Err(invalid("relays", "population is empty"));
        }
        for r in &relays {
            check_finite("reward", r.reward)?;
            check_finite("cost", r.cost)?;
            if r.reward < 0.0 || r.cost < 0.0 {
                return Err(invalid("relays", "rewards and costs must be non-negative"));
            }
        }
        if let SilentPayoff::FixedRegret { alpha } = silent {
            check_finite("alpha", alpha)?;
            if alpha < 0.0 {
                return Err(invalid("alpha", format!("must be >= 0, got {alpha}")));
            }
        }
        Ok(Self { contact, relays, silent })
    }

    pub fn len(&self) -> usize {
        self.relays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relays.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.relays.iter().map(|r| r.class + 1).max().unwrap_or(0)
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes()];
        for r in &self.relays {
            sizes[r.class] += 1;
        }
        sizes
    }

    /// Largest reward on offer; it bounds how fast payoffs move with the
    /// other relays' behaviour.
    pub fn max_reward(&self) -> f64 {
        self.relays.iter().map(|r| r.reward).fold(0.0, f64::max)
    }

    /// Expected payoff of relay `i` when `k >= 1` relays, itself included,
    /// are active: `n_s r_i P_succ(T, k) - g_i tau`.
    pub fn active_utility(&self, i: usize, k: usize) -> f64 {
        let relay = &self.relays[i];
        self.contact.num_sources_f64() * relay.reward * self.contact.p_succ(k)
            - relay.cost * self.contact.tau
    }

    /// Payoff of silent relay `i` in a profile with `k` active relays. Under
    /// [`SilentPayoff::ZeroSum`] nobody is active when `k = 0` and the payoff
    /// is 0.
    pub fn silent_utility(&self, i: usize, k: usize) -> f64 {
        match self.silent {
            SilentPayoff::ZeroSum if k == 0 => 0.0,
            SilentPayoff::ZeroSum => -self.active_utility(i, k),
            SilentPayoff::FixedRegret { alpha } => -alpha,
            SilentPayoff::Zero => 0.0,
        }
    }

    /// Payoff of silent relay `i` when `k_others` of the other relays are
    /// active, as used in mixed-strategy expectations. Under
    /// [`SilentPayoff::ZeroSum`] the silent relay is charged the negation of
    /// what it would have earned by transmitting, `-U_i(T, k_others + 1)`.
    pub fn silent_counterfactual(&self, i: usize, k_others: usize) -> f64 {
        match self.silent {
            SilentPayoff::ZeroSum => -self.active_utility(i, k_others + 1),
            SilentPayoff::FixedRegret { alpha } => -alpha,
            SilentPayoff::Zero => 0.0,
        }
    }
}
