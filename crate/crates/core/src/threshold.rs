//! Relays with privately known energy costs drawn from a public
//! distribution `F`. A relay transmits iff its cost is at most a common
//! threshold `g_th`, the zero of
//! `Theta(g) = E[n_s r P_succ(T, K + 1)] - g tau` with
//! `K ~ Binomial(N - 1, F(g))`.

use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::dist;
use crate::error::{check_finite, invalid, Error, Result};
use crate::game::Boundary;
use crate::population::{Population, Relay, SilentPayoff};
use crate::roots::bisect;

const THRESHOLD_TOL: f64 = 1e-12;

/// Distribution of relay energy costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
#[serde(deny_unknown_fields)]
pub enum CostDistribution {
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    /// Observed costs, kept sorted; the CDF is the right-continuous step
    /// function `#{samples <= g} / len`.
    Empirical { samples: Vec<f64> },
}

impl CostDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = Self::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        let d = Self::Exponential { mean };
        d.validate()?;
        Ok(d)
    }

    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        samples.sort_by(f64::total_cmp);
        let d = Self::Empirical { samples };
        d.validate()?;
        Ok(d)
    }

    /// Read one cost per line; blank lines and lines starting with `#` are
    /// skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Config(format!("{}:{}: not a number: {line:?}", path.display(), i + 1))
            })?;
            samples.push(v);
        }
        Self::empirical(samples)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform { lo, hi } => {
                check_finite("lo", *lo)?;
                check_finite("hi", *hi)?;
                if !(*lo >= 0.0 && hi > lo) {
                    return Err(invalid("costs", format!("uniform needs 0 <= lo < hi, got [{lo}, {hi}]")));
                }
            }
            Self::Exponential { mean } => {
                check_finite("mean", *mean)?;
                if *mean <= 0.0 {
                    return Err(invalid("mean", format!("must be > 0, got {mean}")));
                }
            }
            Self::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(invalid("samples", "empirical distribution needs at least one cost"));
                }
                if samples.iter().any(|g| !g.is_finite() || *g < 0.0) {
                    return Err(invalid("samples", "costs must be finite and non-negative"));
                }
                if samples.iter().all(|&g| g == 0.0) {
                    return Err(invalid("samples", "mean cost must be > 0"));
                }
                if samples.windows(2).any(|w| w[0] > w[1]) {
                    return Err(invalid("samples", "must be sorted"));
                }
            }
        }
        Ok(())
    }

    /// `F(g) = P(cost <= g)`.
    pub fn cdf(&self, g: f64) -> f64 {
        match self {
            Self::Uniform { lo, hi } => ((g - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Exponential { mean } => {
                if g <= 0.0 {
                    0.0
                } else {
                    -(-g / mean).exp_m1()
                }
            }
            Self::Empirical { samples } => {
                samples.partition_point(|&s| s <= g) as f64 / samples.len() as f64
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Exponential { mean } => *mean,
            Self::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    /// Draw one cost by inversion.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = crate::sim::uniform01(rng);
        match self {
            Self::Uniform { lo, hi } => lo + u * (hi - lo),
            Self::Exponential { mean } => -mean * (-u).ln_1p(),
            Self::Empirical { samples } => samples[((u * samples.len() as f64) as usize).min(samples.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGameSpec {
    pub n: usize,
    pub reward: f64,
    pub contact: ContactParams,
    pub costs: CostDistribution,
}

/// Threshold equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdEq {
    pub g_th: f64,
    /// `F(g_th)`, the probability that a relay transmits.
    pub activation_prob: f64,
    /// Set when no relay (`NoneActive`) or every relay (`AllActive`) is
    /// expected to transmit.
    pub boundary: Option<Boundary>,
}

impl ThresholdGameSpec {
    pub fn new(n: usize, reward: f64, contact: ContactParams, costs: CostDistribution) -> Result<Self> {
        let spec = Self { n, reward, contact, costs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.contact.validate()?;
        self.costs.validate()?;
        check_finite("reward", self.reward)?;
        if self.n < 2 {
            return Err(invalid("n", format!("needs at least 2 relays, got {}", self.n)));
        }
        if self.reward <= 0.0 {
            return Err(invalid("reward", format!("must be > 0, got {}", self.reward)));
        }
        Ok(())
    }

    /// `Theta(g)`: expected payoff of transmitting for a relay of cost `g`
    /// when every other relay transmits iff its own cost is at most `g`.
    pub fn theta(&self, g: f64) -> f64 {
        let pmf = dist::binomial(self.n - 1, self.costs.cdf(g));
        let ns_r = self.contact.num_sources_f64() * self.reward;
        ns_r * dist::expect(&pmf, |k| self.contact.p_succ(k + 1)) - g * self.contact.tau
    }

    /// Largest cost at which a lone active relay still breaks even; the
    /// threshold cannot exceed it.
    pub fn max_threshold(&self) -> f64 {
        self.contact.num_sources_f64() * self.reward * self.contact.p_succ(1) / self.contact.tau
    }

    pub fn solve_threshold(&self) -> Result<ThresholdEq> {
        let hi = self.max_threshold();
        let g_th = if self.theta(hi) >= 0.0 {
            hi
        } else {
            bisect(|g| self.theta(g), 0.0, hi, THRESHOLD_TOL)?
        };
        let activation_prob = self.costs.cdf(g_th);
        let boundary = if activation_prob == 0.0 {
            Some(Boundary::NoneActive)
        } else if activation_prob == 1.0 {
            Some(Boundary::AllActive)
        } else {
            None
        };
        Ok(ThresholdEq { g_th, activation_prob, boundary })
    }

    /// Expected number of transmitting relays at the threshold equilibrium.
    pub fn expected_actives(&self) -> Result<f64> {
        Ok(self.n as f64 * self.solve_threshold()?.activation_prob)
    }

    /// A concrete population with costs drawn from the distribution.
    pub fn sample_population<R: RngCore + ?Sized>(&self, rng: &mut R) -> Population {
        let relays = (0..self.n)
            .map(|_| Relay { reward: self.reward, cost: self.costs.sample(rng), class: 0 })
            .collect();
        Population { contact: self.contact, relays, silent: SilentPayoff::Zero }
    }
}

/// Reward a source would set knowing only the mean cost `mu`:
/// `n_s r P_succ(T, psi) = mu tau`.
pub fn reward_from_mean(contact: &ContactParams, mu: f64, psi: usize) -> Result<f64> {
    contact.reward_for_target(mu, psi)
}

/// Number of relays a reward `reward` incites when every cost equals `mu`:
/// the largest `k` with `n_s r P_succ(T, k) >= mu tau`, capped at `cap`.
pub fn incited_actives(contact: &ContactParams, mu: f64, reward: f64, cap: usize) -> usize {
    let ns_r = contact.num_sources_f64() * reward;
    let cost = mu * contact.tau;
    (1..=cap).take_while(|&k| ns_r * contact.p_succ(k) >= cost).last().unwrap_or(0)
}
