//! Delivery probabilities of the relay process and the source-side design
//! equations that turn a delivery target into a relay count and a reward.
//!
//! Inter-meeting times between any pair of nodes are exponential with rate
//! `lambda`. Under two-hop routing a relay needs one meeting with the source
//! and one with the destination, so its delivery time is Gamma(2, lambda) and
//! it fails to deliver within the lifetime `tau` with probability
//! `Q = (1 + lambda * tau) * exp(-lambda * tau)`.
//!
//! Powers `Q^k` are evaluated as `exp(k ln Q)` and `1 - Q^k` as
//! `-expm1(k ln Q)`, so the probabilities stay strictly monotone in `k` long
//! after `Q^k` would underflow.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, Error, Result};

/// How a relay's copy reaches the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Routing {
    /// Source -> relay -> destination; delivery time is the sum of two
    /// exponential inter-meeting times.
    #[default]
    TwoHop,
    /// The relay already carries the message; one meeting suffices.
    OneHop,
}

/// Mobility and rewarding environment shared by every game variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// Pairwise meeting rate (1 / time unit).
    pub lambda: f64,
    /// Message lifetime (time units).
    pub tau: f64,
    /// Number of source-destination pairs `n_s`.
    pub num_sources: u32,
    #[serde(default)]
    pub routing: Routing,
}

impl ContactParams {
    pub fn new(lambda: f64, tau: f64, num_sources: u32) -> Result<Self> {
        let params = Self { lambda, tau, num_sources, routing: Routing::TwoHop };
        params.validate()?;
        Ok(params)
    }

    /// `lambda = 0.03`, `tau = 100`, one source: the setting used by every
    /// figure preset.
    pub fn reference() -> Self {
        Self { lambda: 0.03, tau: 100.0, num_sources: 1, routing: Routing::TwoHop }
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.routing = routing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("lambda", self.lambda)?;
        check_finite("tau", self.tau)?;
        if self.lambda <= 0.0 {
            return Err(invalid("lambda", format!("must be > 0, got {}", self.lambda)));
        }
        if self.tau <= 0.0 {
            return Err(invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        if self.num_sources == 0 {
            return Err(invalid("num_sources", "must be >= 1"));
        }
        Ok(())
    }

    pub fn num_sources_f64(&self) -> f64 {
        f64::from(self.num_sources)
    }

    /// `ln Q`, always <= 0.
    pub fn ln_failure_prob(&self) -> f64 {
        let x = self.lambda * self.tau;
        match self.routing {
            Routing::TwoHop => x.ln_1p() - x,
            Routing::OneHop => -x,
        }
    }

    /// Probability `Q` that a single active relay fails to deliver before the
    /// message expires.
    pub fn failure_prob(&self) -> f64 {
        self.ln_failure_prob().exp()
    }

    /// `D_succ(k) = 1 - Q^k`: probability that at least one of `k` active
    /// relays delivers in time.
    pub fn delivery_prob(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        -(k as f64 * self.ln_failure_prob()).exp_m1()
    }

    /// `P_succ(T, k) = (1 - Q^k) / k`: probability that a given relay among
    /// `k` active ones is the first to deliver.
    pub fn success_prob_first(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::Domain(
                "success probability needs at least one active relay".into(),
            ));
        }
        Ok(self.p_succ(k))
    }

    /// Unchecked `P_succ(T, k)` for `k >= 1`.
    pub(crate) fn p_succ(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        self.delivery_prob(k) / k as f64
    }

    /// Relay counts meeting `target`, computed both ways; see [`TargetActives`].
    pub fn target_actives(&self, target: &DeliveryTarget) -> Result<TargetActives> {
        target.validate()?;
        let ln_q = self.ln_failure_prob();
        if ln_q == 0.0 {
            return Err(Error::Domain("relays never deliver (Q = 1)".into()));
        }
        let ratio = (-target.d_succ_threshold).ln_1p() / ln_q;
        // Trim float noise so exact integer ratios are not pushed up a step.
        let direct = (ratio * (1.0 - 1e-9)).ceil().max(1.0) as usize;
        let bound = 2.0 * ratio * (1.0 - 1e-9);
        let mut quadratic = 1usize;
        while ((quadratic * (quadratic + 1)) as f64) < bound {
            quadratic += 1;
        }
        Ok(TargetActives { direct, quadratic })
    }

    /// Reward making the `psi`-th active relay exactly break even:
    /// `n_s * r * P_succ(T, psi) = g * tau`.
    pub fn reward_for_target(&self, g: f64, psi: usize) -> Result<f64> {
        check_finite("g", g)?;
        if g <= 0.0 {
            return Err(invalid("g", format!("must be > 0, got {g}")));
        }
        if psi == 0 {
            return Err(invalid("psi", "must be >= 1"));
        }
        Ok(g * self.tau / (self.num_sources_f64() * self.p_succ(psi)))
    }
}

/// Delivery requirement `D_succ >= d_succ_threshold` a source wants to meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryTarget {
    pub d_succ_threshold: f64,
}

impl DeliveryTarget {
    pub fn new(d_succ_threshold: f64) -> Result<Self> {
        let t = Self { d_succ_threshold };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let d = self.d_succ_threshold;
        if !(d > 0.0 && d < 1.0) {
            return Err(invalid("d_succ_threshold", format!("must lie in (0, 1), got {d}")));
        }
        Ok(())
    }
}

/// Which inversion of the delivery target to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetRule {
    /// Smallest `k` with `1 - Q^k >= D_th`.
    #[default]
    Direct,
    /// Smallest `k` with `k (k + 1) >= 2 log(1 - D_th) / log Q`.
    Quadratic,
}

/// The two relay-count targets for one delivery requirement. They generally
/// disagree; `direct` inverts the delivery probability itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TargetActives {
    pub direct: usize,
    pub quadratic: usize,
}

impl TargetActives {
    pub fn select(&self, rule: TargetRule) -> usize {
        match rule {
            TargetRule::Direct => self.direct,
            TargetRule::Quadratic => self.quadratic,
        }
    }
}
