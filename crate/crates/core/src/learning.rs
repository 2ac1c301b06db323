//! Distributed reinforcement learning of the activation decision.
//!
//! Each relay keeps a perception `x = (x_T, x_S)` of what each action pays,
//! activates with the logit probability `sigma_T = e^{beta x_T} /
//! (e^{beta x_T} + e^{beta x_S})`, observes a payoff for the action it took
//! and moves that action's perception towards it with step `gamma_k`.
//! Payoffs are either the exact expectation `G_ia(x)` given everyone's
//! current mixed strategy, or a Monte Carlo round from [`crate::sim`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{invalid, Result};
use crate::population::{Population, SilentPayoff};
use crate::sim::{self, Action};

/// Perceived payoffs of transmitting (`t`) and staying silent (`s`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Perception {
    pub t: f64,
    pub s: f64,
}

impl Perception {
    pub fn get(&self, action: Action) -> f64 {
        match action {
            Action::Active => self.t,
            Action::Silent => self.s,
        }
    }

    fn set(&mut self, action: Action, value: f64) {
        match action {
            Action::Active => self.t = value,
            Action::Silent => self.s = value,
        }
    }
}

/// Activation probability under the logit rule. `beta = +inf` is the
/// hard-max limit: the action with the larger perception is played surely
/// and a tie is broken by a fair coin.
pub fn logit_policy(x: Perception, beta: f64) -> f64 {
    if beta == f64::INFINITY {
        return if x.t > x.s {
            1.0
        } else if x.t < x.s {
            0.0
        } else {
            0.5
        };
    }
    let d = beta * (x.t - x.s);
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `x_a <- (1 - gamma) x_a + gamma u` for the chosen action `a`; the other
/// entry is returned untouched.
pub fn update_perception(x: Perception, action: Action, payoff: f64, gamma: f64) -> Perception {
    let mut next = x;
    next.set(action, (1.0 - gamma) * x.get(action) + gamma * payoff);
    next
}

/// The same update written as `x <- x + gamma (w - x)`, where `w` is the
/// payoff for the chosen action and the current perception otherwise.
pub fn update_perception_incremental(x: Perception, action: Action, payoff: f64, gamma: f64) -> Perception {
    let w = |a: Action| if a == action { payoff } else { x.get(a) };
    Perception { t: x.t + gamma * (w(Action::Active) - x.t), s: x.s + gamma * (w(Action::Silent) - x.s) }
}

/// Step-size sequence `gamma_k`, `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
#[serde(deny_unknown_fields)]
pub enum StepRule {
    /// `1 / k`.
    Reciprocal,
    /// `1 / (1 + k ln k)`.
    ReciprocalLog,
    /// `k^(-exponent)` with `exponent` in (1/2, 1].
    Power { exponent: f64 },
}

impl StepRule {
    pub fn gamma(self, k: u64) -> f64 {
        let kf = k as f64;
        match self {
            StepRule::Reciprocal => 1.0 / kf,
            StepRule::ReciprocalLog => 1.0 / (1.0 + kf * kf.ln()),
            StepRule::Power { exponent } => kf.powf(-exponent),
        }
    }

    fn validate(self) -> Result<()> {
        if let StepRule::Power { exponent } = self {
            if !(exponent > 0.5 && exponent <= 1.0) {
                return Err(invalid("step.exponent", format!("must lie in (0.5, 1], got {exponent}")));
            }
        }
        Ok(())
    }
}

/// Which counter `k` feeds the step rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepClock {
    /// The round index.
    #[default]
    Global,
    /// How many times this relay has updated this action's perception.
    PerAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffMode {
    /// Expected payoff `G_ia(x)` of the chosen action.
    #[default]
    Exact,
    /// Realized payoff of a simulated round.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateForm {
    /// `(1 - gamma) x + gamma u`.
    #[default]
    Convex,
    /// `x + gamma (w - x)`.
    Incremental,
}

/// Geometric increase of the temperature from `start` to `end` over the
/// first `rounds` rounds; afterwards the configured `beta` applies (which
/// may be infinite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anneal {
    pub start: f64,
    pub end: f64,
    pub rounds: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Logit temperature; `inf` selects hard-max play.
    pub beta: f64,
    pub anneal: Option<Anneal>,
    pub step: StepRule,
    pub clock: StepClock,
    pub eps_stop: f64,
    pub max_rounds: u64,
    /// The stopping test is not applied before this round.
    pub min_rounds: u64,
    pub payoff: PayoffMode,
    pub update_form: UpdateForm,
    /// Keep per-relay rows every this many rounds (0: none).
    pub record_every: u64,
    /// Include perceptions in per-relay rows every this many rounds (0: never).
    pub perception_stride: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            anneal: None,
            step: StepRule::Reciprocal,
            clock: StepClock::Global,
            eps_stop: 1e-6,
            max_rounds: 100_000,
            min_rounds: 10,
            payoff: PayoffMode::Exact,
            update_form: UpdateForm::Convex,
            record_every: 0,
            perception_stride: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || self.beta.is_nan() {
            return Err(invalid("beta", format!("must be > 0, got {}", self.beta)));
        }
        if let Some(a) = self.anneal {
            if !(a.start > 0.0 && a.end >= a.start && a.end.is_finite()) {
                return Err(invalid("anneal", "needs 0 < start <= end < inf"));
            }
        }
        self.step.validate()?;
        if !(self.eps_stop > 0.0) {
            return Err(invalid("eps_stop", "must be > 0"));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be >= 1"));
        }
        Ok(())
    }

    /// Temperature used in round `k >= 1`.
    pub fn beta_at(&self, k: u64) -> f64 {
        match self.anneal {
            Some(a) if k <= a.rounds => {
                let frac = if a.rounds <= 1 { 1.0 } else { (k - 1) as f64 / (a.rounds - 1) as f64 };
                a.start * (a.end / a.start).powf(frac)
            }
            _ => self.beta,
        }
    }
}

/// `G_ia` for every relay given everyone's activation probability: the
/// expected payoff of each action when the other relays activate
/// independently with probabilities `probs`.
pub fn payoff_map_from_probs(pop: &Population, probs: &[f64]) -> Vec<[f64; 2]> {
    let full = dist::poisson_binomial(probs);
    (0..pop.len())
        .map(|i| {
            let others = dist::remove_trial(&full, probs[i]);
            let active = dist::expect(&others, |k| pop.active_utility(i, k + 1));
            let silent = match pop.silent {
                SilentPayoff::ZeroSum => -active,
                SilentPayoff::FixedRegret { alpha } => -alpha,
                SilentPayoff::Zero => 0.0,
            };
            [active, silent]
        })
        .collect()
}

/// `G_ia(x)`: expected payoff map at perceptions `x` and temperature `beta`.
/// Entry `[0]` is transmitting, `[1]` staying silent.
pub fn expected_payoff_map(pop: &Population, x: &[Perception], beta: f64) -> Vec<[f64; 2]> {
    let probs: Vec<f64> = x.iter().map(|&p| logit_policy(p, beta)).collect();
    payoff_map_from_probs(pop, &probs)
}

/// `max_ia |G_ia(x) - x_ia|`.
pub fn fixed_point_residual(pop: &Population, x: &[Perception], beta: f64) -> f64 {
    expected_payoff_map(pop, x, beta)
        .iter()
        .zip(x)
        .map(|(g, p)| (g[0] - p.t).abs().max((g[1] - p.s).abs()))
        .fold(0.0, f64::max)
}

/// `1 / (n_s r) - beta` with the largest reward on offer; positive when the
/// expected-payoff map is a max-norm contraction.
pub fn contraction_margin(pop: &Population, beta: f64) -> f64 {
    1.0 / (pop.contact.num_sources_f64() * pop.max_reward()) - beta
}

/// Approximation guarantee of a logit profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonBound {
    pub value: f64,
    /// False for hard-max play, where the bound does not apply and 0 is
    /// reported.
    pub applicable: bool,
}

/// `max_i (1/beta) (H(sigma_i) + 1)` with `H` the entropy of relay `i`'s
/// logit strategy.
pub fn epsilon_bound(x: &[Perception], beta: f64) -> EpsilonBound {
    if !beta.is_finite() {
        return EpsilonBound { value: 0.0, applicable: false };
    }
    let term = |p: f64| if p > 0.0 { p * (p.ln() - 1.0) } else { 0.0 };
    let value = x
        .iter()
        .map(|&xi| {
            let p = logit_policy(xi, beta);
            -(term(p) + term(1.0 - p)) / beta
        })
        .fold(0.0, f64::max);
    EpsilonBound { value, applicable: true }
}

/// Gain each relay could secure by switching to its best pure action, given
/// everyone's logit strategy at `x`.
pub fn best_deviation_gains(pop: &Population, x: &[Perception], beta: f64) -> Vec<f64> {
    let probs: Vec<f64> = x.iter().map(|&p| logit_policy(p, beta)).collect();
    payoff_map_from_probs(pop, &probs)
        .iter()
        .zip(&probs)
        .map(|(g, &p)| g[0].max(g[1]) - (p * g[0] + (1.0 - p) * g[1]))
        .collect()
}

/// Aggregate state after one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub round: u64,
    pub beta: f64,
    pub mean_sigma: f64,
    /// Mean activation probability within each class.
    pub class_sigma: Vec<f64>,
    pub active_count: usize,
    pub max_change: f64,
}

/// One relay in one recorded round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelayRecord {
    pub round: u64,
    pub relay: usize,
    pub class: usize,
    pub sigma_t: f64,
    pub action: Action,
    pub payoff: f64,
    /// Perception after the update, at the configured stride.
    pub perception: Option<Perception>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub summaries: Vec<RoundSummary>,
    pub records: Vec<RelayRecord>,
}

impl Trajectory {
    fn tail(&self, fraction: f64) -> &[RoundSummary] {
        let n = self.summaries.len();
        let take = ((n as f64 * fraction).ceil() as usize).clamp(1.min(n), n);
        &self.summaries[n - take..]
    }

    /// Mean activation probability over relays and over the last `fraction`
    /// of rounds.
    pub fn tail_mean_sigma(&self, fraction: f64) -> f64 {
        mean(self.tail(fraction).iter().map(|s| s.mean_sigma))
    }

    pub fn tail_class_sigma(&self, fraction: f64) -> Vec<f64> {
        let tail = self.tail(fraction);
        let m = tail.first().map_or(0, |s| s.class_sigma.len());
        (0..m).map(|j| mean(tail.iter().map(|s| s.class_sigma[j]))).collect()
    }

    /// Mean realized active count over the last `fraction` of rounds.
    pub fn tail_mean_count(&self, fraction: f64) -> f64 {
        mean(self.tail(fraction).iter().map(|s| s.active_count as f64))
    }

    /// Per-relay rows: `round,relay,class,sigma_T,action,payoff,x_T,x_S`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "round,relay,class,sigma_T,action,payoff,x_T,x_S")?;
        for r in &self.records {
            write!(w, "{},{},{},{},{},{},", r.round, r.relay, r.class, r.sigma_t, r.action.symbol(), r.payoff)?;
            match r.perception {
                Some(p) => writeln!(w, "{},{}", p.t, p.s)?,
                None => writeln!(w, ",")?,
            }
        }
        Ok(())
    }

    /// Per-round aggregates: `round,beta,mean_sigma,active_count,max_change`
    /// followed by one `sigma_class_j` column per class.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.summaries.first().map_or(0, |s| s.class_sigma.len());
        write!(w, "round,beta,mean_sigma,active_count,max_change")?;
        for j in 0..m {
            write!(w, ",sigma_class_{j}")?;
        }
        writeln!(w)?;
        for s in &self.summaries {
            write!(w, "{},{},{},{},{}", s.round, s.beta, s.mean_sigma, s.active_count, s.max_change)?;
            for c in &s.class_sigma {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningResult {
    pub trajectory: Trajectory,
    pub final_state: Vec<Perception>,
    pub rounds: u64,
    /// The stopping test passed before `max_rounds`.
    pub converged: bool,
    /// Temperature in the last round.
    pub final_beta: f64,
}

/// Run the learning loop from all-zero perceptions.
///
/// Actions are sampled from stream 0 of `seed` and simulated rounds use
/// stream 1, so Exact and Simulated runs with the same seed draw the same
/// action uniforms.
pub fn run_learning(pop: &Population, config: &LearnerConfig, seed: u64) -> Result<LearningResult> {
    config.validate()?;
    let n = pop.len();
    let classes = pop.num_classes();
    let class_sizes = pop.class_sizes();
    let mut action_rng = sim::rng_for(seed, 0);
    let mut round_rng = sim::rng_for(seed, 1);
    let mut x = vec![Perception::default(); n];
    let mut visits = vec![[0u64; 2]; n];
    let mut trajectory = Trajectory::default();
    let mut probs = vec![0.0; n];
    let mut actions = vec![Action::Silent; n];
    let mut converged = false;
    let mut round = 0;
    let mut beta = config.beta_at(1);

    while round < config.max_rounds {
        round += 1;
        beta = config.beta_at(round);
        for i in 0..n {
            probs[i] = logit_policy(x[i], beta);
            actions[i] = if sim::uniform01(&mut action_rng) < probs[i] { Action::Active } else { Action::Silent };
        }
        let payoffs: Vec<f64> = match config.payoff {
            PayoffMode::Exact => payoff_map_from_probs(pop, &probs)
                .iter()
                .zip(&actions)
                .map(|(g, a)| if a.is_active() { g[0] } else { g[1] })
                .collect(),
            PayoffMode::Simulated => sim::play_round(pop, &actions, &mut round_rng)?.payoffs,
        };

        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let slot = usize::from(!actions[i].is_active());
            visits[i][slot] += 1;
            let k = match config.clock {
                StepClock::Global => round,
                StepClock::PerAction => visits[i][slot],
            };
            let gamma = config.step.gamma(k);
            let next = match config.update_form {
                UpdateForm::Convex => update_perception(x[i], actions[i], payoffs[i], gamma),
                UpdateForm::Incremental => update_perception_incremental(x[i], actions[i], payoffs[i], gamma),
            };
            max_change = max_change.max((next.t - x[i].t).abs()).max((next.s - x[i].s).abs());
            x[i] = next;
        }

        let mut class_sigma = vec![0.0; classes];
        for (i, r) in pop.relays.iter().enumerate() {
            class_sigma[r.class] += probs[i];
        }
        for (c, &size) in class_sigma.iter_mut().zip(&class_sizes) {
            *c /= size.max(1) as f64;
        }
        trajectory.summaries.push(RoundSummary {
            round,
            beta,
            mean_sigma: probs.iter().sum::<f64>() / n as f64,
            class_sigma,
            active_count: actions.iter().filter(|a| a.is_active()).count(),
            max_change,
        });
        if config.record_every > 0 && round % config.record_every == 0 {
            let with_x = config.perception_stride > 0 && round % config.perception_stride == 0;
            for i in 0..n {
                trajectory.records.push(RelayRecord {
                    round,
                    relay: i,
                    class: pop.relays[i].class,
                    sigma_t: probs[i],
                    action: actions[i],
                    payoff: payoffs[i],
                    perception: with_x.then_some(x[i]),
                });
            }
        }
        if round >= config.min_rounds && max_change <= config.eps_stop {
            converged = true;
            break;
        }
    }
    Ok(LearningResult { trajectory, final_state: x, rounds: round, converged, final_beta: beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::ContactParams;
    use crate::game::{GameSpec, UtilityScenario};
    use crate::population::Relay;
    use proptest::prelude::*;

    fn small_pop(silent: SilentPayoff) -> Population {
        let relays = (0..6)
            .map(|i| Relay { reward: 0.4 + 0.1 * i as f64, cost: 6e-4 + 1e-4 * (i % 3) as f64, class: i % 2 })
            .collect();
        Population::new(ContactParams::reference(), relays, silent).unwrap()
    }

    #[test]
    fn logit_examples() {
        assert_eq!(logit_policy(Perception { t: 0.3, s: 0.3 }, 7.0), 0.5);
        assert!((logit_policy(Perception { t: 1.0, s: 0.0 }, 9f64.ln()) - 0.9).abs() < 1e-15);
        assert_eq!(logit_policy(Perception { t: 0.2, s: 0.1 }, f64::INFINITY), 1.0);
        assert_eq!(logit_policy(Perception { t: 0.1, s: 0.2 }, f64::INFINITY), 0.0);
        assert_eq!(logit_policy(Perception { t: 0.1, s: 0.1 }, f64::INFINITY), 0.5);
        assert!((logit_policy(Perception { t: 5.0, s: -3.0 }, 1e-12) - 0.5).abs() < 1e-10);
        let big = logit_policy(Perception { t: 1.0, s: 0.0 }, 1e6);
        assert!(big.is_finite() && big > 0.999);
        let small = logit_policy(Perception { t: 0.0, s: 1.0 }, 1e6);
        assert!(small.is_finite() && small >= 0.0);
    }

    #[test]
    fn update_examples() {
        let x = Perception { t: 0.2, s: -0.1 };
        let y = update_perception(x, Action::Active, 0.6, 0.5);
        assert!((y.t - 0.4).abs() < 1e-15);
        assert_eq!(y.s.to_bits(), x.s.to_bits());
        assert_eq!(update_perception(x, Action::Silent, 0.7, 1.0).s, 0.7);
        let mut z = x;
        for _ in 0..200 {
            z = update_perception(z, Action::Active, 0.25, 0.1);
        }
        assert!((z.t - 0.25).abs() < 1e-9);
    }

    #[test]
    fn step_rules() {
        assert_eq!(StepRule::Reciprocal.gamma(4), 0.25);
        assert!((StepRule::ReciprocalLog.gamma(1) - 1.0).abs() < 1e-15);
        assert!((StepRule::ReciprocalLog.gamma(10) - 1.0 / (1.0 + 10.0 * 10f64.ln())).abs() < 1e-15);
        assert!((StepRule::Power { exponent: 0.5 + 0.25 }.gamma(16) - 0.125).abs() < 1e-15);
        assert!(StepRule::Power { exponent: 0.4 }.validate().is_err());
    }

    #[test]
    fn beta_schedule() {
        let cfg = LearnerConfig {
            beta: f64::INFINITY,
            anneal: Some(Anneal { start: 1.0, end: 100.0, rounds: 3 }),
            ..Default::default()
        };
        assert_eq!(cfg.beta_at(1), 1.0);
        assert!((cfg.beta_at(2) - 10.0).abs() < 1e-12);
        assert!((cfg.beta_at(3) - 100.0).abs() < 1e-9);
        assert_eq!(cfg.beta_at(4), f64::INFINITY);
    }

    #[test]
    fn payoff_map_trivial_cases() {
        let pop = small_pop(SilentPayoff::ZeroSum);
        let g = payoff_map_from_probs(&pop, &[0.0; 6]);
        for (i, gi) in g.iter().enumerate() {
            assert!((gi[0] - pop.active_utility(i, 1)).abs() < 1e-15);
            assert_eq!(gi[1], -gi[0]);
        }
        let game = GameSpec::with_target(9, 6.6e-4, 4, ContactParams::reference(), UtilityScenario::ZeroSum).unwrap();
        let g = payoff_map_from_probs(&game.population(), &[0.3; 9]);
        assert!((g[0][0] - game.indifference_fn(0.3)).abs() < 1e-14);
    }

    #[test]
    fn payoff_map_matches_enumeration() {
        let pop = small_pop(SilentPayoff::FixedRegret { alpha: 0.02 });
        let probs = [0.1, 0.9, 0.45, 0.3, 0.77, 0.5];
        let g = payoff_map_from_probs(&pop, &probs);
        for i in 0..6 {
            let others: Vec<usize> = (0..6).filter(|&j| j != i).collect();
            let mut total = 0.0;
            for mask in 0u32..32 {
                let mut w = 1.0;
                for (b, &j) in others.iter().enumerate() {
                    w *= if mask >> b & 1 == 1 { probs[j] } else { 1.0 - probs[j] };
                }
                total += w * pop.active_utility(i, mask.count_ones() as usize + 1);
            }
            assert!((g[i][0] - total).abs() < 1e-13);
            assert_eq!(g[i][1], -0.02);
        }
    }

    #[test]
    fn residual_positive_away_from_fixed_point() {
        let pop = small_pop(SilentPayoff::Zero);
        let x = vec![Perception::default(); 6];
        let r = fixed_point_residual(&pop, &x, 0.5);
        assert!(r > 0.0);
    }

    #[test]
    fn contraction_margin_examples() {
        let c = ContactParams::reference();
        let pop = Population::new(c, vec![Relay { reward: 0.99, cost: 6.6e-4, class: 0 }; 4], SilentPayoff::ZeroSum).unwrap();
        assert!((contraction_margin(&pop, 0.5) - (1.0 / 0.99 - 0.5)).abs() < 1e-15);
        assert_eq!(contraction_margin(&pop, 1.0 / 0.99), 0.0);
        assert_eq!(contraction_margin(&pop, f64::INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn epsilon_examples() {
        let half = [Perception::default()];
        let e = epsilon_bound(&half, 10.0);
        assert!((e.value - (2f64.ln() + 1.0) / 10.0).abs() < 1e-15);
        let sure = [Perception { t: 100.0, s: 0.0 }];
        assert!((epsilon_bound(&sure, 10.0).value - 0.1).abs() < 1e-12);
        let inf = epsilon_bound(&half, f64::INFINITY);
        assert!(!inf.applicable && inf.value == 0.0);
    }

    #[test]
    fn exact_learning_reaches_fixed_point() {
        let pop = small_pop(SilentPayoff::ZeroSum);
        let beta = 0.5 / pop.max_reward();
        let cfg = LearnerConfig {
            beta,
            step: StepRule::Power { exponent: 0.6 },
            eps_stop: 1e-12,
            max_rounds: 20_000,
            ..Default::default()
        };
        let out = run_learning(&pop, &cfg, 1).unwrap();
        assert!(fixed_point_residual(&pop, &out.final_state, beta) < 1e-8);
        let eps = epsilon_bound(&out.final_state, beta).value;
        for gain in best_deviation_gains(&pop, &out.final_state, beta) {
            assert!(gain <= eps + 1e-9);
        }
    }

    #[test]
    fn update_forms_agree() {
        let pop = small_pop(SilentPayoff::FixedRegret { alpha: 0.01 });
        let base = LearnerConfig { beta: 2.0, max_rounds: 3000, eps_stop: 1e-300, ..Default::default() };
        let a = run_learning(&pop, &base, 4).unwrap();
        let b = run_learning(&pop, &LearnerConfig { update_form: UpdateForm::Incremental, ..base }, 4).unwrap();
        for (x, y) in a.final_state.iter().zip(&b.final_state) {
            assert!((x.t - y.t).abs() < 1e-12 && (x.s - y.s).abs() < 1e-12);
        }
        let same_actions = a.trajectory.summaries.iter().zip(&b.trajectory.summaries).all(|(p, q)| p.active_count == q.active_count);
        assert!(same_actions);
    }

    #[test]
    fn runs_are_reproducible_and_csv_is_stable() {
        let pop = small_pop(SilentPayoff::ZeroSum);
        let cfg = LearnerConfig {
            beta: 3.0,
            payoff: PayoffMode::Simulated,
            max_rounds: 200,
            record_every: 10,
            perception_stride: 20,
            ..Default::default()
        };
        let a = run_learning(&pop, &cfg, 9).unwrap();
        let b = run_learning(&pop, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.trajectory.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("round,relay,class,sigma_T,action,payoff,x_T,x_S"));
        assert_eq!(text.lines().count(), 1 + 20 * 6);
        let row10 = text.lines().nth(1).unwrap();
        assert!(row10.starts_with("10,0,0,") && row10.ends_with(",,"));
        let row20 = text.lines().nth(7).unwrap();
        assert!(row20.starts_with("20,0,0,") && !row20.ends_with(",,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn only_chosen_entry_changes(t in -1.0f64..1.0, s in -1.0f64..1.0, u in -1.0f64..1.0, gamma in 0.0f64..=1.0, active: bool) {
            let x = Perception { t, s };
            let a = if active { Action::Active } else { Action::Silent };
            let y = update_perception(x, a, u, gamma);
            let z = update_perception_incremental(x, a, u, gamma);
            if active { prop_assert_eq!(y.s.to_bits(), s.to_bits()); } else { prop_assert_eq!(y.t.to_bits(), t.to_bits()); }
            prop_assert!((y.t - z.t).abs() <= 1e-15 && (y.s - z.s).abs() <= 1e-15);
        }

        #[test]
        fn payoff_map_is_lipschitz(seed: u64, frac in 0.05f64..0.99) {
            let pop = small_pop(SilentPayoff::ZeroSum);
            let beta = frac / pop.max_reward();
            let mut rng = sim::rng_for(seed, 0);
            let mut draw = || sim::uniform01(&mut rng) * 2.0 - 1.0;
            let x: Vec<Perception> = (0..6).map(|_| Perception { t: draw(), s: draw() }).collect();
            let y: Vec<Perception> = (0..6).map(|_| Perception { t: draw(), s: draw() }).collect();
            let gx = expected_payoff_map(&pop, &x, beta);
            let gy = expected_payoff_map(&pop, &y, beta);
            let num = gx.iter().zip(&gy).map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs())).fold(0.0, f64::max);
            let den = x.iter().zip(&y).map(|(a, b)| (a.t - b.t).abs().max((a.s - b.s).abs())).fold(0.0, f64::max);
            prop_assert!(num <= beta * pop.max_reward() * den + 1e-9);
        }
    }
}
