//! Homogeneous minority game: every relay has the same cost `g` and is
//! offered the same reward `r`.
//!
//! Pure equilibria are reported as active counts (any assignment of that
//! many relays to T is an equilibrium), the fully mixed equilibrium is the
//! root of the indifference function `A(N, p)`, and the mixer/non-mixer
//! equilibria are triples `(l, s, p*)` with `l` sure-active relays, `s`
//! sure-silent relays and `N - l - s` relays mixing with probability `p*`.

use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::dist;
use crate::error::{check_finite, check_prob, invalid, Error, Result};
use crate::population::{Population, Relay, SilentPayoff};
use crate::roots::bisect;

/// Tolerance on `p` for the mixed-equilibrium root finders.
pub const ROOT_TOL: f64 = 1e-12;

/// Relative tolerance used to decide utility ties such as `U(T, k) = 0`.
pub const TIE_RTOL: f64 = 1e-9;

/// What a silent relay earns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
#[serde(deny_unknown_fields)]
pub enum UtilityScenario {
    /// Silent relays receive the negation of the active payoff.
    ZeroSum,
    /// Silent relays receive `-alpha` whatever happens.
    FixedRegret { alpha: f64 },
}

impl UtilityScenario {
    pub fn silent_payoff(self) -> SilentPayoff {
        match self {
            UtilityScenario::ZeroSum => SilentPayoff::ZeroSum,
            UtilityScenario::FixedRegret { alpha } => SilentPayoff::FixedRegret { alpha },
        }
    }

    /// Regret charged to silent relays (0 in the zero-sum scenario).
    pub fn alpha(self) -> f64 {
        match self {
            UtilityScenario::ZeroSum => 0.0,
            UtilityScenario::FixedRegret { alpha } => alpha,
        }
    }
}

/// One homogeneous game instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    /// Population size `N`.
    pub n: usize,
    /// Energy cost per time unit.
    pub g: f64,
    /// Reward per successful first delivery.
    pub r: f64,
    pub contact: ContactParams,
    pub scenario: UtilityScenario,
}

/// Which end of the count range a degenerate pure equilibrium sits at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Even a lone active relay loses money.
    NoneActive,
    /// Activity pays off even with every relay active.
    AllActive,
}

/// Pure equilibria of a homogeneous game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PureNe {
    /// Every active count `k` at which no relay gains by switching.
    pub counts: Vec<usize>,
    /// Largest `k` with `U(T, k) >= 0` (zero-sum) or `U(T, k) >= -alpha`
    /// (fixed regret); 0 if there is none.
    pub threshold: usize,
    pub boundary: Option<Boundary>,
}

/// Equilibrium with `num_pure_t` sure-active relays, `num_pure_s`
/// sure-silent relays and the rest mixing with probability `p_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialMixedEq {
    pub num_pure_t: usize,
    pub num_pure_s: usize,
    pub p_star: f64,
    /// Whether the sure players also have no profitable deviation at `p_star`.
    pub pure_players_stable: bool,
}

impl GameSpec {
    pub fn new(
        n: usize,
        g: f64,
        r: f64,
        contact: ContactParams,
        scenario: UtilityScenario,
    ) -> Result<Self> {
        let spec = Self { n, g, r, contact, scenario };
        spec.validate()?;
        Ok(spec)
    }

    /// Game whose reward makes exactly `psi` active relays break even.
    pub fn with_target(
        n: usize,
        g: f64,
        psi: usize,
        contact: ContactParams,
        scenario: UtilityScenario,
    ) -> Result<Self> {
        let r = contact.reward_for_target(g, psi)?;
        Self::new(n, g, r, contact, scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.contact.validate()?;
        if self.n < 2 {
            return Err(invalid("n", format!("needs at least 2 relays, got {}", self.n)));
        }
        check_finite("g", self.g)?;
        check_finite("r", self.r)?;
        if self.g <= 0.0 {
            return Err(invalid("g", format!("must be > 0, got {}", self.g)));
        }
        if self.r <= 0.0 {
            return Err(invalid("r", format!("must be > 0, got {}", self.r)));
        }
        if let UtilityScenario::FixedRegret { alpha } = self.scenario {
            check_finite("alpha", alpha)?;
            if alpha < 0.0 {
                return Err(invalid("alpha", format!("must be >= 0, got {alpha}")));
            }
        }
        Ok(())
    }

    pub fn population(&self) -> Population {
        let relay = Relay { reward: self.r, cost: self.g, class: 0 };
        Population {
            contact: self.contact,
            relays: vec![relay; self.n],
            silent: self.scenario.silent_payoff(),
        }
    }

    /// Absolute tolerance for utility comparisons, scaled to the payoffs.
    pub fn tie_tolerance(&self) -> f64 {
        TIE_RTOL * (self.contact.num_sources_f64() * self.r + self.g * self.contact.tau)
    }

    /// `U(T, k) = n_s r P_succ(T, k) - g tau` for `1 <= k <= N`.
    pub fn utility_active(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.n {
            return Err(Error::Domain(format!("active count {k} outside 1..={}", self.n)));
        }
        Ok(self.u_t(k))
    }

    pub(crate) fn u_t(&self, k: usize) -> f64 {
        self.contact.num_sources_f64() * self.r * self.contact.p_succ(k) - self.g * self.contact.tau
    }

    /// Payoff of a silent relay when `k_t` relays are active.
    pub fn utility_silent(&self, k_t: usize) -> Result<f64> {
        if k_t > self.n {
            return Err(Error::Domain(format!("active count {k_t} outside 0..={}", self.n)));
        }
        Ok(self.u_s(k_t))
    }

    fn u_s(&self, k_t: usize) -> f64 {
        match self.scenario {
            UtilityScenario::ZeroSum if k_t == 0 => 0.0,
            UtilityScenario::ZeroSum => -self.u_t(k_t),
            UtilityScenario::FixedRegret { alpha } => -alpha,
        }
    }

    /// Whether a profile with `k` active relays is stable: silent relays do
    /// not gain by transmitting and active relays do not gain by falling
    /// silent (ties within [`GameSpec::tie_tolerance`] count as stable).
    pub fn is_pure_ne(&self, k: usize) -> bool {
        if k > self.n {
            return false;
        }
        let tol = self.tie_tolerance();
        let silent_ok = k == self.n || self.u_s(k) >= self.u_t(k + 1) - tol;
        let active_ok = k == 0 || self.u_s(k - 1) <= self.u_t(k) + tol;
        silent_ok && active_ok
    }

    /// Pure equilibria as active counts, plus the comfort threshold.
    pub fn pure_ne(&self) -> PureNe {
        let tol = self.tie_tolerance();
        let floor = -self.scenario.alpha() - tol;
        let threshold = (1..=self.n).rev().find(|&k| self.u_t(k) >= floor).unwrap_or(0);
        let boundary = if threshold == 0 {
            Some(Boundary::NoneActive)
        } else if threshold == self.n {
            Some(Boundary::AllActive)
        } else {
            None
        };
        let counts = (0..=self.n).filter(|&k| self.is_pure_ne(k)).collect();
        PureNe { counts, threshold, boundary }
    }

    /// `E[U(T, K + 1)]` with `K ~ Binomial(N - 1, p)`, shifted by `alpha`
    /// under fixed regret. A mixer is indifferent exactly where this is 0.
    pub fn indifference_fn(&self, p: f64) -> f64 {
        let pmf = dist::binomial(self.n - 1, p);
        dist::expect(&pmf, |k| self.u_t(k + 1)) + self.scenario.alpha()
    }

    /// Expected payoff of a relay activating with probability `q` while the
    /// other `N - 1` relays activate with probability `p`.
    pub fn mixed_payoff(&self, q: f64, p: f64) -> f64 {
        let pmf = dist::binomial(self.n - 1, p);
        let active = dist::expect(&pmf, |k| self.u_t(k + 1));
        let silent = match self.scenario {
            UtilityScenario::ZeroSum => -active,
            UtilityScenario::FixedRegret { alpha } => -alpha,
        };
        q * active + (1.0 - q) * silent
    }

    /// The unique symmetric fully mixed equilibrium probability.
    pub fn fully_mixed_ne(&self) -> Result<f64> {
        let at0 = self.indifference_fn(0.0);
        let at1 = self.indifference_fn(1.0);
        if !(at0 > 0.0 && at1 < 0.0) {
            return Err(Error::NoInteriorEquilibrium(format!(
                "indifference function is {at0:.6e} at p = 0 and {at1:.6e} at p = 1"
            )));
        }
        bisect(|p| self.indifference_fn(p), 0.0, 1.0, ROOT_TOL)
    }

    fn check_partial_args(&self, l: usize, s: usize, p: f64) -> Result<()> {
        check_prob("p", p)?;
        if l + s > self.n {
            return Err(Error::Domain(format!("l + s = {} exceeds N = {}", l + s, self.n)));
        }
        Ok(())
    }

    /// Expected payoff of an active relay when `l` relays (itself included)
    /// are surely active, `s` are surely silent and the remaining
    /// `N - l - s` activate with probability `p`.
    pub fn v_t(&self, l: usize, s: usize, p: f64) -> Result<f64> {
        self.check_partial_args(l, s, p)?;
        if l == 0 {
            return Err(Error::Domain("v_T needs at least one sure-active relay".into()));
        }
        let pmf = dist::binomial(self.n - l - s, p);
        Ok(dist::expect(&pmf, |k| self.u_t(l + k)))
    }

    /// Expected payoff of a silent relay in the same setting as
    /// [`GameSpec::v_t`], with `s` counting the silent relay itself.
    pub fn v_s(&self, l: usize, s: usize, p: f64) -> Result<f64> {
        self.check_partial_args(l, s, p)?;
        Ok(match self.scenario {
            UtilityScenario::ZeroSum => {
                let pmf = dist::binomial(self.n - l - s, p);
                dist::expect(&pmf, |k| self.u_s(l + k))
            }
            UtilityScenario::FixedRegret { alpha } => -alpha,
        })
    }

    /// Payoff gap of a mixer between transmitting and staying silent.
    fn partial_gap(&self, l: usize, s: usize, p: f64) -> f64 {
        let pmf = dist::binomial(self.n - l - s - 1, p);
        let active = dist::expect(&pmf, |k| self.u_t(l + 1 + k));
        let silent = match self.scenario {
            UtilityScenario::ZeroSum => dist::expect(&pmf, |k| self.u_s(l + k)),
            UtilityScenario::FixedRegret { alpha } => -alpha,
        };
        active - silent
    }

    /// Mixing probability making a mixer indifferent when `l` relays are
    /// surely active and `s` surely silent, or `None` if no interior root
    /// exists (including `l + s > N - 2`).
    pub fn partial_mixed_ne(&self, l: usize, s: usize) -> Option<f64> {
        if l + s + 2 > self.n {
            return None;
        }
        let tol = self.tie_tolerance();
        let h0 = self.partial_gap(l, s, 0.0);
        let h1 = self.partial_gap(l, s, 1.0);
        if !(h0 > tol && h1 < -tol) {
            return None;
        }
        bisect(|p| self.partial_gap(l, s, p), 0.0, 1.0, ROOT_TOL).ok()
    }

    /// Whether sure-active and sure-silent relays keep their actions when
    /// the mixers play `p`.
    fn pure_players_stable(&self, l: usize, s: usize, p: f64) -> bool {
        let tol = self.tie_tolerance();
        let active_ok = l == 0 || {
            let stay = self.v_t(l, s, p).unwrap_or(f64::NAN);
            let switch = self.v_s(l - 1, s + 1, p).unwrap_or(f64::NAN);
            stay >= switch - tol
        };
        let silent_ok = s == 0 || {
            let stay = self.v_s(l, s, p).unwrap_or(f64::NAN);
            let switch = self.v_t(l + 1, s - 1, p).unwrap_or(f64::NAN);
            stay >= switch - tol
        };
        active_ok && silent_ok
    }

    /// All mixer/non-mixer equilibria over `l + s <= N - 2`, ordered by
    /// `(l, s)`.
    pub fn enumerate_partial_eqs(&self) -> Vec<PartialMixedEq> {
        let mut out = Vec::new();
        for l in 0..=self.n.saturating_sub(2) {
            for s in 0..=(self.n - 2 - l) {
                if let Some(p_star) = self.partial_mixed_ne(l, s) {
                    out.push(PartialMixedEq {
                        num_pure_t: l,
                        num_pure_s: s,
                        p_star,
                        pure_players_stable: self.pure_players_stable(l, s, p_star),
                    });
                }
            }
        }
        out
    }

    /// Residual of the mixer indifference condition at a reported triple.
    pub fn partial_residual(&self, eq: &PartialMixedEq) -> f64 {
        self.partial_gap(eq.num_pure_t, eq.num_pure_s, eq.p_star)
    }
}

/// Closed-form count of mixer/non-mixer equilibria, `psi (N - 2) - psi (psi - 1) / 2`.
pub fn partial_eq_count_formula(n: usize, psi: usize) -> i64 {
    let (n, psi) = (n as i64, psi as i64);
    psi * (n - 2) - psi * (psi - 1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig2() -> GameSpec {
        GameSpec::with_target(40, 6.6e-4, 15, ContactParams::reference(), UtilityScenario::ZeroSum)
            .unwrap()
    }

    fn small(n: usize, psi: usize, scenario: UtilityScenario) -> GameSpec {
        GameSpec::with_target(n, 6.6e-4, psi, ContactParams::reference(), scenario).unwrap()
    }

    #[test]
    fn utility_examples() {
        let g = fig2();
        assert!((g.r - 0.99).abs() < 1e-6);
        assert!(g.utility_active(15).unwrap().abs() < 1e-15);
        assert!((g.utility_active(1).unwrap() - 0.72684).abs() < 1e-5);
        assert!((g.utility_active(40).unwrap() + 0.04125).abs() < 1e-5);
        assert!(g.utility_active(0).is_err());
        assert!(g.utility_active(41).is_err());
        assert_eq!(g.utility_silent(0).unwrap(), 0.0);
        assert!((g.utility_silent(1).unwrap() + 0.72684).abs() < 1e-5);
        let fr = GameSpec { scenario: UtilityScenario::FixedRegret { alpha: 0.01 }, ..g };
        assert_eq!(fr.utility_silent(7).unwrap(), -0.01);
    }

    #[test]
    fn pure_ne_at_comfort_level() {
        let ne = fig2().pure_ne();
        assert_eq!(ne.counts, vec![15]);
        assert_eq!(ne.threshold, 15);
        assert_eq!(ne.boundary, None);
    }

    #[test]
    fn fixed_regret_tie_gives_pair() {
        let base = fig2();
        let alpha = -base.u_t(17);
        let g = GameSpec { scenario: UtilityScenario::FixedRegret { alpha }, ..base };
        let ne = g.pure_ne();
        assert_eq!(ne.counts, vec![16, 17]);
        assert_eq!(ne.threshold, 17);
    }

    #[test]
    fn fixed_regret_generic_alpha_gives_single_count() {
        let base = fig2();
        let alpha = -0.5 * (base.u_t(17) + base.u_t(18));
        let g = GameSpec { scenario: UtilityScenario::FixedRegret { alpha }, ..base };
        assert_eq!(g.pure_ne().counts, vec![17]);
    }

    #[test]
    fn unprofitable_reward_gives_empty_boundary() {
        let g = GameSpec { r: 0.01, ..fig2() };
        let ne = g.pure_ne();
        assert_eq!(ne.counts, vec![0]);
        assert_eq!(ne.boundary, Some(Boundary::NoneActive));
    }

    #[test]
    fn generous_reward_gives_full_boundary() {
        let g = GameSpec { r: 100.0, ..fig2() };
        let ne = g.pure_ne();
        assert_eq!(ne.counts, vec![40]);
        assert_eq!(ne.boundary, Some(Boundary::AllActive));
    }

    #[test]
    fn indifference_endpoints_and_root() {
        let g = fig2();
        assert!((g.indifference_fn(0.0) - g.u_t(1)).abs() < 1e-15);
        assert!((g.indifference_fn(1.0) - g.u_t(40)).abs() < 1e-15);
        let p = g.fully_mixed_ne().unwrap();
        assert!((p - 0.375).abs() < 1e-3, "p* = {p}");
        assert!(g.indifference_fn(p).abs() < 1e-12);
    }

    #[test]
    fn two_relay_symmetric_midpoint() {
        // Pick g so that U(T,2) = -U(T,1): r P(1) + r P(2) = 2 g tau.
        let c = ContactParams::reference();
        let r = 1.0;
        let g = r * (c.p_succ(1) + c.p_succ(2)) / (2.0 * c.tau);
        let spec = GameSpec::new(2, g, r, c, UtilityScenario::ZeroSum).unwrap();
        assert!((spec.u_t(1) + spec.u_t(2)).abs() < 1e-15);
        assert!((spec.fully_mixed_ne().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_interior_equilibrium_is_typed() {
        let g = GameSpec { r: 0.01, ..fig2() };
        assert!(matches!(g.fully_mixed_ne(), Err(Error::NoInteriorEquilibrium(_))));
    }

    #[test]
    fn v_t_degenerate_cases() {
        let g = small(7, 3, UtilityScenario::ZeroSum);
        assert!((g.v_t(4, 3, 0.3).unwrap() - g.u_t(4)).abs() < 1e-15);
        assert!((g.v_t(2, 1, 0.0).unwrap() - g.u_t(2)).abs() < 1e-15);
        assert!(g.v_t(0, 1, 0.3).is_err());
        assert!(g.v_t(5, 3, 0.3).is_err());
    }

    #[test]
    fn v_s_scenarios() {
        let g = small(7, 3, UtilityScenario::ZeroSum);
        for (l, s, p) in [(1, 0, 0.2), (2, 1, 0.3), (3, 4, 0.9), (5, 2, 0.5)] {
            assert_eq!(g.v_s(l, s, p).unwrap(), -g.v_t(l, s, p).unwrap());
        }
        let fr = small(7, 3, UtilityScenario::FixedRegret { alpha: 0.02 });
        assert_eq!(fr.v_s(0, 0, 0.4).unwrap(), -0.02);
    }

    #[test]
    fn partial_reduces_to_fully_mixed_under_fixed_regret() {
        let g = small(12, 4, UtilityScenario::FixedRegret { alpha: 0.005 });
        let full = g.fully_mixed_ne().unwrap();
        let partial = g.partial_mixed_ne(0, 0).unwrap();
        assert!((full - partial).abs() < 1e-10);
    }

    #[test]
    fn partial_infeasible_cases() {
        let g = small(10, 4, UtilityScenario::ZeroSum);
        for l in 4..8 {
            for s in 0..=(8 - l) {
                assert_eq!(g.partial_mixed_ne(l, s), None, "l={l} s={s}");
            }
        }
        assert_eq!(g.partial_mixed_ne(3, 6), None);
        assert_eq!(g.partial_mixed_ne(0, 9), None);
    }

    #[test]
    fn partial_equilibria_are_monotone() {
        let g = small(10, 4, UtilityScenario::ZeroSum);
        let eqs = g.enumerate_partial_eqs();
        assert!(!eqs.is_empty());
        for a in &eqs {
            assert!(g.partial_residual(a).abs() < 1e-9);
            for b in &eqs {
                if a.num_pure_t == b.num_pure_t && a.num_pure_s < b.num_pure_s {
                    assert!(a.p_star < b.p_star);
                }
                if a.num_pure_s == b.num_pure_s && a.num_pure_t < b.num_pure_t {
                    assert!(a.p_star > b.p_star);
                }
            }
        }
    }

    #[test]
    fn count_formula_values() {
        assert_eq!(partial_eq_count_formula(10, 4), 26);
        assert_eq!(partial_eq_count_formula(9, 1), 7);
    }

    proptest! {
        #[test]
        fn returned_counts_satisfy_stability(
            n in 2usize..60, psi in 1usize..40, alpha in 0.0f64..0.05, zero_sum: bool,
            scale in 0.5f64..2.0,
        ) {
            let scenario = if zero_sum { UtilityScenario::ZeroSum } else { UtilityScenario::FixedRegret { alpha } };
            let base = GameSpec::with_target(n, 6.6e-4, psi, ContactParams::reference(), scenario).unwrap();
            let g = GameSpec { r: base.r * scale, ..base };
            let ne = g.pure_ne();
            prop_assert!(!ne.counts.is_empty());
            let tol = g.tie_tolerance();
            for &k in &ne.counts {
                if k < n { prop_assert!(g.u_s(k) >= g.u_t(k + 1) - tol); }
                if k > 0 { prop_assert!(g.u_s(k - 1) <= g.u_t(k) + tol); }
            }
        }

        #[test]
        fn indifference_strictly_decreasing(n in 2usize..80, psi in 1usize..30, scale in 0.3f64..3.0) {
            let base = GameSpec::with_target(n, 6.6e-4, psi, ContactParams::reference(), UtilityScenario::ZeroSum).unwrap();
            let g = GameSpec { r: base.r * scale, ..base };
            let mut prev = g.indifference_fn(0.0);
            for i in 1..=100 {
                let a = g.indifference_fn(i as f64 / 100.0);
                prop_assert!(a < prev);
                prev = a;
            }
        }

        #[test]
        fn fully_mixed_is_best_response(n in 3usize..60, frac in 0.1f64..0.9, q in 0.0f64..=1.0) {
            let psi = ((n as f64 * frac) as usize).max(1);
            let g = GameSpec::with_target(n, 6.6e-4, psi, ContactParams::reference(), UtilityScenario::ZeroSum).unwrap();
            if let Ok(p) = g.fully_mixed_ne() {
                prop_assert!(g.mixed_payoff(q, p) <= g.mixed_payoff(p, p) + 1e-9);
            }
        }
    }
}
