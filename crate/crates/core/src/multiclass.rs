//! Device classes with their own energy cost and reward.
//!
//! A class-`j` relay that transmits while `k` relays in total are active
//! earns `U_j(T, k) = n_s r_j P_succ(T, k) - g_j tau`; a silent relay earns 0.

use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::dist;
use crate::error::{check_finite, check_prob, invalid, Error, Result};
use crate::game::{Boundary, TIE_RTOL};
use crate::population::{Population, Relay, SilentPayoff};
use crate::roots::bisect;

/// Root tolerance of the nested two-class solver.
const NESTED_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    /// Number of relays `N_j` in the class.
    pub count: usize,
    /// Energy cost `g_j` per time unit.
    pub g: f64,
    /// Reward `r_j` per first delivery.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassSpec {
    pub classes: Vec<ClassSpec>,
    pub contact: ContactParams,
}

/// Per-class pure-equilibrium data when a class-`j` relay's payoff is read
/// off its own class's active count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassTarget {
    /// Largest `k >= 1` with `n_s r_j P_succ(T, k) >= g_j tau`, or 0. Not
    /// capped at the class size.
    pub target: usize,
    /// Active counts `0..=N_j` at which no class member gains by switching.
    pub counts: Vec<usize>,
    pub boundary: Option<Boundary>,
}

/// Pure equilibria when every relay's payoff depends on the total active
/// count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TotalCountNe {
    /// Stable per-class active-count vectors.
    pub vectors: Vec<Vec<usize>>,
    /// Number of action profiles realizing them, `sum over vectors of
    /// prod_j C(N_j, a_j)` (saturating).
    pub profiles: u128,
}

/// Symmetric-within-class equilibrium of the two-class game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMixedEq {
    pub p: [f64; 2],
    /// Both probabilities strictly inside (0, 1). When false at least one
    /// class plays a pure strategy and its indifference condition is
    /// replaced by the matching inequality.
    pub interior: bool,
}

impl MultiClassSpec {
    pub fn new(classes: Vec<ClassSpec>, contact: ContactParams) -> Result<Self> {
        let spec = Self { classes, contact };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.contact.validate()?;
        if self.classes.is_empty() {
            return Err(invalid("classes", "at least one class is required"));
        }
        for c in &self.classes {
            check_finite("g", c.g)?;
            check_finite("r", c.r)?;
            if c.count == 0 {
                return Err(invalid("count", "every class needs at least one relay"));
            }
            if c.g <= 0.0 || c.r <= 0.0 {
                return Err(invalid("classes", "costs and rewards must be > 0"));
            }
        }
        Ok(())
    }

    /// Total population `N`.
    pub fn n(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn population(&self) -> Population {
        let relays = self
            .classes
            .iter()
            .enumerate()
            .flat_map(|(j, c)| std::iter::repeat_n(Relay { reward: c.r, cost: c.g, class: j }, c.count))
            .collect();
        Population { contact: self.contact, relays, silent: SilentPayoff::Zero }
    }

    fn check_class(&self, j: usize) -> Result<()> {
        if j >= self.classes.len() {
            return Err(Error::Domain(format!("class index {j} out of range")));
        }
        Ok(())
    }

    fn u(&self, j: usize, k: usize) -> f64 {
        let c = &self.classes[j];
        self.contact.num_sources_f64() * c.r * self.contact.p_succ(k) - c.g * self.contact.tau
    }

    fn tol(&self, j: usize) -> f64 {
        let c = &self.classes[j];
        TIE_RTOL * (self.contact.num_sources_f64() * c.r + c.g * self.contact.tau)
    }

    /// `U_j(T, k)` for `1 <= k <= N`.
    pub fn class_utility_active(&self, j: usize, k: usize) -> Result<f64> {
        self.check_class(j)?;
        if k == 0 || k > self.n() {
            return Err(Error::Domain(format!("active count {k} outside 1..={}", self.n())));
        }
        Ok(self.u(j, k))
    }

    /// Per-class targets and equilibria, each class read on its own count.
    pub fn pure_ne_per_class(&self) -> Vec<ClassTarget> {
        (0..self.classes.len())
            .map(|j| {
                let tol = self.tol(j);
                let size = self.classes[j].count;
                let target = last_true(|k| self.u(j, k) >= -tol);
                let counts = (0..=size)
                    .filter(|&a| {
                        let active_ok = a == 0 || self.u(j, a) >= -tol;
                        let silent_ok = a == size || self.u(j, a + 1) <= tol;
                        active_ok && silent_ok
                    })
                    .collect();
                let boundary = if target == 0 {
                    Some(Boundary::NoneActive)
                } else if target >= size {
                    Some(Boundary::AllActive)
                } else {
                    None
                };
                ClassTarget { target, counts, boundary }
            })
            .collect()
    }

    /// Stable count vectors when payoffs depend on the total active count.
    pub fn pure_ne_total_count(&self) -> TotalCountNe {
        let sizes: Vec<usize> = self.classes.iter().map(|c| c.count).collect();
        let mut vectors = Vec::new();
        let mut profiles: u128 = 0;
        let mut a = vec![0usize; sizes.len()];
        loop {
            let k: usize = a.iter().sum();
            let stable = (0..sizes.len()).all(|j| {
                let tol = self.tol(j);
                let active_ok = a[j] == 0 || self.u(j, k) >= -tol;
                let silent_ok = a[j] == sizes[j] || self.u(j, k + 1) <= tol;
                active_ok && silent_ok
            });
            if stable {
                let ways = a
                    .iter()
                    .zip(&sizes)
                    .fold(1u128, |acc, (&aj, &nj)| acc.saturating_mul(choose(nj, aj)));
                profiles = profiles.saturating_add(ways);
                vectors.push(a.clone());
            }
            // Odometer increment over 0..=N_j per class.
            let mut j = 0;
            loop {
                if j == sizes.len() {
                    return TotalCountNe { vectors, profiles };
                }
                if a[j] < sizes[j] {
                    a[j] += 1;
                    break;
                }
                a[j] = 0;
                j += 1;
            }
        }
    }

    /// Indifference values `A_j = E[U_j(T, K + 1)]` where `K` counts the
    /// active relays other than a tagged class-`j` relay and class `i`
    /// relays activate with probability `probs[i]`.
    pub fn indifference(&self, probs: &[f64]) -> Result<Vec<f64>> {
        if probs.len() != self.classes.len() {
            return Err(invalid("probs", "one probability per class is required"));
        }
        for &p in probs {
            check_prob("p", p)?;
        }
        Ok((0..self.classes.len())
            .map(|j| {
                let mut pmf = vec![1.0];
                for (i, c) in self.classes.iter().enumerate() {
                    let others = c.count - usize::from(i == j);
                    for _ in 0..others {
                        dist::add_trial(&mut pmf, probs[i]);
                    }
                }
                dist::expect(&pmf, |k| self.u(j, k + 1))
            })
            .collect())
    }

    fn require_two(&self) -> Result<()> {
        if self.classes.len() != 2 {
            return Err(Error::Domain(format!(
                "the coupled solver handles exactly 2 classes, got {}",
                self.classes.len()
            )));
        }
        Ok(())
    }

    /// `(A_1, A_2)` at `(p1, p2)`.
    pub fn indifference_pair(&self, p1: f64, p2: f64) -> Result<(f64, f64)> {
        self.require_two()?;
        let a = self.indifference(&[p1, p2])?;
        Ok((a[0], a[1]))
    }

    fn a_j(&self, j: usize, p1: f64, p2: f64) -> f64 {
        self.indifference(&[p1, p2]).map(|a| a[j]).unwrap_or(f64::NAN)
    }

    /// Class-2 best response to `p1`: the root of `A_2(p1, .)`, or the
    /// endpoint when `A_2` keeps one sign.
    fn best_response_2(&self, p1: f64) -> f64 {
        if self.a_j(1, p1, 0.0) <= 0.0 {
            return 0.0;
        }
        if self.a_j(1, p1, 1.0) >= 0.0 {
            return 1.0;
        }
        bisect(|p2| self.a_j(1, p1, p2), 0.0, 1.0, NESTED_TOL).unwrap_or(f64::NAN)
    }

    /// Root in `p1` of `A_1(p1, p2)` at fixed `p2`, if `A_1` changes sign.
    fn root_1(&self, p2: f64) -> Option<f64> {
        bisect(|p1| self.a_j(0, p1, p2), 0.0, 1.0, NESTED_TOL).ok()
    }

    /// Interior solution of `A_1 = A_2 = 0`. The inner bisection walks the
    /// curve `A_2(p1, p2) = 0`; the outer one looks for a sign change of
    /// `A_1` along it, over the range of `p1` where the curve stays inside
    /// the unit square.
    fn interior_2class(&self) -> Option<[f64; 2]> {
        // A lone relay's condition ignores its own probability, so it pins
        // the other class's probability and the curve degenerates.
        let interior = |p: [f64; 2]| (p.iter().all(|&x| x > 0.0 && x < 1.0)).then_some(p);
        if self.classes[1].count == 1 {
            let p1 = bisect(|p1| self.a_j(1, p1, 0.5), 0.0, 1.0, NESTED_TOL).ok()?;
            let p2 = bisect(|p2| self.a_j(0, p1, p2), 0.0, 1.0, NESTED_TOL).ok()?;
            return interior([p1, p2]);
        }
        if self.classes[0].count == 1 {
            let p2 = bisect(|p2| self.a_j(0, 0.5, p2), 0.0, 1.0, NESTED_TOL).ok()?;
            let p1 = bisect(|p1| self.a_j(1, p1, p2), 0.0, 1.0, NESTED_TOL).ok()?;
            return interior([p1, p2]);
        }
        // A_2 decreases in p1, so the curve is interior for p1 in (lo, hi).
        let lo = if self.a_j(1, 0.0, 1.0) < 0.0 {
            0.0
        } else {
            bisect(|p1| self.a_j(1, p1, 1.0), 0.0, 1.0, NESTED_TOL).ok()?
        };
        let hi = if self.a_j(1, 1.0, 0.0) > 0.0 {
            1.0
        } else {
            bisect(|p1| self.a_j(1, p1, 0.0), 0.0, 1.0, NESTED_TOL).ok()?
        };
        if lo >= hi {
            return None;
        }
        let along = |p1: f64| self.a_j(0, p1, self.best_response_2(p1));
        let p1 = bisect(along, lo, hi, NESTED_TOL).ok()?;
        let p2 = self.best_response_2(p1);
        (p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0).then_some([p1, p2])
    }

    /// Every symmetric-within-class equilibrium of the two-class game: the
    /// interior one first (if any), then those where a class plays a pure
    /// strategy and its indifference condition becomes an inequality.
    pub fn equilibria_2class(&self) -> Result<Vec<ClassMixedEq>> {
        self.require_two()?;
        let tol = self.tol(0).max(self.tol(1));
        let mut out: Vec<ClassMixedEq> = Vec::new();
        let push = |p: [f64; 2], out: &mut Vec<ClassMixedEq>| {
            if !out.iter().any(|e| (e.p[0] - p[0]).abs() < 1e-9 && (e.p[1] - p[1]).abs() < 1e-9) {
                let interior = p.iter().all(|&x| x > 0.0 && x < 1.0);
                out.push(ClassMixedEq { p, interior });
            }
        };
        if let Some(p) = self.interior_2class() {
            push(p, &mut out);
        }
        // Class 2 pure, class 1 mixing or pure.
        for p2 in [1.0, 0.0] {
            let p1 = match self.root_1(p2) {
                Some(p1) => p1,
                None if self.a_j(0, 0.0, p2) <= 0.0 => 0.0,
                None => 1.0,
            };
            let a2 = self.a_j(1, p1, p2);
            if (p2 == 1.0 && a2 >= -tol) || (p2 == 0.0 && a2 <= tol) {
                push([p1, p2], &mut out);
            }
        }
        // Class 1 pure, class 2 mixing.
        for p1 in [1.0, 0.0] {
            let p2 = self.best_response_2(p1);
            if p2 > 0.0 && p2 < 1.0 {
                let a1 = self.a_j(0, p1, p2);
                if (p1 == 1.0 && a1 >= -tol) || (p1 == 0.0 && a1 <= tol) {
                    push([p1, p2], &mut out);
                }
            }
        }
        Ok(out)
    }

    /// The two-class equilibrium: the unique interior solution of
    /// `A_1 = A_2 = 0` when it exists, otherwise a boundary equilibrium
    /// (flagged by `interior = false`).
    pub fn fully_mixed_ne_2class(&self) -> Result<ClassMixedEq> {
        self.require_two()?;
        for j in 0..2 {
            let lo = self.a_j(j, 0.0, 0.0);
            let hi = self.a_j(j, 1.0, 1.0);
            if !(lo > 0.0 && hi < 0.0) {
                return Err(Error::NoInteriorEquilibrium(format!(
                    "class {} indifference is {lo:.6e} with nobody active and {hi:.6e} with everybody",
                    j + 1
                )));
            }
        }
        self.equilibria_2class()?
            .into_iter()
            .next()
            .ok_or_else(|| Error::NoInteriorEquilibrium("no equilibrium located".into()))
    }

    /// Experimental solver for any number of classes: Newton's method on
    /// `A_j(p) / r_j = 0` with a finite-difference Jacobian, started from
    /// the common probability that zeroes the average condition. Returns the
    /// probabilities and whether an interior root was reached within `tol`.
    pub fn mixed_ne_newton(&self, tol: f64, max_iter: usize) -> Result<(Vec<f64>, bool)> {
        let m = self.classes.len();
        let scaled = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(self.indifference(p)?.iter().zip(&self.classes).map(|(a, c)| a / c.r).collect())
        };
        let mean_at = |x: f64| {
            scaled(&vec![x; m]).map(|v| v.iter().sum::<f64>() / m as f64).unwrap_or(f64::NAN)
        };
        let start = bisect(mean_at, 0.0, 1.0, NESTED_TOL)?;
        let mut p = vec![start; m];
        let h = 1e-7;
        for _ in 0..max_iter {
            let f = scaled(&p)?;
            if f.iter().all(|v| v.abs() <= tol) {
                let interior = p.iter().all(|&x| x > 0.0 && x < 1.0);
                return Ok((p, interior));
            }
            let mut jac = vec![vec![0.0; m]; m];
            for i in 0..m {
                let mut q = p.clone();
                q[i] = (q[i] + h).min(1.0);
                let step = q[i] - p[i];
                let fq = scaled(&q)?;
                for j in 0..m {
                    jac[j][i] = (fq[j] - f[j]) / step;
                }
            }
            let delta = solve_linear(jac, f.iter().map(|v| -v).collect())
                .ok_or_else(|| Error::Domain("singular Jacobian".into()))?;
            for (x, d) in p.iter_mut().zip(delta) {
                *x = (*x + d).clamp(0.0, 1.0);
            }
        }
        Ok((p, false))
    }

    /// Expected number of active relays, `sum_j N_j p_j`.
    pub fn expected_actives(&self, probs: &[f64]) -> f64 {
        self.classes.iter().zip(probs).map(|(c, p)| c.count as f64 * p).sum()
    }

    /// Expected payoff of a class-`j` relay activating with probability
    /// `q` while the classes play `probs`.
    pub fn deviation_payoff(&self, j: usize, q: f64, probs: &[f64]) -> Result<f64> {
        self.check_class(j)?;
        Ok(q * self.indifference(probs)?[j])
    }
}

/// Rewards making the `psi_j`-th active relay of each class break even:
/// `n_s r_j P_succ(T, psi_j) = g_j tau`.
pub fn design_rewards(contact: &ContactParams, costs: &[f64], targets: &[usize]) -> Result<Vec<f64>> {
    if costs.len() != targets.len() {
        return Err(invalid("targets", "one target per class is required"));
    }
    costs.iter().zip(targets).map(|(&g, &psi)| contact.reward_for_target(g, psi)).collect()
}

/// Largest `k >= 1` with `pred(k)` for a predicate that holds on an
/// initial run of integers and then fails forever; 0 if `pred(1)` fails.
fn last_true<F: Fn(usize) -> bool>(pred: F) -> usize {
    if !pred(1) {
        return 0;
    }
    let mut lo = 1;
    let mut hi = 2;
    while pred(hi) {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == usize::MAX {
            return lo;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn choose(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}
