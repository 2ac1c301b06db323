//! Brute-force ground truth for small instances.
//!
//! Everything here is computed from first principles: utilities straight
//! from the contact formula, expectations by summing over every opponent
//! action profile or by a convolution written out locally, roots by grid
//! search. No helper is shared with the solvers it checks.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::contact::{ContactParams, Routing};
use crate::error::{invalid, Error, Result};
use crate::game::{GameSpec, UtilityScenario};
use crate::learning::{self, Perception};
use crate::multiclass::{ClassSpec, MultiClassSpec};
use crate::population::{Population, Relay, SilentPayoff};
use crate::sim::{self, Action};
use crate::threshold::{CostDistribution, ThresholdGameSpec};

/// Largest population for exhaustive pure-profile enumeration.
pub const PURE_N_MAX: usize = 16;
/// Largest population for exact expectation by profile summation.
pub const EXPECT_N_MAX: usize = 20;
/// Agreement required between a solver and its oracle.
pub const AGREEMENT_TOL: f64 = 1e-6;

const TIE_RTOL: f64 = 1e-9;

fn miss_prob(c: &ContactParams) -> f64 {
    let lt = c.lambda * c.tau;
    match c.routing {
        Routing::TwoHop => (1.0 + lt) * (-lt).exp(),
        Routing::OneHop => (-lt).exp(),
    }
}

fn first_delivery(c: &ContactParams, k: usize) -> f64 {
    (1.0 - miss_prob(c).powi(k as i32)) / k as f64
}

fn u_active(pop: &Population, i: usize, k: usize) -> f64 {
    let r = &pop.relays[i];
    pop.contact.num_sources as f64 * r.reward * first_delivery(&pop.contact, k) - r.cost * pop.contact.tau
}

/// Silent payoff at a realized pure profile with `k` actives.
fn u_silent_pure(pop: &Population, i: usize, k: usize) -> f64 {
    match pop.silent {
        SilentPayoff::ZeroSum if k == 0 => 0.0,
        SilentPayoff::ZeroSum => -u_active(pop, i, k),
        SilentPayoff::FixedRegret { alpha } => -alpha,
        SilentPayoff::Zero => 0.0,
    }
}

/// Silent payoff of relay `i` facing `others` active opponents under mixed
/// play (the zero-sum scenario charges the forgone transmission payoff).
fn u_silent_mixed(pop: &Population, i: usize, others: usize) -> f64 {
    match pop.silent {
        SilentPayoff::ZeroSum => -u_active(pop, i, others + 1),
        SilentPayoff::FixedRegret { alpha } => -alpha,
        SilentPayoff::Zero => 0.0,
    }
}

fn tie_tol(pop: &Population, i: usize) -> f64 {
    let r = &pop.relays[i];
    TIE_RTOL * (pop.contact.num_sources as f64 * r.reward + r.cost * pop.contact.tau)
}

/// How a relay's payoff reads the active count in a multi-class population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reading {
    /// Payoffs depend on the total number of active relays.
    TotalCount,
    /// Payoffs depend on the number of active relays of the relay's class.
    PerClass,
}

fn is_set(mask: u64, i: usize) -> bool {
    mask >> i & 1 == 1
}

/// Every action profile (bit `i` set: relay `i` transmits) from which no
/// relay gains by switching, ascending. Ties within the payoff tolerance
/// count as stable.
pub fn enumerate_pure_ne(pop: &Population, reading: Reading, n_max: usize) -> Result<Vec<u64>> {
    let n = pop.len();
    if n > n_max.min(PURE_N_MAX) {
        return Err(Error::TooLarge { n, max: n_max.min(PURE_N_MAX) });
    }
    let classes = pop.num_classes();
    let stable = |mask: u64| {
        let mut per_class = vec![0usize; classes];
        for (i, r) in pop.relays.iter().enumerate() {
            if is_set(mask, i) {
                per_class[r.class] += 1;
            }
        }
        let total = mask.count_ones() as usize;
        (0..n).all(|i| {
            let k = match reading {
                Reading::TotalCount => total,
                Reading::PerClass => per_class[pop.relays[i].class],
            };
            let tol = tie_tol(pop, i);
            if is_set(mask, i) {
                u_active(pop, i, k) + tol >= u_silent_pure(pop, i, k - 1)
            } else {
                u_silent_pure(pop, i, k) + tol >= u_active(pop, i, k + 1)
            }
        })
    };
    Ok((0..1u64 << n).into_par_iter().filter(|&m| stable(m)).collect())
}

/// Active relays per class in a profile.
pub fn count_vector(pop: &Population, mask: u64) -> Vec<usize> {
    let mut counts = vec![0; pop.num_classes()];
    for (i, r) in pop.relays.iter().enumerate() {
        if is_set(mask, i) {
            counts[r.class] += 1;
        }
    }
    counts
}

/// Expected payoff of relay `i` playing `action` while every other relay
/// `j` transmits independently with probability `probs[j]`, summed over all
/// `2^(N-1)` opponent profiles.
pub fn exact_expected_utility(pop: &Population, i: usize, action: Action, probs: &[f64]) -> Result<f64> {
    let n = pop.len();
    if n > EXPECT_N_MAX {
        return Err(Error::TooLarge { n, max: EXPECT_N_MAX });
    }
    if probs.len() != n || i >= n {
        return Err(invalid("probs", "needs one probability per relay and a valid relay index"));
    }
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let term = |mask: u64| {
        let mut w = 1.0;
        for (b, &j) in others.iter().enumerate() {
            w *= if is_set(mask, b) { probs[j] } else { 1.0 - probs[j] };
        }
        let k = mask.count_ones() as usize;
        let u = match action {
            Action::Active => u_active(pop, i, k + 1),
            Action::Silent => u_silent_mixed(pop, i, k),
        };
        w * u
    };
    // Fixed chunks summed in order keep the result independent of the
    // thread count.
    const CHUNK: u64 = 1 << 12;
    let total = 1u64 << others.len();
    let partial: Vec<f64> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(total)).map(term).sum::<f64>())
        .collect();
    Ok(partial.iter().sum())
}

/// Distribution of the number of active relays other than `skip`, built by
/// direct convolution.
fn others_pmf(probs: &[f64], skip: usize) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for (j, &p) in probs.iter().enumerate() {
        if j == skip {
            continue;
        }
        let mut next = vec![0.0; pmf.len() + 1];
        for (k, &w) in pmf.iter().enumerate() {
            next[k] += w * (1.0 - p);
            next[k + 1] += w * p;
        }
        pmf = next;
    }
    pmf
}

/// `[E payoff of T, E payoff of S]` per relay, by direct convolution. Works
/// beyond the enumeration limit.
pub fn payoff_map(pop: &Population, probs: &[f64]) -> Vec<[f64; 2]> {
    (0..pop.len())
        .map(|i| {
            let pmf = others_pmf(probs, i);
            let (mut t, mut s) = (0.0, 0.0);
            for (k, &w) in pmf.iter().enumerate() {
                t += w * u_active(pop, i, k + 1);
                s += w * u_silent_mixed(pop, i, k);
            }
            [t, s]
        })
        .collect()
}

fn binomial_coef(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Mixed-indifference value of the homogeneous game at symmetric `p`:
/// `sum_k C(N-1,k) p^k (1-p)^(N-1-k) U(T,k+1)`, plus `alpha` under fixed
/// regret.
pub fn homogeneous_indifference(spec: &GameSpec, p: f64) -> f64 {
    let pop = spec.population();
    let m = spec.n - 1;
    let mut total = 0.0;
    for k in 0..=m {
        total += binomial_coef(m, k) * p.powi(k as i32) * (1.0 - p).powi((m - k) as i32) * u_active(&pop, 0, k + 1);
    }
    total + spec.scenario.alpha()
}

/// `[A_1, A_2]` of a two-class game at `(p1, p2)`, by a double sum over
/// the active counts of each class.
pub fn two_class_indifference(spec: &MultiClassSpec, p: [f64; 2]) -> [f64; 2] {
    let sizes = [spec.classes[0].count, spec.classes[1].count];
    let ns = spec.contact.num_sources as f64;
    let mut out = [0.0; 2];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut m = sizes;
        m[j] -= 1;
        let mut total = 0.0;
        for a in 0..=m[0] {
            let wa = binomial_coef(m[0], a) * p[0].powi(a as i32) * (1.0 - p[0]).powi((m[0] - a) as i32);
            for b in 0..=m[1] {
                let wb = binomial_coef(m[1], b) * p[1].powi(b as i32) * (1.0 - p[1]).powi((m[1] - b) as i32);
                total += wa * wb * first_delivery(&spec.contact, a + b + 1);
            }
        }
        let c = &spec.classes[j];
        *slot = ns * c.r * total - c.g * spec.contact.tau;
    }
    out
}

/// Intervals `[lo, hi]` of a uniform grid on `[0, 1]` over which `f`
/// changes sign (an exact zero at a grid point yields a zero-width pair).
pub fn grid_brackets_1d(f: impl Fn(f64) -> f64, resolution: usize) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = (0..=resolution).map(|i| i as f64 / resolution as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..=resolution {
        if vals[i] == 0.0 {
            out.push((xs[i], xs[i]));
        } else if i < resolution && vals[i + 1] != 0.0 && (vals[i] < 0.0) != (vals[i + 1] < 0.0) {
            out.push((xs[i], xs[i + 1]));
        }
    }
    out
}

fn refine_bracket(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let neg_lo = f(lo) < 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Symmetric mixed equilibria of the homogeneous game located on a grid of
/// `resolution >= 1000` cells and refined by bisection inside each bracket.
pub fn grid_mixed_ne_1d(spec: &GameSpec, resolution: usize) -> Result<Vec<GridRoot1>> {
    if resolution < 1000 {
        return Err(invalid("resolution", "must be >= 1000 for a one-dimensional grid"));
    }
    let f = |p: f64| homogeneous_indifference(spec, p);
    Ok(grid_brackets_1d(f, resolution)
        .into_iter()
        // Sign changes touching p = 0 or 1 are boundary behaviour, not mixing.
        .filter(|&(lo, hi)| hi > 0.0 && lo < 1.0 && !(lo == hi && (lo == 0.0 || lo == 1.0)))
        .map(|(lo, hi)| GridRoot1 { lo, hi, root: if lo == hi { lo } else { refine_bracket(f, lo, hi) } })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRoot1 {
    pub lo: f64,
    pub hi: f64,
    pub root: f64,
}

/// A grid cell whose corners show sign changes of both indifference
/// functions, with the root found by Newton iteration started at its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRoot2 {
    pub cell: [f64; 4],
    pub root: [f64; 2],
}

fn newton_2d(f: impl Fn([f64; 2]) -> [f64; 2], start: [f64; 2]) -> Option<[f64; 2]> {
    let mut p = start;
    for _ in 0..60 {
        let v = f(p);
        if v[0].abs().max(v[1].abs()) < 1e-15 {
            return Some(p);
        }
        let h = 1e-7;
        let mut jac = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut q = p;
            q[c] += h;
            let w = f(q);
            jac[0][c] = (w[0] - v[0]) / h;
            jac[1][c] = (w[1] - v[1]) / h;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let d0 = (v[0] * jac[1][1] - v[1] * jac[0][1]) / det;
        let d1 = (jac[0][0] * v[1] - jac[1][0] * v[0]) / det;
        let next = [p[0] - d0, p[1] - d1];
        if !(0.0..=1.0).contains(&next[0]) || !(0.0..=1.0).contains(&next[1]) {
            return None;
        }
        let step = d0.abs().max(d1.abs());
        p = next;
        if step < 1e-15 {
            break;
        }
    }
    let v = f(p);
    (v[0].abs().max(v[1].abs()) < 1e-10).then_some(p)
}

/// Interior equilibria of a two-class game from a `resolution x resolution`
/// grid (`resolution >= 200`), deduplicated.
pub fn grid_mixed_ne_2d(spec: &MultiClassSpec, resolution: usize) -> Result<Vec<GridRoot2>> {
    if resolution < 200 {
        return Err(invalid("resolution", "must be >= 200 per axis for a two-dimensional grid"));
    }
    if spec.classes.len() != 2 || spec.classes.iter().any(|c| c.count == 0) {
        return Err(invalid("classes", "needs exactly two non-empty classes"));
    }
    let f = |p: [f64; 2]| two_class_indifference(spec, p);
    let h = 1.0 / resolution as f64;
    let values: Vec<Vec<[f64; 2]>> = (0..=resolution)
        .into_par_iter()
        .map(|a| (0..=resolution).map(|b| f([a as f64 * h, b as f64 * h])).collect())
        .collect();
    let mut roots: Vec<GridRoot2> = Vec::new();
    for a in 0..resolution {
        for b in 0..resolution {
            let corners = [values[a][b], values[a + 1][b], values[a][b + 1], values[a + 1][b + 1]];
            let changes = |c: usize| {
                let neg = corners.iter().any(|v| v[c] <= 0.0);
                let pos = corners.iter().any(|v| v[c] >= 0.0);
                neg && pos
            };
            if !(changes(0) && changes(1)) {
                continue;
            }
            let centre = [(a as f64 + 0.5) * h, (b as f64 + 0.5) * h];
            if let Some(root) = newton_2d(f, centre) {
                let interior = root.iter().all(|&x| x > 0.0 && x < 1.0);
                let fresh = roots.iter().all(|r| (r.root[0] - root[0]).abs().max((r.root[1] - root[1]).abs()) > 1e-7);
                if interior && fresh {
                    // The cell that holds the refined root (it may sit on a grid line).
                    let ia = ((root[0] / h).floor() as usize).min(resolution - 1) as f64;
                    let ib = ((root[1] / h).floor() as usize).min(resolution - 1) as f64;
                    let cell = [ia * h, (ia + 1.0) * h, ib * h, (ib + 1.0) * h];
                    roots.push(GridRoot2 { cell, root });
                }
            }
        }
    }
    Ok(roots)
}

/// Threshold cost of a threshold game located by a grid on `[0, g_max]`
/// and bisection, from a locally written `Theta`.
pub fn threshold_by_grid(spec: &ThresholdGameSpec, resolution: usize) -> Option<f64> {
    let c = &spec.contact;
    let ns_r = c.num_sources as f64 * spec.reward;
    let g_max = ns_r * first_delivery(c, 1) / c.tau;
    let theta = |g: f64| {
        let q = spec.costs.cdf(g);
        let m = spec.n - 1;
        let mut e = 0.0;
        for k in 0..=m {
            e += binomial_coef(m, k) * q.powi(k as i32) * (1.0 - q).powi((m - k) as i32) * first_delivery(c, k + 1);
        }
        ns_r * e - g * c.tau
    };
    if theta(g_max) >= 0.0 {
        return Some(g_max);
    }
    let brackets = grid_brackets_1d(|x| theta(x * g_max), resolution);
    let &(lo, hi) = brackets.first()?;
    Some(if lo == hi { lo * g_max } else { refine_bracket(theta, lo * g_max, hi * g_max) })
}

/// Result of the damped fixed-point iteration `x <- (1-d) x + d G(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub x: Vec<Perception>,
    pub residual: f64,
    pub iterations: usize,
}

/// Independent solver for the perception fixed point `G(x) = x` at
/// temperature `beta`, using [`payoff_map`] in place of the learner's map.
pub fn damped_fixed_point(pop: &Population, beta: f64, damping: f64, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(invalid("damping", "must lie in (0, 1]"));
    }
    let mut x = vec![Perception::default(); pop.len()];
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let probs: Vec<f64> = x.iter().map(|&xi| learning::logit_policy(xi, beta)).collect();
        let g = payoff_map(pop, &probs);
        residual = g.iter().zip(&x).map(|(gi, xi)| (gi[0] - xi.t).abs().max((gi[1] - xi.s).abs())).fold(0.0, f64::max);
        if residual < tol {
            return Ok(FixedPoint { x, residual, iterations: it });
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            xi.t += damping * (gi[0] - xi.t);
            xi.s += damping * (gi[1] - xi.s);
        }
    }
    Ok(FixedPoint { x, residual, iterations: max_iter })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    /// A known, documented difference between a published value and what
    /// the model gives.
    #[serde(rename = "RECORDED")]
    Recorded,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Recorded => "RECORDED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub instance: String,
    pub check: String,
    pub verdict: Verdict,
    pub discrepancy: f64,
    pub detail: String,
}

/// Outcome of comparing solver outputs against the oracle.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn push(&mut self, instance: &str, check: &str, verdict: Verdict, discrepancy: f64, detail: impl Into<String>) {
        self.checks.push(Check {
            instance: instance.to_string(),
            check: check.to_string(),
            verdict,
            discrepancy,
            detail: detail.into(),
        });
    }

    pub fn max_discrepancy(&self) -> f64 {
        self.checks.iter().map(|c| c.discrepancy).filter(|d| d.is_finite()).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail).count()
    }

    pub fn all_pass(&self) -> bool {
        self.failures() == 0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{:<8} {:<14} {:<16} {:.3e}  {}", c.verdict.as_str(), c.instance, c.check, c.discrepancy, c.detail);
        }
        let _ = writeln!(
            s,
            "{} checks, {} failed, max discrepancy {:.3e}",
            self.checks.len(),
            self.failures(),
            self.max_discrepancy()
        );
        s
    }

    /// `instance,check,verdict,discrepancy,detail`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "instance,check,verdict,discrepancy,detail")?;
        for c in &self.checks {
            writeln!(
                w,
                "{},{},{},{:e},\"{}\"",
                c.instance,
                c.check,
                c.verdict.as_str(),
                c.discrepancy,
                c.detail.replace('"', "\"\"")
            )?;
        }
        Ok(())
    }
}

/// Parameters of a randomized equivalence suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub instances: usize,
    /// Largest population drawn.
    pub max_n: usize,
    pub seed: u64,
    /// Cells of the one-dimensional grid; the two-dimensional grid uses a
    /// fifth of this per axis (at least 200).
    pub resolution: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { instances: 50, max_n: 12, seed: 7, resolution: 2000 }
    }
}

/// One randomly drawn instance of the suite.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Homogeneous(GameSpec),
    TwoClass(MultiClassSpec),
    Threshold(ThresholdGameSpec),
}

struct Draw(rand_chacha::ChaCha20Rng);

impl Draw {
    fn unit(&mut self) -> f64 {
        sim::uniform01(&mut self.0)
    }
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
    fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((hi - lo + 1) as f64 * self.unit()) as usize
    }
}

/// Draw instance `index` of a suite. Instances cycle through zero-sum,
/// fixed-regret, two-class and threshold games.
pub fn draw_instance(config: &SuiteConfig, index: usize) -> Result<Instance> {
    let mut d = Draw(sim::rng_for(config.seed, index as u64));
    let max_n = config.max_n.clamp(2, PURE_N_MAX);
    let contact = ContactParams::new(d.range(0.01, 0.05), d.range(50.0, 150.0), d.int(1, 2) as u32)?;
    let g = d.range(1e-4, 1e-3);
    match index % 4 {
        0 | 1 => {
            let n = d.int(2, max_n);
            let psi = d.int(1, n);
            let r = contact.reward_for_target(g, psi)? * d.range(0.9, 1.1);
            let scenario = if index % 4 == 0 {
                UtilityScenario::ZeroSum
            } else {
                UtilityScenario::FixedRegret { alpha: d.range(0.0, 0.3) * g * contact.tau }
            };
            Ok(Instance::Homogeneous(GameSpec::new(n, g, r, contact, scenario)?))
        }
        2 => {
            let n1 = d.int(1, max_n / 2);
            let n2 = d.int(1, max_n - n1);
            let psi = d.int(1, n1 + n2);
            let g2 = g * d.range(0.5, 1.5);
            let r1 = contact.reward_for_target(g, psi)? * d.range(0.85, 1.15);
            let r2 = contact.reward_for_target(g2, psi)? * d.range(0.85, 1.15);
            Ok(Instance::TwoClass(MultiClassSpec::new(
                vec![ClassSpec { count: n1, g, r: r1 }, ClassSpec { count: n2, g: g2, r: r2 }],
                contact,
            )?))
        }
        _ => {
            let n = d.int(2, max_n);
            let r = contact.reward_for_target(g, d.int(1, n))?;
            let costs = if d.unit() < 0.5 {
                CostDistribution::uniform(0.0, 2.0 * g)?
            } else {
                CostDistribution::exponential(g)?
            };
            Ok(Instance::Threshold(ThresholdGameSpec::new(n, r, contact, costs)?))
        }
    }
}

fn random_probs(n: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = sim::rng_for(seed ^ 0x5eed, index as u64);
    (0..n).map(|_| sim::uniform01(&mut rng)).collect()
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn check_expected_utilities(report: &mut OracleReport, name: &str, pop: &Population, probs: &[f64]) -> Result<()> {
    let solver = learning::payoff_map_from_probs(pop, probs);
    let mut worst: f64 = 0.0;
    for (i, g) in solver.iter().enumerate() {
        let t = exact_expected_utility(pop, i, Action::Active, probs)?;
        let s = exact_expected_utility(pop, i, Action::Silent, probs)?;
        worst = worst.max((t - g[0]).abs()).max((s - g[1]).abs());
    }
    report.push(name, "expected-utility", verdict(worst <= AGREEMENT_TOL), worst, format!("{} relays", pop.len()));
    Ok(())
}

fn profile_set_check(report: &mut OracleReport, name: &str, check: &str, oracle: &[u64], predicted: &[u64]) {
    let same = oracle == predicted;
    report.push(
        name,
        check,
        verdict(same),
        if same { 0.0 } else { 1.0 },
        format!("{} stable profiles by enumeration, {} predicted", oracle.len(), predicted.len()),
    );
}

/// Compare every solver against the oracle on one instance.
pub fn check_instance(report: &mut OracleReport, name: &str, instance: &Instance, config: &SuiteConfig, index: usize) -> Result<()> {
    match instance {
        Instance::Homogeneous(spec) => {
            let pop = spec.population();
            let oracle = enumerate_pure_ne(&pop, Reading::TotalCount, PURE_N_MAX)?;
            let counts = spec.pure_ne().counts;
            let predicted: Vec<u64> =
                (0..1u64 << spec.n).filter(|m| counts.contains(&(m.count_ones() as usize))).collect();
            profile_set_check(report, name, "pure-ne", &oracle, &predicted);

            let grid = grid_mixed_ne_1d(spec, config.resolution.max(1000))?;
            match (spec.fully_mixed_ne(), grid.as_slice()) {
                (Ok(p), [g]) => {
                    let d = (p - g.root).abs();
                    report.push(name, "mixed-ne", verdict(d <= AGREEMENT_TOL), d, format!("solver {p:.9}, oracle {:.9}", g.root));
                }
                (Err(Error::NoInteriorEquilibrium(_)), []) => {
                    report.push(name, "mixed-ne", Verdict::Pass, 0.0, "no interior root on either side")
                }
                (solver, grid) => report.push(
                    name,
                    "mixed-ne",
                    Verdict::Fail,
                    f64::INFINITY,
                    format!("solver {solver:?}, oracle roots {:?}", grid.iter().map(|g| g.root).collect::<Vec<_>>()),
                ),
            }
            let p = random_probs(1, config.seed, index)[0];
            let d = (spec.indifference_fn(p) - homogeneous_indifference(spec, p)).abs();
            report.push(name, "indifference", verdict(d <= AGREEMENT_TOL), d, format!("p = {p:.6}"));
            check_expected_utilities(report, name, &pop, &random_probs(spec.n, config.seed, index))?;
        }
        Instance::TwoClass(spec) => {
            let pop = spec.population();
            let oracle = enumerate_pure_ne(&pop, Reading::TotalCount, PURE_N_MAX)?;
            let vectors = spec.pure_ne_total_count().vectors;
            let predicted: Vec<u64> =
                (0..1u64 << pop.len()).filter(|&m| vectors.contains(&count_vector(&pop, m))).collect();
            profile_set_check(report, name, "pure-ne-total", &oracle, &predicted);

            let oracle = enumerate_pure_ne(&pop, Reading::PerClass, PURE_N_MAX)?;
            let per_class = spec.pure_ne_per_class();
            let predicted: Vec<u64> = (0..1u64 << pop.len())
                .filter(|&m| count_vector(&pop, m).iter().zip(&per_class).all(|(a, t)| t.counts.contains(a)))
                .collect();
            profile_set_check(report, name, "pure-ne-class", &oracle, &predicted);

            let grid = grid_mixed_ne_2d(spec, (config.resolution / 5).max(200))?;
            let interior: Vec<[f64; 2]> =
                spec.equilibria_2class()?.into_iter().filter(|e| e.interior).map(|e| e.p).collect();
            let mut worst: f64 = 0.0;
            let mut matched = interior.len() == grid.len();
            for p in &interior {
                let best = grid
                    .iter()
                    .map(|g| (g.root[0] - p[0]).abs().max((g.root[1] - p[1]).abs()))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
                matched &= best <= AGREEMENT_TOL;
            }
            report.push(
                name,
                "mixed-ne-2class",
                verdict(matched),
                if matched { worst } else { f64::INFINITY },
                format!("{} interior roots from solver, {} from grid", interior.len(), grid.len()),
            );
            let probs = random_probs(2, config.seed, index);
            let solver = spec.indifference(&probs)?;
            let local = two_class_indifference(spec, [probs[0], probs[1]]);
            let d = (solver[0] - local[0]).abs().max((solver[1] - local[1]).abs());
            report.push(name, "indifference", verdict(d <= AGREEMENT_TOL), d, format!("p = ({:.4}, {:.4})", probs[0], probs[1]));
            let probs = random_probs(pop.len(), config.seed, index);
            check_expected_utilities(report, name, &pop, &probs)?;
            // Same relays under the fixed-regret convention.
            let regret = Population::new(
                pop.contact,
                pop.relays.clone(),
                SilentPayoff::FixedRegret { alpha: 0.1 * spec.classes[0].g * spec.contact.tau },
            )?;
            check_expected_utilities(report, &format!("{name}-regret"), &regret, &probs)?;
        }
        Instance::Threshold(spec) => {
            let solver = spec.solve_threshold()?.g_th;
            match threshold_by_grid(spec, config.resolution.max(1000)) {
                Some(g) => {
                    let d = (solver - g).abs() / g.max(1e-300);
                    report.push(name, "threshold", verdict(d <= AGREEMENT_TOL), d, format!("solver {solver:.6e}, oracle {g:.6e} (relative)"));
                }
                None => report.push(name, "threshold", Verdict::Fail, f64::INFINITY, "oracle found no sign change"),
            }
            let relays = vec![Relay { reward: spec.reward, cost: spec.costs.mean(), class: 0 }; spec.n];
            let pop = Population::new(spec.contact, relays, SilentPayoff::Zero)?;
            check_expected_utilities(report, name, &pop, &random_probs(spec.n, config.seed, index))?;
        }
    }
    Ok(())
}

/// Draw and check `config.instances` random instances.
pub fn run_suite(config: &SuiteConfig) -> Result<OracleReport> {
    if config.instances == 0 {
        return Err(invalid("instances", "must be >= 1"));
    }
    let mut report = OracleReport::default();
    for index in 0..config.instances {
        let instance = draw_instance(config, index)?;
        let kind = match instance {
            Instance::Homogeneous(GameSpec { scenario: UtilityScenario::ZeroSum, .. }) => "zs",
            Instance::Homogeneous(_) => "fr",
            Instance::TwoClass(_) => "mc",
            Instance::Threshold(_) => "th",
        };
        check_instance(&mut report, &format!("{kind}{index:03}"), &instance, config, index)?;
    }
    Ok(report)
}
