//! Counting distributions for the number of active opponents.
//!
//! Everything is built by convolving Bernoulli trials one at a time, which
//! never forms `(1 - p)^n` or a binomial coefficient directly and so does not
//! underflow or overflow for large populations.

/// Distribution of the number of successes among independent trials with
/// the given success probabilities. Entry `k` is `P(K = k)`.
pub fn poisson_binomial(probs: &[f64]) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(1.0);
    for &p in probs {
        add_trial(&mut pmf, p);
    }
    pmf
}

/// Binomial(n, p) probability mass function.
pub fn binomial(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(n + 1);
    pmf.push(1.0);
    for _ in 0..n {
        add_trial(&mut pmf, p);
    }
    pmf
}

/// Convolve `pmf` with one more Bernoulli(`p`) trial in place.
pub fn add_trial(pmf: &mut Vec<f64>, p: f64) {
    let q = 1.0 - p;
    pmf.push(0.0);
    for k in (1..pmf.len()).rev() {
        pmf[k] = pmf[k] * q + pmf[k - 1] * p;
    }
    pmf[0] *= q;
}

/// Remove one Bernoulli(`p`) trial from the distribution `full`.
///
/// Runs the recursion forward when `p <= 1/2` and backward otherwise, so the
/// division is always by the larger of `p` and `1 - p` and rounding errors
/// are damped rather than amplified.
pub fn remove_trial(full: &[f64], p: f64) -> Vec<f64> {
    let n = full.len() - 1;
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let q = 1.0 - p;
    if p <= 0.5 {
        let mut prev = 0.0;
        for k in 0..n {
            let v = (full[k] - p * prev) / q;
            out[k] = v.max(0.0);
            prev = out[k];
        }
    } else {
        let mut next = 0.0;
        for k in (0..n).rev() {
            let v = (full[k + 1] - q * next) / p;
            out[k] = v.max(0.0);
            next = out[k];
        }
    }
    out
}

/// `E[f(K)]` for a probability mass function over `K = 0, 1, ...`.
pub fn expect<F: Fn(usize) -> f64>(pmf: &[f64], f: F) -> f64 {
    pmf.iter().enumerate().map(|(k, &w)| if w == 0.0 { 0.0 } else { w * f(k) }).sum()
}
