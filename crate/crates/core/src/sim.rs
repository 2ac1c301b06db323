//! Seeded Monte Carlo realization of message rounds.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Independent replications or blocks use the same
//! seed with `set_stream(index)`, so results do not depend on how work is
//! split across threads. Uniforms are `(next_u64 >> 11) * 2^-53` and
//! exponentials are drawn by inversion, `-ln(1 - u) / rate`.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactParams, Routing};
use crate::error::{invalid, Result};
use crate::population::Population;

/// Replications handled by one generator stream in [`estimate_success_prob`].
pub const BLOCK_SIZE: u64 = 1 << 16;

/// Generator for `stream` under master `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on `[0, 1)` with 53 random bits.
pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -(-uniform01(rng)).ln_1p() / rate
}

/// Uncensored delivery time of one relay: one inter-meeting time per hop.
pub fn sample_delivery_time<R: RngCore + ?Sized>(contact: &ContactParams, rng: &mut R) -> f64 {
    match contact.routing {
        Routing::TwoHop => exponential(rng, contact.lambda) + exponential(rng, contact.lambda),
        Routing::OneHop => exponential(rng, contact.lambda),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Transmit (T).
    Active,
    /// Stay silent (S).
    Silent,
}

impl Action {
    pub fn is_active(self) -> bool {
        self == Action::Active
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Action::Active => "T",
            Action::Silent => "S",
        }
    }
}

/// One source's first-delivery contest.
#[derive(Debug, Clone, PartialEq)]
pub struct Contest {
    /// Per relay; infinite for silent relays and for copies not delivered
    /// within the lifetime.
    pub delivery_times: Vec<f64>,
    /// First relay to deliver; ties go to the lowest index.
    pub winner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub actions: Vec<Action>,
    /// One contest per source.
    pub contests: Vec<Contest>,
    pub payoffs: Vec<f64>,
}

impl RoundOutcome {
    pub fn active_count(&self) -> usize {
        self.actions.iter().filter(|a| a.is_active()).count()
    }
}

/// Draw delivery times for the active relays and settle one contest.
fn contest<R: RngCore + ?Sized>(contact: &ContactParams, actions: &[Action], rng: &mut R) -> Contest {
    let mut delivery_times = vec![f64::INFINITY; actions.len()];
    let mut winner: Option<usize> = None;
    for (i, a) in actions.iter().enumerate() {
        if !a.is_active() {
            continue;
        }
        let t = sample_delivery_time(contact, rng);
        if t <= contact.tau {
            delivery_times[i] = t;
            if winner.is_none_or(|w| t < delivery_times[w]) {
                winner = Some(i);
            }
        }
    }
    Contest { delivery_times, winner }
}

/// Play one round: every source runs a contest among the active relays,
/// winners collect `r_i` per contest won, active relays pay `g_i tau`, and
/// silent relays receive the population's silent payoff at the realized
/// active count.
pub fn play_round<R: RngCore + ?Sized>(pop: &Population, actions: &[Action], rng: &mut R) -> Result<RoundOutcome> {
    if actions.len() != pop.len() {
        return Err(invalid("actions", format!("expected {} actions, got {}", pop.len(), actions.len())));
    }
    let k = actions.iter().filter(|a| a.is_active()).count();
    let contests: Vec<Contest> = (0..pop.contact.num_sources).map(|_| contest(&pop.contact, actions, rng)).collect();
    let payoffs = actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let relay = &pop.relays[i];
            if a.is_active() {
                let wins = contests.iter().filter(|c| c.winner == Some(i)).count();
                wins as f64 * relay.reward - relay.cost * pop.contact.tau
            } else {
                pop.silent_utility(i, k)
            }
        })
        .collect();
    Ok(RoundOutcome { actions: actions.to_vec(), contests, payoffs })
}

/// Win counts from [`estimate_success_prob`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessEstimate {
    /// Wins per relay index.
    pub wins: Vec<u64>,
    pub reps: u64,
}

impl SuccessEstimate {
    /// Empirical probability that relay 0 wins.
    pub fn p_hat(&self) -> f64 {
        self.wins[0] as f64 / self.reps as f64
    }
}

/// Frequency with which each of `k` active relays is the first to deliver,
/// over `reps` independent single-source contests. Replications are split
/// into blocks of [`BLOCK_SIZE`], block `b` using stream `b` of `seed`.
pub fn estimate_success_prob(contact: &ContactParams, k: usize, reps: u64, seed: u64) -> Result<SuccessEstimate> {
    contact.validate()?;
    if k == 0 {
        return Err(invalid("k", "needs at least one active relay"));
    }
    if reps == 0 {
        return Err(invalid("reps", "needs at least one replication"));
    }
    let blocks = reps.div_ceil(BLOCK_SIZE);
    let partial: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, b);
            let n = BLOCK_SIZE.min(reps - b * BLOCK_SIZE);
            let mut wins = vec![0u64; k];
            for _ in 0..n {
                let mut best = f64::INFINITY;
                let mut winner = None;
                for i in 0..k {
                    let t = sample_delivery_time(contact, &mut rng);
                    if t <= contact.tau && t < best {
                        best = t;
                        winner = Some(i);
                    }
                }
                if let Some(w) = winner {
                    wins[w] += 1;
                }
            }
            wins
        })
        .collect();
    let mut wins = vec![0u64; k];
    for block in partial {
        for (w, b) in wins.iter_mut().zip(block) {
            *w += b;
        }
    }
    Ok(SuccessEstimate { wins, reps })
}
