// Logit learning with stochastic-approximation perceptions, run in the
// contraction regime so it settles on the unique fixed point, with the
// approximation certificate of the final profile.

use mg_dtn::contact::ContactParams;
use mg_dtn::game::{GameSpec, UtilityScenario};
use mg_dtn::learning::{
    best_deviation_gains, contraction_margin, epsilon_bound, fixed_point_residual, run_learning, LearnerConfig,
    PayoffMode, StepRule,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GameSpec::with_target(20, 6.6e-4, 8, ContactParams::reference(), UtilityScenario::ZeroSum)?;
    let pop = spec.population();
    let config = LearnerConfig {
        beta: 0.5,
        step: StepRule::Power { exponent: 0.6 },
        payoff: PayoffMode::Exact,
        eps_stop: 1e-9,
        max_rounds: 20_000,
        ..LearnerConfig::default()
    };
    println!("contraction margin: {:.4}", contraction_margin(&pop, config.beta));

    let result = run_learning(&pop, &config, 1)?;
    let x = &result.final_state;
    let eps = epsilon_bound(x, config.beta);
    let gain = best_deviation_gains(&pop, x, config.beta).into_iter().fold(0.0, f64::max);
    println!("rounds {} converged {}", result.rounds, result.converged);
    println!("residual {:.2e}", fixed_point_residual(&pop, x, config.beta));
    println!("largest deviation gain {gain:.4e} <= epsilon bound {:.4e}", eps.value);
    println!("tail mean activation {:.4}", result.trajectory.tail_mean_sigma(0.2));
    assert!(gain <= eps.value + 1e-9);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
