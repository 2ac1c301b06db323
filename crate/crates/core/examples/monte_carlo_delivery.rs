// Seeded Monte Carlo: first-delivery frequencies against the closed form,
// and one simulated round with realized payoffs.

use mg_dtn::contact::ContactParams;
use mg_dtn::game::{GameSpec, UtilityScenario};
use mg_dtn::sim::{estimate_success_prob, play_round, rng_for, Action};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let contact = ContactParams::reference();
    for k in [1, 5, 15] {
        let est = estimate_success_prob(&contact, k, 100_000, 42)?;
        println!(
            "k = {k:>2}: simulated {:.5}, closed form {:.5}",
            est.p_hat(),
            contact.success_prob_first(k)?
        );
    }

    let spec = GameSpec::with_target(10, 6.6e-4, 4, contact, UtilityScenario::ZeroSum)?;
    let pop = spec.population();
    let actions: Vec<Action> = (0..10).map(|i| if i < 4 { Action::Active } else { Action::Silent }).collect();
    let mut rng = rng_for(42, 0);
    let outcome = play_round(&pop, &actions, &mut rng)?;
    println!("winner: {:?}", outcome.contests[0].winner);
    println!("payoffs: {:?}", outcome.payoffs);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
