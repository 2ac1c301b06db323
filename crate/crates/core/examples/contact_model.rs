// Two-hop delivery under exponential inter-meeting times: failure
// probability of one relay, delivery probability of `k` relays, per-relay
// first-delivery probability, relay targets and the break-even reward.

use mg_dtn::contact::{ContactParams, DeliveryTarget, TargetRule};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let contact = ContactParams::new(0.03, 100.0, 1)?;
    let q = contact.failure_prob();
    println!("Q_tau = {q:.6}");
    for k in [1, 5, 15, 30] {
        println!(
            "k = {k:>2}: delivery {:.6}, first-delivery per relay {:.6}",
            contact.delivery_prob(k),
            contact.success_prob_first(k)?
        );
    }

    let target = DeliveryTarget::new(0.99)?;
    let actives = contact.target_actives(&target)?;
    println!(
        "relays needed for 99% delivery: {} (direct), {} (quadratic rule)",
        actives.select(TargetRule::Direct),
        actives.select(TargetRule::Quadratic)
    );
    assert!(contact.delivery_prob(actives.direct) >= 0.99);

    let reward = contact.reward_for_target(6.6e-4, 15)?;
    println!("reward making 15 actives break even at g = 6.6e-4: {reward:.6}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
