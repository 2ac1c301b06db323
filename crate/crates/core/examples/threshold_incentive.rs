// Privately known costs: the threshold equilibrium under an exponential
// cost distribution and reward sizing from the mean cost.

use mg_dtn::contact::ContactParams;
use mg_dtn::threshold::{incited_actives, reward_from_mean, CostDistribution, ThresholdGameSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let contact = ContactParams::reference();
    let reward = reward_from_mean(&contact, 0.005, 20)?;
    println!("reward for 20 actives at mean cost 0.005: {reward:.6}");
    println!(
        "actives that reward incites at cost 0.0038: {}",
        incited_actives(&contact, 0.0038, reward, 40)
    );

    for r in [2.0, 6.0, 10.0] {
        let spec = ThresholdGameSpec::new(40, r, contact, CostDistribution::exponential(0.005)?)?;
        let eq = spec.solve_threshold()?;
        println!(
            "R = {r:>4}: g_th = {:.6}, P(active) = {:.4}, expected actives {:.3}",
            eq.g_th,
            eq.activation_prob,
            spec.expected_actives()?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
