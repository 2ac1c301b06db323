// Two device classes with different costs and rewards: per-class pure
// targets, the within-class symmetric equilibria and reward design for
// chosen per-class targets.

use mg_dtn::contact::ContactParams;
use mg_dtn::multiclass::{design_rewards, ClassSpec, MultiClassSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let contact = ContactParams::reference();
    let spec = MultiClassSpec::new(
        vec![
            ClassSpec { count: 20, g: 0.8e-4, r: 0.2 },
            ClassSpec { count: 20, g: 0.5e-4, r: 0.14 },
        ],
        contact,
    )?;

    for (j, t) in spec.pure_ne_per_class().iter().enumerate() {
        println!("class {}: pure target {}", j + 1, t.target);
    }
    for eq in spec.equilibria_2class()? {
        println!(
            "equilibrium p = ({:.6}, {:.6}) interior = {}, expected actives {:.3}",
            eq.p[0],
            eq.p[1],
            eq.interior,
            spec.expected_actives(&eq.p)
        );
    }

    let rewards = design_rewards(&contact, &[0.8e-4, 0.5e-4], &[25, 28])?;
    println!("rewards for targets (25, 28): {rewards:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
