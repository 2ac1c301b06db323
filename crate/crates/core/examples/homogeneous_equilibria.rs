// Equilibria of a homogeneous relay population: pure active counts, the
// symmetric fully mixed probability and partially mixed profiles.

use mg_dtn::contact::ContactParams;
use mg_dtn::game::{partial_eq_count_formula, GameSpec, UtilityScenario};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let contact = ContactParams::reference();
    let spec = GameSpec::with_target(40, 6.6e-4, 15, contact, UtilityScenario::ZeroSum)?;
    println!("N = {}, g = {}, derived r = {:.6}", spec.n, spec.g, spec.r);

    let pure = spec.pure_ne();
    println!("pure equilibrium active counts: {:?} (threshold {})", pure.counts, pure.threshold);

    let p = spec.fully_mixed_ne()?;
    println!("fully mixed p* = {p:.9}, expected actives {:.3}", p * spec.n as f64);

    let small = GameSpec::with_target(10, 6.6e-4, 4, contact, UtilityScenario::ZeroSum)?;
    let partial = small.enumerate_partial_eqs();
    println!(
        "N = 10, target 4: {} partially mixed equilibria (counting formula gives {})",
        partial.len(),
        partial_eq_count_formula(10, 4)
    );
    for eq in partial.iter().take(5) {
        println!(
            "  {} sure active, {} sure silent, p* = {:.6}, residual {:.1e}",
            eq.num_pure_t,
            eq.num_pure_s,
            eq.p_star,
            small.partial_residual(eq)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
