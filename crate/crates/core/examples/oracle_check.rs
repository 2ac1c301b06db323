// Cross-check the solvers against brute-force enumeration on a handful of
// random small instances.

use mg_dtn::oracle::{run_suite, SuiteConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = SuiteConfig { instances: 8, max_n: 8, ..SuiteConfig::default() };
    let report = run_suite(&config)?;
    print!("{}", report.to_text());
    println!("largest discrepancy {:.2e}", report.max_discrepancy());
    if !report.all_pass() {
        return Err(format!("{} oracle checks failed", report.failures()).into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
