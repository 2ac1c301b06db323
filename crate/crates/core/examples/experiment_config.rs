// Drive an experiment from a config text with dotted-path overrides and
// write its CSVs and manifest, as the command-line runner does.

use mg_dtn::experiment::{load_config, run_experiment, write_outputs, Provenance};

const CONFIG: &str = r#"
kind = "mixed-ne"
description = "homogeneous mixed equilibrium"

[game]
n = 40
g = 6.6e-4
target = 15
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let overrides = vec!["game.n=30".to_string()];
    let loaded = load_config(CONFIG, "inline", &overrides)?;
    let output = run_experiment(&loaded.config)?;
    for (key, value) in &output.summary {
        println!("{key} = {value}");
    }

    let dir = std::env::temp_dir().join(format!("mg-dtn-example-{}", std::process::id()));
    let prov = Provenance { overrides, threads: 1, ..Provenance::default() };
    let written = write_outputs(&dir, &output, &prov)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
