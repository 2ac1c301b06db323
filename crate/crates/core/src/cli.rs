//! Command-line front end: `run`, `list` and `oracle`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 unconverged learning
//! run, 3 internal invariant violation. `MG_DTN_THREADS` bounds the worker
//! threads used for parallel work.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::experiment::{self, ExperimentConfig, LoadedConfig, Provenance, RunStatus};
use crate::oracle::{self, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Environment variable bounding the number of worker threads.
pub const THREADS_ENV: &str = "MG_DTN_THREADS";

/// Built-in experiment configs, one per figure plus the oracle suite.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("oracle-suite", include_str!("../presets/oracle-suite.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Name, kind and description of each preset.
pub fn list_presets() -> Vec<(String, String, String)> {
    PRESETS
        .iter()
        .map(|(name, text)| {
            let cfg: ExperimentConfig = toml::from_str(text).expect("bundled presets parse");
            (name.to_string(), cfg.kind.as_str().to_string(), cfg.description)
        })
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "mg-dtn", version, about = "Relay activation games in delay tolerant networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a preset or a config file and write CSVs plus a manifest.
    Run {
        /// Preset name (see `list`).
        preset: Option<String>,
        /// Path to a TOML experiment config.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Output directory (default: out/<preset or config name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed overriding the config's.
        #[arg(long)]
        seed: Option<u64>,
        /// Dotted override such as `game.n=20`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Exit 0 even if a learning run does not meet its stopping test.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// List the presets.
    List,
    /// Run the randomized oracle equivalence suite.
    Oracle {
        /// Number of random instances.
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report as CSV and text into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads_from_env() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

/// Parse `args` (including the program name) and execute, writing human
/// output to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let threads = match threads_from_env() {
        Ok(n) => n,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start {threads} worker threads: {e}");
            return EXIT_USAGE;
        }
    };
    let (code, out, err) = pool.install(move || {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = match cli.command {
            Command::List => {
                for (name, kind, description) in list_presets() {
                    let _ = writeln!(out, "{name:<13} {kind:<18} {description}");
                }
                EXIT_OK
            }
            Command::Run { preset, config, out: dir, seed, set, allow_unconverged } => {
                let req = RunRequest { preset, config, out: dir, seed, set, allow_unconverged, threads };
                cmd_run(req, &mut out, &mut err)
            }
            Command::Oracle { n, seed, out: dir } => cmd_oracle(n, seed, dir, threads, &mut out, &mut err),
        };
        (code, out, err)
    });
    let _ = stdout.write_all(&out);
    let _ = stderr.write_all(&err);
    code
}

struct RunRequest {
    preset: Option<String>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    set: Vec<String>,
    allow_unconverged: bool,
    threads: usize,
}

fn cmd_run(req: RunRequest, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let (text, origin, name) = match (&req.preset, &req.config) {
        (Some(p), None) => match preset(p) {
            Some(t) => (t.to_string(), format!("preset:{p}"), p.clone()),
            None => {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                let _ = writeln!(stderr, "error: unknown preset `{p}`; known: {}", names.join(", "));
                return EXIT_USAGE;
            }
        },
        (None, Some(path)) => match std::fs::read_to_string(path) {
            Ok(t) => {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
                (t, path.display().to_string(), stem)
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: cannot read {}: {e}", path.display());
                return EXIT_USAGE;
            }
        },
        _ => {
            let _ = writeln!(stderr, "error: give a preset name or --config PATH");
            return EXIT_USAGE;
        }
    };
    let mut overrides = req.set.clone();
    if let Some(seed) = req.seed {
        overrides.push(format!("seed={seed}"));
    }
    let loaded: LoadedConfig = match experiment::load_config(&text, &origin, &overrides) {
        Ok(l) => l,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let output = match experiment::run_experiment(&loaded.config) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return if matches!(e, Error::Invariant(_)) { EXIT_INVARIANT } else { EXIT_USAGE };
        }
    };
    let dir = req.out.clone().unwrap_or_else(|| Path::new("out").join(&name));
    let prov = Provenance { preset: req.preset.clone(), config_path: req.config.clone(), overrides, threads: req.threads };
    if let Err(e) = experiment::write_outputs(&dir, &output, &prov) {
        let _ = writeln!(stderr, "error: writing {}: {e}", dir.display());
        return EXIT_USAGE;
    }
    for (k, v) in &output.summary {
        let _ = writeln!(stdout, "{k} = {v}");
    }
    let _ = writeln!(stdout, "status = {}", output.status.as_str());
    let _ = writeln!(stdout, "wrote {} files to {}", output.files.len() + 1, dir.display());
    if !output.violations.is_empty() {
        for v in &output.violations {
            let _ = writeln!(stderr, "invariant violated: {v}");
        }
        return EXIT_INVARIANT;
    }
    if output.status == RunStatus::Unconverged && !(req.allow_unconverged || loaded.config.allow_unconverged) {
        let _ = writeln!(stderr, "unconverged: stopping test not met within max_rounds (pass --allow-unconverged to accept)");
        return EXIT_UNCONVERGED;
    }
    EXIT_OK
}

fn cmd_oracle(n: usize, seed: Option<u64>, out: Option<PathBuf>, threads: usize, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let suite = SuiteConfig { instances: n, seed: seed.unwrap_or(SuiteConfig::default().seed), ..SuiteConfig::default() };
    let report = match oracle::run_suite(&suite) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let _ = write!(stdout, "{}", report.to_text());
    if let Some(dir) = out {
        let mut cfg_text = format!("kind = \"oracle\"\nseed = {}\n", suite.seed);
        cfg_text.push_str(&format!("[oracle]\ninstances = {}\nmax_n = {}\nresolution = {}\n", suite.instances, suite.max_n, suite.resolution));
        let written = experiment::load_config(&cfg_text, "oracle", &[])
            .map_err(|e| e.to_string())
            .and_then(|l| experiment::run_experiment(&l.config).map_err(|e| e.to_string()))
            .and_then(|o| {
                let prov = Provenance { threads, ..Default::default() };
                experiment::write_outputs(&dir, &o, &prov).map_err(|e| e.to_string())
            });
        if let Err(e) = written {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    }
    if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}
