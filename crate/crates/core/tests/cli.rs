// End-to-end tests of the `mg-dtn` binary: presets, reproducibility,
// manifest contents, diagnostics and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use mg_dtn::cli::{list_presets, preset, EXIT_INVARIANT, EXIT_OK, EXIT_UNCONVERGED, EXIT_USAGE, THREADS_ENV};

fn mg_dtn(args: &[&str]) -> Output {
    mg_dtn_env(args, None)
}

fn mg_dtn_env(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mg-dtn"));
    cmd.args(args).env_remove(THREADS_ENV);
    if let Some(t) = threads {
        cmd.env(THREADS_ENV, t);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_manifest(dir: &Path) -> toml::Value {
    let text = std::fs::read_to_string(dir.join("manifest.toml")).expect("manifest written");
    text.parse().expect("manifest is TOML")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Every scalar leaf of `sub` is present with an equal value in `sup`.
fn assert_contained(sub: &toml::Value, sup: &toml::Value, path: &str) {
    match (sub, sup) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, v) in a {
                let next = format!("{path}.{k}");
                let other = b.get(k).unwrap_or_else(|| panic!("{next} missing from manifest"));
                assert_contained(v, other, &next);
            }
        }
        (toml::Value::Array(a), toml::Value::Array(b)) => {
            assert_eq!(a.len(), b.len(), "{path} length");
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                assert_contained(x, y, &format!("{path}[{i}]"));
            }
        }
        (toml::Value::Integer(a), toml::Value::Float(b)) => assert_eq!(*a as f64, *b, "{path}"),
        (a, b) => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn list_names_every_preset() {
    let out = mg_dtn(&["list"]);
    assert_eq!(code(&out), EXIT_OK);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "oracle-suite"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} not listed");
    }
    assert_eq!(list_presets().len(), 8);
}

#[test]
fn identical_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = mg_dtn(&["run", "fig4", "--seed", seed, "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    }
    let (fa, fb, fc) = (csv_files(&a), csv_files(&b), csv_files(&c));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
    assert_ne!(fa, fc, "a different seed should change the trajectory");
}

#[test]
fn manifest_holds_every_configured_parameter() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, _, _) in list_presets() {
        let dir = tmp.path().join(&name);
        let out = mg_dtn(&["run", &name, "--out", dir.to_str().unwrap(), "--set", "seed=3"]);
        assert_eq!(code(&out), EXIT_OK, "{name}: {}", stderr(&out));
        let manifest = read_manifest(&dir);
        let mut source: toml::Value = preset(&name).unwrap().parse().unwrap();
        source.as_table_mut().unwrap().insert("seed".into(), toml::Value::Integer(3));
        assert_contained(&source, &manifest["config"], "config");

        assert_eq!(manifest["run"]["seed"].as_integer(), Some(3));
        assert_eq!(manifest["run"]["preset"].as_str(), Some(name.as_str()));
        assert_eq!(manifest["artifact"]["version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
        assert!(manifest["config"]["contact"]["lambda"].is_float());
        let listed: Vec<&str> = manifest["outputs"]["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        for file in &listed {
            assert!(dir.join(file).exists(), "{name}: {file} listed but missing");
        }
    }
}

#[test]
fn derived_reward_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mg_dtn(&["run", "fig2", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    let manifest = read_manifest(tmp.path());
    let r = manifest["config"]["game"]["r"].as_float().expect("resolved reward");
    assert!((r - 0.99).abs() < 1e-6);
    assert!(manifest["derived"]["game.r"].as_str().unwrap().contains("P_succ(T, 15)"));
}

#[test]
fn fig2_preset_reaches_target_share() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mg_dtn(&["run", "fig2", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_OK);
    let manifest = read_manifest(tmp.path());
    let sigma: f64 = manifest["summary"]["tail_mean_sigma"].as_str().unwrap().parse().unwrap();
    assert!((0.30..=0.40).contains(&sigma));
    let rows = std::fs::read_to_string(tmp.path().join("rounds.csv")).unwrap();
    assert!(rows.lines().count() > 100);
}

#[test]
fn overrides_and_config_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("mixed.toml");
    std::fs::write(&cfg, "kind = \"mixed-ne\"\n\n[game]\nn = 40\ng = 6.6e-4\ntarget = 15\n").unwrap();
    let dir = tmp.path().join("out");
    let out = mg_dtn(&["run", "--config", cfg.to_str().unwrap(), "--set", "game.n=30", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    let manifest = read_manifest(&dir);
    assert_eq!(manifest["config"]["game"]["n"].as_integer(), Some(30));
    assert_eq!(manifest["run"]["overrides"].as_array().unwrap().len(), 1);
    assert!(dir.join("mixed_ne.csv").exists());
}

#[test]
fn invalid_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "kind = \"mixed-ne\"\n\n[game]\nn = 1\ng = 6.6e-4\ntarget = 15\n").unwrap();
    let out = mg_dtn(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_USAGE);
    let err = stderr(&out);
    assert!(err.contains("bad.toml:4:"), "{err}");

    std::fs::write(&cfg, "kind = \"mixed-ne\"\nbogus = 1\n").unwrap();
    let out = mg_dtn(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_USAGE);
    assert!(stderr(&out).contains("bad.toml:2:"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mg_dtn(&["run", "no-such-preset"])), EXIT_USAGE);
    assert_eq!(code(&mg_dtn(&["run"])), EXIT_USAGE);
    assert_eq!(code(&mg_dtn(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(code(&mg_dtn(&["run", "fig4", "--set", "learner.nope=1"])), EXIT_USAGE);
    assert_eq!(code(&mg_dtn(&["--help"])), EXIT_OK);
}

#[test]
fn unconverged_exit_code_and_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let tight = ["learner.max_rounds=50", "learner.min_rounds=1"];
    let mut args = vec!["run", "fig4", "--out", dir];
    for s in &tight {
        args.extend(["--set", s]);
    }
    let out = mg_dtn(&args);
    assert_eq!(code(&out), EXIT_UNCONVERGED);
    assert!(String::from_utf8_lossy(&out.stdout).contains("unconverged") || stderr(&out).contains("unconverged"));
    assert_eq!(read_manifest(tmp.path())["run"]["status"].as_str(), Some("unconverged"));

    args.push("--allow-unconverged");
    assert_eq!(code(&mg_dtn(&args)), EXIT_OK);
}

#[test]
fn oracle_command_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mg_dtn(&["oracle", "--n", "6", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    assert_ne!(code(&out), EXIT_INVARIANT);
    let report = std::fs::read_to_string(tmp.path().join("oracle_report.csv")).unwrap();
    assert!(report.starts_with("instance,check,verdict,discrepancy,detail"));
    assert!(!report.contains(",FAIL,"));
}

#[test]
fn thread_count_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("t2");
    let args = ["run", "oracle-suite", "--set", "oracle.instances=4", "--out", dir.to_str().unwrap()];
    let out = mg_dtn_env(&args, Some("2"));
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    assert_eq!(read_manifest(&dir)["run"]["threads"].as_integer(), Some(2));

    let single = tmp.path().join("t1");
    let args1 = ["run", "oracle-suite", "--set", "oracle.instances=4", "--out", single.to_str().unwrap()];
    assert_eq!(code(&mg_dtn_env(&args1, Some("1"))), EXIT_OK);
    assert_eq!(csv_files(&dir), csv_files(&single), "results must not depend on the thread count");

    let bad = mg_dtn_env(&["list"], Some("zero"));
    assert_eq!(code(&bad), EXIT_USAGE);
    assert!(stderr(&bad).contains(THREADS_ENV));
}
