//! Experiment configuration, execution and output files.
//!
//! A config is a TOML document with a `kind` and the sections that kind
//! consumes. [`load_config`] parses it, applies dotted `--set` overrides and
//! validates it, reporting problems against the line they come from.
//! [`run_experiment`] produces in-memory CSV files and a summary;
//! [`write_outputs`] stores them together with a manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::error::{Error, Result};
use crate::game::{partial_eq_count_formula, GameSpec, UtilityScenario};
use crate::learning::{self, LearnerConfig};
use crate::multiclass::{ClassSpec, MultiClassSpec};
use crate::oracle::{self, SuiteConfig};
use crate::population::Population;
use crate::threshold::{self, CostDistribution, ThresholdGameSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Pure equilibria of the homogeneous game.
    PureNe,
    /// Symmetric fully mixed equilibrium of the homogeneous game.
    MixedNe,
    /// Partially mixed equilibria of the homogeneous game.
    PartialEqs,
    /// Per-class targets and mixed equilibria of a multi-class game.
    Multiclass,
    /// Threshold equilibrium under private costs.
    Threshold,
    /// Distributed learning run.
    Learn,
    /// Randomized oracle equivalence suite.
    Oracle,
    /// Two-class mixed equilibrium over a grid of rewards.
    NeSurface,
    /// Threshold function and reward design over parameter grids.
    ThresholdSurface,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::PureNe => "pure-ne",
            ExperimentKind::MixedNe => "mixed-ne",
            ExperimentKind::PartialEqs => "partial-eqs",
            ExperimentKind::Multiclass => "multiclass",
            ExperimentKind::Threshold => "threshold",
            ExperimentKind::Learn => "learn",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::NeSurface => "ne-surface",
            ExperimentKind::ThresholdSurface => "threshold-surface",
        }
    }
}

/// Homogeneous game: give either `r` or `target` (the reward is then set so
/// that `U(T, target) = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub n: usize,
    pub g: f64,
    pub r: Option<f64>,
    pub target: Option<usize>,
    #[serde(default = "zero_sum")]
    pub scenario: UtilityScenario,
}

fn zero_sum() -> UtilityScenario {
    UtilityScenario::ZeroSum
}

/// Threshold game: give `reward`, or `target` to derive it from the mean
/// cost; give `costs` inline or `costs_file` (one cost per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub n: usize,
    pub reward: Option<f64>,
    pub target: Option<usize>,
    pub costs: Option<CostDistribution>,
    pub costs_file: Option<PathBuf>,
    /// Points of the `Theta(g)` curve written alongside the solution.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn default_curve_points() -> usize {
    101
}

/// Evenly spaced values `from..=to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.from],
            n => (0..n).map(|i| self.from + (self.to - self.from) * i as f64 / (n - 1) as f64).collect(),
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if self.steps == 0 || !self.from.is_finite() || !self.to.is_finite() {
            return Err(Error::InvalidParameter { name, reason: "needs finite bounds and steps >= 1".into() });
        }
        Ok(())
    }
}

/// Rewards swept for the two-class equilibrium surface; counts and costs
/// come from `[[classes]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub r1: Grid,
    pub r2: Grid,
}

/// Grids for `Theta(g, R)` (costs from `[threshold]`) and for the number of
/// relays a reward incites given the mean cost, `Psi(mu, R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSurfaceSection {
    pub g: Grid,
    pub reward: Grid,
    pub mu: Grid,
    pub psi_reward: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Accept a learning run that hits `max_rounds` without meeting the
    /// stopping test.
    #[serde(default)]
    pub allow_unconverged: bool,
    #[serde(default = "ContactParams::reference")]
    pub contact: ContactParams,
    pub game: Option<GameSection>,
    pub classes: Option<Vec<ClassSpec>>,
    pub threshold: Option<ThresholdSection>,
    pub learner: Option<LearnerConfig>,
    pub surface: Option<SurfaceSection>,
    pub threshold_surface: Option<ThresholdSurfaceSection>,
    pub oracle: Option<SuiteConfig>,
}

fn default_seed() -> u64 {
    1
}

/// A problem with a config, anchored to where it comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// File path, `preset:<name>` or `--set`.
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.origin, line, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `key` inside `[section]` (or at top level when
/// `section` is empty), falling back to the section header.
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = name.trim().to_string();
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else {
            let lhs = line.split('=').next().unwrap_or("").trim();
            let (sec, k) = match lhs.rsplit_once('.') {
                Some((prefix, k)) if !current.is_empty() => (format!("{current}.{prefix}"), k),
                Some((prefix, k)) => (prefix.to_string(), k),
                None => (current.clone(), lhs),
            };
            if line.contains('=') && sec == section && k == key {
                return Some(idx + 1);
            }
            continue;
        }
        if current == section && header.is_none() {
            header = Some(idx + 1);
        }
    }
    header
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `path` (dot separated, numeric segments index arrays) in `root`.
pub fn apply_override(root: &mut toml::Value, path: &str, raw: &str) -> std::result::Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed key `{path}`"));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), parse_value(raw));
                    return Ok(());
                }
                t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| format!("`{part}` in `{path}` must index an array"))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| format!("index {idx} in `{path}` out of range (length {len})"))?;
                if last {
                    *slot = parse_value(raw);
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("`{path}` descends into a scalar")),
        };
    }
    Ok(())
}

/// Parsed config plus the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub origin: String,
    pub overrides: Vec<String>,
}

/// Parse `text`, apply `key=value` overrides and validate.
pub fn load_config(text: &str, origin: &str, overrides: &[String]) -> std::result::Result<LoadedConfig, ConfigError> {
    let err = |line: Option<usize>, message: String| ConfigError { origin: origin.to_string(), line, message };
    let mut value: toml::Value = match text.parse::<toml::Table>() {
        Ok(t) => toml::Value::Table(t),
        Err(e) => {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            return Err(err(line, e.message().to_string()));
        }
    };
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| ConfigError {
            origin: "--set".into(),
            line: None,
            message: format!("`{o}` is not key=value"),
        })?;
        apply_override(&mut value, k.trim(), v.trim())
            .map_err(|m| ConfigError { origin: "--set".into(), line: None, message: m })?;
    }
    let config: ExperimentConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| {
            let mut line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            if let Some(key) = unknown_field(e.message()) {
                line = key_line(text, line.unwrap_or(1), key).or(line);
            }
            err(line, e.message().to_string())
        })?
    } else {
        value.try_into().map_err(|e: toml::de::Error| err(None, format!("after overrides: {}", e.message())))?
    };
    let loaded = LoadedConfig { config, origin: origin.to_string(), overrides: overrides.to_vec() };
    validate(&loaded.config).map_err(|(section, key, message)| {
        let line = if overrides.iter().any(|o| o.starts_with(&format!("{section}.{key}"))) {
            None
        } else {
            locate(text, section, key)
        };
        err(line, if section.is_empty() { message } else { format!("[{section}] {message}") })
    })?;
    Ok(loaded)
}

/// Key named by a serde "unknown field" message.
fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("unknown field `")?;
    rest.split('`').next()
}

/// First line at or after `from` (1-based) assigning `key`; serde spans for
/// unknown keys cover the enclosing table.
fn key_line(text: &str, from: usize, key: &str) -> Option<usize> {
    text.lines().enumerate().skip(from - 1).find_map(|(idx, raw)| {
        let lhs = raw.split('=').next()?.trim();
        (raw.contains('=') && (lhs == key || lhs.ends_with(&format!(".{key}")))).then_some(idx + 1)
    })
}

type Invalid = (&'static str, &'static str, String);

fn at(section: &'static str, e: Error) -> Invalid {
    let key = match &e {
        Error::InvalidParameter { name, .. } => name,
        _ => "",
    };
    (section, key, e.to_string())
}

fn require<T>(value: &Option<T>, section: &'static str, kind: ExperimentKind) -> std::result::Result<(), Invalid> {
    if value.is_none() {
        return Err(("", "kind", format!("kind `{}` needs a [{section}] section", kind.as_str())));
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> std::result::Result<(), Invalid> {
    cfg.contact.validate().map_err(|e| at("contact", e))?;
    if let Some(g) = &cfg.game {
        if g.r.is_some() == g.target.is_some() {
            return Err(("game", "r", "give exactly one of `r` and `target`".into()));
        }
        // A placeholder reward lets the other fields be checked first.
        GameSpec::new(g.n, g.g, g.r.unwrap_or(1.0), cfg.contact, g.scenario).map_err(|e| at("game", e))?;
        if let Some(t) = g.target {
            cfg.contact.reward_for_target(g.g, t).map_err(|e| ("game", "target", e.to_string()))?;
        }
    }
    if let Some(c) = &cfg.classes {
        MultiClassSpec::new(c.clone(), cfg.contact).map_err(|e| at("classes", e))?;
    }
    if let Some(t) = &cfg.threshold {
        if t.reward.is_some() == t.target.is_some() {
            return Err(("threshold", "reward", "give exactly one of `reward` and `target`".into()));
        }
        if t.costs.is_some() == t.costs_file.is_some() {
            return Err(("threshold", "costs", "give exactly one of `costs` and `costs_file`".into()));
        }
    }
    if let Some(l) = &cfg.learner {
        l.validate().map_err(|e| at("learner", e))?;
    }
    use ExperimentKind::*;
    match cfg.kind {
        PureNe | MixedNe | PartialEqs => require(&cfg.game, "game", cfg.kind)?,
        Multiclass => require(&cfg.classes, "classes", cfg.kind)?,
        Threshold => require(&cfg.threshold, "threshold", cfg.kind)?,
        Learn => {
            require(&cfg.learner, "learner", cfg.kind)?;
            if cfg.game.is_some() == cfg.classes.is_some() {
                return Err(("", "kind", "kind `learn` needs exactly one of [game] and [[classes]]".into()));
            }
        }
        Oracle => {}
        NeSurface => {
            require(&cfg.classes, "classes", cfg.kind)?;
            require(&cfg.surface, "surface", cfg.kind)?;
        }
        ThresholdSurface => {
            require(&cfg.threshold, "threshold", cfg.kind)?;
            require(&cfg.threshold_surface, "threshold_surface", cfg.kind)?;
        }
    }
    if let Some(s) = &cfg.surface {
        s.r1.validate("r1").map_err(|e| at("surface", e))?;
        s.r2.validate("r2").map_err(|e| at("surface", e))?;
    }
    if let Some(s) = &cfg.threshold_surface {
        for (name, g) in [("g", s.g), ("reward", s.reward), ("mu", s.mu), ("psi_reward", s.psi_reward)] {
            g.validate(name).map_err(|e| at("threshold_surface", e))?;
        }
    }
    Ok(())
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Converged,
    Unconverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Converged => "converged",
            RunStatus::Unconverged => "unconverged",
        }
    }
}

/// Everything a run produced, before it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub status: RunStatus,
    /// `(file name, contents)`.
    pub files: Vec<(String, Vec<u8>)>,
    /// Headline numbers, in order.
    pub summary: Vec<(String, String)>,
    /// Values computed from the config before running, with how.
    pub derived: Vec<(String, String)>,
    /// The config with derived values filled in.
    pub resolved: ExperimentConfig,
    /// Internal checks that failed.
    pub violations: Vec<String>,
}

struct Out {
    files: Vec<(String, Vec<u8>)>,
    summary: Vec<(String, String)>,
    derived: Vec<(String, String)>,
    violations: Vec<String>,
}

impl Out {
    fn file(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }
    fn sum(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

fn game_spec(cfg: &mut ExperimentConfig, out: &mut Out) -> Result<GameSpec> {
    let contact = cfg.contact;
    let g = cfg.game.as_mut().ok_or_else(|| Error::Config("missing [game]".into()))?;
    if g.r.is_none() {
        let target = g.target.unwrap_or(0);
        let r = contact.reward_for_target(g.g, target)?;
        out.derived.push(("game.r".into(), format!("{r} = g tau / (n_s P_succ(T, {target}))")));
        g.r = Some(r);
    }
    GameSpec::new(g.n, g.g, g.r.unwrap_or(f64::NAN), contact, g.scenario)
}

fn class_spec(cfg: &ExperimentConfig) -> Result<MultiClassSpec> {
    let classes = cfg.classes.clone().ok_or_else(|| Error::Config("missing [[classes]]".into()))?;
    MultiClassSpec::new(classes, cfg.contact)
}

fn threshold_spec(cfg: &mut ExperimentConfig, out: &mut Out) -> Result<ThresholdGameSpec> {
    let contact = cfg.contact;
    let t = cfg.threshold.as_mut().ok_or_else(|| Error::Config("missing [threshold]".into()))?;
    let costs = match (&t.costs, &t.costs_file) {
        (Some(c), _) => c.clone(),
        (None, Some(path)) => {
            let c = CostDistribution::from_file(path)?;
            out.derived.push(("threshold.costs".into(), format!("{} samples read from {}", sample_count(&c), path.display())));
            c
        }
        (None, None) => return Err(Error::Config("[threshold] needs costs or costs_file".into())),
    };
    if t.reward.is_none() {
        let target = t.target.unwrap_or(0);
        let r = threshold::reward_from_mean(&contact, costs.mean(), target)?;
        out.derived.push(("threshold.reward".into(), format!("{r} = mu tau / (n_s P_succ(T, {target})), mu = {}", costs.mean())));
        t.reward = Some(r);
    }
    ThresholdGameSpec::new(t.n, t.reward.unwrap_or(f64::NAN), contact, costs)
}

fn sample_count(c: &CostDistribution) -> usize {
    match c {
        CostDistribution::Empirical { samples } => samples.len(),
        _ => 0,
    }
}

/// Execute a validated config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let mut cfg = config.clone();
    let mut out = Out { files: Vec::new(), summary: Vec::new(), derived: Vec::new(), violations: Vec::new() };
    let mut status = RunStatus::Complete;
    match cfg.kind {
        ExperimentKind::PureNe => run_pure(&game_spec(&mut cfg, &mut out)?, &mut out)?,
        ExperimentKind::MixedNe => run_mixed(&game_spec(&mut cfg, &mut out)?, &mut out)?,
        ExperimentKind::PartialEqs => run_partial(&game_spec(&mut cfg, &mut out)?, &mut out)?,
        ExperimentKind::Multiclass => run_multiclass(&class_spec(&cfg)?, &mut out)?,
        ExperimentKind::Threshold => run_threshold(&threshold_spec(&mut cfg, &mut out)?, cfg.threshold.as_ref().map_or(101, |t| t.curve_points), &mut out)?,
        ExperimentKind::Learn => status = run_learn(&mut cfg, &mut out)?,
        ExperimentKind::Oracle => {
            let suite = SuiteConfig { seed: cfg.seed, ..cfg.oracle.unwrap_or_default() };
            cfg.oracle = Some(suite);
            run_oracle(&suite, &mut out)?
        }
        ExperimentKind::NeSurface => run_surface(&cfg, &mut out)?,
        ExperimentKind::ThresholdSurface => run_threshold_surface(&mut cfg, &mut out)?,
    }
    Ok(RunOutput {
        status,
        files: out.files,
        summary: out.summary,
        derived: out.derived,
        resolved: cfg,
        violations: out.violations,
    })
}

fn run_pure(spec: &GameSpec, out: &mut Out) -> Result<()> {
    let ne = spec.pure_ne();
    let mut csv = String::from("k,u_active,u_silent,is_ne\n");
    for k in 0..=spec.n {
        let ua = if k == 0 { String::new() } else { spec.utility_active(k)?.to_string() };
        let _ = writeln!(csv, "{k},{ua},{},{}", spec.utility_silent(k)?, spec.is_pure_ne(k));
    }
    out.file("pure_ne.csv", csv);
    out.sum("ne_counts", format!("{:?}", ne.counts));
    out.sum("threshold", ne.threshold);
    out.sum("boundary", format!("{:?}", ne.boundary));
    Ok(())
}

fn run_mixed(spec: &GameSpec, out: &mut Out) -> Result<()> {
    let mut csv = String::from("p,indifference,expected_actives\n");
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        let _ = writeln!(csv, "{p},{},{}", spec.indifference_fn(p), p * spec.n as f64);
    }
    out.file("indifference.csv", csv);
    match spec.fully_mixed_ne() {
        Ok(p) => {
            let residual = spec.indifference_fn(p).abs();
            if residual > spec.tie_tolerance() {
                out.violations.push(format!("indifference at p* is {residual:e}"));
            }
            out.file("mixed_ne.csv", format!("p_star,expected_actives,residual\n{p},{},{residual}\n", p * spec.n as f64));
            out.sum("p_star", p);
            out.sum("expected_actives", p * spec.n as f64);
        }
        Err(Error::NoInteriorEquilibrium(msg)) => {
            out.file("mixed_ne.csv", "p_star,expected_actives,residual\n".into());
            out.sum("p_star", "none");
            out.sum("reason", msg);
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn run_partial(spec: &GameSpec, out: &mut Out) -> Result<()> {
    let eqs = spec.enumerate_partial_eqs();
    let mut csv = String::from("num_pure_t,num_pure_s,num_mixers,p_star,residual,pure_players_stable\n");
    let mut worst: f64 = 0.0;
    for e in &eqs {
        let res = spec.partial_residual(e);
        worst = worst.max(res);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            e.num_pure_t,
            e.num_pure_s,
            spec.n - e.num_pure_t - e.num_pure_s,
            e.p_star,
            res,
            e.pure_players_stable
        );
    }
    out.file("partial_eqs.csv", csv);
    out.sum("count", eqs.len());
    let psi = spec.pure_ne().threshold;
    out.sum("formula_count", partial_eq_count_formula(spec.n, psi));
    out.sum("psi", psi);
    out.sum("max_residual", worst);
    Ok(())
}

fn run_multiclass(spec: &MultiClassSpec, out: &mut Out) -> Result<()> {
    let mut csv = String::from("class,count,g,r,target,stable_counts,boundary\n");
    for (j, t) in spec.pure_ne_per_class().iter().enumerate() {
        let c = &spec.classes[j];
        let counts: Vec<String> = t.counts.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(csv, "{j},{},{},{},{},{},{:?}", c.count, c.g, c.r, t.target, counts.join(" "), t.boundary);
        out.sum(&format!("target_class_{j}"), t.target);
    }
    out.file("class_targets.csv", csv);
    let total = spec.pure_ne_total_count();
    out.sum("total_count_vectors", total.vectors.len());
    out.sum("total_count_profiles", total.profiles);
    if spec.classes.len() == 2 {
        let eqs = spec.equilibria_2class()?;
        let mut csv = String::from("p1,p2,interior,expected_actives\n");
        for e in &eqs {
            let _ = writeln!(csv, "{},{},{},{}", e.p[0], e.p[1], e.interior, spec.expected_actives(&e.p));
        }
        out.file("equilibria.csv", csv);
        if let Some(e) = eqs.first() {
            out.sum("p1", e.p[0]);
            out.sum("p2", e.p[1]);
            out.sum("interior", e.interior);
            out.sum("expected_actives", spec.expected_actives(&e.p));
        }
    } else {
        let (p, ok) = spec.mixed_ne_newton(1e-12, 100)?;
        let mut csv = String::from("class,p\n");
        for (j, pj) in p.iter().enumerate() {
            let _ = writeln!(csv, "{j},{pj}");
        }
        out.file("equilibria.csv", csv);
        out.sum("newton_converged", ok);
        out.sum("expected_actives", spec.expected_actives(&p));
    }
    Ok(())
}

fn run_threshold(spec: &ThresholdGameSpec, points: usize, out: &mut Out) -> Result<()> {
    let eq = spec.solve_threshold()?;
    let actives = spec.expected_actives()?;
    out.file(
        "threshold.csv",
        format!("reward,g_th,activation_prob,expected_actives\n{},{},{},{}\n", spec.reward, eq.g_th, eq.activation_prob, actives),
    );
    let g_max = spec.max_threshold();
    let mut csv = String::from("g,theta\n");
    for i in 0..points.max(2) {
        let g = g_max * i as f64 / (points.max(2) - 1) as f64;
        let _ = writeln!(csv, "{g},{}", spec.theta(g));
    }
    out.file("theta.csv", csv);
    out.sum("reward", spec.reward);
    out.sum("g_th", eq.g_th);
    out.sum("activation_prob", eq.activation_prob);
    out.sum("expected_actives", actives);
    out.sum("requoted_reward", threshold::reward_from_mean(&spec.contact, eq.g_th, actives.round().max(1.0) as usize)?);
    Ok(())
}

fn run_learn(cfg: &mut ExperimentConfig, out: &mut Out) -> Result<RunStatus> {
    let learner = cfg.learner.ok_or_else(|| Error::Config("missing [learner]".into()))?;
    let (pop, reference): (Population, Vec<f64>) = if cfg.game.is_some() {
        let spec = game_spec(cfg, out)?;
        let p = spec.fully_mixed_ne().map(|p| vec![p]).unwrap_or_default();
        (spec.population(), p)
    } else {
        let spec = class_spec(cfg)?;
        let p = if spec.classes.len() == 2 {
            spec.equilibria_2class()?.first().map(|e| e.p.to_vec()).unwrap_or_default()
        } else {
            Vec::new()
        };
        (spec.population(), p)
    };
    let result = learning::run_learning(&pop, &learner, cfg.seed)?;
    let traj = &result.trajectory;
    if traj.summaries.iter().any(|s| !s.mean_sigma.is_finite()) || result.final_state.iter().any(|x| !x.t.is_finite() || !x.s.is_finite()) {
        out.violations.push("non-finite activation probability or perception".into());
    }

    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    out.files.push(("trajectory.csv".into(), buf));
    let mut buf = Vec::new();
    traj.write_summary_csv(&mut buf)?;
    out.files.push(("rounds.csv".into(), buf));
    let mut csv = String::from("relay,class,x_T,x_S,sigma_T\n");
    for (i, x) in result.final_state.iter().enumerate() {
        let _ = writeln!(csv, "{i},{},{},{},{}", pop.relays[i].class, x.t, x.s, learning::logit_policy(*x, result.final_beta));
    }
    out.file("final_state.csv", csv);

    out.sum("rounds", result.rounds);
    out.sum("converged", result.converged);
    out.sum("final_beta", result.final_beta);
    out.sum("tail_mean_sigma", traj.tail_mean_sigma(0.2));
    for (j, s) in traj.tail_class_sigma(0.2).iter().enumerate() {
        out.sum(&format!("tail_sigma_class_{j}"), s);
    }
    out.sum("tail_mean_count", traj.tail_mean_count(0.2));
    for (j, p) in reference.iter().enumerate() {
        out.sum(&format!("equilibrium_p_{j}"), p);
    }
    out.sum("fixed_point_residual", learning::fixed_point_residual(&pop, &result.final_state, result.final_beta));
    let eps = learning::epsilon_bound(&result.final_state, result.final_beta);
    out.sum("epsilon_bound", if eps.applicable { eps.value.to_string() } else { "0 (not applicable at infinite beta)".into() });
    out.sum("contraction_margin", learning::contraction_margin(&pop, learner.beta));
    Ok(if result.converged { RunStatus::Converged } else { RunStatus::Unconverged })
}

fn run_oracle(suite: &SuiteConfig, out: &mut Out) -> Result<()> {
    let report = oracle::run_suite(suite)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    out.files.push(("oracle_report.csv".into(), buf));
    out.file("oracle_report.txt", report.to_text());
    out.sum("checks", report.checks.len());
    out.sum("failures", report.failures());
    out.sum("max_discrepancy", report.max_discrepancy());
    if !report.all_pass() {
        out.violations.push(format!("{} oracle checks failed", report.failures()));
    }
    Ok(())
}

fn run_surface(cfg: &ExperimentConfig, out: &mut Out) -> Result<()> {
    let base = class_spec(cfg)?;
    if base.classes.len() != 2 {
        return Err(Error::Config("kind `ne-surface` needs exactly two classes".into()));
    }
    let s = cfg.surface.ok_or_else(|| Error::Config("missing [surface]".into()))?;
    let mut csv = String::from("r1,r2,p1,p2,interior,expected_actives,equilibria\n");
    let mut interior = 0;
    for r1 in s.r1.values() {
        for r2 in s.r2.values() {
            let mut spec = base.clone();
            spec.classes[0].r = r1;
            spec.classes[1].r = r2;
            let eqs = spec.equilibria_2class()?;
            match eqs.first() {
                Some(e) => {
                    interior += usize::from(e.interior);
                    let _ = writeln!(csv, "{r1},{r2},{},{},{},{},{}", e.p[0], e.p[1], e.interior, spec.expected_actives(&e.p), eqs.len());
                }
                None => {
                    let _ = writeln!(csv, "{r1},{r2},,,,,0");
                }
            }
        }
    }
    out.file("ne_surface.csv", csv);
    out.sum("points", s.r1.values().len() * s.r2.values().len());
    out.sum("interior_points", interior);
    Ok(())
}

fn run_threshold_surface(cfg: &mut ExperimentConfig, out: &mut Out) -> Result<()> {
    let base = threshold_spec(cfg, out)?;
    let s = cfg.threshold_surface.ok_or_else(|| Error::Config("missing [threshold_surface]".into()))?;
    let mut theta = String::from("g,reward,theta\n");
    let mut eq = String::from("reward,g_th,activation_prob,expected_actives\n");
    let mut last = f64::NEG_INFINITY;
    let mut monotone = true;
    for reward in s.reward.values() {
        let spec = ThresholdGameSpec { reward, ..base.clone() };
        for g in s.g.values() {
            let _ = writeln!(theta, "{g},{reward},{}", spec.theta(g));
        }
        let e = spec.solve_threshold()?;
        monotone &= e.g_th >= last;
        last = e.g_th;
        let _ = writeln!(eq, "{reward},{},{},{}", e.g_th, e.activation_prob, spec.expected_actives()?);
    }
    out.file("theta_surface.csv", theta);
    out.file("threshold_by_reward.csv", eq);
    let mut psi = String::from("mu,reward,psi\n");
    for mu in s.mu.values() {
        for reward in s.psi_reward.values() {
            let _ = writeln!(psi, "{mu},{reward},{}", threshold::incited_actives(&base.contact, mu, reward, base.n));
        }
    }
    out.file("psi_surface.csv", psi);
    out.sum("g_th_monotone_in_reward", monotone);
    let e = base.solve_threshold()?;
    out.sum("reward", base.reward);
    out.sum("g_th", e.g_th);
    if !monotone {
        out.violations.push("g_th decreased as the reward increased".into());
    }
    Ok(())
}

/// Where and how the run was requested, for the manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub preset: Option<String>,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub threads: usize,
}

/// The manifest as TOML: artifact version, request, resolved parameters,
/// derivations, summary and output list.
pub fn manifest(output: &RunOutput, prov: &Provenance) -> String {
    let mut root = toml::Table::new();
    let mut artifact = toml::Table::new();
    artifact.insert("name".into(), env!("CARGO_PKG_NAME").into());
    artifact.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    artifact.insert("rng".into(), "ChaCha20, seed_from_u64(seed), stream = replication index".into());
    root.insert("artifact".into(), artifact.into());

    let mut run = toml::Table::new();
    if let Some(p) = &prov.preset {
        run.insert("preset".into(), p.clone().into());
    }
    if let Some(p) = &prov.config_path {
        run.insert("config".into(), p.display().to_string().into());
    }
    run.insert("kind".into(), output.resolved.kind.as_str().into());
    run.insert("seed".into(), toml::Value::Integer(output.resolved.seed as i64));
    run.insert("status".into(), output.status.as_str().into());
    run.insert("threads".into(), toml::Value::Integer(prov.threads as i64));
    run.insert("overrides".into(), toml::Value::Array(prov.overrides.iter().map(|o| o.clone().into()).collect()));
    run.insert("violations".into(), toml::Value::Array(output.violations.iter().map(|v| v.clone().into()).collect()));
    root.insert("run".into(), run.into());

    let table = |pairs: &[(String, String)]| {
        let mut t = toml::Table::new();
        for (k, v) in pairs {
            t.insert(k.clone(), v.clone().into());
        }
        toml::Value::Table(t)
    };
    root.insert("derived".into(), table(&output.derived));
    root.insert("summary".into(), table(&output.summary));
    let files: Vec<toml::Value> = output.files.iter().map(|(n, _)| n.clone().into()).collect();
    let mut outputs = toml::Table::new();
    outputs.insert("files".into(), toml::Value::Array(files));
    root.insert("outputs".into(), outputs.into());
    if let Ok(toml::Value::Table(cfg)) = toml::Value::try_from(&output.resolved) {
        root.insert("config".into(), cfg.into());
    }
    toml::to_string(&root).unwrap_or_default()
}

/// Write `contents` to `path` through a temporary file in the same
/// directory and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write every output file and then `manifest.toml` into `dir`.
pub fn write_outputs(dir: &Path, output: &RunOutput, prov: &Provenance) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in &output.files {
        let path = dir.join(name);
        write_atomic(&path, body)?;
        written.push(path);
    }
    let path = dir.join("manifest.toml");
    write_atomic(&path, manifest(output, prov).as_bytes())?;
    written.push(path);
    Ok(written)
}
