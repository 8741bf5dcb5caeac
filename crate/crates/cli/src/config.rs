//! TOML run configuration. Every field is optional; command-line flags win
//! over the file, which wins over built-in defaults.

use std::path::{Path, PathBuf};

use fcw_redteam_core::harness::{Experiment, Goal, TargetStart};
use fcw_redteam_core::scenario::ScenarioSpec;
use fcw_redteam_core::{Strategy, WarningLight};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub scenario: Option<toml::Table>,
    #[serde(default)]
    pub input: InputSection,
    #[serde(default)]
    pub kf: KfSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub trace: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfSection {
    pub accel_intensity: Option<f64>,
    pub vision_var: Option<f64>,
    pub radar_var: Option<f64>,
    pub prior_var: Option<f64>,
    pub h_star: Option<u32>,
    pub median_window: Option<usize>,
    pub outlier_threshold: Option<f64>,
    pub outlier_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub strategy: Option<String>,
    pub stealthy_frac: Option<f64>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    /// "G", "Y" or "R".
    pub target_light: Option<String>,
    /// "first-red" or a step number.
    pub target_start: Option<toml::Value>,
    pub target_len: Option<usize>,
    pub qp_tol: Option<f64>,
    pub qp_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub fractions: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub strategies: Option<Vec<String>>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

/// Scenario flags shared by every subcommand.
#[derive(Debug, Default, Clone)]
pub struct ScenarioFlags {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub zero_noise: bool,
    pub steps: Option<usize>,
}

pub fn resolve_scenario(file: &FileConfig, flags: &ScenarioFlags) -> Result<ScenarioSpec, CliError> {
    let mut table = file.scenario.clone().unwrap_or_default();
    let file_preset = match table.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(CliError::Usage("scenario.preset must be a string".into())),
        None => None,
    };
    let name = flags.preset.clone().or(file_preset).unwrap_or_else(|| "mio-10".into());
    let base = ScenarioSpec::preset(&name)
        .ok_or_else(|| CliError::Usage(format!("unknown scenario '{name}' (expected mio-10 or mio+1)")))?;
    let mut merged = match toml::Value::try_from(&base) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("scenario specs serialise to tables"),
    };
    for (k, v) in table {
        if !merged.contains_key(&k) {
            return Err(CliError::Usage(format!("unknown scenario field '{k}'")));
        }
        merged.insert(k, v);
    }
    let mut spec: ScenarioSpec = toml::Value::Table(merged)
        .try_into()
        .map_err(|e| CliError::Usage(format!("bad [scenario] section: {e}")))?;
    if let Some(seed) = flags.seed {
        spec.seed = seed;
    }
    if let Some(steps) = flags.steps {
        spec.steps = steps;
    }
    if flags.zero_noise {
        spec = spec.noiseless();
    }
    spec.validate().map_err(|e| CliError::Usage(format!("invalid scenario: {e}")))?;
    Ok(spec)
}

/// Attack flags that may override the file.
#[derive(Debug, Default, Clone)]
pub struct AttackFlags {
    pub strategy: Option<String>,
    pub stealthy_frac: Option<f64>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
}

pub fn parse_strategy(s: &str) -> Result<Strategy, CliError> {
    Strategy::parse(s).ok_or_else(|| CliError::Usage(format!("unknown strategy '{s}' (expected mpc, greedy or none)")))
}

pub fn resolve_experiment(file: &FileConfig, spec: ScenarioSpec, flags: &AttackFlags) -> Result<Experiment, CliError> {
    let mut e = Experiment::new(spec);
    let kf = &file.kf;
    if let Some(v) = kf.accel_intensity {
        e.noise.accel_intensity = v;
    }
    if let Some(v) = kf.vision_var {
        e.noise.vision_var = v;
    }
    if let Some(v) = kf.radar_var {
        e.noise.radar_var = v;
    }
    if let Some(v) = kf.prior_var {
        e.noise.prior_var = v;
    }
    if let Some(v) = kf.h_star {
        e.h_star = v;
    }
    if let Some(v) = kf.median_window {
        e.preprocess.window = v;
    }
    if let Some(v) = kf.outlier_threshold {
        e.preprocess.threshold = v;
    }
    if let Some(v) = kf.outlier_floor {
        e.preprocess.floor = v;
    }

    let a = &file.attack;
    if let Some(v) = flags.delta.or(a.delta) {
        if v.is_nan() || v < 0.0 {
            return Err(CliError::Usage("delta must be non-negative".into()));
        }
        e.delta = v;
    }
    if let Some(v) = flags.lambda.or(a.lambda) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Usage("lambda must be positive and finite".into()));
        }
        e.lambda = v;
    }
    if let Some(v) = a.epsilon {
        e.epsilon = v;
    }
    if let Some(v) = a.qp_tol {
        e.qp_tol = v;
    }
    if let Some(v) = a.qp_max_iter {
        e.qp_max_iter = v;
    }
    let mut goal: Goal = e.goal;
    if let Some(l) = &a.target_light {
        goal.light = l
            .chars()
            .next()
            .and_then(|c| WarningLight::from_code(c.to_ascii_uppercase()))
            .filter(|_| l.len() == 1)
            .ok_or_else(|| CliError::Usage(format!("target_light must be G, Y or R, got '{l}'")))?;
    }
    if let Some(v) = &a.target_start {
        goal.start = match v {
            toml::Value::String(s) if s == "first-red" => TargetStart::FirstRed,
            toml::Value::Integer(n) if *n >= 2 => TargetStart::Step(*n as usize),
            _ => return Err(CliError::Usage("target_start must be \"first-red\" or a step >= 2".into())),
        };
    }
    if let Some(n) = a.target_len {
        goal.len = n;
    }
    e.goal = goal;
    Ok(e)
}

pub fn resolve_strategy(file: &FileConfig, flags: &AttackFlags) -> Result<Strategy, CliError> {
    parse_strategy(flags.strategy.as_deref().or(file.attack.strategy.as_deref()).unwrap_or("mpc"))
}

pub fn resolve_fraction(file: &FileConfig, flags: &AttackFlags) -> Result<f64, CliError> {
    let f = flags.stealthy_frac.or(file.attack.stealthy_frac).unwrap_or(1.0);
    if !(0.0..=1.0).contains(&f) {
        return Err(CliError::Usage(format!("stealthy fraction must lie in [0, 1], got {f}")));
    }
    Ok(f)
}

/// Output directory: flag, then file, then the environment, then `out`.
pub fn resolve_out(file: &FileConfig, flag: Option<PathBuf>, env: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| file.out.clone()).or(env).unwrap_or_else(|| PathBuf::from("out"))
}
