//! `fcw-redteam`: generate traces, run attacks on the FCW pipeline, sweep
//! planning horizons and manipulation budgets.

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcw_redteam_core::harness::{first_braking_run, run_point, Experiment, Prepared, SweepRow, PLANNING_FRACTIONS};
use fcw_redteam_core::scenario::synthesize_trace;
use fcw_redteam_core::Strategy;
use rayon::prelude::*;
use serde_json::json;

use config::{AttackFlags, FileConfig, ScenarioFlags};

pub const OUT_ENV: &str = "FCW_REDTEAM_OUT";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files: exit code 1.
    Usage(String),
    /// The attack or solver failed, or output could not be written: exit code 2.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Runtime(m) => write!(f, "failure: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fcw-redteam", version, about = "Red-team the Kalman-filter forward collision warning pipeline")]
struct Cli {
    /// TOML config with [scenario], [kf], [attack] and [sweep] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $FCW_REDTEAM_OUT, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a measurement trace and its ground truth.
    Gen(ScenarioArgs),
    /// Run one attack and write per-step results.
    Attack(AttackArgs),
    /// Planning-horizon and/or Δ sweep.
    Sweep(SweepArgs),
    /// MPC and greedy side by side over planning fractions.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ScenarioArgs {
    /// Scenario preset: mio-10 or mio+1.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable all measurement noise, dropouts and outliers.
    #[arg(long)]
    zero_noise: bool,
    #[arg(long)]
    steps: Option<usize>,
}

impl ScenarioArgs {
    fn flags(&self) -> ScenarioFlags {
        ScenarioFlags {
            preset: self.scenario.clone(),
            seed: self.seed,
            zero_noise: self.zero_noise,
            steps: self.steps,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct InputArgs {
    /// Read measurements from a trace CSV instead of synthesizing them.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ground-truth CSV matching --trace; needed for crash outcomes.
    #[arg(long, requires = "trace")]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    input: InputArgs,
    /// mpc, greedy or none.
    #[arg(long)]
    strategy: Option<String>,
    /// Fraction of the full stealthy interval to plan over.
    #[arg(long)]
    stealthy_frac: Option<f64>,
    /// Per-slot manipulation bound (`inf` for none).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Planning fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
    /// Δ values for an MPC sweep with full planning, comma separated.
    #[arg(long, value_delimiter = ',')]
    deltas: Vec<f64>,
    /// Strategies for the planning sweep (default mpc,greedy).
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    /// Δ used by the planning sweep.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = config::load(cli.config.as_deref())?;
    let out = config::resolve_out(&file, cli.out.clone(), std::env::var_os(OUT_ENV).map(PathBuf::from));
    match cli.cmd {
        Command::Gen(a) => cmd_gen(&file, &a, &out),
        Command::Attack(a) => cmd_attack(&file, &a, &out),
        Command::Sweep(a) => cmd_sweep(&file, &a, &out),
        Command::Compare(a) => cmd_compare(&file, &a, &out),
    }
}

fn ensure_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))
}

fn cmd_gen(file: &FileConfig, a: &ScenarioArgs, out: &Path) -> Result<(), CliError> {
    let spec = config::resolve_scenario(file, &a.flags())?;
    let t = synthesize_trace(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    ensure_dir(out)?;
    io::write_trace(&out.join("trace.csv"), &t.frames, &t.truth)?;
    io::write_truth(&out.join("truth.csv"), &t.truth)?;
    println!("wrote {} steps of '{}' to {}", t.frames.len(), spec.name, out.display());
    Ok(())
}

/// Resolve the experiment and load or synthesize its trace.
fn prepare(file: &FileConfig, sc: &ScenarioArgs, input: &InputArgs, flags: &AttackFlags) -> Result<Prepared, CliError> {
    let spec = config::resolve_scenario(file, &sc.flags())?;
    let exp: Experiment = config::resolve_experiment(file, spec, flags)?;
    let trace = input.trace.clone().or_else(|| file.input.trace.clone());
    let truth = input.truth.clone().or_else(|| file.input.truth.clone());
    let res = match trace {
        Some(path) => {
            let raw = io::read_trace(&path)?;
            let truth = match truth {
                Some(p) => io::read_truth(&p)?,
                None => Vec::new(),
            };
            exp.prepare_from(raw, truth)
        }
        None if truth.is_some() => return Err(CliError::Usage("a truth file needs a trace file".into())),
        None => exp.prepare(),
    };
    res.map_err(|e| CliError::Usage(format!("cannot prepare experiment: {e}")))
}

fn cmd_attack(file: &FileConfig, a: &AttackArgs, out: &Path) -> Result<(), CliError> {
    let flags = AttackFlags {
        strategy: a.strategy.clone(),
        stealthy_frac: a.stealthy_frac,
        delta: a.delta,
        lambda: a.lambda,
    };
    let strategy = config::resolve_strategy(file, &flags)?;
    let frac = config::resolve_fraction(file, &flags)?;
    let prep = prepare(file, &a.scenario, &a.input, &flags)?;
    let stealthy = prep.stealthy_for(frac);
    let cfg = prep.config(stealthy, prep.experiment.delta);
    let res = prep
        .attack(strategy, &cfg)
        .map_err(|e| CliError::Runtime(format!("attack failed: {e}")))?;

    let lights = res.lights_attacked();
    let crash = prep.try_outcome(&lights);
    let baseline_crash = prep.try_outcome(&prep.baseline);
    let braking = first_braking_run(&lights, prep.experiment.h_star);
    let e = &prep.experiment;
    let summary = json!({
        "scenario": e.spec,
        "strategy": strategy.name(),
        "target": {
            "first": cfg.target.first,
            "last": cfg.target.last,
            "light": e.goal.light,
        },
        "stealthy": {
            "fraction": frac,
            "first": (!stealthy.is_empty()).then_some(stealthy.first),
            "last": (!stealthy.is_empty()).then_some(stealthy.last),
            "len": stealthy.len(),
        },
        "delta": io::json_f64(cfg.delta),
        "lambda": cfg.lambda,
        "h_star": e.h_star,
        "metrics": res.metrics,
        "achieved": cfg.target.len() - res.metrics.v_target,
        "lights_baseline": prep.baseline.iter().map(|l| l.code()).collect::<String>(),
        "lights_attacked": lights.iter().map(|l| l.code()).collect::<String>(),
        "braking": braking.map(|(on, n)| json!({ "onset": on, "steps": n, "seconds": n as f64 * e.spec.dt })),
        "crash": crash,
        "baseline_crash": baseline_crash,
    });
    ensure_dir(out)?;
    io::write_json(&out.join("result.json"), &summary)?;
    io::write_steps(&out.join("steps.csv"), &res)?;
    io::write_plot(&out.join("plot.csv"), &prep, &res)?;
    let m = &res.metrics;
    println!(
        "{} on {}: V†={} Vˢ={} J1={:.6e} J={:.6e} crash={}",
        strategy.name(),
        e.spec.name,
        m.v_target,
        m.v_stealth,
        m.j1,
        m.j,
        crash.map(|c| c.collided.to_string()).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn check_fractions(fs: &[f64]) -> Result<(), CliError> {
    match fs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        Some(f) => Err(CliError::Usage(format!("fractions must lie in [0, 1], got {f}"))),
        None => Ok(()),
    }
}

/// Run sweep points in parallel; rows come back in request order.
fn run_points(prep: &Prepared, points: &[(Strategy, f64, f64)]) -> Vec<SweepRow> {
    points.par_iter().map(|&(s, f, d)| run_point(prep, s, f, d)).collect()
}

fn cmd_sweep(file: &FileConfig, a: &SweepArgs, out: &Path) -> Result<(), CliError> {
    let sw = &file.sweep;
    let fractions = if a.fractions.is_empty() { sw.fractions.clone().unwrap_or_default() } else { a.fractions.clone() };
    let deltas = if a.deltas.is_empty() { sw.deltas.clone().unwrap_or_default() } else { a.deltas.clone() };
    if fractions.is_empty() && deltas.is_empty() {
        return Err(CliError::Usage("empty sweep: give --fractions and/or --deltas (or a [sweep] section)".into()));
    }
    check_fractions(&fractions)?;
    if deltas.iter().any(|d| d.is_nan() || *d < 0.0) {
        return Err(CliError::Usage("deltas must be non-negative".into()));
    }
    let names = if a.strategies.is_empty() {
        sw.strategies.clone().unwrap_or_else(|| vec!["mpc".into(), "greedy".into()])
    } else {
        a.strategies.clone()
    };
    let strategies = names.iter().map(|s| config::parse_strategy(s)).collect::<Result<Vec<_>, _>>()?;
    let flags = AttackFlags {
        delta: a.delta,
        ..Default::default()
    };
    let prep = prepare(file, &a.scenario, &a.input, &flags)?;

    let mut points = Vec::new();
    for &s in &strategies {
        for &f in &fractions {
            points.push((s, f, prep.experiment.delta));
        }
    }
    for &d in &deltas {
        points.push((Strategy::Mpc, 1.0, d));
    }
    let rows = run_points(&prep, &points);
    ensure_dir(out)?;
    io::write_sweep_csv(&out.join("sweep.csv"), &rows)?;
    let json_rows: Vec<_> = rows.iter().map(row_json).collect();
    io::write_json(
        &out.join("sweep.json"),
        &json!({ "scenario": prep.experiment.spec, "target": { "first": prep.target.first, "last": prep.target.last }, "rows": json_rows }),
    )?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} sweep rows written to {} ({} failed)", rows.len(), out.display(), failed);
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("row {} f={} Δ={}: {}", r.strategy.name(), r.fraction, r.delta, r.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn row_json(r: &SweepRow) -> serde_json::Value {
    json!({
        "scenario": r.scenario,
        "strategy": r.strategy.name(),
        "fraction": r.fraction,
        "stealthy_len": r.stealthy_len,
        "delta": io::json_f64(r.delta),
        "metrics": r.metrics,
        "achieved": r.achieved,
        "crash": r.crash,
        "error": r.error,
    })
}

fn cmd_compare(file: &FileConfig, a: &CompareArgs, out: &Path) -> Result<(), CliError> {
    let fractions = if a.fractions.is_empty() {
        file.sweep.fractions.clone().unwrap_or_else(|| PLANNING_FRACTIONS.to_vec())
    } else {
        a.fractions.clone()
    };
    check_fractions(&fractions)?;
    let flags = AttackFlags {
        delta: a.delta,
        ..Default::default()
    };
    let prep = prepare(file, &a.scenario, &a.input, &flags)?;
    let delta = prep.experiment.delta;
    let mut points = Vec::new();
    for &f in &fractions {
        points.push((Strategy::Mpc, f, delta));
        points.push((Strategy::Greedy, f, delta));
    }
    let rows = run_points(&prep, &points);
    let cell = |r: &SweepRow| match (&r.metrics, &r.error) {
        (Some(m), _) => (m.v_target.to_string(), m.v_stealth.to_string(), format!("{:.3e}", m.j)),
        (None, _) => ("err".into(), "err".into(), "err".into()),
    };
    println!("scenario {}  target {}..={}", prep.experiment.spec.name, prep.target.first, prep.target.last);
    println!("{:>8} {:>6} | {:>5} {:>5} {:>11} | {:>5} {:>5} {:>11}", "frac", "|Ts|", "V†", "Vˢ", "J mpc", "V†", "Vˢ", "J greedy");
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record([
        "fraction",
        "stealthy_len",
        "mpc_v_target",
        "mpc_v_stealth",
        "mpc_j",
        "greedy_v_target",
        "greedy_v_stealth",
        "greedy_j",
    ])
    .map_err(bad)?;
    for pair in rows.chunks(2) {
        let (m, g) = (&pair[0], &pair[1]);
        let (mv, ms, mj) = cell(m);
        let (gv, gs, gj) = cell(g);
        println!("{:>8} {:>6} | {:>5} {:>5} {:>11} | {:>5} {:>5} {:>11}", m.fraction, m.stealthy_len, mv, ms, mj, gv, gs, gj);
        let mj = m.metrics.map(|x| io::num(x.j)).unwrap_or_default();
        let gj = g.metrics.map(|x| io::num(x.j)).unwrap_or_default();
        w.write_record([io::num(m.fraction), m.stealthy_len.to_string(), mv, ms, mj, gv, gs, gj]).map_err(bad)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    ensure_dir(out)?;
    let path = out.join("compare.csv");
    std::fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}
