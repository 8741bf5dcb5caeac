//! Metrics, experiment setup, sweeps and crash outcomes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::round;
use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::alert::{classify, simulate_driver, WarningLight};
use crate::attacker::{run_strategy, AttackConfig, AttackResult, StepRange, StepRecord, StepRole, Strategy};
use crate::dynamics::{forward_crash_oracle, rear_crash_oracle, CrashReport};
use crate::error::{Error, Result};
use crate::model::{track_trace, KfModel, MeasurementFrame, NoiseParams};
use crate::scenario::{preprocess_with, synthesize_trace, GroundTruth, PreprocessParams, ScenarioFamily, ScenarioSpec};
use crate::DEFAULT_REACTION_STEPS;

/// Attack outcome summary. `v_target` and `v_stealth` count steps whose
/// achieved light differs from the desired one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub v_target: usize,
    pub v_stealth: usize,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j: f64,
    pub lambda: f64,
}

/// Metrics from the attacked states themselves. Lights are re-derived with
/// `classify` and slacks are the least ones the states require, so nothing
/// here depends on solver internals.
pub fn compute_metrics(records: &[StepRecord], cfg: &AttackConfig) -> Metrics {
    let mut m = Metrics {
        lambda: cfg.lambda,
        ..Metrics::default()
    };
    for r in records {
        let Some(want) = cfg.desired(r.t) else { continue };
        let miss = classify(&r.attacked) != want;
        let d = nalgebra::SVector::<f64, 8>::from_row_slice(&r.delta);
        m.j1 += d.dot(&(cfg.r * d));
        let slack = r.xi * r.xi + r.zeta * r.zeta;
        match cfg.role(r.t) {
            StepRole::Target => {
                m.v_target += miss as usize;
                m.j3 += slack;
            }
            StepRole::Stealthy => {
                m.v_stealth += miss as usize;
                m.j2 += slack;
            }
            StepRole::Outside => {}
        }
    }
    m.j = m.j1 + cfg.lambda * m.j2 + cfg.lambda * m.j3;
    m
}

/// Where the target interval starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetStart {
    /// At the first red light of the unattacked run.
    FirstRed,
    Step(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub light: WarningLight,
    pub start: TargetStart,
    pub len: usize,
}

impl Goal {
    pub fn for_family(family: ScenarioFamily) -> Self {
        match family {
            ScenarioFamily::Forward => Goal {
                light: WarningLight::Green,
                start: TargetStart::FirstRed,
                len: 10,
            },
            ScenarioFamily::Rear => Goal {
                light: WarningLight::Red,
                start: TargetStart::Step(100),
                len: 40,
            },
        }
    }
}

/// Everything fixed about an experiment before choosing an attack.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub spec: ScenarioSpec,
    pub noise: NoiseParams,
    pub preprocess: PreprocessParams,
    pub goal: Goal,
    pub h_star: u32,
    /// Template for attack parameters; intervals and lights are filled in.
    pub delta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Experiment {
    pub fn new(spec: ScenarioSpec) -> Self {
        let goal = Goal::for_family(spec.family);
        Self {
            spec,
            noise: NoiseParams::default(),
            preprocess: PreprocessParams::default(),
            goal,
            h_star: DEFAULT_REACTION_STEPS,
            delta: f64::INFINITY,
            lambda: 1e10,
            epsilon: 1e-3,
            qp_tol: crate::qp::DEFAULT_TOL,
            qp_max_iter: crate::qp::DEFAULT_MAX_ITER,
        }
    }

    /// Synthesize, preprocess and track the unattacked trace.
    pub fn prepare(&self) -> Result<Prepared> {
        let raw = synthesize_trace(&self.spec)?;
        self.prepare_from(raw.frames, raw.truth)
    }

    /// Use externally supplied raw frames and ground truth. The ground
    /// truth may be empty, in which case crash outcomes are unavailable.
    pub fn prepare_from(&self, raw: Vec<MeasurementFrame>, truth: Vec<GroundTruth>) -> Result<Prepared> {
        if !truth.is_empty() && raw.len() != truth.len() {
            return Err(Error::Dimension {
                what: "ground truth",
                expected: raw.len(),
                got: truth.len(),
            });
        }
        let trace = preprocess_with(&raw, &self.preprocess)?;
        let model = KfModel::constant_acceleration(self.spec.dt, &self.noise)?;
        let sigma0 = KfModel::default_prior(&self.noise);
        let states = track_trace(&model, &sigma0, &trace)?;
        let baseline: Vec<WarningLight> = states.iter().map(|s| classify(&s.state())).collect();
        let first = match self.goal.start {
            TargetStart::Step(s) => s,
            TargetStart::FirstRed => {
                baseline
                    .iter()
                    .position(|&l| l == WarningLight::Red)
                    .ok_or_else(|| Error::invalid("the unattacked run never shows red"))?
                    + 1
            }
        };
        if self.goal.len == 0 {
            return Err(Error::invalid("target interval is empty"));
        }
        let target = StepRange::new(first, first + self.goal.len - 1);
        if first < 2 || target.last > trace.len() {
            return Err(Error::invalid(format!(
                "target interval {}..={} does not fit a {}-step trace",
                target.first,
                target.last,
                trace.len()
            )));
        }
        Ok(Prepared {
            experiment: self.clone(),
            raw,
            trace,
            truth,
            model,
            sigma0,
            baseline,
            target,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub experiment: Experiment,
    pub raw: Vec<MeasurementFrame>,
    pub trace: Vec<MeasurementFrame>,
    pub truth: Vec<GroundTruth>,
    pub model: KfModel,
    pub sigma0: Matrix6<f64>,
    /// Lights of the unattacked run.
    pub baseline: Vec<WarningLight>,
    pub target: StepRange,
}

impl Prepared {
    /// The longest stealthy interval: from step 2 to just before the target.
    pub fn full_stealthy(&self) -> StepRange {
        StepRange::new(2, self.target.first - 1)
    }

    /// The last `round(fraction · full)` steps before the target.
    pub fn stealthy_for(&self, fraction: f64) -> StepRange {
        let full = self.full_stealthy().len();
        let n = round(fraction.clamp(0.0, 1.0) * full as f64) as usize;
        if n == 0 {
            StepRange::empty()
        } else {
            StepRange::new(self.target.first - n, self.target.first - 1)
        }
    }

    pub fn config(&self, stealthy: StepRange, delta: f64) -> AttackConfig {
        let e = &self.experiment;
        let original = (stealthy.first..=stealthy.last).map(|t| self.baseline[t - 1]).collect();
        AttackConfig {
            delta,
            lambda: e.lambda,
            epsilon: e.epsilon,
            qp_tol: e.qp_tol,
            qp_max_iter: e.qp_max_iter,
            ..AttackConfig::new(self.target, alloc::vec![e.goal.light; self.target.len()], stealthy, original)
        }
    }

    pub fn attack(&self, strategy: Strategy, cfg: &AttackConfig) -> Result<AttackResult> {
        run_strategy(strategy, cfg, &self.model, &self.sigma0, &self.trace)
    }

    /// Crash outcome of a light sequence, using ground-truth kinematics.
    /// Panics without ground truth; see [`Prepared::try_outcome`].
    pub fn outcome(&self, lights: &[WarningLight]) -> CrashReport {
        end_to_end_outcome(self, lights)
    }

    pub fn try_outcome(&self, lights: &[WarningLight]) -> Option<CrashReport> {
        (!self.truth.is_empty()).then(|| end_to_end_outcome(self, lights))
    }
}

/// Drive the human model with `lights` and ask the scenario's crash oracle.
pub fn end_to_end_outcome(prep: &Prepared, lights: &[WarningLight]) -> CrashReport {
    let e = &prep.experiment;
    let braking = simulate_driver(lights, e.h_star);
    let start = prep.truth[0];
    let onset = braking.iter().position(|&b| b).map(|i| i + 1);
    match e.spec.family {
        ScenarioFamily::Forward => forward_crash_oracle(&start.ego, &start.mio, onset, e.spec.dt),
        ScenarioFamily::Rear => {
            let gap = start.ego.position - start.trailing.position;
            let Some(on) = onset else {
                return rear_crash_oracle(gap, 0.0, e.spec.dt);
            };
            let len = braking[on - 1..].iter().take_while(|&&b| b).count();
            let mut r = rear_crash_oracle(gap, len as f64 * e.spec.dt, e.spec.dt);
            r.step = r.step.map(|s| s + on - 1);
            r
        }
    }
}

/// Steps during which the driver brakes, as `(first, count)` of the first
/// braking run.
pub fn first_braking_run(lights: &[WarningLight], h_star: u32) -> Option<(usize, usize)> {
    let b = simulate_driver(lights, h_star);
    let on = b.iter().position(|&x| x)?;
    Some((on + 1, b[on..].iter().take_while(|&&x| x).count()))
}

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepPoint {
    Fraction(f64),
    Delta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub strategy: Strategy,
    pub fraction: f64,
    pub stealthy_len: usize,
    pub delta: f64,
    pub metrics: Option<Metrics>,
    /// Target steps showing the target light.
    pub achieved: Option<usize>,
    pub crash: Option<CrashReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Run one attack and summarise it. Failures are captured in the row.
pub fn run_point(prep: &Prepared, strategy: Strategy, fraction: f64, delta: f64) -> SweepRow {
    let stealthy = prep.stealthy_for(fraction);
    let cfg = prep.config(stealthy, delta);
    let mut row = SweepRow {
        scenario: prep.experiment.spec.name.clone(),
        strategy,
        fraction,
        stealthy_len: stealthy.len(),
        delta,
        metrics: None,
        achieved: None,
        crash: None,
        error: None,
    };
    match prep.attack(strategy, &cfg) {
        Ok(res) => {
            row.achieved = Some(cfg.target.len() - res.metrics.v_target);
            row.crash = prep.try_outcome(&res.lights_attacked());
            row.metrics = Some(res.metrics);
        }
        Err(e) => row.error = Some(format!("{e}")),
    }
    row
}

pub const PLANNING_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// One attack per fraction of the full stealthy interval.
pub fn planning_sweep(prep: &Prepared, strategy: Strategy, fractions: &[f64], delta: f64) -> SweepResult {
    SweepResult {
        rows: fractions.iter().map(|&f| run_point(prep, strategy, f, delta)).collect(),
    }
}

/// MPC attacks with full planning for each Δ.
pub fn delta_sweep(prep: &Prepared, deltas: &[f64]) -> SweepResult {
    SweepResult {
        rows: deltas.iter().map(|&d| run_point(prep, Strategy::Mpc, 1.0, d)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrackState;
    use alloc::vec;

    fn record(t: usize, delta: [f64; 8], attacked: TrackState, xi: f64, zeta: f64) -> StepRecord {
        let y = MeasurementFrame([0.0; 8]);
        StepRecord {
            t,
            role: StepRole::Outside,
            y,
            delta,
            y_attacked: y,
            clean: attacked,
            attacked,
            light_clean: classify(&attacked),
            light_attacked: classify(&attacked),
            desired: None,
            xi,
            zeta,
            qp: None,
        }
    }

    fn state(d1: f64, v1: f64) -> TrackState {
        TrackState { d1, v1, ..Default::default() }
    }

    #[test]
    fn metrics_zero_when_untouched() {
        let cfg = AttackConfig::new(StepRange::new(2, 3), vec![WarningLight::Green; 2], StepRange::empty(), vec![]);
        let recs: Vec<_> = (1..=3).map(|t| record(t, [0.0; 8], state(10.0, 1.0), 0.0, 0.0)).collect();
        assert_eq!(
            compute_metrics(&recs, &cfg),
            Metrics { lambda: 1e10, ..Metrics::default() }
        );
    }

    #[test]
    fn effort_of_unit_manipulation() {
        let cfg = AttackConfig::new(StepRange::new(2, 3), vec![WarningLight::Green; 2], StepRange::empty(), vec![]);
        let mut d = [0.0; 8];
        d[0] = 1.0;
        let recs = vec![record(1, [0.0; 8], state(10.0, 1.0), 0.0, 0.0), record(2, d, state(10.0, 1.0), 0.0, 0.0)];
        assert_eq!(compute_metrics(&recs, &cfg).j1, 1.0);
    }

    #[test]
    fn one_target_miss() {
        let cfg = AttackConfig::new(StepRange::new(3, 3), vec![WarningLight::Green], StepRange::new(2, 2), vec![WarningLight::Yellow]);
        let recs = vec![
            record(1, [0.0; 8], state(50.0, -1.0), 0.0, 0.0),
            record(2, [0.0; 8], state(50.0, -1.0), 0.0, 0.0),
            record(3, [0.0; 8], state(50.0, -0.5), 0.501, 0.0),
        ];
        let m = compute_metrics(&recs, &cfg);
        assert_eq!(m.v_target, 1);
        assert_eq!(m.v_stealth, 0);
        assert!((m.j3 - 0.501 * 0.501).abs() < 1e-15);
        assert_eq!(m.j, m.j1 + m.lambda * (m.j2 + m.j3));
    }
}
