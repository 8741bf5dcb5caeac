//! Attack planning against the tracking filter.
//!
//! The attacker adds `δ_t` to the vision part of each measurement in the
//! attack interval. Because the filter is linear with measurement-independent
//! gains, every future attacked state is an affine function of the
//! manipulations, and with the surrogate light regions the whole plan is a
//! convex QP. The MPC attacker re-solves that QP every step against
//! noise-free predictions of the future measurements and applies only the
//! first manipulation. The greedy attacker saturates the manipulation
//! instead.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::alert::{classify, WarningLight};
use crate::error::{Error, Result};
use crate::harness::{compute_metrics, Metrics};
use crate::model::{
    kf_correct, kf_init_frame, kf_predict, precompute_covariances, CovarianceStep, FilterState, KfModel, Matrix6x8,
    Matrix8, MeasurementFrame, TrackState, Vector8,
};
use crate::qp::{self, QpProblem, QpStatus};
use crate::surrogate::{required_slacks, slacken, surrogate_for, SlackFamily, SurrogateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mpc,
    Greedy,
    None,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mpc => "mpc",
            Strategy::Greedy => "greedy",
            Strategy::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mpc" => Some(Strategy::Mpc),
            "greedy" => Some(Strategy::Greedy),
            "none" => Some(Strategy::None),
            _ => None,
        }
    }
}

/// Inclusive range of 1-based steps; empty when `first > last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRange {
    pub first: usize,
    pub last: usize,
}

impl StepRange {
    pub fn new(first: usize, last: usize) -> Self {
        Self { first, last }
    }

    pub fn empty() -> Self {
        Self { first: 1, last: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.first > self.last
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.last - self.first + 1
        }
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.first && t <= self.last
    }
}

/// What the attacker wants at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRole {
    Outside,
    Stealthy,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub target: StepRange,
    /// Light wanted at each step of `target`.
    pub target_lights: Vec<WarningLight>,
    pub stealthy: StepRange,
    /// Unattacked light at each step of `stealthy`, to be preserved.
    pub original_lights: Vec<WarningLight>,
    /// Per-component bound on vision manipulations (may be infinite).
    pub delta: f64,
    pub lambda: f64,
    /// Effort weight on the full 8-slot manipulation.
    pub r: Matrix8,
    pub d_bounds: (f64, f64),
    pub v_bounds: (f64, f64),
    pub epsilon: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl AttackConfig {
    pub fn new(
        target: StepRange,
        target_lights: Vec<WarningLight>,
        stealthy: StepRange,
        original_lights: Vec<WarningLight>,
    ) -> Self {
        Self {
            target,
            target_lights,
            stealthy,
            original_lights,
            delta: f64::INFINITY,
            lambda: 1e10,
            r: Matrix8::identity(),
            d_bounds: (0.0, 75.0),
            v_bounds: (-30.0, 30.0),
            epsilon: 1e-3,
            qp_tol: qp::DEFAULT_TOL,
            qp_max_iter: qp::DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::invalid("target interval is empty"));
        }
        if self.target_lights.len() != self.target.len() {
            return Err(Error::Dimension {
                what: "target lights",
                expected: self.target.len(),
                got: self.target_lights.len(),
            });
        }
        if self.original_lights.len() != self.stealthy.len() {
            return Err(Error::Dimension {
                what: "original lights",
                expected: self.stealthy.len(),
                got: self.original_lights.len(),
            });
        }
        if !self.stealthy.is_empty() && self.stealthy.last >= self.target.first {
            return Err(Error::invalid("stealthy interval must end before the target interval"));
        }
        if self.attack_first() < 2 {
            return Err(Error::invalid("attacks start at step 2 or later; step 1 initialises the filter"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive and finite"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::invalid("delta must be non-negative"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.d_bounds.0 > self.d_bounds.1 || self.v_bounds.0 > self.v_bounds.1 {
            return Err(Error::invalid("physical bounds are inverted"));
        }
        if (self.r - self.r.transpose()).amax() > 1e-12 * (1.0 + self.r.amax()) || self.r.cholesky().is_none() {
            return Err(Error::invalid("effort matrix must be symmetric positive definite"));
        }
        Ok(())
    }

    pub fn attack_first(&self) -> usize {
        if self.stealthy.is_empty() {
            self.target.first
        } else {
            self.stealthy.first
        }
    }

    /// The attack and target intervals end together.
    pub fn attack_last(&self) -> usize {
        self.target.last
    }

    pub fn role(&self, t: usize) -> StepRole {
        if self.target.contains(t) {
            StepRole::Target
        } else if self.stealthy.contains(t) {
            StepRole::Stealthy
        } else {
            StepRole::Outside
        }
    }

    pub fn is_attacked(&self, t: usize) -> bool {
        self.role(t) != StepRole::Outside
    }

    /// Light the attacker wants at step `t`, if any.
    pub fn desired(&self, t: usize) -> Option<WarningLight> {
        match self.role(t) {
            StepRole::Target => Some(self.target_lights[t - self.target.first]),
            StepRole::Stealthy => Some(self.original_lights[t - self.stealthy.first]),
            StepRole::Outside => None,
        }
    }

    pub fn surrogate(&self) -> Result<SurrogateParams> {
        SurrogateParams::new(self.epsilon, self.d_bounds.1)
    }

    /// Bounds on the vision manipulation of step-measurement `y`: the Δ box,
    /// intersected with the physical range on the driving-direction slots.
    /// If `y` lies so far outside the range that the two are disjoint, the
    /// manipulation is pinned at the Δ limit nearest to the range.
    pub fn delta_bounds(&self, y: &Vector8) -> ([f64; 4], [f64; 4]) {
        let mut lo = [-self.delta; 4];
        let mut hi = [self.delta; 4];
        for (slot, (bmin, bmax)) in [(0usize, self.d_bounds), (1, self.v_bounds)] {
            let l = lo[slot].max(bmin - y[slot]);
            let h = hi[slot].min(bmax - y[slot]);
            if l <= h {
                lo[slot] = l;
                hi[slot] = h;
            } else if y[slot] > bmax {
                lo[slot] = -self.delta;
                hi[slot] = -self.delta;
            } else {
                lo[slot] = self.delta;
                hi[slot] = self.delta;
            }
        }
        (lo, hi)
    }
}

/// `x̃_τ = M_τ + Σ_{s≤τ} N_{τ,s} δ_s` for `τ = first..first+len-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRollout {
    pub first: usize,
    /// `offsets[k] = M_{first+k}`.
    pub offsets: Vec<Vector6<f64>>,
    /// `sens[k][s] = N_{first+k, first+s}` for `s ≤ k`.
    pub sens: Vec<Vec<Matrix6x8>>,
}

impl AffineRollout {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Attacked states for the given manipulations, one per step.
    pub fn evaluate(&self, deltas: &[Vector8]) -> Vec<Vector6<f64>> {
        (0..self.len())
            .map(|k| {
                let mut x = self.offsets[k];
                for (s, n) in self.sens[k].iter().enumerate() {
                    x += n * deltas[s];
                }
                x
            })
            .collect()
    }
}

/// Affine dependence of the attacked predictions `x̃_t .. x̃_{t+h-1}` on the
/// manipulations, starting from the prediction `x_start = x̃_{t-1}`.
/// `ys[k]` is the unmanipulated measurement of step `t+k` and `gains[k]`
/// holds step `k+1`.
pub fn build_affine_rollout(
    model: &KfModel,
    x_start: &Vector6<f64>,
    gains: &[CovarianceStep],
    ys: &[Vector8],
    first_step: usize,
) -> Result<AffineRollout> {
    if first_step < 2 {
        return Err(Error::invalid("rollouts start at step 2 or later"));
    }
    let h = ys.len();
    // Step τ uses the gain of step τ-1, stored at index τ-2.
    let needed = first_step - 2 + h;
    if needed > gains.len() {
        return Err(Error::Horizon {
            requested: needed,
            available: gains.len(),
        });
    }
    let mut offsets = Vec::with_capacity(h);
    let mut sens: Vec<Vec<Matrix6x8>> = Vec::with_capacity(h);
    let mut m = *x_start;
    for k in 0..h {
        let gain = &gains[first_step - 2 + k].gain;
        let f = model.a * (Matrix6::identity() - gain * model.c);
        let g = model.a * gain;
        m = f * m + g * ys[k];
        offsets.push(m);
        let mut row: Vec<Matrix6x8> = Vec::with_capacity(k + 1);
        if k > 0 {
            for n in &sens[k - 1] {
                row.push(f * n);
            }
        }
        row.push(g);
        sens.push(row);
    }
    Ok(AffineRollout {
        first: first_step,
        offsets,
        sens,
    })
}

/// Noise-free measurement predictions `C A^τ x` for `τ = 1..=horizon`.
pub fn predict_future_measurements(x: &Vector6<f64>, model: &KfModel, horizon: usize) -> Vec<Vector8> {
    let mut out = Vec::with_capacity(horizon);
    let mut s = *x;
    for _ in 0..horizon {
        s = model.a * s;
        out.push(model.c * s);
    }
    out
}

/// Where each quantity lives in the inner QP's decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerLayout {
    pub first_step: usize,
    /// Index of the 4 vision manipulations of step `first_step + k`.
    pub delta: Vec<Option<usize>>,
    pub xi: Vec<Option<usize>>,
    pub zeta: Vec<Option<usize>>,
    /// Slack variables are stored as `√λ·ξ`; multiply by this to recover ξ.
    pub slack_scale: f64,
    pub n: usize,
}

impl InnerLayout {
    pub fn delta_at(&self, z: &DVector<f64>, k: usize) -> Vector8 {
        let mut d = Vector8::zeros();
        if let Some(i) = self.delta[k] {
            for c in 0..4 {
                d[c] = z[i + c];
            }
        }
        d
    }

    pub fn slacks_at(&self, z: &DVector<f64>, k: usize) -> (f64, f64) {
        let get = |i: Option<usize>| i.map_or(0.0, |i| z[i] * self.slack_scale);
        (get(self.xi[k]), get(self.zeta[k]))
    }
}

/// The inner problem at step `t = rollout.first`: manipulations for every
/// attacked step from `t` to the end of the attack, slacks for every step
/// with a desired light, surrogate constraints on the rolled-out states.
/// `ys` are the measurements the rollout was built from.
pub fn assemble_inner_qp(cfg: &AttackConfig, rollout: &AffineRollout, ys: &[Vector8]) -> Result<(QpProblem, InnerLayout)> {
    let t = rollout.first;
    let h = rollout.len();
    if ys.len() != h {
        return Err(Error::Dimension {
            what: "inner QP measurements",
            expected: h,
            got: ys.len(),
        });
    }
    if t + h - 1 != cfg.attack_last() {
        return Err(Error::Dimension {
            what: "rollout end step",
            expected: cfg.attack_last(),
            got: t + h - 1,
        });
    }
    let sp = cfg.surrogate()?;
    let mut n = 0;
    let mut delta = vec![None; h];
    for k in 0..h {
        if cfg.is_attacked(t + k) {
            delta[k] = Some(n);
            n += 4;
        }
    }
    let mut xi = vec![None; h];
    let mut zeta = vec![None; h];
    let mut cons = Vec::new();
    for k in 0..h {
        let Some(light) = cfg.desired(t + k) else { continue };
        let cs = slacken(&surrogate_for(light, &sp));
        for c in &cs {
            let slot = match c.slack {
                Some(SlackFamily::Zeta) => &mut zeta[k],
                _ => &mut xi[k],
            };
            let idx = *slot.get_or_insert_with(|| {
                n += 1;
                n - 1
            });
            cons.push((k, *c, idx));
        }
    }
    let slack_scale = 1.0 / libm::sqrt(cfg.lambda);

    let mut p = DMatrix::zeros(n, n);
    let q = DVector::zeros(n);
    let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(n, f64::INFINITY);
    for k in 0..h {
        if let Some(i) = delta[k] {
            for a in 0..4 {
                for b in 0..4 {
                    p[(i + a, i + b)] = 2.0 * cfg.r[(a, b)];
                }
            }
            let (lo, hi) = cfg.delta_bounds(&ys[k]);
            for a in 0..4 {
                lb[i + a] = lo[a];
                ub[i + a] = hi[a];
            }
        }
        for i in [xi[k], zeta[k]].into_iter().flatten() {
            p[(i, i)] = 2.0;
        }
    }

    let mut g = DMatrix::zeros(cons.len(), n);
    let mut hv = DVector::zeros(cons.len());
    for (row, (k, c, sidx)) in cons.iter().enumerate() {
        let m = &rollout.offsets[*k];
        hv[row] = c.bound - c.coef_d * m[0] - c.coef_v * m[1];
        for (s, nmat) in rollout.sens[*k].iter().enumerate() {
            if let Some(i) = delta[s] {
                for a in 0..4 {
                    g[(row, i + a)] = c.coef_d * nmat[(0, a)] + c.coef_v * nmat[(1, a)];
                }
            }
        }
        g[(row, *sidx)] = -slack_scale;
    }
    let prob = QpProblem { p, q, g, h: hv, lb, ub };
    Ok((
        prob,
        InnerLayout {
            first_step: t,
            delta,
            xi,
            zeta,
            slack_scale,
            n,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpStats {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub variables: usize,
    pub constraints: usize,
}

/// Everything that happened at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub role: StepRole,
    pub y: MeasurementFrame,
    pub delta: [f64; 8],
    pub y_attacked: MeasurementFrame,
    pub clean: TrackState,
    pub attacked: TrackState,
    pub light_clean: WarningLight,
    pub light_attacked: WarningLight,
    pub desired: Option<WarningLight>,
    /// Smallest slacks that make the attacked state satisfy the surrogate
    /// of the desired light.
    pub xi: f64,
    pub zeta: f64,
    pub qp: Option<QpStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub strategy: Strategy,
    pub records: Vec<StepRecord>,
    pub metrics: Metrics,
}

impl AttackResult {
    pub fn lights_clean(&self) -> Vec<WarningLight> {
        self.records.iter().map(|r| r.light_clean).collect()
    }

    pub fn lights_attacked(&self) -> Vec<WarningLight> {
        self.records.iter().map(|r| r.light_attacked).collect()
    }

    pub fn manipulations(&self) -> Vec<[f64; 8]> {
        self.records.iter().map(|r| r.delta).collect()
    }
}

/// Direction a greedy attacker pushes the driving-direction measurements.
fn greedy_pushes_up(cfg: &AttackConfig) -> bool {
    !cfg.target_lights.contains(&WarningLight::Red)
}

/// Runs one attack incrementally: construct it with the first measurement,
/// then feed one measurement per step. Only measurements already fed are
/// ever used.
pub struct Attacker {
    strategy: Strategy,
    cfg: AttackConfig,
    model: KfModel,
    surrogate: SurrogateParams,
    gains: Vec<CovarianceStep>,
    clean: FilterState,
    attacked: FilterState,
    records: Vec<StepRecord>,
}

/// The receding-horizon attacker.
pub type MpcAttacker = Attacker;

impl Attacker {
    pub fn new(
        strategy: Strategy,
        cfg: AttackConfig,
        model: KfModel,
        sigma0: &Matrix6<f64>,
        first: &MeasurementFrame,
    ) -> Result<Self> {
        cfg.validate()?;
        let surrogate = cfg.surrogate()?;
        let gains = precompute_covariances(&model, sigma0, cfg.attack_last().max(1))?;
        let init = kf_init_frame(first, sigma0).map_err(|e| e.at_step(1))?;
        let mut me = Self {
            strategy,
            cfg,
            model,
            surrogate,
            gains,
            clean: init.clone(),
            attacked: init,
            records: Vec::new(),
        };
        me.push_record(1, *first, Vector8::zeros(), None);
        Ok(me)
    }

    pub fn config(&self) -> &AttackConfig {
        &self.cfg
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Next step to be consumed.
    pub fn next_step(&self) -> usize {
        self.records.len() + 1
    }

    fn push_record(&mut self, t: usize, y: MeasurementFrame, delta: Vector8, qp: Option<QpStats>) {
        let clean = self.clean.state();
        let attacked = self.attacked.state();
        let desired = self.cfg.desired(t);
        let (xi, zeta) = match desired {
            Some(l) => required_slacks(l, &self.surrogate, attacked.d1, attacked.v1),
            None => (0.0, 0.0),
        };
        let y_att = MeasurementFrame::from_vector(&(y.to_vector() + delta));
        let mut d = [0.0; 8];
        d.copy_from_slice(delta.as_slice());
        self.records.push(StepRecord {
            t,
            role: self.cfg.role(t),
            y,
            delta: d,
            y_attacked: y_att,
            clean,
            attacked,
            light_clean: classify(&clean),
            light_attacked: classify(&attacked),
            desired,
            xi,
            zeta,
            qp,
        });
    }

    /// Consume the measurement of the next step.
    pub fn step(&mut self, y: &MeasurementFrame) -> Result<&StepRecord> {
        let t = self.next_step();
        let corrected = kf_correct(&self.model, &self.clean, y).map_err(|e| e.at_step(t))?;
        let (delta, stats) = if self.cfg.is_attacked(t) {
            match self.strategy {
                Strategy::Mpc => {
                    let (d, s) = self.plan(t, y, &corrected.xbar)?;
                    (d, Some(s))
                }
                Strategy::Greedy => (self.greedy(y), None),
                Strategy::None => (Vector8::zeros(), None),
            }
        } else {
            (Vector8::zeros(), None)
        };
        self.clean = kf_predict(&self.model, &corrected);
        let y_att = MeasurementFrame::from_vector(&(y.to_vector() + delta));
        let att = kf_correct(&self.model, &self.attacked, &y_att).map_err(|e| e.at_step(t))?;
        self.attacked = kf_predict(&self.model, &att);
        self.push_record(t, *y, delta, stats);
        Ok(self.records.last().expect("just pushed"))
    }

    fn plan(&self, t: usize, y: &MeasurementFrame, xbar_clean: &Vector6<f64>) -> Result<(Vector8, QpStats)> {
        let end = self.cfg.attack_last();
        let mut ys = Vec::with_capacity(end - t + 1);
        ys.push(y.to_vector());
        ys.extend(predict_future_measurements(xbar_clean, &self.model, end - t));
        let rollout = build_affine_rollout(&self.model, &self.attacked.xhat, &self.gains, &ys, t).map_err(|e| e.at_step(t))?;
        let (prob, layout) = assemble_inner_qp(&self.cfg, &rollout, &ys).map_err(|e| e.at_step(t))?;
        let sol = qp::solve(&prob, self.cfg.qp_tol, self.cfg.qp_max_iter).map_err(|e| e.at_step(t))?;
        if sol.status != QpStatus::Optimal {
            return Err(Error::QpFailed {
                step: t,
                status: sol.status,
                diagnostic: sol.diagnostic().to_string(),
            });
        }
        let stats = QpStats {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            objective: sol.objective,
            variables: prob.n(),
            constraints: prob.m(),
        };
        Ok((layout.delta_at(&sol.z, 0), stats))
    }

    fn greedy(&self, y: &MeasurementFrame) -> Vector8 {
        let mut d = Vector8::zeros();
        let up = greedy_pushes_up(&self.cfg);
        for (slot, (lo, hi)) in [(0usize, self.cfg.d_bounds), (1, self.cfg.v_bounds)] {
            let v = y.0[slot];
            let target = if up {
                (v + self.cfg.delta).min(hi)
            } else {
                (v - self.cfg.delta).max(lo)
            };
            // Never move against the push direction, even from outside
            // the physical range.
            d[slot] = if up { (target - v).max(0.0) } else { (target - v).min(0.0) };
        }
        d
    }

    pub fn finish(self) -> AttackResult {
        let metrics = compute_metrics(&self.records, &self.cfg);
        AttackResult {
            strategy: self.strategy,
            records: self.records,
            metrics,
        }
    }
}

fn run(
    strategy: Strategy,
    cfg: &AttackConfig,
    model: &KfModel,
    sigma0: &Matrix6<f64>,
    trace: &[MeasurementFrame],
) -> Result<AttackResult> {
    let first = trace.first().ok_or_else(|| Error::invalid("empty trace"))?;
    if trace.len() < cfg.attack_last() {
        return Err(Error::invalid("trace ends before the attack interval"));
    }
    let mut a = Attacker::new(strategy, cfg.clone(), model.clone(), sigma0, first)?;
    for y in &trace[1..] {
        a.step(y)?;
    }
    Ok(a.finish())
}

/// Receding-horizon attack over a preprocessed trace.
pub fn mpc_attack(cfg: &AttackConfig, model: &KfModel, sigma0: &Matrix6<f64>, trace: &[MeasurementFrame]) -> Result<AttackResult> {
    run(Strategy::Mpc, cfg, model, sigma0, trace)
}

/// Saturating baseline: push the driving-direction vision distance and
/// velocity as far as Δ and the physical range allow, towards green
/// unless a red light is targeted.
pub fn greedy_attack(cfg: &AttackConfig, model: &KfModel, sigma0: &Matrix6<f64>, trace: &[MeasurementFrame]) -> Result<AttackResult> {
    run(Strategy::Greedy, cfg, model, sigma0, trace)
}

/// The same bookkeeping with no manipulation.
pub fn no_attack(cfg: &AttackConfig, model: &KfModel, sigma0: &Matrix6<f64>, trace: &[MeasurementFrame]) -> Result<AttackResult> {
    run(Strategy::None, cfg, model, sigma0, trace)
}

pub fn run_strategy(
    strategy: Strategy,
    cfg: &AttackConfig,
    model: &KfModel,
    sigma0: &Matrix6<f64>,
    trace: &[MeasurementFrame],
) -> Result<AttackResult> {
    run(strategy, cfg, model, sigma0, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseParams;

    fn model() -> KfModel {
        KfModel::constant_acceleration(0.05, &NoiseParams::default()).unwrap()
    }

    #[test]
    fn step_range_basics() {
        assert!(StepRange::empty().is_empty());
        assert_eq!(StepRange::empty().len(), 0);
        assert_eq!(StepRange::new(3, 5).len(), 3);
    }

    #[test]
    fn future_measurements() {
        let m = model();
        assert!(predict_future_measurements(&Vector6::zeros(), &m, 0).is_empty());
        let y = predict_future_measurements(&Vector6::new(20.0, -10.0, 0.0, 0.0, 0.0, 0.0), &m, 2);
        assert!((y[1][0] - 19.0).abs() < 1e-12);
        assert!((y[1][4] - 19.0).abs() < 1e-12);
        let y = predict_future_measurements(&Vector6::new(20.0, -10.0, 0.0, 1.0, 0.0, 0.0), &m, 5);
        for k in 1..5 {
            assert!(((y[k][0] - y[k - 1][0]) + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_clips() {
        let cfg = AttackConfig {
            delta: 30.0,
            ..AttackConfig::new(StepRange::new(5, 6), vec![WarningLight::Green; 2], StepRange::empty(), vec![])
        };
        let init = MeasurementFrame::new([50.0, -5.0, 0.0, 0.0], [50.0, -5.0, 0.0, 0.0]);
        let a = Attacker::new(Strategy::Greedy, cfg, model(), &(Matrix6::identity() * 100.0), &init).unwrap();
        let d = a.greedy(&init);
        assert_eq!(d[0], 25.0);
        assert_eq!(d[1], 30.0);
        assert!(d.iter().skip(2).all(|&x| x == 0.0));
    }

    #[test]
    fn config_validation() {
        let ok = AttackConfig::new(StepRange::new(5, 6), vec![WarningLight::Green; 2], StepRange::new(2, 4), vec![WarningLight::Yellow; 3]);
        assert!(ok.validate().is_ok());
        assert_eq!(ok.role(3), StepRole::Stealthy);
        assert_eq!(ok.desired(6), Some(WarningLight::Green));
        let bad = AttackConfig { stealthy: StepRange::new(2, 5), original_lights: vec![WarningLight::Yellow; 4], ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = AttackConfig { lambda: 0.0, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = AttackConfig { stealthy: StepRange::new(1, 4), original_lights: vec![WarningLight::Yellow; 4], ..ok };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn delta_bounds_pin_when_disjoint() {
        let cfg = AttackConfig {
            delta: 2.0,
            ..AttackConfig::new(StepRange::new(5, 6), vec![WarningLight::Green; 2], StepRange::empty(), vec![])
        };
        let mut y = Vector8::zeros();
        y[0] = 80.0;
        y[1] = 10.0;
        let (lo, hi) = cfg.delta_bounds(&y);
        assert_eq!((lo[0], hi[0]), (-2.0, -2.0));
        assert_eq!((lo[1], hi[1]), (-2.0, 2.0));
    }
}
