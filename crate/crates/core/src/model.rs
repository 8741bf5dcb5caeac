//! Linear state-space model of the lead vehicle and the Kalman filter that
//! tracks it.
//!
//! Indexing follows the trace: `x̂_1` comes from averaging the first vision
//! and radar frames, and step `t ≥ 2` corrects the step `t-1` prediction with
//! `y_t` before predicting `x̂_t`. The warning light at step `t` is computed
//! from `x̂_t`.

use alloc::vec::Vec;

use nalgebra::{Matrix6, SMatrix, SVector, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Matrix8x6 = SMatrix<f64, 8, 6>;
pub type Matrix6x8 = SMatrix<f64, 6, 8>;
pub type Vector8 = SVector<f64, 8>;

/// Lead-vehicle state relative to the ego vehicle. Axis 1 is the driving
/// direction, axis 2 is lateral.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackState {
    pub d1: f64,
    pub v1: f64,
    pub a1: f64,
    pub d2: f64,
    pub v2: f64,
    pub a2: f64,
}

impl TrackState {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.d1, self.v1, self.a1, self.d2, self.v2, self.a2)
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            d1: x[0],
            v1: x[1],
            a1: x[2],
            d2: x[3],
            v2: x[4],
            a2: x[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// One frame of detections: vision `(d1, v1, d2, v2)` in slots 0..4 and
/// radar `(d1, v1, d2, v2)` in slots 4..8. A missing detection is `NaN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFrame(pub [f64; 8]);

impl MeasurementFrame {
    pub const VISION: [usize; 4] = [0, 1, 2, 3];
    pub const RADAR: [usize; 4] = [4, 5, 6, 7];
    pub const VISION_D1: usize = 0;
    pub const VISION_V1: usize = 1;

    pub fn new(vision: [f64; 4], radar: [f64; 4]) -> Self {
        let mut y = [0.0; 8];
        y[..4].copy_from_slice(&vision);
        y[4..].copy_from_slice(&radar);
        Self(y)
    }

    pub fn vision(&self) -> Vector4<f64> {
        Vector4::new(self.0[0], self.0[1], self.0[2], self.0[3])
    }

    pub fn radar(&self) -> Vector4<f64> {
        Vector4::new(self.0[4], self.0[5], self.0[6], self.0[7])
    }

    pub fn to_vector(&self) -> Vector8 {
        Vector8::from_row_slice(&self.0)
    }

    pub fn from_vector(y: &Vector8) -> Self {
        let mut a = [0.0; 8];
        a.copy_from_slice(y.as_slice());
        Self(a)
    }

    pub fn is_complete(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Knobs behind the default noise covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Per-axis acceleration-noise intensity; the white-noise acceleration
    /// variance per step is `accel_intensity * dt`.
    pub accel_intensity: f64,
    /// Variance of each vision slot.
    pub vision_var: f64,
    /// Variance of each radar slot.
    pub radar_var: f64,
    /// Diagonal of the initial covariance.
    pub prior_var: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            accel_intensity: 1.0,
            vision_var: 0.25,
            radar_var: 0.25,
            prior_var: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfModel {
    pub a: Matrix6<f64>,
    pub c: Matrix8x6,
    pub omega: Matrix6<f64>,
    pub psi: Matrix8,
    pub dt: f64,
}

impl KfModel {
    /// Constant-acceleration model on both axes, with `(d, v)` of each axis
    /// observed by both sensors.
    pub fn constant_acceleration(dt: f64, noise: &NoiseParams) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        let np = [
            noise.accel_intensity,
            noise.vision_var,
            noise.radar_var,
            noise.prior_var,
        ];
        if np.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("noise parameters must be finite and non-negative"));
        }
        let mut a = Matrix6::zeros();
        let mut omega = Matrix6::zeros();
        let q = noise.accel_intensity * dt;
        for axis in 0..2 {
            let o = 3 * axis;
            a[(o, o)] = 1.0;
            a[(o, o + 1)] = dt;
            a[(o, o + 2)] = 0.5 * dt * dt;
            a[(o + 1, o + 1)] = 1.0;
            a[(o + 1, o + 2)] = dt;
            a[(o + 2, o + 2)] = 1.0;
            omega[(o, o)] = q * dt * dt * dt * dt / 4.0;
            omega[(o + 1, o + 1)] = q * dt * dt;
            omega[(o + 2, o + 2)] = q;
        }
        let mut c = Matrix8x6::zeros();
        // (d1, v1, d2, v2) sit at state slots (0, 1, 3, 4).
        for (slot, state) in [0usize, 1, 3, 4].into_iter().enumerate() {
            c[(slot, state)] = 1.0;
            c[(slot + 4, state)] = 1.0;
        }
        let mut psi = Matrix8::zeros();
        for i in 0..4 {
            psi[(i, i)] = noise.vision_var;
            psi[(i + 4, i + 4)] = noise.radar_var;
        }
        Ok(Self { a, c, omega, psi, dt })
    }

    pub fn default_prior(noise: &NoiseParams) -> Matrix6<f64> {
        Matrix6::identity() * noise.prior_var
    }

    /// Kalman gain for a given prior covariance.
    pub fn gain(&self, sigma: &Matrix6<f64>) -> Result<Matrix6x8> {
        let s = self.c * sigma * self.c.transpose() + self.psi;
        let s_inv = match s.cholesky() {
            Some(ch) => ch.inverse(),
            None => s
                .try_inverse()
                .ok_or(Error::Singular("innovation covariance"))?,
        };
        if s_inv.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular("innovation covariance"));
        }
        Ok(sigma * self.c.transpose() * s_inv)
    }
}

/// Filter quantities around one step: the prediction `x̂`/`Σ̂`, the most
/// recent correction `x̄`/`Σ̄` and the gain used for it.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub xhat: Vector6<f64>,
    pub sigma: Matrix6<f64>,
    pub xbar: Vector6<f64>,
    pub sigmabar: Matrix6<f64>,
    pub h: Matrix6x8,
}

impl FilterState {
    pub fn state(&self) -> TrackState {
        TrackState::from_vector(&self.xhat)
    }

    pub fn corrected(&self) -> TrackState {
        TrackState::from_vector(&self.xbar)
    }
}

pub fn kf_init(
    first_vision: &Vector4<f64>,
    first_radar: &Vector4<f64>,
    sigma0: &Matrix6<f64>,
) -> Result<FilterState> {
    if first_vision
        .iter()
        .chain(first_radar.iter())
        .any(|x| !x.is_finite())
    {
        return Err(Error::NonFinite("initial vision/radar measurement"));
    }
    let m = (first_vision + first_radar) * 0.5;
    let x = Vector6::new(m[0], m[1], 0.0, m[2], m[3], 0.0);
    Ok(FilterState {
        xhat: x,
        sigma: *sigma0,
        xbar: x,
        sigmabar: *sigma0,
        h: Matrix6x8::zeros(),
    })
}

/// Initialise from a complete measurement frame.
pub fn kf_init_frame(y: &MeasurementFrame, sigma0: &Matrix6<f64>) -> Result<FilterState> {
    kf_init(&y.vision(), &y.radar(), sigma0)
}

pub fn kf_correct(model: &KfModel, fs: &FilterState, y: &MeasurementFrame) -> Result<FilterState> {
    if !y.is_complete() {
        return Err(Error::NonFinite("measurement frame"));
    }
    let h = model.gain(&fs.sigma)?;
    let i_hc = Matrix6::identity() - h * model.c;
    Ok(FilterState {
        xhat: fs.xhat,
        sigma: fs.sigma,
        xbar: i_hc * fs.xhat + h * y.to_vector(),
        sigmabar: i_hc * fs.sigma,
        h,
    })
}

pub fn kf_predict(model: &KfModel, fs: &FilterState) -> FilterState {
    let sigma = model.a * fs.sigmabar * model.a.transpose() + model.omega;
    FilterState {
        xhat: model.a * fs.xbar,
        // Keep the covariance exactly symmetric so the sequence stays PSD.
        sigma: (sigma + sigma.transpose()) * 0.5,
        xbar: fs.xbar,
        sigmabar: fs.sigmabar,
        h: fs.h,
    }
}

/// Prior covariance `Σ̂_t` and gain `H_t` for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceStep {
    pub sigma: Matrix6<f64>,
    pub gain: Matrix6x8,
}

/// Covariances and gains for steps `1..=steps`; entry `k` holds step `k+1`.
/// The gain of step `t` corrects the measurement of step `t+1`.
pub fn precompute_covariances(
    model: &KfModel,
    sigma0: &Matrix6<f64>,
    steps: usize,
) -> Result<Vec<CovarianceStep>> {
    if steps == 0 {
        return Err(Error::invalid("need at least one step"));
    }
    let mut out = Vec::with_capacity(steps);
    let mut sigma = *sigma0;
    for k in 0..steps {
        let gain = model.gain(&sigma).map_err(|e| e.at_step(k + 1))?;
        out.push(CovarianceStep { sigma, gain });
        if k + 1 < steps {
            let sigmabar = (Matrix6::identity() - gain * model.c) * sigma;
            let s = model.a * sigmabar * model.a.transpose() + model.omega;
            sigma = (s + s.transpose()) * 0.5;
        }
    }
    Ok(out)
}

/// Apply correction and prediction for each frame in `trace`, starting from
/// `init`. Output `k` is the state after consuming `trace[k]`.
pub fn run_filter(
    model: &KfModel,
    init: &FilterState,
    trace: &[MeasurementFrame],
) -> Result<Vec<FilterState>> {
    let mut out = Vec::with_capacity(trace.len());
    let mut fs = init.clone();
    for (k, y) in trace.iter().enumerate() {
        fs = kf_predict(model, &kf_correct(model, &fs, y).map_err(|e| e.at_step(k + 1))?);
        out.push(fs.clone());
    }
    Ok(out)
}

/// Filter a whole trace: entry `t-1` is the state at step `t`, the first one
/// being the averaging initialisation.
pub fn track_trace(
    model: &KfModel,
    sigma0: &Matrix6<f64>,
    trace: &[MeasurementFrame],
) -> Result<Vec<FilterState>> {
    let first = trace
        .first()
        .ok_or_else(|| Error::invalid("empty trace"))?;
    let init = kf_init_frame(first, sigma0).map_err(|e| e.at_step(1))?;
    let mut out = Vec::with_capacity(trace.len());
    out.push(init.clone());
    let rest = run_filter(model, &init, &trace[1..]).map_err(|e| match e {
        Error::AtStep { step, source } => Error::AtStep {
            step: step + 1,
            source,
        },
        other => other,
    })?;
    out.extend(rest);
    Ok(out)
}
