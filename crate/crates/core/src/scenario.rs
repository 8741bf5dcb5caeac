//! Synthetic measurement traces, radar conversion and vision-channel
//! preprocessing.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleTrack;
use crate::error::{Error, Result};
use crate::model::MeasurementFrame;
use crate::DEFAULT_DT;

/// Which crash oracle decides the outcome of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioFamily {
    /// Slower lead vehicle; suppressing red lights delays braking.
    Forward,
    /// Faster lead vehicle with a close follower; forced red lights cause
    /// braking that the follower runs into.
    Rear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub name: String,
    pub family: ScenarioFamily,
    pub ego_speed: f64,
    pub mio_speed: f64,
    pub trailing_speed: f64,
    pub initial_gap: f64,
    pub trailing_gap: f64,
    pub steps: usize,
    pub dt: f64,
    /// Vision noise std for distance (m) and velocity (m/s) slots.
    pub vision_std: f64,
    pub radar_std: f64,
    /// Probability that a frame has no vision detection at all.
    pub dropout: f64,
    /// Probability that a frame carries one corrupted vision slot.
    pub outlier_rate: f64,
    /// Outlier magnitude in units of `vision_std`.
    pub outlier_scale: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::mio_minus_10()
    }
}

impl ScenarioSpec {
    /// Ego at 27 m/s closing on a lead at 17 m/s. The gap is chosen so the
    /// noiseless filter first shows red at step 98.
    pub fn mio_minus_10() -> Self {
        Self {
            name: "mio-10".into(),
            family: ScenarioFamily::Forward,
            ego_speed: 27.0,
            mio_speed: 17.0,
            trailing_speed: 27.0,
            initial_gap: 73.75,
            trailing_gap: 7.0,
            steps: 295,
            dt: DEFAULT_DT,
            vision_std: 0.5,
            radar_std: 0.2,
            dropout: 0.02,
            outlier_rate: 0.01,
            outlier_scale: 10.0,
            seed: 0,
        }
    }

    /// Ego at 27 m/s behind a lead pulling away at 28 m/s, with a follower
    /// 7 m behind the ego.
    pub fn mio_plus_1() -> Self {
        Self {
            name: "mio+1".into(),
            family: ScenarioFamily::Rear,
            mio_speed: 28.0,
            initial_gap: 40.0,
            ..Self::mio_minus_10()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mio-10" | "mio_minus_10" | "mio-minus-10" => Some(Self::mio_minus_10()),
            "mio+1" | "mio_plus_1" | "mio-plus-1" => Some(Self::mio_plus_1()),
            _ => None,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.vision_std = 0.0;
        self.radar_std = 0.0;
        self.dropout = 0.0;
        self.outlier_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::invalid("a scenario needs at least 2 steps"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        let nonneg = [
            self.vision_std,
            self.radar_std,
            self.outlier_scale,
            self.ego_speed,
            self.mio_speed,
            self.trailing_speed,
        ];
        if nonneg.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("speeds and noise levels must be finite and non-negative"));
        }
        for p in [self.dropout, self.outlier_rate] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("probabilities must lie in [0, 1]"));
            }
        }
        if !self.initial_gap.is_finite() || !self.trailing_gap.is_finite() {
            return Err(Error::NonFinite("scenario gaps"));
        }
        Ok(())
    }
}

/// Ground-truth vehicles at one step. Positions are along the road with the
/// ego starting at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ego: VehicleTrack,
    pub mio: VehicleTrack,
    pub trailing: VehicleTrack,
}

impl GroundTruth {
    /// Lead-vehicle distance relative to the ego.
    pub fn d1(&self) -> f64 {
        self.mio.position - self.ego.position
    }

    pub fn v1(&self) -> f64 {
        self.mio.speed - self.ego.speed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub frames: Vec<MeasurementFrame>,
    pub truth: Vec<GroundTruth>,
}

/// Generate raw detections for an unperturbed drive: every vehicle holds
/// its speed. Vision gets noise, dropouts and outliers; radar gets only
/// small noise.
pub fn synthesize_trace(spec: &ScenarioSpec) -> Result<SyntheticTrace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ego = VehicleTrack::new(0.0, spec.ego_speed);
    let mut mio = VehicleTrack::new(spec.initial_gap, spec.mio_speed);
    let mut trailing = VehicleTrack::new(-spec.trailing_gap, spec.trailing_speed);
    let mut frames = Vec::with_capacity(spec.steps);
    let mut truth = Vec::with_capacity(spec.steps);
    for _ in 0..spec.steps {
        let gt = GroundTruth { ego, mio, trailing };
        let clean = [gt.d1(), gt.v1(), 0.0, 0.0];
        // Every draw happens on every step so the stream does not depend on
        // which events fire.
        let mut vision = [0.0; 4];
        let mut radar = [0.0; 4];
        for i in 0..4 {
            let nv: f64 = rng.sample(StandardNormal);
            let nr: f64 = rng.sample(StandardNormal);
            vision[i] = clean[i] + spec.vision_std * nv;
            radar[i] = clean[i] + spec.radar_std * nr;
        }
        let drop = rng.random::<f64>() < spec.dropout;
        let outlier = rng.random::<f64>() < spec.outlier_rate;
        let slot = rng.random_range(0..4usize);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        if outlier {
            vision[slot] += sign * spec.outlier_scale * spec.vision_std;
        }
        if drop {
            vision = [f64::NAN; 4];
        }
        frames.push(MeasurementFrame::new(vision, radar));
        truth.push(gt);
        ego = ego.advance(spec.dt);
        mio = mio.advance(spec.dt);
        trailing = trailing.advance(spec.dt);
    }
    Ok(SyntheticTrace { frames, truth })
}

/// Raw radar return in spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarReturn {
    pub altitude: f64,
    pub azimuth: f64,
    pub depth: f64,
    pub velocity: f64,
}

/// Project a radar return onto the driving and lateral axes: `(d1, v1, d2, v2)`.
pub fn radar_to_detection(r: &RadarReturn) -> [f64; 4] {
    let ca = libm::cos(r.altitude);
    let lon = libm::cos(r.azimuth) * ca;
    let lat = libm::sin(r.azimuth) * ca;
    [r.depth * lon, r.velocity * lon, r.depth * lat, r.velocity * lat]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessParams {
    /// Moving-median window length in samples.
    pub window: usize,
    /// A sample is an outlier when it is further than this many scaled MADs
    /// from the window median.
    pub threshold: f64,
    /// Deviations up to this size are never outliers. Without a floor the
    /// passes can keep trading sub-noise wiggles between neighbours forever.
    pub floor: f64,
    /// Outlier passes always run at least this many times...
    pub min_passes: usize,
    /// ...and stop at a fixed point or after this many.
    pub max_passes: usize,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            window: 5,
            threshold: 0.5,
            floor: 0.05,
            min_passes: 2,
            max_passes: 10_000,
        }
    }
}

/// Scale turning a MAD into a normal-consistent standard deviation.
const MAD_SCALE: f64 = 1.482_602_218_505_602;

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

/// Indices of the window centred at `i`, shrunk at the ends.
fn window_bounds(i: usize, len: usize, window: usize) -> (usize, usize) {
    let before = (window - 1) / 2;
    let after = window / 2;
    (i.saturating_sub(before), (i + after + 1).min(len))
}

/// Samples whose distance from the moving median exceeds the threshold.
fn flag_outliers(x: &[f64], p: &PreprocessParams) -> Vec<bool> {
    let mut flags = vec![false; x.len()];
    let mut buf = Vec::with_capacity(p.window);
    for i in 0..x.len() {
        if !x[i].is_finite() {
            continue;
        }
        let (lo, hi) = window_bounds(i, x.len(), p.window);
        buf.clear();
        buf.extend(x[lo..hi].iter().copied().filter(|v| v.is_finite()));
        // A median of one or two samples cannot single anything out.
        if buf.len() < 3 {
            continue;
        }
        let m = median(&mut buf);
        for v in buf.iter_mut() {
            *v = (*v - m).abs();
        }
        let mad = median(&mut buf);
        flags[i] = (x[i] - m).abs() > (p.threshold * MAD_SCALE * mad).max(p.floor);
    }
    flags
}

/// Replace flagged samples by the line through their nearest good
/// neighbours, extrapolating linearly at the ends.
fn fill_linear(x: &[f64], bad: &[bool]) -> Vec<f64> {
    let good: Vec<usize> = (0..x.len()).filter(|&i| !bad[i] && x[i].is_finite()).collect();
    let mut out = x.to_vec();
    // A line needs two anchors; with fewer, nothing is replaced.
    if good.len() < 2 {
        return out;
    }
    let line = |a: usize, b: usize, i: usize| {
        let (xa, xb) = (x[a], x[b]);
        xa + (xb - xa) * (i as f64 - a as f64) / (b as f64 - a as f64)
    };
    let mut k = 0;
    for i in 0..x.len() {
        if !bad[i] {
            continue;
        }
        while k + 1 < good.len() && good[k + 1] < i {
            k += 1;
        }
        let (a, b) = if i < good[0] {
            (good[0], good[1])
        } else if i > good[good.len() - 1] {
            (good[good.len() - 2], good[good.len() - 1])
        } else {
            (good[k], good[k + 1])
        };
        out[i] = line(a, b, i);
    }
    out
}

/// Repeat outlier replacement until nothing moves.
fn remove_outliers(x: &mut Vec<f64>, p: &PreprocessParams) {
    for pass in 0..p.max_passes.max(p.min_passes) {
        let flags = flag_outliers(x, p);
        let next = fill_linear(x, &flags);
        let changed = next
            .iter()
            .zip(x.iter())
            .any(|(a, b)| a.is_finite() && a != b);
        *x = next;
        if pass + 1 >= p.min_passes && !changed {
            break;
        }
    }
}

/// Fill missing samples by linear interpolation; the ends repeat the
/// nearest finite value.
fn impute(x: &mut [f64]) {
    let good: Vec<usize> = (0..x.len()).filter(|&i| x[i].is_finite()).collect();
    if good.is_empty() {
        return;
    }
    let (first, last) = (good[0], good[good.len() - 1]);
    for i in 0..first {
        x[i] = x[first];
    }
    for i in last + 1..x.len() {
        x[i] = x[last];
    }
    for w in good.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            x[i] = x[a] + (x[b] - x[a]) * (i - a) as f64 / (b - a) as f64;
        }
    }
}

/// Clean one vision column: outlier passes, imputation, then outlier passes
/// again on the completed column so the output is its own fixed point.
pub fn preprocess_column(col: &[f64], p: &PreprocessParams) -> Vec<f64> {
    let mut x = col.to_vec();
    remove_outliers(&mut x, p);
    impute(&mut x);
    remove_outliers(&mut x, p);
    x
}

pub fn preprocess(raw: &[MeasurementFrame]) -> Result<Vec<MeasurementFrame>> {
    preprocess_with(raw, &PreprocessParams::default())
}

pub fn preprocess_with(raw: &[MeasurementFrame], p: &PreprocessParams) -> Result<Vec<MeasurementFrame>> {
    if p.window == 0 || !(p.threshold >= 0.0) || !(p.floor >= 0.0) {
        return Err(Error::invalid("window must be positive, threshold and floor non-negative"));
    }
    let mut out = raw.to_vec();
    for col in 0..8 {
        let x: Vec<f64> = raw.iter().map(|f| f.0[col]).collect();
        if !x.iter().any(|v| v.is_finite()) {
            return Err(Error::EmptyColumn(col));
        }
        let y = if col < 4 {
            preprocess_column(&x, p)
        } else {
            // Radar is trusted; only fill gaps should any appear.
            let mut y = x;
            impute(&mut y);
            y
        };
        for (f, v) in out.iter_mut().zip(y) {
            f.0[col] = v;
        }
    }
    Ok(out)
}
