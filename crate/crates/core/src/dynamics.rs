//! Ground-truth longitudinal kinematics and the two crash oracles.
//!
//! Vehicles are point masses on a line. Braking is a constant 0.4 g
//! deceleration and a stopped vehicle stays stopped.

use serde::{Deserialize, Serialize};

use crate::{BRAKE_DECEL, G};

/// Gaps this close to zero count as grazing contact, not a collision.
const GRAZE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
}

impl VehicleTrack {
    pub fn new(position: f64, speed: f64) -> Self {
        Self {
            position,
            speed,
            accel: 0.0,
        }
    }

    /// State after `tau` seconds under the current acceleration, stopping
    /// exactly when the speed reaches zero.
    pub fn advance(&self, tau: f64) -> VehicleTrack {
        let mut tau_move = tau;
        if self.accel < 0.0 {
            let t_stop = self.speed / -self.accel;
            if t_stop < tau {
                tau_move = t_stop;
            }
        }
        let speed = (self.speed + self.accel * tau_move).max(0.0);
        VehicleTrack {
            position: self.position + self.speed * tau_move + 0.5 * self.accel * tau_move * tau_move,
            speed,
            accel: self.accel,
        }
    }

    /// Seconds until a decelerating vehicle stops, if it does.
    fn stop_time(&self) -> Option<f64> {
        (self.accel < 0.0).then(|| self.speed / -self.accel)
    }
}

pub fn step_kinematics(v: &VehicleTrack, dt: f64) -> VehicleTrack {
    v.advance(dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    pub collided: bool,
    /// Step during which contact happens.
    pub step: Option<usize>,
    pub min_gap: f64,
    pub penetration: f64,
}

impl CrashReport {
    fn from_gap(min_gap: f64, step: Option<usize>) -> Self {
        let min_gap = if min_gap.abs() < GRAZE_TOL { 0.0 } else { min_gap };
        let collided = min_gap < 0.0;
        Self {
            collided,
            step: if collided { step } else { None },
            min_gap,
            penetration: if collided { -min_gap } else { 0.0 },
        }
    }
}

/// Smallest gap `lead - follower` over the next `dt` seconds. The gap is
/// piecewise quadratic with breaks at stop events, so its minimum lies at a
/// break, an end, or where the speeds match.
fn min_gap_over(follower: &VehicleTrack, lead: &VehicleTrack, dt: f64) -> f64 {
    let gap = |tau: f64| lead.advance(tau).position - follower.advance(tau).position;
    let mut cuts = [0.0, dt, dt, dt];
    if let Some(t) = follower.stop_time() {
        cuts[1] = t.min(dt);
    }
    if let Some(t) = lead.stop_time() {
        cuts[2] = t.min(dt);
    }
    cuts.sort_by(f64::total_cmp);
    let mut best = gap(0.0).min(gap(dt));
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        best = best.min(gap(b));
        if b <= a {
            continue;
        }
        let f = follower.advance(a);
        let l = lead.advance(a);
        let da = if f.speed > 0.0 || f.accel > 0.0 { f.accel } else { 0.0 };
        let la = if l.speed > 0.0 || l.accel > 0.0 { l.accel } else { 0.0 };
        let rel_acc = la - da;
        if rel_acc != 0.0 {
            let tm = a + (f.speed - l.speed) / rel_acc;
            if tm > a && tm < b {
                best = best.min(gap(tm));
            }
        }
    }
    best
}

/// The ego follows the lead at constant speed and brakes at 0.4 g from step
/// `brake_onset` (1-based; `None` for never). Both tracks describe step 1.
pub fn forward_crash_oracle(
    ego: &VehicleTrack,
    mio: &VehicleTrack,
    brake_onset: Option<usize>,
    dt: f64,
) -> CrashReport {
    // Long enough to stop from any plausible speed several times over.
    const MAX_STEPS: usize = 1_000_000;
    let mut e = VehicleTrack { accel: 0.0, ..*ego };
    let mut m = *mio;
    let mut min_gap = m.position - e.position;
    let mut crash_step = (min_gap < -GRAZE_TOL).then_some(1);
    for t in 1..=MAX_STEPS {
        if brake_onset.is_some_and(|b| t >= b) {
            e.accel = -BRAKE_DECEL;
        }
        let g = min_gap_over(&e, &m, dt);
        if g < min_gap {
            min_gap = g;
        }
        if crash_step.is_none() && g < -GRAZE_TOL {
            crash_step = Some(t);
        }
        e = e.advance(dt);
        m = m.advance(dt);
        // Once the ego is braking and no faster than the lead, which does not
        // decelerate harder, the gap can only grow.
        let braking = e.accel < 0.0;
        if braking && e.speed <= m.speed && m.accel >= e.accel.min(0.0) {
            break;
        }
        if brake_onset.is_none() && (crash_step.is_some() || (e.speed <= m.speed && m.accel >= 0.0)) {
            break;
        }
    }
    CrashReport::from_gap(min_gap, crash_step)
}

/// Gap to a distracted trailing vehicle that holds its speed while the ego
/// brakes at 0.4 g for `brake_duration` seconds. The closure is 0.2 g·t².
/// A reported step counts from brake onset, starting at 1.
pub fn rear_crash_oracle(trailing_gap: f64, brake_duration: f64, dt: f64) -> CrashReport {
    let duration = brake_duration.max(0.0);
    let closure = 0.5 * BRAKE_DECEL * duration * duration;
    let min_gap = trailing_gap - closure;
    let step = if dt > 0.0 && trailing_gap >= 0.0 {
        let t_contact = libm::sqrt(trailing_gap / (0.5 * BRAKE_DECEL));
        Some(libm::floor(t_contact / dt) as usize + 1)
    } else {
        None
    };
    CrashReport::from_gap(min_gap, step)
}

/// Distance covered while braking from `speed` to rest.
pub fn stopping_distance(speed: f64) -> f64 {
    speed * speed / (0.8 * G)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alert::safe_distance;

    #[test]
    fn uniform_motion() {
        let v = step_kinematics(&VehicleTrack::new(0.0, 27.0), 0.05);
        assert!((v.position - 1.35).abs() < 1e-12);
        assert_eq!(v.speed, 27.0);
    }

    #[test]
    fn stops_exactly() {
        let mut v = VehicleTrack {
            position: 0.0,
            speed: 10.0,
            accel: -BRAKE_DECEL,
        };
        for _ in 0..200 {
            v = step_kinematics(&v, 0.05);
        }
        assert!((v.position - 100.0 / (0.8 * G)).abs() < 1e-9);
        assert!((v.position - 12.755).abs() < 1e-3);
        assert_eq!(v.speed, 0.0);
        let still = step_kinematics(&VehicleTrack { position: 1.0, speed: 0.0, accel: -BRAKE_DECEL }, 0.05);
        assert_eq!(still.speed, 0.0);
        assert_eq!(still.position, 1.0);
    }

    fn run(gap: f64) -> CrashReport {
        forward_crash_oracle(&VehicleTrack::new(0.0, 27.0), &VehicleTrack::new(gap, 17.0), Some(1), 0.05)
    }

    #[test]
    fn forward_examples() {
        let r = run(14.57);
        assert!(!r.collided);
        assert!((r.min_gap - (14.57 - stopping_distance(10.0))).abs() < 1e-9);
        let r = run(9.58);
        assert!(r.collided);
        assert!(r.penetration > 3.0);
        let r = run(stopping_distance(10.0));
        assert!(!r.collided);
        assert_eq!(r.min_gap, 0.0);
    }

    #[test]
    fn forward_marginal_at_safe_distance() {
        for v in [-3.0, -7.5, -10.0, -15.0] {
            let gap = safe_distance(v);
            let r = forward_crash_oracle(
                &VehicleTrack::new(0.0, 27.0),
                &VehicleTrack::new(gap, 27.0 + v),
                Some(25),
                0.05,
            );
            assert!(r.min_gap >= 0.0, "{v}: {r:?}");
            assert!(r.min_gap < 1e-6);
        }
    }

    #[test]
    fn never_braking_crashes() {
        let r = forward_crash_oracle(&VehicleTrack::new(0.0, 27.0), &VehicleTrack::new(50.0, 17.0), None, 0.05);
        assert!(r.collided);
        assert_eq!(r.step, Some(101));
    }

    #[test]
    fn ego_stops_before_stationary_lead() {
        let r = forward_crash_oracle(&VehicleTrack::new(0.0, 10.0), &VehicleTrack::new(20.0, 0.0), Some(1), 0.05);
        assert!((r.min_gap - (20.0 - stopping_distance(10.0))).abs() < 1e-9);
    }

    #[test]
    fn rear_examples() {
        let r = rear_crash_oracle(7.0, 2.0, 0.05);
        assert!(r.collided);
        assert!((7.0 - r.min_gap - 7.84).abs() < 1e-12);
        assert!(!rear_crash_oracle(7.0, 1.0, 0.05).collided);
        assert!((7.0 - rear_crash_oracle(7.0, 1.0, 0.05).min_gap - 1.96).abs() < 1e-12);
        assert!(!rear_crash_oracle(7.0, 0.0, 0.05).collided);
    }

    #[test]
    fn rear_step_counts_from_onset() {
        // 0.2g t² = 7 at t ≈ 1.8898 s, i.e. during the 38th step.
        assert_eq!(rear_crash_oracle(7.0, 2.0, 0.05).step, Some(38));
    }
}
