//! Warning-light logic and the driver who reacts to it.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::TrackState;
use crate::G;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WarningLight {
    #[serde(rename = "G")]
    Green,
    #[serde(rename = "Y")]
    Yellow,
    #[serde(rename = "R")]
    Red,
}

impl WarningLight {
    pub fn code(self) -> char {
        match self {
            WarningLight::Green => 'G',
            WarningLight::Yellow => 'Y',
            WarningLight::Red => 'R',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'G' => Some(WarningLight::Green),
            'Y' => Some(WarningLight::Yellow),
            'R' => Some(WarningLight::Red),
            _ => None,
        }
    }
}

impl fmt::Display for WarningLight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Gap below which an approaching lead vehicle triggers red: 1.2 s of
/// reaction distance plus the braking distance at 0.4 g.
pub fn safe_distance(v1: f64) -> f64 {
    -1.2 * v1 + v1 * v1 / (0.8 * G)
}

pub fn classify_dv(d1: f64, v1: f64) -> WarningLight {
    if v1 >= 0.0 {
        WarningLight::Green
    } else if d1 > safe_distance(v1) {
        WarningLight::Yellow
    } else {
        WarningLight::Red
    }
}

pub fn classify(x: &TrackState) -> WarningLight {
    classify_dv(x.d1, x.v1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverState {
    pub braking: bool,
    pub s: i32,
    pub h_star: u32,
}

impl DriverState {
    pub fn new(h_star: u32) -> Self {
        Self {
            braking: false,
            s: 0,
            h_star: h_star.max(1),
        }
    }
}

/// One update of the reaction automaton. The counter restarts whenever the
/// light changes; `prev_light = None` marks the first step, which never
/// restarts it. Yellow and green are treated alike.
pub fn driver_step(
    ds: DriverState,
    light: WarningLight,
    prev_light: Option<WarningLight>,
) -> DriverState {
    let h = ds.h_star as i32;
    let mut s = ds.s;
    if prev_light.is_some_and(|p| p != light) {
        s = 0;
    }
    if light == WarningLight::Red {
        s += 1;
    } else {
        s -= 1;
    }
    let mut braking = ds.braking;
    if s >= h {
        braking = true;
    } else if s <= -h {
        braking = false;
    }
    DriverState {
        braking,
        s: s.clamp(-h, h),
        h_star: ds.h_star,
    }
}

/// Braking flag at every step. The flag at step `t` is the driver's state
/// after seeing the lights of steps `1..t`, so it takes effect from `t+1`.
pub fn driver_updates(lights: &[WarningLight], h_star: u32) -> Vec<bool> {
    let mut ds = DriverState::new(h_star);
    let mut prev = None;
    lights
        .iter()
        .map(|&l| {
            ds = driver_step(ds, l, prev);
            prev = Some(l);
            ds.braking
        })
        .collect()
}

/// Whether the driver is braking during each step. The reaction to the
/// lights up to step `t` acts from step `t + 1`, so the result is
/// `driver_updates` shifted by one with a non-braking first step.
pub fn simulate_driver(lights: &[WarningLight], h_star: u32) -> Vec<bool> {
    let updates = driver_updates(lights, h_star);
    let mut out = Vec::with_capacity(lights.len());
    if !lights.is_empty() {
        out.push(false);
        out.extend_from_slice(&updates[..lights.len() - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use WarningLight::*;

    fn first_true(v: &[bool]) -> Option<usize> {
        v.iter().position(|&b| b).map(|i| i + 1)
    }

    #[test]
    fn safe_distance_values() {
        assert!((safe_distance(-10.0) - 24.755_102).abs() < 1e-6);
        assert!((safe_distance(-1.0) - 1.327_551).abs() < 1e-6);
        assert!(safe_distance(-1e-12).abs() < 1e-10);
    }

    #[test]
    fn classify_regions() {
        assert_eq!(classify_dv(5.0, 1.0), Green);
        assert_eq!(classify_dv(5.0, 0.0), Green);
        assert_eq!(classify_dv(20.0, -10.0), Red);
        assert_eq!(classify_dv(30.0, -10.0), Yellow);
        assert_eq!(classify_dv(safe_distance(-10.0), -10.0), Red);
    }

    #[test]
    fn driver_reds_from_98_brake_at_122() {
        let mut lights = vec![Green; 200];
        for l in lights.iter_mut().skip(97) {
            *l = Red;
        }
        let b = simulate_driver(&lights, 24);
        assert_eq!(first_true(&b), Some(122));
    }

    #[test]
    fn driver_red_window_brake_and_release() {
        let mut lights = vec![Yellow; 250];
        for l in &mut lights[99..139] {
            *l = Red;
        }
        for l in &mut lights[139..] {
            *l = Green;
        }
        let b = simulate_driver(&lights, 24);
        for (i, &x) in b.iter().enumerate() {
            let t = i + 1;
            assert_eq!(x, (124..=163).contains(&t), "step {t}");
        }
    }

    #[test]
    fn all_red_brakes_from_24() {
        let b = simulate_driver(&[Red; 40], 24);
        // The counter starts accumulating at step 1 without a reset, so the
        // 24th red arms the brake and the driver brakes from step 25 on.
        assert_eq!(first_true(&driver_updates(&[Red; 40], 24)), Some(24));
        assert_eq!(first_true(&b), Some(25));
        assert!(b[24..].iter().all(|&x| x));
    }

    #[test]
    fn alternating_never_brakes() {
        let lights: Vec<_> = (0..100).map(|i| if i % 2 == 0 { Red } else { Green }).collect();
        assert!(simulate_driver(&lights, 2).iter().all(|&b| !b));
    }

    #[test]
    fn reaction_of_one_step() {
        let lights = [Green, Red, Green, Green];
        let b = simulate_driver(&lights, 1);
        assert_eq!(b, vec![false, false, true, false]);
    }

    #[test]
    fn all_green_never_brakes() {
        assert!(simulate_driver(&vec![Green; 300], 24).iter().all(|&b| !b));
    }
}
