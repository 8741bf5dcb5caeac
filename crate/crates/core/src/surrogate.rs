//! Linear inner approximations of the warning-light regions.
//!
//! For an approaching lead vehicle the red/yellow boundary `d = d*(v)` can be
//! inverted to `v = U(d)`, a convex decreasing curve. Red is `v ≤ U(d)`, which
//! we tighten with the tangent of `U` at `d0`; yellow is `v > U(d)`, tightened
//! with the chord of `U` over `[0, d_max]`. The tangent is taken parallel to
//! that chord.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::alert::WarningLight;
use crate::error::{Error, Result};
use crate::G;

pub fn u_curve(d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::invalid("U(d) needs d >= 0"));
    }
    let a = 0.48 * G;
    Ok(a - libm::sqrt(a * a + 0.8 * G * d))
}

/// Tangent point of `U` whose slope equals the chord slope over `[0, d_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub d0: f64,
    pub u_d0: f64,
    pub slope: f64,
}

pub fn pick_d0(d_max: f64) -> Result<Linearization> {
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(Error::invalid("d_max must be positive and finite"));
    }
    let slope = u_curve(d_max)? / d_max;
    let a = 0.48 * G;
    let r = 0.4 * G / slope.abs();
    Ok(Linearization {
        d0: (r * r - a * a) / (0.8 * G),
        u_d0: a + 0.4 * G / slope,
        slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub epsilon: f64,
    pub d_max: f64,
    pub lin: Linearization,
}

impl SurrogateParams {
    pub fn new(epsilon: f64, d_max: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(Self {
            epsilon,
            d_max,
            lin: pick_d0(d_max)?,
        })
    }
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self::new(1e-3, 75.0).expect("valid defaults")
    }
}

/// Slack family attached to a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlackFamily {
    /// Sign of the relative velocity.
    Xi,
    /// Couples distance and velocity.
    Zeta,
}

/// `coef_d·d + coef_v·v ≤ bound (+ slack)` on the driving-direction state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coef_d: f64,
    pub coef_v: f64,
    pub bound: f64,
    pub slack: Option<SlackFamily>,
}

impl LinearConstraint {
    fn new(coef_d: f64, coef_v: f64, bound: f64) -> Self {
        Self {
            coef_d,
            coef_v,
            bound,
            slack: None,
        }
    }

    /// Family a slack for this constraint belongs to.
    pub fn family(&self) -> SlackFamily {
        if self.coef_d == 0.0 {
            SlackFamily::Xi
        } else {
            SlackFamily::Zeta
        }
    }

    /// Amount by which `(d, v)` exceeds the bound; zero when satisfied.
    pub fn violation(&self, d: f64, v: f64) -> f64 {
        (self.coef_d * d + self.coef_v * v - self.bound).max(0.0)
    }

    pub fn satisfied(&self, d: f64, v: f64, slack: f64) -> bool {
        self.coef_d * d + self.coef_v * v <= self.bound + slack
    }
}

/// Constraints on `(d, v)` whose joint satisfaction guarantees `light`.
pub fn surrogate_for(light: WarningLight, p: &SurrogateParams) -> Vec<LinearConstraint> {
    let eps = p.epsilon;
    let Linearization { d0, u_d0, slope } = p.lin;
    match light {
        WarningLight::Green => vec![LinearConstraint::new(0.0, -1.0, -eps)],
        WarningLight::Red => vec![
            LinearConstraint::new(0.0, 1.0, -eps),
            LinearConstraint::new(-slope, 1.0, -slope * d0 + u_d0 - eps),
        ],
        WarningLight::Yellow => vec![
            LinearConstraint::new(0.0, 1.0, -eps),
            LinearConstraint::new(slope, -1.0, -eps),
        ],
    }
}

/// Attach a slack to every constraint, by family.
pub fn slacken(cs: &[LinearConstraint]) -> Vec<LinearConstraint> {
    cs.iter()
        .map(|c| LinearConstraint {
            slack: Some(c.family()),
            ..*c
        })
        .collect()
}

/// Smallest slacks `(ξ, ζ)` that make `(d, v)` satisfy the surrogate of
/// `light`.
pub fn required_slacks(light: WarningLight, p: &SurrogateParams, d: f64, v: f64) -> (f64, f64) {
    let mut xi: f64 = 0.0;
    let mut zeta: f64 = 0.0;
    for c in surrogate_for(light, p) {
        let viol = c.violation(d, v);
        match c.family() {
            SlackFamily::Xi => xi = xi.max(viol),
            SlackFamily::Zeta => zeta = zeta.max(viol),
        }
    }
    (xi, zeta)
}
