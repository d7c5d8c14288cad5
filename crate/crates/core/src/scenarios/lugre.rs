//! Steady-state LuGre tyre–road friction, optimal slip search and the
//! distance-indexed road profile.

use crate::error::{Error, Result};
use crate::math::sign;

/// Wheel and tyre constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LugreParams {
    /// Normalized rubber longitudinal stiffness.
    pub sigma0: f64,
    /// Contact patch length (m).
    pub l_patch: f64,
    pub mu_c: f64,
    pub mu_s: f64,
    /// Stribeck velocity (m/s).
    pub vs: f64,
    /// Wheel radius (m).
    pub r: f64,
    /// Mass (kg).
    pub m: f64,
    /// Wheel inertia (kg·m²).
    pub j: f64,
    /// Normal load (N).
    pub fn_load: f64,
    /// Slip-tracking gain of the braking controller.
    pub ks: f64,
}

impl Default for LugreParams {
    fn default() -> Self {
        Self { sigma0: 200.0, l_patch: 0.25, mu_c: 0.5, mu_s: 0.9, vs: 12.5, r: 0.3, m: 200.0, j: 0.23, fn_load: 3000.0, ks: 30.0 }
    }
}

impl LugreParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma0, self.l_patch, self.mu_c, self.mu_s, self.vs, self.r, self.m, self.j, self.fn_load, self.ks];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("LuGre parameters must be positive".into()));
        }
        if self.mu_s <= self.mu_c {
            return Err(Error::InvalidArgument("static friction must exceed Coulomb friction".into()));
        }
        Ok(())
    }

    /// Friction level `g(x2, x3, θ)` including the Stribeck decay.
    pub fn friction_level(&self, x2: f64, x3: f64, theta: f64) -> f64 {
        let stribeck = (-(self.r * x2 * x3).abs() / ((1.0 - x3).abs() * self.vs)).exp();
        theta * (self.mu_c + (self.mu_s - self.mu_c) * stribeck)
    }

    /// `((1 - x3)/m + r²/J)`: slip sensitivity to the friction force.
    pub fn slip_gain(&self, x3: f64) -> f64 {
        (1.0 - x3) / self.m + self.r * self.r / self.j
    }

    fn force_unchecked(&self, x2: f64, x3: f64, theta: f64) -> f64 {
        let g = self.friction_level(x2, x3, theta);
        let stiff = self.sigma0 / self.l_patch * x3 / (1.0 - x3);
        if stiff == 0.0 {
            return 0.0;
        }
        self.fn_load * sign(x2) * stiff * g / (stiff + g)
    }
}

/// Steady-state tyre force `Fs(Fn, x, θ)` (N).
///
/// Zero slip is accepted and gives zero force; slip at or above one is rejected.
pub fn lugre_friction(p: &LugreParams, x2: f64, x3: f64, theta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x3) {
        return Err(Error::SlipOutOfRange(x3));
    }
    Ok(p.force_unchecked(x2, x3, theta))
}

pub const SLIP_GRID_MIN: f64 = 0.01;
pub const SLIP_GRID_MAX: f64 = 0.6;
pub const SLIP_GRID_STEP: f64 = 1e-3;

fn slip_grid_len() -> usize {
    ((SLIP_GRID_MAX - SLIP_GRID_MIN) / SLIP_GRID_STEP).round() as usize + 1
}

pub fn slip_grid_point(k: usize) -> f64 {
    SLIP_GRID_MIN + k as f64 * SLIP_GRID_STEP
}

/// Grid index of the force-maximizing slip; ties go to the smallest slip.
pub fn optimal_slip_index(p: &LugreParams, theta: f64, x2: f64) -> usize {
    let mut best = 0;
    let mut best_force = f64::NEG_INFINITY;
    for k in 0..slip_grid_len() {
        let f = p.force_unchecked(x2, slip_grid_point(k), theta);
        if f > best_force {
            best_force = f;
            best = k;
        }
    }
    best
}

/// Slip maximizing the friction force on the `[0.01, 0.6]` grid at resolution `1e-3`.
pub fn optimal_slip(p: &LugreParams, theta: f64, x2: f64) -> f64 {
    slip_grid_point(optimal_slip_index(p, theta, x2))
}

/// Piecewise-constant road condition indexed by travelled distance.
///
/// Segment `k` covers `(b[k-1], b[k]]`; the first segment is closed at its left end.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl Default for RoadProfile {
    fn default() -> Self {
        Self { breakpoints: vec![8.0, 16.0, 24.0, 32.0, 40.0], values: vec![0.3, 1.3, 0.7, 0.4, 1.5, 0.6] }
    }
}

impl RoadProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidArgument("road profile needs one more value than breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("road breakpoints must increase".into()));
        }
        Ok(Self { breakpoints, values })
    }

    /// Uniform surface.
    pub fn constant(theta: f64) -> Self {
        Self { breakpoints: Vec::new(), values: vec![theta] }
    }

    pub fn segment(&self, s: f64) -> usize {
        self.breakpoints.partition_point(|&b| b < s)
    }

    pub fn theta(&self, s: f64) -> f64 {
        self.values[self.segment(s)]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
