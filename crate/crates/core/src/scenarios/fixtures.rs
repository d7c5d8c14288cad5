//! Parametrization fixtures for monotonicity checks: stiction, tyre-road friction
//! and the two Monod growth nonlinearities, plus a sign-flipped stiction negative control.

use std::sync::Arc;

use nalgebra::DVector;

use super::lugre::{lugre_friction, LugreParams};
use crate::adapt::Parametrization;
use crate::error::Result;
use crate::math::linspace;
use crate::verify::{self, GrowthBounds, MonotonicityReport};

/// A parametrization with the sample grids it is checked on.
pub struct Fixture {
    pub name: &'static str,
    pub parm: Parametrization,
    pub x_grid: Vec<DVector<f64>>,
    pub theta_pairs: Vec<(DVector<f64>, DVector<f64>)>,
}

impl Fixture {
    pub fn monotonicity(&self) -> MonotonicityReport {
        verify::check_monotonicity(&self.parm, &self.x_grid, &self.theta_pairs, 0.0)
    }

    pub fn growth(&self) -> Result<GrowthBounds> {
        verify::estimate_growth_bounds(&self.parm, &self.x_grid, &self.theta_pairs, 0.0)
    }
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn pairs_on_box(lo: &[f64], hi: &[f64], n: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
    verify::ordered_pairs(&verify::box_grid(lo, hi, n))
}

/// Stiction bounds on `θ0`, `θ1`.
pub const STICTION_THETA: (f64, f64) = (0.05, 2.0);
/// Velocity range sampled for stiction.
pub const STICTION_X2: f64 = 3.0;

/// `θ0·e^{−x2²θ1} = exp(αᵀθ')` with `θ' = (θ1, ln θ0)` and `α = (−x2², 1)`.
///
/// The fixture works in the coordinates `θ'`; the grid is laid out over `(θ0, θ1)`
/// and mapped through the logarithm.
fn stiction_with_sign(n: usize, sign: f64, name: &'static str) -> Result<Fixture> {
    let (lo, hi) = STICTION_THETA;
    let parm = Parametrization::new(
        2,
        1,
        Arc::new(|x: &DVector<f64>, th: &DVector<f64>, _| (-x[1] * x[1] * th[0] + th[1]).exp()),
        Arc::new(move |x: &DVector<f64>, _| dv(&[-x[1] * x[1], 1.0]) * sign),
        1.0,
        1.0,
    )?;
    let x_grid = linspace(-STICTION_X2, STICTION_X2, n).into_iter().map(|v| dv(&[0.0, v])).collect();
    let points: Vec<DVector<f64>> = verify::box_grid(&[lo, lo], &[hi, hi], n).into_iter().map(|th| dv(&[th[1], th[0].ln()])).collect();
    Ok(Fixture { name, parm, x_grid, theta_pairs: verify::ordered_pairs(&points) })
}

pub fn stiction(n: usize) -> Result<Fixture> {
    stiction_with_sign(n, 1.0, "stiction")
}

/// Stiction with `α` negated; must produce violations.
pub fn stiction_flipped(n: usize) -> Result<Fixture> {
    stiction_with_sign(n, -1.0, "stiction-flipped")
}

/// Tyre-road parameter range.
pub const TYRE_THETA: (f64, f64) = (0.3, 1.5);
/// Wheel angular velocity range (rad/s).
pub const TYRE_X2: (f64, f64) = (20.0, 120.0);
/// Slip range.
pub const TYRE_X3: (f64, f64) = (0.01, 0.9);

/// LuGre steady-state force `Fs(x, θ)` with `α = x3/(1 − x3)`.
pub fn tyre_road(n: usize) -> Result<Fixture> {
    let p = LugreParams::default();
    let pf = p;
    let parm = Parametrization::new(
        1,
        1,
        Arc::new(move |x: &DVector<f64>, th: &DVector<f64>, _| lugre_friction(&pf, x[1], x[2], th[0]).unwrap_or(f64::NAN)),
        Arc::new(|x: &DVector<f64>, _| dv(&[x[2] / (1.0 - x[2])])),
        1.0,
        1.0,
    )?;
    let x_grid = verify::product(&[vec![30.0], linspace(TYRE_X2.0, TYRE_X2.1, n), linspace(TYRE_X3.0, TYRE_X3.1, n)]);
    Ok(Fixture { name: "tyre-road", parm, x_grid, theta_pairs: pairs_on_box(&[TYRE_THETA.0], &[TYRE_THETA.1], n) })
}

/// Monod parameter range for `θ0`, `θ1`.
pub const MONOD_THETA: (f64, f64) = (0.1, 2.0);
/// Concentration range for `x1`, `x2`.
pub const MONOD_X: (f64, f64) = (0.1, 5.0);

/// `x1x2/(θ0 + θ1·xk)` with `α = −x1x2(1, xk)`; `k` is 0 or 1.
///
/// The function decreases in θ along `(1, xk)`, so α carries a minus sign.
fn monod(n: usize, k: usize, name: &'static str) -> Result<Fixture> {
    let parm = Parametrization::new(
        2,
        1,
        Arc::new(move |x: &DVector<f64>, th: &DVector<f64>, _| x[0] * x[1] / (th[0] + th[1] * x[k])),
        Arc::new(move |x: &DVector<f64>, _| dv(&[1.0, x[k]]) * (-x[0] * x[1])),
        1.0,
        1.0,
    )?;
    let (lo, hi) = MONOD_X;
    let x_grid = verify::box_grid(&[lo, lo], &[hi, hi], n);
    let (tl, th) = MONOD_THETA;
    Ok(Fixture { name, parm, x_grid, theta_pairs: pairs_on_box(&[tl, tl], &[th, th], n) })
}

pub fn monod_first(n: usize) -> Result<Fixture> {
    monod(n, 0, "monod-x1")
}

pub fn monod_second(n: usize) -> Result<Fixture> {
    monod(n, 1, "monod-x2")
}

/// The four fixtures expected to pass.
pub fn all(n: usize) -> Result<Vec<Fixture>> {
    Ok(vec![stiction(n)?, tyre_road(n)?, monod_first(n)?, monod_second(n)?])
}
