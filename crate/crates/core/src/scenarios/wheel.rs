//! Single-wheel braking with on-line road-condition estimation and optimal slip tracking.
//!
//! Plant state `(x1, x2, x3)` is longitudinal velocity, wheel angular velocity and
//! slip. The loop adds the slip observer `x̂3`, the integral estimator state
//! `θ̂_I`, the travelled distance `s`, which indexes the road profile, and the
//! running integral of the squared mismatch.
//!
//! The observer error `ψ = x̂3 − x3` obeys
//! `ψ̇ = −ψ + (K(x3)/x1)·(Fs(θ) − Fs(θ̂))`, which is increasing in θ, so the
//! estimator `θ̂ = γ(ψ + θ̂_I)`, `θ̂̇_I = ψ` uses `α = 1`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::adapt::{GoalFunction, Parametrization};
use crate::error::{Error, Result};
use crate::integrate::{self, Channel, Comparator, Dynamics, Record, SimConfig, StopCondition, Trace};
use crate::math::linspace;
use crate::scenarios::lugre::{lugre_friction, optimal_slip, optimal_slip_index, LugreParams, RoadProfile};
use crate::verify::{self, GrowthBounds};

/// Velocity below which the vehicle counts as stopped (m/s).
pub const STOP_VELOCITY: f64 = 5.0;
/// Default estimator gain.
pub const DEFAULT_GAIN: f64 = 100.0;
/// Initial speed reproducing the reference adaptive braking distance (m/s).
pub const CALIBRATED_SPEED: f64 = 33.3255;
/// Default initial estimate of the road condition.
pub const DEFAULT_THETA_HAT0: f64 = 0.9;
/// RK4 sub-steps per millisecond; the estimator loop is stiff at low speed.
pub const DEFAULT_SUBSTEPS: usize = 32;

/// Plant derivatives `(ẋ1, ẋ2, ẋ3)` for brake torque `u` on road condition `θ`.
pub fn wheel_rhs(p: &LugreParams, x: [f64; 3], theta: f64, u: f64) -> Result<[f64; 3]> {
    if x[0] <= STOP_VELOCITY {
        return Err(Error::StoppedVehicle { x1: x[0], threshold: STOP_VELOCITY });
    }
    wheel_rhs_unchecked(p, x, theta, u)
}

fn wheel_rhs_unchecked(p: &LugreParams, x: [f64; 3], theta: f64, u: f64) -> Result<[f64; 3]> {
    let fs = lugre_friction(p, x[1], x[2], theta)?;
    Ok([-fs / p.m, (fs * p.r - u) / p.j, -(p.slip_gain(x[2]) * fs - p.r / p.j * u) / x[0]])
}

/// Certainty-equivalence brake torque steering slip toward `x3_star`.
pub fn brake_torque(p: &LugreParams, x: [f64; 3], theta_hat: f64, x3_star: f64) -> Result<f64> {
    let fs_hat = lugre_friction(p, x[1], x[2], theta_hat)?;
    Ok(p.j / p.r * (p.slip_gain(x[2]) * fs_hat - p.ks * x[0] * (x[2] - x3_star)))
}

/// Uncertainty term `f(x, θ) = (K(x3)/x1)·Fs(x, θ)` of the observer error model.
pub fn slip_uncertainty(p: &LugreParams, x: [f64; 3], theta: f64) -> Result<f64> {
    if x[0] <= STOP_VELOCITY {
        return Err(Error::StoppedVehicle { x1: x[0], threshold: STOP_VELOCITY });
    }
    slip_uncertainty_unchecked(p, x, theta)
}

fn slip_uncertainty_unchecked(p: &LugreParams, x: [f64; 3], theta: f64) -> Result<f64> {
    Ok(p.slip_gain(x[2]) * lugre_friction(p, x[1], x[2], theta)? / x[0])
}

/// How the slip target is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlipTarget {
    /// Recomputed from the current estimate at every recorded step.
    Adaptive,
    Fixed(f64),
}

/// Outputs of one evaluation of the braking controller, observer and estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopStep {
    pub u: f64,
    /// `dx̂3/dt`.
    pub observer_rate: f64,
    pub theta_hat: f64,
    /// `dθ̂_I/dt`.
    pub integral_rate: f64,
}

/// Controller, observer and estimator evaluated at `state = (x1, x2, x3, x̂3, θ̂_I)`.
pub fn slip_control_loop_step(p: &LugreParams, state: [f64; 5], gamma: f64, x3_star: f64) -> Result<LoopStep> {
    let x = [state[0], state[1], state[2]];
    if x[0] <= STOP_VELOCITY {
        return Err(Error::StoppedVehicle { x1: x[0], threshold: STOP_VELOCITY });
    }
    loop_step_unchecked(p, state, gamma, x3_star)
}

fn loop_step_unchecked(p: &LugreParams, state: [f64; 5], gamma: f64, x3_star: f64) -> Result<LoopStep> {
    let x = [state[0], state[1], state[2]];
    let psi = state[3] - state[2];
    let theta_hat = gamma * (psi + state[4]);
    let u = brake_torque(p, x, theta_hat, x3_star)?;
    let fs_hat = lugre_friction(p, x[1], x[2], theta_hat)?;
    let observer_rate = -(p.slip_gain(x[2]) * fs_hat - p.r / p.j * u) / x[0] + (x[2] - state[3]);
    Ok(LoopStep { u, observer_rate, theta_hat, integral_rate: psi })
}

/// Settings of a braking run.
#[derive(Debug, Clone, PartialEq)]
pub struct WheelConfig {
    pub params: LugreParams,
    pub road: RoadProfile,
    pub gamma: f64,
    pub x1_0: f64,
    pub theta_hat0: f64,
    pub target: SlipTarget,
    /// Controller sampling period (s).
    pub h: f64,
    /// RK4 sub-steps per millisecond; the slip observer's fast mode needs about 30.
    pub substeps: usize,
    /// Safety horizon (s); braking normally ends far earlier.
    pub tf: f64,
    /// Optional disturbance `ε(t) = amplitude·e^{−t}` on the observer error.
    pub eps_amplitude: f64,
}

impl Default for WheelConfig {
    fn default() -> Self {
        Self {
            params: LugreParams::default(),
            road: RoadProfile::default(),
            gamma: DEFAULT_GAIN,
            x1_0: CALIBRATED_SPEED,
            theta_hat0: DEFAULT_THETA_HAT0,
            target: SlipTarget::Adaptive,
            h: integrate::DEFAULT_STEP,
            substeps: DEFAULT_SUBSTEPS,
            tf: 60.0,
            eps_amplitude: 0.0,
        }
    }
}

/// Closed braking loop integrated on `(x1, x2, x3, x̂3, θ̂_I, s, ∫(f(θ) − f(θ̂))²)`.
#[derive(Debug, Clone)]
pub struct WheelLoop {
    cfg: WheelConfig,
    x3_star: f64,
    star_index: usize,
}

impl WheelLoop {
    pub fn new(cfg: WheelConfig) -> Result<Self> {
        cfg.params.validate()?;
        if !(cfg.gamma > 0.0) {
            return Err(Error::InvalidGain(format!("estimator gain must be positive, got {}", cfg.gamma)));
        }
        if !(cfg.x1_0 > STOP_VELOCITY) {
            return Err(Error::InvalidArgument(format!("initial speed {} must exceed the stop velocity {STOP_VELOCITY}", cfg.x1_0)));
        }
        if let SlipTarget::Fixed(v) = cfg.target {
            if !(0.0 < v && v < 1.0) {
                return Err(Error::SlipOutOfRange(v));
            }
        }
        Ok(Self { cfg, x3_star: 0.0, star_index: 0 })
    }

    pub fn config(&self) -> &WheelConfig {
        &self.cfg
    }

    /// Zero initial slip, observer on the plant, `θ̂(0) = theta_hat0`.
    pub fn initial_vector(&self) -> Vec<f64> {
        let x1 = self.cfg.x1_0;
        vec![x1, x1 / self.cfg.params.r, 0.0, 0.0, self.cfg.theta_hat0 / self.cfg.gamma, 0.0, 0.0]
    }

    /// RK4 sub-steps per recorded step, keeping the inner step at `1 ms / substeps` for any `h`.
    pub fn inner_steps(&self) -> usize {
        ((self.cfg.substeps as f64) * self.cfg.h / integrate::DEFAULT_STEP - 1e-9).ceil().max(1.0) as usize
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(0.0, self.cfg.tf, self.cfg.h)
            .with_stop(StopCondition::when(0, Comparator::LessEq, STOP_VELOCITY))
            .with_substeps(self.inner_steps())
    }

    fn refresh_target(&mut self, y: &[f64]) {
        let theta_hat = self.cfg.gamma * ((y[3] - y[2]) + y[4]);
        match self.cfg.target {
            SlipTarget::Adaptive => {
                self.star_index = optimal_slip_index(&self.cfg.params, theta_hat, y[1]);
                self.x3_star = optimal_slip(&self.cfg.params, theta_hat, y[1]);
            }
            SlipTarget::Fixed(v) => {
                self.star_index = 0;
                self.x3_star = v;
            }
        }
    }

    fn eps(&self, t: f64) -> f64 {
        self.cfg.eps_amplitude * (-t).exp()
    }

    /// Runs until the vehicle slows to [`STOP_VELOCITY`] and appends the `V` channel.
    pub fn run(&self) -> Result<Trace> {
        let mut sys = self.clone();
        let y0 = self.initial_vector();
        sys.refresh_target(&y0);
        let mut trace = integrate::simulate(&mut sys, &y0, &self.sim_config())?;
        let th = trace.channel("theta_hat")?;
        let theta = trace.channel("theta")?;
        let gamma_inv = 1.0 / self.cfg.gamma;
        let v: Vec<f64> = (0..trace.len()).map(|k| 0.5 * gamma_inv * (th.scalar(k) - theta.scalar(k)).powi(2)).collect();
        trace.add_channel("V", Channel::from_rows(1, v))?;
        Ok(trace)
    }
}

impl Dynamics for WheelLoop {
    fn layout(&self) -> (usize, usize) {
        (0, 3)
    }

    fn dim(&self) -> usize {
        7
    }

    fn begin_step(&mut self, _t: f64, y: &[f64]) -> Result<()> {
        self.refresh_target(y);
        Ok(())
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let p = &self.cfg.params;
        let x = [y[0], y[1], y[2]];
        let theta = self.cfg.road.theta(y[5]);
        let step = loop_step_unchecked(p, [y[0], y[1], y[2], y[3], y[4]], self.cfg.gamma, self.x3_star)?;
        let plant = wheel_rhs_unchecked(p, x, theta, step.u)?;
        dy[..3].copy_from_slice(&plant);
        // ε enters the observer error: ψ̇ gains +ε
        dy[3] = step.observer_rate + self.eps(t);
        dy[4] = step.integral_rate;
        dy[5] = y[0];
        let mismatch = slip_uncertainty_unchecked(p, x, theta)? - slip_uncertainty_unchecked(p, x, step.theta_hat)?;
        dy[6] = mismatch * mismatch;
        Ok(())
    }

    fn observe(&self, t: f64, y: &[f64], rec: &mut Record) -> Result<()> {
        let p = &self.cfg.params;
        let x = [y[0], y[1], y[2]];
        let theta = self.cfg.road.theta(y[5]);
        let step = loop_step_unchecked(p, [y[0], y[1], y[2], y[3], y[4]], self.cfg.gamma, self.x3_star)?;
        let psi = y[3] - y[2];
        let mismatch = slip_uncertainty_unchecked(p, x, theta)? - slip_uncertainty_unchecked(p, x, step.theta_hat)?;
        rec.scalar("psi", psi);
        rec.scalar("u", step.u);
        rec.scalar("theta_hat", step.theta_hat);
        rec.scalar("theta", theta);
        rec.scalar("mismatch", mismatch);
        rec.scalar("mismatch_sq_int", y[6]);
        rec.scalar("alpha", 1.0);
        rec.scalar("phi", psi);
        rec.scalar("b_term", 0.0);
        rec.scalar("eps", self.eps(t));
        rec.scalar("active", 1.0);
        rec.scalar("regime", (self.star_index * 64 + self.cfg.road.segment(y[5])) as f64);
        rec.scalar("x3_hat", y[3]);
        rec.scalar("x3_star", self.x3_star);
        rec.scalar("s", y[5]);
        Ok(())
    }
}

/// Road-condition range covered by the growth estimate.
pub const THETA_RANGE: (f64, f64) = (0.3, 1.5);
/// Velocity range covered by the growth estimate (m/s).
pub const SPEED_RANGE: (f64, f64) = (STOP_VELOCITY, 40.0);
/// Slip range covered by the growth estimate.
pub const SLIP_RANGE: (f64, f64) = (0.005, 0.6);

/// Observer error goal `ψ = x̂3 − x3` on the stacked state `(x1, x2, x3, x̂3)`.
pub fn slip_goal() -> GoalFunction {
    GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[3] - x[2]))
        .with_gradient(Arc::new(|_: &DVector<f64>, _| DVector::from_column_slice(&[0.0, 0.0, -1.0, 1.0])))
        .with_time_derivative(Arc::new(|_: &DVector<f64>, _| 0.0))
}

/// `f = (K(x3)/x1)·Fs` with `α = 1` on the stacked state `(x1, x2, x3, x̂3)`.
pub fn slip_parametrization(p: &LugreParams, growth_upper: f64, growth_lower: f64) -> Result<Parametrization> {
    let p = *p;
    Parametrization::new(
        1,
        4,
        Arc::new(move |x: &DVector<f64>, th: &DVector<f64>, _| {
            slip_uncertainty_unchecked(&p, [x[0], x[1], x[2]], th[0]).unwrap_or(f64::NAN)
        }),
        Arc::new(|_: &DVector<f64>, _| DVector::from_element(1, 1.0)),
        growth_upper,
        growth_lower,
    )
}

/// States `(x1, x1(1 − x3)/r, x3, x3)` on a speed × slip grid.
pub fn slip_state_grid(p: &LugreParams, n: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(n * n);
    for x1 in linspace(SPEED_RANGE.0, SPEED_RANGE.1, n) {
        for x3 in linspace(SLIP_RANGE.0, SLIP_RANGE.1, n) {
            out.push(DVector::from_column_slice(&[x1, x1 * (1.0 - x3) / p.r, x3, x3]));
        }
    }
    out
}

pub fn slip_theta_pairs(n: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
    verify::ordered_pairs(&verify::box_grid(&[THETA_RANGE.0], &[THETA_RANGE.1], n))
}

/// Grid estimate of `D` and `D₁` for the observer error model.
pub fn slip_growth_bounds(p: &LugreParams, n: usize) -> Result<GrowthBounds> {
    let probe = slip_parametrization(p, 1.0, 1.0)?;
    verify::estimate_growth_bounds(&probe, &slip_state_grid(p, n), &slip_theta_pairs(n), 0.0)
}

/// Trapezoid integral of `x1` over a run that ended on the stop rule (m).
pub fn braking_distance(trace: &Trace) -> Result<f64> {
    if trace.stop_event().is_none() {
        return Err(Error::NotTerminated);
    }
    let x = trace.channel("x")?;
    let times = trace.times();
    Ok(times.windows(2).enumerate().map(|(k, w)| 0.5 * (w[1] - w[0]) * (x.row(k)[0] + x.row(k + 1)[0])).sum())
}

/// Initial speed in `[lo, hi]` whose adaptive braking distance equals `target`, by bisection.
pub fn calibrate_initial_speed(base: &WheelConfig, target: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let distance = |v: f64| -> Result<f64> {
        let cfg = WheelConfig { x1_0: v, target: SlipTarget::Adaptive, ..base.clone() };
        braking_distance(&WheelLoop::new(cfg)?.run()?)
    };
    let (mut a, mut b) = (lo, hi);
    let (da, db) = (distance(a)? - target, distance(b)? - target);
    if da.signum() == db.signum() {
        return Err(Error::InvalidArgument(format!("target distance {target} is not bracketed by speeds [{lo}, {hi}]")));
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if (distance(mid)? - target).signum() == da.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_force_zero_torque_is_rest() {
        let p = LugreParams::default();
        let d = wheel_rhs(&p, [20.0, 0.0, 0.0], 1.0, 0.0).unwrap();
        assert_eq!(d, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn stopped_vehicle() {
        let p = LugreParams::default();
        assert!(matches!(wheel_rhs(&p, [5.0, 10.0, 0.1], 1.0, 0.0), Err(Error::StoppedVehicle { .. })));
    }

    #[test]
    fn braking_distance_of_constant_speed() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 1e-3).collect();
        let x = Channel::from_rows(3, times.iter().flat_map(|_| [10.0, 0.0, 0.0]).collect());
        let mut trace = Trace::from_channels(0, times, vec![("x".into(), x)]).unwrap();
        assert!(matches!(braking_distance(&trace), Err(Error::NotTerminated)));
        trace.set_stop_event(integrate::StopEvent { rule: 0, t: 2.0, value: 10.0 });
        assert!((braking_distance(&trace).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn observer_error_decays_without_mismatch() {
        let p = LugreParams::default();
        let gamma = 100.0;
        // ψ = 0.01, θ̂ = θ = 0.8 after accounting for the proportional part
        let state = [25.0, 25.0 * 0.9 / 0.3, 0.1, 0.11, 0.8 / gamma - 0.01];
        let step = slip_control_loop_step(&p, state, gamma, 0.12).unwrap();
        assert!((step.theta_hat - 0.8).abs() < 1e-12);
        let plant = wheel_rhs(&p, [state[0], state[1], state[2]], 0.8, step.u).unwrap();
        let psi_dot = step.observer_rate - plant[2];
        assert!((psi_dot + 0.01).abs() < 1e-9);
        assert!((step.integral_rate - 0.01).abs() < 1e-15);
    }
}
