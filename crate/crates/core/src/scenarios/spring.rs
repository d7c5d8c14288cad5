//! Spring–mass system with unknown nonlinear damping `θ·x2|x2|`.
//!
//! With `ψ = x1 + λx2` the uncertainty is `f = x2 + λ(k0 x1 + θ x2|x2|)`, so
//! `α = x2|x2|` and `D = D₁ = λ`. Because α depends on the uncertainty-dependent
//! state, the compensator `Ψ = x1 x2|x2| + 2λ|x2|³/3` is required.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::adapt::{AdaptiveLoop, Disturbance, GoalFunction, ParamBox, Parametrization, Plant, TargetDynamics};
use crate::error::{Error, Result};
use crate::integrate::{self, SimConfig, Trace};

/// `(ẋ1, ẋ2)` of the damped spring–mass.
pub fn spring_mass_rhs(x: [f64; 2], theta: f64, u: f64, k0: f64) -> [f64; 2] {
    [x[1], k0 * x[0] + theta * x[1] * x[1].abs() + u]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpringConfig {
    pub lambda: f64,
    pub k0: f64,
    pub theta: f64,
    pub theta_hat0: f64,
    pub gamma: f64,
    pub x1_0: f64,
    pub x2_0: f64,
    /// Rate of the target dynamics `φ(ψ) = rate·ψ`.
    pub phi_rate: f64,
    /// Disturbance `ε(t) = eps_amplitude·e^{−t}`.
    pub eps_amplitude: f64,
    pub theta_bound: f64,
    pub h: f64,
    pub tf: f64,
}

impl Default for SpringConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            k0: -1.0,
            theta: 0.5,
            theta_hat0: 0.0,
            gamma: 1.0,
            x1_0: 1.0,
            x2_0: 0.0,
            phi_rate: 1.0,
            eps_amplitude: 0.0,
            theta_bound: 2.0,
            h: integrate::DEFAULT_STEP,
            tf: 20.0,
        }
    }
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl SpringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.k0 < 0.0) {
            return Err(Error::InvalidArgument(format!("k0 must be negative, got {}", self.k0)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidGain(format!("gain must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<Plant> {
        let k0 = self.k0;
        Plant::new(
            1,
            1,
            Arc::new(|x: &DVector<f64>| dv(&[x[1]])),
            Arc::new(move |x: &DVector<f64>, th: &DVector<f64>| dv(&[k0 * x[0] + th[0] * x[1] * x[1].abs()])),
            Arc::new(|_: &DVector<f64>| dv(&[0.0])),
            Arc::new(|_: &DVector<f64>| dv(&[1.0])),
            dv(&[self.theta]),
            ParamBox::new(vec![-self.theta_bound], vec![self.theta_bound])?,
        )
    }

    pub fn goal(&self) -> GoalFunction {
        let lambda = self.lambda;
        GoalFunction::new(Arc::new(move |x: &DVector<f64>, _| x[0] + lambda * x[1]))
            .with_gradient(Arc::new(move |_: &DVector<f64>, _| dv(&[1.0, lambda])))
            .with_time_derivative(Arc::new(|_: &DVector<f64>, _| 0.0))
    }

    pub fn parametrization(&self) -> Result<Parametrization> {
        let (lambda, k0) = (self.lambda, self.k0);
        Ok(Parametrization::new(
            1,
            1,
            Arc::new(move |x: &DVector<f64>, th: &DVector<f64>, _| x[1] + lambda * (k0 * x[0] + th[0] * x[1] * x[1].abs())),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[1] * x[1].abs()])),
            lambda,
            lambda,
        )?
        .with_alpha_jacobian(Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 2, &[0.0, 2.0 * x[1].abs()])))
        .with_alpha_time_derivative(Arc::new(|_: &DVector<f64>, _| dv(&[0.0])))
        .with_compensator(Arc::new(move |x: &DVector<f64>, _| {
            let a = x[1].abs();
            dv(&[x[0] * x[1] * a + 2.0 * lambda * a * a * a / 3.0])
        }))
        .with_compensator_jacobian(Arc::new(move |x: &DVector<f64>, _| {
            let a = x[1].abs();
            DMatrix::from_row_slice(1, 2, &[x[1] * a, 2.0 * x[0] * a + 2.0 * lambda * x[1] * a])
        }))
        .with_compensator_time_derivative(Arc::new(|_: &DVector<f64>, _| dv(&[0.0]))))
    }

    pub fn build(&self) -> Result<AdaptiveLoop> {
        self.validate()?;
        Ok(AdaptiveLoop::new(
            self.plant()?,
            self.goal(),
            TargetDynamics::linear(self.phi_rate),
            self.parametrization()?,
            DMatrix::from_element(1, 1, self.gamma),
        )?
        .with_disturbance(if self.eps_amplitude != 0.0 {
            Disturbance::exponential(self.eps_amplitude, 1.0)
        } else {
            Disturbance::none()
        }))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(0.0, self.tf, self.h)
    }

    pub fn run(&self) -> Result<Trace> {
        self.build()?.run(&dv(&[self.x1_0, self.x2_0]), &dv(&[self.theta_hat0]), &self.sim_config())
    }
}

/// Both sides of `‖x‖∞ ≤ (1 + 1/λ)|x1(t0)| + (1 + 2/λ)‖ψ‖∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBound {
    pub state_sup: f64,
    pub bound: f64,
}

impl StateBound {
    pub fn holds(&self) -> bool {
        self.state_sup <= self.bound
    }
}

/// `‖x‖∞` uses the max-abs entry of the state at each sample.
pub fn spring_state_bound(trace: &Trace, lambda: f64) -> Result<StateBound> {
    let x = trace.channel("x")?;
    let psi = trace.channel("psi")?;
    let state_sup = x.rows().flat_map(|r| r.iter().map(|v| v.abs())).fold(0.0, f64::max);
    let psi_sup = psi.rows().map(|r| r[0].abs()).fold(0.0, f64::max);
    let bound = (1.0 + 1.0 / lambda) * x.row(0)[0].abs() + (1.0 + 2.0 / lambda) * psi_sup;
    Ok(StateBound { state_sup, bound })
}

/// Right-hand side of the state bound for given `λ`, `|x1(t0)|` and `‖ψ‖∞`.
pub fn state_bound_value(lambda: f64, x1_0: f64, psi_sup: f64) -> f64 {
    (1.0 + 1.0 / lambda) * x1_0.abs() + (1.0 + 2.0 / lambda) * psi_sup
}
