//! Linearly parametrized output `ẏ = θᵀz + u` driven by the harmonic exosystem
//! `ż = (z2, −z1)`. With `ψ = y` and `z(0) = (0, 1)` the regressor is
//! `α(t) = (sin t, cos t)`, which is persistently exciting with `δ = π` on windows of length `2π`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::adapt::{AdaptiveLoop, Disturbance, GoalFunction, ParamBox, Parametrization, Plant, TargetDynamics};
use crate::error::{Error, Result};
use crate::integrate::{self, SimConfig, Trace};

/// Window length matching one period of the exosystem.
pub const WINDOW: f64 = 2.0 * PI;
/// Excitation level of `(sin t, cos t)` over one period.
pub const DELTA: f64 = PI;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConfig {
    pub theta: [f64; 2],
    pub theta_hat0: [f64; 2],
    /// Γ = gamma·I.
    pub gamma: f64,
    pub z0: [f64; 2],
    pub y0: f64,
    pub phi_rate: f64,
    pub eps_amplitude: f64,
    pub theta_bound: f64,
    pub h: f64,
    pub tf: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            theta: [1.0, -0.5],
            theta_hat0: [0.0, 0.0],
            gamma: 1.0,
            z0: [0.0, 1.0],
            y0: 0.0,
            phi_rate: 1.0,
            eps_amplitude: 0.0,
            theta_bound: 2.0,
            h: integrate::DEFAULT_STEP,
            tf: 500.0,
        }
    }
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidGain(format!("gain must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    /// State `[z1, z2, y]` with `q = 2`, `p = 1`.
    pub fn plant(&self) -> Result<Plant> {
        let b = self.theta_bound;
        Plant::new(
            2,
            1,
            Arc::new(|x: &DVector<f64>| dv(&[x[1], -x[0]])),
            Arc::new(|x: &DVector<f64>, th: &DVector<f64>| dv(&[th[0] * x[0] + th[1] * x[1]])),
            Arc::new(|_: &DVector<f64>| dv(&[0.0, 0.0])),
            Arc::new(|_: &DVector<f64>| dv(&[1.0])),
            dv(&self.theta),
            ParamBox::new(vec![-b, -b], vec![b, b])?,
        )
    }

    pub fn goal(&self) -> GoalFunction {
        GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[2]))
            .with_gradient(Arc::new(|_: &DVector<f64>, _| dv(&[0.0, 0.0, 1.0])))
            .with_time_derivative(Arc::new(|_: &DVector<f64>, _| 0.0))
    }

    pub fn parametrization(&self) -> Result<Parametrization> {
        Ok(Parametrization::new(
            2,
            1,
            Arc::new(|x: &DVector<f64>, th: &DVector<f64>, _| th[0] * x[0] + th[1] * x[1]),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[0], x[1]])),
            1.0,
            1.0,
        )?
        .with_alpha_jacobian(Arc::new(|_: &DVector<f64>, _| DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])))
        .with_alpha_time_derivative(Arc::new(|_: &DVector<f64>, _| dv(&[0.0, 0.0]))))
    }

    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * self.gamma
    }

    pub fn build(&self) -> Result<AdaptiveLoop> {
        self.validate()?;
        Ok(AdaptiveLoop::new(
            self.plant()?,
            self.goal(),
            TargetDynamics::linear(self.phi_rate),
            self.parametrization()?,
            self.gamma_matrix(),
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
        self.build()?.run(&dv(&[self.z0[0], self.z0[1], self.y0]), &dv(&self.theta_hat0), &self.sim_config())
    }
}
