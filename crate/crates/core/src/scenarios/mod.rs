//! Reference plants and their adaptive loops.

pub mod fixtures;
pub mod linear;
pub mod lugre;
pub mod sine;
pub mod spring;
pub mod wheel;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::adapt::{GoalFunction, Parametrization};
use crate::error::{Error, Result};
use crate::integrate::Trace;
use crate::verify;

use linear::LinearConfig;
use sine::SineConfig;
use spring::SpringConfig;
use wheel::{WheelConfig, WheelLoop};

/// Residual tolerance for realizability with analytic Jacobians.
pub const REALIZABILITY_TOL: f64 = 1e-6;
/// Asymmetry tolerance for the finite-difference Poincaré check.
pub const POINCARE_TOL: f64 = 1e-4;

/// A named, ready-to-run scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Spring(SpringConfig),
    Sine(SineConfig),
    Abs(WheelConfig),
    Linear(LinearConfig),
}

pub const NAMES: [&str; 4] = ["spring", "sine", "abs", "linear"];

impl Scenario {
    /// Default configuration registered under `name`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "spring" => Ok(Self::Spring(SpringConfig::default())),
            "sine" => Ok(Self::Sine(SineConfig::default())),
            "abs" => Ok(Self::Abs(WheelConfig::default())),
            "linear" => Ok(Self::Linear(LinearConfig::default())),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}` (expected one of {})", NAMES.join(", ")))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Spring(_) => "spring",
            Self::Sine(_) => "sine",
            Self::Abs(_) => "abs",
            Self::Linear(_) => "linear",
        }
    }

    pub fn step(&self) -> f64 {
        match self {
            Self::Spring(c) => c.h,
            Self::Sine(c) => c.h,
            Self::Abs(c) => c.h,
            Self::Linear(c) => c.h,
        }
    }

    pub fn set_step(&mut self, h: f64) {
        match self {
            Self::Spring(c) => c.h = h,
            Self::Sine(c) => c.h = h,
            Self::Abs(c) => c.h = h,
            Self::Linear(c) => c.h = h,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Self::Spring(c) => c.tf,
            Self::Sine(c) => c.tf,
            Self::Abs(c) => c.tf,
            Self::Linear(c) => c.tf,
        }
    }

    pub fn set_horizon(&mut self, tf: f64) {
        match self {
            Self::Spring(c) => c.tf = tf,
            Self::Sine(c) => c.tf = tf,
            Self::Abs(c) => c.tf = tf,
            Self::Linear(c) => c.tf = tf,
        }
    }

    pub fn run(&self) -> Result<Trace> {
        match self {
            Self::Spring(c) => c.run(),
            Self::Sine(c) => c.run(),
            Self::Abs(c) => WheelLoop::new(c.clone())?.run(),
            Self::Linear(c) => c.run(),
        }
    }

    pub fn gamma(&self) -> DMatrix<f64> {
        match self {
            Self::Spring(c) => DMatrix::from_element(1, 1, c.gamma),
            Self::Sine(c) => DMatrix::from_element(1, 1, c.gamma),
            Self::Abs(c) => DMatrix::from_element(1, 1, c.gamma),
            Self::Linear(c) => c.gamma_matrix(),
        }
    }

    /// Growth constants `(D, D₁)` used by the loop's bounds.
    pub fn growth(&self) -> Result<(f64, f64)> {
        let parm = match self {
            Self::Spring(c) => c.parametrization()?,
            Self::Sine(c) => c.parametrization()?,
            Self::Abs(c) => {
                let g = wheel::slip_growth_bounds(&c.params, verify::DEFAULT_GRID_POINTS)?;
                return Ok((g.upper, g.lower));
            }
            Self::Linear(c) => c.parametrization()?,
        };
        Ok((parm.growth_upper, parm.growth_lower))
    }

    /// Monotonicity, realizability and Poincaré checks on the scenario's sample grids.
    pub fn preflight(&self) -> Result<Preflight> {
        let n = verify::DEFAULT_GRID_POINTS;
        let (parm, goal, q, x_grid, pairs): (Parametrization, GoalFunction, usize, Vec<DVector<f64>>, _) = match self {
            Self::Spring(c) => {
                let b = c.theta_bound;
                (
                    c.parametrization()?,
                    c.goal(),
                    1,
                    verify::box_grid(&[-2.0, -2.0], &[2.0, 2.0], n),
                    verify::ordered_pairs(&verify::box_grid(&[-b], &[b], n)),
                )
            }
            Self::Sine(c) => (c.parametrization()?, c.goal(), 1, c.state_grid(), c.theta_pairs()),
            Self::Abs(c) => {
                let (d, d1) = self.growth()?;
                (
                    wheel::slip_parametrization(&c.params, d, d1)?,
                    wheel::slip_goal(),
                    0,
                    wheel::slip_state_grid(&c.params, n),
                    wheel::slip_theta_pairs(n),
                )
            }
            Self::Linear(c) => {
                let b = c.theta_bound;
                (
                    c.parametrization()?,
                    c.goal(),
                    2,
                    verify::box_grid(&[-1.0, -1.0, -1.0], &[1.0, 1.0, 1.0], n / 2),
                    verify::ordered_pairs(&verify::box_grid(&[-b, -b], &[b, b], n / 2)),
                )
            }
        };
        let mono = verify::check_monotonicity(&parm, &x_grid, &pairs, 0.0);
        let realizability = x_grid.iter().map(|x| verify::realizability_residual(&parm, &goal, q, x, 0.0).amax()).fold(0.0, f64::max);
        let asymmetry = verify::poincare_check(&parm, &goal, q, &x_grid, 0.0);
        Ok(Preflight {
            checks: vec![
                PreflightCheck {
                    name: "monotonicity",
                    passed: mono.passed(),
                    value: mono.margin,
                    detail: format!("{} violations over {} tuples", mono.violation_count, mono.evaluated),
                },
                PreflightCheck {
                    name: "realizability",
                    passed: realizability <= REALIZABILITY_TOL,
                    value: realizability,
                    detail: format!("max residual over {} states", x_grid.len()),
                },
                PreflightCheck {
                    name: "poincare",
                    passed: asymmetry <= POINCARE_TOL,
                    value: asymmetry,
                    detail: format!("max asymmetry over {} states", x_grid.len()),
                },
            ],
        })
    }
}

/// One verdict of [`Scenario::preflight`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreflightCheck {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preflight {
    pub checks: Vec<PreflightCheck>,
}

impl Preflight {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// `Err(PreflightFailed)` naming every failed check.
    pub fn require(&self) -> Result<()> {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::PreflightFailed(failed.join(", ")))
        }
    }
}

impl fmt::Display for Preflight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "preflight {}: {} (value {:.6e}; {})", c.name, if c.passed { "pass" } else { "FAIL" }, c.value, c.detail)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        for name in NAMES {
            assert_eq!(Scenario::by_name(name).unwrap().name(), name);
        }
        assert!(Scenario::by_name("bicycle").is_err());
    }

    #[test]
    fn every_scenario_passes_preflight() {
        for name in NAMES {
            let pf = Scenario::by_name(name).unwrap().preflight().unwrap();
            assert!(pf.passed(), "{name}:\n{pf}");
        }
    }
}
