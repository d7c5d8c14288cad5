//! Tracking for `ẋ1 = x2`, `ẋ2 = sin(θx1) + u` with adaptation gated to the region Ω_M
//! where `sin(θx1)` is monotone in θ along `α = ±x1`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::adapt::{AdaptiveLoop, Disturbance, GoalFunction, ParamBox, Parametrization, Plant, TargetDynamics};
use crate::error::{Error, Result};
use crate::integrate::{self, SimConfig, Trace};
use crate::verify;

/// `(ẋ1, ẋ2)` of the sine plant.
pub fn sine_rhs(x: [f64; 2], theta: f64, u: f64) -> [f64; 2] {
    [x[1], (theta * x[0]).sin() + u]
}

/// Union of `x1` intervals, each with the sign of α on it.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaM {
    /// `(lo, hi, sign)`, sorted and disjoint.
    pub intervals: Vec<(f64, f64, f64)>,
}

impl OmegaM {
    pub fn new(mut intervals: Vec<(f64, f64, f64)>) -> Result<Self> {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        if intervals.iter().any(|i| !(i.0 <= i.1) || i.2.abs() != 1.0) || intervals.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(Error::InvalidArgument("Ω_M intervals must be ordered, disjoint and carry a ±1 sign".into()));
        }
        Ok(Self { intervals })
    }

    /// Exact monotone region for `θ ∈ [lo, hi]`:
    /// `|x1| ≤ π/(2 hi)` with `α = x1`, and `π/(2 lo) ≤ |x1| ≤ 3π/(2 hi)` with `α = −x1`.
    pub fn derived(theta_lo: f64, theta_hi: f64) -> Result<Self> {
        if !(0.0 < theta_lo && theta_lo <= theta_hi) {
            return Err(Error::InvalidArgument("θ bounds must satisfy 0 < lo <= hi".into()));
        }
        let inner = PI / (2.0 * theta_hi);
        let (outer_lo, outer_hi) = (PI / (2.0 * theta_lo), 3.0 * PI / (2.0 * theta_hi));
        let mut intervals = vec![(-inner, inner, 1.0)];
        if outer_lo < outer_hi {
            intervals.insert(0, (-outer_hi, -outer_lo, -1.0));
            intervals.push((outer_lo, outer_hi, -1.0));
        }
        Self::new(intervals)
    }

    /// The rounded intervals `[−3.38, −2.59] ∪ [−1.14, 1.14] ∪ [2.59, 3.38]`.
    pub fn rounded() -> Self {
        Self { intervals: vec![(-3.38, -2.59, -1.0), (-1.14, 1.14, 1.0), (2.59, 3.38, -1.0)] }
    }

    /// 1-based index of the interval containing `x1`, or 0 outside.
    pub fn region(&self, x1: f64) -> usize {
        self.intervals.iter().position(|&(lo, hi, _)| lo <= x1 && x1 <= hi).map_or(0, |i| i + 1)
    }

    pub fn contains(&self, x1: f64) -> bool {
        self.region(x1) != 0
    }

    /// α at `x1`: `sign·x1` inside, zero outside.
    pub fn alpha(&self, x1: f64) -> f64 {
        match self.region(x1) {
            0 => 0.0,
            r => self.intervals[r - 1].2 * x1,
        }
    }

    /// Sampled points of every interval (`per_interval` each).
    pub fn grid(&self, per_interval: usize) -> Vec<f64> {
        self.intervals.iter().flat_map(|&(lo, hi, _)| crate::math::linspace(lo, hi, per_interval)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SineConfig {
    pub lambda: f64,
    pub theta: f64,
    pub theta_hat0: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub gamma: f64,
    /// Reference `r(t) = amplitude·sin t`.
    pub amplitude: f64,
    pub x1_0: f64,
    pub x2_0: f64,
    pub phi_rate: f64,
    pub eps_amplitude: f64,
    pub omega: OmegaM,
    pub h: f64,
    pub tf: f64,
}

impl Default for SineConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            theta: 1.2,
            theta_hat0: 1.0,
            theta_lo: 0.6,
            theta_hi: 1.4,
            gamma: 1.0,
            amplitude: 0.8,
            x1_0: 0.0,
            x2_0: 0.8,
            phi_rate: 1.0,
            eps_amplitude: 0.0,
            omega: OmegaM::derived(0.6, 1.4).expect("valid default bounds"),
            h: integrate::DEFAULT_STEP,
            tf: 100.0,
        }
    }
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl SineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidGain(format!("gain must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<Plant> {
        Plant::new(
            1,
            1,
            Arc::new(|x: &DVector<f64>| dv(&[x[1]])),
            Arc::new(|x: &DVector<f64>, th: &DVector<f64>| dv(&[(th[0] * x[0]).sin()])),
            Arc::new(|_: &DVector<f64>| dv(&[0.0])),
            Arc::new(|_: &DVector<f64>| dv(&[1.0])),
            dv(&[self.theta]),
            ParamBox::new(vec![self.theta_lo], vec![self.theta_hi])?,
        )
    }

    /// `ψ = (x1 − r) + λ(x2 − ṙ)`.
    pub fn goal(&self) -> GoalFunction {
        let (lambda, a) = (self.lambda, self.amplitude);
        GoalFunction::new(Arc::new(move |x: &DVector<f64>, t: f64| (x[0] - a * t.sin()) + lambda * (x[1] - a * t.cos())))
            .with_gradient(Arc::new(move |_: &DVector<f64>, _| dv(&[1.0, lambda])))
            .with_time_derivative(Arc::new(move |_: &DVector<f64>, t: f64| -a * t.cos() + lambda * a * t.sin()))
    }

    fn raw_parametrization(&self, growth_upper: f64, growth_lower: f64) -> Result<Parametrization> {
        let lambda = self.lambda;
        let omega = self.omega.clone();
        let omega_jac = self.omega.clone();
        Ok(Parametrization::new(
            1,
            1,
            Arc::new(move |x: &DVector<f64>, th: &DVector<f64>, _| x[1] + lambda * (th[0] * x[0]).sin()),
            Arc::new(move |x: &DVector<f64>, _| dv(&[omega.alpha(x[0])])),
            growth_upper,
            growth_lower,
        )?
        .with_alpha_jacobian(Arc::new(move |x: &DVector<f64>, _| {
            let slope = match omega_jac.region(x[0]) {
                0 => 0.0,
                r => omega_jac.intervals[r - 1].2,
            };
            DMatrix::from_row_slice(1, 2, &[slope, 0.0])
        }))
        .with_alpha_time_derivative(Arc::new(|_: &DVector<f64>, _| dv(&[0.0]))))
    }

    /// `D = λ`; `D₁` estimated on a grid over Ω_M and the parameter box.
    pub fn parametrization(&self) -> Result<Parametrization> {
        let probe = self.raw_parametrization(self.lambda, self.lambda)?;
        let bounds = verify::estimate_growth_bounds(&probe, &self.state_grid(), &self.theta_pairs(), 0.0)?;
        let lower = bounds.lower.min(self.lambda);
        if !(lower > 0.0) {
            return Err(Error::InvalidArgument("Ω_M admits no positive lower growth constant".into()));
        }
        self.raw_parametrization(self.lambda, lower)
    }

    pub fn state_grid(&self) -> Vec<DVector<f64>> {
        self.omega.grid(verify::DEFAULT_GRID_POINTS).into_iter().map(|x1| dv(&[x1, 0.0])).collect()
    }

    pub fn theta_pairs(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        verify::ordered_pairs(&verify::box_grid(&[self.theta_lo], &[self.theta_hi], verify::DEFAULT_GRID_POINTS))
    }

    pub fn build(&self) -> Result<AdaptiveLoop> {
        self.validate()?;
        let gate_omega = self.omega.clone();
        let regime_omega = self.omega.clone();
        Ok(AdaptiveLoop::new(
            self.plant()?,
            self.goal(),
            TargetDynamics::linear(self.phi_rate),
            self.parametrization()?,
            DMatrix::from_element(1, 1, self.gamma),
        )?
        .with_gate(Arc::new(move |x: &DVector<f64>, _| gate_omega.contains(x[0])))
        .with_regime(Arc::new(move |x: &DVector<f64>, _| regime_omega.region(x[0])))
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_examples() {
        let om = OmegaM::derived(0.6, 1.4).unwrap();
        assert_eq!(om.region(0.5), 2);
        assert_eq!(om.alpha(0.5), 0.5);
        assert!(!om.contains(2.0));
        assert_eq!(om.alpha(2.0), 0.0);
        assert_eq!(om.region(3.0), 3);
        assert_eq!(om.alpha(3.0), -3.0);
        let rounded = OmegaM::rounded();
        assert_eq!((rounded.region(0.5), rounded.region(2.0), rounded.region(3.0)), (2, 0, 3));
    }

    #[test]
    fn derived_region_is_inside_rounded() {
        let om = OmegaM::derived(0.6, 1.4).unwrap();
        for (d, r) in om.intervals.iter().zip(&OmegaM::rounded().intervals) {
            assert!(r.0 <= d.0 && d.1 <= r.1 && d.2 == r.2);
        }
    }

    #[test]
    fn r_inside_inner_region() {
        let cfg = SineConfig::default();
        let lp = cfg.build().unwrap();
        let state = integrate::SystemState::new(dv(&[0.5]), dv(&[0.2]), 0.0).unwrap();
        let psi = cfg.goal().value(&dv(&[0.5, 0.2]), 0.0);
        let r = crate::adapt::r_correction(&lp.plant, &lp.goal, &lp.parm, &dv(&[1.0]), 0.0, &state, 0.0);
        assert!((r[0] + psi * 0.2).abs() < 1e-12);
    }

    #[test]
    fn monotone_on_derived_region() {
        let cfg = SineConfig::default();
        let report = verify::check_monotonicity(&cfg.parametrization().unwrap(), &cfg.state_grid(), &cfg.theta_pairs(), 0.0);
        assert!(report.passed(), "{report:?}");
    }
}
