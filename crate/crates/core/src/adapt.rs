//! Goal-function control law and the finite-form proportional–integral estimator.
//!
//! A plant `ẋ1 = f1(x) + g1(x)u`, `ẋ2 = f2(x,θ) + g2(x)u` is driven by
//!
//! ```text
//! u  = (L_g ψ)^{-1} (−L_{f(x,θ̂)} ψ − φ(ψ,ω,t) − ∂ψ/∂t)
//! θ̂  = Γ(θ̂_P + θ̂_I),   θ̂_P = ψ·α(x,t) − Ψ(x,t)
//! θ̂̇_I = φ(ψ,ω,t)·α(x,t) + R(x,θ̂,u,t)
//! ```
//!
//! which reduces ψ to the error model `ψ̇ = f(x,θ,t) − f(x,θ̂,t) − φ + ε`.
//! [`AdaptiveLoop`] integrates plant and estimator together and records the
//! channels every downstream check reads.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::{self, Channel, Dynamics, Norm, Record, SimConfig, SystemState, Trace};
use crate::numdiff;

pub type VecMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ParamVecMap = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type StateTimeVec = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type StateTimeMat = Arc<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>;
pub type StateTimeScalar = Arc<dyn Fn(&DVector<f64>, f64) -> f64 + Send + Sync>;
pub type UncertaintyMap = Arc<dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> f64 + Send + Sync>;
pub type PhiMap = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
pub type TimeSignal = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type StatePredicate = Arc<dyn Fn(&DVector<f64>, f64) -> bool + Send + Sync>;
pub type RegimeMap = Arc<dyn Fn(&DVector<f64>, f64) -> usize + Send + Sync>;

/// Default threshold below which `|L_g ψ|` is treated as singular.
pub const SINGULARITY_TOL: f64 = 1e-9;

/// Axis-aligned box `Ω_θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidArgument("parameter box bounds are inconsistent".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        theta.len() == self.dim() && theta.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| *l <= *v && *v <= *u)
    }
}

/// Plant `ẋ1 = f1(x) + g1(x)u`, `ẋ2 = f2(x,θ) + g2(x)u`.
#[derive(Clone)]
pub struct Plant {
    pub q: usize,
    pub p: usize,
    pub f1: VecMap,
    pub f2: ParamVecMap,
    pub g1: VecMap,
    pub g2: VecMap,
    pub theta_true: DVector<f64>,
    pub theta_domain: ParamBox,
}

impl Plant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: usize,
        p: usize,
        f1: VecMap,
        f2: ParamVecMap,
        g1: VecMap,
        g2: VecMap,
        theta_true: DVector<f64>,
        theta_domain: ParamBox,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("plant needs a non-empty x2 partition".into()));
        }
        if !theta_domain.contains(&theta_true) {
            return Err(Error::InvalidArgument("true parameter lies outside its domain".into()));
        }
        Ok(Self { q, p, f1, f2, g1, g2, theta_true, theta_domain })
    }

    pub fn n(&self) -> usize {
        self.q + self.p
    }

    pub fn d(&self) -> usize {
        self.theta_true.len()
    }

    /// Drift `f(x,θ) = f1(x) ⊕ f2(x,θ)`.
    pub fn drift(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        concat(&(self.f1)(x), &(self.f2)(x, theta))
    }

    /// Input field `g(x) = g1(x) ⊕ g2(x)`.
    pub fn input_field(&self, x: &DVector<f64>) -> DVector<f64> {
        concat(&(self.g1)(x), &(self.g2)(x))
    }
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Goal function ψ(x,t) whose zero set is the target.
#[derive(Clone)]
pub struct GoalFunction {
    pub psi: StateTimeScalar,
    pub grad_x: Option<StateTimeVec>,
    pub dt: Option<StateTimeScalar>,
}

impl GoalFunction {
    pub fn new(psi: StateTimeScalar) -> Self {
        Self { psi, grad_x: None, dt: None }
    }

    pub fn with_gradient(mut self, grad: StateTimeVec) -> Self {
        self.grad_x = Some(grad);
        self
    }

    pub fn with_time_derivative(mut self, dt: StateTimeScalar) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn value(&self, x: &DVector<f64>, t: f64) -> f64 {
        (self.psi)(x, t)
    }

    pub fn gradient(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        match &self.grad_x {
            Some(g) => g(x, t),
            None => numdiff::gradient(|v| (self.psi)(v, t), x),
        }
    }

    pub fn partial_t(&self, x: &DVector<f64>, t: f64) -> f64 {
        match &self.dt {
            Some(dt) => dt(x, t),
            None => numdiff::derivative(|s| (self.psi)(x, s), t),
        }
    }

    /// Relative disagreement between the supplied derivatives and central differences.
    pub fn derivative_consistency(&self, x: &DVector<f64>, t: f64) -> f64 {
        let fd_grad = numdiff::gradient(|v| (self.psi)(v, t), x);
        let fd_dt = numdiff::derivative(|s| (self.psi)(x, s), t);
        let mut worst: f64 = 0.0;
        if let Some(g) = &self.grad_x {
            let supplied = g(x, t);
            let scale = fd_grad.amax().max(1.0);
            worst = worst.max((supplied - &fd_grad).amax() / scale);
        }
        if let Some(dt) = &self.dt {
            worst = worst.max((dt(x, t) - fd_dt).abs() / fd_dt.abs().max(1.0));
        }
        worst
    }
}

/// Desired closed-loop law `ψ̇ = −φ(ψ, ω, t)`.
#[derive(Clone)]
pub struct TargetDynamics {
    pub phi: PhiMap,
    pub omega: Vec<f64>,
}

impl TargetDynamics {
    pub fn new(phi: PhiMap, omega: Vec<f64>) -> Self {
        Self { phi, omega }
    }

    /// `φ(ψ) = ω·ψ`.
    pub fn linear(rate: f64) -> Self {
        Self::new(Arc::new(|psi, omega: &[f64], _t| omega[0] * psi), vec![rate])
    }

    pub fn eval(&self, psi: f64, t: f64) -> f64 {
        (self.phi)(psi, &self.omega, t)
    }
}

/// Uncertainty `f(x,θ,t) = L_{f(x,θ)}ψ`, its monotonicity direction α and
/// the realizability compensator Ψ with coupling matrix 𝓑.
#[derive(Clone)]
pub struct Parametrization {
    pub d: usize,
    pub p: usize,
    pub f: UncertaintyMap,
    pub alpha: StateTimeVec,
    pub alpha_jac: Option<StateTimeMat>,
    pub alpha_dt: Option<StateTimeVec>,
    pub compensator: Option<StateTimeVec>,
    pub compensator_jac: Option<StateTimeMat>,
    pub compensator_dt: Option<StateTimeVec>,
    pub coupling: Option<StateTimeMat>,
    /// Upper growth constant `D`.
    pub growth_upper: f64,
    /// Lower growth constant `D₁`.
    pub growth_lower: f64,
}

impl Parametrization {
    pub fn new(d: usize, p: usize, f: UncertaintyMap, alpha: StateTimeVec, growth_upper: f64, growth_lower: f64) -> Result<Self> {
        if !(growth_lower > 0.0 && growth_upper >= growth_lower) {
            return Err(Error::InvalidArgument(format!("growth constants need D >= D1 > 0, got D = {growth_upper}, D1 = {growth_lower}")));
        }
        Ok(Self {
            d,
            p,
            f,
            alpha,
            alpha_jac: None,
            alpha_dt: None,
            compensator: None,
            compensator_jac: None,
            compensator_dt: None,
            coupling: None,
            growth_upper,
            growth_lower,
        })
    }

    pub fn with_alpha_jacobian(mut self, jac: StateTimeMat) -> Self {
        self.alpha_jac = Some(jac);
        self
    }

    pub fn with_alpha_time_derivative(mut self, dt: StateTimeVec) -> Self {
        self.alpha_dt = Some(dt);
        self
    }

    pub fn with_compensator(mut self, psi_comp: StateTimeVec) -> Self {
        self.compensator = Some(psi_comp);
        self
    }

    pub fn with_compensator_jacobian(mut self, jac: StateTimeMat) -> Self {
        self.compensator_jac = Some(jac);
        self
    }

    pub fn with_compensator_time_derivative(mut self, dt: StateTimeVec) -> Self {
        self.compensator_dt = Some(dt);
        self
    }

    pub fn with_coupling(mut self, coupling: StateTimeMat) -> Self {
        self.coupling = Some(coupling);
        self
    }

    pub fn uncertainty(&self, x: &DVector<f64>, theta: &DVector<f64>, t: f64) -> f64 {
        (self.f)(x, theta, t)
    }

    pub fn alpha(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.alpha)(x, t)
    }

    /// `∂α/∂x` as a `d × n` matrix.
    pub fn alpha_jacobian(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        match &self.alpha_jac {
            Some(j) => j(x, t),
            None => numdiff::jacobian(|v| (self.alpha)(v, t), x, self.d),
        }
    }

    pub fn alpha_time(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        match &self.alpha_dt {
            Some(dt) => dt(x, t),
            None => numdiff::vector_derivative(|s| (self.alpha)(x, s), t),
        }
    }

    /// Ψ(x,t); zero when no compensator is configured.
    pub fn compensator(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        match &self.compensator {
            Some(c) => c(x, t),
            None => DVector::zeros(self.d),
        }
    }

    pub fn compensator_jacobian(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        match (&self.compensator_jac, &self.compensator) {
            (Some(j), _) => j(x, t),
            (None, Some(c)) => numdiff::jacobian(|v| c(v, t), x, self.d),
            (None, None) => DMatrix::zeros(self.d, x.len()),
        }
    }

    pub fn compensator_time(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        match (&self.compensator_dt, &self.compensator) {
            (Some(dt), _) => dt(x, t),
            (None, Some(c)) => numdiff::vector_derivative(|s| c(x, s), t),
            (None, None) => DVector::zeros(self.d),
        }
    }

    /// 𝓑(x,t) as a `d × p` matrix; zero when not configured.
    pub fn coupling(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        match &self.coupling {
            Some(b) => b(x, t),
            None => DMatrix::zeros(self.d, self.p),
        }
    }

    pub fn has_coupling(&self) -> bool {
        self.coupling.is_some()
    }
}

/// Additive disturbance ε(t) on the ψ channel.
#[derive(Clone, Default)]
pub struct Disturbance {
    pub eps: Option<TimeSignal>,
}

impl Disturbance {
    pub fn none() -> Self {
        Self { eps: None }
    }

    /// `ε(t) = amplitude · e^{−rate·t}`.
    pub fn exponential(amplitude: f64, rate: f64) -> Self {
        Self { eps: Some(Arc::new(move |t| amplitude * (-rate * t).exp())) }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eps.as_ref().map_or(0.0, |e| e(t))
    }
}

/// Integral state θ̂_I and the gain Γ of the finite-form estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta_i: DVector<f64>,
    gamma: DMatrix<f64>,
    gamma_inv: DMatrix<f64>,
}

impl EstimatorState {
    pub fn new(gamma: DMatrix<f64>, theta_i: DVector<f64>) -> Result<Self> {
        let gamma_inv = checked_gain_inverse(&gamma)?;
        if theta_i.len() != gamma.nrows() {
            return Err(Error::InvalidGain("Γ and θ̂_I dimensions differ".into()));
        }
        if !theta_i.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("θ̂_I must be finite".into()));
        }
        Ok(Self { theta_i, gamma, gamma_inv })
    }

    /// Chooses θ̂_I(t₀) = Γ⁻¹θ̂₀ − θ̂_P(x₀,t₀) so the estimate starts at `theta_hat0`.
    pub fn initialized(gamma: DMatrix<f64>, theta_hat0: &DVector<f64>, theta_p0: &DVector<f64>) -> Result<Self> {
        let gamma_inv = checked_gain_inverse(&gamma)?;
        let theta_i = &gamma_inv * theta_hat0 - theta_p0;
        Self::new(gamma, theta_i)
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn gamma_inv(&self) -> &DMatrix<f64> {
        &self.gamma_inv
    }
}

/// Validates Γ (square, symmetric, Cholesky-factorizable) and returns Γ⁻¹.
pub fn checked_gain_inverse(gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !gamma.is_square() || gamma.nrows() == 0 {
        return Err(Error::InvalidGain("Γ must be a non-empty square matrix".into()));
    }
    let scale = gamma.amax().max(1.0);
    if (gamma - gamma.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidGain("Γ must be symmetric".into()));
    }
    let chol = gamma.clone().cholesky().ok_or_else(|| Error::InvalidGain("Γ is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// `‖e‖²_{Γ⁻¹} = eᵀΓ⁻¹e`.
pub fn weighted_sq_norm(e: &DVector<f64>, gamma_inv: &DMatrix<f64>) -> f64 {
    e.dot(&(gamma_inv * e))
}

/// The control law that renders ψ̇ = f(θ) − f(θ̂) − φ.
pub fn control_input(
    plant: &Plant,
    goal: &GoalFunction,
    target: &TargetDynamics,
    theta_hat: &DVector<f64>,
    state: &SystemState,
    t: f64,
) -> Result<f64> {
    control_input_with_tol(plant, goal, target, theta_hat, state, t, SINGULARITY_TOL)
}

pub fn control_input_with_tol(
    plant: &Plant,
    goal: &GoalFunction,
    target: &TargetDynamics,
    theta_hat: &DVector<f64>,
    state: &SystemState,
    t: f64,
    singular_tol: f64,
) -> Result<f64> {
    let x = state.x();
    let grad = goal.gradient(&x, t);
    let lg = grad.dot(&plant.input_field(&x));
    if !(lg.abs() > singular_tol) {
        return Err(Error::SingularControl { t, value: lg.abs() });
    }
    let lf = grad.dot(&plant.drift(&x, theta_hat));
    let psi = goal.value(&x, t);
    Ok((-lf - target.eval(psi, t) - goal.partial_t(&x, t)) / lg)
}

/// θ̂_P = ψ·α − Ψ.
pub fn proportional_part(goal: &GoalFunction, parm: &Parametrization, x: &DVector<f64>, t: f64) -> DVector<f64> {
    parm.alpha(x, t) * goal.value(x, t) - parm.compensator(x, t)
}

/// θ̂ = Γ(θ̂_P + θ̂_I).
pub fn theta_hat(goal: &GoalFunction, parm: &Parametrization, est: &EstimatorState, state: &SystemState, t: f64) -> DVector<f64> {
    let x = state.x();
    est.gamma() * (proportional_part(goal, parm, &x, t) + &est.theta_i)
}

/// Correction R that removes the influence of `f1`, `g1`, `g2` and the explicit
/// time dependence of α, Ψ from the derivative of θ̂.
#[allow(clippy::too_many_arguments)]
pub fn r_correction(
    plant: &Plant,
    goal: &GoalFunction,
    parm: &Parametrization,
    theta_hat: &DVector<f64>,
    u: f64,
    state: &SystemState,
    t: f64,
) -> DVector<f64> {
    let x = state.x();
    let q = plant.q;
    let psi = goal.value(&x, t);
    let ja = parm.alpha_jacobian(&x, t);
    let jc = parm.compensator_jacobian(&x, t);
    let ja1 = ja.columns(0, q);
    let jc1 = jc.columns(0, q);
    let f1 = (plant.f1)(&x);
    let g1 = (plant.g1)(&x);

    let mut r = parm.compensator_time(&x, t) - parm.alpha_time(&x, t) * psi;
    if q > 0 {
        let lf1_alpha = ja1 * &f1;
        let lf1_comp = jc1 * &f1;
        let lg1_alpha = ja1 * &g1;
        let lg1_comp = jc1 * &g1;
        r -= lf1_alpha * psi - lf1_comp;
        r -= (lg1_alpha * psi - lg1_comp) * u;
    }
    if parm.has_coupling() {
        let b = parm.coupling(&x, t);
        r += b * ((plant.f2)(&x, theta_hat) + (plant.g2)(&x) * u);
    }
    r
}

/// θ̂̇_I = φ(ψ)·α + R.
#[allow(clippy::too_many_arguments)]
pub fn estimator_rhs(
    goal: &GoalFunction,
    target: &TargetDynamics,
    parm: &Parametrization,
    plant: &Plant,
    est: &EstimatorState,
    state: &SystemState,
    u: f64,
    t: f64,
) -> DVector<f64> {
    let x = state.x();
    let th = theta_hat(goal, parm, est, state, t);
    let psi = goal.value(&x, t);
    parm.alpha(&x, t) * target.eval(psi, t) + r_correction(plant, goal, parm, &th, u, state, t)
}

/// V = ½‖θ̂−θ‖²_{Γ⁻¹} + (D / 4D₁²)·‖ε‖²_{2,[t,∞)}.
pub fn lyapunov_value(
    theta_hat: &DVector<f64>,
    theta_true: &DVector<f64>,
    gamma: &DMatrix<f64>,
    eps_l2_tail: f64,
    growth_upper: f64,
    growth_lower: f64,
) -> Result<f64> {
    let gamma_inv = checked_gain_inverse(gamma)?;
    let e = theta_hat - theta_true;
    Ok(0.5 * weighted_sq_norm(&e, &gamma_inv) + growth_upper / (4.0 * growth_lower * growth_lower) * eps_l2_tail * eps_l2_tail)
}

/// Upper bound on ‖f(x,θ,·) − f(x,θ̂,·)‖₂ over any interval of existence.
pub fn mismatch_l2_bound(
    theta_hat0: &DVector<f64>,
    theta_true: &DVector<f64>,
    gamma: &DMatrix<f64>,
    growth_upper: f64,
    eps_l2: f64,
    growth_lower: f64,
) -> Result<f64> {
    let gamma_inv = checked_gain_inverse(gamma)?;
    let e = theta_true - theta_hat0;
    Ok((0.5 * growth_upper * weighted_sq_norm(&e, &gamma_inv)).sqrt() + growth_upper / growth_lower * eps_l2)
}

/// Worst residual between the centered difference of θ̂(t) and the virtual
/// algorithm `Γ((ψ̇+φ)α − 𝓑(f2(x,θ) − f2(x,θ̂)))` with ψ̇ also differenced.
///
/// Reads channels `theta_hat`, `psi`, `phi`, `alpha`, `b_term`; samples whose
/// stencil crosses a change of `regime` or `theta` are skipped.
pub fn virtual_equivalence_check(trace: &Trace, gamma: &DMatrix<f64>) -> Result<f64> {
    let n = trace.len();
    if n < 3 {
        return Err(Error::TraceTooShort { len: n, needed: 3 });
    }
    let th = trace.channel("theta_hat")?;
    let psi = trace.channel("psi")?;
    let phi = trace.channel("phi")?;
    let alpha = trace.channel("alpha")?;
    let b_term = trace.channel("b_term")?;
    let smooth = SmoothMask::new(trace);
    let times = trace.times();
    let d = th.width();

    let mut worst: f64 = 0.0;
    for k in 1..n - 1 {
        if !smooth.stencil_ok(k) {
            continue;
        }
        let dt = times[k + 1] - times[k - 1];
        let psi_dot = (psi.scalar(k + 1) - psi.scalar(k - 1)) / dt;
        let drive = psi_dot + phi.scalar(k);
        let a = DVector::from_column_slice(alpha.row(k));
        let b = DVector::from_column_slice(b_term.row(k));
        let predicted = gamma * (a * drive - b);
        for i in 0..d {
            let fd = (th.row(k + 1)[i] - th.row(k - 1)[i]) / dt;
            worst = worst.max((fd - predicted[i]).abs());
        }
    }
    Ok(worst)
}

/// Marks samples where recorded signals are smooth enough for finite differencing.
pub(crate) struct SmoothMask<'a> {
    regime: Option<&'a Channel>,
    theta: Option<&'a Channel>,
    active: Option<&'a Channel>,
}

impl<'a> SmoothMask<'a> {
    pub(crate) fn new(trace: &'a Trace) -> Self {
        Self { regime: trace.channel("regime").ok(), theta: trace.channel("theta").ok(), active: trace.channel("active").ok() }
    }

    fn same(ch: Option<&Channel>, a: usize, b: usize) -> bool {
        ch.is_none_or(|c| c.row(a) == c.row(b))
    }

    pub(crate) fn pair_ok(&self, a: usize, b: usize) -> bool {
        Self::same(self.regime, a, b)
            && Self::same(self.theta, a, b)
            && self.active.is_none_or(|c| c.scalar(a) != 0.0 && c.scalar(b) != 0.0)
    }

    pub(crate) fn stencil_ok(&self, k: usize) -> bool {
        self.pair_ok(k - 1, k) && self.pair_ok(k, k + 1)
    }

    /// True where the true parameter changes between `k-1` and `k`.
    pub(crate) fn theta_switch(&self, k: usize) -> bool {
        !Self::same(self.theta, k - 1, k)
    }
}

/// Largest one-step increase of ‖θ̂ − θ‖²_{Γ⁻¹} over steps inside one smooth regime.
pub fn monotone_norm_violation(trace: &Trace, gamma: &DMatrix<f64>) -> Result<f64> {
    let gamma_inv = checked_gain_inverse(gamma)?;
    let th = trace.channel("theta_hat")?;
    let theta = trace.channel("theta")?;
    let mask = SmoothMask::new(trace);
    let sq = |k: usize| {
        let e = DVector::from_column_slice(th.row(k)) - DVector::from_column_slice(theta.row(k));
        weighted_sq_norm(&e, &gamma_inv)
    };
    let mut worst = f64::NEG_INFINITY;
    let mut prev = sq(0);
    for k in 1..trace.len() {
        let cur = sq(k);
        if mask.pair_ok(k - 1, k) {
            worst = worst.max(cur - prev);
        }
        prev = cur;
    }
    Ok(if worst.is_finite() { worst } else { 0.0 })
}

/// Outcome of the running L₂ mismatch check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchCheck {
    /// Smallest `bound − measured` over all prefixes (negative means violated).
    pub min_slack: f64,
    /// Smallest slack of the parametric-norm inequality over all samples.
    pub min_param_slack: f64,
    /// Measured ‖f(θ) − f(θ̂)‖₂ over the final prefix of the last segment.
    pub final_norm: f64,
    pub final_bound: f64,
}

/// Checks the running mismatch L₂ norm against [`mismatch_l2_bound`] on every prefix.
///
/// The bound restarts wherever the true parameter changes, taking θ̂ at the
/// switch as the new initial estimate. The mismatch energy is read from the
/// integrated `mismatch_sq_int` channel when the loop records one, and from a
/// trapezoid sum of `mismatch` otherwise.
pub fn mismatch_bound_check(trace: &Trace, gamma: &DMatrix<f64>, growth_upper: f64, growth_lower: f64) -> Result<MismatchCheck> {
    let gamma_inv = checked_gain_inverse(gamma)?;
    let mismatch = trace.channel("mismatch")?;
    let accumulated = trace.channel("mismatch_sq_int").ok();
    let th = trace.channel("theta_hat")?;
    let theta = trace.channel("theta")?;
    let eps = trace.channel("eps")?;
    let mask = SmoothMask::new(trace);
    let times = trace.times();

    let row_vec = |ch: &Channel, k: usize| DVector::from_column_slice(ch.row(k));
    let mut seg_start = 0usize;
    let mut mm_sq = 0.0;
    let mut eps_sq = 0.0;
    let mut out = MismatchCheck { min_slack: f64::INFINITY, min_param_slack: f64::INFINITY, final_norm: 0.0, final_bound: 0.0 };
    let mut e0 = weighted_sq_norm(&(row_vec(th, 0) - row_vec(theta, 0)), &gamma_inv);
    for k in 0..trace.len() {
        if k > 0 && mask.theta_switch(k) {
            seg_start = k;
            mm_sq = 0.0;
            eps_sq = 0.0;
            e0 = weighted_sq_norm(&(row_vec(th, k) - row_vec(theta, k)), &gamma_inv);
        } else if k > seg_start {
            let dt = times[k] - times[k - 1];
            mm_sq = match accumulated {
                Some(acc) => acc.scalar(k) - acc.scalar(seg_start),
                None => mm_sq + 0.5 * dt * (mismatch.scalar(k).powi(2) + mismatch.scalar(k - 1).powi(2)),
            };
            eps_sq += 0.5 * dt * (eps.scalar(k).powi(2) + eps.scalar(k - 1).powi(2));
        }
        let bound = (0.5 * growth_upper * e0).sqrt() + growth_upper / growth_lower * eps_sq.sqrt();
        let measured = mm_sq.sqrt();
        out.min_slack = out.min_slack.min(bound - measured);
        let ek = weighted_sq_norm(&(row_vec(th, k) - row_vec(theta, k)), &gamma_inv);
        let param_bound = e0 + growth_upper / (2.0 * growth_lower * growth_lower) * eps_sq;
        out.min_param_slack = out.min_param_slack.min(param_bound - ek);
        out.final_norm = measured;
        out.final_bound = bound;
    }
    Ok(out)
}

/// Plant, goal, target, parametrization and gain assembled into one integrable loop.
///
/// Integrated vector: `[x1, x2, θ̂_I, ∫(f(θ) − f(θ̂))²]`. The disturbance ε(t) is injected as the
/// matched input `ε / L_gψ`, which adds exactly ε to ψ̇ and leaves the error
/// model otherwise untouched.
#[derive(Clone)]
pub struct AdaptiveLoop {
    pub plant: Plant,
    pub goal: GoalFunction,
    pub target: TargetDynamics,
    pub parm: Parametrization,
    pub gamma: DMatrix<f64>,
    pub disturbance: Disturbance,
    /// Adaptation runs only where the gate is open (θ̂̇_I frozen otherwise).
    pub gate: Option<StatePredicate>,
    /// Labels smooth pieces of a piecewise-defined α.
    pub regime: Option<RegimeMap>,
    pub singular_tol: f64,
    gamma_inv: DMatrix<f64>,
}

struct LoopEval {
    psi: f64,
    theta_hat: DVector<f64>,
    u_applied: f64,
    eps: f64,
    phi: f64,
    alpha: DVector<f64>,
    active: bool,
    x_dot: DVector<f64>,
    theta_i_dot: DVector<f64>,
    mismatch: f64,
}

impl AdaptiveLoop {
    pub fn new(plant: Plant, goal: GoalFunction, target: TargetDynamics, parm: Parametrization, gamma: DMatrix<f64>) -> Result<Self> {
        let gamma_inv = checked_gain_inverse(&gamma)?;
        if gamma.nrows() != plant.d() || parm.d != plant.d() {
            return Err(Error::InvalidArgument("Γ, α and θ dimensions disagree".into()));
        }
        if parm.p != plant.p {
            return Err(Error::InvalidArgument("coupling width differs from dim(x2)".into()));
        }
        Ok(Self {
            plant,
            goal,
            target,
            parm,
            gamma,
            disturbance: Disturbance::none(),
            gate: None,
            regime: None,
            singular_tol: SINGULARITY_TOL,
            gamma_inv,
        })
    }

    pub fn with_disturbance(mut self, disturbance: Disturbance) -> Self {
        self.disturbance = disturbance;
        self
    }

    pub fn with_gate(mut self, gate: StatePredicate) -> Self {
        self.gate = Some(gate);
        self
    }

    pub fn with_regime(mut self, regime: RegimeMap) -> Self {
        self.regime = Some(regime);
        self
    }

    pub fn gamma_inv(&self) -> &DMatrix<f64> {
        &self.gamma_inv
    }

    /// `[x0, θ̂_I(t0)]` with θ̂_I chosen so that θ̂(t0) = `theta_hat0`.
    pub fn initial_vector(&self, x0: &DVector<f64>, t0: f64, theta_hat0: &DVector<f64>) -> Result<Vec<f64>> {
        if x0.len() != self.plant.n() {
            return Err(Error::InvalidArgument("initial state has the wrong dimension".into()));
        }
        let tp = proportional_part(&self.goal, &self.parm, x0, t0);
        let est = EstimatorState::initialized(self.gamma.clone(), theta_hat0, &tp)?;
        Ok(x0.iter().chain(est.theta_i.iter()).copied().chain([0.0]).collect())
    }

    fn evaluate(&self, t: f64, y: &[f64]) -> Result<LoopEval> {
        let n = self.plant.n();
        let x = DVector::from_column_slice(&y[..n]);
        let d = self.plant.d();
        let theta_i = DVector::from_column_slice(&y[n..n + d]);
        let state = SystemState::from_concat(&y[..n], self.plant.q, t);
        let psi = self.goal.value(&x, t);
        let alpha = self.parm.alpha(&x, t);
        let theta_hat = &self.gamma * (&alpha * psi - self.parm.compensator(&x, t) + &theta_i);

        let grad = self.goal.gradient(&x, t);
        let g = self.plant.input_field(&x);
        let lg = grad.dot(&g);
        if !(lg.abs() > self.singular_tol) {
            return Err(Error::SingularControl { t, value: lg.abs() });
        }
        let phi = self.target.eval(psi, t);
        let lf_hat = grad.dot(&self.plant.drift(&x, &theta_hat));
        let u = (-lf_hat - phi - self.goal.partial_t(&x, t)) / lg;
        let eps = self.disturbance.eval(t);
        let u_applied = u + eps / lg;

        let x_dot = self.plant.drift(&x, &self.plant.theta_true) + g * u_applied;
        let active = self.gate.as_ref().is_none_or(|gate| gate(&x, t));
        let theta_i_dot = if active {
            &alpha * phi + r_correction(&self.plant, &self.goal, &self.parm, &theta_hat, u_applied, &state, t)
        } else {
            DVector::zeros(self.plant.d())
        };
        let mismatch = self.parm.uncertainty(&x, &self.plant.theta_true, t) - self.parm.uncertainty(&x, &theta_hat, t);
        Ok(LoopEval { psi, theta_hat, u_applied, eps, phi, alpha, active, x_dot, theta_i_dot, mismatch })
    }

    /// Simulates the loop and appends the Lyapunov channel `V`.
    pub fn run(&self, x0: &DVector<f64>, theta_hat0: &DVector<f64>, cfg: &SimConfig) -> Result<Trace> {
        let y0 = self.initial_vector(x0, cfg.t0, theta_hat0)?;
        let mut sys = self.clone();
        let mut trace = integrate::simulate(&mut sys, &y0, cfg)?;
        self.append_lyapunov(&mut trace)?;
        Ok(trace)
    }

    fn append_lyapunov(&self, trace: &mut Trace) -> Result<()> {
        let eps = trace.channel("eps")?;
        let th = trace.channel("theta_hat")?;
        let times = trace.times();
        let n = trace.len();
        // ‖ε‖²_{2,[t_k, T]} by a backward trapezoid sum
        let mut tail = vec![0.0; n];
        for k in (0..n.saturating_sub(1)).rev() {
            let dt = times[k + 1] - times[k];
            tail[k] = tail[k + 1] + 0.5 * dt * (eps.scalar(k).powi(2) + eps.scalar(k + 1).powi(2));
        }
        let (du, dl) = (self.parm.growth_upper, self.parm.growth_lower);
        let values: Vec<f64> = (0..n)
            .map(|k| {
                let e = DVector::from_column_slice(th.row(k)) - &self.plant.theta_true;
                0.5 * weighted_sq_norm(&e, &self.gamma_inv) + du / (4.0 * dl * dl) * tail[k]
            })
            .collect();
        trace.add_channel("V", Channel::from_rows(1, values))
    }
}

impl Dynamics for AdaptiveLoop {
    fn layout(&self) -> (usize, usize) {
        (self.plant.q, self.plant.p)
    }

    fn dim(&self) -> usize {
        self.plant.n() + self.plant.d() + 1
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let ev = self.evaluate(t, y)?;
        let n = self.plant.n();
        dy[..n].copy_from_slice(ev.x_dot.as_slice());
        let d = self.plant.d();
        dy[n..n + d].copy_from_slice(ev.theta_i_dot.as_slice());
        dy[n + d] = ev.mismatch * ev.mismatch;
        Ok(())
    }

    fn observe(&self, t: f64, y: &[f64], rec: &mut Record) -> Result<()> {
        let ev = self.evaluate(t, y)?;
        let n = self.plant.n();
        let x = DVector::from_column_slice(&y[..n]);
        let theta = &self.plant.theta_true;
        let b_term = if self.parm.has_coupling() {
            self.parm.coupling(&x, t) * ((self.plant.f2)(&x, theta) - (self.plant.f2)(&x, &ev.theta_hat))
        } else {
            DVector::zeros(self.plant.d())
        };
        rec.scalar("psi", ev.psi);
        rec.scalar("u", ev.u_applied);
        rec.set("theta_hat", ev.theta_hat.as_slice());
        rec.set("theta", theta.as_slice());
        rec.scalar("mismatch", ev.mismatch);
        rec.scalar("mismatch_sq_int", y[n + self.plant.d()]);
        rec.set("alpha", ev.alpha.as_slice());
        rec.scalar("phi", ev.phi);
        rec.set("b_term", b_term.as_slice());
        rec.scalar("eps", ev.eps);
        rec.scalar("active", if ev.active { 1.0 } else { 0.0 });
        let regime = self.regime.as_ref().map_or(0, |r| r(&x, t));
        rec.scalar("regime", regime as f64);
        Ok(())
    }
}

/// ‖ε‖₂ over the trace span from the recorded `eps` channel.
pub fn disturbance_l2(trace: &Trace) -> Result<f64> {
    integrate::signal_norm(trace, "eps", Norm::L2, (trace.start(), trace.end()))
}
