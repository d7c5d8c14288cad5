//! Grid-based witnesses for the standing assumptions: monotone parametrization and
//! growth constants, realizability of the finite-form estimator, quadrature
//! construction of the compensator Ψ, and empirical L₂→L∞ gains of target dynamics.
//!
//! Every check here samples; none of them proves a global statement.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::adapt::{GoalFunction, Parametrization, TargetDynamics, TimeSignal};
use crate::error::{Error, Result};
use crate::integrate::{self, FnDynamics, Norm, SimConfig, DEFAULT_DIVERGENCE_CAP};
use crate::math::linspace;
use crate::numdiff;

/// Values below this count as monotonicity violations.
pub const VIOLATION_TOL: f64 = 1e-12;
/// Denominators `|αᵀ(θ̂−θ)|` at or below this are skipped when estimating growth constants.
pub const DENOMINATOR_TOL: f64 = 1e-12;
/// Default points per grid dimension.
pub const DEFAULT_GRID_POINTS: usize = 20;
/// Outer finite-difference step of the second derivatives in [`poincare_check`].
pub const POINCARE_OUTER_STEP: f64 = 1e-4;
/// Tolerance of the adaptive Simpson rule in [`psi_by_quadrature`].
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Largest admissible change of ψ or α when probing other `x2` components.
pub const DEPENDENCE_TOL: f64 = 1e-8;

/// Cartesian product of per-axis uniform grids over a box.
pub fn box_grid(lower: &[f64], upper: &[f64], per_dim: usize) -> Vec<DVector<f64>> {
    let axes: Vec<Vec<f64>> = lower.iter().zip(upper).map(|(&l, &u)| linspace(l, u, per_dim)).collect();
    product(&axes)
}

/// Cartesian product of arbitrary axes, last axis varying fastest.
pub fn product(axes: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

/// Every ordered pair `(θ, θ̂)` of grid points, including equal pairs.
pub fn ordered_pairs(points: &[DVector<f64>]) -> Vec<(DVector<f64>, DVector<f64>)> {
    points.iter().flat_map(|a| points.iter().map(move |b| (a.clone(), b.clone()))).collect()
}

/// A grid tuple where `(f(θ̂) − f(θ))·αᵀ(θ̂ − θ)` went negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Number of violating tuples.
    pub violation_count: usize,
    /// The first violations in grid order (at most [`MonotonicityReport::KEPT`]).
    pub violations: Vec<Violation>,
    /// Smallest product over all tuples.
    pub margin: f64,
    pub evaluated: usize,
}

impl MonotonicityReport {
    pub const KEPT: usize = 16;

    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Evaluates `(f(x,θ̂,t) − f(x,θ,t))·α(x,t)ᵀ(θ̂ − θ)` over every grid tuple.
pub fn check_monotonicity(
    parm: &Parametrization,
    x_grid: &[DVector<f64>],
    theta_pairs: &[(DVector<f64>, DVector<f64>)],
    t: f64,
) -> MonotonicityReport {
    let per_x: Vec<(usize, Vec<Violation>, f64)> = x_grid
        .par_iter()
        .map(|x| {
            let alpha = parm.alpha(x, t);
            let mut count = 0;
            let mut kept = Vec::new();
            let mut margin = f64::INFINITY;
            for (theta, theta_hat) in theta_pairs {
                let df = parm.uncertainty(x, theta_hat, t) - parm.uncertainty(x, theta, t);
                let value = df * alpha.dot(&(theta_hat - theta));
                margin = margin.min(value);
                if value < -VIOLATION_TOL {
                    count += 1;
                    if kept.len() < MonotonicityReport::KEPT {
                        kept.push(Violation { x: x.clone(), theta: theta.clone(), theta_hat: theta_hat.clone(), value });
                    }
                }
            }
            (count, kept, margin)
        })
        .collect();

    let mut report = MonotonicityReport {
        violation_count: 0,
        violations: Vec::new(),
        margin: f64::INFINITY,
        evaluated: x_grid.len() * theta_pairs.len(),
    };
    for (count, kept, margin) in per_x {
        report.violation_count += count;
        report.margin = report.margin.min(margin);
        for v in kept {
            if report.violations.len() < MonotonicityReport::KEPT {
                report.violations.push(v);
            }
        }
    }
    report
}

/// Empirical growth constants over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBounds {
    /// Largest ratio `|f(θ̂) − f(θ)| / |αᵀ(θ̂ − θ)|`.
    pub upper: f64,
    /// Smallest ratio over the same tuples.
    pub lower: f64,
    pub retained: usize,
}

/// Estimates `D` and `D₁` as the extreme ratios `|Δf| / |αᵀΔθ|` on the grid.
pub fn estimate_growth_bounds(
    parm: &Parametrization,
    x_grid: &[DVector<f64>],
    theta_pairs: &[(DVector<f64>, DVector<f64>)],
    t: f64,
) -> Result<GrowthBounds> {
    let per_x: Vec<(f64, f64, usize)> = x_grid
        .par_iter()
        .map(|x| {
            let alpha = parm.alpha(x, t);
            let (mut hi, mut lo, mut n) = (f64::NEG_INFINITY, f64::INFINITY, 0usize);
            for (theta, theta_hat) in theta_pairs {
                let den = alpha.dot(&(theta_hat - theta)).abs();
                if den <= DENOMINATOR_TOL {
                    continue;
                }
                let ratio = (parm.uncertainty(x, theta_hat, t) - parm.uncertainty(x, theta, t)).abs() / den;
                hi = hi.max(ratio);
                lo = lo.min(ratio);
                n += 1;
            }
            (hi, lo, n)
        })
        .collect();
    let (upper, lower, retained) =
        per_x.into_iter().fold((f64::NEG_INFINITY, f64::INFINITY, 0), |(h, l, n), (a, b, m)| (h.max(a), l.min(b), n + m));
    if retained == 0 {
        return Err(Error::DegenerateGrid);
    }
    Ok(GrowthBounds { upper, lower, retained })
}

/// `∂Ψ/∂x2 − ψ·∂α/∂x2 − 𝓑` at one point; `q` is the size of the `x1` partition.
pub fn realizability_residual(parm: &Parametrization, goal: &GoalFunction, q: usize, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let p = x.len() - q;
    let psi = goal.value(x, t);
    let jc = parm.compensator_jacobian(x, t);
    let ja = parm.alpha_jacobian(x, t);
    let b = parm.coupling(x, t);
    let mut out = DMatrix::zeros(parm.d, p);
    for i in 0..parm.d {
        for j in 0..p {
            out[(i, j)] = jc[(i, q + j)] - psi * ja[(i, q + j)] - b[(i, j)];
        }
    }
    out
}

/// Largest `|M_i − M_iᵀ|` with `M_i = ∂/∂x2 (ψ·∂α_i/∂x2 + 𝓑_i)` over the grid.
///
/// Inner derivatives use the standard central step; the outer derivative uses
/// [`POINCARE_OUTER_STEP`] so the nested differences stay well above round-off.
pub fn poincare_check(parm: &Parametrization, goal: &GoalFunction, q: usize, x_grid: &[DVector<f64>], t: f64) -> f64 {
    x_grid
        .iter()
        .map(|x| {
            let p = x.len() - q;
            // G_i(x)_j = ψ ∂α_i/∂x2_j + 𝓑_ij, flattened row-major over (i, j)
            let field = |v: &DVector<f64>| -> DVector<f64> {
                let psi = goal.value(v, t);
                let ja = parm.alpha_jacobian(v, t);
                let b = parm.coupling(v, t);
                DVector::from_iterator(
                    parm.d * p,
                    (0..parm.d).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| psi * ja[(i, q + j)] + b[(i, j)]),
                )
            };
            let mut worst: f64 = 0.0;
            let mut dg = vec![DVector::zeros(parm.d * p); p];
            for (k, slot) in dg.iter_mut().enumerate() {
                let h = POINCARE_OUTER_STEP * x[q + k].abs().max(1.0);
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[q + k] += h;
                minus[q + k] -= h;
                *slot = (field(&plus) - field(&minus)) / (2.0 * h);
            }
            for i in 0..parm.d {
                for j in 0..p {
                    for k in 0..p {
                        let mjk = dg[k][i * p + j];
                        let mkj = dg[j][i * p + k];
                        worst = worst.max((mjk - mkj).abs());
                    }
                }
            }
            worst
        })
        .fold(0.0, f64::max)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Ψ(x,t) = ∫₀^{x2_k} ψ·∂α/∂x2_k ds when ψ and α depend on `x2` only through `x2_k`.
///
/// `k` indexes the `x2` partition; `q` is the size of the `x1` partition.
pub fn psi_by_quadrature(
    parm: &Parametrization,
    goal: &GoalFunction,
    q: usize,
    k: usize,
    x: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let p = x.len() - q;
    if k >= p {
        return Err(Error::InvalidArgument(format!("component {k} is outside the x2 partition of size {p}")));
    }
    let psi0 = goal.value(x, t);
    let alpha0 = parm.alpha(x, t);
    for j in (0..p).filter(|&j| j != k) {
        let h = 1e-3 * x[q + j].abs().max(1.0);
        for offset in [h, -h] {
            let mut probe = x.clone();
            probe[q + j] += offset;
            let change = (goal.value(&probe, t) - psi0).abs().max((parm.alpha(&probe, t) - &alpha0).amax());
            if change > DEPENDENCE_TOL {
                return Err(Error::DependenceViolation { component: j, magnitude: change });
            }
        }
    }
    let at = |s: f64| {
        let mut v = x.clone();
        v[q + k] = s;
        v
    };
    let mut out = DVector::zeros(parm.d);
    for i in 0..parm.d {
        let integrand = |s: f64| {
            let v = at(s);
            let dalpha = numdiff::derivative(|r| parm.alpha(&at(r), t)[i], s);
            goal.value(&v, t) * dalpha
        };
        out[i] = adaptive_simpson(&integrand, 0.0, x[q + k], QUADRATURE_TOL);
    }
    Ok(out)
}

/// One row of [`empirical_gain`].
#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub psi0: f64,
    pub zeta_index: usize,
    pub zeta_l2: f64,
    /// `‖ψ‖∞` over the horizon; `None` when the run diverged.
    pub psi_inf: Option<f64>,
}

impl GainRow {
    pub fn diverged(&self) -> bool {
        self.psi_inf.is_none()
    }
}

/// Horizon and discretization of [`empirical_gain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSetup {
    pub tf: f64,
    pub h: f64,
    pub divergence_cap: f64,
}

impl Default for GainSetup {
    fn default() -> Self {
        Self { tf: 30.0, h: integrate::DEFAULT_STEP, divergence_cap: DEFAULT_DIVERGENCE_CAP }
    }
}

/// Simulates `ψ̇ = −φ(ψ,ω,t) + ζ(t)` for every `(ψ₀, ζ)` and tabulates `‖ζ‖₂ → ‖ψ‖∞`.
pub fn empirical_gain(target: &TargetDynamics, zeta_bank: &[TimeSignal], psi0_grid: &[f64], setup: GainSetup) -> Result<Vec<GainRow>> {
    let jobs: Vec<(usize, f64)> = (0..zeta_bank.len()).flat_map(|z| psi0_grid.iter().map(move |&p| (z, p))).collect();
    jobs.par_iter()
        .map(|&(zi, psi0)| {
            let zeta = &zeta_bank[zi];
            let mut sys = FnDynamics {
                q: 0,
                n: 2,
                f: |t: f64, y: &[f64], dy: &mut [f64]| {
                    let z = zeta(t);
                    dy[0] = -target.eval(y[0], t) + z;
                    dy[1] = z * z;
                },
            };
            let mut cfg = SimConfig::new(0.0, setup.tf, setup.h);
            cfg.divergence_cap = setup.divergence_cap;
            match integrate::simulate(&mut sys, &[psi0, 0.0], &cfg) {
                Ok(trace) => {
                    let x = trace.channel("x")?;
                    let psi_inf = x.rows().map(|r| r[0].abs()).fold(0.0, f64::max);
                    let zeta_l2 = x.row(trace.len() - 1)[1].max(0.0).sqrt();
                    Ok(GainRow { psi0, zeta_index: zi, zeta_l2, psi_inf: Some(psi_inf) })
                }
                Err(Error::Diverged { .. }) | Err(Error::NonFiniteDerivative { .. }) => {
                    let zeta_l2 = zeta_l2_quadrature(zeta, setup);
                    Ok(GainRow { psi0, zeta_index: zi, zeta_l2, psi_inf: None })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn zeta_l2_quadrature(zeta: &TimeSignal, setup: GainSetup) -> f64 {
    adaptive_simpson(&|t: f64| zeta(t).powi(2), 0.0, setup.tf, 1e-10).sqrt()
}

/// `‖channel‖∞` over a whole trace, as used by the empirical state bounds.
pub fn sup_norm(trace: &integrate::Trace, channel: &str) -> Result<f64> {
    integrate::signal_norm(trace, channel, Norm::Inf, (trace.start(), trace.end()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn linear_parm(scale: f64) -> Parametrization {
        Parametrization::new(
            2,
            1,
            Arc::new(move |x: &DVector<f64>, th: &DVector<f64>, _| scale * (x[0] * th[0] + x[1] * th[1])),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[0], x[1]])),
            scale,
            scale,
        )
        .unwrap()
    }

    #[test]
    fn growth_bounds_of_linear_maps() {
        let xs = box_grid(&[-1.0, -1.0], &[1.0, 1.0], 5);
        let pairs = ordered_pairs(&box_grid(&[-1.0, -1.0], &[1.0, 1.0], 3));
        for scale in [1.0, 2.0] {
            let gb = estimate_growth_bounds(&linear_parm(scale), &xs, &pairs, 0.0).unwrap();
            assert!((gb.upper - scale).abs() < 1e-12 && (gb.lower - scale).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_grid() {
        let xs = vec![dv(&[0.0, 0.0])];
        let pairs = ordered_pairs(&box_grid(&[-1.0, -1.0], &[1.0, 1.0], 3));
        assert!(matches!(estimate_growth_bounds(&linear_parm(1.0), &xs, &pairs, 0.0), Err(Error::DegenerateGrid)));
    }

    #[test]
    fn equal_parameters_never_violate() {
        let parm = linear_parm(1.0);
        let xs = box_grid(&[-1.0, -1.0], &[1.0, 1.0], 4);
        let pts = box_grid(&[-1.0, -1.0], &[1.0, 1.0], 4);
        let pairs: Vec<_> = pts.iter().map(|p| (p.clone(), p.clone())).collect();
        let r = check_monotonicity(&parm, &xs, &pairs, 0.0);
        assert!(r.passed());
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn poincare_counterexample() {
        // ψ = x2_0·x2_1, α = x2_0: M = [[x2_1, x2_0], [0, 0]]
        let goal = GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[0] * x[1]));
        let parm = Parametrization::new(
            1,
            2,
            Arc::new(|_: &DVector<f64>, _: &DVector<f64>, _| 0.0),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[0]])),
            1.0,
            1.0,
        )
        .unwrap();
        let asym = poincare_check(&parm, &goal, 0, &[dv(&[0.7, 0.3])], 0.0);
        assert!((asym - 0.7).abs() < 1e-5, "{asym}");
    }

    #[test]
    fn poincare_single_component_is_symmetric() {
        let goal = GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[0] + x[1] * x[1]));
        let parm = Parametrization::new(
            1,
            1,
            Arc::new(|_: &DVector<f64>, _: &DVector<f64>, _| 0.0),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[1] * x[1].abs()])),
            1.0,
            1.0,
        )
        .unwrap();
        let grid = box_grid(&[-1.0, -1.0], &[1.0, 1.0], 5);
        assert!(poincare_check(&parm, &goal, 1, &grid, 0.0) < 1e-6);
    }

    #[test]
    fn quadrature_square_integral() {
        let goal = GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[0]));
        let parm = Parametrization::new(
            1,
            1,
            Arc::new(|_: &DVector<f64>, _: &DVector<f64>, _| 0.0),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[0]])),
            1.0,
            1.0,
        )
        .unwrap();
        let v = psi_by_quadrature(&parm, &goal, 0, 0, &dv(&[1.7]), 0.0).unwrap();
        assert!((v[0] - 1.7f64.powi(2) / 2.0).abs() < 1e-8);
    }

    #[test]
    fn quadrature_of_constant_alpha_is_zero() {
        let goal = GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[0].sin()));
        let parm = Parametrization::new(
            1,
            1,
            Arc::new(|_: &DVector<f64>, _: &DVector<f64>, _| 0.0),
            Arc::new(|_: &DVector<f64>, _| dv(&[2.0])),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(psi_by_quadrature(&parm, &goal, 0, 0, &dv(&[0.9]), 0.0).unwrap()[0], 0.0);
    }

    #[test]
    fn quadrature_rejects_coupled_dependence() {
        let goal = GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[0] * x[1]));
        let parm = Parametrization::new(
            1,
            2,
            Arc::new(|_: &DVector<f64>, _: &DVector<f64>, _| 0.0),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[0]])),
            1.0,
            1.0,
        )
        .unwrap();
        let err = psi_by_quadrature(&parm, &goal, 0, 0, &dv(&[0.5, 0.5]), 0.0).unwrap_err();
        assert!(matches!(err, Error::DependenceViolation { component: 1, .. }));
    }

    #[test]
    fn quadrature_output_is_realizable() {
        // ψ = x1 + x2, α = x2|x2|  (two-state spring-like pattern)
        let goal = GoalFunction::new(Arc::new(|x: &DVector<f64>, _| x[0] + x[1]));
        let parm = Parametrization::new(
            1,
            1,
            Arc::new(|_: &DVector<f64>, _: &DVector<f64>, _| 0.0),
            Arc::new(|x: &DVector<f64>, _| dv(&[x[1] * x[1].abs()])),
            1.0,
            1.0,
        )
        .unwrap();
        let base = parm.clone();
        let g2 = goal.clone();
        let parm = parm.with_compensator(Arc::new(move |x: &DVector<f64>, t| psi_by_quadrature(&base, &g2, 1, 0, x, t).unwrap()));
        for x in box_grid(&[-1.0, -1.0], &[1.0, 1.0], 5) {
            let r = realizability_residual(&parm, &goal, 1, &x, 0.0);
            assert!(r.amax() < 1e-4, "{x:?} {r}");
        }
    }

    #[test]
    fn gain_examples() {
        let stable = TargetDynamics::linear(1.0);
        let zero: TimeSignal = Arc::new(|_| 0.0);
        let decay: TimeSignal = Arc::new(|t: f64| (-t).exp());
        let setup = GainSetup { tf: 10.0, ..GainSetup::default() };
        let rows = empirical_gain(&stable, &[zero.clone(), decay], &[0.0, 0.5], setup).unwrap();
        assert_eq!(rows[0].psi_inf, Some(0.0));
        assert!((rows[1].psi_inf.unwrap() - 0.5).abs() < 1e-12);
        let expected_l2 = (0.5 * (1.0 - (-20.0f64).exp())).sqrt();
        assert!((rows[2].zeta_l2 - expected_l2).abs() < 1e-6);
        assert!(rows[2].psi_inf.unwrap() <= rows[2].zeta_l2);

        let unstable = TargetDynamics::linear(-1.0);
        let rows = empirical_gain(&unstable, &[zero], &[1.0], GainSetup::default()).unwrap();
        assert!(rows[0].diverged());
    }
}
