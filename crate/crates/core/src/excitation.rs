//! Persistent-excitation monitoring and the exponential convergence-rate certificate.
//!
//! A regressor α is persistently exciting with constants `(δ, L)` when
//! `∫_t^{t+L} α αᵀ dτ ≥ δ I` for every `t`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::eigen::{max_eigenvalue, min_eigenvalue};
use crate::error::{Error, Result};
use crate::integrate::{integrate_window, Trace};

/// Eigenvalues of a Gram matrix below this are round-off, not indefiniteness.
pub const PSD_TOL: f64 = 1e-10;
/// Safety inflation applied to the observed `sup ‖α‖`.
pub const ALPHA_INF_INFLATION: f64 = 1.05;

/// `∫_{ta}^{tb} α αᵀ dτ` of a trace channel by the trapezoid rule, symmetrized.
pub fn gram_window(trace: &Trace, channel: &str, window: (f64, f64)) -> Result<DMatrix<f64>> {
    let ch = trace.channel(channel)?;
    let d = ch.width();
    let flat = integrate_window(trace.times(), window.0, window.1, d * d, |i, out| {
        let a = ch.row(i);
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = a[r] * a[c];
            }
        }
    })
    .map_err(|e| match e {
        Error::EmptyWindow { ta, tb } => Error::WindowOutOfRange { ta, tb, start: trace.start(), end: trace.end() },
        other => other,
    })?;
    let m = DMatrix::from_row_slice(d, d, &flat);
    Ok((&m + m.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeVerdict {
    pub satisfied: bool,
    pub lambda_min: f64,
}

/// `λ_min(gram) ≥ δ`, boundary inclusive.
pub fn pe_verdict(gram: &DMatrix<f64>, delta: f64) -> PeVerdict {
    let lambda_min = min_eigenvalue(gram);
    PeVerdict { satisfied: lambda_min >= delta, lambda_min }
}

/// Running trapezoid integral of `α αᵀ` over the last `L` seconds of a sample stream.
#[derive(Debug, Clone)]
pub struct PEWindow {
    length: f64,
    delta: f64,
    dim: usize,
    samples: VecDeque<(f64, DVector<f64>)>,
    /// Integral from the oldest to the newest buffered sample.
    acc: DMatrix<f64>,
}

impl PEWindow {
    pub fn new(length: f64, delta: f64, dim: usize) -> Result<Self> {
        if !(length > 0.0 && delta > 0.0) {
            return Err(Error::InvalidArgument(format!("PE window needs L > 0 and δ > 0, got L = {length}, δ = {delta}")));
        }
        Ok(Self { length, delta, dim, samples: VecDeque::new(), acc: DMatrix::zeros(dim, dim) })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn segment(a: &(f64, DVector<f64>), b: &(f64, DVector<f64>)) -> DMatrix<f64> {
        (&a.1 * a.1.transpose() + &b.1 * b.1.transpose()) * (0.5 * (b.0 - a.0))
    }

    /// Appends a sample; times must increase.
    pub fn push(&mut self, t: f64, alpha: DVector<f64>) -> Result<()> {
        if alpha.len() != self.dim {
            return Err(Error::InvalidArgument("regressor dimension changed".into()));
        }
        if let Some(last) = self.samples.back() {
            if !(t > last.0) {
                return Err(Error::InvalidArgument("PE samples must have increasing times".into()));
            }
            self.acc += Self::segment(last, &(t, alpha.clone()));
        }
        self.samples.push_back((t, alpha));
        while self.samples.len() > 2 && self.samples[1].0 <= t - self.length {
            let dropped = Self::segment(&self.samples[0], &self.samples[1]);
            self.acc -= dropped;
            self.samples.pop_front();
        }
        Ok(())
    }

    /// Time covered by the buffer.
    pub fn span(&self) -> f64 {
        match (self.samples.front(), self.samples.back()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    /// Gram matrix over `[t_last − L, t_last]`, or `None` before a full window is buffered.
    pub fn gram(&self) -> Option<DMatrix<f64>> {
        if self.span() < self.length * (1.0 - 1e-12) {
            return None;
        }
        let t_end = self.samples.back()?.0;
        let ta = t_end - self.length;
        let (a, b) = (&self.samples[0], &self.samples[1]);
        // remove the part of the first segment that lies before the window start
        let w = ((ta - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
        let at_ta = &a.1 + (&b.1 - &a.1) * w;
        let head = (&a.1 * a.1.transpose() + &at_ta * at_ta.transpose()) * (0.5 * (ta - a.0).max(0.0));
        let m = &self.acc - head;
        Some((&m + m.transpose()) * 0.5)
    }

    pub fn lambda_min(&self) -> Option<f64> {
        self.gram().map(|g| min_eigenvalue(&g))
    }

    pub fn verdict(&self) -> Option<PeVerdict> {
        self.gram().map(|g| pe_verdict(&g, self.delta))
    }
}

/// `λ_min` of the trailing window at every sample of a trace channel (`None` until full).
pub fn trailing_lambda_min(trace: &Trace, channel: &str, length: f64) -> Result<Vec<Option<f64>>> {
    let ch = trace.channel(channel)?;
    let mut w = PEWindow::new(length, f64::MIN_POSITIVE, ch.width())?;
    let mut out = Vec::with_capacity(trace.len());
    for (k, &t) in trace.times().iter().enumerate() {
        w.push(t, DVector::from_column_slice(ch.row(k)))?;
        out.push(w.lambda_min());
    }
    Ok(out)
}

/// Measured excitation over all windows of a given length.
#[derive(Debug, Clone, PartialEq)]
pub struct PeScan {
    pub length: f64,
    /// Infimum of `λ_min` over all windows (the measured δ).
    pub delta: f64,
    pub windows: usize,
    /// `λ_min` of the first window, a quadrature sanity value.
    pub first_lambda_min: f64,
}

/// Smallest `λ_min` over every trailing window that fits in the trace.
pub fn pe_scan(trace: &Trace, channel: &str, length: f64) -> Result<PeScan> {
    let span = trace.end() - trace.start();
    if span < length {
        return Err(Error::InsufficientSpan { span, window: length });
    }
    let values: Vec<f64> = trailing_lambda_min(trace, channel, length)?.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::InsufficientSpan { span, window: length });
    }
    Ok(PeScan { length, delta: values.iter().copied().fold(f64::INFINITY, f64::min), windows: values.len(), first_lambda_min: values[0] })
}

/// One distance bin of [`nonlinear_pe_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBin {
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
    /// Smallest witnessed `min_window max_{t'} |f(θ1) − f(θ2)|` in the bin.
    pub raw: f64,
    /// Raw values made non-decreasing by a running minimum from the right.
    pub envelope: f64,
}

/// Empirical lower envelope of `min over windows of max_{t'∈window} |f(x,θ1,t') − f(x,θ2,t')|`
/// against `‖θ1 − θ2‖`.
///
/// `x` is read from the trace's `x` channel. Pairs at distance zero land in a
/// dedicated first bin; the remaining distances share `bins` uniform bins.
pub fn nonlinear_pe_probe<F>(
    f: F,
    trace: &Trace,
    theta_pairs: &[(DVector<f64>, DVector<f64>)],
    length: f64,
    bins: usize,
) -> Result<Vec<EnvelopeBin>>
where
    F: Fn(&DVector<f64>, &DVector<f64>, f64) -> f64 + Sync,
{
    let span = trace.end() - trace.start();
    if span < length || trace.len() < 2 {
        return Err(Error::InsufficientSpan { span, window: length });
    }
    if theta_pairs.is_empty() || bins == 0 {
        return Err(Error::DegenerateGrid);
    }
    let x = trace.channel("x")?;
    let times = trace.times();
    let states: Vec<DVector<f64>> = (0..trace.len()).map(|k| DVector::from_column_slice(x.row(k))).collect();

    let witnesses: Vec<(f64, f64)> = theta_pairs
        .par_iter()
        .map(|(a, b)| {
            let diff: Vec<f64> = states.iter().zip(times).map(|(s, &t)| (f(s, a, t) - f(s, b, t)).abs()).collect();
            ((a - b).norm(), min_of_window_max(times, &diff, length))
        })
        .collect();

    let max_dist = witnesses.iter().map(|w| w.0).fold(0.0, f64::max);
    let width = if max_dist > 0.0 { max_dist / bins as f64 } else { 1.0 };
    let mut slots: Vec<Option<(f64, f64, usize, f64)>> = vec![None; bins + 1];
    for &(dist, value) in &witnesses {
        let idx = if dist == 0.0 { 0 } else { 1 + (((dist / width).ceil() as usize).clamp(1, bins) - 1) };
        let (lo, hi) = if idx == 0 { (0.0, 0.0) } else { ((idx - 1) as f64 * width, idx as f64 * width) };
        let slot = slots[idx].get_or_insert((lo, hi, 0, f64::INFINITY));
        slot.2 += 1;
        slot.3 = slot.3.min(value);
    }
    let mut out: Vec<EnvelopeBin> =
        slots.into_iter().flatten().map(|(lo, hi, pairs, raw)| EnvelopeBin { lo, hi, pairs, raw, envelope: raw }).collect();
    let mut running = f64::INFINITY;
    for bin in out.iter_mut().rev() {
        running = running.min(bin.raw);
        bin.envelope = running;
    }
    Ok(out)
}

/// `min over t0 of max_{t ∈ [t0, t0+L]} values(t)` over windows starting at samples.
fn min_of_window_max(times: &[f64], values: &[f64], length: f64) -> f64 {
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut best = f64::INFINITY;
    let mut hi = 0usize;
    let end = times[times.len() - 1];
    for lo in 0..times.len() {
        if times[lo] + length > end + 1e-9 * end.abs().max(1.0) {
            break;
        }
        while hi < times.len() && times[hi] <= times[lo] + length + 1e-12 {
            while deque.back().is_some_and(|&j| values[j] <= values[hi]) {
                deque.pop_back();
            }
            deque.push_back(hi);
            hi += 1;
        }
        while deque.front().is_some_and(|&j| j < lo) {
            deque.pop_front();
        }
        if let Some(&j) = deque.front() {
            best = best.min(values[j]);
        }
    }
    best
}

/// Certified exponential convergence rate of the parameter error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCertificate {
    pub rho: f64,
    pub d_gamma: f64,
    pub alpha_inf: f64,
    pub delta: f64,
    pub length: f64,
    pub growth_upper: f64,
    pub growth_lower: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// `ρ = δ D₁ λ_min(Γ) / (2L(1 + λ_max(Γ)² L² D² α∞⁴))`, `D_Γ = (λ_max/λ_min)^{1/2}`.
pub fn convergence_rate(
    delta: f64,
    length: f64,
    growth_upper: f64,
    growth_lower: f64,
    gamma: &DMatrix<f64>,
    alpha_inf: f64,
) -> Result<RateCertificate> {
    crate::adapt::checked_gain_inverse(gamma)?;
    for (name, v) in [("δ", delta), ("L", length), ("D", growth_upper), ("D1", growth_lower), ("α∞", alpha_inf)] {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let lambda_min = min_eigenvalue(gamma);
    let lambda_max = max_eigenvalue(gamma);
    let rho = delta * growth_lower * lambda_min
        / (2.0 * length * (1.0 + lambda_max.powi(2) * length.powi(2) * growth_upper.powi(2) * alpha_inf.powi(4)));
    Ok(RateCertificate {
        rho,
        d_gamma: (lambda_max / lambda_min).sqrt(),
        alpha_inf,
        delta,
        length,
        growth_upper,
        growth_lower,
        lambda_min,
        lambda_max,
    })
}

/// `sup ‖α‖` over the trace, inflated by [`ALPHA_INF_INFLATION`].
pub fn alpha_inf_estimate(trace: &Trace, channel: &str) -> Result<f64> {
    let ch = trace.channel(channel)?;
    Ok(ALPHA_INF_INFLATION * ch.rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max))
}

/// Worst agreement of a run with `‖θ̂(t) − θ‖ ≤ D_Γ e^{−ρ(t−t0)} ‖θ̂(t0) − θ‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCheck {
    /// Smallest `bound − observed` over all samples.
    pub min_slack: f64,
    /// Largest `observed / bound`.
    pub worst_ratio: f64,
    pub violations: usize,
}

pub fn rate_bound_check(trace: &Trace, cert: &RateCertificate) -> Result<RateCheck> {
    let th = trace.channel("theta_hat")?;
    let theta = trace.channel("theta")?;
    let err = |k: usize| th.row(k).iter().zip(theta.row(k)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let e0 = err(0);
    let t0 = trace.start();
    let mut out = RateCheck { min_slack: f64::INFINITY, worst_ratio: 0.0, violations: 0 };
    for (k, &t) in trace.times().iter().enumerate() {
        let bound = cert.d_gamma * (-cert.rho * (t - t0)).exp() * e0;
        let e = err(k);
        out.min_slack = out.min_slack.min(bound - e);
        if bound > 0.0 {
            out.worst_ratio = out.worst_ratio.max(e / bound);
        }
        if e > bound {
            out.violations += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::Channel;
    use std::f64::consts::PI;

    fn trace_of(width: usize, tf: f64, h: f64, f: impl Fn(f64) -> Vec<f64>) -> Trace {
        let n = (tf / h).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let data: Vec<f64> = times.iter().flat_map(|&t| f(t)).collect();
        Trace::from_channels(0, times, vec![("alpha".into(), Channel::from_rows(width, data))]).unwrap()
    }

    #[test]
    fn gram_of_sine_cosine() {
        let tr = trace_of(2, 7.0, 1e-3, |t| vec![t.sin(), t.cos()]);
        let g = gram_window(&tr, "alpha", (0.0, 2.0 * PI)).unwrap();
        assert!((g[(0, 0)] - PI).abs() < 1e-5 && (g[(1, 1)] - PI).abs() < 1e-5 && g[(0, 1)].abs() < 1e-5);
        let v = pe_verdict(&g, 1.0);
        assert!(v.satisfied && (v.lambda_min - PI).abs() < 1e-4);
    }

    #[test]
    fn gram_of_zero_and_rank_one() {
        let tr = trace_of(2, 2.0, 1e-3, |_| vec![0.0, 0.0]);
        assert_eq!(gram_window(&tr, "alpha", (0.0, 1.0)).unwrap().amax(), 0.0);
        let tr = trace_of(2, 2.0, 1e-3, |_| vec![1.0, 1.0]);
        let g = gram_window(&tr, "alpha", (0.0, 1.0)).unwrap();
        assert!((g - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-12);
        let v = pe_verdict(&gram_window(&tr, "alpha", (0.0, 1.0)).unwrap(), 0.1);
        assert!(!v.satisfied && v.lambda_min.abs() < 1e-12);
    }

    #[test]
    fn window_out_of_range() {
        let tr = trace_of(1, 1.0, 0.1, |_| vec![1.0]);
        assert!(matches!(gram_window(&tr, "alpha", (0.5, 2.0)), Err(Error::WindowOutOfRange { .. })));
    }

    #[test]
    fn verdict_boundary_is_inclusive() {
        let g = DMatrix::identity(2, 2) * 0.5;
        assert!(pe_verdict(&g, 0.5).satisfied);
    }

    #[test]
    fn streaming_window_matches_batch() {
        let tr = trace_of(2, 10.0, 1e-2, |t| vec![t.sin(), (2.0 * t).cos()]);
        let ch = tr.channel("alpha").unwrap();
        let mut w = PEWindow::new(3.3, 1.0, 2).unwrap();
        for (k, &t) in tr.times().iter().enumerate() {
            w.push(t, DVector::from_column_slice(ch.row(k))).unwrap();
            if t >= 3.3 {
                let batch = gram_window(&tr, "alpha", (t - 3.3, t)).unwrap();
                assert!((w.gram().unwrap() - batch).amax() < 1e-10, "t = {t}");
            } else {
                assert!(w.gram().is_none());
            }
        }
    }

    #[test]
    fn rate_reference_value() {
        let c = convergence_rate(PI, 2.0 * PI, 1.0, 1.0, &DMatrix::identity(2, 2), 1.0).unwrap();
        let expected = PI / (4.0 * PI * (1.0 + 4.0 * PI * PI));
        assert!((c.rho - expected).abs() < 1e-15);
        assert!((c.rho - 6.177e-3).abs() < 1e-6);
        assert_eq!(c.d_gamma, 1.0);
    }

    #[test]
    fn rate_under_gain_scaling() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let base = convergence_rate(1.0, 2.0, 1.5, 1.0, &g, 1.2).unwrap();
        let scaled = convergence_rate(1.0, 2.0, 1.5, 1.0, &(&g * 3.0), 1.2).unwrap();
        assert!((scaled.lambda_min - 3.0 * base.lambda_min).abs() < 1e-12);
        let direct = 1.0 * 1.0 * scaled.lambda_min / (2.0 * 2.0 * (1.0 + scaled.lambda_max.powi(2) * 4.0 * 2.25 * 1.2f64.powi(4)));
        assert!((scaled.rho - direct).abs() < 1e-15);
        assert!((scaled.d_gamma - base.d_gamma).abs() < 1e-12);
    }

    #[test]
    fn window_max_min() {
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let values = vec![5.0, 1.0, 1.0, 1.0, 9.0, 1.0, 1.0, 1.0, 1.0, 7.0];
        // windows of length 2 cover 3 samples; [5..8] gives max 1
        assert_eq!(min_of_window_max(&times, &values, 2.0), 1.0);
        assert_eq!(min_of_window_max(&times, &values, 4.0), 7.0);
    }
}
