//! Fixed-step RK4 integration, trace recording and signal norms.
//!
//! Every closed loop in the crate is integrated through [`simulate`]: the
//! integrated vector is the plant state (`x1 ⊕ x2`) followed by whatever
//! auxiliary states the loop needs (integral estimator, observer, distance).
//! Observers write named channels once per accepted step, so a [`Trace`]
//! always has one row per time sample in every channel.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Default time step (s).
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default magnitude at which a run is declared divergent.
pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e12;

/// Plant state split into uncertainty-independent (`x1`) and
/// uncertainty-dependent (`x2`) partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub t: f64,
}

impl SystemState {
    pub fn new(x1: DVector<f64>, x2: DVector<f64>, t: f64) -> Result<Self> {
        if x2.is_empty() {
            return Err(Error::InvalidArgument("x2 partition must be non-empty".into()));
        }
        if !x1.iter().chain(x2.iter()).all(|v| v.is_finite()) || !t.is_finite() {
            return Err(Error::InvalidArgument("state entries must be finite".into()));
        }
        Ok(Self { x1, x2, t })
    }

    /// Splits a concatenated state `x = x1 ⊕ x2` with `dim(x1) = q`.
    pub fn from_concat(x: &[f64], q: usize, t: f64) -> Self {
        Self { x1: DVector::from_column_slice(&x[..q]), x2: DVector::from_column_slice(&x[q..]), t }
    }

    pub fn q(&self) -> usize {
        self.x1.len()
    }

    pub fn p(&self) -> usize {
        self.x2.len()
    }

    pub fn n(&self) -> usize {
        self.q() + self.p()
    }

    /// Concatenated state vector.
    pub fn x(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.x1.iter().chain(self.x2.iter()).copied())
    }
}

/// One named signal stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    width: usize,
    data: Vec<f64>,
}

impl Channel {
    pub fn new(width: usize) -> Self {
        Self { width, data: Vec::new() }
    }

    pub fn from_rows(width: usize, data: Vec<f64>) -> Self {
        assert!(width > 0 && data.len().is_multiple_of(width), "ragged channel data");
        Self { width, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width)
    }

    /// First component of every row.
    pub fn scalar(&self, i: usize) -> f64 {
        self.data[i * self.width]
    }

    fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.width);
        self.data.extend_from_slice(values);
    }
}

/// Why a run ended early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopEvent {
    pub rule: usize,
    pub t: f64,
    pub value: f64,
}

/// Time-indexed record of a run.
///
/// The plant state is stored in the channel `"x"`; other channels are
/// whatever the integrated system's observer wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    times: Vec<f64>,
    q: usize,
    channels: BTreeMap<String, Channel>,
    order: Vec<String>,
    stop: Option<StopEvent>,
}

impl Trace {
    pub fn new(q: usize) -> Self {
        Self { times: Vec::new(), q, channels: BTreeMap::new(), order: Vec::new(), stop: None }
    }

    /// Builds a trace from pre-computed samples (tests, CSV re-import).
    pub fn from_channels(q: usize, times: Vec<f64>, channels: Vec<(String, Channel)>) -> Result<Self> {
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("trace times must be strictly increasing".into()));
        }
        let mut trace = Self::new(q);
        trace.times = times;
        for (name, ch) in channels {
            trace.add_channel(&name, ch)?;
        }
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn start(&self) -> f64 {
        self.times.first().copied().unwrap_or(f64::NAN)
    }

    pub fn end(&self) -> f64 {
        self.times.last().copied().unwrap_or(f64::NAN)
    }

    /// Marks the trace as ended by a stop rule.
    pub fn set_stop_event(&mut self, event: StopEvent) {
        self.stop = Some(event);
    }

    pub fn stop_event(&self) -> Option<StopEvent> {
        self.stop
    }

    pub fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels.get(name).ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.contains_key(name)
    }

    /// Channel names in insertion order.
    pub fn channel_names(&self) -> &[String] {
        &self.order
    }

    pub fn state(&self, i: usize) -> SystemState {
        let x = self.channels.get("x").expect("trace without state channel");
        SystemState::from_concat(x.row(i), self.q, self.times[i])
    }

    /// Appends a new channel computed after the run. Existing channels are never replaced.
    pub fn add_channel(&mut self, name: &str, channel: Channel) -> Result<()> {
        if self.channels.contains_key(name) {
            return Err(Error::InvalidArgument(format!("channel `{name}` already exists")));
        }
        if channel.len() != self.times.len() {
            return Err(Error::InvalidArgument(format!("channel `{name}` has {} rows, trace has {}", channel.len(), self.times.len())));
        }
        self.order.push(name.to_string());
        self.channels.insert(name.to_string(), channel);
        Ok(())
    }

    fn push_row(&mut self, t: f64, record: &Record) -> Result<()> {
        if self.times.is_empty() {
            for (name, values) in &record.entries {
                if !self.channels.contains_key(*name) {
                    self.order.push(name.to_string());
                    self.channels.insert(name.to_string(), Channel::new(values.len()));
                }
            }
        }
        if record.entries.len() != self.channels.len() {
            return Err(Error::InvalidArgument("observer changed its channel set mid-run".into()));
        }
        for (name, values) in &record.entries {
            let ch = self.channels.get_mut(*name).ok_or_else(|| Error::UnknownChannel(name.to_string()))?;
            if ch.width != values.len() {
                return Err(Error::InvalidArgument(format!("channel `{name}` changed width")));
            }
            ch.push(values);
        }
        self.times.push(t);
        Ok(())
    }
}

/// Per-step observation buffer filled by [`Dynamics::observe`].
#[derive(Debug, Default)]
pub struct Record {
    entries: Vec<(&'static str, Vec<f64>)>,
}

impl Record {
    pub fn set(&mut self, name: &'static str, values: &[f64]) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => {
                v.clear();
                v.extend_from_slice(values);
            }
            None => self.entries.push((name, values.to_vec())),
        }
    }

    pub fn scalar(&mut self, name: &'static str, value: f64) {
        self.set(name, &[value]);
    }

    fn clear(&mut self) {
        self.entries.clear();
    }
}

/// A system integrated by [`simulate`].
///
/// The first `q + p` components of the integrated vector are the plant state.
pub trait Dynamics {
    /// `(q, p)`: sizes of the plant partitions.
    fn layout(&self) -> (usize, usize);

    /// Length of the integrated vector (plant plus auxiliary states).
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Called once before every step; sample-and-hold quantities are refreshed here.
    fn begin_step(&mut self, _t: f64, _y: &[f64]) -> Result<()> {
        Ok(())
    }

    fn observe(&self, _t: f64, _y: &[f64], _rec: &mut Record) -> Result<()> {
        Ok(())
    }
}

/// Plain vector field with no auxiliary channels.
pub struct FnDynamics<F> {
    pub q: usize,
    pub n: usize,
    pub f: F,
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn layout(&self) -> (usize, usize) {
        (self.q, self.n - self.q)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy);
        Ok(())
    }
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<F>(rhs: F, y: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let finite = |k: &[f64]| k.iter().all(|v| v.is_finite());

    rhs(t, y, &mut k1)?;
    if !finite(&k1) {
        return Err(Error::NonFiniteDerivative { t });
    }
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(t + 0.5 * h, &tmp, &mut k2)?;
    if !finite(&k2) {
        return Err(Error::NonFiniteDerivative { t: t + 0.5 * h });
    }
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(t + 0.5 * h, &tmp, &mut k3)?;
    if !finite(&k3) {
        return Err(Error::NonFiniteDerivative { t: t + 0.5 * h });
    }
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(t + h, &tmp, &mut k4)?;
    if !finite(&k4) {
        return Err(Error::NonFiniteDerivative { t: t + h });
    }
    Ok((0..n).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Less,
    LessEq,
    Greater,
    GreaterEq,
}

impl Comparator {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Less => value < threshold,
            Comparator::LessEq => value <= threshold,
            Comparator::Greater => value > threshold,
            Comparator::GreaterEq => value >= threshold,
        }
    }
}

/// Threshold rule on one component of the concatenated plant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub component: usize,
    pub cmp: Comparator,
    pub threshold: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StopCondition {
    pub rules: Vec<StopRule>,
}

impl StopCondition {
    pub fn never() -> Self {
        Self::default()
    }

    pub fn when(component: usize, cmp: Comparator, threshold: f64) -> Self {
        Self { rules: vec![StopRule { component, cmp, threshold }] }
    }

    /// Index of the first rule that fires on `x`.
    pub fn first_firing(&self, x: &[f64]) -> Option<usize> {
        self.rules.iter().position(|r| r.cmp.holds(x[r.component], r.threshold))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t0: f64,
    pub tf: f64,
    pub h: f64,
    pub stop: StopCondition,
    pub divergence_cap: f64,
    /// RK4 sub-steps of `h / substeps` per recorded step.
    pub substeps: usize,
}

impl SimConfig {
    pub fn new(t0: f64, tf: f64, h: f64) -> Self {
        Self { t0, tf, h, stop: StopCondition::never(), divergence_cap: DEFAULT_DIVERGENCE_CAP, substeps: 1 }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn with_stop(mut self, stop: StopCondition) -> Self {
        self.stop = stop;
        self
    }

    /// Number of whole steps that fit in `[t0, tf]`.
    pub fn steps(&self) -> usize {
        let ratio = (self.tf - self.t0) / self.h;
        let nearest = ratio.round();
        if (ratio - nearest).abs() < 1e-6 {
            nearest as usize
        } else {
            ratio.floor() as usize
        }
    }
}

/// Integrates `sys` from `y0` on the fixed grid `t0 + k·h`, recording every step.
pub fn simulate<D: Dynamics + ?Sized>(sys: &mut D, y0: &[f64], cfg: &SimConfig) -> Result<Trace> {
    if !(cfg.tf > cfg.t0) {
        return Err(Error::InvalidArgument(format!("tf = {} must exceed t0 = {}", cfg.tf, cfg.t0)));
    }
    if !(cfg.h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {}", cfg.h)));
    }
    if y0.len() != sys.dim() {
        return Err(Error::InvalidArgument(format!("initial vector has {} entries, system expects {}", y0.len(), sys.dim())));
    }
    let (q, p) = sys.layout();
    let n = q + p;
    let mut trace = Trace::new(q);
    let mut rec = Record::default();
    let mut y = y0.to_vec();
    let mut t = cfg.t0;

    let record = |sys: &D, t: f64, y: &[f64], rec: &mut Record, trace: &mut Trace| -> Result<()> {
        rec.clear();
        rec.set("x", &y[..n]);
        sys.observe(t, y, rec)?;
        trace.push_row(t, rec)
    };

    record(sys, t, &y, &mut rec, &mut trace)?;
    if let Some(rule) = cfg.stop.first_firing(&y[..n]) {
        let component = cfg.stop.rules[rule].component;
        trace.stop = Some(StopEvent { rule, t, value: y[component] });
        return Ok(trace);
    }

    for k in 1..=cfg.steps() {
        sys.begin_step(t, &y)?;
        let sys_ref: &D = sys;
        let hs = cfg.h / cfg.substeps as f64;
        for j in 0..cfg.substeps {
            y = rk4_step(|tt, yy, dy| sys_ref.rhs(tt, yy, dy), &y, t + j as f64 * hs, hs)?;
        }
        t = cfg.t0 + k as f64 * cfg.h;
        for (component, &value) in y.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteDerivative { t });
            }
            if value.abs() > cfg.divergence_cap {
                return Err(Error::Diverged { t, component, value });
            }
        }
        record(sys, t, &y, &mut rec, &mut trace)?;
        if let Some(rule) = cfg.stop.first_firing(&y[..n]) {
            let component = cfg.stop.rules[rule].component;
            trace.stop = Some(StopEvent { rule, t, value: y[component] });
            break;
        }
    }
    Ok(trace)
}

/// Which functional norm [`signal_norm`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    Inf,
}

fn window_tolerance(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

fn check_window(times: &[f64], ta: f64, tb: f64) -> Result<()> {
    if times.is_empty() || !(tb > ta) {
        return Err(Error::EmptyWindow { ta, tb });
    }
    let (start, end) = (times[0], times[times.len() - 1]);
    if ta < start - window_tolerance(start) || tb > end + window_tolerance(end) {
        return Err(Error::WindowOutOfRange { ta, tb, start, end });
    }
    Ok(())
}

/// Trapezoid integral of a `width`-valued sampled integrand over `[ta, tb]`.
///
/// Window edges that fall between samples are handled by linear interpolation
/// of the integrand, so the rule stays second-order for any window.
pub fn integrate_window<F>(times: &[f64], ta: f64, tb: f64, width: usize, integrand: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut [f64]),
{
    check_window(times, ta, tb)?;
    let ta = ta.max(times[0]);
    let tb = tb.min(times[times.len() - 1]);
    let tol_a = window_tolerance(ta);
    let tol_b = window_tolerance(tb);
    let first = times.partition_point(|&t| t < ta - tol_a);
    let last_excl = times.partition_point(|&t| t <= tb + tol_b);

    let eval = |i: usize| {
        let mut v = vec![0.0; width];
        integrand(i, &mut v);
        v
    };
    let interp = |t: f64| -> Vec<f64> {
        let j = times.partition_point(|&s| s < t).clamp(1, times.len() - 1);
        let (t0, t1) = (times[j - 1], times[j]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (eval(j - 1), eval(j));
        a.iter().zip(&b).map(|(u, v)| u + w * (v - u)).collect()
    };

    let mut nodes: Vec<(f64, Vec<f64>)> = Vec::with_capacity(last_excl.saturating_sub(first) + 2);
    if first >= times.len() || (times[first] - ta).abs() > tol_a {
        nodes.push((ta, interp(ta)));
    }
    nodes.extend((first..last_excl).map(|i| (times[i], eval(i))));
    if nodes.last().is_none_or(|(t, _)| (t - tb).abs() > tol_b) {
        nodes.push((tb, interp(tb)));
    }

    let mut acc = vec![0.0; width];
    for pair in nodes.windows(2) {
        let dt = pair[1].0 - pair[0].0;
        for (k, a) in acc.iter_mut().enumerate() {
            *a += 0.5 * dt * (pair[0].1[k] + pair[1].1[k]);
        }
    }
    Ok(acc)
}

/// `‖·‖_{2,[ta,tb]}` or `‖·‖_{∞,[ta,tb]}` of a trace channel (Euclidean norm per sample).
pub fn signal_norm(trace: &Trace, channel: &str, norm: Norm, window: (f64, f64)) -> Result<f64> {
    let ch = trace.channel(channel)?;
    let (ta, tb) = window;
    let times = trace.times();
    match norm {
        Norm::L2 => {
            let sq = integrate_window(times, ta, tb, 1, |i, out| {
                out[0] = ch.row(i).iter().map(|v| v * v).sum();
            })?;
            Ok(sq[0].max(0.0).sqrt())
        }
        Norm::Inf => {
            check_window(times, ta, tb)?;
            let lo = times.partition_point(|&t| t < ta - window_tolerance(ta));
            let hi = times.partition_point(|&t| t <= tb + window_tolerance(tb));
            if lo >= hi {
                return Err(Error::EmptyWindow { ta, tb });
            }
            Ok((lo..hi).map(|i| ch.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn decay() -> FnDynamics<impl Fn(f64, &[f64], &mut [f64])> {
        FnDynamics { q: 0, n: 1, f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0] }
    }

    #[test]
    fn rk4_single_step_matches_exponential() {
        let y = rk4_step(
            |_, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            &[1.0],
            0.0,
            0.1,
        )
        .unwrap();
        assert_abs_diff_eq!(y[0], (-0.1f64).exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(y[0], 0.9048375, epsilon = 1e-7);
    }

    #[test]
    fn rk4_identity_and_polynomial_cases() {
        let c = rk4_step(
            |_, _, dy| {
                dy[0] = 0.0;
                Ok(())
            },
            &[3.25],
            1.0,
            0.7,
        )
        .unwrap();
        assert_eq!(c[0], 3.25);
        let lin = rk4_step(
            |_, _, dy| {
                dy[0] = 1.0;
                Ok(())
            },
            &[0.0],
            0.0,
            0.5,
        )
        .unwrap();
        assert_eq!(lin[0], 0.5);
    }

    #[test]
    fn rk4_flags_non_finite_stage() {
        let err = rk4_step(
            |_, y, dy| {
                dy[0] = 1.0 / (y[0] - 1.0);
                Ok(())
            },
            &[1.0],
            0.0,
            0.1,
        );
        assert!(matches!(err, Err(Error::NonFiniteDerivative { .. })));
    }

    #[test]
    fn simulate_exponential_decay() {
        let trace = simulate(&mut decay(), &[1.0], &SimConfig::new(0.0, 1.0, 1e-3)).unwrap();
        assert_eq!(trace.len(), 1001);
        assert_abs_diff_eq!(trace.end(), 1.0, epsilon = 1e-12);
        let last = trace.channel("x").unwrap().scalar(trace.len() - 1);
        assert!((last - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn stop_at_initial_time_gives_single_sample() {
        let cfg = SimConfig::new(0.0, 1.0, 1e-2).with_stop(StopCondition::when(0, Comparator::LessEq, 2.0));
        let trace = simulate(&mut decay(), &[1.0], &cfg).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.stop_event().unwrap().t, 0.0);
    }

    #[test]
    fn stop_rule_ends_run_on_crossing_step() {
        let cfg = SimConfig::new(0.0, 10.0, 1e-3).with_stop(StopCondition::when(0, Comparator::LessEq, 0.5));
        let trace = simulate(&mut decay(), &[1.0], &cfg).unwrap();
        let x = trace.channel("x").unwrap();
        let last = x.scalar(trace.len() - 1);
        assert!(last <= 0.5 && last > 0.5 - 1e-3);
        assert!(x.scalar(trace.len() - 2) > 0.5);
    }

    #[test]
    fn divergence_is_reported() {
        let mut growth = FnDynamics { q: 0, n: 1, f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = 10.0 * y[0] };
        let err = simulate(&mut growth, &[1.0], &SimConfig::new(0.0, 10.0, 1e-2)).unwrap_err();
        assert!(matches!(err, Error::Diverged { component: 0, .. }));
    }

    #[test]
    fn fourth_order_convergence() {
        // y' = -y + sin t against a Richardson-extrapolated reference
        let run = |h: f64| {
            let mut sys = FnDynamics { q: 0, n: 1, f: |t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0] + t.sin() };
            let tr = simulate(&mut sys, &[0.3], &SimConfig::new(0.0, 2.0, h)).unwrap();
            tr.channel("x").unwrap().scalar(tr.len() - 1)
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let reference = c + (c - b) / 15.0;
        let ratio = (a - reference).abs() / (b - reference).abs();
        assert!(ratio >= 12.0, "ratio {ratio}");
    }

    #[test]
    fn deterministic_reruns() {
        let cfg = SimConfig::new(0.0, 3.0, 1e-3);
        let a = simulate(&mut decay(), &[1.0], &cfg).unwrap();
        let b = simulate(&mut decay(), &[1.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    fn sampled(f: impl Fn(f64) -> f64, t_end: f64, h: f64) -> Trace {
        let n = (t_end / h).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let vals: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        Trace::from_channels(0, times, vec![("s".to_string(), Channel::from_rows(1, vals))]).unwrap()
    }

    #[test]
    fn norms_of_constant_and_sine() {
        let one = sampled(|_| 1.0, 1.0, 1e-3);
        assert_abs_diff_eq!(signal_norm(&one, "s", Norm::L2, (0.0, 1.0)).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(signal_norm(&one, "s", Norm::Inf, (0.0, 1.0)).unwrap(), 1.0, epsilon = 1e-12);

        let two_pi = 2.0 * std::f64::consts::PI;
        let sine = sampled(f64::sin, 7.0, 1e-3);
        let l2 = signal_norm(&sine, "s", Norm::L2, (0.0, two_pi)).unwrap();
        assert_abs_diff_eq!(l2, std::f64::consts::PI.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn norm_errors() {
        let one = sampled(|_| 1.0, 1.0, 1e-2);
        assert!(matches!(signal_norm(&one, "nope", Norm::L2, (0.0, 1.0)), Err(Error::UnknownChannel(_))));
        assert!(matches!(signal_norm(&one, "s", Norm::L2, (0.5, 0.5)), Err(Error::EmptyWindow { .. })));
        assert!(matches!(signal_norm(&one, "s", Norm::L2, (0.0, 2.0)), Err(Error::WindowOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn sup_norm_dominates_endpoints(a in -5.0f64..5.0, b in -5.0f64..5.0, w in 0.1f64..3.0) {
            let tr = sampled(|t| a * (w * t).cos() + b * t, 2.0, 1e-2);
            let sup = signal_norm(&tr, "s", Norm::Inf, (0.0, 2.0)).unwrap();
            let ch = tr.channel("s").unwrap();
            prop_assert!(sup >= ch.scalar(0).abs());
            prop_assert!(sup >= ch.scalar(tr.len() - 1).abs());
        }
    }
}
