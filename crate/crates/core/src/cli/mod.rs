//! Configuration-driven runs, sweeps and their file artifacts.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::excitation;
use crate::integrate::Trace;
use crate::scenarios::wheel;
use crate::scenarios::Scenario;
use config::{RunSpec, Settings};

/// Process exit status for a run outcome.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(Error::Config { .. }) => 2,
        Err(Error::PreflightFailed(_)) => 3,
        Err(Error::Diverged { .. } | Error::NonFiniteDerivative { .. }) => 4,
        Err(_) => 1,
    }
}

/// Excitation figures of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct PeReport {
    pub window: f64,
    pub threshold: f64,
    /// Smallest `λ_min` over all full windows (the measured δ).
    pub delta: f64,
    pub first_lambda_min: f64,
    pub windows: usize,
    pub rate: Option<excitation::RateCertificate>,
}

/// Everything a run produces besides the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub scenario: &'static str,
    pub overrides: Vec<String>,
    pub preflight: crate::scenarios::Preflight,
    pub h: f64,
    pub samples: usize,
    pub final_time: f64,
    pub terminal_error: f64,
    pub pe: Option<PeReport>,
    /// `Err` text when the excitation window does not fit the run.
    pub pe_note: Option<String>,
    pub braking_distance: Option<f64>,
}

/// Euclidean `‖θ̂ − θ‖` at the last sample.
pub fn terminal_error(trace: &Trace) -> Result<f64> {
    let th = trace.channel("theta_hat")?;
    let theta = trace.channel("theta")?;
    let k = trace.len() - 1;
    Ok(th.row(k).iter().zip(theta.row(k)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

fn analyse_pe(spec: &RunSpec, trace: &Trace) -> Result<PeReport> {
    let scan = excitation::pe_scan(trace, "alpha", spec.pe.window)?;
    let rate = if spec.pe.rate && scan.delta > 0.0 && scan.delta >= spec.pe.delta {
        let (d, d1) = spec.scenario.growth()?;
        let alpha_inf = excitation::alpha_inf_estimate(trace, "alpha")?;
        Some(excitation::convergence_rate(scan.delta, spec.pe.window, d, d1, &spec.scenario.gamma(), alpha_inf)?)
    } else {
        None
    };
    Ok(PeReport {
        window: spec.pe.window,
        threshold: spec.pe.delta,
        delta: scan.delta,
        first_lambda_min: scan.first_lambda_min,
        windows: scan.windows,
        rate,
    })
}

/// Preflight, simulation and excitation analysis of one configured run.
pub fn execute(spec: &RunSpec) -> Result<(RunOutcome, Trace)> {
    let preflight = spec.scenario.preflight()?;
    preflight.require()?;
    let trace = spec.scenario.run()?;
    let (pe, pe_note) = if spec.pe.enabled {
        match analyse_pe(spec, &trace) {
            Ok(r) => (Some(r), None),
            Err(e @ Error::InsufficientSpan { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    let braking_distance = match spec.scenario {
        Scenario::Abs(_) => Some(wheel::braking_distance(&trace)?),
        _ => None,
    };
    let outcome = RunOutcome {
        scenario: spec.scenario.name(),
        overrides: spec.overrides.clone(),
        preflight,
        h: spec.scenario.step(),
        samples: trace.len(),
        final_time: trace.end(),
        terminal_error: terminal_error(&trace)?,
        pe,
        pe_note,
        braking_distance,
    };
    Ok((outcome, trace))
}

/// Plain-text summary of a run.
pub fn summary(o: &RunOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", o.scenario);
    if o.overrides.is_empty() {
        let _ = writeln!(s, "overrides: none");
    } else {
        for ov in &o.overrides {
            let _ = writeln!(s, "override: {ov}");
        }
    }
    let _ = writeln!(s, "step h: {:.6e}", o.h);
    let _ = writeln!(s, "samples: {}", o.samples);
    let _ = writeln!(s, "final time: {:.6}", o.final_time);
    let _ = write!(s, "{}", o.preflight);
    match (&o.pe, &o.pe_note) {
        (Some(pe), _) => {
            let verdict = if pe.delta >= pe.threshold { "exciting" } else { "not exciting" };
            let _ = writeln!(s, "pe window L: {:.6e}", pe.window);
            let _ = writeln!(s, "pe delta (min lambda_min over {} windows): {:.6e}", pe.windows, pe.delta);
            let _ = writeln!(s, "pe lambda_min (first window): {:.6e}", pe.first_lambda_min);
            let _ = writeln!(s, "pe verdict: {verdict} (threshold {:.3e})", pe.threshold);
            if let Some(r) = &pe.rate {
                let _ = writeln!(
                    s,
                    "rate certificate rho: {:.6e} (D_Gamma {:.6e}, D {:.6e}, D1 {:.6e}, alpha_inf {:.6e})",
                    r.rho, r.d_gamma, r.growth_upper, r.growth_lower, r.alpha_inf
                );
            }
        }
        (None, Some(note)) => {
            let _ = writeln!(s, "pe: skipped ({note})");
        }
        (None, None) => {
            let _ = writeln!(s, "pe: disabled");
        }
    }
    let _ = writeln!(s, "terminal |theta_hat - theta|: {:.6e}", o.terminal_error);
    if let Some(d) = o.braking_distance {
        let _ = writeln!(s, "braking distance: {d:.4} m");
    }
    s
}

fn push_num(line: &mut String, v: f64) {
    let _ = write!(line, ",{v:.16e}");
}

/// Writes `t, x…, psi, u, theta_hat…, V, eps, pe_lambda_min` with one row per sample.
///
/// State columns are `x1_<i>` for the `x1` partition and `x2_<i>` for `x2`;
/// `pe_lambda_min` is blank until the first full window of length `window`.
pub fn export_csv(trace: &Trace, window: Option<f64>, path: &Path) -> Result<()> {
    let x = trace.channel("x")?;
    let psi = trace.channel("psi")?;
    let u = trace.channel("u")?;
    let th = trace.channel("theta_hat")?;
    let v = trace.channel("V")?;
    let eps = trace.channel("eps")?;
    let lambda = match window {
        Some(l) => excitation::trailing_lambda_min(trace, "alpha", l)?,
        None => vec![None; trace.len()],
    };
    let q = trace.q();
    let mut out = String::with_capacity(trace.len() * 200);
    out.push('t');
    for i in 0..x.width() {
        let _ = if i < q { write!(out, ",x1_{i}") } else { write!(out, ",x2_{}", i - q) };
    }
    out.push_str(",psi,u");
    for i in 0..th.width() {
        let _ = write!(out, ",theta_hat_{i}");
    }
    out.push_str(",V,eps,pe_lambda_min\n");
    for (k, &t) in trace.times().iter().enumerate() {
        let _ = write!(out, "{t:.16e}");
        for &xi in x.row(k) {
            push_num(&mut out, xi);
        }
        push_num(&mut out, psi.scalar(k));
        push_num(&mut out, u.scalar(k));
        for &ti in th.row(k) {
            push_num(&mut out, ti);
        }
        push_num(&mut out, v.scalar(k));
        push_num(&mut out, eps.scalar(k));
        match lambda[k] {
            Some(l) => push_num(&mut out, l),
            None => out.push(','),
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs one configuration and writes `trace.csv` and `summary.txt` into `out`.
pub fn run_scenario(spec: &RunSpec, out: &Path) -> Result<RunOutcome> {
    let (outcome, trace) = execute(spec)?;
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    export_csv(&trace, spec.pe.enabled.then_some(spec.pe.window), &out.join("trace.csv"))?;
    fs::write(out.join("summary.txt"), summary(&outcome)).map_err(|e| Error::Io(format!("summary: {e}")))?;
    Ok(outcome)
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// Braking distance for wheel runs, terminal `‖θ̂ − θ‖` otherwise.
    pub result: std::result::Result<f64, String>,
}

/// Slip targets of the fixed-slip comparison preset.
pub const FIXED_SLIP_VALUES: [&str; 7] = ["adaptive", "0.10", "0.12", "0.14", "0.16", "0.18", "0.20"];

/// Canned sweep `(scenario, axis, values)` by name.
pub fn preset(name: &str) -> Option<(&'static str, &'static str, Vec<String>)> {
    match name {
        "abs-fixed-slip" => Some(("abs", "x3_star", FIXED_SLIP_VALUES.iter().map(|s| s.to_string()).collect())),
        _ => None,
    }
}

/// Runs the configuration once per value of `axis`; rows keep the order of `values`.
pub fn sweep(settings: &Settings, scenario: &str, axis: &str, values: &[String]) -> Result<Vec<SweepRow>> {
    let (section, key) = config::resolve_key(axis, scenario)?;
    let qualified = format!("{section}.{key}");
    Ok(values
        .par_iter()
        .map(|value| {
            let result = (|| -> Result<f64> {
                let mut s = settings.clone();
                s.apply_override(&format!("{qualified}={value}"), scenario)?;
                let spec = config::build(&s, Some(scenario))?;
                spec.scenario.preflight()?.require()?;
                let trace = spec.scenario.run()?;
                match spec.scenario {
                    Scenario::Abs(_) => wheel::braking_distance(&trace),
                    _ => terminal_error(&trace),
                }
            })();
            SweepRow { value: value.clone(), result: result.map_err(|e| e.to_string()) }
        })
        .collect())
}

/// Sweep table as text.
pub fn sweep_table(scenario: &str, axis: &str, rows: &[SweepRow]) -> String {
    let metric = if scenario == "abs" { "braking_distance_m" } else { "terminal_error" };
    let mut s = format!("scenario: {scenario}\naxis: {axis}\n{axis}\t{metric}\n");
    for r in rows {
        let _ = match &r.result {
            Ok(v) => writeln!(s, "{}\t{v:.6}", r.value),
            Err(e) => writeln!(s, "{}\terror: {e}", r.value),
        };
    }
    s
}

/// Column-major CSV cells; blank cells are `None`.
pub type CsvColumns = Vec<Vec<Option<f64>>>;

/// Reads a CSV written by [`export_csv`] back into named columns.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, CsvColumns)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Io(format!("row {} has {} fields, expected {}", i + 1, fields.len(), header.len())));
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.push(if f.is_empty() {
                None
            } else {
                Some(f.parse::<f64>().map_err(|_| Error::Io(format!("row {}: `{f}` is not a number", i + 1)))?)
            });
        }
    }
    Ok((header, cols))
}

/// Column `name` of a parsed CSV as a dense vector.
pub fn csv_column(header: &[String], cols: &[Vec<Option<f64>>], name: &str) -> Result<DVector<f64>> {
    let i = header.iter().position(|h| h == name).ok_or_else(|| Error::UnknownChannel(name.to_string()))?;
    Ok(DVector::from_iterator(cols[i].len(), cols[i].iter().map(|v| v.unwrap_or(f64::NAN))))
}
