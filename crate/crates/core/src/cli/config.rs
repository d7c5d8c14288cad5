//! Sectioned `key = value` configuration and its schema.
//!
//! ```text
//! [scenario]
//! name = spring
//!
//! [run]
//! h = 1e-3
//! tf = 20
//!
//! [spring]
//! lambda = 1.0
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored, as is a `#` or
//! `;` comment after whitespace. Later assignments of the same key win.
//! Command-line overrides accept either
//! `section.key=value` or a bare `key=value`, which resolves to the active
//! scenario's section first, then `run`, `pe` and `scenario`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scenarios::lugre::RoadProfile;
use crate::scenarios::sine::OmegaM;
use crate::scenarios::wheel::SlipTarget;
use crate::scenarios::{Scenario, NAMES};

/// Recognised sections and their keys.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("scenario", &["name"]),
    ("run", &["h", "tf"]),
    ("pe", &["enabled", "window", "delta", "rate"]),
    ("spring", &["lambda", "k0", "theta", "theta_hat0", "gamma", "x1_0", "x2_0", "phi_rate", "eps_amplitude", "theta_bound"]),
    (
        "sine",
        &[
            "lambda",
            "theta",
            "theta_hat0",
            "theta_lo",
            "theta_hi",
            "gamma",
            "amplitude",
            "x1_0",
            "x2_0",
            "phi_rate",
            "eps_amplitude",
            "omega",
        ],
    ),
    (
        "abs",
        &[
            "gamma",
            "x1_0",
            "theta_hat0",
            "x3_star",
            "substeps",
            "eps_amplitude",
            "road_breakpoints",
            "road_values",
            "sigma0",
            "l_patch",
            "mu_c",
            "mu_s",
            "vs",
            "r",
            "m",
            "j",
            "fn_load",
            "ks",
        ],
    ),
    ("linear", &["theta", "theta_hat0", "gamma", "z0", "y0", "phi_rate", "eps_amplitude", "theta_bound"]),
];

fn keys_of(section: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k)
}

/// Drops a trailing `;` or `#` comment that follows whitespace.
fn strip_inline_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    (1..bytes.len()).find(|&i| matches!(bytes[i], b';' | b'#') && bytes[i - 1].is_ascii_whitespace()).map_or(line, |i| &line[..i])
}

fn config_error(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config { line, key: key.to_string(), message: message.into() }
}

/// One `key = value` assignment; `line` is 0 for command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    fn qualified(&self) -> String {
        format!("{}.{}", self.section, self.key)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        config_error(self.line, &self.qualified(), message)
    }

    fn f64(&self) -> Result<f64> {
        let v: f64 = self.value.parse().map_err(|_| self.error(format!("`{}` is not a number", self.value)))?;
        if !v.is_finite() {
            return Err(self.error("value must be finite"));
        }
        Ok(v)
    }

    fn usize(&self) -> Result<usize> {
        self.value.parse().map_err(|_| self.error(format!("`{}` is not a non-negative integer", self.value)))
    }

    fn bool(&self) -> Result<bool> {
        match self.value.as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            v => Err(self.error(format!("`{v}` is not a boolean"))),
        }
    }

    fn list(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| self.error(format!("`{}` is not a number list", self.value))))
            .collect()
    }

    fn pair(&self) -> Result<[f64; 2]> {
        match self.list()?.as_slice() {
            [a, b] => Ok([*a, *b]),
            _ => Err(self.error("expected two comma-separated numbers")),
        }
    }
}

/// Parsed assignments in file order, followed by overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub entries: Vec<Entry>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = strip_inline_comment(raw).trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| config_error(line, s, "unterminated section header"))?.trim();
                if keys_of(name).is_none() {
                    return Err(config_error(line, name, "unknown section"));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| config_error(line, s, "expected `key = value`"))?;
            let key = key.trim();
            let sec = section.clone().ok_or_else(|| config_error(line, key, "assignment outside any section"))?;
            if !keys_of(&sec).is_some_and(|keys| keys.contains(&key)) {
                return Err(config_error(line, &format!("{sec}.{key}"), "unknown key"));
            }
            entries.push(Entry { section: sec, key: key.to_string(), value: value.trim().to_string(), line });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Last assignment of `section.key`.
    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.section == section && e.key == key)
    }

    /// Scenario named by `--scenario` if given, else by `[scenario] name`.
    pub fn scenario_name(&self, flag: Option<&str>) -> Result<String> {
        if let Some(name) = flag {
            return Ok(name.to_string());
        }
        self.get("scenario", "name")
            .map(|e| e.value.clone())
            .ok_or_else(|| config_error(0, "scenario.name", "no scenario selected (use --scenario or [scenario] name)"))
    }

    /// Appends an override `key=value` or `section.key=value`; returns the qualified key.
    pub fn apply_override(&mut self, spec: &str, scenario: &str) -> Result<String> {
        let (key, value) = spec.split_once('=').ok_or_else(|| config_error(0, spec, "override must look like key=value"))?;
        let (section, key) = resolve_key(key.trim(), scenario)?;
        self.entries.push(Entry { section: section.clone(), key: key.clone(), value: value.trim().to_string(), line: 0 });
        Ok(format!("{section}.{key}"))
    }
}

/// Maps `key` or `section.key` onto a schema entry, preferring the scenario's section.
pub fn resolve_key(key: &str, scenario: &str) -> Result<(String, String)> {
    if let Some((sec, k)) = key.split_once('.') {
        return match keys_of(sec) {
            Some(keys) if keys.contains(&k) => Ok((sec.to_string(), k.to_string())),
            _ => Err(config_error(0, key, "unknown key")),
        };
    }
    for sec in [scenario, "run", "pe", "scenario"] {
        if keys_of(sec).is_some_and(|keys| keys.contains(&key)) {
            return Ok((sec.to_string(), key.to_string()));
        }
    }
    Err(config_error(0, key, format!("unknown key for scenario `{scenario}`")))
}

/// Excitation analysis requested for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PeSettings {
    pub enabled: bool,
    /// Window length `L` (s).
    pub window: f64,
    /// Threshold `δ` for the verdict.
    pub delta: f64,
    /// Compute a convergence-rate certificate when the run is exciting.
    pub rate: bool,
}

impl PeSettings {
    fn default_for(scenario: &Scenario) -> Self {
        let window = match scenario {
            Scenario::Abs(_) => 1.0,
            _ => 2.0 * std::f64::consts::PI,
        };
        Self { enabled: true, window, delta: 1e-3, rate: true }
    }
}

/// Everything needed to execute one configured run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub scenario: Scenario,
    pub pe: PeSettings,
    /// Command-line overrides as `section.key=value`, in order.
    pub overrides: Vec<String>,
}

/// Builds the run from settings; `flag` is the `--scenario` value if any.
pub fn build(settings: &Settings, flag: Option<&str>) -> Result<RunSpec> {
    let name = settings.scenario_name(flag)?;
    let mut scenario = Scenario::by_name(&name).map_err(|e| config_error(0, "scenario.name", e.to_string()))?;
    let mut pe = PeSettings::default_for(&scenario);
    for e in &settings.entries {
        match e.section.as_str() {
            "scenario" => {}
            "run" => match e.key.as_str() {
                "h" => {
                    let h = e.f64()?;
                    if !(h > 0.0) {
                        return Err(e.error("step must be positive"));
                    }
                    scenario.set_step(h);
                }
                "tf" => {
                    let tf = e.f64()?;
                    if !(tf > 0.0) {
                        return Err(e.error("horizon must be positive"));
                    }
                    scenario.set_horizon(tf);
                }
                _ => unreachable!("schema-checked key"),
            },
            "pe" => match e.key.as_str() {
                "enabled" => pe.enabled = e.bool()?,
                "window" => {
                    pe.window = e.f64()?;
                    if !(pe.window > 0.0) {
                        return Err(e.error("window must be positive"));
                    }
                }
                "delta" => pe.delta = e.f64()?,
                "rate" => pe.rate = e.bool()?,
                _ => unreachable!("schema-checked key"),
            },
            sec if sec == name => apply_scenario_key(&mut scenario, e)?,
            _ => {}
        }
    }
    if let Scenario::Abs(c) = &mut scenario {
        let breaks = settings.get("abs", "road_breakpoints");
        let values = settings.get("abs", "road_values");
        if let Some(last) = [breaks, values].into_iter().flatten().max_by_key(|e| (e.line == 0, e.line)) {
            let b = breaks.map(Entry::list).transpose()?.unwrap_or_else(|| c.road.breakpoints().to_vec());
            let v = values.map(Entry::list).transpose()?.unwrap_or_else(|| c.road.values().to_vec());
            c.road = RoadProfile::new(b, v).map_err(|err| last.error(err.to_string()))?;
        }
    }
    validate(&scenario)?;
    let overrides = settings.entries.iter().filter(|e| e.line == 0).map(|e| format!("{}={}", e.qualified(), e.value)).collect();
    Ok(RunSpec { scenario, pe, overrides })
}

fn validate(scenario: &Scenario) -> Result<()> {
    let res = match scenario {
        Scenario::Spring(c) => c.validate(),
        Scenario::Sine(c) => c.validate().and_then(|_| c.parametrization().map(|_| ())),
        Scenario::Abs(c) => crate::scenarios::wheel::WheelLoop::new(c.clone()).map(|_| ()),
        Scenario::Linear(c) => c.validate(),
    };
    res.map_err(|err| match err {
        Error::Config { .. } => err,
        Error::InvalidGain(_) => config_error(0, &format!("{}.gamma", scenario.name()), err.to_string()),
        other => config_error(0, scenario.name(), other.to_string()),
    })
}

fn apply_scenario_key(scenario: &mut Scenario, e: &Entry) -> Result<()> {
    match scenario {
        Scenario::Spring(c) => {
            let v = e.f64()?;
            match e.key.as_str() {
                "lambda" => c.lambda = v,
                "k0" => c.k0 = v,
                "theta" => c.theta = v,
                "theta_hat0" => c.theta_hat0 = v,
                "gamma" => c.gamma = v,
                "x1_0" => c.x1_0 = v,
                "x2_0" => c.x2_0 = v,
                "phi_rate" => c.phi_rate = v,
                "eps_amplitude" => c.eps_amplitude = v,
                "theta_bound" => c.theta_bound = v,
                _ => unreachable!("schema-checked key"),
            }
        }
        Scenario::Sine(c) => match e.key.as_str() {
            "omega" => {
                c.omega = match e.value.as_str() {
                    "derived" => OmegaM::derived(c.theta_lo, c.theta_hi).map_err(|err| e.error(err.to_string()))?,
                    "rounded" => OmegaM::rounded(),
                    v => return Err(e.error(format!("`{v}` is neither `derived` nor `rounded`"))),
                }
            }
            key => {
                let v = e.f64()?;
                match key {
                    "lambda" => c.lambda = v,
                    "theta" => c.theta = v,
                    "theta_hat0" => c.theta_hat0 = v,
                    "theta_lo" | "theta_hi" => {
                        if key == "theta_lo" {
                            c.theta_lo = v
                        } else {
                            c.theta_hi = v
                        }
                        c.omega = OmegaM::derived(c.theta_lo, c.theta_hi).map_err(|err| e.error(err.to_string()))?;
                    }
                    "gamma" => c.gamma = v,
                    "amplitude" => c.amplitude = v,
                    "x1_0" => c.x1_0 = v,
                    "x2_0" => c.x2_0 = v,
                    "phi_rate" => c.phi_rate = v,
                    "eps_amplitude" => c.eps_amplitude = v,
                    _ => unreachable!("schema-checked key"),
                }
            }
        },
        Scenario::Abs(c) => match e.key.as_str() {
            "x3_star" => {
                c.target = match e.value.as_str() {
                    "adaptive" => SlipTarget::Adaptive,
                    _ => SlipTarget::Fixed(e.f64()?),
                }
            }
            "substeps" => {
                c.substeps = e.usize()?;
                if c.substeps == 0 {
                    return Err(e.error("substeps must be at least 1"));
                }
            }
            "road_breakpoints" | "road_values" => {}
            key => {
                let v = e.f64()?;
                let p = &mut c.params;
                match key {
                    "gamma" => c.gamma = v,
                    "x1_0" => c.x1_0 = v,
                    "theta_hat0" => c.theta_hat0 = v,
                    "eps_amplitude" => c.eps_amplitude = v,
                    "sigma0" => p.sigma0 = v,
                    "l_patch" => p.l_patch = v,
                    "mu_c" => p.mu_c = v,
                    "mu_s" => p.mu_s = v,
                    "vs" => p.vs = v,
                    "r" => p.r = v,
                    "m" => p.m = v,
                    "j" => p.j = v,
                    "fn_load" => p.fn_load = v,
                    "ks" => p.ks = v,
                    _ => unreachable!("schema-checked key"),
                }
            }
        },
        Scenario::Linear(c) => match e.key.as_str() {
            "theta" => c.theta = e.pair()?,
            "theta_hat0" => c.theta_hat0 = e.pair()?,
            "z0" => c.z0 = e.pair()?,
            key => {
                let v = e.f64()?;
                match key {
                    "gamma" => c.gamma = v,
                    "y0" => c.y0 = v,
                    "phi_rate" => c.phi_rate = v,
                    "eps_amplitude" => c.eps_amplitude = v,
                    "theta_bound" => c.theta_bound = v,
                    _ => unreachable!("schema-checked key"),
                }
            }
        },
    }
    Ok(())
}

/// Names accepted by `--scenario`.
pub fn scenario_names() -> &'static [&'static str] {
    &NAMES
}
