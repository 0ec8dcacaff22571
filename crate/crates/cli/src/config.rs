//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! [sweep]
//! omega = 0.15 1.2 200
//! amplitude = 0 6 120
//!
//! [tolerances]
//! strobe_tol = 1e-6
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nlres_core::continuation::ContinuationSettings;
use nlres_core::sweep::Timing;
use nlres_core::{Model, ModelParams, OscState};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl FromStr for Config {
    type Err = CliError;

    fn from_str(text: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        let mut current = String::from("global");
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(format!("line {}: unterminated section header", no + 1)))?;
                current = name.trim().to_string();
                if current.is_empty() {
                    return Err(CliError::config(format!("line {}: empty section name", no + 1)));
                }
                cfg.sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(CliError::config(format!("line {}: empty key", no + 1)));
            }
            if cfg.sections.entry(current.clone()).or_default().insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::config(format!("line {}: duplicate key {k} in [{current}]", no + 1)));
            }
        }
        Ok(cfg)
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        text.parse()
    }

    pub fn section(&self, name: &str) -> Section<'_> {
        Section { name: name.to_string(), map: self.sections.get(name) }
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), value.to_string());
    }
}

/// Read access to one section; missing keys fall back to defaults.
pub struct Section<'a> {
    name: String,
    map: Option<&'a BTreeMap<String, String>>,
}

impl Section<'_> {
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.and_then(|m| m.get(key)).map(String::as_str)
    }

    fn bad(&self, key: &str, v: &str, what: &str) -> CliError {
        CliError::config(format!("[{}] {key} = {v}: expected {what}", self.name))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, v, std::any::type_name::<T>())),
        }
    }

    pub fn list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| self.bad(key, v, "numbers")))
            .collect::<CliResult<Vec<_>>>()
            .map(Some)
    }

    pub fn pair(&self, key: &str, default: (f64, f64)) -> CliResult<(f64, f64)> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok((v[0], v[1])),
            Some(_) => Err(self.bad(key, self.raw(key).unwrap_or(""), "two numbers")),
        }
    }

    /// `lo hi count`.
    pub fn axis(&self, key: &str, default: (f64, f64, usize)) -> CliResult<(f64, f64, usize)> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 3 && v[2] >= 1.0 && v[2].fract() == 0.0 => Ok((v[0], v[1], v[2] as usize)),
            Some(_) => Err(self.bad(key, self.raw(key).unwrap_or(""), "lo hi count")),
        }
    }

    pub fn range(&self, key: &str, default: (f64, f64)) -> CliResult<(f64, f64)> {
        let r = self.pair(key, default)?;
        if !(r.0 < r.1) {
            return Err(CliError::config(format!("[{}] {key}: range must be non-empty", self.name)));
        }
        Ok(r)
    }

    pub fn state(&self, key: &str, default: OscState) -> CliResult<OscState> {
        let (x, v) = self.pair(key, (default.x, default.v))?;
        Ok(OscState::new(x, v))
    }

    pub fn model(&self) -> CliResult<Model> {
        match self.raw("model").unwrap_or("duffing") {
            "duffing" => Ok(Model::Duffing),
            "duffing-vdp" | "vdp" => Ok(Model::DuffingVanDerPol),
            other => Err(self.bad("model", other, "duffing or duffing-vdp")),
        }
    }

    /// Model parameters from `model`, `amplitude`, `omega` and `gamma`.
    pub fn params(&self, a: f64, omega: f64) -> CliResult<ModelParams> {
        self.model_params(self.get("amplitude", a)?, self.get("omega", omega)?)
    }

    /// Like [`Section::params`] with `a` and `omega` given by the caller.
    pub fn model_params(&self, a: f64, omega: f64) -> CliResult<ModelParams> {
        let model = self.model()?;
        let p = ModelParams { model, ..ModelParams::duffing(a, omega, self.get("gamma", 0.01)?) };
        p.validate()?;
        Ok(p)
    }
}

/// Applies `[tolerances]` overrides and the global scale factor.
pub fn continuation_settings(cfg: &Config, tol_scale: f64) -> CliResult<ContinuationSettings> {
    let t = cfg.section("tolerances");
    let d = ContinuationSettings::default();
    let mut st = ContinuationSettings {
        initial_step: t.get("initial_step", d.initial_step)?,
        min_step: t.get("min_step", d.min_step)?,
        max_step: t.get("max_step", d.max_step)?,
        grow_after: t.get("grow_after", d.grow_after)?,
        grow_factor: t.get("grow_factor", d.grow_factor)?,
        max_points: t.get("max_points", d.max_points)?,
        corrector_iterations: t.get("corrector_iterations", d.corrector_iterations)?,
        min_tangent_cos: t.get("min_tangent_cos", d.min_tangent_cos)?,
        closure_tol: t.get("closure_tol", d.closure_tol)?,
        min_closure_steps: t.get("min_closure_steps", d.min_closure_steps)?,
        bisection_tol: t.get("bisection_tol", d.bisection_tol)?,
        test_tol: t.get("test_tol", d.test_tol)?,
        max_state_norm: t.get("max_state_norm", d.max_state_norm)?,
        ..d
    };
    let o = &mut st.orbit;
    o.integration.rel = t.get("rel", o.integration.rel)? * tol_scale;
    o.integration.abs = t.get("abs", o.integration.abs)? * tol_scale;
    o.residual = t.get("residual", o.residual)?;
    o.max_iterations = t.get("max_iterations", o.max_iterations)?;
    o.max_halvings = t.get("max_halvings", o.max_halvings)?;
    o.symmetry_tol = t.get("symmetry_tol", o.symmetry_tol)?;
    o.minimal_period_tol = t.get("minimal_period_tol", o.minimal_period_tol)?;
    o.samples_per_period = t.get("samples_per_period", o.samples_per_period)?;
    if !(st.min_step > 0.0 && st.min_step <= st.initial_step && st.initial_step <= st.max_step) {
        return Err(CliError::config("[tolerances] need 0 < min_step <= initial_step <= max_step"));
    }
    o.integration.validate()?;
    Ok(st)
}

/// Sweep timing from `[sweep]` keys and `[tolerances]` overrides.
pub fn sweep_timing(cfg: &Config, tol_scale: f64) -> CliResult<Timing> {
    let s = cfg.section("sweep");
    let t = cfg.section("tolerances");
    let d = Timing::default();
    let timing = Timing {
        transient_periods: s.get("transient_periods", d.transient_periods)?,
        sample_periods: s.get("sample_periods", d.sample_periods)?,
        n_max: s.get("n_max", d.n_max)?,
        strobe_tol: t.get("strobe_tol", d.strobe_tol)?,
        qp_samples: s.get("qp_samples", d.qp_samples)?,
        integration: nlres_core::Tolerance {
            rel: t.get("sweep_rel", d.integration.rel)? * tol_scale,
            abs: t.get("sweep_abs", d.integration.abs)? * tol_scale,
        },
        early_exit: s.get("early_exit", d.early_exit)?,
        early_exit_tol: t.get("early_exit_tol", d.early_exit_tol)?,
    };
    timing.validate()?;
    Ok(timing)
}
