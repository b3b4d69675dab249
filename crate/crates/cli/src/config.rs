//! Run configuration: a TOML file with dotted sections, overridden by
//! `OPTOSPRING_*` environment variables, overridden in turn by flags.
//!
//! Environment keys map to config keys by stripping the prefix, lowercasing
//! and turning `__` into a section separator:
//! `OPTOSPRING_OSCILLATOR__MASS=2` sets `oscillator.mass = 2`.

use std::path::{Path, PathBuf};

use optospring::optimizer::SearchSpec;
use optospring::{
    Constants, MechanicalOscillator, OpticalCavity, Regime, Sensor, UnitMode, WorkingPoint,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "OPTOSPRING_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_units")]
    pub units: UnitMode,
    /// Output format; each command has its own default when unset.
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub oscillator: OscillatorConfig,
    #[serde(default)]
    pub cavity: CavityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_working_points")]
    pub working_points: Vec<WorkingPointConfig>,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
}

fn default_units() -> UnitMode {
    UnitMode::Normalized
}

fn default_working_points() -> Vec<WorkingPointConfig> {
    vec![WorkingPointConfig::default()]
}

/// Mirror parameters. Defaults: a nearly free mass (`Omega_M = 1e-3`,
/// `Gamma = 1e-6` in units where `Omega_SQL = 1` for `xi^2 = 1/2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorConfig {
    pub mass: f64,
    pub resonance: f64,
    pub damping: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            resonance: 1e-3,
            damping: 1e-6,
        }
    }
}

/// Cavity parameters; give either `bandwidth` (`gamma / tau`) or `round_trip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityConfig {
    pub gamma: f64,
    pub bandwidth: Option<f64>,
    pub round_trip: Option<f64>,
    pub wavevector: f64,
    pub bare_detuning: f64,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            bandwidth: None,
            round_trip: None,
            wavevector: 1.0,
            bare_detuning: 0.0,
        }
    }
}

/// Logarithmic frequency grid. In normalized mode the bounds are in units of
/// `Omega_SQL` of each working point; in SI mode they are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points_per_decade: usize,
    pub regime: Regime,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lo: 0.1,
            hi: 1e3,
            points_per_decade: 400,
            regime: Regime::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkingPointConfig {
    pub label: Option<String>,
    pub detuning_over_gamma: f64,
    /// Absolute `xi^2`.
    pub xi2: f64,
}

impl Default for WorkingPointConfig {
    fn default() -> Self {
        Self {
            label: None,
            detuning_over_gamma: 0.0,
            xi2: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizeMode {
    /// Coupling only, at fixed detuning.
    #[default]
    Xi,
    /// Coupling and detuning.
    Detuning,
    /// Coupling and detuning over a frequency sweep, against `hbar |Im chi|`.
    UqlSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub mode: OptimizeMode,
    /// Absolute frequencies; defaults depend on the mode.
    pub frequencies: Option<Vec<f64>>,
    /// Fixed detuning for `xi` mode.
    pub detuning_over_gamma: f64,
    pub regime: Regime,
    /// In units of `xi_SQL^2` at each frequency.
    pub xi2_bounds: [f64; 2],
    /// In units of `gamma`.
    pub detuning_bounds: [f64; 2],
    pub rel_tol: f64,
    pub max_iter: usize,
    pub stability_constrained: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let d = SearchSpec::default();
        Self {
            mode: OptimizeMode::Xi,
            frequencies: None,
            detuning_over_gamma: 0.0,
            regime: Regime::Quasistatic,
            xi2_bounds: [d.xi2_bounds.0, d.xi2_bounds.1],
            detuning_bounds: [d.detuning_bounds.0, d.detuning_bounds.1],
            rel_tol: d.rel_tol,
            max_iter: d.max_iter,
            stability_constrained: d.stability_constrained,
        }
    }
}

impl OptimizeConfig {
    pub fn spec(&self) -> Result<SearchSpec, CliError> {
        let spec = SearchSpec {
            xi2_bounds: (self.xi2_bounds[0], self.xi2_bounds[1]),
            detuning_bounds: (self.detuning_bounds[0], self.detuning_bounds[1]),
            rel_tol: self.rel_tol,
            max_iter: self.max_iter,
            stability_constrained: self.stability_constrained,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Stability-map window: `xi^2 / xi_SQL^2[0]` log-spaced, `psi / gamma` linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub xi2_lo: f64,
    pub xi2_hi: f64,
    pub xi2_points: usize,
    pub detuning_lo: f64,
    pub detuning_hi: f64,
    pub detuning_points: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            xi2_lo: 1e-2,
            xi2_hi: 1e2,
            xi2_points: 81,
            detuning_lo: -10.0,
            detuning_hi: 10.0,
            detuning_points: 41,
        }
    }
}

impl StabilityConfig {
    pub fn axes(&self) -> Result<(Vec<f64>, Vec<f64>), CliError> {
        let ok = self.xi2_lo.is_finite()
            && self.xi2_hi.is_finite()
            && self.xi2_lo > 0.0
            && self.xi2_hi > self.xi2_lo
            && self.detuning_lo.is_finite()
            && self.detuning_hi.is_finite()
            && self.detuning_hi > self.detuning_lo
            && self.xi2_points >= 2
            && self.detuning_points >= 2;
        if !ok {
            return Err(CliError::Config(
                "stability: need 0 < xi2_lo < xi2_hi, detuning_lo < detuning_hi, >= 2 points per axis".into(),
            ));
        }
        let step = (self.xi2_hi / self.xi2_lo).ln() / (self.xi2_points - 1) as f64;
        let mut xi2: Vec<f64> = (0..self.xi2_points)
            .map(|i| self.xi2_lo * (step * i as f64).exp())
            .collect();
        xi2[self.xi2_points - 1] = self.xi2_hi;
        let step = (self.detuning_hi - self.detuning_lo) / (self.detuning_points - 1) as f64;
        let mut detuning: Vec<f64> = (0..self.detuning_points)
            .map(|i| self.detuning_lo + step * i as f64)
            .collect();
        detuning[self.detuning_points - 1] = self.detuning_hi;
        Ok((xi2, detuning))
    }
}

/// Values given on the command line; they win over file and environment.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub units: Option<UnitMode>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub grid: Option<GridSpec>,
}

/// `lo:hi:points-per-decade`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points_per_decade: usize,
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, ppd] = parts.as_slice() else {
            return Err(format!("expected lo:hi:points-per-decade, got `{s}`"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        let spec = GridSpec {
            lo: num(lo)?,
            hi: num(hi)?,
            points_per_decade: ppd.trim().parse().map_err(|e| format!("`{ppd}`: {e}"))?,
        };
        if !(spec.lo > 0.0 && spec.hi > spec.lo && spec.points_per_decade > 0) {
            return Err(format!(
                "need 0 < lo < hi and points-per-decade > 0, got `{s}`"
            ));
        }
        Ok(spec)
    }
}

impl RunConfig {
    /// Reads the file (if any), applies environment and flag overrides, and
    /// validates the result.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &FlagOverrides,
    ) -> Result<Self, CliError> {
        let mut table = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                // typed parse first, so that errors carry line and column
                toml::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        env.sort();
        for (key, raw) in env {
            let dotted = key[ENV_PREFIX.len()..].to_lowercase().replace("__", ".");
            set_path(&mut table, &dotted, parse_scalar(&raw))
                .map_err(|e| CliError::Config(format!("environment variable {key}: {e}")))?;
        }
        if let Some(units) = flags.units {
            table.insert(
                "units".into(),
                Value::try_from(units).expect("unit mode serializes"),
            );
        }
        if let Some(format) = flags.format {
            table.insert(
                "format".into(),
                Value::try_from(format).expect("format serializes"),
            );
        }
        if let Some(out) = &flags.out {
            table.insert("out".into(), Value::String(out.display().to_string()));
        }
        if let Some(g) = flags.grid {
            set_path(&mut table, "grid.lo", Value::Float(g.lo)).map_err(CliError::Config)?;
            set_path(&mut table, "grid.hi", Value::Float(g.hi)).map_err(CliError::Config)?;
            set_path(
                &mut table,
                "grid.points_per_decade",
                Value::Integer(g.points_per_decade as i64),
            )
            .map_err(CliError::Config)?;
        }
        let config: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| {
                CliError::Config(format!("after overrides: {}", e.message()))
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sensor()?;
        if self.working_points.is_empty() {
            return Err(CliError::Config("working_points: list is empty".into()));
        }
        for (i, wp) in self.working_points.iter().enumerate() {
            if !(wp.xi2.is_finite() && wp.xi2 >= 0.0 && wp.detuning_over_gamma.is_finite()) {
                return Err(CliError::Config(format!(
                    "working_points[{i}]: xi2 must be finite and >= 0, detuning_over_gamma finite"
                )));
            }
        }
        let g = &self.grid;
        if !(g.lo.is_finite()
            && g.hi.is_finite()
            && g.lo > 0.0
            && g.hi > g.lo
            && g.points_per_decade > 0)
        {
            return Err(CliError::Config(
                "grid: need 0 < lo < hi and points_per_decade > 0".into(),
            ));
        }
        if let Some(freqs) = &self.optimize.frequencies {
            if freqs.is_empty() || freqs.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(CliError::Config(
                    "optimize.frequencies: need a non-empty list of values >= 0".into(),
                ));
            }
        }
        self.optimize.spec()?;
        Ok(())
    }

    pub fn constants(&self) -> Constants {
        self.units.constants()
    }

    pub fn sensor(&self) -> Result<Sensor, CliError> {
        let o = &self.oscillator;
        let c = &self.cavity;
        let oscillator = MechanicalOscillator::new(o.mass, o.resonance, o.damping)?;
        let cavity = match (c.bandwidth, c.round_trip) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "cavity: give either bandwidth or round_trip, not both".into(),
                ))
            }
            (None, Some(tau)) => OpticalCavity::new(c.gamma, tau, c.wavevector, c.bare_detuning)?,
            (Some(bw), None) => {
                OpticalCavity::with_bandwidth(c.gamma, bw, c.wavevector, c.bare_detuning)?
            }
            (None, None) => {
                OpticalCavity::with_bandwidth(c.gamma, 2.0, c.wavevector, c.bare_detuning)?
            }
        };
        Ok(Sensor::new(self.constants(), oscillator, cavity))
    }

    pub fn working_point(&self, wp: &WorkingPointConfig) -> Result<WorkingPoint, CliError> {
        Ok(WorkingPoint::from_ratio(
            wp.detuning_over_gamma,
            self.cavity.gamma,
            wp.xi2.sqrt(),
        )?)
    }
}

fn parse_scalar(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, dotted: &str, value: Value) -> Result<(), String> {
    let mut parts = dotted.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(format!("malformed key `{dotted}`"));
        }
        if parts.peek().is_none() {
            current.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| format!("`{part}` in `{dotted}` is not a section"))?;
    }
    Ok(())
}
