use std::path::PathBuf;

use optospring::finite_bandwidth::{dip_analysis, log_grid, spectrum_in};
use optospring::optimizer::{
    locate_figure2_minimum, minimize_over_detuning, minimize_over_xi, stability_map,
};
use optospring::quasistatic::{
    self, amplification_factor, general_optimum_xi, highfreq_optimum, lowfreq_optimum,
    ultimate_quantum_limit,
};
use optospring::{
    Constants, Error, InputNoiseModel, MechanicalOscillator, OpticalCavity, Regime, Sensor,
    StabilityReport, UnitMode, WorkingPoint,
};
use serde_json::{json, Value};

use crate::config::{Format, GridSpec, OptimizeMode, RunConfig};
use crate::error::CliError;
use crate::output::{Table, SCHEMA_VERSION};

const SPECTRUM_COLUMNS: [&str; 5] = ["curve", "omega_norm", "s_sig", "s_sql", "ratio"];

fn sensor_meta(table: &mut Table, sensor: &Sensor, units: UnitMode) {
    let o = &sensor.oscillator;
    let c = &sensor.cavity;
    table
        .meta("units", format!("{units:?}").to_lowercase())
        .meta("hbar", sensor.hbar())
        .meta(
            "oscillator",
            format!(
                "mass={} resonance={} damping={}",
                o.mass(),
                o.resonance(),
                o.damping()
            ),
        )
        .meta(
            "cavity",
            format!(
                "gamma={} bandwidth={} round_trip={} wavevector={}",
                c.gamma(),
                c.bandwidth(),
                c.round_trip(),
                c.wavevector()
            ),
        );
}

fn stability_summary(r: &StabilityReport) -> String {
    format!(
        "static_ok={} dynamic_ok={} gamma_eff={} static_margin={}",
        r.static_ok, r.dynamic_ok, r.gamma_eff, r.static_margin
    )
}

fn stability_json(r: &StabilityReport) -> Value {
    json!({
        "static_ok": r.static_ok,
        "dynamic_ok": r.dynamic_ok,
        "gamma_eff": r.gamma_eff,
        "static_margin": r.static_margin,
        "high_q": r.high_q,
    })
}

/// Scales used to present a curve: frequencies and noise are divided by these.
struct Scale {
    omega: f64,
    noise: f64,
}

fn curve_scale(sensor: &Sensor, units: UnitMode, coupling: f64) -> Result<Scale, CliError> {
    match units {
        UnitMode::Si => Ok(Scale {
            omega: 1.0,
            noise: 1.0,
        }),
        UnitMode::Normalized => {
            if coupling == 0.0 {
                return Err(CliError::Config(
                    "normalized spectra are expressed in units of Omega_SQL, which needs xi2 > 0"
                        .into(),
                ));
            }
            let mass = sensor.oscillator.mass();
            let omega_sql = quasistatic::omega_sql(sensor.hbar(), mass, coupling);
            Ok(Scale {
                omega: omega_sql,
                noise: sensor.hbar() / (mass * omega_sql * omega_sql),
            })
        }
    }
}

/// Appends one spectrum curve to `table`; returns the absolute grid used.
fn push_curve(
    table: &mut Table,
    label: &str,
    sensor: &Sensor,
    wp: &WorkingPoint,
    grid_norm: &[f64],
    regime: Regime,
    scale: &Scale,
) -> Result<optospring::NoiseSpectrum, CliError> {
    let grid: Vec<f64> = grid_norm.iter().map(|w| w * scale.omega).collect();
    let spec = spectrum_in(regime, sensor, wp, &grid, &InputNoiseModel::COHERENT)?;
    for ((&w, &sig), &sql) in grid_norm.iter().zip(&spec.s_sig).zip(&spec.s_sql) {
        let s_sig = sig / scale.noise;
        let s_sql = sql / scale.noise;
        table.push(vec![
            label.into(),
            w.into(),
            s_sig.into(),
            s_sql.into(),
            (s_sig / s_sql).into(),
        ]);
    }
    Ok(spec)
}

fn curve_label(explicit: Option<&str>, index: usize) -> String {
    explicit.map(str::to_string).unwrap_or_else(|| {
        let letter = (b'a' + (index % 26) as u8) as char;
        if index < 26 {
            letter.to_string()
        } else {
            format!("{letter}{}", index / 26)
        }
    })
}

pub fn spectrum(config: &RunConfig) -> Result<Table, CliError> {
    let sensor = config.sensor()?;
    let g = &config.grid;
    let grid_norm = log_grid(g.lo, g.hi, g.points_per_decade)?;
    let mut table = Table::new(&SPECTRUM_COLUMNS);
    table
        .meta("command", "spectrum")
        .meta("regime", format!("{:?}", g.regime).to_lowercase());
    sensor_meta(&mut table, &sensor, config.units);
    match config.units {
        UnitMode::Normalized => table
            .meta(
                "omega_norm",
                "Omega / Omega_SQL of each curve, Omega_SQL = sqrt(2 hbar xi^2 / M)",
            )
            .meta(
                "noise",
                "units of hbar / (M Omega_SQL^2); s_sql = hbar |chi[Omega]|",
            ),
        UnitMode::Si => table
            .meta("omega_norm", "Omega in rad/s")
            .meta("noise", "m^2/Hz; s_sql = hbar |chi[Omega]|"),
    };
    for (i, wpc) in config.working_points.iter().enumerate() {
        let label = curve_label(wpc.label.as_deref(), i);
        let wp = config.working_point(wpc)?;
        let scale = curve_scale(&sensor, config.units, wp.coupling())?;
        push_curve(
            &mut table, &label, &sensor, &wp, &grid_norm, g.regime, &scale,
        )?;
        table.meta(
            format!("curve.{label}"),
            format!(
                "detuning_over_gamma={} xi2={} omega_sql={} {}",
                wpc.detuning_over_gamma,
                wpc.xi2,
                quasistatic::omega_sql(sensor.hbar(), sensor.oscillator.mass(), wp.coupling()),
                stability_summary(&sensor.stability(&wp))
            ),
        );
    }
    Ok(table)
}

/// Result of `optimize`: the report plus whether every search converged.
pub struct OptimizeReport {
    pub table: Table,
    pub unconverged: Vec<f64>,
}

pub fn optimize(config: &RunConfig) -> Result<OptimizeReport, CliError> {
    let sensor = config.sensor()?;
    let opt = &config.optimize;
    let spec = opt.spec()?;
    let omega_m = sensor.oscillator.resonance();
    let frequencies = match (&opt.frequencies, opt.mode) {
        (Some(f), _) => f.clone(),
        (None, OptimizeMode::UqlSweep) => (0..10)
            .map(|i| omega_m * 0.5 * 4f64.powf(i as f64 / 9.0))
            .collect(),
        (None, _) => vec![omega_m],
    };
    let gamma = sensor.cavity.gamma();
    let mut table = Table::new(&[
        "mode",
        "omega",
        "detuning_over_gamma",
        "xi2",
        "xi2_norm",
        "s_min",
        "ratio_to_sql",
        "closed_form_s",
        "closed_form_rel_err",
        "closed_form_detuning_over_gamma",
        "static_ok",
        "dynamic_ok",
        "converged",
        "constraint_active",
        "iterations",
    ]);
    let mode_name = match opt.mode {
        OptimizeMode::Xi => "xi",
        OptimizeMode::Detuning => "detuning",
        OptimizeMode::UqlSweep => "uql-sweep",
    };
    table
        .meta("command", "optimize")
        .meta("mode", mode_name)
        .meta("regime", format!("{:?}", opt.regime).to_lowercase())
        .meta("omega", "absolute frequency (config units)")
        .meta("xi2_norm", "xi^2 / xi_SQL^2[Omega]")
        .meta(
            "closed_form",
            match opt.mode {
                OptimizeMode::Xi => "quasi-static optimum over xi at fixed detuning",
                _ => "ultimate quantum limit hbar |Im chi|, detuning -2 Re chi / |Im chi|",
            },
        )
        .meta("stability_constrained", spec.stability_constrained);
    sensor_meta(&mut table, &sensor, config.units);

    let mut unconverged = Vec::new();
    for &omega in &frequencies {
        let (found, closed_s, closed_ratio) = match opt.mode {
            OptimizeMode::Xi => {
                let psi = opt.detuning_over_gamma * gamma;
                let found = minimize_over_xi(&sensor, opt.regime, omega, psi, &spec)?;
                let closed = general_optimum_xi(&sensor, omega, psi)?;
                (found, closed.s_min, opt.detuning_over_gamma)
            }
            OptimizeMode::Detuning | OptimizeMode::UqlSweep => {
                let closed = ultimate_quantum_limit(&sensor, omega)?;
                let found = minimize_over_detuning(&sensor, opt.regime, omega, &spec)?;
                (found, closed.s_min, closed.detuning.unwrap_or(0.0) / gamma)
            }
        };
        if !found.converged {
            log::warn!("search at omega = {omega} did not converge");
            unconverged.push(omega);
        }
        let xi_sql2 = quasistatic::sql(&sensor, omega)?.xi_sql.powi(2);
        table.push(vec![
            mode_name.into(),
            omega.into(),
            (found.detuning / gamma).into(),
            found.coupling_squared().into(),
            (found.coupling_squared() / xi_sql2).into(),
            found.s_min.into(),
            found.ratio_to_sql.into(),
            closed_s.into(),
            ((found.s_min - closed_s) / closed_s).abs().into(),
            closed_ratio.into(),
            found.stability.static_ok.into(),
            found.stability.dynamic_ok.into(),
            found.converged.into(),
            found.constraint_active.into(),
            found.iterations.into(),
        ]);
    }
    Ok(OptimizeReport { table, unconverged })
}

pub fn stability(config: &RunConfig) -> Result<Table, CliError> {
    let sensor = config.sensor()?;
    let (xi2, detuning) = config.stability.axes()?;
    let map = stability_map(&sensor, &xi2, &detuning)?;
    let mut table = Table::new(&[
        "xi2_norm",
        "psi_norm",
        "static_ok",
        "dynamic_ok",
        "static_margin",
        "dynamic_margin",
        "gamma_eff",
        "amplification",
    ]);
    table
        .meta("command", "stability")
        .meta(
            "xi2_norm",
            "xi^2 / xi_SQL^2[0], xi_SQL^2[0] = 1 / (2 hbar chi[0])",
        )
        .meta("psi_norm", "detuning / gamma")
        .meta("amplification", "|chi_eff[0] / chi[0]|");
    sensor_meta(&mut table, &sensor, config.units);
    let boundary: Vec<String> = map
        .boundary
        .iter()
        .map(|(x, p)| format!("({x}, {p})"))
        .collect();
    table.meta("static_boundary", boundary.join(" "));
    let xi_sql2 = 1.0 / (2.0 * sensor.hbar() * sensor.oscillator.static_susceptibility());
    for cell in &map.cells {
        let wp = WorkingPoint::from_ratio(
            cell.detuning_over_gamma,
            sensor.cavity.gamma(),
            (cell.xi2_norm * xi_sql2).sqrt(),
        )?;
        let amp = match amplification_factor(&sensor, &wp, 0.0) {
            Ok(a) => a,
            Err(Error::StabilityBoundary) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        let r = &cell.report;
        table.push(vec![
            cell.xi2_norm.into(),
            cell.detuning_over_gamma.into(),
            r.static_ok.into(),
            r.dynamic_ok.into(),
            r.static_margin.into(),
            r.dynamic_margin.into(),
            r.gamma_eff.into(),
            amp.into(),
        ]);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
}

impl FigureId {
    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
        }
    }
}

/// Which curves to draw. Empty lists select the published defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub id: FigureId,
    pub detunings: Vec<f64>,
    pub bandwidths: Vec<f64>,
}

impl FigureSpec {
    pub fn new(id: FigureId, detunings: Vec<f64>, bandwidths: Vec<f64>) -> Result<Self, CliError> {
        let defaults = |id| -> (Vec<f64>, Vec<f64>) {
            match id {
                FigureId::Fig2 => (vec![0.0, -2.0, -5.0, -10.0], vec![]),
                FigureId::Fig3 => (vec![0.0, 2.0, 5.0, 10.0], vec![]),
                FigureId::Fig4 => (
                    vec![0.0, 2.0, 5.0, 10.0, -10.0, -10.0],
                    vec![2.0, 2.0, 2.0, 2.0, 2.0, 1.0 / 3.0],
                ),
            }
        };
        let (d_default, b_default) = defaults(id);
        let detunings = if detunings.is_empty() {
            d_default
        } else {
            detunings
        };
        if detunings.iter().any(|d| !d.is_finite()) {
            return Err(CliError::Config("figure: detunings must be finite".into()));
        }
        let bandwidths = match (id, bandwidths.len()) {
            (FigureId::Fig4, 0) if detunings.len() == b_default.len() => b_default,
            (FigureId::Fig4, 0) => vec![2.0; detunings.len()],
            (FigureId::Fig4, 1) => vec![bandwidths[0]; detunings.len()],
            (FigureId::Fig4, n) if n == detunings.len() => bandwidths,
            (FigureId::Fig4, _) => {
                return Err(CliError::Config(
                    "figure: give one bandwidth or one per detuning".into(),
                ))
            }
            (_, 0) => vec![],
            _ => {
                return Err(CliError::Config(
                    "figure: bandwidths only apply to fig4".into(),
                ))
            }
        };
        if bandwidths.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(CliError::Config(
                "figure: bandwidths must be finite and > 0".into(),
            ));
        }
        Ok(Self {
            id,
            detunings,
            bandwidths,
        })
    }
}

/// One data file per curve plus a manifest.
pub struct FigureOutput {
    pub files: Vec<(String, Table)>,
    pub manifest: Value,
}

const FIG_GAMMA: f64 = 1e-3;
/// `xi^2` giving `Omega_SQL = 1` for `hbar = M = 1`.
const FIG_XI2: f64 = 0.5;

fn fig_sensor(resonance: f64, damping: f64, bandwidth: f64) -> Result<Sensor, CliError> {
    Ok(Sensor::new(
        Constants::NORMALIZED,
        MechanicalOscillator::new(1.0, resonance, damping)?,
        OpticalCavity::with_bandwidth(FIG_GAMMA, bandwidth, 1.0, 0.0)?,
    ))
}

pub fn figure(
    spec: &FigureSpec,
    format: Format,
    grid: Option<GridSpec>,
) -> Result<FigureOutput, CliError> {
    let ext = format.extension();
    let name = spec.id.name();
    let mut files = Vec::new();
    let mut curves = Vec::new();
    let (parameters, normalization) = match spec.id {
        FigureId::Fig2 => {
            let g = grid.unwrap_or(GridSpec {
                lo: 1e-2,
                hi: 1e2,
                points_per_decade: 100,
            });
            let axis = log_grid(g.lo, g.hi, g.points_per_decade)?;
            let sensor = fig_sensor(1.0, 0.0, 1e9)?;
            for (i, &ratio) in spec.detunings.iter().enumerate() {
                let label = curve_label(None, i);
                let mut table =
                    Table::new(&["curve", "xi2_norm", "s_sig", "s_sql", "ratio", "static_ok"]);
                table
                    .meta("figure", name)
                    .meta("curve", &label)
                    .meta("detuning_over_gamma", ratio)
                    .meta("omega", 0);
                for &x in &axis {
                    let wp = WorkingPoint::from_ratio(ratio, FIG_GAMMA, (x * FIG_XI2).sqrt())?;
                    let s = quasistatic::equivalent_input_noise(
                        &sensor,
                        &wp,
                        0.0,
                        &InputNoiseModel::COHERENT,
                    )?;
                    table.push(vec![
                        label.as_str().into(),
                        x.into(),
                        s.into(),
                        1.0.into(),
                        s.into(),
                        sensor.stability(&wp).static_ok.into(),
                    ]);
                }
                let (x_min, s_min) = locate_figure2_minimum(ratio)?;
                let optima = lowfreq_optimum(&sensor, ratio * FIG_GAMMA);
                let file = format!("{name}_{label}.{ext}");
                curves.push(json!({
                    "label": label,
                    "file": file,
                    "detuning_over_gamma": ratio,
                    "numeric_minimum": { "xi2_norm": x_min, "ratio": s_min },
                    "closed_form_minimum": {
                        "xi2_norm": optima.best.coupling_squared() / FIG_XI2,
                        "ratio": optima.best.ratio_to_sql,
                    },
                    "balanced_point": optima.balanced.map(|b| json!({
                        "xi2_norm": b.coupling_squared() / FIG_XI2,
                        "ratio": b.ratio_to_sql,
                    })),
                }));
                files.push((file, table));
            }
            (
                json!({
                    "omega": 0.0,
                    "oscillator": { "mass": 1.0, "resonance": 1.0, "damping": 0.0 },
                    "gamma": FIG_GAMMA,
                    "regime": "quasistatic",
                    "xi2_axis": { "lo": g.lo, "hi": g.hi, "points_per_decade": g.points_per_decade },
                }),
                json!({
                    "xi2_norm": "xi^2 / xi_SQL^2[0]",
                    "s_sig": "S_sig / S_SQL[0], S_SQL[0] = hbar chi[0]",
                    "static_ok": "false inside the statically unstable (dashed) domain",
                }),
            )
        }
        FigureId::Fig3 | FigureId::Fig4 => {
            let fig4 = spec.id == FigureId::Fig4;
            let default_grid = if fig4 {
                GridSpec {
                    lo: 0.1,
                    hi: 1e3,
                    points_per_decade: 400,
                }
            } else {
                GridSpec {
                    lo: 0.1,
                    hi: 10.0,
                    points_per_decade: 400,
                }
            };
            let g = grid.unwrap_or(default_grid);
            let axis = log_grid(g.lo, g.hi, g.points_per_decade)?;
            let regime = if fig4 {
                Regime::Full
            } else {
                Regime::Quasistatic
            };
            let (resonance, damping) = (1e-3, 1e-6);
            for (i, &ratio) in spec.detunings.iter().enumerate() {
                let label = curve_label(None, i);
                let bandwidth = if fig4 { spec.bandwidths[i] } else { 1e9 };
                let sensor = fig_sensor(resonance, damping, bandwidth)?;
                let wp = WorkingPoint::from_ratio(ratio, FIG_GAMMA, FIG_XI2.sqrt())?;
                let mut table = Table::new(&SPECTRUM_COLUMNS);
                table
                    .meta("figure", name)
                    .meta("curve", &label)
                    .meta("detuning_over_gamma", ratio)
                    .meta("regime", format!("{regime:?}").to_lowercase());
                if fig4 {
                    table.meta("bandwidth_over_omega_sql", bandwidth);
                }
                let spectrum = push_curve(
                    &mut table,
                    &label,
                    &sensor,
                    &wp,
                    &axis,
                    regime,
                    &Scale {
                        omega: 1.0,
                        noise: 1.0,
                    },
                )?;
                let file = format!("{name}_{label}.{ext}");
                let mut entry = json!({
                    "label": label,
                    "file": file,
                    "detuning_over_gamma": ratio,
                    "stability": stability_json(&spectrum.stability),
                });
                if fig4 {
                    entry["bandwidth_over_omega_sql"] = json!(bandwidth);
                    entry["dips"] = match dip_analysis(&spectrum, &sensor) {
                        Ok(report) => json!({
                            "found": report.dips.iter().map(|d| json!({
                                "omega_norm": d.omega,
                                "depth": d.depth,
                                "ratio_to_local_sql": d.ratio_to_local_sql,
                            })).collect::<Vec<_>>(),
                            "omega_minus": report.omega_minus(),
                            "omega_plus": report.omega_plus(),
                            "predicted": report.predicted,
                        }),
                        Err(Error::NoDipFound) => json!({ "found": [] }),
                        Err(e) => return Err(e.into()),
                    };
                } else {
                    let (best, _) =
                        spectrum
                            .ratio()
                            .enumerate()
                            .fold(
                                (0, f64::INFINITY),
                                |acc, (i, r)| if r < acc.1 { (i, r) } else { acc },
                            );
                    let closed = highfreq_optimum(&sensor, &wp)?;
                    entry["grid_minimum"] = json!({
                        "omega_norm": axis[best],
                        "ratio": spectrum.s_sig[best] / spectrum.s_sql[best],
                    });
                    entry["closed_form_minimum"] = json!({
                        "omega_norm": closed.omega,
                        "ratio": closed.ratio_to_sql,
                    });
                }
                curves.push(entry);
                files.push((file, table));
            }
            (
                json!({
                    "oscillator": { "mass": 1.0, "resonance": resonance, "damping": damping },
                    "gamma": FIG_GAMMA,
                    "xi2": FIG_XI2,
                    "regime": format!("{regime:?}").to_lowercase(),
                    "grid": { "lo": g.lo, "hi": g.hi, "points_per_decade": g.points_per_decade },
                }),
                json!({
                    "omega_norm": "Omega / Omega_SQL",
                    "s_sig": "S_sig / S_SQL[Omega_SQL], S_SQL[Omega_SQL] = hbar / (M Omega_SQL^2)",
                    "s_sql": "local SQL hbar |chi[Omega]| in the same units",
                    "ratio": "s_sig / s_sql",
                }),
            )
        }
    };
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "figure": name,
        "units": "normalized",
        "format": ext,
        "generator": format!("optospring {}", env!("CARGO_PKG_VERSION")),
        "parameters": parameters,
        "normalization": normalization,
        "curves": curves,
    });
    Ok(FigureOutput { files, manifest })
}

/// Directory for figure output when none is configured.
pub fn default_figure_dir(id: FigureId) -> PathBuf {
    PathBuf::from(id.name())
}
