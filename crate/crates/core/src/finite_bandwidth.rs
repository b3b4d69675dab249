//! Full frequency-dependent response of the detuned cavity, without the
//! quasi-static approximation.
//!
//! The intracavity field obeys
//! `(gamma - i psi - i Omega tau) a = sqrt(2 gamma) a_in + i kappa (X_m + X_sig)`.
//! Eliminating the field gives three radiation-pressure channels (incident
//! noise, mirror motion, signal) and the output phase quadrature
//! `q_out = G (X_m + X_sig) + Q q_in + P p_in`. The mirror obeys
//! `X_m = chi (F_in + F_m + F_sig)`; since `F_m` and `F_sig` share the same
//! prefactor, `X_m` is closed by the effective susceptibility.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::StabilityReport;
use crate::params::{Sensor, WorkingPoint};
use crate::quasistatic::{self, InputNoiseModel};

/// Default grid density for dip searches.
pub const DEFAULT_POINTS_PER_DECADE: usize = 400;
/// Minimum density accepted by [`dip_analysis`].
pub const MIN_DIP_POINTS_PER_DECADE: f64 = 30.0;

/// Radiation-pressure force per unit of each input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceTransfer {
    pub f_p: Complex64,
    pub f_q: Complex64,
    /// Force per unit mirror displacement.
    pub f_m: Complex64,
    /// Force per unit signal displacement; equal to `f_m`.
    pub f_sig: Complex64,
}

pub fn radiation_force_transfer(
    sensor: &Sensor,
    detuning: f64,
    kappa: f64,
    omega: f64,
) -> ForceTransfer {
    let cav = &sensor.cavity;
    let hbar = sensor.hbar();
    let gamma = cav.gamma();
    let wt = omega * cav.round_trip();
    let r2 = cav.resonance_norm_sqr(detuning);
    let delta = cav.loop_denominator(detuning, omega);
    let prefactor = hbar * kappa * (2.0 * gamma / r2).sqrt();
    let motion = -2.0 * hbar * kappa * kappa * detuning / delta;
    ForceTransfer {
        f_p: prefactor * Complex64::new(r2, -gamma * wt) / delta,
        f_q: prefactor * Complex64::new(0.0, -detuning * wt) / delta,
        f_m: motion,
        f_sig: motion,
    }
}

/// Output phase quadrature in terms of the total length change `X_m + X_sig`
/// and the incident quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OpticalReadout {
    gain: Complex64,
    q: Complex64,
    p: Complex64,
}

fn optical_readout(sensor: &Sensor, wp: &WorkingPoint, omega: f64) -> OpticalReadout {
    let cav = &sensor.cavity;
    let gamma = cav.gamma();
    let psi = wp.detuning();
    let wt = omega * cav.round_trip();
    let r2 = cav.resonance_norm_sqr(psi);
    let delta = cav.loop_denominator(psi, omega);
    OpticalReadout {
        gain: 2.0 * wp.coupling() * Complex64::new(r2, -gamma * wt) / delta,
        q: (r2 + wt * wt * (gamma * gamma - psi * psi) / r2) / delta,
        p: -2.0 * wt * wt * gamma * psi / (r2 * delta),
    }
}

/// Output coefficients of `q_in`, `p_in`, and `X_sig`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullTransfer {
    pub c_q: Complex64,
    pub c_p: Complex64,
    pub c_sig: Complex64,
}

impl FullTransfer {
    pub fn equivalent_input_noise(&self, noise: &InputNoiseModel) -> Result<f64> {
        let gain = self.c_sig.norm_sqr();
        if gain == 0.0 {
            return Err(Error::NoMeasurement);
        }
        Ok(noise.output_noise(self.c_q, self.c_p) / gain)
    }
}

pub fn full_transfer(sensor: &Sensor, wp: &WorkingPoint, omega: f64) -> Result<FullTransfer> {
    let psi = wp.detuning();
    let kappa = sensor.cavity.kappa_from_coupling(psi, wp.coupling());
    let chi = sensor.oscillator.susceptibility(omega)?;
    let chi_eff = sensor.effective_susceptibility(psi, kappa, omega)?;
    let force = radiation_force_transfer(sensor, psi, kappa, omega);
    let out = optical_readout(sensor, wp, omega);
    Ok(FullTransfer {
        c_q: out.gain * chi_eff * force.f_q + out.q,
        c_p: out.gain * chi_eff * force.f_p + out.p,
        c_sig: out.gain * chi_eff / chi,
    })
}

/// Equivalent input noise at one frequency.
///
/// Both the noise and the signal coefficients carry `chi_eff`, so the ratio
/// is formed with `chi_eff^-1` multiplied through. This stays accurate next to
/// the optical-spring resonance where `chi_eff` itself is huge.
pub fn equivalent_input_noise(
    sensor: &Sensor,
    wp: &WorkingPoint,
    omega: f64,
    noise: &InputNoiseModel,
) -> Result<f64> {
    if wp.coupling() == 0.0 {
        return Err(Error::NoMeasurement);
    }
    let psi = wp.detuning();
    let kappa = sensor.cavity.kappa_from_coupling(psi, wp.coupling());
    let chi = sensor.oscillator.susceptibility(omega)?;
    let inv_eff = sensor.inverse_effective_susceptibility(psi, kappa, omega);
    if inv_eff == Complex64::new(0.0, 0.0) {
        return Err(Error::Singular {
            what: "effective susceptibility",
            omega,
        });
    }
    let force = radiation_force_transfer(sensor, psi, kappa, omega);
    let out = optical_readout(sensor, wp, omega);
    let gain = out.gain.norm_sqr();
    if gain == 0.0 {
        return Err(Error::NoMeasurement);
    }
    let n_q = out.q * inv_eff + out.gain * force.f_q;
    let n_p = out.p * inv_eff + out.gain * force.f_p;
    Ok(chi.norm_sqr() * noise.output_noise(n_q, n_p) / gain)
}

/// Which response model a spectrum was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `Omega << Omega_cav` closed form.
    Quasistatic,
    /// Full finite-bandwidth response.
    Full,
}

/// Equivalent input noise on a frequency grid, with the SQL reference curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub omega: Vec<f64>,
    pub s_sig: Vec<f64>,
    /// `hbar |chi[Omega]|` on the same grid.
    pub s_sql: Vec<f64>,
    pub regime: Regime,
    pub noise: InputNoiseModel,
    pub working_point: WorkingPoint,
    pub stability: StabilityReport,
}

impl NoiseSpectrum {
    pub fn ratio(&self) -> impl Iterator<Item = f64> + '_ {
        self.s_sig.iter().zip(&self.s_sql).map(|(s, q)| s / q)
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

/// Logarithmic grid from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(invalid("grid", "need 0 < lo < hi"));
    }
    if points_per_decade == 0 {
        return Err(invalid("grid.points_per_decade", "must be >= 1"));
    }
    let decades = (hi / lo).log10();
    let intervals = ((decades * points_per_decade as f64).round() as usize).max(1);
    let step = (hi / lo).ln() / intervals as f64;
    let mut grid: Vec<f64> = (0..=intervals)
        .map(|i| lo * (step * i as f64).exp())
        .collect();
    grid[intervals] = hi;
    Ok(grid)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty"));
    }
    if grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(invalid("grid", "frequencies must be finite and > 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Full finite-bandwidth spectrum.
pub fn spectrum(
    sensor: &Sensor,
    wp: &WorkingPoint,
    grid: &[f64],
    noise: &InputNoiseModel,
) -> Result<NoiseSpectrum> {
    spectrum_in(Regime::Full, sensor, wp, grid, noise)
}

pub fn spectrum_in(
    regime: Regime,
    sensor: &Sensor,
    wp: &WorkingPoint,
    grid: &[f64],
    noise: &InputNoiseModel,
) -> Result<NoiseSpectrum> {
    validate_grid(grid)?;
    let hbar = sensor.hbar();
    let mut s_sig = Vec::with_capacity(grid.len());
    let mut s_sql = Vec::with_capacity(grid.len());
    for &w in grid {
        let s = match regime {
            Regime::Full => equivalent_input_noise(sensor, wp, w, noise)?,
            Regime::Quasistatic => quasistatic::equivalent_input_noise(sensor, wp, w, noise)?,
        };
        s_sig.push(s);
        s_sql.push(hbar * sensor.oscillator.susceptibility(w)?.norm());
    }
    Ok(NoiseSpectrum {
        omega: grid.to_vec(),
        s_sig,
        s_sql,
        regime,
        noise: *noise,
        working_point: *wp,
        stability: sensor.stability(wp),
    })
}

/// A refined local minimum of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub omega: f64,
    pub s_sig: f64,
    /// Noise relative to the free-mass SQL at `Omega_SQL`, `hbar / (M Omega_SQL^2)`.
    pub depth: f64,
    /// Noise relative to `hbar |chi|` at the dip frequency.
    pub ratio_to_local_sql: f64,
}

/// Large-detuning asymptotics for the two dips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipPrediction {
    /// `Omega_SQL sqrt(psi / 2 gamma)`; only for positive detuning.
    pub omega_minus: Option<f64>,
    /// `Omega_cav sqrt(1 + psi^2 / gamma^2)`.
    pub omega_plus: f64,
    /// `2 gamma^2 / psi^2`.
    pub depth: f64,
    /// `2 (Omega_cav / Omega_SQL)^2`.
    pub ratio_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipReport {
    pub omega_sql: f64,
    /// Every dip found, ascending in frequency.
    pub dips: Vec<Dip>,
    /// Optical-spring dip.
    pub minus: Option<Dip>,
    /// Detuned-cavity optical dip.
    pub plus: Option<Dip>,
    pub predicted: DipPrediction,
}

impl DipReport {
    pub fn omega_minus(&self) -> Option<f64> {
        self.minus.map(|d| d.omega)
    }

    pub fn omega_plus(&self) -> Option<f64> {
        self.plus.map(|d| d.omega)
    }

    pub fn depth_minus(&self) -> Option<f64> {
        self.minus.map(|d| d.depth)
    }

    pub fn depth_plus(&self) -> Option<f64> {
        self.plus.map(|d| d.depth)
    }

    pub fn below_sql_plus(&self) -> bool {
        self.plus.is_some_and(|d| d.ratio_to_local_sql < 1.0)
    }
}

/// Indices of strict interior local minima.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .collect()
}

/// Locates the sensitivity dips: local minima of the spectrum that lie below
/// the resonant (`psi = 0`) spectrum at the same coupling and bandwidth.
pub fn dip_analysis(spectrum: &NoiseSpectrum, sensor: &Sensor) -> Result<DipReport> {
    let grid = &spectrum.omega;
    if grid.len() < 3 {
        return Err(invalid("grid", "need at least 3 points"));
    }
    let coarsest = grid
        .windows(2)
        .map(|w| (w[1] / w[0]).log10())
        .fold(0.0, f64::max);
    if coarsest * MIN_DIP_POINTS_PER_DECADE > 1.0 + 1e-9 {
        return Err(invalid(
            "grid",
            format!("dip search needs >= {MIN_DIP_POINTS_PER_DECADE} points per decade"),
        ));
    }
    let wp = spectrum.working_point;
    let hbar = sensor.hbar();
    let mass = sensor.oscillator.mass();
    let gamma = sensor.cavity.gamma();
    let psi = wp.detuning();
    let omega_sql = quasistatic::omega_sql(hbar, mass, wp.coupling());
    let s_sql_ref = hbar / (mass * omega_sql * omega_sql);

    let resonant = WorkingPoint::new(0.0, wp.coupling())?;
    let reference = spectrum_in(spectrum.regime, sensor, &resonant, grid, &spectrum.noise)?;

    let mut dips = Vec::new();
    for i in local_minima(&spectrum.s_sig) {
        if spectrum.s_sig[i] >= reference.s_sig[i] * (1.0 - 1e-9) {
            continue;
        }
        let (omega, s_sig) = parabolic_vertex(
            [grid[i - 1], grid[i], grid[i + 1]],
            [
                spectrum.s_sig[i - 1],
                spectrum.s_sig[i],
                spectrum.s_sig[i + 1],
            ],
        );
        let local_sql = hbar * sensor.oscillator.susceptibility(omega)?.norm();
        dips.push(Dip {
            omega,
            s_sig,
            depth: s_sig / s_sql_ref,
            ratio_to_local_sql: s_sig / local_sql,
        });
    }
    if dips.is_empty() {
        return Err(Error::NoDipFound);
    }

    let bandwidth = sensor.cavity.bandwidth();
    let predicted = DipPrediction {
        omega_minus: (psi > 0.0).then(|| omega_sql * (psi / (2.0 * gamma)).sqrt()),
        omega_plus: bandwidth * (1.0 + (psi / gamma).powi(2)).sqrt(),
        depth: 2.0 * gamma * gamma / (psi * psi),
        ratio_plus: 2.0 * (bandwidth / omega_sql).powi(2),
    };
    let (minus, plus) = assign_dips(&dips, &predicted);
    Ok(DipReport {
        omega_sql,
        dips,
        minus,
        plus,
        predicted,
    })
}

fn assign_dips(dips: &[Dip], predicted: &DipPrediction) -> (Option<Dip>, Option<Dip>) {
    let log_distance = |d: &Dip, target: f64| (d.omega / target).ln().abs();
    let nearest = |target: f64, skip: Option<usize>| {
        dips.iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .min_by(|a, b| log_distance(a.1, target).total_cmp(&log_distance(b.1, target)))
            .map(|(i, d)| (i, *d))
    };
    let Some(target_minus) = predicted.omega_minus else {
        return (None, nearest(predicted.omega_plus, None).map(|(_, d)| d));
    };
    if dips.len() == 1 {
        let d = dips[0];
        return if log_distance(&d, target_minus) < log_distance(&d, predicted.omega_plus) {
            (Some(d), None)
        } else {
            (None, Some(d))
        };
    }
    let plus = nearest(predicted.omega_plus, None);
    let minus = nearest(target_minus, plus.map(|(i, _)| i));
    (minus.map(|(_, d)| d), plus.map(|(_, d)| d))
}

/// Vertex of the parabola through three samples in log-log coordinates.
fn parabolic_vertex(omega: [f64; 3], s: [f64; 3]) -> (f64, f64) {
    let x = omega.map(f64::ln);
    let y = s.map(f64::ln);
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d12 - d01) / (x[2] - x[0]);
    if curvature <= 0.0 {
        return (omega[1], s[1]);
    }
    // y = y1 + b (x - x1) + c (x - x1)^2 with c = curvature
    let slope = d01 + curvature * (x[1] - x[0]);
    let dx = -slope / (2.0 * curvature);
    let dx = dx.clamp(x[0] - x[1], x[2] - x[1]);
    (
        (x[1] + dx).exp(),
        (y[1] + slope * dx + curvature * dx * dx).exp(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Constants, MechanicalOscillator, OpticalCavity};
    use approx::assert_relative_eq;

    fn sensor(bandwidth: f64) -> Sensor {
        Sensor::new(
            Constants::NORMALIZED,
            MechanicalOscillator::new(1.0, 1e-3, 1e-6).unwrap(),
            OpticalCavity::with_bandwidth(1e-3, bandwidth, 1.0, 0.0).unwrap(),
        )
    }

    #[test]
    fn resonant_force_depends_only_on_amplitude_quadrature() {
        let s = sensor(2.0);
        let f = radiation_force_transfer(&s, 0.0, 3.0, 1.7);
        assert_eq!(f.f_m, Complex64::new(0.0, 0.0));
        assert_eq!(f.f_sig, Complex64::new(0.0, 0.0));
        assert_eq!(f.f_q, Complex64::new(0.0, 0.0));
        assert!(f.f_p.norm() > 0.0);
    }

    #[test]
    fn static_motion_force() {
        let s = sensor(2.0);
        let (psi, kappa) = (0.004, 2.0);
        let f = radiation_force_transfer(&s, psi, kappa, 0.0);
        let expected = -2.0 * kappa * kappa * psi / (1e-6 + psi * psi);
        assert_relative_eq!(f.f_m.re, expected, max_relative = 1e-13);
        assert_eq!(f.f_m.im, 0.0);
        assert_eq!(f.f_m, f.f_sig);
    }

    #[test]
    fn vacuum_is_rotated_not_amplified() {
        let s = sensor(0.7);
        for &r in &[-12.0, -1.0, 0.0, 3.0, 20.0] {
            let wp = WorkingPoint::from_ratio(r, 1e-3, 0.0).unwrap();
            for &w in &[0.01, 0.5, 0.7, 3.0, 40.0] {
                let t = full_transfer(&s, &wp, w).unwrap();
                assert_relative_eq!(
                    t.c_q.norm_sqr() + t.c_p.norm_sqr(),
                    1.0,
                    max_relative = 1e-13
                );
                assert_eq!(t.c_sig, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn resonant_signal_is_low_pass_filtered() {
        let s = sensor(2.0);
        let xi = 0.5f64.sqrt();
        let wp = WorkingPoint::new(0.0, xi).unwrap();
        for &w in &[0.5, 2.0, 8.0] {
            let t = full_transfer(&s, &wp, w).unwrap();
            let expected = 2.0 * xi / (1.0 + (w / 2.0).powi(2)).sqrt();
            assert_relative_eq!(t.c_sig.norm(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn scaled_noise_matches_coefficient_noise() {
        let s = sensor(2.0);
        for &(r, w) in &[(10.0, 2.0), (-10.0, 19.0), (3.0, 0.3), (0.0, 1.0)] {
            let wp = WorkingPoint::from_ratio(r, 1e-3, 0.5f64.sqrt()).unwrap();
            let a = equivalent_input_noise(&s, &wp, w, &InputNoiseModel::COHERENT).unwrap();
            let b = full_transfer(&s, &wp, w)
                .unwrap()
                .equivalent_input_noise(&InputNoiseModel::COHERENT)
                .unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn grid_construction_and_validation() {
        let g = log_grid(0.01, 1000.0, 400).unwrap();
        assert_eq!(g.len(), 2001);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[2000], 1000.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(log_grid(1.0, 1.0, 10).is_err());
        assert!(log_grid(0.0, 1.0, 10).is_err());
        let s = sensor(2.0);
        let wp = WorkingPoint::new(0.0, 0.7).unwrap();
        assert!(spectrum(&s, &wp, &[1.0, 0.5], &InputNoiseModel::COHERENT).is_err());
        assert!(spectrum(&s, &wp, &[], &InputNoiseModel::COHERENT).is_err());
    }

    #[test]
    fn resonant_cavity_has_no_dip() {
        let s = sensor(2.0);
        let wp = WorkingPoint::new(0.0, 0.5f64.sqrt()).unwrap();
        let grid = log_grid(0.01, 1000.0, 100).unwrap();
        let spec = spectrum(&s, &wp, &grid, &InputNoiseModel::COHERENT).unwrap();
        assert_eq!(dip_analysis(&spec, &s), Err(Error::NoDipFound));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let s = sensor(2.0);
        let wp = WorkingPoint::from_ratio(10.0, 1e-3, 0.5f64.sqrt()).unwrap();
        let grid = log_grid(0.01, 1000.0, 10).unwrap();
        let spec = spectrum(&s, &wp, &grid, &InputNoiseModel::COHERENT).unwrap();
        assert!(matches!(
            dip_analysis(&spec, &s),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn parabola_vertex_recovers_exact_parabola() {
        // ln s = 1 + (ln w - 0.2)^2
        let w = [0.9f64, 1.0, 1.3];
        let s = w.map(|w| (1.0 + (w.ln() - 0.2).powi(2)).exp());
        let (wv, sv) = parabolic_vertex(w, s);
        assert_relative_eq!(wv, 0.2f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(sv, 1f64.exp(), max_relative = 1e-12);
    }
}
