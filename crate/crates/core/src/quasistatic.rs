//! Measurement chain in the quasi-static regime `Omega << Omega_cav`.
//!
//! The output phase quadrature is
//! `q_out = q_in + 2 hbar xi^2 chi_eff p_in + 2 xi (chi_eff / chi) X_sig`
//! with `chi_eff^-1 = chi^-1 + hbar xi^2 psi / gamma`. The equivalent input
//! noise is the output noise power divided by `|c_sig|^2`, which is the
//! spectrum of the normalized signal estimator.
//!
//! The closed-form optima below all follow from writing the spectrum, for a
//! coherent input, as
//! `S / (hbar |chi|) = [1/v + v (a^2 + 4)] / 4 + (a / 2) Re(chi) / |chi|`
//! with `v = hbar xi^2 |chi|` and `a = psi / gamma`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{Sensor, WorkingPoint};

/// Symmetrized spectra of the incident quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNoiseModel {
    pub s_q: f64,
    pub s_p: f64,
    /// Symmetrized cross-spectrum of `q_in` and `p_in`.
    pub s_pq: f64,
}

impl Default for InputNoiseModel {
    fn default() -> Self {
        Self::COHERENT
    }
}

impl InputNoiseModel {
    /// Two independent white noises with unit spectrum.
    pub const COHERENT: InputNoiseModel = InputNoiseModel {
        s_q: 1.0,
        s_p: 1.0,
        s_pq: 0.0,
    };

    pub fn new(s_q: f64, s_p: f64, s_pq: f64) -> Result<Self> {
        if !(s_q.is_finite() && s_q >= 0.0 && s_p.is_finite() && s_p >= 0.0) {
            return Err(invalid(
                "noise",
                "quadrature spectra must be finite and >= 0",
            ));
        }
        if !s_pq.is_finite() || s_pq * s_pq > s_q * s_p {
            return Err(invalid(
                "noise.s_pq",
                "cross-spectrum exceeds the Cauchy-Schwarz bound",
            ));
        }
        Ok(Self { s_q, s_p, s_pq })
    }

    pub fn is_coherent(&self) -> bool {
        *self == Self::COHERENT
    }

    /// Noise power of `c_q q_in + c_p p_in`.
    pub fn output_noise(&self, c_q: Complex64, c_p: Complex64) -> f64 {
        c_q.norm_sqr() * self.s_q
            + c_p.norm_sqr() * self.s_p
            + 2.0 * (c_q * c_p.conj()).re * self.s_pq
    }
}

/// Coefficients of `q_in`, `p_in`, and `X_sig` in the output phase quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureTransfer {
    pub c_q: Complex64,
    pub c_p: Complex64,
    pub c_sig: Complex64,
}

impl QuadratureTransfer {
    /// Equivalent input noise `(output noise) / |c_sig|^2`.
    pub fn equivalent_input_noise(&self, noise: &InputNoiseModel) -> Result<f64> {
        let gain = self.c_sig.norm_sqr();
        if gain == 0.0 {
            return Err(Error::NoMeasurement);
        }
        Ok(noise.output_noise(self.c_q, self.c_p) / gain)
    }
}

/// Transfer coefficients for an arbitrary free susceptibility value.
pub fn transfer_for_susceptibility(
    hbar: f64,
    chi: Complex64,
    coupling: f64,
    detuning_over_gamma: f64,
    omega: f64,
) -> Result<QuadratureTransfer> {
    let xi2 = coupling * coupling;
    let inv_eff = chi.inv() + hbar * xi2 * detuning_over_gamma;
    if inv_eff == Complex64::new(0.0, 0.0) {
        return Err(Error::Singular {
            what: "effective susceptibility",
            omega,
        });
    }
    let chi_eff = inv_eff.inv();
    Ok(QuadratureTransfer {
        c_q: Complex64::new(1.0, 0.0),
        c_p: 2.0 * hbar * xi2 * chi_eff,
        c_sig: 2.0 * coupling * chi_eff / chi,
    })
}

/// Quasi-static effective susceptibility `1 / (chi^-1 + hbar xi^2 psi / gamma)`.
pub fn effective_susceptibility(
    sensor: &Sensor,
    wp: &WorkingPoint,
    omega: f64,
) -> Result<Complex64> {
    let inv = sensor.oscillator.inverse_susceptibility(omega)
        + sensor.hbar() * wp.coupling_squared() * detuning_ratio(sensor, wp);
    if inv == Complex64::new(0.0, 0.0) {
        return Err(Error::Singular {
            what: "effective susceptibility",
            omega,
        });
    }
    Ok(inv.inv())
}

pub fn quadrature_transfer(
    sensor: &Sensor,
    wp: &WorkingPoint,
    omega: f64,
) -> Result<QuadratureTransfer> {
    let chi = sensor.oscillator.susceptibility(omega)?;
    transfer_for_susceptibility(
        sensor.hbar(),
        chi,
        wp.coupling(),
        detuning_ratio(sensor, wp),
        omega,
    )
}

pub fn equivalent_input_noise(
    sensor: &Sensor,
    wp: &WorkingPoint,
    omega: f64,
    noise: &InputNoiseModel,
) -> Result<f64> {
    if wp.coupling() == 0.0 {
        return Err(Error::NoMeasurement);
    }
    let chi = sensor.oscillator.susceptibility(omega)?;
    noise_for_susceptibility(
        sensor.hbar(),
        chi,
        wp.coupling(),
        detuning_ratio(sensor, wp),
        omega,
        noise,
    )
}

/// Equivalent input noise through the transfer coefficients, for any `chi`.
pub fn noise_for_susceptibility(
    hbar: f64,
    chi: Complex64,
    coupling: f64,
    detuning_over_gamma: f64,
    omega: f64,
    noise: &InputNoiseModel,
) -> Result<f64> {
    if coupling == 0.0 {
        return Err(Error::NoMeasurement);
    }
    let transfer = transfer_for_susceptibility(hbar, chi, coupling, detuning_over_gamma, omega)?;
    let s = transfer.equivalent_input_noise(noise)?;
    if cfg!(debug_assertions) && noise.is_coherent() {
        // (zeta + 1/zeta)/2 >= 1: never below hbar |chi| |chi / chi_eff|
        let chi_eff = (chi.inv() + hbar * coupling * coupling * detuning_over_gamma).inv();
        let floor = hbar * chi.norm() * (chi / chi_eff).norm();
        debug_assert!(
            s >= floor * (1.0 - 1e-12),
            "AM-GM floor violated: {s} < {floor}"
        );
    }
    Ok(s)
}

/// `S = hbar |chi| |chi / chi_eff| (zeta + 1/zeta) / 2` with `zeta = 2 hbar xi^2 |chi_eff|`.
pub fn closed_form_noise(
    hbar: f64,
    chi: Complex64,
    coupling: f64,
    detuning_over_gamma: f64,
) -> Result<f64> {
    if coupling == 0.0 {
        return Err(Error::NoMeasurement);
    }
    let xi2 = coupling * coupling;
    let chi_eff = (chi.inv() + hbar * xi2 * detuning_over_gamma).inv();
    let zeta = 2.0 * hbar * xi2 * chi_eff.norm();
    Ok(hbar * chi.norm() * (chi / chi_eff).norm() * (zeta + zeta.recip()) / 2.0)
}

/// Standard quantum limit at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqlPoint {
    pub xi_sql: f64,
    pub s_sql: f64,
    /// Frequency where a fixed coupling reaches the SQL, in the free-mass regime.
    pub omega_sql: Option<f64>,
}

/// `xi_SQL = (2 hbar |chi|)^-1/2`, `S_SQL = hbar |chi|`.
pub fn sql(sensor: &Sensor, omega: f64) -> Result<SqlPoint> {
    let chi = sensor
        .oscillator
        .susceptibility(omega)
        .map_err(|_| Error::DegenerateDissipation)?;
    Ok(sql_for_susceptibility(sensor.hbar(), chi))
}

pub fn sql_for_susceptibility(hbar: f64, chi: Complex64) -> SqlPoint {
    let modulus = chi.norm();
    SqlPoint {
        xi_sql: (2.0 * hbar * modulus).sqrt().recip(),
        s_sql: hbar * modulus,
        omega_sql: None,
    }
}

/// `Omega_SQL = sqrt(2 hbar xi^2 / M)`, valid where `chi ~ -1 / (M Omega^2)`.
pub fn omega_sql(hbar: f64, mass: f64, coupling: f64) -> f64 {
    (2.0 * hbar * coupling * coupling / mass).sqrt()
}

/// SQL reached by a fixed coupling in the free-mass regime.
pub fn free_mass_sql(hbar: f64, mass: f64, coupling: f64) -> SqlPoint {
    let omega = omega_sql(hbar, mass, coupling);
    SqlPoint {
        xi_sql: coupling,
        s_sql: hbar / (mass * omega * omega),
        omega_sql: Some(omega),
    }
}

/// Signal amplification `|chi_eff / chi| = |1 + hbar xi^2 (psi/gamma) chi|^-1`.
/// Caller is responsible for static stability.
pub fn amplification_factor(sensor: &Sensor, wp: &WorkingPoint, omega: f64) -> Result<f64> {
    let chi = sensor.oscillator.susceptibility(omega)?;
    let term = 1.0 + sensor.hbar() * wp.coupling_squared() * detuning_ratio(sensor, wp) * chi;
    if term == Complex64::new(0.0, 0.0) {
        return Err(Error::StabilityBoundary);
    }
    Ok(term.norm().recip())
}

/// A closed-form or numeric optimum of the equivalent input noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumPoint {
    pub coupling: f64,
    pub detuning: Option<f64>,
    pub omega: Option<f64>,
    pub s_min: f64,
    /// Ratio to the SQL at the same frequency as `s_min`.
    pub ratio_to_sql: f64,
}

impl OptimumPoint {
    pub fn coupling_squared(&self) -> f64 {
        self.coupling * self.coupling
    }
}

/// Optimum ratio `sqrt(1 + b^2) + b cos` for `b = psi / 2 gamma` and
/// `cos = Re(chi) / |chi|`.
pub fn optimum_ratio(half_ratio: f64, cos: f64) -> f64 {
    half_ratio.hypot(1.0) + half_ratio * cos
}

/// Low-frequency optima (real, positive `chi[0]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowFrequencyOptima {
    /// True minimum over the coupling.
    pub best: OptimumPoint,
    /// The point where phase and radiation-pressure noises balance
    /// (`zeta = 1`); absent when `psi >= 2 gamma`.
    pub balanced: Option<OptimumPoint>,
}

pub fn lowfreq_optimum(sensor: &Sensor, detuning: f64) -> LowFrequencyOptima {
    let b = detuning / (2.0 * sensor.cavity.gamma());
    if b > 0.0 {
        log::warn!("positive detuning cannot beat the SQL below the mechanical resonance");
    }
    let chi0 = sensor.oscillator.static_susceptibility();
    let hbar = sensor.hbar();
    let xi_sql2 = 1.0 / (2.0 * hbar * chi0);
    let s_sql = hbar * chi0;
    let ratio = optimum_ratio(b, 1.0);
    let best = OptimumPoint {
        coupling: (xi_sql2 / b.hypot(1.0)).sqrt(),
        detuning: Some(detuning),
        omega: Some(0.0),
        s_min: ratio * s_sql,
        ratio_to_sql: ratio,
    };
    let balanced = (b < 1.0).then(|| {
        let ratio = 1.0 / (1.0 - b);
        OptimumPoint {
            coupling: (xi_sql2 / (1.0 - b)).sqrt(),
            detuning: Some(detuning),
            omega: Some(0.0),
            s_min: ratio * s_sql,
            ratio_to_sql: ratio,
        }
    });
    LowFrequencyOptima { best, balanced }
}

/// Frequency that minimizes the ratio to the local SQL at fixed `(xi, psi)`
/// in the free-mass regime `chi = -1 / (M Omega^2)`.
pub fn highfreq_optimum(sensor: &Sensor, wp: &WorkingPoint) -> Result<OptimumPoint> {
    if wp.coupling() == 0.0 {
        return Err(Error::NoMeasurement);
    }
    let b = detuning_ratio(sensor, wp) / 2.0;
    if b < 0.0 {
        log::warn!("negative detuning cannot beat the SQL above the mechanical resonance");
    }
    let hbar = sensor.hbar();
    let mass = sensor.oscillator.mass();
    let omega_sql = omega_sql(hbar, mass, wp.coupling());
    let omega_min = omega_sql * b.hypot(1.0).sqrt();
    let ratio = optimum_ratio(b, -1.0);
    Ok(OptimumPoint {
        coupling: wp.coupling(),
        detuning: Some(wp.detuning()),
        omega: Some(omega_min),
        s_min: ratio * hbar / (mass * omega_min * omega_min),
        ratio_to_sql: ratio,
    })
}

/// Optimum over the coupling at fixed `(Omega, psi)` for complex `chi`.
pub fn general_optimum_xi(sensor: &Sensor, omega: f64, detuning: f64) -> Result<OptimumPoint> {
    let chi = sensor.oscillator.susceptibility(omega)?;
    let b = detuning / (2.0 * sensor.cavity.gamma());
    let point = optimum_for_susceptibility(sensor.hbar(), chi, b);
    Ok(OptimumPoint {
        detuning: Some(detuning),
        omega: Some(omega),
        ..point
    })
}

/// Closed-form optimum over the coupling for a given `chi` and `b = psi / 2 gamma`.
pub fn optimum_for_susceptibility(hbar: f64, chi: Complex64, half_ratio: f64) -> OptimumPoint {
    let sql = sql_for_susceptibility(hbar, chi);
    let ratio = optimum_ratio(half_ratio, chi.re / chi.norm());
    OptimumPoint {
        coupling: sql.xi_sql / half_ratio.hypot(1.0).sqrt(),
        detuning: None,
        omega: None,
        s_min: ratio * sql.s_sql,
        ratio_to_sql: ratio,
    }
}

/// Optimum over both coupling and detuning: `psi_min / 2 gamma = -Re chi / |Im chi|`,
/// `S_min = hbar |Im chi|`.
pub fn ultimate_quantum_limit(sensor: &Sensor, omega: f64) -> Result<OptimumPoint> {
    if sensor.oscillator.damping() == 0.0 {
        return Err(Error::DegenerateDissipation);
    }
    let chi = sensor.oscillator.susceptibility(omega)?;
    if chi.im == 0.0 {
        return Err(Error::DegenerateDissipation);
    }
    let b = -chi.re / chi.im.abs();
    let detuning = 2.0 * sensor.cavity.gamma() * b;
    let coupling = optimum_for_susceptibility(sensor.hbar(), chi, b).coupling;
    Ok(OptimumPoint {
        coupling,
        detuning: Some(detuning),
        omega: Some(omega),
        s_min: sensor.hbar() * chi.im.abs(),
        ratio_to_sql: chi.im.abs() / chi.norm(),
    })
}

fn detuning_ratio(sensor: &Sensor, wp: &WorkingPoint) -> f64 {
    wp.detuning() / sensor.cavity.gamma()
}
