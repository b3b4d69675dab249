//! Cavity steady state, optical-spring response, and stability tests.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{OpticalCavity, Sensor, WorkingPoint};

/// Mean fields of the driven cavity. The global phase is chosen so that the
/// intracavity amplitude is real and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub a_bar: f64,
    pub a_in_bar: Complex64,
    pub a_out_bar: Complex64,
    pub theta_in: f64,
    pub theta_out: f64,
    /// Intracavity intensity `|a|^2` as a photon flux.
    pub intensity: f64,
    /// `kappa = 2 k a_bar`.
    pub kappa: f64,
}

impl OpticalCavity {
    /// `|gamma - i psi|^2 = gamma^2 + psi^2`.
    pub fn resonance_norm_sqr(&self, detuning: f64) -> f64 {
        self.gamma() * self.gamma() + detuning * detuning
    }

    pub fn steady_state(&self, detuning: f64, input_amplitude: f64) -> Result<SteadyState> {
        if !(input_amplitude.is_finite() && input_amplitude >= 0.0) {
            return Err(invalid("input_amplitude", "must be finite and >= 0"));
        }
        let gamma = self.gamma();
        let norm = self.resonance_norm_sqr(detuning).sqrt();
        let sqrt_2g = (2.0 * gamma).sqrt();
        let a_bar = sqrt_2g * input_amplitude / norm;
        // a_bar = sqrt(2 gamma) / (gamma - i psi) a_in = sqrt(2 gamma) / (gamma + i psi) a_out
        let a_in_bar = Complex64::new(gamma, -detuning) * (a_bar / sqrt_2g);
        let a_out_bar = Complex64::new(gamma, detuning) * (a_bar / sqrt_2g);
        Ok(SteadyState {
            a_bar,
            a_in_bar,
            a_out_bar,
            theta_in: detuning.atan2(gamma),
            theta_out: (-detuning).atan2(gamma),
            intensity: a_bar * a_bar,
            kappa: 2.0 * self.wavevector() * a_bar,
        })
    }

    /// `Delta(Omega) = (gamma - i Omega tau)^2 + psi^2`.
    pub fn loop_denominator(&self, detuning: f64, omega: f64) -> Complex64 {
        let g = Complex64::new(self.gamma(), -omega * self.round_trip());
        g * g + detuning * detuning
    }

    /// Optomechanical coupling `xi = 2k (2 gamma / (gamma^2 + psi^2)) |a_in|`.
    pub fn coupling_from_input(&self, detuning: f64, input_amplitude: f64) -> f64 {
        2.0 * self.wavevector() * 2.0 * self.gamma() / self.resonance_norm_sqr(detuning)
            * input_amplitude
    }

    /// Inverse of [`OpticalCavity::coupling_from_input`].
    pub fn input_from_coupling(&self, detuning: f64, coupling: f64) -> f64 {
        coupling * self.resonance_norm_sqr(detuning) / (4.0 * self.wavevector() * self.gamma())
    }

    /// `kappa = xi sqrt((gamma^2 + psi^2) / (2 gamma))`.
    pub fn kappa_from_coupling(&self, detuning: f64, coupling: f64) -> f64 {
        coupling * (self.resonance_norm_sqr(detuning) / (2.0 * self.gamma())).sqrt()
    }
}

/// Result of the static and dynamic stability tests at one working point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub static_ok: bool,
    pub dynamic_ok: bool,
    /// Effective mechanical damping (rad/s).
    pub gamma_eff: f64,
    /// `gamma^2 + psi^2 + 2 hbar kappa^2 chi[0] psi`.
    pub static_margin: f64,
    /// Same as `gamma_eff`; kept separate so both margins read alike.
    pub dynamic_margin: f64,
    /// False when the oscillator quality factor is too low for the
    /// Lorentzian effective-damping estimate.
    pub high_q: bool,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.static_ok && self.dynamic_ok
    }

    /// Exactly on the static boundary, where the amplification factor diverges.
    pub fn on_static_boundary(&self) -> bool {
        self.static_margin == 0.0
    }
}

/// One real solution of the self-consistent detuning cubic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentRoot {
    pub detuning: f64,
    pub steady_state: SteadyState,
    pub static_ok: bool,
    pub static_margin: f64,
}

impl Sensor {
    /// `chi_eff^-1 = chi^-1 + 2 hbar kappa^2 psi / Delta(Omega)`.
    pub fn inverse_effective_susceptibility(
        &self,
        detuning: f64,
        kappa: f64,
        omega: f64,
    ) -> Complex64 {
        let inv = self.oscillator.inverse_susceptibility(omega);
        if detuning == 0.0 {
            return inv;
        }
        let delta = self.cavity.loop_denominator(detuning, omega);
        inv + 2.0 * self.hbar() * kappa * kappa * detuning / delta
    }

    pub fn effective_susceptibility(
        &self,
        detuning: f64,
        kappa: f64,
        omega: f64,
    ) -> Result<Complex64> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(invalid("kappa", "must be finite and >= 0"));
        }
        if detuning == 0.0 {
            return self.oscillator.susceptibility(omega);
        }
        let bare = self.oscillator.inverse_susceptibility(omega);
        let inv = self.inverse_effective_susceptibility(detuning, kappa, omega);
        // cancellation to rounding level means the point sits on the pole
        if inv.norm() <= 8.0 * f64::EPSILON * (bare.norm() + (inv - bare).norm()) {
            return Err(Error::Singular {
                what: "effective susceptibility",
                omega,
            });
        }
        Ok(inv.inv())
    }

    /// Lorentzian effective damping with `Delta` taken at the mechanical
    /// resonance. Only meaningful for a high-Q oscillator.
    pub fn effective_damping(&self, detuning: f64, kappa: f64) -> f64 {
        let osc = &self.oscillator;
        if !osc.is_high_q() {
            log::warn!(
                "effective damping estimate used with Q = {:.3}, outside the high-Q regime",
                osc.quality_factor()
            );
        }
        self.lorentzian_damping(detuning, kappa)
    }

    fn lorentzian_damping(&self, detuning: f64, kappa: f64) -> f64 {
        let osc = &self.oscillator;
        let gamma = self.cavity.gamma();
        let delta = self.cavity.loop_denominator(detuning, osc.resonance());
        let optical = 4.0 * self.hbar() * kappa * kappa / (osc.mass() * self.cavity.bandwidth())
            * gamma
            * gamma
            * detuning
            / delta.norm_sqr();
        osc.damping() - optical
    }

    /// Static margin `gamma^2 + psi^2 + 2 hbar kappa^2 chi[0] psi` for a given `kappa`.
    pub fn static_margin(&self, detuning: f64, kappa: f64) -> f64 {
        self.cavity.resonance_norm_sqr(detuning)
            + 2.0 * self.hbar() * kappa * kappa * self.oscillator.static_susceptibility() * detuning
    }

    pub fn stability(&self, wp: &WorkingPoint) -> StabilityReport {
        let psi = wp.detuning();
        let gamma = self.cavity.gamma();
        // (gamma^2 + psi^2) (1 + hbar xi^2 chi[0] psi / gamma), identical to the
        // kappa form but exact on the boundary.
        let static_margin = self.cavity.resonance_norm_sqr(psi)
            * (1.0
                + self.hbar()
                    * wp.coupling_squared()
                    * self.oscillator.static_susceptibility()
                    * psi
                    / gamma);
        let kappa = self.cavity.kappa_from_coupling(psi, wp.coupling());
        let gamma_eff = self.lorentzian_damping(psi, kappa);
        // An undamped mirror in a resonant cavity is marginal, not unstable.
        let dynamic_ok = gamma_eff > 0.0 || (psi == 0.0 && gamma_eff == 0.0);
        StabilityReport {
            static_ok: static_margin > 0.0,
            dynamic_ok,
            gamma_eff,
            static_margin,
            dynamic_margin: gamma_eff,
            high_q: self.oscillator.is_high_q(),
        }
    }

    /// Real roots of the self-consistent detuning
    /// `psi = psi_0 + hbar kappa^2 chi[0]` with `kappa^2 = 8 k^2 gamma |a_in|^2 / (gamma^2 + psi^2)`,
    /// sorted ascending. One or three roots.
    pub fn solve_self_consistent_detuning(
        &self,
        input_amplitude: f64,
    ) -> Result<Vec<SelfConsistentRoot>> {
        if !(input_amplitude.is_finite() && input_amplitude >= 0.0) {
            return Err(invalid("input_amplitude", "must be finite and >= 0"));
        }
        let cubic = self.detuning_cubic(input_amplitude);
        let mut roots = Vec::with_capacity(3);
        for psi in cubic.real_roots() {
            let steady_state = self.cavity.steady_state(psi, input_amplitude)?;
            let static_margin = self.static_margin(psi, steady_state.kappa);
            roots.push(SelfConsistentRoot {
                detuning: psi,
                steady_state,
                static_ok: static_margin > 0.0,
                static_margin,
            });
        }
        Ok(roots)
    }

    /// Monic cubic `psi^3 - psi_0 psi^2 + gamma^2 psi - (psi_0 gamma^2 + C)` whose
    /// real roots are the self-consistent detunings.
    pub fn detuning_cubic(&self, input_amplitude: f64) -> Cubic {
        let gamma = self.cavity.gamma();
        let k = self.cavity.wavevector();
        let psi0 = self.cavity.bare_detuning().radians();
        let recoil = 8.0
            * self.hbar()
            * self.oscillator.static_susceptibility()
            * k
            * k
            * gamma
            * input_amplitude
            * input_amplitude;
        Cubic {
            c2: -psi0,
            c1: gamma * gamma,
            c0: -(psi0 * gamma * gamma + recoil),
        }
    }
}

/// Monic real cubic `x^3 + c2 x^2 + c1 x + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Cubic {
    pub fn eval(&self, x: f64) -> f64 {
        ((x + self.c2) * x + self.c1) * x + self.c0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (3.0 * x + 2.0 * self.c2) * x + self.c1
    }

    /// Discriminant; positive for three distinct real roots.
    pub fn discriminant(&self) -> f64 {
        let (b, c, d) = (self.c2, self.c1, self.c0);
        18.0 * b * c * d - 4.0 * b.powi(3) * d + b * b * c * c - 4.0 * c.powi(3) - 27.0 * d * d
    }

    /// Real roots from the companion-matrix eigenvalues, Newton-polished and
    /// sorted ascending.
    pub fn real_roots(&self) -> Vec<f64> {
        #[rustfmt::skip]
        let companion = Matrix3::new(
            0.0, 0.0, -self.c0,
            1.0, 0.0, -self.c1,
            0.0, 1.0, -self.c2,
        );
        let mut roots: Vec<f64> = companion
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() < 1e-10 * (1.0 + z.re.abs()))
            .map(|z| self.polish(z.re))
            .collect();
        roots.sort_by(f64::total_cmp);
        roots
    }

    fn polish(&self, mut x: f64) -> f64 {
        for _ in 0..4 {
            let d = self.derivative(x);
            if d == 0.0 {
                break;
            }
            let step = self.eval(x) / d;
            if !step.is_finite() {
                break;
            }
            x -= step;
            if step.abs() <= f64::EPSILON * x.abs() {
                break;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Constants, MechanicalOscillator};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn unit_sensor(gamma: f64, tau: f64, psi0: f64) -> Sensor {
        Sensor::new(
            Constants::NORMALIZED,
            MechanicalOscillator::new(1.0, 1.0, 0.1).unwrap(),
            OpticalCavity::new(gamma, tau, 1.0, psi0).unwrap(),
        )
    }

    #[test]
    fn mechanical_susceptibility_examples() {
        let osc = MechanicalOscillator::new(1.0, 1.0, 0.1).unwrap();
        assert_eq!(osc.susceptibility(0.0).unwrap(), Complex64::new(1.0, 0.0));
        let on_res = osc.susceptibility(1.0).unwrap();
        assert_relative_eq!(on_res.re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(on_res.im, 10.0, epsilon = 1e-12);
        let above = osc.susceptibility(2.0).unwrap();
        // 1 / (-3 - 0.2i) by hand
        assert_relative_eq!(above.re, -3.0 / 9.04, epsilon = 1e-12);
        assert_relative_eq!(above.im, 0.2 / 9.04, epsilon = 1e-12);
        assert_relative_eq!(above.re, -0.331858, epsilon = 1e-6);
        assert_relative_eq!(above.im, 0.022124, epsilon = 1e-6);
    }

    #[test]
    fn undamped_resonance_is_singular() {
        let osc = MechanicalOscillator::new(1.0, 2.0, 0.0).unwrap();
        assert!(matches!(
            osc.susceptibility(2.0),
            Err(Error::Singular { .. })
        ));
        assert!(osc.susceptibility(1.9).is_ok());
    }

    #[test]
    fn steady_state_on_resonance() {
        let cav = OpticalCavity::new(0.01, 1e-8, 1.0, 0.0).unwrap();
        let ss = cav.steady_state(0.0, 1.0).unwrap();
        assert_relative_eq!(ss.a_bar, 200f64.sqrt(), max_relative = 1e-14);
        assert_eq!(ss.theta_in, 0.0);
        assert_eq!(ss.theta_out, 0.0);
        assert_relative_eq!(ss.intensity, 200.0, max_relative = 1e-14);
    }

    #[test]
    fn steady_state_detuned_phases() {
        let cav = OpticalCavity::new(0.01, 1e-8, 1.0, 0.0).unwrap();
        let ss = cav.steady_state(0.01, 1.0).unwrap();
        assert_relative_eq!(ss.a_bar, 10.0, max_relative = 1e-14);
        assert_relative_eq!(ss.theta_in, FRAC_PI_4, max_relative = 1e-14);
        assert_relative_eq!(ss.theta_out, -FRAC_PI_4, max_relative = 1e-14);
        // e^{-i theta_in} = (1 - i) / sqrt(2)
        let phase = ss.a_in_bar / ss.a_in_bar.norm();
        assert_relative_eq!(phase.re, 1.0 / SQRT_2, max_relative = 1e-14);
        assert_relative_eq!(phase.im, -1.0 / SQRT_2, max_relative = 1e-14);
        assert_relative_eq!(
            ss.a_out_bar.norm(),
            ss.a_in_bar.norm(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn loop_denominator_examples() {
        let cav = OpticalCavity::new(0.01, 1e-8, 1.0, 0.0).unwrap();
        let d0 = cav.loop_denominator(0.1, 0.0);
        assert_relative_eq!(d0.re, 0.0101, max_relative = 1e-14);
        assert_eq!(d0.im, 0.0);
        let d = cav.loop_denominator(0.02, 1e6);
        assert_relative_eq!(d.re, 4e-4, max_relative = 1e-12);
        assert_relative_eq!(d.im, -2e-4, max_relative = 1e-12);
        assert_eq!(cav.loop_denominator(0.02, -1e6), d.conj());
    }

    #[test]
    fn effective_susceptibility_resonant_cavity_is_free() {
        let s = unit_sensor(0.01, 1e-3, 0.0);
        for &w in &[0.0, 0.3, 1.7] {
            assert_eq!(
                s.effective_susceptibility(0.0, 5.0, w).unwrap(),
                s.oscillator.susceptibility(w).unwrap()
            );
        }
    }

    #[test]
    fn effective_susceptibility_quasistatic_examples() {
        // hbar xi^2 = 0.5, psi/gamma = -1, chi[0] = 1 -> chi_eff[0] = 2
        let gamma = 0.01;
        let s = unit_sensor(gamma, 1e-9, 0.0);
        for (ratio, expected) in [(-1.0, 2.0), (1.0, 2.0 / 3.0)] {
            let psi = ratio * gamma;
            let kappa = s.cavity.kappa_from_coupling(psi, 0.5f64.sqrt());
            let chi = s.effective_susceptibility(psi, kappa, 0.0).unwrap();
            assert_relative_eq!(chi.re, expected, max_relative = 1e-12);
            assert_eq!(chi.im, 0.0);
        }
    }

    #[test]
    fn effective_susceptibility_singular_on_boundary() {
        // chi^-1(0) = 1, hbar xi^2 psi / gamma = -1 exactly with gamma = 0.5, psi = -0.5
        let s = Sensor::new(
            Constants::NORMALIZED,
            MechanicalOscillator::new(1.0, 1.0, 0.1).unwrap(),
            OpticalCavity::new(0.5, 1.0, 1.0, 0.0).unwrap(),
        );
        // 2 hbar kappa^2 psi / Delta(0) = -1  <=>  kappa^2 = 0.5
        let r = s.effective_susceptibility(-0.5, 0.5f64.sqrt(), 0.0);
        assert!(matches!(r, Err(Error::Singular { .. })), "{r:?}");
    }

    #[test]
    fn effective_damping_sign_follows_detuning() {
        let s = Sensor::new(
            Constants::NORMALIZED,
            MechanicalOscillator::new(1.0, 1.0, 1e-3).unwrap(),
            OpticalCavity::with_bandwidth(0.01, 10.0, 1.0, 0.0).unwrap(),
        );
        let kappa = 1e-4f64.sqrt();
        assert_eq!(s.effective_damping(0.0, kappa), 1e-3);
        assert!(s.effective_damping(0.05, kappa) < 1e-3);
        assert!(s.effective_damping(-0.05, kappa) > 1e-3);
        // hand evaluation: Delta(1) = (0.01 - 0.001 i)^2 + 0.0025
        let delta = Complex64::new(0.01, -0.001).powi(2) + 0.0025;
        let expected = 1e-3 - 4.0 * 1e-4 / 10.0 * 1e-4 * 0.05 / delta.norm_sqr();
        assert_relative_eq!(
            s.effective_damping(0.05, kappa),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn stability_examples() {
        let s = unit_sensor(0.01, 1e-4, 0.0);
        let rep = s.stability(&WorkingPoint::new(0.0, 3.0).unwrap());
        assert!(rep.static_ok && rep.dynamic_ok);
        assert_relative_eq!(rep.static_margin, 1e-4, max_relative = 1e-14);
        assert_eq!(rep.gamma_eff, 0.1);

        let rep = s.stability(&WorkingPoint::new(-0.03, 0.4).unwrap());
        assert!(rep.dynamic_ok);

        // hbar xi^2 chi[0] psi / gamma = -1 exactly: xi^2 = 0.5, psi = -2 gamma
        let rep = s.stability(&WorkingPoint::new(-0.02, 0.5f64.sqrt()).unwrap());
        assert!(rep.static_margin.abs() < 1e-18);
    }

    #[test]
    fn exact_boundary_margin_is_zero() {
        // xi^2 = 0.25 is exact, psi/gamma = -4 exactly with gamma = 0.25
        let s = Sensor::new(
            Constants::NORMALIZED,
            MechanicalOscillator::new(1.0, 1.0, 0.1).unwrap(),
            OpticalCavity::new(0.25, 1.0, 1.0, 0.0).unwrap(),
        );
        let rep = s.stability(&WorkingPoint::new(-1.0, 0.5).unwrap());
        assert!(rep.on_static_boundary());
        assert!(!rep.static_ok);
    }

    #[test]
    fn undamped_resonant_cavity_is_marginally_stable() {
        let s = Sensor::new(
            Constants::NORMALIZED,
            MechanicalOscillator::new(1.0, 1.0, 0.0).unwrap(),
            OpticalCavity::new(0.01, 1e-3, 1.0, 0.0).unwrap(),
        );
        let rep = s.stability(&WorkingPoint::new(0.0, 2.0).unwrap());
        assert!(rep.static_ok && rep.dynamic_ok);
    }

    #[test]
    fn coupling_conversion_examples() {
        let cav = OpticalCavity::new(0.01, 1e-8, 1e7, 0.0).unwrap();
        assert_eq!(cav.coupling_from_input(0.3, 0.0), 0.0);
        assert_relative_eq!(cav.coupling_from_input(0.0, 1.0), 4e9, max_relative = 1e-14);
        let a = cav.input_from_coupling(0.0, 1.0);
        let b = cav.input_from_coupling(0.05, 1.0);
        let c = cav.input_from_coupling(-0.1, 1.0);
        assert!(a < b && b < c);
    }

    #[test]
    fn kappa_from_coupling_matches_steady_state() {
        let cav = OpticalCavity::new(0.02, 1e-8, 3.0, 0.0).unwrap();
        for &psi in &[-0.1, 0.0, 0.03] {
            let ss = cav.steady_state(psi, 2.5).unwrap();
            let xi = cav.coupling_from_input(psi, 2.5);
            assert_relative_eq!(
                cav.kappa_from_coupling(psi, xi),
                ss.kappa,
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn no_light_gives_bare_detuning() {
        let s = unit_sensor(0.01, 1e-3, 0.3);
        let roots = s.solve_self_consistent_detuning(0.0).unwrap();
        assert_eq!(roots.len(), 1);
        assert_relative_eq!(roots[0].detuning, 0.3, max_relative = 1e-12);
        assert!(roots[0].static_ok);
    }

    #[test]
    fn cubic_roots_of_known_polynomial() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let c = Cubic {
            c2: 0.0,
            c1: -7.0,
            c0: 6.0,
        };
        let r = c.real_roots();
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-13);
        }
        assert!(c.discriminant() > 0.0);
        // x^3 + x + 1: one real root
        let c = Cubic {
            c2: 0.0,
            c1: 1.0,
            c0: 1.0,
        };
        assert_eq!(c.real_roots().len(), 1);
        assert!(c.discriminant() < 0.0);
    }
}
