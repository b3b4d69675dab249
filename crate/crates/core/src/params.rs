//! Physical parameter records.
//!
//! Everything here is an immutable value type validated at construction.
//! Frequencies are angular (rad/s in SI mode, arbitrary units in normalized
//! mode). The Fourier convention is `d/dt -> -i Omega`, so decaying poles of
//! any response function have a negative imaginary part.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Reduced Planck constant in J s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Quality factor below which the Lorentzian effective-damping estimate is
/// reported as outside its validity range.
pub const HIGH_Q_THRESHOLD: f64 = 10.0;

/// Unit system selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    /// hbar = 1; masses and frequencies in user-chosen units.
    Normalized,
    Si,
}

impl UnitMode {
    pub fn constants(self) -> Constants {
        match self {
            UnitMode::Normalized => Constants::NORMALIZED,
            UnitMode::Si => Constants::SI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub hbar: f64,
}

impl Constants {
    pub const NORMALIZED: Constants = Constants { hbar: 1.0 };
    pub const SI: Constants = Constants { hbar: HBAR_SI };

    pub fn new(hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(invalid("hbar", "must be finite and > 0"));
        }
        Ok(Self { hbar })
    }
}

/// Single harmonic oscillator describing the movable mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalOscillator {
    mass: f64,
    resonance: f64,
    damping: f64,
}

impl MechanicalOscillator {
    pub fn new(mass: f64, resonance: f64, damping: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(invalid("oscillator.mass", "must be finite and > 0"));
        }
        if !(resonance.is_finite() && resonance > 0.0) {
            return Err(invalid("oscillator.resonance", "must be finite and > 0"));
        }
        if !(damping.is_finite() && damping >= 0.0) {
            return Err(invalid("oscillator.damping", "must be finite and >= 0"));
        }
        if damping == 0.0 {
            log::debug!("undamped oscillator: dissipation-limited quantities are degenerate");
        }
        Ok(Self {
            mass,
            resonance,
            damping,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn resonance(&self) -> f64 {
        self.resonance
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn quality_factor(&self) -> f64 {
        self.resonance / self.damping
    }

    pub fn is_high_q(&self) -> bool {
        self.quality_factor() >= HIGH_Q_THRESHOLD
    }

    /// `1 / chi[Omega] = M (Omega_M^2 - Omega^2 - i Gamma Omega)`, never singular.
    pub fn inverse_susceptibility(&self, omega: f64) -> Complex64 {
        Complex64::new(
            self.mass * (self.resonance * self.resonance - omega * omega),
            -self.mass * self.damping * omega,
        )
    }

    /// Free mechanical susceptibility `chi[Omega]`.
    pub fn susceptibility(&self, omega: f64) -> Result<Complex64> {
        let inv = self.inverse_susceptibility(omega);
        if inv == Complex64::new(0.0, 0.0) {
            return Err(Error::Singular {
                what: "mechanical susceptibility",
                omega,
            });
        }
        Ok(inv.inv())
    }

    /// `chi[0] = 1 / (M Omega_M^2)`.
    pub fn static_susceptibility(&self) -> f64 {
        1.0 / (self.mass * self.resonance * self.resonance)
    }
}

/// A round-trip phase reduced into `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Detuning(f64);

impl Detuning {
    pub const ZERO: Detuning = Detuning(0.0);

    pub fn new(radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(invalid("detuning", "must be finite"));
        }
        Ok(Self(reduce_phase(radians)))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

impl From<Detuning> for f64 {
    fn from(d: Detuning) -> f64 {
        d.0
    }
}

impl TryFrom<f64> for Detuning {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Detuning::new(value)
    }
}

fn reduce_phase(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Single-ended lossless Fabry-Perot cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalCavity {
    gamma: f64,
    round_trip: f64,
    wavevector: f64,
    bare_detuning: Detuning,
}

impl OpticalCavity {
    pub fn new(gamma: f64, round_trip: f64, wavevector: f64, bare_detuning: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("cavity.gamma", "must be finite and > 0"));
        }
        if gamma >= 1.0 {
            return Err(invalid(
                "cavity.gamma",
                "high-finesse model needs gamma << 1",
            ));
        }
        if gamma > 0.1 {
            log::warn!("cavity.gamma = {gamma} is not small compared to 1");
        }
        if !(round_trip.is_finite() && round_trip > 0.0) {
            return Err(invalid("cavity.round_trip", "must be finite and > 0"));
        }
        if !(wavevector.is_finite() && wavevector > 0.0) {
            return Err(invalid("cavity.wavevector", "must be finite and > 0"));
        }
        Ok(Self {
            gamma,
            round_trip,
            wavevector,
            bare_detuning: Detuning::new(bare_detuning)?,
        })
    }

    /// Builds a cavity from its bandwidth `Omega_cav = gamma / tau`.
    pub fn with_bandwidth(
        gamma: f64,
        bandwidth: f64,
        wavevector: f64,
        bare_detuning: f64,
    ) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid("cavity.bandwidth", "must be finite and > 0"));
        }
        Self::new(gamma, gamma / bandwidth, wavevector, bare_detuning)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn round_trip(&self) -> f64 {
        self.round_trip
    }

    pub fn wavevector(&self) -> f64 {
        self.wavevector
    }

    pub fn bare_detuning(&self) -> Detuning {
        self.bare_detuning
    }

    pub fn bandwidth(&self) -> f64 {
        self.gamma / self.round_trip
    }
}

/// Working point `(psi_bar, xi)`: mean detuning and optomechanical coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingPoint {
    detuning: Detuning,
    coupling: f64,
}

impl WorkingPoint {
    pub fn new(detuning: f64, coupling: f64) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(invalid("coupling", "must be finite and >= 0"));
        }
        Ok(Self {
            detuning: Detuning::new(detuning)?,
            coupling,
        })
    }

    /// Detuning given in units of the cavity damping rate.
    pub fn from_ratio(detuning_over_gamma: f64, gamma: f64, coupling: f64) -> Result<Self> {
        Self::new(detuning_over_gamma * gamma, coupling)
    }

    pub fn detuning(&self) -> f64 {
        self.detuning.radians()
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn coupling_squared(&self) -> f64 {
        self.coupling * self.coupling
    }
}

/// The full sensor: constants, mirror, and cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub constants: Constants,
    pub oscillator: MechanicalOscillator,
    pub cavity: OpticalCavity,
}

impl Sensor {
    pub fn new(
        constants: Constants,
        oscillator: MechanicalOscillator,
        cavity: OpticalCavity,
    ) -> Self {
        Self {
            constants,
            oscillator,
            cavity,
        }
    }

    pub fn hbar(&self) -> f64 {
        self.constants.hbar
    }
}
