//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the closed forms of the library: the transfer
//! functions come from solving the linearized cavity/mirror equations
//! directly, poles from a general polynomial root finder, and minima from a
//! brute-force zooming scan.
#![allow(dead_code)]

use num_complex::Complex64;
use optospring::{Constants, MechanicalOscillator, OpticalCavity, Sensor};

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn sensor(
    hbar: f64,
    mass: f64,
    omega_m: f64,
    damping: f64,
    gamma: f64,
    bandwidth: f64,
) -> Sensor {
    Sensor::new(
        Constants::new(hbar).unwrap(),
        MechanicalOscillator::new(mass, omega_m, damping).unwrap(),
        OpticalCavity::with_bandwidth(gamma, bandwidth, 1.0, 0.0).unwrap(),
    )
}

/// Gaussian elimination with partial pivoting on a small dense system.
pub fn solve<const N: usize>(mut a: [[Complex64; N]; N], mut b: [Complex64; N]) -> [Complex64; N] {
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, v) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *x -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for k in row + 1..N {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Output phase-quadrature response obtained by solving the linearized
/// equations for `(delta a[Omega], delta a^dagger[-Omega], X[Omega])`.
///
/// Cavity: `(gamma - i psi - i Omega tau) da = sqrt(2 gamma) da_in + 2 i k abar X`,
/// mirror: `X = chi * 2 hbar k (abar^* da + abar da^dagger) + X_sig`,
/// output: `da_out = sqrt(2 gamma) da - da_in`. The intracavity mean field is
/// taken real; quadratures are referred to the mean input/output phases.
#[derive(Debug, Clone, Copy)]
pub struct DirectResponse {
    pub c_p: Complex64,
    pub c_q: Complex64,
    pub c_sig: Complex64,
}

impl DirectResponse {
    pub fn coherent_noise(&self) -> f64 {
        (self.c_p.norm_sqr() + self.c_q.norm_sqr()) / self.c_sig.norm_sqr()
    }
}

pub fn direct_response(s: &Sensor, psi: f64, xi: f64, omega: f64) -> DirectResponse {
    let hbar = s.hbar();
    let gamma = s.cavity.gamma();
    let tau = s.cavity.round_trip();
    let k = 1.0;
    let r2 = gamma * gamma + psi * psi;
    let kappa = xi * (r2 / (2.0 * gamma)).sqrt();
    let abar = kappa / (2.0 * k);
    let osc = &s.oscillator;
    let chi = 1.0
        / Complex64::new(
            osc.mass() * (osc.resonance().powi(2) - omega * omega),
            -osc.mass() * osc.damping() * omega,
        );
    let sq = (2.0 * gamma).sqrt();
    let ain_bar = Complex64::new(gamma, -psi) * abar / sq;
    let aout_bar = Complex64::new(gamma, psi) * abar / sq;
    let th_in = ain_bar.arg();
    let th_out = aout_bar.arg();

    let m = [
        [
            Complex64::new(gamma, -psi - omega * tau),
            c(0.0),
            -2.0 * I * k * abar,
        ],
        [
            c(0.0),
            Complex64::new(gamma, psi - omega * tau),
            2.0 * I * k * abar,
        ],
        [
            -chi * 2.0 * hbar * k * abar,
            -chi * 2.0 * hbar * k * abar,
            c(1.0),
        ],
    ];
    let respond = |a_in: Complex64, b_in: Complex64, x_sig: Complex64| {
        let [da, db, _x] = solve(m, [sq * a_in, sq * b_in, x_sig]);
        let a_out = sq * da - a_in;
        let b_out = sq * db - b_in;
        let e = Complex64::from_polar(1.0, th_out);
        -I * (e.conj() * a_out - e * b_out)
    };
    let e = Complex64::from_polar(1.0, th_in);
    DirectResponse {
        c_p: respond(e / 2.0, e.conj() / 2.0, c(0.0)),
        c_q: respond(I * e / 2.0, -I * e.conj() / 2.0, c(0.0)),
        c_sig: respond(c(0.0), c(0.0), c(1.0)),
    }
}

/// Product of two polynomials with coefficients in ascending order.
pub fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![c(0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// All roots of a polynomial (ascending coefficients) by Durand-Kerner,
/// followed by Newton polishing.
pub fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let monic: Vec<Complex64> = coeffs.iter().map(|z| z / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(c(0.0), |acc, k| acc * z + k);
    let deriv = |z: Complex64| {
        monic
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(c(0.0), |acc, (i, k)| acc * z + k * i as f64)
    };
    let radius = 1.0 + monic[..n].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|i| {
            Complex64::from_polar(
                radius,
                0.4 + 2.0 * std::f64::consts::PI * i as f64 / n as f64,
            )
        })
        .collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let mut den = c(1.0);
            for j in 0..n {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            moved = moved.max(step.norm() / (1.0 + z[i].norm()));
        }
        if moved < 1e-15 {
            break;
        }
    }
    for root in z.iter_mut() {
        for _ in 0..5 {
            let d = deriv(*root);
            if d.norm() == 0.0 {
                break;
            }
            *root -= eval(*root) / d;
        }
    }
    z
}

/// Roots of `M (Omega_M^2 - Omega^2 - i Gamma Omega) Delta[Omega] + 2 hbar kappa^2 psi`,
/// the characteristic polynomial of the coupled mirror/cavity loop.
pub fn loop_poles(s: &Sensor, psi: f64, kappa: f64) -> Vec<Complex64> {
    let osc = &s.oscillator;
    let m = osc.mass();
    let gamma = s.cavity.gamma();
    let tau = s.cavity.round_trip();
    let mech = [
        c(m * osc.resonance().powi(2)),
        Complex64::new(0.0, -m * osc.damping()),
        c(-m),
    ];
    let cav = [
        c(gamma * gamma + psi * psi),
        Complex64::new(0.0, -2.0 * gamma * tau),
        c(-tau * tau),
    ];
    let mut p = poly_mul(&mech, &cav);
    p[0] += 2.0 * s.hbar() * kappa * kappa * psi;
    poly_roots(&p)
}

/// Minimum of `f` on `[lo, hi]` by a dense scan followed by repeated zooming
/// around the best sample.
pub fn zoom_minimize(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const N: usize = 41;
    let mut best = (lo, f(lo));
    for _ in 0..60 {
        let step = (hi - lo) / (N - 1) as f64;
        for i in 0..N {
            let x = lo + step * i as f64;
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        lo = (best.0 - 2.0 * step).max(lo);
        hi = (best.0 + 2.0 * step).min(hi);
        if hi - lo < 1e-13 * (1.0 + best.0.abs()) {
            break;
        }
    }
    best
}
