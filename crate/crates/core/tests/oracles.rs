mod common;

use approx::assert_relative_eq;
use common::{direct_response, loop_poles, sensor, zoom_minimize};
use optospring::finite_bandwidth::{self, full_transfer};
use optospring::optimizer::{minimize_over_detuning, minimize_over_xi, SearchSpec};
use optospring::quasistatic::{self, InputNoiseModel};
use optospring::{Regime, WorkingPoint};

const CASES: [(f64, f64, f64); 8] = [
    // (psi / gamma, xi, Omega)
    (0.0, 0.7, 0.3),
    (3.0, 0.2, 1.7),
    (-3.0, 0.2, 1.7),
    (10.0, 0.5, 2.29),
    (10.0, 0.5, 19.7),
    (-10.0, 0.5, 20.0),
    (0.4, 2.0, 0.01),
    (-50.0, 0.05, 120.0),
];

#[test]
fn full_transfer_matches_direct_solution() {
    let gamma = 1e-3;
    let s = sensor(1.0, 1.0, 1e-3, 1e-6, gamma, 2.0);
    for (ratio, xi, omega) in CASES {
        let psi = ratio * gamma;
        let wp = WorkingPoint::new(psi, xi).unwrap();
        let lib = full_transfer(&s, &wp, omega).unwrap();
        let direct = direct_response(&s, psi, xi, omega);
        assert_relative_eq!(lib.c_sig.norm(), direct.c_sig.norm(), max_relative = 1e-9);
        assert_relative_eq!(
            lib.c_q.norm_sqr() + lib.c_p.norm_sqr(),
            direct.c_q.norm_sqr() + direct.c_p.norm_sqr(),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            lib.c_q.norm(),
            direct.c_q.norm(),
            max_relative = 1e-9,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            lib.c_p.norm(),
            direct.c_p.norm(),
            max_relative = 1e-9,
            epsilon = 1e-12
        );
        let noise =
            finite_bandwidth::equivalent_input_noise(&s, &wp, omega, &InputNoiseModel::COHERENT)
                .unwrap();
        assert_relative_eq!(noise, direct.coherent_noise(), max_relative = 1e-9);
    }
}

#[test]
fn quasistatic_noise_matches_direct_solution_at_low_frequency() {
    let gamma = 1e-3;
    // huge bandwidth: the direct solve sits deep in the quasi-static regime
    let s = sensor(1.0, 1.0, 1.0, 0.05, gamma, 1e9);
    for (ratio, xi, omega) in CASES {
        let wp = WorkingPoint::new(ratio * gamma, xi).unwrap();
        let qs = quasistatic::equivalent_input_noise(&s, &wp, omega, &InputNoiseModel::COHERENT)
            .unwrap();
        let direct = direct_response(&s, ratio * gamma, xi, omega).coherent_noise();
        assert_relative_eq!(qs, direct, max_relative = 1e-6);
    }
}

#[test]
fn coupling_minimum_matches_brute_force() {
    let gamma = 1e-3;
    let s = sensor(1.0, 1.0, 1.0, 0.1, gamma, 1e9);
    for (ratio, omega) in [
        (0.0, 0.5),
        (-10.0, 0.5),
        (-4.0, 0.0),
        (6.0, 3.0),
        (2.0, 0.9),
    ] {
        let psi = ratio * gamma;
        let found =
            minimize_over_xi(&s, Regime::Quasistatic, omega, psi, &SearchSpec::default()).unwrap();
        assert!(found.converged);
        let (t, best) = zoom_minimize(
            |t| {
                let wp = WorkingPoint::new(psi, t.exp().sqrt()).unwrap();
                quasistatic::equivalent_input_noise(&s, &wp, omega, &InputNoiseModel::COHERENT)
                    .unwrap()
            },
            -15.0,
            15.0,
        );
        assert_relative_eq!(found.s_min, best, max_relative = 1e-10);
        assert_relative_eq!(found.coupling_squared().ln(), t, epsilon = 1e-3);
    }
}

#[test]
fn detuning_minimum_matches_brute_force_grid() {
    let gamma = 1e-3;
    let s = sensor(1.0, 1.0, 1.0, 0.1, gamma, 1e9);
    let omega = 0.6;
    let found =
        minimize_over_detuning(&s, Regime::Quasistatic, omega, &SearchSpec::default()).unwrap();
    assert!(found.converged);
    // nested brute force: zoom over detuning of the zoomed coupling minimum
    let inner = |ratio: f64| {
        zoom_minimize(
            |t| {
                let wp = WorkingPoint::new(ratio * gamma, t.exp().sqrt()).unwrap();
                quasistatic::equivalent_input_noise(&s, &wp, omega, &InputNoiseModel::COHERENT)
                    .unwrap()
            },
            -15.0,
            15.0,
        )
        .1
    };
    let (ratio, best) = zoom_minimize(inner, -200.0, 200.0);
    assert_relative_eq!(found.s_min, best, max_relative = 1e-8);
    assert_relative_eq!(found.detuning / gamma, ratio, max_relative = 1e-3);
}

#[test]
fn poles_decay_for_a_stable_optical_spring() {
    let gamma = 1e-3;
    let s = sensor(1.0, 1.0, 1.0, 1e-2, gamma, 50.0);
    // negative detuning, below the static limit: anti-damped optical spring
    // is absent and every pole must decay
    let psi = -2.0 * gamma;
    let kappa = s.cavity.kappa_from_coupling(psi, 0.3);
    let poles = loop_poles(&s, psi, kappa);
    assert_eq!(poles.len(), 4);
    assert!(poles.iter().all(|p| p.im < 0.0), "{poles:?}");
    assert!(s
        .stability(&WorkingPoint::new(psi, 0.3).unwrap())
        .is_stable());
}

#[test]
fn loop_poles_are_roots_of_the_inverse_effective_susceptibility() {
    let gamma = 1e-3;
    let s = sensor(1.0, 1.0, 1.0, 1e-2, gamma, 5.0);
    let psi = 3.0 * gamma;
    let kappa = s.cavity.kappa_from_coupling(psi, 0.4);
    for pole in loop_poles(&s, psi, kappa) {
        // evaluate M (Omega_M^2 - Omega^2 - i Gamma Omega) Delta + 2 hbar kappa^2 psi at the pole
        let tau = s.cavity.round_trip();
        let mech = 1.0 - pole * pole - common::I * 1e-2 * pole;
        let delta = (gamma - common::I * pole * tau).powi(2) + psi * psi;
        let residual = mech * delta + 2.0 * kappa * kappa * psi;
        assert!(residual.norm() < 1e-12, "{residual}");
    }
}
