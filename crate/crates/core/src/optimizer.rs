//! Numeric minimization of the equivalent input noise over the working point.
//!
//! Searches run in `ln(xi^2 / xi_SQL^2)` with a deterministic grid seed
//! followed by Brent's golden-section/parabolic method. The detuning search
//! nests a coupling search inside an outer Brent search over `psi / gamma`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::finite_bandwidth::{self, Regime};
use crate::model::StabilityReport;
use crate::params::{Constants, MechanicalOscillator, OpticalCavity, Sensor, WorkingPoint};
use crate::quasistatic::{self, InputNoiseModel};

const SEED_POINTS_XI: usize = 65;
const SEED_POINTS_DETUNING: usize = 81;
/// Relative distance kept from the stability boundary.
const BOUNDARY_CLEARANCE: f64 = 1e-6;

/// Search bounds and tolerances.
///
/// Coupling bounds are in units of `xi_SQL^2` at the search frequency;
/// detuning bounds are in units of the cavity damping rate `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub xi2_bounds: (f64, f64),
    pub detuning_bounds: (f64, f64),
    pub rel_tol: f64,
    pub max_iter: usize,
    pub stability_constrained: bool,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            xi2_bounds: (1e-6, 1e6),
            detuning_bounds: (-200.0, 200.0),
            rel_tol: 1e-8,
            max_iter: 200,
            stability_constrained: false,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.xi2_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(invalid("search.xi2_bounds", "need 0 < lo < hi, finite"));
        }
        let (lo, hi) = self.detuning_bounds;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(invalid("search.detuning_bounds", "need lo < hi, finite"));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(invalid("search.rel_tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(invalid("search.max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of a numeric search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub coupling: f64,
    pub detuning: f64,
    pub omega: f64,
    pub s_min: f64,
    /// `s_min / (hbar |chi[Omega]|)`.
    pub ratio_to_sql: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The optimum sits on the stability boundary (constrained searches only).
    pub constraint_active: bool,
    pub stability: StabilityReport,
}

impl OptimResult {
    pub fn coupling_squared(&self) -> f64 {
        self.coupling * self.coupling
    }

    /// Turns a non-converged result into an error.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct BrentOutcome {
    x: f64,
    fx: f64,
    iterations: usize,
    converged: bool,
}

/// Brent's method for a minimum of `f` on `[a, b]`.
fn brent_minimize(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_iter: usize,
) -> BrentOutcome {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    const ABS_TOL: f64 = 1e-12;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for iter in 1..=max_iter {
        let mid = 0.5 * (a + b);
        let tol1 = rel_tol * x.abs() + ABS_TOL;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            return BrentOutcome {
                x,
                fx,
                iterations: iter,
                converged: true,
            };
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if mid >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    BrentOutcome {
        x,
        fx,
        iterations: max_iter,
        converged: false,
    }
}

/// Grid seed then Brent on the bracketing cell. Returns the outcome and
/// whether the minimum landed on the lower/upper end of `[lo, hi]`.
fn seeded_search(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
    rel_tol: f64,
    max_iter: usize,
) -> (BrentOutcome, Edge) {
    let n = points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let samples: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = if i == n - 1 { hi } else { lo + step * i as f64 };
            (x, f(x))
        })
        .collect();
    let best = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let left = samples[best.saturating_sub(1)].0;
    let right = samples[(best + 1).min(n - 1)].0;
    let mut outcome = brent_minimize(&mut f, left, right, rel_tol, max_iter);
    outcome.iterations += n;
    // Brent never evaluates the bracket ends; check them explicitly.
    let (x_best, f_best) = samples[best];
    if f_best < outcome.fx {
        outcome.x = x_best;
        outcome.fx = f_best;
    }
    let edge_tol = 4.0 * (rel_tol * outcome.x.abs() + 1e-12);
    let edge = if best == 0 && (outcome.x - lo).abs() <= edge_tol {
        Edge::Lower
    } else if best == n - 1 && (hi - outcome.x).abs() <= edge_tol {
        Edge::Upper
    } else {
        Edge::Interior
    };
    (outcome, edge)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Lower,
    Interior,
    Upper,
}

/// Largest `xi^2` keeping both stability conditions, or infinity.
pub fn stable_coupling_squared_limit(sensor: &Sensor, detuning: f64) -> f64 {
    let hbar = sensor.hbar();
    let gamma = sensor.cavity.gamma();
    let mut limit = f64::INFINITY;
    if detuning < 0.0 {
        // 1 + hbar xi^2 chi[0] psi / gamma > 0
        limit =
            limit.min(gamma / (hbar * sensor.oscillator.static_susceptibility() * detuning.abs()));
    }
    if detuning > 0.0 {
        // Gamma - c kappa^2 > 0 with kappa^2 = xi^2 (gamma^2 + psi^2) / (2 gamma)
        let osc = &sensor.oscillator;
        let delta = sensor.cavity.loop_denominator(detuning, osc.resonance());
        let c = 4.0 * hbar / (osc.mass() * sensor.cavity.bandwidth()) * gamma * gamma * detuning
            / delta.norm_sqr();
        let r2 = sensor.cavity.resonance_norm_sqr(detuning);
        limit = limit.min(2.0 * gamma * osc.damping() / (c * r2));
    }
    limit
}

fn noise(regime: Regime, sensor: &Sensor, wp: &WorkingPoint, omega: f64) -> Result<f64> {
    let model = InputNoiseModel::COHERENT;
    match regime {
        Regime::Quasistatic => quasistatic::equivalent_input_noise(sensor, wp, omega, &model),
        Regime::Full => finite_bandwidth::equivalent_input_noise(sensor, wp, omega, &model),
    }
}

struct XiSearch {
    outcome: BrentOutcome,
    coupling: f64,
    constraint_active: bool,
    at_user_bound: bool,
}

fn search_xi(
    sensor: &Sensor,
    regime: Regime,
    omega: f64,
    detuning: f64,
    xi_sql2: f64,
    spec: &SearchSpec,
) -> Result<Option<XiSearch>> {
    let mut lo = spec.xi2_bounds.0.ln();
    let mut hi = spec.xi2_bounds.1.ln();
    let mut clamped = false;
    if spec.stability_constrained {
        let limit = stable_coupling_squared_limit(sensor, detuning) / xi_sql2;
        let limit = (limit * (1.0 - BOUNDARY_CLEARANCE)).ln();
        if limit < hi {
            hi = limit;
            clamped = true;
        }
        if !(hi > lo) {
            return Ok(None);
        }
    }
    if !(hi > lo) {
        lo = hi - 1.0;
    }
    let mut failure = None;
    let objective = |t: f64| -> f64 {
        let coupling = (xi_sql2 * t.exp()).sqrt();
        match WorkingPoint::new(detuning, coupling).and_then(|wp| noise(regime, sensor, &wp, omega))
        {
            Ok(s) => s,
            Err(Error::Singular { .. }) => f64::INFINITY,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let (outcome, edge) = seeded_search(
        objective,
        lo,
        hi,
        SEED_POINTS_XI,
        spec.rel_tol,
        spec.max_iter,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Some(XiSearch {
        coupling: (xi_sql2 * outcome.x.exp()).sqrt(),
        constraint_active: clamped && edge == Edge::Upper,
        at_user_bound: edge == Edge::Lower || (edge == Edge::Upper && !clamped),
        outcome,
    }))
}

/// Minimum of the noise over the coupling at fixed `(Omega, psi)`.
pub fn minimize_over_xi(
    sensor: &Sensor,
    regime: Regime,
    omega: f64,
    detuning: f64,
    spec: &SearchSpec,
) -> Result<OptimResult> {
    spec.validate()?;
    let sql = quasistatic::sql(sensor, omega)?;
    let xi_sql2 = sql.xi_sql * sql.xi_sql;
    let found = search_xi(sensor, regime, omega, detuning, xi_sql2, spec)?
        .ok_or_else(|| invalid("search.xi2_bounds", "no stable coupling inside the bounds"))?;
    let wp = WorkingPoint::new(detuning, found.coupling)?;
    Ok(OptimResult {
        coupling: found.coupling,
        detuning: wp.detuning(),
        omega,
        s_min: found.outcome.fx,
        ratio_to_sql: found.outcome.fx / sql.s_sql,
        iterations: found.outcome.iterations,
        converged: found.outcome.converged && !found.at_user_bound,
        constraint_active: found.constraint_active,
        stability: sensor.stability(&wp),
    })
}

/// Minimum of the noise over both coupling and detuning at fixed `Omega`.
pub fn minimize_over_detuning(
    sensor: &Sensor,
    regime: Regime,
    omega: f64,
    spec: &SearchSpec,
) -> Result<OptimResult> {
    spec.validate()?;
    if sensor.oscillator.damping() == 0.0 {
        return Err(Error::DegenerateDissipation);
    }
    let gamma = sensor.cavity.gamma();
    let sql = quasistatic::sql(sensor, omega)?;
    let xi_sql2 = sql.xi_sql * sql.xi_sql;
    // keep |psi| inside the reduced phase interval
    let max_ratio = PI / gamma * (1.0 - 1e-9);
    let lo = spec.detuning_bounds.0.max(-max_ratio);
    let hi = spec.detuning_bounds.1.min(max_ratio);
    if !(hi > lo) {
        return Err(invalid(
            "search.detuning_bounds",
            "empty after reduction to (-pi, pi]",
        ));
    }

    let mut failure = None;
    let mut inner_iterations = 0usize;
    let mut inner = |ratio: f64| -> Option<XiSearch> {
        match search_xi(sensor, regime, omega, ratio * gamma, xi_sql2, spec) {
            Ok(found) => {
                if let Some(f) = &found {
                    inner_iterations += f.outcome.iterations;
                }
                found
            }
            Err(e) => {
                failure.get_or_insert(e);
                None
            }
        }
    };
    // asinh spacing resolves both small and large detunings
    let objective = |u: f64| inner(u.sinh()).map_or(f64::INFINITY, |f| f.outcome.fx);
    let (outcome, edge) = seeded_search(
        objective,
        lo.asinh(),
        hi.asinh(),
        SEED_POINTS_DETUNING,
        spec.rel_tol,
        spec.max_iter,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let ratio = outcome.x.sinh();
    let found = search_xi(sensor, regime, omega, ratio * gamma, xi_sql2, spec)?
        .ok_or_else(|| invalid("search", "no stable working point inside the bounds"))?;
    let wp = WorkingPoint::new(ratio * gamma, found.coupling)?;
    Ok(OptimResult {
        coupling: found.coupling,
        detuning: wp.detuning(),
        omega,
        s_min: found.outcome.fx,
        ratio_to_sql: found.outcome.fx / sql.s_sql,
        iterations: outcome.iterations + inner_iterations,
        converged: outcome.converged
            && found.outcome.converged
            && edge == Edge::Interior
            && !found.at_user_bound,
        constraint_active: found.constraint_active,
        stability: sensor.stability(&wp),
    })
}

/// One cell of a stability map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCell {
    /// `xi^2 / xi_SQL^2[0]`.
    pub xi2_norm: f64,
    pub detuning_over_gamma: f64,
    pub report: StabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub xi2_norm: Vec<f64>,
    pub detuning_over_gamma: Vec<f64>,
    /// Row-major: one row per detuning, one column per coupling.
    pub cells: Vec<StabilityCell>,
    /// Static-boundary crossings `(xi2_norm, detuning_over_gamma)`, one per
    /// sign change of the static margin along a row.
    pub boundary: Vec<(f64, f64)>,
}

impl StabilityMap {
    pub fn cell(&self, row: usize, col: usize) -> &StabilityCell {
        &self.cells[row * self.xi2_norm.len() + col]
    }
}

pub fn stability_map(
    sensor: &Sensor,
    xi2_norm: &[f64],
    detuning_over_gamma: &[f64],
) -> Result<StabilityMap> {
    if xi2_norm.is_empty() || detuning_over_gamma.is_empty() {
        return Err(invalid("stability.grid", "empty axis"));
    }
    if xi2_norm
        .iter()
        .chain(detuning_over_gamma)
        .any(|v| !v.is_finite())
    {
        return Err(invalid("stability.grid", "values must be finite"));
    }
    if xi2_norm.iter().any(|&v| v < 0.0) {
        return Err(invalid("stability.xi2", "must be >= 0"));
    }
    let xi_sql2 = 1.0 / (2.0 * sensor.hbar() * sensor.oscillator.static_susceptibility());
    let gamma = sensor.cavity.gamma();
    let mut cells = Vec::with_capacity(xi2_norm.len() * detuning_over_gamma.len());
    let mut boundary = Vec::new();
    for &ratio in detuning_over_gamma {
        let row_start = cells.len();
        for &x in xi2_norm {
            let wp = WorkingPoint::from_ratio(ratio, gamma, (x * xi_sql2).sqrt())?;
            cells.push(StabilityCell {
                xi2_norm: x,
                detuning_over_gamma: ratio,
                report: sensor.stability(&wp),
            });
        }
        for pair in cells[row_start..].windows(2) {
            let (m0, m1) = (pair[0].report.static_margin, pair[1].report.static_margin);
            if (m0 > 0.0) != (m1 > 0.0) {
                // margin is affine in xi^2
                let t = m0 / (m0 - m1);
                let x = pair[0].xi2_norm + t * (pair[1].xi2_norm - pair[0].xi2_norm);
                boundary.push((x, ratio));
            }
        }
    }
    Ok(StabilityMap {
        xi2_norm: xi2_norm.to_vec(),
        detuning_over_gamma: detuning_over_gamma.to_vec(),
        cells,
        boundary,
    })
}

/// Minimum of a low-frequency noise-versus-coupling curve, normalized to the
/// SQL: returns `(xi^2 / xi_SQL^2, S / S_SQL)` at `Omega = 0`.
pub fn locate_figure2_minimum(detuning_over_gamma: f64) -> Result<(f64, f64)> {
    if detuning_over_gamma > 0.0 {
        log::warn!("positive detuning: the low-frequency minimum stays above the SQL");
    }
    let sensor = normalized_sensor()?;
    let psi = detuning_over_gamma * sensor.cavity.gamma();
    let found = minimize_over_xi(
        &sensor,
        Regime::Quasistatic,
        0.0,
        psi,
        &SearchSpec::default(),
    )?
    .require_converged()?;
    // xi_SQL^2 = 1/2 and S_SQL = 1 for the normalized oscillator
    Ok((2.0 * found.coupling_squared(), found.s_min))
}

fn normalized_sensor() -> Result<Sensor> {
    Ok(Sensor::new(
        Constants::NORMALIZED,
        MechanicalOscillator::new(1.0, 1.0, 0.0)?,
        OpticalCavity::with_bandwidth(1e-3, 1e9, 1.0, 0.0)?,
    ))
}
