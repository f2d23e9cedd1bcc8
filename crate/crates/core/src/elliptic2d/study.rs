//! Convergence of the full solution to its leading-order envelope
//! reconstruction as `eps -> 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::newton::{planned_unknowns, solve_elliptic_newton, EllipticOptions};
use super::{reconstruct_leading_order, GridField2D};
use crate::bloch1d::edge_eigenfunctions;
use crate::cme2d::{least_squares_slope, solve_class, ClassTag, CmeField, SolveSpec};
use crate::potential::PeriodicPotential;
use crate::resonance::{resonance_coefficients, ResonanceCoefficients};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub eps: Vec<f64>,
    /// Grid points per period before the budget reduction.
    pub points_per_period: usize,
    /// Smallest resolution the budget may force.
    pub min_points: usize,
    pub bracket: (f64, f64),
    /// Envelope support in `y`; measured from the envelope when absent.
    pub y_support: Option<f64>,
    /// Relative modulus below which the envelope counts as negligible.
    pub support_tol: f64,
    /// Initial envelope box and spacing.
    pub cme_box: f64,
    pub cme_dy: f64,
    /// Largest `eps` increment between consecutive solves.
    pub continuation_step: f64,
    pub newton: EllipticOptions,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            eps: vec![0.04, 0.06, 0.08, 0.1],
            points_per_period: 100,
            min_points: 32,
            bracket: (0.05, 0.5),
            y_support: None,
            support_tol: 1e-2,
            cme_box: 24.0,
            cme_dy: 0.15,
            continuation_step: 0.01,
            newton: EllipticOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub epsilon: f64,
    pub error: f64,
    /// Points per period.
    pub grid_n: usize,
    pub max_modulus: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub class_tag: ClassTag,
    pub omega: f64,
    pub points: Vec<ConvergencePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub complete: bool,
    pub failure: Option<String>,
    pub grid_n: usize,
    pub periods: usize,
    pub y_support: f64,
    pub cme_box: f64,
    pub unknowns: usize,
}

/// Chebyshev radius of the region where the envelope modulus exceeds `tol`
/// times its maximum.
pub fn support_radius(f: &CmeField, tol: f64) -> f64 {
    let n = f.n;
    let cut = tol * f.max_modulus();
    let mut r = 0.0f64;
    for i1 in 0..n {
        for i2 in 0..n {
            let a = f.at(i1, i2);
            if a.iter().map(|z| z.norm()).fold(0.0, f64::max) >= cut {
                r = r.max(f.y(i1).abs().max(f.y(i2).abs()));
            }
        }
    }
    r
}

fn solve_envelope(c: &ResonanceCoefficients, class: ClassTag, omega: f64, d: f64, dy: f64) -> Result<CmeField> {
    let spec = SolveSpec { d, dy, ..SolveSpec::new(class, omega) };
    Ok(solve_class(c, &spec)?.0)
}

/// Fixed box for all `eps`: the smallest whole number of periods holding the
/// envelope support at the smallest `eps`.
fn periods_for(y_support: f64, eps_min: f64) -> usize {
    ((y_support / eps_min.sqrt()) / (2.0 * PI)).ceil().max(1.0) as usize
}

/// Path from the smallest to the largest `eps` in increments of at most
/// `step`, through every requested value.
fn continuation_path(eps: &[f64], step: f64) -> Vec<f64> {
    let mut path = vec![eps[0]];
    for w in eps.windows(2) {
        let k = ((w[1] - w[0]) / step - 1e-9).ceil().max(1.0) as usize;
        path.extend((1..=k).map(|j| w[0] + (w[1] - w[0]) * j as f64 / k as f64));
    }
    path
}

/// For each `eps`: the max-norm distance between the Newton solution and
/// `phi^(1)`, then the least-squares slope of `log err` against `log eps`.
///
/// All solves share one box, sized for the smallest `eps`, and run as a
/// continuation from the smallest `eps` upward, each seeded by the previous
/// solution; the first is seeded by `phi^(1)`. The resolution drops below
/// `points_per_period` as far as needed to fit the cell budget.
pub fn convergence_study(
    p: &PeriodicPotential,
    class: ClassTag,
    omega: f64,
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    let mut eps = opts.eps.clone();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 3 || eps.iter().any(|&e| !(e > 0.0 && e <= 0.12)) {
        return Err(Error::InvalidInput(format!("need at least three eps in (0, 0.12], got {:?}", opts.eps)));
    }
    if opts.points_per_period < opts.min_points || opts.min_points < 8 {
        return Err(Error::InvalidInput("resolution below the minimum".into()));
    }
    let (e_min, e_max) = (eps[0], eps[eps.len() - 1]);

    let mut grid_n = opts.points_per_period;
    let (_, mut coeffs) = resonance_coefficients(p, opts.bracket, grid_n)?;
    let mut env = solve_envelope(&coeffs, class, omega, opts.cme_box, opts.cme_dy)?;
    let y_support = opts.y_support.unwrap_or_else(|| support_radius(&env, opts.support_tol));
    let periods = periods_for(y_support, e_min);

    // shrink the resolution until the largest system fits
    let cme_box = opts.cme_box.max(e_max.sqrt() * periods as f64 * 2.0 * PI * (1.0 + 1e-9));
    let unknowns_at = |env: &CmeField, c: &ResonanceCoefficients, g: usize| -> Result<usize> {
        let efs = edge_eigenfunctions(p, c.eta0, 2, g)?;
        let probe = env.resampled(cme_box, env.dy)?;
        let phi = reconstruct_leading_order(&probe, &efs, e_min, periods)?;
        Ok(planned_unknowns(&phi, &opts.newton))
    };
    let mut unknowns = unknowns_at(&env, &coeffs, grid_n)?;
    if unknowns > opts.newton.cell_budget {
        let scaled = (grid_n as f64 * (opts.newton.cell_budget as f64 / unknowns as f64).sqrt()).floor() as usize;
        grid_n = scaled - scaled % 2;
        loop {
            if grid_n < opts.min_points {
                return Err(Error::Budget(format!(
                    "{periods} periods at {} points per period need {unknowns} unknowns; budget {}",
                    opts.min_points, opts.newton.cell_budget
                )));
            }
            (_, coeffs) = resonance_coefficients(p, opts.bracket, grid_n)?;
            unknowns = unknowns_at(&env, &coeffs, grid_n)?;
            if unknowns <= opts.newton.cell_budget {
                break;
            }
            grid_n -= 2;
        }
    }
    env = solve_envelope(&coeffs, class, omega, cme_box, opts.cme_dy)?;
    let efs = edge_eigenfunctions(p, coeffs.eta0, 2, grid_n)?;

    let mut report = ConvergenceReport {
        class_tag: class,
        omega,
        points: Vec::new(),
        slope: f64::NAN,
        intercept: f64::NAN,
        complete: false,
        failure: None,
        grid_n,
        periods,
        y_support,
        cme_box,
        unknowns,
    };
    let mut prev: Option<GridField2D> = None;
    for e in continuation_path(&eps, opts.continuation_step) {
        let phi1 = reconstruct_leading_order(&env, &efs, e, periods)?;
        let seed = match prev.take() {
            Some(mut s) => {
                s.epsilon = phi1.epsilon;
                s.omega = phi1.omega;
                s.eta = phi1.eta;
                s
            }
            None => phi1.clone(),
        };
        let (sol, nr) = match solve_elliptic_newton(&seed, p, opts.newton) {
            Ok(v) => v,
            Err(err) => {
                report.failure = Some(format!("eps = {e}: {err}"));
                break;
            }
        };
        if eps.iter().any(|&x| (x - e).abs() < 1e-12) {
            report.points.push(ConvergencePoint {
                epsilon: e,
                error: sol.max_distance(&phi1)?,
                grid_n,
                max_modulus: sol.max_modulus(),
                iterations: nr.iterations,
                residual: nr.residual,
            });
        }
        prev = Some(sol);
    }
    report.complete = report.points.len() == eps.len();
    if report.points.len() >= 2 {
        let pts: Vec<(f64, f64)> = report.points.iter().map(|q| (q.epsilon.ln(), q.error.ln())).collect();
        (report.slope, report.intercept) = least_squares_slope(&pts);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_hits_every_requested_value() {
        let p = continuation_path(&[0.04, 0.06, 0.065, 0.1], 0.01);
        for e in [0.04, 0.06, 0.065, 0.1] {
            assert!(p.iter().any(|&x| (x - e).abs() < 1e-12), "{e} {p:?}");
        }
        assert!(p.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.01 + 1e-12));
    }

    #[test]
    fn box_is_a_whole_number_of_periods() {
        assert_eq!(periods_for(20.0, 0.04), 16);
        assert_eq!(periods_for(2.0 * PI, 1.0), 1);
    }

    #[test]
    fn rejects_short_or_large_eps_lists() {
        let p = PeriodicPotential::one_minus_cos();
        let o = ConvergenceOptions { eps: vec![0.05, 0.1], ..Default::default() };
        assert!(convergence_study(&p, ClassTag::AM0, 1.22, &o).is_err());
        let o = ConvergenceOptions { eps: vec![0.05, 0.1, 0.2], ..Default::default() };
        assert!(convergence_study(&p, ClassTag::AM0, 1.22, &o).is_err());
    }
}
