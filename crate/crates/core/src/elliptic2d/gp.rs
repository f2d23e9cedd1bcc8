//! Strang splitting for `i E_t = -Lap E + V E + sigma |E|^2 E` on the
//! periodically extended box, and the comparison with the envelope ansatz.
//!
//! The kinetic step uses the symbol of the same second-order difference
//! Laplacian as the stationary solver, so a converged stationary field
//! rotates with no spatial error; only the splitting error in `dt` remains.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{potential_on_grid, reconstruct_leading_order, GridField2D};
use crate::bloch1d::edge_eigenfunctions;
use crate::cme2d::{solve_class, ClassTag, CmeStepper, SolveSpec};
use crate::potential::PeriodicPotential;
use crate::resonance::resonance_coefficients;
use crate::spectral::Fft2;
use crate::{Error, Result};

pub struct GpStepper {
    np: usize,
    dt: f64,
    pub t: f64,
    data: Vec<C64>,
    v: Vec<f64>,
    sigma: f64,
    mult: Vec<C64>,
    fft: Fft2,
    template: GridField2D,
    max0: f64,
}

impl GpStepper {
    pub fn new(field: &GridField2D, p: &PeriodicPotential, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt}")));
        }
        let n = field.n;
        let np = n - 1;
        let vfull = potential_on_grid(p, field.eta, field);
        let mut data = vec![C64::new(0.0, 0.0); np * np];
        let mut v = vec![0.0; np * np];
        for i1 in 0..np {
            for i2 in 0..np {
                data[i1 * np + i2] = field.values[i1 * n + i2];
                v[i1 * np + i2] = vfull[i1 * n + i2];
            }
        }
        let h2 = field.dx * field.dx;
        let sym = |k: usize| 4.0 / h2 * (PI * k as f64 / np as f64).sin().powi(2);
        let mut mult = vec![C64::new(0.0, 0.0); np * np];
        for k2 in 0..np {
            for k1 in 0..np {
                mult[k2 * np + k1] = C64::from_polar(1.0, -(sym(k1) + sym(k2)) * dt);
            }
        }
        Ok(Self {
            np,
            dt,
            t: 0.0,
            data,
            v,
            sigma: field.sigma,
            mult,
            fft: Fft2::new(np, np),
            template: field.clone(),
            max0: field.max_modulus(),
        })
    }

    fn pointwise(&mut self, h: f64) {
        for (z, &v) in self.data.iter_mut().zip(&self.v) {
            *z *= C64::from_polar(1.0, -(v + self.sigma * z.norm_sqr()) * h);
        }
    }

    pub fn step(&mut self) -> Result<()> {
        self.pointwise(0.5 * self.dt);
        self.fft.apply_multiplier(&mut self.data, &self.mult);
        self.pointwise(0.5 * self.dt);
        self.t += self.dt;
        let m = self.max_modulus();
        let finite = self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite || m > 10.0 * self.max0 {
            return Err(Error::BlowUp { t: self.t });
        }
        Ok(())
    }

    pub fn max_modulus(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn mass(&self) -> f64 {
        let h = self.template.dx;
        h * h * self.data.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn field(&self) -> GridField2D {
        let mut f = self.template.clone();
        let (n, np) = (f.n, self.np);
        for i1 in 0..n {
            for i2 in 0..n {
                f.values[i1 * n + i2] = self.data[(i1 % np) * np + i2 % np];
            }
        }
        f
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpDiagnostics {
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub max_initial: f64,
    pub max_final: f64,
}

/// Evolve to `t_end` with the step rounded so that it divides `t_end`.
pub fn integrate_gp_time(
    initial: &GridField2D,
    p: &PeriodicPotential,
    t_end: f64,
    dt: f64,
) -> Result<(GridField2D, GpDiagnostics)> {
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(Error::InvalidInput(format!("t_end = {t_end}, dt = {dt}")));
    }
    let steps = ((t_end / dt).round() as usize).max(1);
    let dt = t_end / steps as f64;
    let mut s = GpStepper::new(initial, p, dt)?;
    let mass_initial = s.mass();
    for _ in 0..steps {
        s.step()?;
    }
    let f = s.field();
    let d = GpDiagnostics {
        t_end,
        dt,
        steps,
        mass_initial,
        mass_final: s.mass(),
        max_initial: initial.max_modulus(),
        max_final: f.max_modulus(),
    };
    Ok((f, d))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingOptions {
    pub epsilon: f64,
    /// Slow time horizon; the run covers `t in [0, t0 / eps]`.
    pub t0: f64,
    pub dt: f64,
    pub sample_every: f64,
    pub points_per_period: usize,
    pub y_support: f64,
    pub cme_dy: f64,
    pub bracket: (f64, f64),
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            t0: 1.0,
            dt: 0.01,
            sample_every: 0.25,
            points_per_period: 32,
            y_support: 20.0,
            cme_dy: 0.15,
            bracket: (0.05, 0.5),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingReport {
    pub class_tag: ClassTag,
    pub omega: f64,
    pub epsilon: f64,
    pub t_end: f64,
    pub grid_n: usize,
    pub periods: usize,
    /// `(t, max |E - E_ans|)`.
    pub samples: Vec<(f64, f64)>,
    pub sup_error: f64,
    pub mass_drift: f64,
}

/// Evolve `E(0) = phi^(1)` of a stationary envelope and compare with
/// `E_ans(t) = phi^(1)[A(eps t)] exp(-i omega0 t)`, `A` evolved by the
/// envelope equations.
pub fn track_ansatz(
    p: &PeriodicPotential,
    class: ClassTag,
    omega: f64,
    opts: &TrackingOptions,
) -> Result<TrackingReport> {
    let eps = opts.epsilon;
    if !(eps > 0.0 && opts.t0 > 0.0 && opts.dt > 0.0 && opts.sample_every >= opts.dt) {
        return Err(Error::InvalidInput("tracking options out of range".into()));
    }
    let grid_n = opts.points_per_period;
    let (_, coeffs) = resonance_coefficients(p, opts.bracket, grid_n)?;
    let efs = edge_eigenfunctions(p, coeffs.eta0, 2, grid_n)?;
    let periods = ((opts.y_support / eps.sqrt()) / (2.0 * PI)).ceil() as usize;
    let d = eps.sqrt() * periods as f64 * 2.0 * PI * (1.0 + 1e-9);
    let spec = SolveSpec { d, dy: opts.cme_dy, ..SolveSpec::new(class, omega) };
    let (env, _, _) = solve_class(&coeffs, &spec)?;
    let e0 = reconstruct_leading_order(&env, &efs, eps, periods)?;

    let steps = (opts.t0 / eps / opts.dt).round() as usize;
    let every = ((opts.sample_every / opts.dt).round() as usize).max(1);
    let mut gp = GpStepper::new(&e0, p, opts.dt)?;
    let mut cme = CmeStepper::new(&env, eps * opts.dt)?;
    let omega0 = coeffs.omega0;
    let mass0 = gp.mass();
    let mut samples = vec![(0.0, 0.0)];
    let mut mass_drift = 0.0f64;
    for k in 1..=steps {
        gp.step()?;
        cme.step()?;
        if k % every == 0 || k == steps {
            let t = k as f64 * opts.dt;
            let ans = reconstruct_leading_order(&cme.field(), &efs, eps, periods)?.rotated(-omega0 * t);
            samples.push((t, gp.field().max_distance(&ans)?));
            mass_drift = mass_drift.max(((gp.mass() - mass0) / mass0).abs());
        }
    }
    let sup_error = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(TrackingReport {
        class_tag: class,
        omega,
        epsilon: eps,
        t_end: steps as f64 * opts.dt,
        grid_n,
        periods,
        samples,
        sup_error,
        mass_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::super::newton::{solve_elliptic_newton, EllipticOptions};
    use super::*;
    use crate::cme2d::townes_profile;

    fn localized(points: usize) -> GridField2D {
        localized_k(points, 2.0, 1)
    }

    fn localized_k(points: usize, k: f64, periods: usize) -> GridField2D {
        let s = townes_profile(0, 0.005).unwrap();
        let mut g = GridField2D::zeros(periods, points).unwrap();
        g.omega = -k * k;
        g.sigma = -1.0;
        let n = g.n;
        for i1 in 1..n - 1 {
            for i2 in 1..n - 1 {
                let r = g.x(i1).hypot(g.x(i2));
                g.values[i1 * n + i2] = C64::new(k * s.eval(k * r), 0.0);
            }
        }
        g
    }

    #[test]
    fn mass_is_conserved() {
        let mut g = localized(32);
        g.values.iter_mut().for_each(|z| *z *= 0.6);
        let (_, d) = integrate_gp_time(&g, &PeriodicPotential::zero(), 1.0, 0.01).unwrap();
        assert!(((d.mass_final - d.mass_initial) / d.mass_initial).abs() < 1e-8);
    }

    #[test]
    fn stationary_field_rotates_with_second_order_error() {
        let p = PeriodicPotential::zero();
        let (phi, _) = solve_elliptic_newton(&localized_k(32, 1.0, 2), &p, EllipticOptions::default()).unwrap();
        let err = |dt: f64| {
            let (e, _) = integrate_gp_time(&phi, &p, 1.0, dt).unwrap();
            e.max_distance(&phi.rotated(-phi.omega)).unwrap() / phi.max_modulus()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "{e1} {e2} {order}");
    }

    #[test]
    fn blow_up_is_caught() {
        let mut g = localized(32);
        let c = g.center();
        g.values[c * g.n + c] = C64::new(f64::NAN, 0.0);
        let r = integrate_gp_time(&g, &PeriodicPotential::zero(), 0.1, 0.01);
        assert!(matches!(r, Err(Error::BlowUp { .. })), "{:?}", r.map(|x| x.1));
    }
}
