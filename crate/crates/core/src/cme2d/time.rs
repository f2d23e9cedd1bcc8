//! Strang splitting for `i dA_j/dT = beta_j A_j - (alpha Lap)_j A_j + sigma N_j(A)`.
//!
//! The linear step is exact in Fourier space for the periodic version of the
//! fourth-order difference operator of the stationary solver, so stationary
//! fields rotate with no spatial error; the cubic step is the implicit
//! midpoint rule, which conserves the pointwise power `sum_j |A_j|^2`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{CmeField, CmeSystem};
use crate::spectral::Fft2;
use crate::{Error, Result};

pub struct CmeStepper {
    sys: CmeSystem,
    np: usize,
    dt: f64,
    pub t: f64,
    comps: Vec<usize>,
    data: [Vec<C64>; 3],
    mult: [Vec<C64>; 3],
    fft: Fft2,
    template: CmeField,
    max0: f64,
}

/// Periodic symbol of `-d^2/dy^2` for the fourth-order stencil.
fn symbol(k: f64, np: usize, dy: f64) -> f64 {
    let th = 2.0 * std::f64::consts::PI * k / np as f64;
    (30.0 - 32.0 * th.cos() + 2.0 * (2.0 * th).cos()) / (12.0 * dy * dy)
}

impl CmeStepper {
    pub fn new(field: &CmeField, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt}")));
        }
        let n = field.n;
        let np = n - 1;
        let sys = field.system();
        let comps = field.active();
        let mut data: [Vec<C64>; 3] = Default::default();
        let mut mult: [Vec<C64>; 3] = Default::default();
        for &c in &comps {
            let mut v = vec![C64::new(0.0, 0.0); np * np];
            for i1 in 0..np {
                for i2 in 0..np {
                    v[i1 * np + i2] = field.a[c][i1 * n + i2];
                }
            }
            data[c] = v;
            let (a1, a2) = sys.curv[c];
            let mut m = vec![C64::new(0.0, 0.0); np * np];
            for k2 in 0..np {
                let s2 = symbol(Fft2::freq(k2, np), np, field.dy);
                for k1 in 0..np {
                    let s1 = symbol(Fft2::freq(k1, np), np, field.dy);
                    let l = sys.beta[c] + a1 * s1 + a2 * s2;
                    m[k2 * np + k1] = C64::from_polar(1.0, -l * dt);
                }
            }
            mult[c] = m;
        }
        Ok(Self {
            sys,
            np,
            dt,
            t: 0.0,
            comps,
            data,
            mult,
            fft: Fft2::new(np, np),
            template: field.clone(),
            max0: field.max_modulus(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn nonlinear(&mut self, h: f64) {
        let z = C64::new(0.0, 0.0);
        let minus_i_sigma_h = C64::new(0.0, -self.sys.sigma * h);
        for q in 0..self.np * self.np {
            let mut a = [z; 3];
            for &c in &self.comps {
                a[c] = self.data[c][q];
            }
            let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if scale == 0.0 {
                continue;
            }
            let mut next = a;
            for _ in 0..60 {
                let mid = [0.5 * (a[0] + next[0]), 0.5 * (a[1] + next[1]), 0.5 * (a[2] + next[2])];
                let nl = self.sys.nonlinear(mid);
                let mut change = 0.0f64;
                for c in 0..3 {
                    let v = a[c] + minus_i_sigma_h * nl[c];
                    change = change.max((v - next[c]).norm());
                    next[c] = v;
                }
                if change <= 1e-15 * scale {
                    break;
                }
            }
            for &c in &self.comps {
                self.data[c][q] = next[c];
            }
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let h = 0.5 * self.dt;
        self.nonlinear(h);
        for &c in &self.comps {
            self.fft.apply_multiplier(&mut self.data[c], &self.mult[c]);
        }
        self.nonlinear(h);
        self.t += self.dt;
        let m = self.max_modulus();
        let finite = self.comps.iter().flat_map(|&c| self.data[c].iter()).all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite || m > 10.0 * self.max0 {
            return Err(Error::BlowUp { t: self.t });
        }
        Ok(())
    }

    pub fn max_modulus(&self) -> f64 {
        self.comps.iter().flat_map(|&c| self.data[c].iter()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn power(&self) -> f64 {
        let dy = self.template.dy;
        dy * dy * self.comps.iter().flat_map(|&c| self.data[c].iter()).map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Current state as a field on the original node grid.
    pub fn field(&self) -> CmeField {
        let mut f = self.template.clone();
        let (n, np) = (f.n, self.np);
        for &c in &self.comps {
            for i1 in 0..n {
                for i2 in 0..n {
                    f.a[c][i1 * n + i2] = self.data[c][(i1 % np) * np + i2 % np];
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeDiagnostics {
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub power_initial: f64,
    pub power_final: f64,
    pub max_initial: f64,
    pub max_final: f64,
}

/// Evolve to `t_end` with the step rounded so that it divides `t_end`.
pub fn integrate_cme_time(initial: &CmeField, t_end: f64, dt: f64) -> Result<(CmeField, TimeDiagnostics)> {
    if !(t_end >= 0.0 && dt > 0.0) {
        return Err(Error::InvalidInput(format!("t_end = {t_end}, dt = {dt}")));
    }
    let steps = ((t_end / dt).round() as usize).max(1);
    let dt = t_end / steps as f64;
    let mut s = CmeStepper::new(initial, if dt > 0.0 { dt } else { 1.0 })?;
    let power_initial = s.power();
    if t_end > 0.0 {
        for _ in 0..steps {
            s.step()?;
        }
    }
    let f = s.field();
    let d = TimeDiagnostics {
        t_end,
        dt,
        steps: if t_end > 0.0 { steps } else { 0 },
        power_initial,
        power_final: s.power(),
        max_initial: initial.max_modulus(),
        max_final: f.max_modulus(),
    };
    Ok((f, d))
}
