//! Radial ground states by shooting and the class seeds built from them.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{ClassTag, CmeField};
use crate::resonance::ResonanceCoefficients;
use crate::{Error, Result};

/// Normalised profile `S(rho)` of `S'' + S'/rho - m^2 S/rho^2 - S + S^3 = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedProfile {
    pub m: u32,
    /// `Q(0) = lim S / rho^m`.
    pub q0: f64,
    pub drho: f64,
    /// `S` on `rho = k drho` up to the matching point.
    pub values: Vec<f64>,
    /// Beyond `rho_cut` the Bessel-K asymptotic tail is used.
    pub rho_cut: f64,
    pub s_cut: f64,
}

impl NormalizedProfile {
    pub fn s0(&self) -> f64 {
        if self.m == 0 {
            self.q0
        } else {
            0.0
        }
    }

    fn tail_shape(&self, rho: f64) -> f64 {
        let mu = 4.0 * (self.m as f64).powi(2);
        let z = 8.0 * rho;
        (-rho).exp() / rho.sqrt() * (1.0 + (mu - 1.0) / z + (mu - 1.0) * (mu - 9.0) / (2.0 * z * z))
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let rho = rho.abs();
        if rho >= self.rho_cut {
            return self.s_cut * self.tail_shape(rho) / self.tail_shape(self.rho_cut);
        }
        let t = rho / self.drho;
        let j = (t.floor() as usize).min(self.values.len() - 2);
        let f = t - j as f64;
        let w = super::cubic_weights(f);
        let last = self.values.len() as isize - 1;
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let i = j as isize + k as isize - 1;
            // S is even (m = 0) or odd (m = 1) in rho
            let v = if i < 0 {
                let s = if self.m % 2 == 0 { 1.0 } else { -1.0 };
                s * self.values[(-i) as usize]
            } else {
                self.values[i.min(last) as usize]
            };
            acc += wk * v;
        }
        acc
    }
}

const RHO_END: f64 = 40.0;

enum Shot {
    Over,
    Under,
}

/// RK4 on `(Q, Q')` for `Q'' + (2m+1)/rho Q' - Q + rho^{2m} Q^3 = 0`.
/// Overshoot: `Q` changes sign; undershoot: `S = rho^m Q` turns upward
/// after it has started to decay.
fn shoot(m: u32, q0: f64, h: f64, mut record: Option<&mut Vec<f64>>) -> (Shot, f64) {
    let mf = m as f64;
    let mi = m as i32;
    let rhs = |r: f64, q: f64, p: f64| -> f64 { -(2.0 * mf + 1.0) / r * p + q - r.powi(2 * mi) * q * q * q };
    // series start: Q = q0 + c rho^2
    let c = if m == 0 { (q0 - q0 * q0 * q0) / 4.0 } else { q0 / (4.0 * mf + 4.0) };
    let mut r = h;
    let mut q = q0 + c * h * h;
    let mut p = 2.0 * c * h;
    if let Some(v) = record.as_deref_mut() {
        v.push(if m == 0 { q0 } else { 0.0 });
        v.push(q * h.powi(mi));
    }
    let mut descending = false;
    let steps = (RHO_END / h) as usize;
    for _ in 1..steps {
        let (k1q, k1p) = (p, rhs(r, q, p));
        let (k2q, k2p) = (p + 0.5 * h * k1p, rhs(r + 0.5 * h, q + 0.5 * h * k1q, p + 0.5 * h * k1p));
        let (k3q, k3p) = (p + 0.5 * h * k2p, rhs(r + 0.5 * h, q + 0.5 * h * k2q, p + 0.5 * h * k2p));
        let (k4q, k4p) = (p + h * k3p, rhs(r + h, q + h * k3q, p + h * k3p));
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        r += h;
        if q < 0.0 {
            return (Shot::Over, r);
        }
        let ds = if m == 0 { p } else { mf * r.powi(mi - 1) * q + r.powi(mi) * p };
        if ds < 0.0 {
            descending = true;
        } else if descending && ds > 0.0 {
            return (Shot::Under, r);
        }
        if let Some(v) = record.as_deref_mut() {
            v.push(q * r.powi(mi));
        }
    }
    (Shot::Under, r)
}

/// Ground state (`m = 0`, Townes) or charge-one vortex profile by bisection
/// on `Q(0)`.
pub fn townes_profile(m: u32, drho: f64) -> Result<NormalizedProfile> {
    if m > 1 {
        return Err(Error::InvalidInput(format!("winding charge {m} not supported")));
    }
    if !(drho > 0.0 && drho <= 0.05) {
        return Err(Error::InvalidInput(format!("radial step {drho} out of range")));
    }
    let mut lo = 0.5;
    if !matches!(shoot(m, lo, drho, None).0, Shot::Under) {
        return Err(Error::NoLocalizedSolution("shooting bracket: low end overshoots".into()));
    }
    let mut hi = 1.0;
    let mut found = false;
    for _ in 0..60 {
        if matches!(shoot(m, hi, drho, None).0, Shot::Over) {
            found = true;
            break;
        }
        lo = hi;
        hi *= 1.5;
    }
    if !found {
        return Err(Error::NoLocalizedSolution("no overshooting initial value".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(m, mid, drho, None).0 {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
        }
    }
    let mut values = Vec::new();
    let (_, r_turn) = shoot(m, lo, drho, Some(&mut values));
    // the bisected trajectory tracks the separatrix to relative ~1e-7 until
    // about 8 units before it turns away
    let rho_cut = (r_turn - 8.0).max(6.0);
    let k_cut = (rho_cut / drho).round() as usize;
    values.truncate(k_cut + 1);
    let s_cut = values[k_cut];
    Ok(NormalizedProfile { m, q0: lo, drho, values, rho_cut: k_cut as f64 * drho, s_cut })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadialClass {
    A,
    #[serde(rename = "B-i")]
    Bi,
}

/// `R(r) = amp * S(kappa_r * r)` on the scaled radial variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    pub class_tag: ClassTag,
    pub m: u32,
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub amp: f64,
    /// Decay rate in the scaled radial variable.
    pub kappa_r: f64,
    /// Decay rate `sqrt(|Omega - beta_edge| / |alpha_eff|)` in `y`.
    pub kappa: f64,
    /// Constant `C` of the tail `R ~ C exp(-kappa_r r) / sqrt(r)`.
    pub tail_constant: f64,
    /// Relative spread of `R sqrt(r) exp(kappa_r r)` over the tail window.
    pub tail_spread: f64,
    pub normalized: NormalizedProfile,
}

impl RadialProfile {
    pub fn eval(&self, r: f64) -> f64 {
        self.amp * self.normalized.eval(self.kappa_r * r)
    }
}

/// Scalar reduction `a Lap R + d R = sigma g R^3` (with `a = +-1` after the
/// radial variable absorbs `|alpha|`) solved by rescaling the normalised
/// profile.
fn radial_core(
    class_tag: ClassTag,
    m: u32,
    d: f64,
    a_sign: f64,
    sigma: f64,
    g: f64,
    alpha_abs: f64,
    r_max: f64,
    dr: f64,
) -> Result<RadialProfile> {
    let k2 = -d / a_sign;
    let c = -sigma * g / a_sign;
    if !(k2 > 0.0) {
        return Err(Error::NoLocalizedSolution(format!(
            "frequency on the wrong side of the edge (Omega - beta = {d:.4})"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::NoLocalizedSolution(format!("defocusing combination sigma = {sigma}, gamma = {g:.4e}")));
    }
    if !(dr > 0.0 && r_max > dr) {
        return Err(Error::InvalidInput(format!("bad radial grid r_max = {r_max}, dr = {dr}")));
    }
    let kappa_r = k2.sqrt();
    let amp = (k2 / c).sqrt();
    let drho = 2e-3;
    let normalized = townes_profile(m, drho)?;
    let peak = normalized.values.iter().fold(0.0f64, |a, &b| a.max(b));
    let end = normalized.eval(kappa_r * r_max) / peak;
    if end > 1e-8 {
        return Err(Error::TailContamination { r_max, residual: end });
    }
    let count = (r_max / dr).floor() as usize + 1;
    let r_grid: Vec<f64> = (0..count).map(|k| k as f64 * dr).collect();
    let values: Vec<f64> = r_grid.iter().map(|&r| amp * normalized.eval(kappa_r * r)).collect();
    // tail check on the shooting part only, rho in [rho_cut - 4, rho_cut]
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let hrho = normalized.drho;
    let k0 = ((normalized.rho_cut - 4.0).max(4.0) / hrho) as usize;
    for k in k0..normalized.values.len() {
        let rho = k as f64 * hrho;
        let v = normalized.values[k] * rho.sqrt() * rho.exp();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let cst = 0.5 * (lo + hi);
    let tail_spread = (hi - lo) / cst;
    Ok(RadialProfile {
        class_tag,
        m,
        r_grid,
        values,
        amp,
        kappa_r,
        kappa: kappa_r / alpha_abs.sqrt(),
        tail_constant: amp * cst * kappa_r.powf(-0.5),
        tail_spread,
        normalized,
    })
}

/// One-component radial profile.
///
/// Class A solves `(Omega - beta2) R + alpha3 Lap R = sigma gamma4 R^3` in
/// `r = |y| / sqrt(|alpha3|)`; class B-i solves the first equation with
/// `A2 = A3 = 0` in the ellipsoidal variable `r = sqrt(y1^2/alpha1 + y2^2/alpha2)`.
pub fn solve_radial_profile(
    class: RadialClass,
    m: u32,
    omega: f64,
    sigma: f64,
    coeffs: &ResonanceCoefficients,
    r_max: f64,
    dr: f64,
) -> Result<RadialProfile> {
    match class {
        RadialClass::A => {
            let tag = if m == 0 { ClassTag::AM0 } else { ClassTag::AM1 };
            let a = coeffs.alpha3;
            radial_core(tag, m, omega - coeffs.beta2, a.signum(), sigma, coeffs.gamma4, a.abs(), r_max, dr)
        }
        RadialClass::Bi => {
            let tag = if m == 0 { ClassTag::BiM0 } else { ClassTag::BiM1 };
            let (a1, a2) = (coeffs.alpha1, coeffs.alpha2);
            if a1 * a2 <= 0.0 {
                return Err(Error::NoLocalizedSolution("curvatures of opposite sign".into()));
            }
            let alpha_eff = a1.abs().min(a2.abs());
            radial_core(tag, m, omega - coeffs.beta1, a1.signum(), sigma, coeffs.gamma1, alpha_eff, r_max, dr)
        }
    }
}

/// Initial field of a class. One-component classes are exact continuum
/// solutions; two-component classes are solved at equal curvatures
/// `alpha_bar = (alpha1 + alpha2)/2` (the field's `alpha12` records this)
/// and need a homotopy to the true coefficients.
pub fn seed_field(
    class: ClassTag,
    omega: f64,
    sigma: f64,
    coeffs: &ResonanceCoefficients,
    d: f64,
    dy: f64,
) -> Result<CmeField> {
    let mut f = CmeField::zeros(coeffs, d, dy, omega, sigma, class)?;
    let r_max = 2.0 * d * (coeffs.alpha1.abs().max(coeffs.alpha2.abs()).max(coeffs.alpha3.abs())).sqrt().max(1.0);
    let dr = 0.25 * dy;
    let z = C64::new(0.0, 0.0);
    let polar = |m: u32, x: f64, y: f64| -> C64 {
        if m == 0 {
            C64::new(1.0, 0.0)
        } else {
            let r = x.hypot(y);
            if r == 0.0 {
                z
            } else {
                C64::new(x / r, y / r)
            }
        }
    };
    let generous = |res: Result<RadialProfile>| match res {
        Err(Error::TailContamination { .. }) => Err(Error::InvalidInput("radial grid too short".into())),
        other => other,
    };
    match class {
        ClassTag::AM0 | ClassTag::AM1 => {
            let m = (class == ClassTag::AM1) as u32;
            let prof = generous(solve_radial_profile(RadialClass::A, m, omega, sigma, coeffs, r_max, dr))?;
            let s = coeffs.alpha3.abs().sqrt();
            f.fill(|y1, y2| [z, z, prof.eval(y1.hypot(y2) / s) * polar(m, y1, y2)]);
        }
        ClassTag::BiM0 | ClassTag::BiM1 => {
            let m = (class == ClassTag::BiM1) as u32;
            let prof = generous(solve_radial_profile(RadialClass::Bi, m, omega, sigma, coeffs, r_max, dr))?;
            let (s1, s2) = (coeffs.alpha1.abs().sqrt(), coeffs.alpha2.abs().sqrt());
            f.fill(|y1, y2| {
                let (u, v) = (y1 / s1, y2 / s2);
                [prof.eval(u.hypot(v)) * polar(m, u, v), z, z]
            });
        }
        ClassTag::Bii | ClassTag::Biii | ClassTag::Biv => {
            let abar = 0.5 * (coeffs.alpha1 + coeffs.alpha2);
            f.alpha12 = (abar, abar);
            let (g, m) = match class {
                ClassTag::Biii => (coeffs.gamma1 + coeffs.gamma2, 0),
                ClassTag::Biv => (coeffs.gamma1 + 3.0 * coeffs.gamma2, 1),
                _ => (coeffs.gamma1 + 3.0 * coeffs.gamma2, 0),
            };
            let prof = generous(radial_core(
                class,
                m,
                omega - coeffs.beta1,
                abar.signum(),
                sigma,
                g,
                abar.abs(),
                r_max,
                dr,
            ))?;
            let s = abar.abs().sqrt();
            let mi = C64::new(0.0, -1.0);
            f.fill(|y1, y2| {
                let u = prof.eval(y1.hypot(y2) / s) * polar(m, y1, y2);
                match class {
                    ClassTag::Biii => [u, mi * u, z],
                    _ => [u, u, z],
                }
            });
        }
        ClassTag::General => {
            return Err(Error::InvalidInput("no seed for the general class".into()));
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cme2d::tests::coeffs;

    #[test]
    fn townes_constant() {
        let p = townes_profile(0, 1e-3).unwrap();
        assert!((p.q0 - 2.2062008646).abs() < 1e-6, "{}", p.q0);
        assert!(p.rho_cut > 8.0);
        // monotone decay and positivity
        assert!(p.values.windows(2).all(|w| w[1] < w[0]));
        assert!(p.eval(25.0) > 0.0 && p.eval(25.0) < 1e-9);
    }

    #[test]
    fn vortex_profile_vanishes_linearly() {
        let p = townes_profile(1, 1e-3).unwrap();
        assert_eq!(p.values[0], 0.0);
        let slope = p.values[1] / p.drho;
        assert!((slope - p.q0).abs() < 1e-4 * p.q0);
        assert!(p.q0 > 0.0);
    }

    #[test]
    fn b_i_scaling_law() {
        let c = coeffs();
        let d = 0.3;
        let p1 = solve_radial_profile(RadialClass::Bi, 0, c.beta1 - d, -1.0, &c, 60.0, 0.01).unwrap();
        let p2 = solve_radial_profile(RadialClass::Bi, 0, c.beta1 - 2.0 * d, -1.0, &c, 60.0, 0.01).unwrap();
        let s0 = p1.normalized.q0;
        assert!((p1.values[0] - (d / c.gamma1).sqrt() * s0).abs() < 1e-9);
        assert!((p2.values[0] / p1.values[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wrong_side_and_short_box() {
        let c = coeffs();
        let e = solve_radial_profile(RadialClass::A, 0, c.beta2 - 0.1, 1.0, &c, 60.0, 0.01);
        assert!(matches!(e, Err(Error::NoLocalizedSolution(_))));
        let e = solve_radial_profile(RadialClass::Bi, 0, c.beta1 - 0.3, 1.0, &c, 60.0, 0.01);
        assert!(matches!(e, Err(Error::NoLocalizedSolution(_))));
        let e = solve_radial_profile(RadialClass::A, 0, c.beta2 + 0.3, 1.0, &c, 5.0, 0.01);
        assert!(matches!(e, Err(Error::TailContamination { .. })));
    }

    #[test]
    fn tail_is_exponential() {
        let c = coeffs();
        let p = solve_radial_profile(RadialClass::A, 0, 1.3, 1.0, &c, 60.0, 0.01).unwrap();
        assert!(p.tail_spread < 0.1, "{}", p.tail_spread);
        assert!((p.kappa - ((1.3 - c.beta2) / c.alpha3.abs()).sqrt()).abs() < 1e-12);
    }
}
