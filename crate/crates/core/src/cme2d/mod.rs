//! Coupled-mode envelopes `A1, A2, A3` on the slow scale `y = sqrt(eps) x`.
//!
//! Stationary system, component `j`:
//!
//! ```text
//! (Omega - beta_j) A_j + a_j1 d11 A_j + a_j2 d22 A_j = sigma N_j(A)
//! ```
//!
//! discretised with fourth-order central differences on `[-D, D]^2` with
//! zero Dirichlet data.

mod newton;
mod radial;
mod time;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::linalg::Csr;
use crate::resonance::ResonanceCoefficients;
use crate::{Error, Result};

pub use newton::{
    continue_in_omega, continue_in_omega_with, homotopy_continue, solve_class, solve_cme_newton, BranchEnd,
    BranchPoint, HomotopyReport, least_squares_slope, EDGE_AMPLITUDE, NewtonOptions, NewtonReport, SolutionBranch, SolveSpec,
};
pub use radial::{
    seed_field, solve_radial_profile, townes_profile, NormalizedProfile, RadialClass, RadialProfile,
};
pub use time::{integrate_cme_time, CmeStepper, TimeDiagnostics};

/// Solution classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassTag {
    #[serde(rename = "A-m0")]
    AM0,
    #[serde(rename = "A-m1")]
    AM1,
    #[serde(rename = "B-i-m0")]
    BiM0,
    #[serde(rename = "B-i-m1")]
    BiM1,
    #[serde(rename = "B-ii")]
    Bii,
    #[serde(rename = "B-iii")]
    Biii,
    #[serde(rename = "B-iv")]
    Biv,
    #[serde(rename = "general")]
    General,
}

impl ClassTag {
    pub const ALL: [ClassTag; 8] = [
        ClassTag::AM0,
        ClassTag::AM1,
        ClassTag::BiM0,
        ClassTag::BiM1,
        ClassTag::Bii,
        ClassTag::Biii,
        ClassTag::Biv,
        ClassTag::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassTag::AM0 => "A-m0",
            ClassTag::AM1 => "A-m1",
            ClassTag::BiM0 => "B-i-m0",
            ClassTag::BiM1 => "B-i-m1",
            ClassTag::Bii => "B-ii",
            ClassTag::Biii => "B-iii",
            ClassTag::Biv => "B-iv",
            ClassTag::General => "general",
        }
    }

    /// Default nonlinearity sign: class A lives at the lower edge with
    /// `sigma = +1`, the B classes at the upper edge with `sigma = -1`.
    pub fn default_sigma(self) -> f64 {
        match self {
            ClassTag::AM0 | ClassTag::AM1 => 1.0,
            _ => -1.0,
        }
    }

    pub fn is_one_component(self) -> bool {
        matches!(self, ClassTag::AM0 | ClassTag::AM1 | ClassTag::BiM0 | ClassTag::BiM1)
    }

    pub fn is_two_component(self) -> bool {
        matches!(self, ClassTag::Bii | ClassTag::Biii | ClassTag::Biv)
    }
}

impl fmt::Display for ClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let k = match s {
            "A" | "A-m0" => ClassTag::AM0,
            "A-m1" => ClassTag::AM1,
            "B-i" | "B-i-m0" => ClassTag::BiM0,
            "B-i-m1" => ClassTag::BiM1,
            "B-ii" => ClassTag::Bii,
            "B-iii" => ClassTag::Biii,
            "B-iv" => ClassTag::Biv,
            "general" => ClassTag::General,
            _ => return Err(Error::InvalidInput(format!("unknown class tag '{s}'"))),
        };
        Ok(k)
    }
}

/// Parameters of the stationary system with possibly overridden curvatures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmeSystem {
    pub omega: f64,
    pub sigma: f64,
    pub beta: [f64; 3],
    /// `(a_j1, a_j2)` per component.
    pub curv: [(f64, f64); 3],
    pub gamma: [f64; 4],
}

impl CmeSystem {
    pub fn new(c: &ResonanceCoefficients, omega: f64, sigma: f64, alpha12: (f64, f64)) -> Self {
        let (a1, a2) = alpha12;
        Self {
            omega,
            sigma,
            beta: [c.beta1, c.beta1, c.beta2],
            curv: [(a1, a2), (a2, a1), (c.alpha3, c.alpha3)],
            gamma: [c.gamma1, c.gamma2, c.gamma3, c.gamma4],
        }
    }

    /// Pointwise cubic coupling `N(A)`.
    pub fn nonlinear(&self, a: [C64; 3]) -> [C64; 3] {
        let [g1, g2, g3, g4] = self.gamma;
        let [a1, a2, a3] = a;
        let (n1, n2, n3) = (a1.norm_sqr(), a2.norm_sqr(), a3.norm_sqr());
        let m1 = g1 * n1 * a1 + g2 * (2.0 * n2 * a1 + a2 * a2 * a1.conj()) + g3 * (2.0 * n3 * a1 + a3 * a3 * a1.conj());
        let m2 = g1 * n2 * a2 + g2 * (2.0 * n1 * a2 + a1 * a1 * a2.conj()) + g3 * (2.0 * n3 * a2 + a3 * a3 * a2.conj());
        let m3 = g4 * n3 * a3 + 2.0 * g3 * (n1 + n2) * a3 + g3 * (a1 * a1 + a2 * a2) * a3.conj();
        [m1, m2, m3]
    }

    /// Wirtinger derivatives: `dN_j = sum_k P[j][k] dA_k + Q[j][k] conj(dA_k)`.
    pub fn nonlinear_jac(&self, a: [C64; 3]) -> ([[C64; 3]; 3], [[C64; 3]; 3]) {
        let [g1, g2, g3, g4] = self.gamma;
        let [a1, a2, a3] = a;
        let (n1, n2, n3) = (a1.norm_sqr(), a2.norm_sqr(), a3.norm_sqr());
        let cross = |u: C64, v: C64| 2.0 * (u * v.conj() + u.conj() * v);
        let z = C64::new(0.0, 0.0);
        let mut p = [[z; 3]; 3];
        let mut q = [[z; 3]; 3];
        p[0][0] = C64::from(2.0 * (g1 * n1 + g2 * n2 + g3 * n3));
        q[0][0] = g1 * a1 * a1 + g2 * a2 * a2 + g3 * a3 * a3;
        p[0][1] = g2 * cross(a1, a2);
        q[0][1] = 2.0 * g2 * a1 * a2;
        p[0][2] = g3 * cross(a1, a3);
        q[0][2] = 2.0 * g3 * a1 * a3;

        p[1][1] = C64::from(2.0 * (g1 * n2 + g2 * n1 + g3 * n3));
        q[1][1] = g1 * a2 * a2 + g2 * a1 * a1 + g3 * a3 * a3;
        p[1][0] = g2 * cross(a2, a1);
        q[1][0] = 2.0 * g2 * a2 * a1;
        p[1][2] = g3 * cross(a2, a3);
        q[1][2] = 2.0 * g3 * a2 * a3;

        p[2][2] = C64::from(2.0 * g4 * n3 + 2.0 * g3 * (n1 + n2));
        q[2][2] = g4 * a3 * a3 + g3 * (a1 * a1 + a2 * a2);
        p[2][0] = g3 * cross(a3, a1);
        q[2][0] = 2.0 * g3 * a3 * a1;
        p[2][1] = g3 * cross(a3, a2);
        q[2][1] = 2.0 * g3 * a3 * a2;
        (p, q)
    }
}

/// Fourth-order `d^2/dy^2` weights (times `12 dy^2`) at interior node `i` of
/// `0..n`. End nodes carry zero data; the ghost beyond them is the odd
/// reflection, which keeps the stencil symmetric.
pub(crate) fn stencil(i: usize, n: usize) -> ([usize; 5], [f64; 5], usize) {
    const W: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
    let mut idx = [0usize; 5];
    let mut w = [0.0; 5];
    let mut len = 0;
    let mut push = |j: usize, v: f64| {
        if let Some(k) = idx[..len].iter().position(|&x| x == j) {
            w[k] += v;
        } else {
            idx[len] = j;
            w[len] = v;
            len += 1;
        }
    };
    for (k, &wk) in W.iter().enumerate() {
        let j = i as isize + k as isize - 2;
        if j == 0 || j == n as isize - 1 {
            continue;
        }
        if j < 0 {
            push(1, -wk);
        } else if j >= n as isize {
            push(n - 2, -wk);
        } else {
            push(j as usize, wk);
        }
    }
    (idx, w, len)
}

/// Envelope triple on the node grid `y = -D + i dy`, `i = 0..n`, row-major
/// with `y1` along rows: `a[c][i1 * n + i2]`.
#[derive(Debug, Clone)]
pub struct CmeField {
    pub d: f64,
    pub dy: f64,
    pub n: usize,
    pub omega: f64,
    pub sigma: f64,
    pub coeffs: ResonanceCoefficients,
    /// Curvatures `(alpha1, alpha2)` the field solves with; differs from
    /// the coefficients only along a homotopy.
    pub alpha12: (f64, f64),
    pub class_tag: ClassTag,
    pub a: [Vec<C64>; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    #[serde(rename = "D")]
    pub d: f64,
    pub dy: f64,
    pub n: usize,
    pub omega: f64,
    pub sigma: f64,
    pub class_tag: ClassTag,
    pub components: usize,
    pub layout: String,
    pub scalar: String,
    pub alpha12: (f64, f64),
    pub coeffs: ResonanceCoefficients,
}

impl CmeField {
    /// Zero field on `[-D, D]^2` with spacing close to `dy`; `n` is odd so
    /// that `y = 0` is a node.
    pub fn zeros(
        coeffs: &ResonanceCoefficients,
        d: f64,
        dy: f64,
        omega: f64,
        sigma: f64,
        class_tag: ClassTag,
    ) -> Result<Self> {
        if !(d > 0.0 && dy > 0.0 && dy < d) {
            return Err(Error::InvalidInput(format!("bad box D = {d}, dy = {dy}")));
        }
        if sigma.abs() != 1.0 {
            return Err(Error::InvalidInput(format!("sigma must be +-1, got {sigma}")));
        }
        let mut cells = (2.0 * d / dy).round() as usize;
        if cells % 2 == 1 {
            cells += 1;
        }
        let cells = cells.max(4);
        let n = cells + 1;
        let z = vec![C64::new(0.0, 0.0); n * n];
        Ok(Self {
            d,
            dy: 2.0 * d / cells as f64,
            n,
            omega,
            sigma,
            coeffs: coeffs.clone(),
            alpha12: (coeffs.alpha1, coeffs.alpha2),
            class_tag,
            a: [z.clone(), z.clone(), z],
        })
    }

    pub fn y(&self, i: usize) -> f64 {
        -self.d + i as f64 * self.dy
    }

    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn system(&self) -> CmeSystem {
        CmeSystem::new(&self.coeffs, self.omega, self.sigma, self.alpha12)
    }

    pub fn at(&self, i1: usize, i2: usize) -> [C64; 3] {
        let q = i1 * self.n + i2;
        [self.a[0][q], self.a[1][q], self.a[2][q]]
    }

    /// Fill every node from `f(y1, y2)`; the boundary is then zeroed.
    pub fn fill(&mut self, f: impl Fn(f64, f64) -> [C64; 3]) {
        let n = self.n;
        for i1 in 0..n {
            for i2 in 0..n {
                let v = if i1 == 0 || i2 == 0 || i1 == n - 1 || i2 == n - 1 {
                    [C64::new(0.0, 0.0); 3]
                } else {
                    f(self.y(i1), self.y(i2))
                };
                for c in 0..3 {
                    self.a[c][i1 * n + i2] = v[c];
                }
            }
        }
    }

    /// Components carrying nonzero data.
    pub fn active(&self) -> Vec<usize> {
        (0..3).filter(|&c| self.a[c].iter().any(|z| z.norm_sqr() > 0.0)).collect()
    }

    pub fn is_real(&self) -> bool {
        self.a.iter().all(|v| v.iter().all(|z| z.im == 0.0))
    }

    /// `max (|A1|^2 + |A2|^2 + |A3|^2)^{1/2}` over the grid.
    pub fn amplitude(&self) -> f64 {
        (0..self.n * self.n)
            .map(|q| self.a.iter().map(|v| v[q].norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn max_modulus(&self) -> f64 {
        self.a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus on the first interior ring relative to the maximum.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.n;
        let m = self.max_modulus();
        if m == 0.0 {
            return 0.0;
        }
        let mut b = 0.0f64;
        for k in 1..n - 1 {
            for (i1, i2) in [(1, k), (n - 2, k), (k, 1), (k, n - 2)] {
                for v in &self.a {
                    b = b.max(v[i1 * n + i2].norm());
                }
            }
        }
        b / m
    }

    /// `sum_j int |A_j|^2 dy` (trapezoid; boundary values are zero).
    pub fn power(&self) -> f64 {
        self.dy * self.dy * self.a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Multiply by `exp(i theta)`.
    pub fn rotated(&self, theta: f64) -> Self {
        let mut f = self.clone();
        let e = C64::from_polar(1.0, theta);
        f.a.iter_mut().flatten().for_each(|z| *z *= e);
        f
    }

    /// `(A1, A2, A3)(y1, y2) -> (A2, A1, A3)(y2, y1)`.
    pub fn swapped(&self) -> Self {
        let mut f = self.clone();
        let n = self.n;
        for i1 in 0..n {
            for i2 in 0..n {
                let (p, q) = (i1 * n + i2, i2 * n + i1);
                f.a[0][p] = self.a[1][q];
                f.a[1][p] = self.a[0][q];
                f.a[2][p] = self.a[2][q];
            }
        }
        f
    }

    /// Laplacian-type term `a1 d11 u + a2 d22 u` at interior node `(i1, i2)`.
    fn curvature_term(&self, u: &[C64], i1: usize, i2: usize, a1: f64, a2: f64) -> C64 {
        let n = self.n;
        let s = 1.0 / (12.0 * self.dy * self.dy);
        let mut acc = C64::new(0.0, 0.0);
        let (idx, w, len) = stencil(i1, n);
        for k in 0..len {
            acc += a1 * s * w[k] * u[idx[k] * n + i2];
        }
        let (idx, w, len) = stencil(i2, n);
        for k in 0..len {
            acc += a2 * s * w[k] * u[i1 * n + idx[k]];
        }
        acc
    }

    /// Residual of the discrete stationary system at every node (zero on
    /// the boundary).
    pub fn residual(&self) -> [Vec<C64>; 3] {
        self.residual_with(&self.system())
    }

    pub fn residual_with(&self, sys: &CmeSystem) -> [Vec<C64>; 3] {
        let n = self.n;
        let z = vec![C64::new(0.0, 0.0); n * n];
        let mut r = [z.clone(), z.clone(), z];
        for i1 in 1..n - 1 {
            for i2 in 1..n - 1 {
                let q = i1 * n + i2;
                let nl = sys.nonlinear(self.at(i1, i2));
                for c in 0..3 {
                    let (a1, a2) = sys.curv[c];
                    let lin = (sys.omega - sys.beta[c]) * self.a[c][q] + self.curvature_term(&self.a[c], i1, i2, a1, a2);
                    r[c][q] = lin - sys.sigma * nl[c];
                }
            }
        }
        r
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual().iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Bicubic (Catmull–Rom) interpolation of all components at `(y1, y2)`;
    /// zero outside the box.
    pub fn interpolate(&self, y1: f64, y2: f64) -> [C64; 3] {
        let z = C64::new(0.0, 0.0);
        let n = self.n as isize;
        let t1 = (y1 + self.d) / self.dy;
        let t2 = (y2 + self.d) / self.dy;
        if !(t1 >= 0.0 && t2 >= 0.0 && t1 <= (n - 1) as f64 && t2 <= (n - 1) as f64) {
            return [z; 3];
        }
        let j1 = (t1.floor() as isize).min(n - 2);
        let j2 = (t2.floor() as isize).min(n - 2);
        let w1 = cubic_weights(t1 - j1 as f64);
        let w2 = cubic_weights(t2 - j2 as f64);
        let mut out = [z; 3];
        for (p, wp) in w1.iter().enumerate() {
            let k1 = j1 + p as isize - 1;
            if k1 < 0 || k1 >= n {
                continue;
            }
            for (q, wq) in w2.iter().enumerate() {
                let k2 = j2 + q as isize - 1;
                if k2 < 0 || k2 >= n {
                    continue;
                }
                let idx = k1 as usize * self.n + k2 as usize;
                let w = wp * wq;
                for c in 0..3 {
                    out[c] += w * self.a[c][idx];
                }
            }
        }
        out
    }

    /// Resample onto a new box `[-d, d]^2` with spacing close to `dy`
    /// (zero-padded where the new box is larger).
    pub fn resampled(&self, d: f64, dy: f64) -> Result<Self> {
        let mut f = CmeField::zeros(&self.coeffs, d, dy, self.omega, self.sigma, self.class_tag)?;
        f.alpha12 = self.alpha12;
        let src = self.clone();
        f.fill(|y1, y2| src.interpolate(y1, y2));
        Ok(f)
    }

    /// Relative defect of the class reversibility relations.
    pub fn reversibility_defect(&self) -> f64 {
        let n = self.n;
        let m = self.max_modulus();
        if m == 0.0 {
            return 0.0;
        }
        let mirror = |i: usize| n - 1 - i;
        let mut worst = 0.0f64;
        let mut upd = |v: C64| worst = worst.max(v.norm());
        let (a1, a2, a3) = (&self.a[0], &self.a[1], &self.a[2]);
        let id = |i1: usize, i2: usize| i1 * n + i2;
        let sign_of = |u: &[C64], v: &[C64]| {
            let (mut s, mut best) = (1.0, 0.0f64);
            for q in 0..u.len() {
                if u[q].norm() > best {
                    best = u[q].norm();
                    s = if (u[q] * v[q].conj()).re >= 0.0 { 1.0 } else { -1.0 };
                }
            }
            s
        };
        let even_real = |u: &[C64], upd: &mut dyn FnMut(C64)| {
            for i1 in 0..n {
                for i2 in 0..n {
                    let v = u[id(i1, i2)];
                    upd(C64::new(0.0, v.im));
                    upd(v - u[id(mirror(i1), i2)]);
                    upd(v - u[id(i1, mirror(i2))]);
                }
            }
        };
        // A(-y1, y2) = -conj A, A(y1, -y2) = conj A: charge-one reversibility
        let vortex = |u: &[C64], upd: &mut dyn FnMut(C64)| {
            for i1 in 0..n {
                for i2 in 0..n {
                    let v = u[id(i1, i2)];
                    upd(u[id(mirror(i1), i2)] + v.conj());
                    upd(u[id(i1, mirror(i2))] - v.conj());
                }
            }
        };
        let zero = |u: &[C64], upd: &mut dyn FnMut(C64)| u.iter().for_each(|&v| upd(v));
        match self.class_tag {
            ClassTag::AM0 => {
                zero(a1, &mut upd);
                zero(a2, &mut upd);
                even_real(a3, &mut upd);
            }
            ClassTag::AM1 => {
                zero(a1, &mut upd);
                zero(a2, &mut upd);
                vortex(a3, &mut upd);
            }
            ClassTag::BiM0 => {
                zero(a2, &mut upd);
                zero(a3, &mut upd);
                even_real(a1, &mut upd);
            }
            ClassTag::BiM1 => {
                zero(a2, &mut upd);
                zero(a3, &mut upd);
                vortex(a1, &mut upd);
            }
            ClassTag::Bii => {
                zero(a3, &mut upd);
                even_real(a1, &mut upd);
                let sw = self.swapped();
                let s = sign_of(a1, &sw.a[0]);
                for q in 0..n * n {
                    upd(a1[q] - s * sw.a[0][q]);
                }
            }
            ClassTag::Biii => {
                zero(a3, &mut upd);
                even_real(a1, &mut upd);
                // A2(y1, y2) = s * (-i) * A1(y2, y1)
                let sw = self.swapped();
                let mi = C64::new(0.0, -1.0);
                let s = sign_of(a2, &sw.a[1].iter().map(|&z| mi * z).collect::<Vec<_>>());
                for q in 0..n * n {
                    upd(a2[q] - s * mi * sw.a[1][q]);
                }
            }
            ClassTag::Biv => {
                zero(a3, &mut upd);
                vortex(a1, &mut upd);
                // A1(y1, y2) = s * i * conj A2(y2, y1)
                let sw = self.swapped();
                let i = C64::new(0.0, 1.0);
                let t: Vec<C64> = sw.a[0].iter().map(|&z| i * z.conj()).collect();
                let s = sign_of(a1, &t);
                for q in 0..n * n {
                    upd(a1[q] - s * t[q]);
                }
            }
            ClassTag::General => {}
        }
        worst / m
    }

    /// Project onto the class relations (the discrete system commutes with
    /// them, so this only removes roundoff that the near-kernel directions
    /// would otherwise keep).
    pub fn symmetrize(&mut self) {
        let n = self.n;
        let z = C64::new(0.0, 0.0);
        let mir = |i: usize| n - 1 - i;
        let even_real = |u: &mut Vec<C64>| {
            let v = u.clone();
            for i1 in 0..n {
                for i2 in 0..n {
                    let s = v[i1 * n + i2].re + v[mir(i1) * n + i2].re + v[i1 * n + mir(i2)].re + v[mir(i1) * n + mir(i2)].re;
                    u[i1 * n + i2] = C64::new(0.25 * s, 0.0);
                }
            }
        };
        let vortex = |u: &mut Vec<C64>| {
            let v = u.clone();
            for i1 in 0..n {
                for i2 in 0..n {
                    let s = v[i1 * n + i2] - v[mir(i1) * n + i2].conj() + v[i1 * n + mir(i2)].conj()
                        - v[mir(i1) * n + mir(i2)];
                    u[i1 * n + i2] = 0.25 * s;
                }
            }
        };
        let sign = |u: &[C64], v: &[C64]| {
            let q = (0..u.len()).max_by(|&p, &q| u[p].norm().total_cmp(&u[q].norm())).unwrap_or(0);
            if (u[q] * v[q].conj()).re >= 0.0 {
                1.0
            } else {
                -1.0
            }
        };
        let t = |i: usize| (i % n) * n + i / n;
        let i = C64::new(0.0, 1.0);
        match self.class_tag {
            ClassTag::AM0 | ClassTag::AM1 => {
                self.a[0].fill(z);
                self.a[1].fill(z);
                if self.class_tag == ClassTag::AM0 {
                    even_real(&mut self.a[2]);
                } else {
                    vortex(&mut self.a[2]);
                }
            }
            ClassTag::BiM0 | ClassTag::BiM1 => {
                self.a[1].fill(z);
                self.a[2].fill(z);
                if self.class_tag == ClassTag::BiM0 {
                    even_real(&mut self.a[0]);
                } else {
                    vortex(&mut self.a[0]);
                }
            }
            ClassTag::Bii | ClassTag::Biii | ClassTag::Biv => {
                self.a[2].fill(z);
                // image of A2 under the class relation, expressed as an A1
                let a2 = self.a[1].clone();
                let img: Vec<C64> = (0..n * n)
                    .map(|q| match self.class_tag {
                        ClassTag::Bii => a2[t(q)],
                        ClassTag::Biii => i * a2[t(q)],
                        _ => i * a2[t(q)].conj(),
                    })
                    .collect();
                let s = sign(&self.a[0], &img);
                for q in 0..n * n {
                    self.a[0][q] = 0.5 * (self.a[0][q] + s * img[q]);
                }
                if self.class_tag == ClassTag::Biv {
                    vortex(&mut self.a[0]);
                } else {
                    even_real(&mut self.a[0]);
                }
                let a1 = self.a[0].clone();
                for q in 0..n * n {
                    self.a[1][q] = match self.class_tag {
                        ClassTag::Bii => s * a1[t(q)],
                        ClassTag::Biii => -s * i * a1[t(q)],
                        _ => s * i * a1[t(q)].conj(),
                    };
                }
            }
            ClassTag::General => {}
        }
    }

    pub fn header(&self) -> FieldHeader {
        FieldHeader {
            d: self.d,
            dy: self.dy,
            n: self.n,
            omega: self.omega,
            sigma: self.sigma,
            class_tag: self.class_tag,
            components: 3,
            layout: "row-major".into(),
            scalar: "complex128-interleaved".into(),
            alpha12: self.alpha12,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::with_capacity(6 * self.n * self.n);
        for v in &self.a {
            for z in v {
                payload.push(z.re);
                payload.push(z.im);
            }
        }
        io::encode_binary(&self.header(), &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, p): (FieldHeader, Vec<f64>) = io::decode_binary(bytes)?;
        let nn = h.n * h.n;
        if h.components != 3 || p.len() != 6 * nn || h.n < 5 {
            return Err(Error::Format(format!("field payload has {} values for n = {}", p.len(), h.n)));
        }
        let comp = |c: usize| -> Vec<C64> { (0..nn).map(|q| C64::new(p[2 * (c * nn + q)], p[2 * (c * nn + q) + 1])).collect() };
        Ok(Self {
            d: h.d,
            dy: h.dy,
            n: h.n,
            omega: h.omega,
            sigma: h.sigma,
            coeffs: h.coeffs,
            alpha12: h.alpha12,
            class_tag: h.class_tag,
            a: [comp(0), comp(1), comp(2)],
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::atomic_write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Catmull–Rom weights for offsets `-1, 0, 1, 2` at fraction `t`.
pub(crate) fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Unknown layout of the realified system: interior point `p`, active
/// component slot `ci`, part (0 = Re, 1 = Im).
#[derive(Debug, Clone)]
pub struct Layout {
    pub n: usize,
    pub comps: Vec<usize>,
    pub complex: bool,
}

impl Layout {
    pub fn parts(&self) -> usize {
        if self.complex {
            2
        } else {
            1
        }
    }

    pub fn interior(&self) -> usize {
        (self.n - 2) * (self.n - 2)
    }

    pub fn size(&self) -> usize {
        self.interior() * self.comps.len() * self.parts()
    }

    pub fn index(&self, p: usize, ci: usize, part: usize) -> usize {
        (p * self.comps.len() + ci) * self.parts() + part
    }

    pub fn point(&self, i1: usize, i2: usize) -> usize {
        (i1 - 1) * (self.n - 2) + (i2 - 1)
    }

    /// Realified field values in this layout.
    pub fn gather(&self, f: &CmeField) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; self.size()];
        for i1 in 1..n - 1 {
            for i2 in 1..n - 1 {
                let p = self.point(i1, i2);
                for (ci, &c) in self.comps.iter().enumerate() {
                    let z = f.a[c][i1 * n + i2];
                    x[self.index(p, ci, 0)] = z.re;
                    if self.complex {
                        x[self.index(p, ci, 1)] = z.im;
                    }
                }
            }
        }
        x
    }

    /// Realify a per-node complex array (interior only).
    pub fn gather_arrays(&self, a: &[Vec<C64>; 3]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; self.size()];
        for i1 in 1..n - 1 {
            for i2 in 1..n - 1 {
                let p = self.point(i1, i2);
                for (ci, &c) in self.comps.iter().enumerate() {
                    let z = a[c][i1 * n + i2];
                    x[self.index(p, ci, 0)] = z.re;
                    if self.complex {
                        x[self.index(p, ci, 1)] = z.im;
                    }
                }
            }
        }
        x
    }

    /// Add `t * dx` into the field.
    pub fn scatter_add(&self, f: &mut CmeField, dx: &[f64], t: f64) {
        let n = self.n;
        for i1 in 1..n - 1 {
            for i2 in 1..n - 1 {
                let p = self.point(i1, i2);
                for (ci, &c) in self.comps.iter().enumerate() {
                    let z = &mut f.a[c][i1 * n + i2];
                    z.re += t * dx[self.index(p, ci, 0)];
                    if self.complex {
                        z.im += t * dx[self.index(p, ci, 1)];
                    }
                }
            }
        }
    }

    /// Complex per-node arrays from a realified vector.
    pub fn scatter(&self, x: &[f64]) -> [Vec<C64>; 3] {
        let n = self.n;
        let z = vec![C64::new(0.0, 0.0); n * n];
        let mut out = [z.clone(), z.clone(), z];
        for i1 in 1..n - 1 {
            for i2 in 1..n - 1 {
                let p = self.point(i1, i2);
                for (ci, &c) in self.comps.iter().enumerate() {
                    let re = x[self.index(p, ci, 0)];
                    let im = if self.complex { x[self.index(p, ci, 1)] } else { 0.0 };
                    out[c][i1 * n + i2] = C64::new(re, im);
                }
            }
        }
        out
    }
}

/// Realified Jacobian of the discrete system about `f` in layout `lay`;
/// row and column `pin`, if given, are replaced by the unit vector (the
/// pinned unknown is held fixed, and the matrix stays symmetric).
pub(crate) fn assemble_realified(f: &CmeField, sys: &CmeSystem, lay: &Layout, pin: Option<usize>) -> Csr {
    let n = f.n;
    let s = 1.0 / (12.0 * f.dy * f.dy);
    let parts = lay.parts();
    let nc = lay.comps.len();
    let mut t = Vec::with_capacity(lay.size() * (9 + 2 * nc));
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            let p = lay.point(i1, i2);
            let (pm, qm) = sys.nonlinear_jac(f.at(i1, i2));
            let (idx1, w1, l1) = stencil(i1, n);
            let (idx2, w2, l2) = stencil(i2, n);
            for (ci, &c) in lay.comps.iter().enumerate() {
                let (a1, a2) = sys.curv[c];
                for part in 0..parts {
                    let row = lay.index(p, ci, part);
                    t.push((row, row, sys.omega - sys.beta[c]));
                    for k in 0..l1 {
                        t.push((row, lay.index(lay.point(idx1[k], i2), ci, part), a1 * s * w1[k]));
                    }
                    for k in 0..l2 {
                        t.push((row, lay.index(lay.point(i1, idx2[k]), ci, part), a2 * s * w2[k]));
                    }
                }
                for (ck, &k) in lay.comps.iter().enumerate() {
                    let (pp, qq) = (pm[c][k], qm[c][k]);
                    let sg = -sys.sigma;
                    let rr = (p, ci, 0);
                    t.push((lay.index(rr.0, rr.1, 0), lay.index(p, ck, 0), sg * (pp.re + qq.re)));
                    if lay.complex {
                        t.push((lay.index(p, ci, 0), lay.index(p, ck, 1), sg * (-pp.im + qq.im)));
                        t.push((lay.index(p, ci, 1), lay.index(p, ck, 0), sg * (pp.im + qq.im)));
                        t.push((lay.index(p, ci, 1), lay.index(p, ck, 1), sg * (pp.re - qq.re)));
                    }
                }
            }
        }
    }
    if let Some(r) = pin {
        t.retain(|e| e.0 != r && e.1 != r);
        t.push((r, r, 1.0));
    }
    Csr::from_triplets(lay.size(), t)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::resonance::Provenance;

    pub(crate) fn coeffs() -> ResonanceCoefficients {
        ResonanceCoefficients {
            eta0: 0.174475,
            omega0: 0.667189,
            beta1: 2.283467,
            beta2: 0.918338,
            gamma1: 9.48286e-3,
            gamma2: 4.51964e-3,
            gamma3: 3.79423e-3,
            gamma4: 1.59807e-2,
            alpha1: 0.942171,
            alpha2: 6.781198,
            alpha3: -4.788940,
            provenance: Provenance {
                grid_n: 512,
                root_tol: 1e-10,
                bisection_width: 1e-6,
                curvature_dk: 0.01,
                potential_hash: String::new(),
            },
        }
    }

    #[test]
    fn stencil_is_symmetric_and_exact_on_sines() {
        let n = 11;
        let mut m = vec![vec![0.0; n]; n];
        for i in 1..n - 1 {
            let (idx, w, len) = stencil(i, n);
            for k in 0..len {
                m[i][idx[k]] += w[k];
            }
        }
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
        // sines vanishing at both ends are eigenvectors
        let th = 3.0 * std::f64::consts::PI / (n - 1) as f64;
        let lam = (-30.0 + 32.0 * th.cos() - 2.0 * (2.0 * th).cos()) as f64;
        for i in 1..n - 1 {
            let lhs: f64 = (1..n - 1).map(|j| m[i][j] * (th * j as f64).sin()).sum();
            assert!((lhs - lam * (th * i as f64).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn wirtinger_derivatives_match_differences() {
        let sys = CmeSystem::new(&coeffs(), 1.5, -1.0, (0.9, 6.7));
        let a = [C64::new(0.7, -0.3), C64::new(-0.2, 0.5), C64::new(0.4, 0.9)];
        let (p, q) = sys.nonlinear_jac(a);
        let h = 1e-6;
        for k in 0..3 {
            for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut ap = a;
                let mut am = a;
                ap[k] += h * dir;
                am[k] -= h * dir;
                let (np, nm) = (sys.nonlinear(ap), sys.nonlinear(am));
                for j in 0..3 {
                    let fd = (np[j] - nm[j]) / (2.0 * h);
                    let an = p[j][k] * dir + q[j][k] * dir.conj();
                    assert!((fd - an).norm() < 1e-8, "{j} {k}");
                }
            }
        }
    }

    #[test]
    fn gauge_and_swap_symmetry_of_residual() {
        let c = coeffs();
        let mut f = CmeField::zeros(&c, 4.0, 0.4, 1.5, -1.0, ClassTag::General).unwrap();
        f.fill(|y1, y2| {
            let g = (-(y1 * y1 + 0.5 * y2 * y2)).exp();
            [C64::new(g, 0.3 * g * y1), C64::new(0.5 * g, -g * y2), C64::new(0.2 * g, 0.1 * g)]
        });
        let r0 = f.residual();
        let r1 = f.rotated(std::f64::consts::FRAC_PI_3).residual();
        let e = C64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
        for c in 0..3 {
            for q in 0..f.n * f.n {
                assert!((r1[c][q] - e * r0[c][q]).norm() < 1e-13);
            }
        }
        let rs = f.swapped().residual();
        let sw = {
            let mut g = f.clone();
            g.a = r0.clone();
            g.swapped()
        };
        for c in 0..3 {
            for q in 0..f.n * f.n {
                assert!((rs[c][q] - sw.a[c][q]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn realified_jacobian_matches_residual_differences() {
        let c = coeffs();
        let mut f = CmeField::zeros(&c, 3.0, 0.5, 1.5, -1.0, ClassTag::General).unwrap();
        f.fill(|y1, y2| {
            let g = (-(y1 * y1 + y2 * y2) / 2.0).exp();
            [C64::new(3.0 * g, g * y1), C64::new(2.0 * g, -g), C64::new(g, 0.5 * g * y2)]
        });
        let lay = Layout { n: f.n, comps: vec![0, 1, 2], complex: true };
        let j = assemble_realified(&f, &f.system(), &lay, None);
        assert!(j.asymmetry() < 1e-12 * j.norm_inf());
        let x0 = lay.gather_arrays(&f.residual());
        let dir: Vec<f64> = (0..lay.size()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let h = 1e-6;
        let mut fp = f.clone();
        lay.scatter_add(&mut fp, &dir, h);
        let x1 = lay.gather_arrays(&fp.residual());
        let jd = j.apply(&dir);
        for i in 0..lay.size() {
            assert!(((x1[i] - x0[i]) / h - jd[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn field_bytes_roundtrip() {
        let c = coeffs();
        let mut f = CmeField::zeros(&c, 2.0, 0.5, 1.2, 1.0, ClassTag::AM0).unwrap();
        f.fill(|y1, y2| [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(y1, y2)]);
        let g = CmeField::from_bytes(&f.to_bytes().unwrap()).unwrap();
        assert_eq!(g.a, f.a);
        assert_eq!(g.class_tag, ClassTag::AM0);
        assert!(CmeField::from_bytes(b"{}\n").is_err());
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let c = coeffs();
        let mut f = CmeField::zeros(&c, 5.0, 0.25, 1.2, 1.0, ClassTag::General).unwrap();
        let g = |y1: f64, y2: f64| 0.1 * y1 * y1 * y2 - 0.3 * y2 + 1.0;
        f.fill(|y1, y2| [C64::new(g(y1, y2), 0.0); 3]);
        let v = f.interpolate(0.33, -1.27);
        assert!((v[0].re - g(0.33, -1.27)).abs() < 1e-12);
    }
}
