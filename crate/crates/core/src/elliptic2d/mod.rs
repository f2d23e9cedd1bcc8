//! The full stationary problem `Lap phi + omega phi - V phi - sigma |phi|^2 phi = 0`
//! with `V = eta (W(x1) + W(x2))`, its leading-order reconstruction from the
//! envelopes, convergence in `eps`, and the time-dependent equation.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bloch1d::EdgeEigenfunctions;
use crate::cme2d::{ClassTag, CmeField};
use crate::potential::PeriodicPotential;
use crate::{io, Error, Result};

mod gp;
mod newton;
mod study;

pub use gp::{integrate_gp_time, track_ansatz, GpDiagnostics, GpStepper, TrackingOptions, TrackingReport};
pub use newton::{
    elliptic_residual, planned_unknowns, solve_elliptic_newton, AxisSymmetry, EllipticOptions, EllipticReport, DEFAULT_CELL_BUDGET,
};
pub use study::{convergence_study, support_radius, ConvergenceOptions, ConvergencePoint, ConvergenceReport};

/// Complex field on the nodes `x_i = -X + i dx`, `i = 0..n`, of `[-X, X]^2`
/// with `X` a whole number of periods; row-major, `x1` along rows.
#[derive(Debug, Clone)]
pub struct GridField2D {
    pub x_half: f64,
    pub dx: f64,
    pub n: usize,
    pub values: Vec<C64>,
    pub epsilon: f64,
    pub omega: f64,
    pub eta: f64,
    pub sigma: f64,
    pub class_tag: ClassTag,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridHeader {
    #[serde(rename = "X")]
    pub x_half: f64,
    pub dx: f64,
    pub n: usize,
    pub epsilon: f64,
    pub omega: f64,
    pub eta: f64,
    pub sigma: f64,
    pub class_tag: ClassTag,
    pub layout: String,
    pub scalar: String,
}

impl GridField2D {
    /// `periods` periods of `2π` on each side of the origin, `points` nodes
    /// per period.
    pub fn zeros(periods: usize, points: usize) -> Result<Self> {
        if periods == 0 || points < 4 {
            return Err(Error::InvalidInput(format!("grid with {periods} periods of {points} points")));
        }
        let n = 2 * periods * points + 1;
        Ok(Self {
            x_half: periods as f64 * 2.0 * PI,
            dx: 2.0 * PI / points as f64,
            n,
            values: vec![C64::new(0.0, 0.0); n * n],
            epsilon: 0.0,
            omega: 0.0,
            eta: 0.0,
            sigma: 1.0,
            class_tag: ClassTag::General,
        })
    }

    pub fn periods(&self) -> usize {
        (self.x_half / (2.0 * PI)).round() as usize
    }

    pub fn points_per_period(&self) -> usize {
        (2.0 * PI / self.dx).round() as usize
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.x_half + i as f64 * self.dx
    }

    pub fn center(&self) -> usize {
        self.n / 2
    }

    pub fn at(&self, i1: usize, i2: usize) -> C64 {
        self.values[i1 * self.n + i2]
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Grid max norm of the difference; grids must match.
    pub fn max_distance(&self, other: &Self) -> Result<f64> {
        if self.n != other.n || (self.dx - other.dx).abs() > 1e-14 {
            return Err(Error::InvalidInput("grids differ".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub fn mass(&self) -> f64 {
        self.dx * self.dx * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn is_real(&self) -> bool {
        let m = self.max_modulus();
        self.values.iter().all(|z| z.im.abs() <= 1e-12 * m)
    }

    /// Largest modulus on the first interior ring over the global maximum.
    pub fn boundary_ratio(&self) -> f64 {
        let (n, m) = (self.n, self.max_modulus());
        if m == 0.0 {
            return 0.0;
        }
        let mut b = 0.0f64;
        for k in 1..n - 1 {
            for (i1, i2) in [(1, k), (n - 2, k), (k, 1), (k, n - 2)] {
                b = b.max(self.at(i1, i2).norm());
            }
        }
        b / m
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let e = C64::from_polar(1.0, theta);
        let mut f = self.clone();
        f.values.iter_mut().for_each(|z| *z *= e);
        f
    }

    /// Relative defect of the symmetry relations carried by the class, or
    /// `None` when the class has none that this check knows.
    pub fn symmetry_defect(&self) -> Option<f64> {
        let n = self.n;
        let m = self.max_modulus();
        if m == 0.0 {
            return Some(0.0);
        }
        let mir = |i: usize| n - 1 - i;
        let mut worst = 0.0f64;
        let mut check = |rel: &dyn Fn(usize, usize) -> C64| {
            for i1 in 0..n {
                for i2 in 0..n {
                    worst = worst.max(rel(i1, i2).norm());
                }
            }
        };
        let u = |i1: usize, i2: usize| self.at(i1, i2);
        match self.class_tag {
            ClassTag::AM0 => {
                check(&|a, b| C64::new(0.0, u(a, b).im));
                check(&|a, b| u(a, b) - u(mir(a), b));
                check(&|a, b| u(a, b) - u(a, mir(b)));
            }
            ClassTag::BiM0 => {
                check(&|a, b| C64::new(0.0, u(a, b).im));
                check(&|a, b| u(a, b) - u(mir(a), b));
                check(&|a, b| u(a, b) + u(a, mir(b)));
            }
            ClassTag::AM1 => {
                check(&|a, b| u(mir(a), b) + u(a, b).conj());
                check(&|a, b| u(a, mir(b)) - u(a, b).conj());
            }
            ClassTag::BiM1 => {
                check(&|a, b| u(mir(a), b) + u(a, b).conj());
                check(&|a, b| u(a, mir(b)) + u(a, b).conj());
            }
            ClassTag::Bii => {
                let (mut plus, mut minus) = (0.0f64, 0.0f64);
                for a in 0..n {
                    for b in 0..n {
                        plus = plus.max((u(b, a) - u(a, b)).norm());
                        minus = minus.max((u(b, a) + u(a, b)).norm());
                    }
                }
                check(&|a, b| C64::new(0.0, u(a, b).im));
                worst = worst.max(plus.min(minus));
            }
            _ => return None,
        }
        Some(worst / m)
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            x_half: self.x_half,
            dx: self.dx,
            n: self.n,
            epsilon: self.epsilon,
            omega: self.omega,
            eta: self.eta,
            sigma: self.sigma,
            class_tag: self.class_tag,
            layout: "row-major".into(),
            scalar: "complex128-interleaved".into(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload: Vec<f64> = self.values.iter().flat_map(|z| [z.re, z.im]).collect();
        io::encode_binary(&self.header(), &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, p): (GridHeader, Vec<f64>) = io::decode_binary(bytes)?;
        if p.len() != 2 * h.n * h.n || h.n < 3 {
            return Err(Error::Format(format!("grid payload has {} values for n = {}", p.len(), h.n)));
        }
        Ok(Self {
            x_half: h.x_half,
            dx: h.dx,
            n: h.n,
            values: p.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect(),
            epsilon: h.epsilon,
            omega: h.omega,
            eta: h.eta,
            sigma: h.sigma,
            class_tag: h.class_tag,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::atomic_write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// `V = eta (W(x1) + W(x2))` on the grid nodes, row-major.
pub fn potential_on_grid(p: &PeriodicPotential, eta: f64, g: &GridField2D) -> Vec<f64> {
    let w: Vec<f64> = (0..g.n).map(|i| p.eval(g.x(i))).collect();
    let mut v = Vec::with_capacity(g.n * g.n);
    for i1 in 0..g.n {
        for i2 in 0..g.n {
            v.push(eta * (w[i1] + w[i2]));
        }
    }
    v
}

/// `sqrt(eps) [A1 psi1(x1) phi2(x2) + A2 phi2(x1) psi1(x2) + A3 phi1(x1) phi1(x2)]`
/// with `A_j` taken at `y = sqrt(eps) x`, on `periods` periods each side.
/// The grid spacing is that of `efs`, so the Bloch functions are read at
/// their own nodes.
pub fn reconstruct_leading_order(
    field: &CmeField,
    efs: &EdgeEigenfunctions,
    eps: f64,
    periods: usize,
) -> Result<GridField2D> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps = {eps}")));
    }
    if efs.count() < 2 {
        return Err(Error::InvalidInput("need psi_1, phi_1 and phi_2".into()));
    }
    let mut g = GridField2D::zeros(periods, efs.grid_n)?;
    let se = eps.sqrt();
    if se * g.x_half > field.d * (1.0 + 1e-12) {
        return Err(Error::Coverage(format!(
            "x-box {:.3} maps to y = {:.3}, beyond the envelope box D = {}",
            g.x_half,
            se * g.x_half,
            field.d
        )));
    }
    g.epsilon = eps;
    g.omega = field.coeffs.omega0 + eps * field.omega;
    g.eta = field.coeffs.eta0 + eps;
    g.sigma = field.sigma;
    g.class_tag = field.class_tag;
    let n = g.n;
    let off = (periods * efs.grid_n) as i64;
    let psi1: Vec<f64> = (0..n).map(|i| efs.psi_node(1, i as i64 - off)).collect();
    let phi1: Vec<f64> = (0..n).map(|i| efs.phi_node(1, i as i64 - off)).collect();
    let phi2: Vec<f64> = (0..n).map(|i| efs.phi_node(2, i as i64 - off)).collect();
    let comps = field.active();
    if comps.is_empty() {
        return Ok(g);
    }
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            let a = field.interpolate(se * g.x(i1), se * g.x(i2));
            let v = a[0] * (psi1[i1] * phi2[i2]) + a[1] * (phi2[i1] * psi1[i2]) + a[2] * (phi1[i1] * phi1[i2]);
            g.values[i1 * n + i2] = se * v;
        }
    }
    Ok(g)
}
