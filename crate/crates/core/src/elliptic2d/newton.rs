//! Newton iteration on the second-order central-difference discretisation,
//! reduced by the reflection parities the initial field carries.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{potential_on_grid, GridField2D};
use crate::linalg::{Csr, Factor};
use crate::potential::PeriodicPotential;
use crate::{Error, Result};

/// Real unknowns allowed in one linear system (~5 GB of fill at the limit).
pub const DEFAULT_CELL_BUDGET: usize = 640_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisSymmetry {
    Even,
    Odd,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub cell_budget: usize,
    /// Reflection parities in `x1`, `x2`; detected from the data when absent.
    pub symmetry: Option<(AxisSymmetry, AxisSymmetry)>,
}

impl Default for EllipticOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 30, cell_budget: DEFAULT_CELL_BUDGET, symmetry: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipticReport {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    pub unknowns: usize,
    pub complex: bool,
    pub symmetry: (AxisSymmetry, AxisSymmetry),
}

/// One axis of the reduced grid: which nodes carry unknowns, the
/// unweighted 1D stencil in unknown indices, and the row weights that make
/// the reduced operator symmetric.
struct Axis {
    sym: AxisSymmetry,
    nodes: Vec<usize>,
    weight: Vec<f64>,
    diag: f64,
    off: Vec<Vec<(usize, f64)>>,
}

impl Axis {
    fn new(sym: AxisSymmetry, n: usize, h: f64) -> Self {
        let c = n / 2;
        let s = 1.0 / (h * h);
        let nodes: Vec<usize> = match sym {
            AxisSymmetry::Free => (1..n - 1).collect(),
            AxisSymmetry::Even => (c..n - 1).collect(),
            AxisSymmetry::Odd => (c + 1..n - 1).collect(),
        };
        let m = nodes.len();
        let mut weight = vec![1.0; m];
        let mut off = vec![Vec::new(); m];
        for k in 0..m {
            if k > 0 {
                off[k].push((k - 1, s));
            }
            if k + 1 < m {
                // the reflected neighbour of the centre node doubles the coupling
                let dbl = sym == AxisSymmetry::Even && k == 0;
                off[k].push((k + 1, if dbl { 2.0 * s } else { s }));
            }
        }
        if sym == AxisSymmetry::Even {
            weight[0] = 0.5;
        }
        Self { sym, nodes, weight, diag: -2.0 * s, off }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Unknown index and sign for full-grid node `i`.
    fn lookup(&self, i: usize, n: usize) -> Option<(usize, f64)> {
        let c = n / 2;
        if i == 0 || i >= n - 1 {
            return None;
        }
        match self.sym {
            AxisSymmetry::Free => Some((i - 1, 1.0)),
            AxisSymmetry::Even => Some((i.abs_diff(c), 1.0)),
            AxisSymmetry::Odd => {
                if i == c {
                    None
                } else {
                    Some((i.abs_diff(c) - 1, if i > c { 1.0 } else { -1.0 }))
                }
            }
        }
    }
}

fn detect_axis(g: &GridField2D, axis: usize) -> AxisSymmetry {
    let n = g.n;
    let m = g.max_modulus();
    if m == 0.0 {
        return AxisSymmetry::Even;
    }
    let (mut even, mut odd) = (0.0f64, 0.0f64);
    for i1 in 0..n {
        for i2 in 0..n {
            let u = g.at(i1, i2);
            let r = if axis == 0 { g.at(n - 1 - i1, i2) } else { g.at(i1, n - 1 - i2) };
            even = even.max((u - r).norm());
            odd = odd.max((u + r).norm());
        }
    }
    if even <= 1e-8 * m {
        AxisSymmetry::Even
    } else if odd <= 1e-8 * m {
        AxisSymmetry::Odd
    } else {
        AxisSymmetry::Free
    }
}

/// `Lap phi + omega phi - V phi - sigma |phi|^2 phi` at every node, zero on
/// the boundary.
pub fn elliptic_residual(g: &GridField2D, p: &PeriodicPotential) -> Vec<C64> {
    let n = g.n;
    let v = potential_on_grid(p, g.eta, g);
    let s = 1.0 / (g.dx * g.dx);
    let mut r = vec![C64::new(0.0, 0.0); n * n];
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            let q = i1 * n + i2;
            let u = g.values[q];
            let lap = (g.values[q - n] + g.values[q + n] + g.values[q - 1] + g.values[q + 1] - 4.0 * u) * s;
            r[q] = lap + (g.omega - v[q]) * u - g.sigma * u.norm_sqr() * u;
        }
    }
    r
}

struct Reduced<'a> {
    a1: Axis,
    a2: Axis,
    v: Vec<f64>,
    omega: f64,
    sigma: f64,
    g: &'a GridField2D,
}

impl Reduced<'_> {
    fn size(&self) -> usize {
        self.a1.len() * self.a2.len()
    }

    fn gather(&self, g: &GridField2D) -> Vec<C64> {
        let n2 = self.a2.len();
        let mut u = vec![C64::new(0.0, 0.0); self.size()];
        for (k1, &i1) in self.a1.nodes.iter().enumerate() {
            for (k2, &i2) in self.a2.nodes.iter().enumerate() {
                u[k1 * n2 + k2] = g.at(i1, i2);
            }
        }
        u
    }

    fn scatter(&self, u: &[C64]) -> GridField2D {
        let mut g = self.g.clone();
        let n = g.n;
        let n2 = self.a2.len();
        for i1 in 0..n {
            for i2 in 0..n {
                g.values[i1 * n + i2] = match (self.a1.lookup(i1, n), self.a2.lookup(i2, n)) {
                    (Some((k1, s1)), Some((k2, s2))) => u[k1 * n2 + k2] * (s1 * s2),
                    _ => C64::new(0.0, 0.0),
                };
            }
        }
        g
    }

    /// Unweighted residual on the unknowns.
    fn residual(&self, u: &[C64]) -> Vec<C64> {
        let n2 = self.a2.len();
        let mut r = vec![C64::new(0.0, 0.0); u.len()];
        for k1 in 0..self.a1.len() {
            let i1 = self.a1.nodes[k1];
            for k2 in 0..n2 {
                let q = k1 * n2 + k2;
                let mut lap = (self.a1.diag + self.a2.diag) * u[q];
                for &(j, c) in &self.a1.off[k1] {
                    lap += c * u[j * n2 + k2];
                }
                for &(j, c) in &self.a2.off[k2] {
                    lap += c * u[k1 * n2 + j];
                }
                let vq = self.v[i1 * self.g.n + self.a2.nodes[k2]];
                r[q] = lap + (self.omega - vq) * u[q] - self.sigma * u[q].norm_sqr() * u[q];
            }
        }
        r
    }

    fn weight(&self, q: usize) -> f64 {
        let n2 = self.a2.len();
        self.a1.weight[q / n2] * self.a2.weight[q % n2]
    }

    /// Weighted (symmetric) Jacobian; complex unknowns are interleaved
    /// `(re, im)`.
    fn jacobian(&self, u: &[C64], complex: bool) -> Csr {
        let n2 = self.a2.len();
        let nu = u.len();
        let parts = if complex { 2 } else { 1 };
        let mut t = Vec::with_capacity(nu * parts * (5 + parts));
        for k1 in 0..self.a1.len() {
            let i1 = self.a1.nodes[k1];
            for k2 in 0..n2 {
                let q = k1 * n2 + k2;
                let w = self.weight(q);
                let lin = self.a1.diag + self.a2.diag + self.omega - self.v[i1 * self.g.n + self.a2.nodes[k2]];
                let (a, b) = (u[q].re, u[q].im);
                let s = self.sigma;
                if complex {
                    let (rr, ri, ii) = (-s * (3.0 * a * a + b * b), -s * 2.0 * a * b, -s * (a * a + 3.0 * b * b));
                    t.push((2 * q, 2 * q, w * (lin + rr)));
                    t.push((2 * q, 2 * q + 1, w * ri));
                    t.push((2 * q + 1, 2 * q, w * ri));
                    t.push((2 * q + 1, 2 * q + 1, w * (lin + ii)));
                } else {
                    t.push((q, q, w * (lin - 3.0 * s * a * a)));
                }
                let mut push = |p: usize, c: f64| {
                    for part in 0..parts {
                        t.push((parts * q + part, parts * p + part, w * c));
                    }
                };
                for &(j, c) in &self.a1.off[k1] {
                    push(j * n2 + k2, c);
                }
                for &(j, c) in &self.a2.off[k2] {
                    push(k1 * n2 + j, c);
                }
            }
        }
        Csr::from_triplets(nu * parts, t)
    }
}

fn max_abs(r: &[C64]) -> f64 {
    r.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn plan_rotated(g: &GridField2D, opts: &EllipticOptions) -> ((AxisSymmetry, AxisSymmetry), bool, usize) {
    let m = g.max_modulus();
    let complex = g.values.iter().any(|z| z.im.abs() > 1e-12 * m);
    let symmetry = opts.symmetry.unwrap_or_else(|| (detect_axis(g, 0), detect_axis(g, 1)));
    let len = |s: AxisSymmetry| Axis::new(s, g.n, g.dx).len();
    (symmetry, complex, len(symmetry.0) * len(symmetry.1) * if complex { 2 } else { 1 })
}

/// Real unknowns the Newton solve of `g` would use.
pub fn planned_unknowns(g: &GridField2D, opts: &EllipticOptions) -> usize {
    let n = g.n;
    let peak = (0..n * n).max_by(|&a, &b| g.values[a].norm().total_cmp(&g.values[b].norm())).unwrap_or(0);
    plan_rotated(&g.rotated(-g.values[peak].arg()), opts).2
}

/// Newton iteration for the field's own `omega`, `eta`, `sigma`.
///
/// Fields that are real up to a global phase are solved in the real
/// subspace; otherwise the imaginary part at the peak is held fixed, which
/// removes the gauge direction.
pub fn solve_elliptic_newton(
    initial: &GridField2D,
    p: &PeriodicPotential,
    opts: EllipticOptions,
) -> Result<(GridField2D, EllipticReport)> {
    let n = initial.n;
    if n < 5 || initial.values.len() != n * n {
        return Err(Error::InvalidInput(format!("grid of {} values for n = {n}", initial.values.len())));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {}", opts.tol)));
    }
    // turn the peak real; undone at the end
    let peak = (0..n * n).max_by(|&a, &b| initial.values[a].norm().total_cmp(&initial.values[b].norm())).unwrap();
    let theta = initial.values[peak].arg();
    let g0 = initial.rotated(-theta);
    let (symmetry, complex, unknowns) = plan_rotated(&g0, &opts);
    let red = Reduced {
        a1: Axis::new(symmetry.0, n, g0.dx),
        a2: Axis::new(symmetry.1, n, g0.dx),
        v: potential_on_grid(p, g0.eta, &g0),
        omega: g0.omega,
        sigma: g0.sigma,
        g: &g0,
    };
    if unknowns > opts.cell_budget {
        return Err(Error::Budget(format!(
            "{unknowns} real unknowns ({}x{} nodes, reduced {}x{}{}) exceed the budget of {}",
            n,
            n,
            red.a1.len(),
            red.a2.len(),
            if complex { ", complex" } else { "" },
            opts.cell_budget
        )));
    }
    let mut u = red.gather(&g0);
    if !complex {
        u.iter_mut().for_each(|z| z.im = 0.0);
    }
    // index of the peak among the unknowns, for the phase condition
    let pin = {
        let (i1, i2) = (peak / n, peak % n);
        match (red.a1.lookup(i1, n), red.a2.lookup(i2, n)) {
            (Some((k1, _)), Some((k2, _))) => k1 * red.a2.len() + k2,
            _ => 0,
        }
    };
    let keep: Vec<usize> = (0..2 * red.size()).filter(|&j| j != 2 * pin + 1).collect();
    let mut r = red.residual(&u);
    let mut res = max_abs(&r);
    let mut history = vec![res];
    let mut it = 0;
    while res > opts.tol {
        if it == opts.max_iter || !res.is_finite() {
            return Err(Error::Divergence { history });
        }
        it += 1;
        let jac = red.jacobian(&u, complex);
        let du: Vec<C64> = if complex {
            let a = jac.submatrix(&keep);
            let mut b: Vec<f64> =
                keep.iter().map(|&j| -red.weight(j / 2) * if j % 2 == 0 { r[j / 2].re } else { r[j / 2].im }).collect();
            Factor::new(&a)?.solve(&mut b)?;
            let mut full = vec![0.0; 2 * red.size()];
            keep.iter().zip(&b).for_each(|(&j, &x)| full[j] = x);
            full.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
        } else {
            let mut b: Vec<f64> = r.iter().enumerate().map(|(q, z)| -red.weight(q) * z.re).collect();
            Factor::new(&jac)?.solve(&mut b)?;
            b.into_iter().map(|x| C64::new(x, 0.0)).collect()
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..7 {
            let trial: Vec<C64> = u.iter().zip(&du).map(|(a, d)| a + step * d).collect();
            let rt = red.residual(&trial);
            let rn = max_abs(&rt);
            if rn.is_finite() && (rn < res || rn <= opts.tol) {
                u = trial;
                r = rt;
                res = rn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(res);
        if !accepted {
            return Err(Error::Divergence { history });
        }
    }
    let out = red.scatter(&u).rotated(theta);
    let report = EllipticReport { iterations: it, residual: res, history, unknowns, complex, symmetry };
    Ok((out, report))
}
