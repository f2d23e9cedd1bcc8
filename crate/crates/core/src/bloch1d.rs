//! Quasi-periodic Sturm–Liouville problem `-u'' + eta W u = rho u`,
//! `u(x + 2π) = e^{2πik} u(x)`, discretised by second-order central
//! differences on `grid_n` nodes per period.

use std::f64::consts::PI;

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::linalg::{sym_eigen, sym_eigenvalues};
use crate::{Error, PeriodicPotential, Result, C64};

pub const DEFAULT_GRID_N: usize = 512;
/// Step in k for band curvatures (Richardson with k-steps `h`, `h/2`).
pub const CURVATURE_DK: f64 = 0.01;
/// Eigenvalues closer than this are treated as one degenerate cluster.
const CLUSTER_TOL: f64 = 1e-8;

/// Finite-difference Bloch operator for one potential on a fixed grid.
#[derive(Debug, Clone)]
pub struct BlochOperator {
    pub grid_n: usize,
    pub h: f64,
    w: Vec<f64>,
}

/// Which boundary condition a real edge problem carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Periodic,
    Antiperiodic,
}

impl Edge {
    fn k(self) -> f64 {
        match self {
            Edge::Periodic => 0.0,
            Edge::Antiperiodic => 0.5,
        }
    }
}

impl BlochOperator {
    pub fn new(p: &PeriodicPotential, grid_n: usize) -> Result<Self> {
        if grid_n < 32 {
            return Err(Error::InvalidInput(format!("grid_n = {grid_n} < 32")));
        }
        Ok(Self { grid_n, h: 2.0 * PI / grid_n as f64, w: p.sample(grid_n)? })
    }

    pub fn potential_samples(&self) -> &[f64] {
        &self.w
    }

    fn check(&self, k: f64, n_eigs: usize) -> Result<()> {
        if !(-0.5 - 1e-12..=0.5 + 1e-12).contains(&k) {
            return Err(Error::InvalidInput(format!("k = {k} outside [-1/2, 1/2]")));
        }
        if n_eigs == 0 || n_eigs > self.grid_n / 4 {
            return Err(Error::InvalidInput(format!(
                "n_eigs = {n_eigs} must lie in 1..={}",
                self.grid_n / 4
            )));
        }
        Ok(())
    }

    fn real_matrix(&self, eta: f64, edge: Edge) -> Mat<f64> {
        let n = self.grid_n;
        let ih2 = 1.0 / (self.h * self.h);
        let corner = match edge {
            Edge::Periodic => -ih2,
            Edge::Antiperiodic => ih2,
        };
        let mut m = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 2.0 * ih2 + eta * self.w[i];
            if i + 1 < n {
                m[(i, i + 1)] = -ih2;
                m[(i + 1, i)] = -ih2;
            }
        }
        m[(0, n - 1)] += corner;
        m[(n - 1, 0)] += corner;
        m
    }

    fn complex_matrix(&self, eta: f64, k: f64) -> Mat<c64> {
        let n = self.grid_n;
        let ih2 = 1.0 / (self.h * self.h);
        let ph = c64::from_polar(1.0, 2.0 * PI * k);
        let mut m = Mat::<c64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c64::new(2.0 * ih2 + eta * self.w[i], 0.0);
            if i + 1 < n {
                m[(i, i + 1)] = c64::new(-ih2, 0.0);
                m[(i + 1, i)] = c64::new(-ih2, 0.0);
            }
        }
        m[(n - 1, 0)] = -ph * ih2;
        m[(0, n - 1)] = -ph.conj() * ih2;
        m
    }

    fn edge_of(k: f64) -> Option<Edge> {
        if k.abs() < 1e-14 {
            Some(Edge::Periodic)
        } else if (k.abs() - 0.5).abs() < 1e-14 {
            Some(Edge::Antiperiodic)
        } else {
            None
        }
    }

    /// The lowest `n_eigs` eigenvalues at quasi-momentum `k`.
    pub fn eigenvalues(&self, eta: f64, k: f64, n_eigs: usize) -> Result<Vec<f64>> {
        self.check(k, n_eigs)?;
        let mut v = match Self::edge_of(k) {
            Some(e) => sym_eigenvalues(&self.real_matrix(eta, e))?,
            None => self
                .complex_matrix(eta, k)
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::NumericalFailure {
                    what: format!("Hermitian eigensolve: {e:?}"),
                    residual: f64::NAN,
                })?,
        };
        v.truncate(n_eigs);
        Ok(v)
    }

    /// Eigenpairs at `k`; vectors are normalised on one period
    /// (`h * sum |u|^2 = 1`).
    pub fn solve(&self, eta: f64, k: f64, n_eigs: usize) -> Result<SturmLiouville> {
        self.check(k, n_eigs)?;
        let n = self.grid_n;
        let scale = 1.0 / self.h.sqrt();
        if let Some(e) = Self::edge_of(k) {
            let (vals, vecs) = self.edge_pairs(eta, e, n_eigs)?;
            let vectors = vecs
                .into_iter()
                .map(|v| v.into_iter().map(|x| C64::new(x, 0.0)).collect())
                .collect();
            return Ok(SturmLiouville { k, values: vals, vectors });
        }
        let m = self.complex_matrix(eta, k);
        let e = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::NumericalFailure {
            what: format!("Hermitian eigensolve: {e:?}"),
            residual: f64::NAN,
        })?;
        let (s, u) = (e.S(), e.U());
        let values: Vec<f64> = (0..n_eigs).map(|i| s[i].re).collect();
        let vectors = (0..n_eigs)
            .map(|c| (0..n).map(|i| u[(i, c)] * scale).collect())
            .collect();
        let res = residual_complex(&m, &values, u);
        if res > 1e-6 * (1.0 + values.last().copied().unwrap_or(0.0).abs()) {
            return Err(Error::NumericalFailure { what: "Bloch eigensolve".into(), residual: res });
        }
        Ok(SturmLiouville { k, values, vectors })
    }

    /// Real eigenpairs at an edge, parity-resolved within degenerate clusters,
    /// normalised on one period.
    pub fn edge_pairs(&self, eta: f64, edge: Edge, n_eigs: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.check(edge.k(), n_eigs)?;
        let n = self.grid_n;
        let (vals, u) = sym_eigen(&self.real_matrix(eta, edge))?;
        let take = (n_eigs + 1).min(n);
        let vals: Vec<f64> = vals[..take].to_vec();
        let mut vecs: Vec<Vec<f64>> = (0..take)
            .map(|c| (0..n).map(|i| u[(i, c)] / self.h.sqrt()).collect())
            .collect();
        let mut i = 0;
        while i < take {
            let mut j = i + 1;
            while j < take && (vals[j] - vals[i]).abs() <= CLUSTER_TOL * (1.0 + vals[i].abs()) {
                j += 1;
            }
            if j - i > 1 {
                self.resolve_parity(edge, i, &mut vecs[i..j])?;
            }
            i = j;
        }
        vecs.truncate(n_eigs);
        Ok((vals[..n_eigs].to_vec(), vecs))
    }

    /// Rotate a degenerate cluster onto reflection eigenvectors; the function
    /// at 0-based position `i` is made even for even `i` and odd otherwise.
    fn resolve_parity(&self, edge: Edge, start: usize, cluster: &mut [Vec<f64>]) -> Result<()> {
        let m = cluster.len();
        let refl: Vec<Vec<f64>> = cluster.iter().map(|v| reflect(v, edge)).collect();
        let mut r = Mat::<f64>::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                r[(a, b)] = self.h * dot(&cluster[a], &refl[b]);
            }
        }
        let r = (&r + r.transpose()) * 0.5;
        let (ev, y) = sym_eigen(&r)?;
        let (mut even, mut odd) = (Vec::new(), Vec::new());
        for c in 0..m {
            let mut v = vec![0.0; self.grid_n];
            for a in 0..m {
                v.iter_mut().zip(&cluster[a]).for_each(|(s, t)| *s += y[(a, c)] * t);
            }
            if ev[c] > 0.0 {
                even.push(v);
            } else {
                odd.push(v);
            }
        }
        for (p, dst) in cluster.iter_mut().enumerate() {
            let want_even = (start + p) % 2 == 0;
            let src = match (want_even, even.is_empty(), odd.is_empty()) {
                (true, false, _) | (false, _, true) => even.remove(0),
                _ => odd.remove(0),
            };
            *dst = src;
        }
        Ok(())
    }

    /// `(lambda_1..n, mu_1..n)` at coupling `eta`.
    pub fn edge_values(&self, eta: f64, n_eigs: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.eigenvalues(eta, 0.0, n_eigs)?, self.eigenvalues(eta, 0.5, n_eigs)?))
    }

    /// `rho_n''(k0)` by one-sided differences (bands are even about `k0`)
    /// with Richardson extrapolation over steps `dk`, `dk/2`.
    pub fn curvature(&self, eta: f64, n: usize, k0: f64, dk: f64) -> Result<f64> {
        let count = (n + 1).max(2);
        let at0 = self.eigenvalues(eta, k0, count)?;
        let gap_lo = if n >= 2 { at0[n - 1] - at0[n - 2] } else { f64::INFINITY };
        let gap_hi = at0[n] - at0[n - 1];
        if gap_lo.min(gap_hi) <= 1e-8 {
            return Err(Error::Degenerate(format!("band {n} touches a neighbour at k = {k0}")));
        }
        let dir = if k0 > 0.25 { -1.0 } else { 1.0 };
        let d = |s: f64| -> Result<f64> {
            let r = self.eigenvalues(eta, k0 + dir * s, n)?[n - 1];
            Ok(2.0 * (r - at0[n - 1]) / (s * s))
        };
        let (d1, d2) = (d(dk)?, d(0.5 * dk)?);
        Ok((4.0 * d2 - d1) / 3.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn reflect(v: &[f64], edge: Edge) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|j| {
            if j == 0 {
                v[0]
            } else {
                match edge {
                    Edge::Periodic => v[n - j],
                    Edge::Antiperiodic => -v[n - j],
                }
            }
        })
        .collect()
}

fn residual_complex(m: &Mat<c64>, vals: &[f64], u: faer::MatRef<'_, c64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for (c, &lam) in vals.iter().enumerate() {
        let col = u.col(c);
        let mv = m * col;
        let mut r = 0.0;
        for i in 0..n {
            r += (mv[i] - col[i] * lam).norm_sqr();
        }
        worst = worst.max(r.sqrt());
    }
    worst
}

/// Eigenpairs of one quasi-periodic problem.
#[derive(Debug, Clone)]
pub struct SturmLiouville {
    pub k: f64,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
}

/// Eigenvalues and eigenfunctions of `-u'' + eta W u = rho u` with the
/// quasi-periodic phase `e^{2πik}`.
pub fn solve_sturm_liouville(
    p: &PeriodicPotential,
    eta: f64,
    k: f64,
    n_eigs: usize,
    grid_n: usize,
) -> Result<SturmLiouville> {
    BlochOperator::new(p, grid_n)?.solve(eta, k, n_eigs)
}

/// Periodic (`lambda_n`) and antiperiodic (`mu_n`) edge eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeValues {
    pub eta: f64,
    pub grid_n: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub warning: Option<String>,
}

pub fn edge_eigenvalues(p: &PeriodicPotential, eta: f64, n_eigs: usize, grid_n: usize) -> Result<EdgeValues> {
    let op = BlochOperator::new(p, grid_n)?;
    let (lambda, mu) = op.edge_values(eta, n_eigs)?;
    let tol = 1e-9 * (1.0 + lambda.last().copied().unwrap_or(0.0).abs());
    let warning = check_interlacing(&lambda, &mu, tol).err();
    Ok(EdgeValues { eta, grid_n, lambda, mu, warning })
}

/// Edge eigenvalues extrapolated from `grid_n` and `2 grid_n` (second order).
pub fn edge_eigenvalues_extrapolated(
    p: &PeriodicPotential,
    eta: f64,
    n_eigs: usize,
    grid_n: usize,
) -> Result<EdgeValues> {
    let a = edge_eigenvalues(p, eta, n_eigs, grid_n)?;
    let b = edge_eigenvalues(p, eta, n_eigs, 2 * grid_n)?;
    let rich = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(c, f)| (4.0 * f - c) / 3.0).collect::<Vec<_>>();
    Ok(EdgeValues {
        eta,
        grid_n,
        lambda: rich(&a.lambda, &b.lambda),
        mu: rich(&a.mu, &b.mu),
        warning: a.warning.or(b.warning),
    })
}

/// `lambda_1 < mu_1 <= mu_2 < lambda_2 <= lambda_3 < mu_3 <= mu_4 < lambda_4 ...`
/// checked up to `tol` (strictness is not enforced beyond the first gap).
pub fn check_interlacing(lambda: &[f64], mu: &[f64], tol: f64) -> std::result::Result<(), String> {
    let n = lambda.len().min(mu.len());
    let mut seq: Vec<(String, f64)> = Vec::with_capacity(2 * n);
    // merged order: l1, m1, m2, l2, l3, m3, m4, l4, l5, ...
    seq.push(("lambda_1".into(), lambda[0]));
    let (mut li, mut mi) = (1usize, 0usize);
    while mi < n {
        for _ in 0..2.min(n - mi) {
            seq.push((format!("mu_{}", mi + 1), mu[mi]));
            mi += 1;
        }
        for _ in 0..2.min(n - li) {
            seq.push((format!("lambda_{}", li + 1), lambda[li]));
            li += 1;
        }
    }
    for w in seq.windows(2) {
        if w[1].1 < w[0].1 - tol {
            return Err(format!("{} = {} exceeds {} = {}", w[0].0, w[0].1, w[1].0, w[1].1));
        }
    }
    Ok(())
}

/// Bands `rho_n(k)` on a k-grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandData {
    pub eta: f64,
    pub grid_n: usize,
    pub n_eigs: usize,
    pub k_grid: Vec<f64>,
    /// `bands[j][n]` is `rho_{n+1}(k_j)`.
    pub bands: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub extrapolated: bool,
}

impl BandData {
    pub fn band(&self, n: usize) -> Vec<f64> {
        self.bands.iter().map(|r| r[n - 1]).collect()
    }
}

/// Uniform grid of `count` points over `[lo, hi]`.
pub fn k_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64).collect()
}

pub fn band_structure(
    p: &PeriodicPotential,
    eta: f64,
    n_eigs: usize,
    k_grid: &[f64],
    grid_n: usize,
    extrapolate: bool,
) -> Result<BandData> {
    let coarse = BlochOperator::new(p, grid_n)?;
    let fine = if extrapolate { Some(BlochOperator::new(p, 2 * grid_n)?) } else { None };
    let eval = |k: f64| -> Result<Vec<f64>> {
        let a = coarse.eigenvalues(eta, k, n_eigs)?;
        match &fine {
            Some(f) => {
                let b = f.eigenvalues(eta, k, n_eigs)?;
                Ok(a.iter().zip(&b).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
            }
            None => Ok(a),
        }
    };
    let bands = k_grid.iter().map(|&k| eval(k)).collect::<Result<Vec<_>>>()?;
    Ok(BandData {
        eta,
        grid_n,
        n_eigs,
        k_grid: k_grid.to_vec(),
        bands,
        lambda: eval(0.0)?,
        mu: eval(0.5)?,
        extrapolated: extrapolate,
    })
}

/// `rho_n` over a k-grid.
pub fn band_function(p: &PeriodicPotential, eta: f64, n: usize, k_grid: &[f64], grid_n: usize) -> Result<Vec<f64>> {
    let op = BlochOperator::new(p, grid_n)?;
    k_grid.iter().map(|&k| Ok(op.eigenvalues(eta, k, n.max(1))?[n - 1])).collect()
}

/// `rho_n''(k0)` for `k0` in `{0, 1/2}`.
pub fn band_curvature(p: &PeriodicPotential, eta: f64, n: usize, k0: f64, grid_n: usize) -> Result<f64> {
    BlochOperator::new(p, grid_n)?.curvature(eta, n, k0, CURVATURE_DK)
}

/// Periodic and antiperiodic edge eigenfunctions on `[-2π, 2π)`, normalised
/// so that `∫_{-2π}^{2π} v^2 = 1`, sign-fixed by `v(0) > 0` for even and
/// `v'(0) > 0` for odd functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeEigenfunctions {
    pub eta: f64,
    pub grid_n: usize,
    pub h: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// One period of each function, nodes `x_j = j h`, `j = 0..grid_n`.
    psi_base: Vec<Vec<f64>>,
    phi_base: Vec<Vec<f64>>,
}

impl EdgeEigenfunctions {
    pub fn count(&self) -> usize {
        self.psi_base.len()
    }

    /// `psi_n` at node `x = j h` (periodic extension), `n >= 1`.
    pub fn psi_node(&self, n: usize, j: i64) -> f64 {
        let m = self.grid_n as i64;
        self.psi_base[n - 1][j.rem_euclid(m) as usize]
    }

    /// `phi_n` at node `x = j h` (antiperiodic extension), `n >= 1`.
    pub fn phi_node(&self, n: usize, j: i64) -> f64 {
        let m = self.grid_n as i64;
        let q = j.div_euclid(m);
        let s = if q % 2 == 0 { 1.0 } else { -1.0 };
        s * self.phi_base[n - 1][j.rem_euclid(m) as usize]
    }

    /// Nodes of `[-2π, 2π)`.
    pub fn x(&self) -> Vec<f64> {
        let m = self.grid_n as i64;
        (-m..m).map(|j| j as f64 * self.h).collect()
    }

    pub fn psi(&self, n: usize) -> Vec<f64> {
        let m = self.grid_n as i64;
        (-m..m).map(|j| self.psi_node(n, j)).collect()
    }

    pub fn phi(&self, n: usize) -> Vec<f64> {
        let m = self.grid_n as i64;
        (-m..m).map(|j| self.phi_node(n, j)).collect()
    }

    /// Periodic trapezoid rule on `[-2π, 2π)`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.h * dot(a, b)
    }

    /// Largest deviation from `±v(-x) = v(x)` over both families.
    pub fn parity_defect(&self) -> f64 {
        let m = self.grid_n as i64;
        let mut worst = 0.0f64;
        for n in 1..=self.count() {
            let s = if n % 2 == 1 { 1.0 } else { -1.0 };
            for j in 0..m {
                worst = worst.max((self.psi_node(n, -j) - s * self.psi_node(n, j)).abs());
                worst = worst.max((self.phi_node(n, -j) - s * self.phi_node(n, j)).abs());
            }
        }
        worst
    }

    /// Sign changes on `(-π, π)`.
    pub fn node_count(v: &[f64], grid_n: usize) -> usize {
        // v is sampled on [-2π, 2π): (-π, π) is indices grid_n/2+1 .. 3grid_n/2
        let lo = grid_n / 2 + 1;
        let hi = 3 * grid_n / 2;
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let s: Vec<f64> = v[lo..hi].iter().copied().filter(|x| x.abs() > 1e-10 * scale).collect();
        s.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
    }
}

pub fn edge_eigenfunctions(p: &PeriodicPotential, eta: f64, count: usize, grid_n: usize) -> Result<EdgeEigenfunctions> {
    let op = BlochOperator::new(p, grid_n)?;
    let (lambda, mut psi) = op.edge_pairs(eta, Edge::Periodic, count)?;
    let (mu, mut phi) = op.edge_pairs(eta, Edge::Antiperiodic, count)?;
    // one-period normalisation -> 4π normalisation
    let f = 1.0 / 2f64.sqrt();
    for (n, v) in psi.iter_mut().chain(phi.iter_mut()).enumerate() {
        let idx = n % count + 1;
        v.iter_mut().for_each(|x| *x *= f);
        let even = idx % 2 == 1;
        let key = if even { v[0] } else { v[1] };
        let key = if key.abs() > 1e-12 {
            key
        } else {
            *v.iter().find(|x| x.abs() > 1e-8).unwrap_or(&1.0)
        };
        if key < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let efs = EdgeEigenfunctions { eta, grid_n, h: op.h, lambda, mu, psi_base: psi, phi_base: phi };
    let defect = efs.parity_defect();
    if defect > 1e-6 {
        return Err(Error::NumericalFailure { what: "edge eigenfunction parity".into(), residual: defect });
    }
    Ok(efs)
}

/// 2D bands of the separable operator along the boundary of the
/// irreducible zone, Γ → X → M → Γ; each is a sum `rho_m(k1) + rho_n(k2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandDiagram2D {
    pub eta: f64,
    pub grid_n: usize,
    /// Arc length along the path.
    pub s: Vec<f64>,
    pub k: Vec<(f64, f64)>,
    /// `bands[j]` holds the lowest 2D band values at `k[j]`, ascending.
    pub bands: Vec<Vec<f64>>,
    pub vertices: Vec<(String, f64)>,
}

pub fn band_diagram_2d(
    p: &PeriodicPotential,
    eta: f64,
    n_bands: usize,
    points_per_leg: usize,
    grid_n: usize,
) -> Result<BandDiagram2D> {
    if n_bands == 0 || points_per_leg < 2 {
        return Err(Error::InvalidInput("need at least one band and two points per leg".into()));
    }
    let op = BlochOperator::new(p, grid_n)?;
    let leg = |a: (f64, f64), b: (f64, f64)| -> Vec<(f64, f64)> {
        (0..points_per_leg)
            .map(|j| {
                let t = j as f64 / (points_per_leg - 1) as f64;
                (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
            })
            .collect()
    };
    let (g, x, m) = ((0.0, 0.0), (0.5, 0.0), (0.5, 0.5));
    let mut k = leg(g, x);
    k.extend(leg(x, m).into_iter().skip(1));
    k.extend(leg(m, g).into_iter().skip(1));
    let mut s = vec![0.0];
    for w in k.windows(2) {
        s.push(s.last().unwrap() + (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1));
    }
    let l = points_per_leg - 1;
    let vertices = vec![("G".to_string(), s[0]), ("X".into(), s[l]), ("M".into(), s[2 * l]), ("G".into(), s[3 * l])];
    let mut bands = Vec::with_capacity(k.len());
    for &(k1, k2) in &k {
        let r1 = op.eigenvalues(eta, k1, n_bands)?;
        let r2 = op.eigenvalues(eta, k2, n_bands)?;
        let mut sums: Vec<f64> = r1.iter().flat_map(|a| r2.iter().map(move |b| a + b)).collect();
        sums.sort_by(f64::total_cmp);
        sums.truncate(n_bands);
        bands.push(sums);
    }
    Ok(BandDiagram2D { eta, grid_n, s, k, bands, vertices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free() -> PeriodicPotential {
        PeriodicPotential::zero()
    }

    #[test]
    fn free_periodic_spectrum() {
        let op = BlochOperator::new(&free(), 256).unwrap();
        let v = op.eigenvalues(0.3, 0.0, 5).unwrap();
        let disc = |m: f64| (4.0 / (op.h * op.h)) * (0.5 * m * op.h).sin().powi(2);
        for (a, m) in v.iter().zip([0.0, 1.0, 1.0, 2.0, 2.0]) {
            assert!((a - disc(m)).abs() < 1e-9, "{a} vs {m}");
            assert!((a - m * m).abs() < m.powi(4) * op.h * op.h / 12.0 + 1e-9);
        }
    }

    #[test]
    fn free_antiperiodic_spectrum() {
        let v = BlochOperator::new(&free(), 256).unwrap().eigenvalues(1.0, 0.5, 4).unwrap();
        for (a, b) in v.iter().zip([0.25, 0.25, 2.25, 2.25]) {
            assert!((a - b).abs() < 20.0 / (256.0 * 256.0));
        }
    }

    #[test]
    fn free_dispersion_interior_k() {
        let op = BlochOperator::new(&free(), 128).unwrap();
        for k in [0.1, 0.23, 0.4] {
            let v = op.eigenvalues(0.0, k, 1).unwrap()[0];
            let exact = (4.0 / (op.h * op.h)) * (0.5 * k * op.h).sin().powi(2);
            assert!((v - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let op = BlochOperator::new(&free(), 64).unwrap();
        assert!(op.eigenvalues(0.0, 0.7, 2).is_err());
        assert!(op.eigenvalues(0.0, 0.0, 17).is_err());
        assert!(BlochOperator::new(&free(), 16).is_err());
    }

    #[test]
    fn free_ground_state_is_constant() {
        let e = edge_eigenfunctions(&free(), 0.0, 3, 64).unwrap();
        let want = 1.0 / (2.0 * PI.sqrt());
        assert!(e.psi(1).iter().all(|v| (v - want).abs() < 1e-10));
        // degenerate pair resolved by parity: psi_2 odd, psi_3 even
        let p2 = e.psi(2);
        assert!(p2[64 + 1] > 0.0 && (p2[64]).abs() < 1e-10);
        assert!(e.parity_defect() < 1e-10);
    }

    #[test]
    fn interlacing_detects_disorder() {
        assert!(check_interlacing(&[0.0, 1.0, 1.1], &[0.3, 0.5, 2.0], 1e-12).is_ok());
        assert!(check_interlacing(&[0.4, 1.0], &[0.3, 0.5], 1e-12).is_err());
    }

    #[test]
    fn curvature_of_free_band() {
        let c = band_curvature(&free(), 0.0, 1, 0.0, 512).unwrap();
        assert!((c - 2.0).abs() < 1e-3);
        assert!(matches!(band_curvature(&free(), 0.0, 2, 0.0, 128), Err(Error::Degenerate(_))));
    }

    #[test]
    fn free_2d_diagram_is_a_sum_of_parabolas() {
        let d = band_diagram_2d(&PeriodicPotential::zero(), 0.0, 3, 6, 128).unwrap();
        assert_eq!(d.k.len(), 16);
        // lowest free band at (k1, k2) is k1^2 + k2^2 up to O(h^2)
        for (j, &(k1, k2)) in d.k.iter().enumerate() {
            assert!((d.bands[j][0] - (k1 * k1 + k2 * k2)).abs() < 1e-3);
        }
        assert!((d.vertices[3].1 - (1.0 + 0.5f64.sqrt())).abs() < 1e-12);
    }
}
