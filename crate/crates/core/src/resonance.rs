//! Gap opening at the triple resonance `lambda_1 + mu_2 = 2 mu_1`, the
//! coupled-mode coefficients, and the non-resonance check.

use serde::{Deserialize, Serialize};

use crate::bloch1d::{edge_eigenfunctions, BlochOperator, Edge, EdgeEigenfunctions, CURVATURE_DK};
use crate::{Error, PeriodicPotential, Result};

/// Bisection stops once the bracket is this narrow.
pub const BISECTION_WIDTH: f64 = 1e-6;
/// Secant polish target for `|g(eta0)|`.
pub const ROOT_TOL: f64 = 1e-10;

/// `g(eta) = lambda_1 + mu_2 - 2 mu_1`.
pub fn resonance_residual(op: &BlochOperator, eta: f64) -> Result<f64> {
    let (l, m) = op.edge_values(eta, 2)?;
    Ok(l[0] + m[1] - 2.0 * m[0])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bifurcation {
    pub eta0: f64,
    pub omega0: f64,
    pub lambda1: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub grid_n: usize,
}

/// Bracketed root of `g` (bisection to [`BISECTION_WIDTH`], then secant to
/// [`ROOT_TOL`]).
pub fn find_bifurcation_eta(p: &PeriodicPotential, bracket: (f64, f64), grid_n: usize) -> Result<Bifurcation> {
    let op = BlochOperator::new(p, grid_n)?;
    let (mut a, mut b) = bracket;
    if !(a < b) {
        return Err(Error::InvalidInput(format!("empty bracket [{a}, {b}]")));
    }
    let mut evals = 0usize;
    let mut g = |eta: f64| -> Result<f64> {
        evals += 1;
        resonance_residual(&op, eta)
    };
    let (mut ga, mut gb) = (g(a)?, g(b)?);
    if ga * gb > 0.0 {
        let split = |eta: f64| -> Result<f64> {
            let m = op.eigenvalues(eta, 0.5, 2)?;
            Ok(m[1] - m[0])
        };
        let mid = 0.5 * (a + b);
        if split(a)?.max(split(mid)?).max(split(b)?) < 1e-10 {
            return Err(Error::InvalidInput(format!(
                "the antiperiodic pair mu_1 = mu_2 stays degenerate on [{a}, {b}]"
            )));
        }
        return Err(Error::NoBifurcation { lo: a, hi: b, g_lo: ga, g_hi: gb });
    }
    if ga == 0.0 {
        b = a;
        gb = ga;
    }
    while b - a > BISECTION_WIDTH && gb != 0.0 {
        let m = 0.5 * (a + b);
        let gm = g(m)?;
        if gm == 0.0 || (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
            gb = gm;
        }
        if gm == 0.0 {
            b = m;
            gb = 0.0;
        }
    }
    // secant polish from the bracket ends, kept inside the bracket
    let (mut x0, mut f0, mut x1, mut f1) = (a, ga, b, gb);
    let (lo, hi) = (a, b);
    for _ in 0..60 {
        if f1.abs() <= ROOT_TOL || f1 == f0 {
            break;
        }
        let mut x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(lo..=hi).contains(&x2) {
            x2 = 0.5 * (lo + hi);
        }
        let f2 = g(x2)?;
        (x0, f0, x1, f1) = (x1, f1, x2, f2);
    }
    let (eta0, res) = if f1.abs() <= f0.abs() { (x1, f1) } else { (x0, f0) };
    if res.abs() > ROOT_TOL {
        return Err(Error::NumericalFailure { what: "resonance root polish".into(), residual: res });
    }
    let (l, m) = op.edge_values(eta0, 2)?;
    Ok(Bifurcation {
        eta0,
        omega0: 2.0 * m[0],
        lambda1: l[0],
        mu1: m[0],
        mu2: m[1],
        residual: res,
        bracket,
        evaluations: evals,
        grid_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub grid_n: usize,
    pub root_tol: f64,
    pub bisection_width: f64,
    pub curvature_dk: f64,
    pub potential_hash: String,
}

/// The eleven constants of the coupled-mode system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCoefficients {
    pub eta0: f64,
    pub omega0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub provenance: Provenance,
}

impl ResonanceCoefficients {
    /// `beta` of component `j` (0-based): `beta1` for the X-point modes,
    /// `beta2` for the M-point mode.
    pub fn beta(&self, j: usize) -> f64 {
        if j < 2 {
            self.beta1
        } else {
            self.beta2
        }
    }

    /// Curvatures `(a_{y1}, a_{y2})` of component `j` (0-based).
    pub fn curvatures(&self, j: usize) -> (f64, f64) {
        match j {
            0 => (self.alpha1, self.alpha2),
            1 => (self.alpha2, self.alpha1),
            _ => (self.alpha3, self.alpha3),
        }
    }

    /// Table in the layout of the coefficient report.
    pub fn table(&self) -> String {
        let rows = [
            ("eta0", self.eta0),
            ("omega0", self.omega0),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("gamma4", self.gamma4),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ];
        let mut s = String::new();
        for (k, v) in rows {
            s.push_str(&format!("{k:>8}  {v:>12.6}\n"));
        }
        s
    }
}

/// Coefficients at `eta0` from 4π-normalised edge eigenfunctions.
pub fn compute_coefficients(p: &PeriodicPotential, eta0: f64, grid_n: usize) -> Result<ResonanceCoefficients> {
    let efs = edge_eigenfunctions(p, eta0, 2, grid_n)?;
    coefficients_from(p, &efs)
}

pub fn coefficients_from(p: &PeriodicPotential, efs: &EdgeEigenfunctions) -> Result<ResonanceCoefficients> {
    let grid_n = efs.grid_n;
    let (psi1, phi1, phi2) = (efs.psi(1), efs.phi(1), efs.phi(2));
    for v in [&psi1, &phi1, &phi2] {
        let drift = (efs.inner(v, v) - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::Normalization(drift));
        }
    }
    let wbase = p.sample(grid_n)?;
    let w: Vec<f64> = (0..2 * grid_n).map(|j| wbase[(j + grid_n) % grid_n]).collect();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let wv = |v: &[f64]| v.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>();
    let (p1s, f1s, f2s) = (sq(&psi1), sq(&phi1), sq(&phi2));
    let ip = |a: &[f64], b: &[f64]| efs.inner(a, b);

    let op = BlochOperator::new(p, grid_n)?;
    let eta = efs.eta;
    Ok(ResonanceCoefficients {
        eta0: eta,
        omega0: 2.0 * efs.mu[0],
        beta1: ip(&psi1, &wv(&psi1)) + ip(&phi2, &wv(&phi2)),
        beta2: 2.0 * ip(&phi1, &wv(&phi1)),
        gamma1: ip(&p1s, &p1s) * ip(&f2s, &f2s),
        gamma2: ip(&p1s, &f2s).powi(2),
        gamma3: ip(&p1s, &f1s) * ip(&f1s, &f2s),
        gamma4: ip(&f1s, &f1s).powi(2),
        alpha1: 0.5 * op.curvature(eta, 1, 0.0, CURVATURE_DK)?,
        alpha2: 0.5 * op.curvature(eta, 2, 0.5, CURVATURE_DK)?,
        alpha3: 0.5 * op.curvature(eta, 1, 0.5, CURVATURE_DK)?,
        provenance: Provenance {
            grid_n,
            root_tol: ROOT_TOL,
            bisection_width: BISECTION_WIDTH,
            curvature_dk: CURVATURE_DK,
            potential_hash: p.descriptor_hash(),
        },
    })
}

/// Root finding and coefficient evaluation in one call.
pub fn resonance_coefficients(
    p: &PeriodicPotential,
    bracket: (f64, f64),
    grid_n: usize,
) -> Result<(Bifurcation, ResonanceCoefficients)> {
    let b = find_bifurcation_eta(p, bracket, grid_n)?;
    let c = compute_coefficients(p, b.eta0, grid_n)?;
    Ok((b, c))
}

/// `d rho_n(k0) / d eta = <u_n, W u_n>` at an edge `k0` in `{0, 1/2}`.
pub fn linear_band_shift(p: &PeriodicPotential, eta0: f64, n: usize, k0: f64, grid_n: usize) -> Result<f64> {
    let op = BlochOperator::new(p, grid_n)?;
    let edge = if k0.abs() < 1e-14 { Edge::Periodic } else { Edge::Antiperiodic };
    let (vals, vecs) = op.edge_pairs(eta0, edge, n + 1)?;
    let sep = if n >= 2 { (vals[n - 1] - vals[n - 2]).min(vals[n] - vals[n - 1]) } else { vals[1] - vals[0] };
    if sep <= 1e-8 {
        return Err(Error::Degenerate(format!("rho_{n} at k = {k0}")));
    }
    let w = op.potential_samples();
    let u = &vecs[n - 1];
    Ok(op.h * u.iter().zip(w).map(|(a, b)| a * a * b).sum::<f64>())
}

/// Central difference `[rho_n(k0; eta + h) - rho_n(k0; eta - h)] / 2h`.
pub fn band_shift_fd(p: &PeriodicPotential, eta: f64, n: usize, k0: f64, grid_n: usize, h: f64) -> Result<f64> {
    let op = BlochOperator::new(p, grid_n)?;
    let r = |e: f64| -> Result<f64> { Ok(op.eigenvalues(e, k0, n)?[n - 1]) };
    Ok((r(eta + h)? - r(eta - h)?) / (2.0 * h))
}

/// The band gap of the coupled-mode linearisation, in `Omega` and in `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapInterval {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub freq_lo: f64,
    pub freq_hi: f64,
}

/// Gap for deviation `eps = eta - eta0`, or `None` if the sign conditions on
/// the edge curvatures and the ordering of the band shifts fail.
pub fn gap_interval(c: &ResonanceCoefficients, eps: f64) -> Option<GapInterval> {
    let x_up = c.alpha1 > 0.0 && c.alpha2 > 0.0;
    let x_down = c.alpha1 < 0.0 && c.alpha2 < 0.0;
    let (lo, hi) = if x_up && c.alpha3 < 0.0 && eps * c.beta1 > eps * c.beta2 {
        (c.beta2, c.beta1)
    } else if x_down && c.alpha3 > 0.0 && eps * c.beta1 < eps * c.beta2 {
        (c.beta1, c.beta2)
    } else {
        return None;
    };
    Some(GapInterval {
        omega_lo: lo,
        omega_hi: hi,
        freq_lo: c.omega0 + eps * lo,
        freq_hi: c.omega0 + eps * hi,
    })
}

/// Invariant reductions of the truncated (constant-amplitude) system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    /// `A1 = A2 = 0`.
    AOnly,
    /// `A3 = 0`, `A1 = A2` real.
    BOnly,
    /// `A2 = A3 = 0`.
    Single,
}

/// `|A|^2` of the nonzero components, if non-negative.
pub fn solve_algebraic_cme(c: &ResonanceCoefficients, omega: f64, sigma: f64, r: Reduction) -> Result<Option<f64>> {
    let (num, g) = match r {
        Reduction::AOnly => (omega - c.beta2, c.gamma4),
        Reduction::BOnly => (omega - c.beta1, c.gamma1 + 3.0 * c.gamma2),
        Reduction::Single => (omega - c.beta1, c.gamma1),
    };
    if g.abs() < 1e-300 {
        return Err(Error::Degenerate(format!("vanishing nonlinear coefficient for {r:?}")));
    }
    let a2 = num / (sigma * g);
    Ok(if a2 >= 0.0 { Some(a2) } else { None })
}

/// One candidate term of the non-resonance infimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceTuple {
    pub n1: usize,
    pub n2: usize,
    pub j: [i32; 3],
    pub k1: f64,
    pub k2: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailCertificate {
    /// Fitted lower growth constant in `rho_n >= c_minus n^2 - shift`.
    pub c_minus: f64,
    pub shift: f64,
    /// Band index beyond which no tuple can undercut the minimum.
    pub n_star: usize,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonResonance {
    pub minimum: f64,
    pub attained_by: ResonanceTuple,
    /// Direct-resonance tuples left out of the infimum.
    pub excluded: Vec<ResonanceTuple>,
    /// Distinct reduced quasi-momenta that occurred.
    pub k_values: Vec<f64>,
    pub n_max: usize,
    pub tail: TailCertificate,
    pub status: String,
}

/// Reduce `k` into `[-1/2, 1/2]` using 1-periodicity of the bands.
pub fn reduce_k(k: f64) -> f64 {
    let r = k - k.round();
    if (r + 0.5).abs() < 1e-14 {
        0.5
    } else {
        r
    }
}

fn is_direct_resonance(n: usize, k: f64, m: usize, q: f64, j_sum: i32) -> bool {
    let at = |n: usize, k: f64, bn: usize, bk: f64| n == bn && (k.abs() - bk).abs() < 1e-12;
    j_sum.abs() == 1
        && ((at(n, k, 1, 0.0) && at(m, q, 2, 0.5))
            || (at(n, k, 2, 0.5) && at(m, q, 1, 0.0))
            || (at(n, k, 1, 0.5) && at(m, q, 1, 0.5)))
}

/// Brute-force infimum of `|rho_n1(k1) + rho_n2(k2) - |j1+j2+j3| omega0|`
/// over `n1, n2 <= n_max`, `j in {±1, ±3, ±5}^3`, `|j1+j2+j3| <= 5`, with the
/// direct resonances excluded and a fitted tail bound for larger indices.
pub fn check_nonresonance(
    p: &PeriodicPotential,
    eta0: f64,
    omega0: f64,
    n_max: usize,
    grid_n: usize,
) -> Result<NonResonance> {
    let grid_n = grid_n.max(4 * n_max + 4);
    let op = BlochOperator::new(p, grid_n)?;
    let js: [i32; 6] = [-5, -3, -1, 1, 3, 5];
    let mut cache: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut bands_at = |k: f64| -> Result<Vec<f64>> {
        if let Some((_, v)) = cache.iter().find(|(q, _)| (q - k).abs() < 1e-14) {
            return Ok(v.clone());
        }
        let v = op.eigenvalues(eta0, k, n_max)?;
        cache.push((k, v.clone()));
        Ok(v)
    };
    let mut best: Option<ResonanceTuple> = None;
    let mut excluded = Vec::new();
    for &j1 in &js {
        for &j2 in &js {
            for &j3 in &js {
                let s = j1 + j2 + j3;
                if s.abs() > 5 {
                    continue;
                }
                let k1 = reduce_k(0.5 * (j2 + j3) as f64);
                let k2 = reduce_k(0.5 * (j1 + j3) as f64);
                let (r1, r2) = (bands_at(k1)?, bands_at(k2)?);
                for n1 in 1..=n_max {
                    for n2 in 1..=n_max {
                        let t = ResonanceTuple {
                            n1,
                            n2,
                            j: [j1, j2, j3],
                            k1,
                            k2,
                            value: (r1[n1 - 1] + r2[n2 - 1] - s.abs() as f64 * omega0).abs(),
                        };
                        if is_direct_resonance(n1, k1, n2, k2, s) {
                            excluded.push(t);
                            continue;
                        }
                        if best.map_or(true, |b| t.value < b.value) {
                            best = Some(t);
                        }
                    }
                }
            }
        }
    }
    let best = best.ok_or_else(|| Error::InvalidInput("no admissible tuples".into()))?;
    let k_values: Vec<f64> = cache.iter().map(|(k, _)| *k).collect();

    // tail: rho_n(k) >= c_minus n^2 - shift, fitted on the upper half of the range
    let shift = (-eta0 * p.min_value()).max(0.0);
    let mut c_minus = f64::INFINITY;
    let mut rho_min = f64::INFINITY;
    for (_, v) in &cache {
        rho_min = rho_min.min(v[0]);
        for n in (n_max / 2).max(2)..=n_max {
            c_minus = c_minus.min((v[n - 1] + shift) / (n * n) as f64);
        }
    }
    let target = 5.0 * omega0 + best.value - rho_min + shift;
    let n_star = if c_minus > 0.0 { (target / c_minus).sqrt().ceil().max(1.0) as usize } else { usize::MAX };
    let certified = best.value > 0.0 && n_star <= n_max;
    let status = if certified {
        "certified".to_string()
    } else {
        format!("inconclusive: tail bound closes at n = {n_star}")
    };
    Ok(NonResonance {
        minimum: best.value,
        attained_by: best,
        excluded,
        k_values,
        n_max,
        tail: TailCertificate { c_minus, shift, n_star, certified },
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs_reference() -> ResonanceCoefficients {
        ResonanceCoefficients {
            eta0: 0.1745,
            omega0: 0.6672,
            beta1: 2.2835,
            beta2: 0.9183,
            gamma1: 9.4829e-3,
            gamma2: 4.5196e-3,
            gamma3: 3.7942e-3,
            gamma4: 1.5981e-2,
            alpha1: 0.9422,
            alpha2: 6.7813,
            alpha3: -4.7890,
            provenance: Provenance {
                grid_n: 0,
                root_tol: 0.0,
                bisection_width: 0.0,
                curvature_dk: 0.0,
                potential_hash: String::new(),
            },
        }
    }

    #[test]
    fn free_residual_at_zero_coupling() {
        let op = BlochOperator::new(&PeriodicPotential::one_minus_cos(), 128).unwrap();
        let g = resonance_residual(&op, 0.0).unwrap();
        assert!((g + 0.25).abs() < 1e-3);
    }

    #[test]
    fn gap_interval_cases() {
        let c = coeffs_reference();
        let g = gap_interval(&c, 0.1).unwrap();
        assert_eq!((g.omega_lo, g.omega_hi), (0.9183, 2.2835));
        assert!((g.freq_lo - (0.6672 + 0.09183)).abs() < 1e-12);
        assert!(gap_interval(&c, 0.0).is_none());
        assert!(gap_interval(&c, -0.05).is_none());
    }

    #[test]
    fn algebraic_reductions() {
        let c = coeffs_reference();
        let a = solve_algebraic_cme(&c, 1.0, 1.0, Reduction::AOnly).unwrap().unwrap();
        assert!((a - (1.0 - 0.9183) / 1.5981e-2).abs() < 1e-12);
        assert!((a - 5.113).abs() < 2e-3);
        assert_eq!(solve_algebraic_cme(&c, 0.9183, 1.0, Reduction::AOnly).unwrap(), Some(0.0));
        let s = solve_algebraic_cme(&c, 2.0, -1.0, Reduction::Single).unwrap().unwrap();
        assert!((s - (2.0 - 2.2835) / (-9.4829e-3)).abs() < 1e-12);
        assert_eq!(solve_algebraic_cme(&c, 2.0, 1.0, Reduction::Single).unwrap(), None);
        let mut z = c.clone();
        z.gamma4 = 0.0;
        assert!(solve_algebraic_cme(&z, 1.0, 1.0, Reduction::AOnly).is_err());
    }

    #[test]
    fn k_reduction() {
        assert_eq!(reduce_k(1.0), 0.0);
        assert_eq!(reduce_k(-3.0), 0.0);
        assert_eq!(reduce_k(0.5), 0.5);
        assert_eq!(reduce_k(-0.5), 0.5);
        assert!((reduce_k(1.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn no_bracket_is_reported() {
        let p = PeriodicPotential::one_minus_cos();
        assert!(matches!(find_bifurcation_eta(&p, (0.3, 0.5), 64), Err(Error::NoBifurcation { .. })));
        assert!(find_bifurcation_eta(&PeriodicPotential::zero(), (0.1, 0.5), 64).is_err());
    }
}
