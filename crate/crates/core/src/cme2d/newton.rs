//! Newton solver, homotopy in the curvatures and continuation in `Omega`.

use serde::{Deserialize, Serialize};

use super::{assemble_realified, seed_field, ClassTag, CmeField, Layout};
use crate::linalg::{norm_max, Factor};
use crate::resonance::ResonanceCoefficients;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Max-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    pub unknowns: usize,
    pub complex: bool,
}

/// Grid point pinned by the phase condition: the largest `|A_c|` on the
/// positive `y1` axis.
fn phase_reference(f: &CmeField, c: usize) -> (usize, usize) {
    let n = f.n;
    let i2 = f.center();
    let mut best = (f.center() + 1, 0.0);
    for i1 in f.center() + 1..n - 1 {
        let v = f.a[c][i1 * n + i2].norm();
        if v > best.1 {
            best = (i1, v);
        }
    }
    if best.1 == 0.0 {
        let q = (0..n * n).max_by(|&p, &q| f.a[c][p].norm().total_cmp(&f.a[c][q].norm())).unwrap_or(0);
        return (q / n, q % n);
    }
    (best.0, i2)
}

/// Newton iteration on the realified fourth-order discretisation.
///
/// Real initial data are solved in the real subspace (no gauge kernel
/// there); complex data get the phase condition `Im A_c(ref) = 0` in place
/// of one equation, `c` the first active component.
pub fn solve_cme_newton(initial: &CmeField, opts: NewtonOptions) -> Result<(CmeField, NewtonReport)> {
    let mut f = initial.clone();
    let comps = f.active();
    if comps.is_empty() {
        let r = f.residual_norm();
        return Ok((f, NewtonReport { iterations: 0, residual: r, history: vec![r], unknowns: 0, complex: false }));
    }
    let lay = Layout { n: f.n, comps: comps.clone(), complex: !f.is_real() };
    let sys = f.system();
    let pin = if lay.complex {
        let (i1, i2) = phase_reference(&f, comps[0]);
        // start on the constraint: an exact gauge rotation
        let z = f.a[comps[0]][i1 * f.n + i2];
        if z.norm() > 0.0 {
            f = f.rotated(-z.arg());
            f.a[comps[0]][i1 * f.n + i2].im = 0.0;
        }
        let row = lay.index(lay.point(i1, i2), 0, 1);
        Some((row, i1 * f.n + i2))
    } else {
        None
    };
    let symmetric = f.class_tag != ClassTag::General && f.reversibility_defect() < 1e-6;
    if symmetric {
        f.symmetrize();
    }
    let merit = |g: &CmeField| -> (Vec<f64>, f64) {
        let mut r = lay.gather_arrays(&g.residual_with(&sys));
        if let Some((row, q)) = pin {
            r[row] = g.a[comps[0]][q].im;
        }
        let m = norm_max(&r);
        (r, m)
    };
    let (mut r, mut res) = merit(&f);
    let mut history = vec![res];
    for it in 0..opts.max_iter {
        if !res.is_finite() {
            break;
        }
        if res <= opts.tol {
            let report = NewtonReport { iterations: it, residual: res, history, unknowns: lay.size(), complex: lay.complex };
            return Ok((f, report));
        }
        let j = assemble_realified(&f, &sys, &lay, pin.map(|p| p.0));
        let lu = Factor::new(&j).map_err(|e| Error::Singular(format!("Newton Jacobian: {e}")))?;
        let mut dx: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve(&mut dx).map_err(|e| Error::Singular(format!("Newton step: {e}")))?;
        // one step of iterative refinement keeps roundoff out of the
        // near-kernel (translation) directions
        let jd = j.apply(&dx);
        let mut corr: Vec<f64> = jd.iter().zip(&r).map(|(a, b)| -b - a).collect();
        lu.solve(&mut corr).map_err(|e| Error::Singular(format!("Newton step: {e}")))?;
        dx.iter_mut().zip(&corr).for_each(|(a, b)| *a += b);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..6 {
            let mut g = f.clone();
            lay.scatter_add(&mut g, &dx, t);
            if symmetric {
                g.symmetrize();
            }
            let (rg, mg) = merit(&g);
            if mg.is_finite() && mg < res {
                accepted = Some((g, rg, mg));
                break;
            }
            t *= 0.5;
        }
        let (g, rg, mg) = match accepted {
            Some(v) => v,
            None => {
                let mut g = f.clone();
                lay.scatter_add(&mut g, &dx, 1.0);
                if symmetric {
                    g.symmetrize();
                }
                let (rg, mg) = merit(&g);
                (g, rg, mg)
            }
        };
        f = g;
        r = rg;
        res = mg;
        history.push(res);
    }
    if res <= opts.tol && res.is_finite() {
        let report = NewtonReport { iterations: opts.max_iter, residual: res, history, unknowns: lay.size(), complex: lay.complex };
        return Ok((f, report));
    }
    Err(Error::Divergence { history })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomotopyReport {
    /// Accepted path parameters, ending at 1 on success.
    pub s_values: Vec<f64>,
    pub newton_iterations: Vec<usize>,
    pub bisections: usize,
}

/// Linear homotopy of `(alpha1, alpha2)` from the field's current pair to
/// the target's, Newton re-solve at each accepted step; a failed step is
/// halved, at most 8 times in a row.
pub fn homotopy_continue(
    field: &CmeField,
    target: &ResonanceCoefficients,
    steps: usize,
    opts: NewtonOptions,
) -> Result<(CmeField, HomotopyReport)> {
    let from = field.alpha12;
    let to = (target.alpha1, target.alpha2);
    let mut report = HomotopyReport { s_values: vec![0.0], newton_iterations: Vec::new(), bisections: 0 };
    let mut cur = field.clone();
    cur.coeffs = target.clone();
    cur.alpha12 = from;
    if steps == 0 && from == to {
        return Ok((cur, report));
    }
    if from == to {
        let (g, nr) = solve_cme_newton(&cur, opts)?;
        report.s_values.push(1.0);
        report.newton_iterations.push(nr.iterations);
        return Ok((g, report));
    }
    let base = 1.0 / steps.max(1) as f64;
    let mut ds = base;
    let mut s = 0.0;
    let mut halvings = 0;
    while s < 1.0 {
        let st = (s + ds).min(1.0);
        let mut trial = cur.clone();
        trial.alpha12 = (from.0 + st * (to.0 - from.0), from.1 + st * (to.1 - from.1));
        if st >= 1.0 {
            trial.alpha12 = to;
        }
        match solve_cme_newton(&trial, opts) {
            Ok((g, nr)) => {
                cur = g;
                s = st;
                report.s_values.push(s);
                report.newton_iterations.push(nr.iterations);
                halvings = 0;
                ds = (2.0 * ds).min(base);
            }
            Err(_) => {
                halvings += 1;
                report.bisections += 1;
                if halvings > 8 {
                    return Err(Error::HomotopyStalled { last_s: s });
                }
                ds *= 0.5;
            }
        }
    }
    Ok((cur, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSpec {
    pub class: ClassTag,
    pub omega: f64,
    pub sigma: Option<f64>,
    #[serde(rename = "D")]
    pub d: f64,
    pub dy: f64,
    pub homotopy_steps: usize,
    /// The homotopy runs on a grid this many times coarser, and the result
    /// is interpolated back and polished; 1 disables.
    #[serde(default = "default_coarsen")]
    pub coarsen: usize,
    pub newton: NewtonOptions,
}

fn default_coarsen() -> usize {
    2
}

impl SolveSpec {
    pub fn new(class: ClassTag, omega: f64) -> Self {
        let dy = if class == ClassTag::Biv { 0.12 } else { 0.14 };
        Self {
            class,
            omega,
            sigma: None,
            d: 20.0,
            dy,
            homotopy_steps: 10,
            coarsen: default_coarsen(),
            newton: NewtonOptions::default(),
        }
    }
}

/// Seed, Newton, and for the two-component classes the curvature homotopy.
pub fn solve_class(
    coeffs: &ResonanceCoefficients,
    spec: &SolveSpec,
) -> Result<(CmeField, Vec<NewtonReport>, Option<HomotopyReport>)> {
    let sigma = spec.sigma.unwrap_or(spec.class.default_sigma());
    let two = spec.class.is_two_component();
    let coarse_dy = spec.dy * spec.coarsen.max(1) as f64;
    let coarse = two && spec.coarsen > 1 && 2.0 * spec.d / coarse_dy >= 40.0;
    let dy = if coarse { coarse_dy } else { spec.dy };
    let seed = seed_field(spec.class, spec.omega, sigma, coeffs, spec.d, dy)?;
    let (f, nr) = solve_cme_newton(&seed, spec.newton)?;
    if !two {
        return Ok((f, vec![nr], None));
    }
    let (g, hr) = homotopy_continue(&f, coeffs, spec.homotopy_steps, spec.newton)?;
    if !coarse {
        return Ok((g, vec![nr], Some(hr)));
    }
    let (h, nr2) = solve_cme_newton(&g.resampled(spec.d, spec.dy)?, spec.newton)?;
    Ok((h, vec![nr, nr2], Some(hr)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub omega: f64,
    pub amplitude: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchEnd {
    /// Requested range exhausted.
    RangeEnd,
    /// Amplitude fell below the edge threshold or the next step would
    /// leave the gap.
    Edge,
    /// Step halved 6 times without convergence.
    Fold { omega: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionBranch {
    pub class_tag: ClassTag,
    pub points: Vec<BranchPoint>,
    pub end: BranchEnd,
}

impl SolutionBranch {
    /// Least-squares slope of `log amplitude` against `log |Omega - edge|`
    /// over points with `|Omega - edge| <= max_delta`.
    pub fn edge_exponent(&self, edge: f64, max_delta: f64) -> Option<(f64, usize)> {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| (p.omega - edge).abs() <= max_delta && p.amplitude > 0.0)
            .map(|p| ((p.omega - edge).abs().ln(), p.amplitude.ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        Some((least_squares_slope(&pts).0, pts.len()))
    }
}

/// `(slope, intercept)` of the least-squares line through `pts`.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub const EDGE_AMPLITUDE: f64 = 1e-4;

pub fn continue_in_omega(seed: &CmeField, range: (f64, f64), step: f64, opts: NewtonOptions) -> Result<SolutionBranch> {
    continue_in_omega_with(seed, range, step, opts, |_| Ok(()))
}

/// Natural-parameter continuation from `range.0` towards `range.1` with a
/// secant predictor; `on_point` sees every converged field.
pub fn continue_in_omega_with(
    seed: &CmeField,
    range: (f64, f64),
    step: f64,
    opts: NewtonOptions,
    mut on_point: impl FnMut(&CmeField) -> Result<()>,
) -> Result<SolutionBranch> {
    let (a, b) = range;
    let (lo, hi) = (seed.coeffs.beta2.min(seed.coeffs.beta1), seed.coeffs.beta2.max(seed.coeffs.beta1));
    if !(step > 0.0) || !(a > lo && a < hi) {
        return Err(Error::InvalidInput(format!("continuation range must start inside ({lo}, {hi}) with step > 0")));
    }
    let dir = if b >= a { 1.0 } else { -1.0 };
    let mut start = seed.clone();
    start.omega = a;
    let (mut cur, nr) = solve_cme_newton(&start, opts)?;
    let mut points = vec![BranchPoint { omega: a, amplitude: cur.amplitude(), newton_iterations: nr.iterations }];
    on_point(&cur)?;
    let mut prev: Option<CmeField> = None;
    let end = loop {
        if points.last().unwrap().amplitude < EDGE_AMPLITUDE {
            break BranchEnd::Edge;
        }
        if (b - cur.omega) * dir <= 1e-14 {
            break BranchEnd::RangeEnd;
        }
        let mut h = step;
        let mut done = None;
        for _ in 0..=6 {
            let target = if (b - cur.omega) * dir < h { b } else { cur.omega + dir * h };
            if !(target > lo && target < hi) {
                done = Some(Err(BranchEnd::Edge));
                break;
            }
            let mut guess = cur.clone();
            guess.omega = target;
            if let Some(p) = &prev {
                let w = (target - cur.omega) / (cur.omega - p.omega);
                for c in 0..3 {
                    for q in 0..cur.a[c].len() {
                        guess.a[c][q] = cur.a[c][q] + w * (cur.a[c][q] - p.a[c][q]);
                    }
                }
            }
            let attempt = solve_cme_newton(&guess, opts).or_else(|_| {
                let mut g = cur.clone();
                g.omega = target;
                solve_cme_newton(&g, opts)
            });
            if let Ok((g, nr)) = attempt {
                done = Some(Ok((g, nr)));
                break;
            }
            h *= 0.5;
        }
        match done {
            Some(Ok((g, nr))) => {
                points.push(BranchPoint { omega: g.omega, amplitude: g.amplitude(), newton_iterations: nr.iterations });
                on_point(&g)?;
                prev = Some(std::mem::replace(&mut cur, g));
            }
            Some(Err(e)) => break e,
            None => break BranchEnd::Fold { omega: cur.omega },
        }
    };
    Ok(SolutionBranch { class_tag: seed.class_tag, points, end })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cme2d::tests::coeffs;
    use crate::cme2d::{seed_field, CmeField};
    use num_complex::Complex64 as C64;

    #[test]
    fn one_component_seed_converges_quickly() {
        let c = coeffs();
        let seed = seed_field(ClassTag::BiM0, 1.6, -1.0, &c, 10.0, 0.25).unwrap();
        let (f, r) = solve_cme_newton(&seed, NewtonOptions::default()).unwrap();
        assert!(r.iterations <= 3, "{:?}", r.history);
        assert!(!r.complex);
        assert!(f.a[1].iter().chain(&f.a[2]).all(|z| z.norm() <= 1e-12));
        assert!(f.reversibility_defect() < 1e-8);
    }

    #[test]
    fn complex_class_gets_phase_fixed() {
        let c = coeffs();
        let seed = seed_field(ClassTag::AM1, 1.6, 1.0, &c, 14.0, 0.35).unwrap();
        let seed = seed.rotated(0.4);
        let (f, r) = solve_cme_newton(&seed, NewtonOptions::default()).unwrap();
        assert!(r.complex);
        assert!(f.residual_norm() <= 1e-10);
        let (i1, i2) = phase_reference(&f, 2);
        assert!(f.a[2][i1 * f.n + i2].im.abs() < 1e-12);
        assert!(f.reversibility_defect() < 1e-8, "{}", f.reversibility_defect());
    }

    #[test]
    fn homotopy_identity_and_constant_path() {
        let c = coeffs();
        let seed = seed_field(ClassTag::BiM0, 1.8, -1.0, &c, 8.0, 0.4).unwrap();
        let (g, rep) = homotopy_continue(&seed, &c, 0, NewtonOptions::default()).unwrap();
        assert_eq!(g.a, seed.a);
        assert_eq!(rep.s_values, vec![0.0]);
        let (_, rep) = homotopy_continue(&seed, &c, 5, NewtonOptions::default()).unwrap();
        assert_eq!(rep.s_values, vec![0.0, 1.0]);
    }

    #[test]
    fn divergence_is_reported() {
        let c = coeffs();
        let mut f = CmeField::zeros(&c, 4.0, 0.5, 1.5, -1.0, ClassTag::General).unwrap();
        f.fill(|y1, y2| [C64::new(50.0 * (-(y1 * y1 + y2 * y2)).exp(), 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let e = solve_cme_newton(&f, NewtonOptions { tol: 1e-10, max_iter: 3 });
        assert!(matches!(e, Err(Error::Divergence { ref history }) if history.len() == 4));
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64, 0.5 * k as f64 + 1.0)).collect();
        let (s, i) = least_squares_slope(&pts);
        assert!((s - 0.5).abs() < 1e-14 && (i - 1.0).abs() < 1e-14);
    }
}
