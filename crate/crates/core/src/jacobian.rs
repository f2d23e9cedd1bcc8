//! Linearisation of the stationary envelope system and its kernel.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cme2d::{assemble_realified, solve_cme_newton, ClassTag, CmeField, Layout, NewtonOptions};
use crate::linalg::{self, Csr, EigenPair, ShiftInvertOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockStructure {
    Full,
    PlusMinus,
}

/// Realified Jacobian about a field, complex layout over the active
/// components (all three for the zero field).
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub matrix: Csr,
    pub layout: Layout,
    pub symmetric: bool,
    pub asymmetry: f64,
    pub structure: BlockStructure,
}

impl LinearizedOperator {
    pub fn size(&self) -> usize {
        self.matrix.n
    }
}

pub const RESIDUAL_GUARD: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-12;

fn build(field: &CmeField) -> Result<LinearizedOperator> {
    let mut comps = field.active();
    if comps.is_empty() {
        comps = vec![0, 1, 2];
    }
    let layout = Layout { n: field.n, comps, complex: true };
    let matrix = assemble_realified(field, &field.system(), &layout, None);
    let asymmetry = matrix.asymmetry();
    let scale = matrix.norm_inf().max(1.0);
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::Assembly(format!("realified Jacobian asymmetry {asymmetry:.3e}")));
    }
    Ok(LinearizedOperator { matrix, layout, symmetric: true, asymmetry, structure: BlockStructure::Full })
}

/// Fourth-order realified Jacobian; the field must be converged.
pub fn assemble_jacobian(field: &CmeField) -> Result<LinearizedOperator> {
    let r = field.residual_norm();
    if r > RESIDUAL_GUARD {
        return Err(Error::InvalidInput(format!("field residual {r:.3e} above {RESIDUAL_GUARD:e}")));
    }
    build(field)
}

/// Jacobian about an arbitrary (unconverged) field, for diagnostics.
pub fn assemble_jacobian_unchecked(field: &CmeField) -> Result<LinearizedOperator> {
    build(field)
}

/// Fourth-order first derivative along axis 0 (`y1`) or 1 (`y2`).
fn derivative(field: &CmeField, u: &[C64], axis: usize) -> Vec<C64> {
    let n = field.n;
    let s = 1.0 / (12.0 * field.dy);
    let get = |i1: isize, i2: isize| -> C64 {
        // odd reflection about the zero boundary
        let fold = |i: isize| -> (usize, f64) {
            if i < 0 {
                ((-i) as usize, -1.0)
            } else if i > n as isize - 1 {
                ((2 * (n as isize - 1) - i) as usize, -1.0)
            } else {
                (i as usize, 1.0)
            }
        };
        let (a, sa) = fold(i1);
        let (b, sb) = fold(i2);
        sa * sb * u[a * n + b]
    };
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            let (p, q) = (i1 as isize, i2 as isize);
            let d = |k: isize| if axis == 0 { get(p + k, q) } else { get(p, q + k) };
            out[i1 * n + i2] = s * (d(-2) - 8.0 * d(-1) + 8.0 * d(1) - d(2));
        }
    }
    out
}

/// Realified `d_{y1} A`, `d_{y2} A`, `i A` in the operator's layout.
pub fn kernel_candidates(op: &LinearizedOperator, field: &CmeField) -> Vec<Vec<f64>> {
    let lay = &op.layout;
    let z = vec![C64::new(0.0, 0.0); field.n * field.n];
    let mut out = Vec::new();
    for axis in 0..2 {
        let mut arr = [z.clone(), z.clone(), z.clone()];
        for &c in &lay.comps {
            arr[c] = derivative(field, &field.a[c], axis);
        }
        out.push(lay.gather_arrays(&arr));
    }
    let i = C64::new(0.0, 1.0);
    let arr = [0, 1, 2].map(|c| field.a[c].iter().map(|&v| i * v).collect::<Vec<_>>());
    out.push(lay.gather_arrays(&arr));
    out
}

/// `|J v| / |v|` for each kernel candidate.
pub fn candidate_residuals(op: &LinearizedOperator, field: &CmeField) -> Vec<f64> {
    kernel_candidates(op, field)
        .iter()
        .map(|v| {
            let nv = linalg::norm(v);
            if nv == 0.0 {
                0.0
            } else {
                linalg::norm(&op.matrix.apply(v)) / nv
            }
        })
        .collect()
}

/// `J_+` (real parts) and `J_-` (imaginary parts) after rotating every
/// component by its constant phase.
#[derive(Debug, Clone)]
pub struct BlockPair {
    pub plus: Csr,
    pub minus: Csr,
    /// Phase removed from each active component.
    pub phases: Vec<f64>,
}

pub fn block_diagonalize(op: &LinearizedOperator, field: &CmeField) -> Result<BlockPair> {
    if !matches!(field.class_tag, ClassTag::Bii | ClassTag::Biii | ClassTag::AM0 | ClassTag::BiM0) {
        return Err(Error::NotBlockDiagonalizable(format!("class {}", field.class_tag)));
    }
    let lay = &op.layout;
    let scale = field.max_modulus();
    let mut phases = Vec::new();
    for &c in &lay.comps {
        let peak = field.a[c].iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
        let th = if peak.norm() > 0.0 { peak.arg() } else { 0.0 };
        let e = C64::from_polar(1.0, -th);
        let worst = field.a[c].iter().map(|&v| (v * e).im.abs()).fold(0.0, f64::max);
        if worst > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotBlockDiagonalizable(format!("component {c} is not real up to a phase")));
        }
        phases.push(th);
    }
    let nc = lay.comps.len();
    let rot = |row: usize| -> (f64, f64) {
        let ci = (row / 2) % nc;
        let th = phases[ci];
        (th.cos(), th.sin())
    };
    // J' = R^T J R with R = [[cos, -sin], [sin, cos]] per (point, component)
    let mut t = Vec::with_capacity(4 * op.matrix.nnz());
    for (i, j, v) in op.matrix.triplets() {
        let (ci, si) = rot(i);
        let (cj, sj) = rot(j);
        let ri = if i % 2 == 0 { [ci, -si] } else { [si, ci] };
        let rj = if j % 2 == 0 { [cj, -sj] } else { [sj, cj] };
        let (bi, bj) = (i - i % 2, j - j % 2);
        for a in 0..2 {
            for b in 0..2 {
                let w = v * ri[a] * rj[b];
                if w != 0.0 {
                    t.push((bi + a, bj + b, w));
                }
            }
        }
    }
    let rotated = Csr::from_triplets(op.matrix.n, t);
    let norm = rotated.norm_inf().max(1.0);
    let mut coupling = 0.0f64;
    for (i, j, v) in rotated.triplets() {
        if i % 2 != j % 2 {
            coupling = coupling.max(v.abs());
        }
    }
    if coupling > 1e-10 * norm {
        return Err(Error::NotBlockDiagonalizable(format!("off-diagonal coupling {coupling:.3e}")));
    }
    let even: Vec<usize> = (0..op.matrix.n).step_by(2).collect();
    let odd: Vec<usize> = (1..op.matrix.n).step_by(2).collect();
    Ok(BlockPair { plus: rotated.submatrix(&even), minus: rotated.submatrix(&odd), phases })
}

/// `count` eigenpairs of `a` closest to `shift`, sorted by distance.
pub fn smallest_eigs(a: &Csr, count: usize, shift: f64) -> Result<Vec<EigenPair>> {
    let opts = ShiftInvertOptions { shift, block: (count + 6).max(10), tol: 1e-8, max_iter: 200, ..Default::default() };
    linalg::smallest_eigs(a, count, opts)
}

/// One-component ground states are known to satisfy the kernel conditions.
pub fn known_nondegenerate(class: ClassTag) -> bool {
    matches!(class, ClassTag::AM0 | ClassTag::BiM0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelRow {
    #[serde(rename = "D")]
    pub d: f64,
    pub dy: f64,
    pub unknowns: usize,
    pub structure: BlockStructure,
    /// Four smallest-magnitude eigenvalues, sorted by modulus.
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Largest principal angle between the three near-kernel eigenvectors
    /// and `span{d_y1 A, d_y2 A, i A}`.
    pub subspace_angle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelReport {
    pub class_tag: ClassTag,
    pub omega: f64,
    pub rows: Vec<KernelRow>,
    pub verified: bool,
    /// Verdict taken from known theory rather than the table.
    pub known: bool,
    pub reason: String,
}

/// Eigenvalues below this are treated as exact zeros (gauge mode at
/// working precision) when checking monotone decrease.
pub const NOISE_FLOOR: f64 = 1e-9;
pub const ANGLE_TOL: f64 = 0.05;

/// Four smallest-magnitude eigenpairs of the Jacobian. Uses the `J_+`/`J_-`
/// split when the field allows it (each block is half the size), returning
/// eigenvectors in the full layout either way.
pub fn kernel_eigenpairs(op: &LinearizedOperator, field: &CmeField, count: usize) -> Result<(Vec<EigenPair>, BlockStructure)> {
    let blocks = match block_diagonalize(op, field) {
        Ok(b) => b,
        Err(Error::NotBlockDiagonalizable(_)) => return Ok((smallest_eigs(&op.matrix, count, 0.0)?, BlockStructure::Full)),
        Err(e) => return Err(e),
    };
    let nc = op.layout.comps.len();
    let embed = |v: &[f64], part: usize| -> Vec<f64> {
        let mut out = vec![0.0; 2 * v.len()];
        for (k, &x) in v.iter().enumerate() {
            let th = blocks.phases[k % nc];
            let (c, s) = (th.cos(), th.sin());
            let (re, im) = if part == 0 { (c * x, s * x) } else { (-s * x, c * x) };
            out[2 * k] = re;
            out[2 * k + 1] = im;
        }
        out
    };
    let mut all = Vec::new();
    for (part, m) in [(0, &blocks.plus), (1, &blocks.minus)] {
        for p in smallest_eigs(m, count, 0.0)? {
            all.push(EigenPair { vector: embed(&p.vector, part), ..p });
        }
    }
    all.sort_by(|a, b| a.value.abs().total_cmp(&b.value.abs()));
    all.truncate(count);
    Ok((all, BlockStructure::PlusMinus))
}

pub fn kernel_row(field: &CmeField) -> Result<KernelRow> {
    let op = assemble_jacobian(field)?;
    let (pairs, structure) = kernel_eigenpairs(&op, field, 4)?;
    let cand = kernel_candidates(&op, field);
    let near: Vec<Vec<f64>> = pairs.iter().take(3).map(|p| p.vector.clone()).collect();
    let angle = if field.max_modulus() > 0.0 { linalg::subspace_angle(&near, &cand) } else { std::f64::consts::FRAC_PI_2 };
    Ok(KernelRow {
        d: field.d,
        dy: field.dy,
        unknowns: op.size(),
        structure,
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
        residuals: pairs.iter().map(|p| p.residual).collect(),
        subspace_angle: angle,
    })
}

/// Re-solve `field` on each box of `d_list` (same spacing) and tabulate the
/// kernel. Boxes no larger than the input are cut from it; larger ones are
/// zero-padded from the largest solution so far. Each is polished by Newton.
pub fn kernel_rows(field: &CmeField, d_list: &[f64], opts: NewtonOptions) -> Result<Vec<KernelRow>> {
    let mut ds: Vec<f64> = d_list.to_vec();
    ds.sort_by(f64::total_cmp);
    let mut largest = field.clone();
    let mut rows = Vec::with_capacity(ds.len());
    for d in ds {
        let src = if d <= field.d { field } else { &largest };
        let (g, _) = solve_cme_newton(&src.resampled(d, field.dy)?, opts)?;
        rows.push(kernel_row(&g)?);
        if g.d > largest.d {
            largest = g;
        }
    }
    Ok(rows)
}

/// Verdict from rows computed at increasing `D`.
pub fn kernel_report(class_tag: ClassTag, omega: f64, rows: Vec<KernelRow>, zero_field: bool) -> KernelReport {
    if zero_field {
        return KernelReport {
            class_tag,
            omega,
            rows,
            verified: false,
            known: false,
            reason: "zero field: no kernel inside the gap".into(),
        };
    }
    if known_nondegenerate(class_tag) {
        return KernelReport {
            class_tag,
            omega,
            rows,
            verified: true,
            known: true,
            reason: "one-component ground state: kernel known to be non-degenerate".into(),
        };
    }
    let mut reasons = Vec::new();
    if rows.len() < 2 {
        reasons.push("need at least two box sizes".to_string());
    }
    for k in 0..3 {
        for w in rows.windows(2) {
            let a = w[0].eigenvalues.get(k).map(|v| v.abs()).unwrap_or(f64::NAN);
            let b = w[1].eigenvalues.get(k).map(|v| v.abs()).unwrap_or(f64::NAN);
            if !(b <= a || b <= NOISE_FLOOR) {
                reasons.push(format!("|lambda_{}| does not decrease from D = {} to D = {}", k + 1, w[0].d, w[1].d));
            }
        }
    }
    if let Some(last) = rows.last() {
        let l3 = last.eigenvalues.get(2).map(|v| v.abs()).unwrap_or(f64::NAN);
        let l4 = last.eigenvalues.get(3).map(|v| v.abs()).unwrap_or(f64::NAN);
        if !(l4 > 10.0 * l3) {
            reasons.push(format!("fourth eigenvalue {l4:.3e} not separated from the third {l3:.3e}"));
        }
        if !(last.subspace_angle <= ANGLE_TOL) {
            reasons.push(format!("subspace angle {:.3e} above {ANGLE_TOL}", last.subspace_angle));
        }
    }
    let verified = reasons.is_empty();
    KernelReport {
        class_tag,
        omega,
        rows,
        verified,
        known: false,
        reason: if verified { "persistence conditions verified".into() } else { reasons.join("; ") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cme2d::tests::coeffs;
    use crate::cme2d::seed_field;

    #[test]
    fn zero_field_spectrum_is_analytic() {
        let c = coeffs();
        let f = CmeField::zeros(&c, 3.0, 0.5, 1.5, -1.0, ClassTag::General).unwrap();
        let op = assemble_jacobian(&f).unwrap();
        let n = f.n;
        // 4th-order Dirichlet eigenvalues of d^2: sines are exact eigenvectors
        let lam = |k: usize| {
            let th = k as f64 * std::f64::consts::PI / (n - 1) as f64;
            (-30.0 + 32.0 * th.cos() - 2.0 * (2.0 * th).cos()) / (12.0 * f.dy * f.dy)
        };
        let sys = f.system();
        let mut expect = Vec::new();
        for c in 0..3 {
            let (a1, a2) = sys.curv[c];
            for k1 in 1..n - 1 {
                for k2 in 1..n - 1 {
                    let v = sys.omega - sys.beta[c] + a1 * lam(k1) + a2 * lam(k2);
                    expect.push(v);
                    expect.push(v);
                }
            }
        }
        expect.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        let got = smallest_eigs(&op.matrix, 4, 0.0).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g.value - e).abs() < 1e-9 * e.abs().max(1.0), "{} {}", g.value, e);
        }
    }

    #[test]
    fn gauge_and_translation_candidates() {
        let c = coeffs();
        let seed = seed_field(ClassTag::BiM0, 1.2, -1.0, &c, 14.0, 0.3).unwrap();
        let (f, _) = solve_cme_newton(&seed, NewtonOptions::default()).unwrap();
        let op = assemble_jacobian(&f).unwrap();
        let r = candidate_residuals(&op, &f);
        assert!(r[2] < 1e-10, "{r:?}");
        // translations: truncation-level residual, small against the operator norm
        let scale = op.matrix.norm_inf();
        assert!(r[0] < 1e-3 * scale && r[1] < 1e-3 * scale, "{r:?} {scale}");
    }

    #[test]
    fn block_spectra_reproduce_full_spectrum() {
        let c = coeffs();
        let seed = seed_field(ClassTag::Bii, 1.6, -1.0, &c, 7.5, 0.5).unwrap();
        let (f, _) = solve_cme_newton(&seed, NewtonOptions::default()).unwrap();
        let op = assemble_jacobian(&f).unwrap();
        let b = block_diagonalize(&op, &f).unwrap();
        let full = linalg::sym_eigenvalues(&op.matrix.to_dense()).unwrap();
        let mut union = linalg::sym_eigenvalues(&b.plus.to_dense()).unwrap();
        union.extend(linalg::sym_eigenvalues(&b.minus.to_dense()).unwrap());
        union.sort_by(f64::total_cmp);
        let (split, structure) = kernel_eigenpairs(&op, &f, 4).unwrap();
        assert_eq!(structure, BlockStructure::PlusMinus);
        let direct = smallest_eigs(&op.matrix, 4, 0.0).unwrap();
        for (p, q) in split.iter().zip(&direct) {
            assert!((p.value - q.value).abs() < 1e-9);
            assert!(linalg::norm(&op.matrix.apply(&p.vector)) - p.value.abs() < 1e-8);
        }
        assert_eq!(union.len(), full.len());
        for (u, v) in union.iter().zip(&full) {
            assert!((u - v).abs() < 1e-10 * v.abs().max(1.0));
        }
    }

    #[test]
    fn vortex_pair_is_not_block_diagonalizable() {
        let c = coeffs();
        let seed = seed_field(ClassTag::Biv, 1.6, -1.0, &c, 9.0, 0.5).unwrap();
        let op = assemble_jacobian_unchecked(&seed).unwrap();
        assert!(matches!(block_diagonalize(&op, &seed), Err(Error::NotBlockDiagonalizable(_))));
    }

    #[test]
    fn verdicts() {
        let row = |d: f64, e: [f64; 4]| KernelRow {
            d,
            dy: 0.14,
            unknowns: 0,
            structure: BlockStructure::Full,
            eigenvalues: e.to_vec(),
            residuals: vec![0.0; 4],
            subspace_angle: 0.01,
        };
        let good = vec![row(8.0, [1e-13, 0.02, 0.03, 0.2]), row(12.0, [3e-13, 0.002, 0.003, 0.1])];
        assert!(kernel_report(ClassTag::Bii, 1.19, good, false).verified);
        let bad = vec![row(8.0, [1e-13, 0.02, 0.03, 0.2]), row(12.0, [3e-13, 0.04, 0.003, 0.1])];
        assert!(!kernel_report(ClassTag::Bii, 1.19, bad, false).verified);
        assert!(!kernel_report(ClassTag::General, 1.5, vec![], true).verified);
        assert!(kernel_report(ClassTag::AM0, 1.5, vec![], false).known);
    }
}
