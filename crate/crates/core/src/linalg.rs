//! Thin wrappers over faer: sparse assembly, sparse LU and symmetric
//! indefinite factorisations, dense symmetric eigensolves and shift-invert
//! block Krylov iteration.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::prelude::*;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, IntranodeLbltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Cap the worker threads used by faer's dense kernels.
pub fn set_threads(n: usize) {
    if n <= 1 {
        faer::set_global_parallelism(faer::Par::Seq);
    } else {
        faer::set_global_parallelism(faer::Par::rayon(n));
    }
}

/// Compressed sparse row matrix, assembled from (possibly repeated) triplets.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = (usize::MAX, usize::MAX);
        for (i, j, v) in t {
            if (i, j) == last {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = (i, j);
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self { n, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.data[self.indptr[i] + p],
            Err(_) => 0.0,
        }
    }

    /// `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                worst = worst.max((self.data[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[self.indptr[i]..self.indptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `A + s I`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut t = self.triplets();
        t.extend((0..self.n).map(|i| (i, i, s)));
        Self::from_triplets(self.n, t)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                t.push((i, self.indices[p], self.data[p]));
            }
        }
        t
    }

    /// Principal submatrix on the given index set.
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut t = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = map[self.indices[p]];
                if j != usize::MAX {
                    t.push((k, j, self.data[p]));
                }
            }
        }
        Self::from_triplets(keep.len(), t)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[p])] += self.data[p];
            }
        }
        m
    }
}

/// Sparse LU factorisation of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &Csr) -> Result<Self> {
        let trip: Vec<Triplet<usize, usize, f64>> = a
            .triplets()
            .into_iter()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.n, a.n, &trip)
            .map_err(|e| Error::Singular(format!("assembly: {e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::Singular(format!("factorisation: {e:?}")))?;
        Ok(Self { n: a.n, lu })
    }

    /// Solve in place; non-finite output signals a numerically singular factor.
    pub fn solve(&self, b: &mut [f64]) -> Result<()> {
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(m.as_mut());
        for (i, v) in b.iter_mut().enumerate() {
            *v = m[(i, 0)];
        }
        if b.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Singular("non-finite solution".into()))
        }
    }

    /// Solve for several right-hand sides stored column-wise.
    pub fn solve_block(&self, cols: &mut [Vec<f64>]) -> Result<()> {
        let k = cols.len();
        let mut m = Mat::<f64>::from_fn(self.n, k, |i, j| cols[j][i]);
        self.lu.solve_in_place(m.as_mut());
        for (j, c) in cols.iter_mut().enumerate() {
            for (i, v) in c.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular("non-finite solution".into()));
            }
        }
        Ok(())
    }
}

/// Supernodal `L B L^T` factorisation (AMD ordering, Bunch–Kaufman pivoting
/// inside supernodes) of a symmetric, possibly indefinite matrix. Roughly
/// half the cost of [`SparseLu`] on grid operators; only the lower triangle
/// is read.
pub struct SymmetricLblt {
    n: usize,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    subdiag: Vec<f64>,
    fwd: Vec<usize>,
    inv: Vec<usize>,
}

impl SymmetricLblt {
    pub fn new(a: &Csr) -> Result<Self> {
        let n = a.n;
        let trip: Vec<Triplet<usize, usize, f64>> = a
            .triplets()
            .into_iter()
            .filter(|&(i, j, _)| i >= j)
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Singular(format!("assembly: {e:?}")))?;
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let symbolic = factorize_symbolic_cholesky(m.symbolic(), Side::Lower, SymmetricOrdering::Amd, params)
            .map_err(|e| Error::Singular(format!("symbolic factorisation: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let mut subdiag = vec![0.0; n];
        let mut fwd = vec![0usize; n];
        let mut inv = vec![0usize; n];
        let par = Par::Seq;
        let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_intranode_lblt_scratch::<f64>(par, Default::default()))
            .map_err(|_| Error::Singular("out of memory in factorisation".into()))?;
        symbolic.factorize_numeric_intranode_lblt(
            &mut values,
            &mut subdiag,
            &mut fwd,
            &mut inv,
            m.as_ref(),
            Side::Lower,
            par,
            MemStack::new(&mut mem),
            Default::default(),
        );
        Ok(Self { n, symbolic, values, subdiag, fwd, inv })
    }

    pub fn solve_block(&self, cols: &mut [Vec<f64>]) -> Result<()> {
        let k = cols.len();
        let mut m = Mat::<f64>::from_fn(self.n, k, |i, j| cols[j][i]);
        // SAFETY: fwd/inv were filled by the factorisation as mutually inverse permutations.
        let perm = unsafe { faer::perm::PermRef::new_unchecked(&self.fwd, &self.inv, self.n) };
        let f = IntranodeLbltRef::new(&self.symbolic, &self.values, &self.subdiag, perm);
        let par = Par::Seq;
        let mut mem = MemBuffer::try_new(self.symbolic.solve_in_place_scratch::<f64>(k, par))
            .map_err(|_| Error::Singular("out of memory in solve".into()))?;
        f.solve_in_place_with_conj(Conj::No, m.as_mut(), par, MemStack::new(&mut mem));
        for (j, c) in cols.iter_mut().enumerate() {
            for (i, v) in c.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular("non-finite solution".into()));
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &mut [f64]) -> Result<()> {
        let mut cols = [b.to_vec()];
        self.solve_block(&mut cols)?;
        b.copy_from_slice(&cols[0]);
        Ok(())
    }
}

/// Either factorisation behind one interface.
pub enum Factor {
    Lu(SparseLu),
    Symmetric(SymmetricLblt),
}

impl Factor {
    /// Symmetric factorisation when `a` is symmetric to roundoff, LU otherwise.
    pub fn new(a: &Csr) -> Result<Self> {
        if a.asymmetry() <= 1e-13 * a.norm_inf().max(1.0) {
            Ok(Self::Symmetric(SymmetricLblt::new(a)?))
        } else {
            Ok(Self::Lu(SparseLu::new(a)?))
        }
    }

    pub fn solve(&self, b: &mut [f64]) -> Result<()> {
        match self {
            Self::Lu(f) => f.solve(b),
            Self::Symmetric(f) => f.solve(b),
        }
    }

    pub fn solve_block(&self, cols: &mut [Vec<f64>]) -> Result<()> {
        match self {
            Self::Lu(f) => f.solve_block(cols),
            Self::Symmetric(f) => f.solve_block(cols),
        }
    }
}

/// Eigenpairs of a dense symmetric matrix, ascending.
pub fn sym_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalFailure { what: format!("dense eigensolve: {e:?}"), residual: f64::NAN })?;
    let s = e.S();
    let vals = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((vals, e.U().to_owned()))
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NumericalFailure { what: format!("dense eigensolve: {e:?}"), residual: f64::NAN })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_max(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Orthonormalise columns in place (two passes of modified Gram–Schmidt);
/// returns the number of columns kept.
pub fn orthonormalize(cols: &mut Vec<Vec<f64>>) -> usize {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for mut c in cols.drain(..) {
        let n0 = norm(&c);
        for _ in 0..2 {
            for q in &out {
                let d = dot(q, &c);
                c.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nc = norm(&c);
        if nc > 1e-12 * n0.max(f64::MIN_POSITIVE) {
            c.iter_mut().for_each(|x| *x /= nc);
            out.push(c);
        }
    }
    *cols = out;
    cols.len()
}

/// Largest principal angle between the column spans of `a` and `b`.
pub fn subspace_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut qa = a.to_vec();
    let mut qb = b.to_vec();
    orthonormalize(&mut qa);
    orthonormalize(&mut qb);
    if qa.is_empty() || qb.is_empty() {
        return std::f64::consts::FRAC_PI_2;
    }
    // cosines of principal angles are the singular values of Qa^T Qb
    let m = Mat::<f64>::from_fn(qa.len(), qb.len(), |i, j| dot(&qa[i], &qb[j]));
    let g = &m * m.transpose();
    let (vals, _) = sym_eigen(&g.to_owned()).unwrap_or((vec![0.0], Mat::zeros(1, 1)));
    let smin = vals.first().copied().unwrap_or(0.0).max(0.0).sqrt().min(1.0);
    if qa.len() > qb.len() {
        return std::f64::consts::FRAC_PI_2;
    }
    smin.acos()
}

/// An eigenpair with its residual `|A v - lambda v|`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ShiftInvertOptions {
    pub shift: f64,
    pub block: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ShiftInvertOptions {
    fn default() -> Self {
        Self { shift: 0.0, block: 8, tol: 1e-8, max_iter: 300, seed: 0x6761_7077 }
    }
}

const KRYLOV_DEPTH: usize = 4;

/// The `count` eigenvalues of symmetric `a` closest to `opts.shift`, by
/// restarted shift-invert block Krylov iteration with Rayleigh–Ritz, sorted
/// by distance to the shift.
pub fn smallest_eigs(a: &Csr, count: usize, opts: ShiftInvertOptions) -> Result<Vec<EigenPair>> {
    let n = a.n;
    if count == 0 {
        return Ok(Vec::new());
    }
    if n <= 400 {
        return dense_smallest(a, count, opts.shift);
    }
    let block = opts.block.max(count + 3).min(n);
    let scale = a.norm_inf().max(1.0);
    // factor slightly off the target so exact kernels (gauge modes) do not
    // make the factorisation singular
    let mut shift = opts.shift + 1e-7 * scale;
    let mut lu = None;
    for attempt in 0..4 {
        match Factor::new(&a.shifted(-shift)) {
            Ok(f) => {
                let mut probe = vec![1.0; n];
                if f.solve(&mut probe).is_ok() {
                    lu = Some(f);
                    break;
                }
            }
            Err(_) => {}
        }
        shift = opts.shift + 1e-7 * scale * (attempt + 2) as f64;
    }
    let lu = lu.ok_or_else(|| Error::Singular("shift-invert factorisation failed".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut fill = |x: &mut Vec<Vec<f64>>| {
        orthonormalize(x);
        for _ in 0..4 * block {
            if x.len() == block {
                break;
            }
            let have = x.len();
            x.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
            if orthonormalize(x) < have + 1 {
                x.truncate(have);
            }
        }
    };
    let mut x: Vec<Vec<f64>> = Vec::new();
    fill(&mut x);
    let mut worst_res = f64::INFINITY;
    for _ in 0..opts.max_iter {
        // block Krylov space [X, T X, ..., T^(d-1) X] with T = (A - shift)^-1,
        // then Rayleigh-Ritz with A; restart from the best Ritz vectors
        let mut basis = Vec::with_capacity(KRYLOV_DEPTH * block);
        let mut cur = x;
        for depth in 0..KRYLOV_DEPTH {
            lu.solve_block(&mut cur)?;
            fill(&mut cur);
            if depth + 1 < KRYLOV_DEPTH {
                basis.extend(cur.iter().cloned());
            } else {
                basis.extend(cur.drain(..));
            }
        }
        orthonormalize(&mut basis);
        let ax: Vec<Vec<f64>> = basis.iter().map(|v| a.apply(v)).collect();
        let k = basis.len();
        let mut h = Mat::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = 0.5 * (dot(&basis[i], &ax[j]) + dot(&basis[j], &ax[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let (theta, y) = sym_eigen(&h)?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&p, &q| {
            (theta[p] - opts.shift).abs().total_cmp(&(theta[q] - opts.shift).abs())
        });
        let mut newx = Vec::with_capacity(block);
        let mut pairs = Vec::with_capacity(block);
        for &c in order.iter().take(block) {
            let mut v = vec![0.0; n];
            let mut av = vec![0.0; n];
            for i in 0..k {
                let w = y[(i, c)];
                v.iter_mut().zip(&basis[i]).for_each(|(s, t)| *s += w * t);
                av.iter_mut().zip(&ax[i]).for_each(|(s, t)| *s += w * t);
            }
            let r: Vec<f64> = av.iter().zip(&v).map(|(p, q)| p - theta[c] * q).collect();
            pairs.push(EigenPair { value: theta[c], residual: norm(&r), vector: v.clone() });
            newx.push(v);
        }
        x = newx;
        worst_res = pairs[..count].iter().map(|p| p.residual).fold(0.0, f64::max);

        if worst_res <= opts.tol {
            let mut pairs = pairs;
            pairs.truncate(count);
            return Ok(pairs);
        }
        fill(&mut x);
    }
    Err(Error::NumericalFailure { what: "shift-invert subspace iteration".into(), residual: worst_res })
}

/// Dense oracle: `count` eigenpairs closest to `shift`.
pub fn dense_smallest(a: &Csr, count: usize, shift: f64) -> Result<Vec<EigenPair>> {
    let m = a.to_dense();
    let m = (&m + m.transpose()) * 0.5;
    let (vals, vecs) = sym_eigen(&m)?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&p, &q| (vals[p] - shift).abs().total_cmp(&(vals[q] - shift).abs()));
    Ok(order
        .into_iter()
        .take(count)
        .map(|c| {
            let v: Vec<f64> = (0..a.n).map(|i| vecs[(i, c)]).collect();
            let av = a.apply(&v);
            let r: Vec<f64> = av.iter().zip(&v).map(|(p, q)| p - vals[c] * q).collect();
            EigenPair { value: vals[c], residual: norm(&r), vector: v }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn csr_merges_duplicates() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.asymmetry(), 4.0);
    }

    #[test]
    fn lu_solves() {
        let a = lap1d(50);
        let lu = SparseLu::new(&a).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = a.apply(&x);
        lu.solve(&mut b).unwrap();
        for (p, q) in b.iter().zip(&x) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_invert_matches_analytic() {
        let n = 600;
        let a = lap1d(n);
        let pairs = smallest_eigs(&a, 4, ShiftInvertOptions { shift: 0.5, ..Default::default() }).unwrap();
        let exact = |m: usize| 2.0 - 2.0 * (m as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
        let mut want: Vec<f64> = (1..=n).map(exact).collect();
        want.sort_by(|p, q| (p - 0.5).abs().total_cmp(&(q - 0.5).abs()));
        for (p, w) in pairs.iter().zip(&want) {
            assert!((p.value - w).abs() < 1e-9, "{} vs {}", p.value, w);
            assert!(p.residual <= 1e-8);
        }
    }

    #[test]
    fn angle_of_identical_spans_is_zero() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let b = vec![vec![1.0, 1.0, 0.0], vec![1.0, -1.0, 0.0]];
        assert!(subspace_angle(&a, &b) < 1e-7);
        let c = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!((subspace_angle(&a, &c) - std::f64::consts::FRAC_PI_2).abs() < 1e-7);
    }
}
