//! Affine-invariant geometry on symmetric positive-definite matrices.
//!
//! Matrix functions go through the spectral decomposition: for symmetric
//! `m = V·diag(λ)·Vᵀ`, `f(m) = V·diag(f(λ))·Vᵀ`. On top of that sit the
//! geodesic distance `δ(a, b) = ‖log(a^{-1/2}·b·a^{-1/2})‖_F`, the Karcher
//! (Fréchet) mean under that metric and the tangent-space map at a base point.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SymEigen};

/// Absolute symmetry tolerance accepted on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Square, finite, symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(Matrix);

impl SymmetricMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimMismatch { expected: m.rows(), found: m.cols() });
        }
        let asym = m.asymmetry();
        if !m.is_finite() || asym > SYMMETRY_TOL {
            return Err(Error::InvalidMatrix { asymmetry: asym });
        }
        Ok(Self(m))
    }

    /// Symmetric part `(m + mᵀ)/2`, exact on the diagonal.
    pub fn symmetrize(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimMismatch { expected: m.rows(), found: m.cols() });
        }
        let n = m.rows();
        let s = Matrix::from_fn(n, n, |i, j| if i == j { m[(i, i)] } else { 0.5 * (m[(i, j)] + m[(j, i)]) });
        Self::new(s)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diag(diag))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn eig(&self) -> Result<SymEigen> {
        linalg::sym_eig_unchecked(&self.0)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::sym_eigvals_unchecked(&self.0)
    }

    /// Spectral calculus `V·diag(f(λ))·Vᵀ`.
    pub fn apply(&self, f: MatrixFunction) -> Result<SymmetricMatrix> {
        let eig = self.eig()?;
        apply_to_eigen(&eig, f)
    }

    /// Matrix exponential; defined for every symmetric matrix.
    pub fn exp(&self) -> Result<SpdMatrix> {
        let eig = self.eig()?;
        Ok(SpdMatrix(eig.reconstruct_with(libm::exp)))
    }
}

/// Symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    /// Validates positive definiteness with a Cholesky factorization.
    pub fn new(m: SymmetricMatrix) -> Result<Self> {
        if cholesky_ok(m.matrix()) {
            return Ok(Self(m.0));
        }
        let min_eigenvalue = m.eigenvalues().ok().and_then(|v| v.first().copied()).unwrap_or(f64::NAN);
        Err(Error::NotPositiveDefinite { min_eigenvalue })
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        Self::new(SymmetricMatrix::new(m)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(SymmetricMatrix::from_diag(diag)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn as_symmetric(&self) -> SymmetricMatrix {
        SymmetricMatrix(self.0.clone())
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn eig(&self) -> Result<SymEigen> {
        linalg::sym_eig_unchecked(&self.0)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::sym_eigvals_unchecked(&self.0)
    }

    pub fn apply(&self, f: MatrixFunction) -> Result<SymmetricMatrix> {
        apply_to_eigen(&self.eig()?, f)
    }

    pub fn log(&self) -> Result<SymmetricMatrix> {
        self.apply(MatrixFunction::Log)
    }

    pub fn sqrt(&self) -> Result<SpdMatrix> {
        Ok(SpdMatrix(self.apply(MatrixFunction::Sqrt)?.0))
    }

    pub fn inv_sqrt(&self) -> Result<SpdMatrix> {
        Ok(SpdMatrix(self.apply(MatrixFunction::InvSqrt)?.0))
    }

    /// `Wᵀ·self·W`, which stays SPD for invertible `W`.
    pub fn congruence(&self, w: &Matrix) -> Result<SpdMatrix> {
        let inner = w.transpose().matmul(&self.0)?.matmul(w)?;
        SpdMatrix::new(SymmetricMatrix::symmetrize(&inner)?)
    }
}

/// Scalar functions admissible in [`SymmetricMatrix::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFunction {
    Log,
    Exp,
    Sqrt,
    InvSqrt,
}

impl MatrixFunction {
    fn needs_positive(self) -> bool {
        !matches!(self, MatrixFunction::Exp)
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            MatrixFunction::Log => libm::log(x),
            MatrixFunction::Exp => libm::exp(x),
            MatrixFunction::Sqrt => libm::sqrt(x),
            MatrixFunction::InvSqrt => 1.0 / libm::sqrt(x),
        }
    }
}

fn apply_to_eigen(eig: &SymEigen, f: MatrixFunction) -> Result<SymmetricMatrix> {
    if f.needs_positive() {
        if let Some(&min) = eig.values.first() {
            if !(min > 0.0) {
                return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
            }
        }
    }
    Ok(SymmetricMatrix(eig.reconstruct_with(|x| f.eval(x))))
}

fn cholesky_ok(m: &Matrix) -> bool {
    let n = m.rows();
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = libm::sqrt(diag);
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let s = m[(i, j)] - linalg::dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = s / ljj;
        }
    }
    true
}

/// `s·c·s` for symmetric `s` and `c`, symmetric by construction.
fn sandwich(s: &Matrix, c: &Matrix) -> Matrix {
    let n = s.rows();
    let sc = s.matmul(c).expect("square operands of equal size");
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let row = sc.row(i);
        for j in i..n {
            // (s·c·s)_ij = Σ_k (s·c)_ik · s_jk since s is symmetric.
            let v = linalg::dot(row, s.row(j));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected: a, found: b })
    }
}

/// Affine-invariant geodesic distance `‖log(a^{-1/2}·b·a^{-1/2})‖_F`.
pub fn airm_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let isq = a.inv_sqrt()?;
    let inner = sandwich(isq.matrix(), b.matrix());
    let vals = linalg::sym_eigvals_unchecked(&inner)?;
    let mut acc = 0.0;
    for v in vals {
        if !(v > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: v });
        }
        let l = libm::log(v);
        acc += l * l;
    }
    Ok(libm::sqrt(acc))
}

/// Step length applied to the mean tangent residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KarcherStep {
    Fixed(f64),
    /// Unit steps until the contraction ratio is observed, then the step
    /// `2/(2 + r)` that balances overshoot against undershoot, halved
    /// whenever the residual grows.
    Tuned,
}

/// Stopping rule and step for [`geometric_mean`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KarcherOptions {
    /// Frobenius norm bound on the mean tangent residual.
    pub tol: f64,
    pub max_iter: usize,
    pub step: KarcherStep,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50, step: KarcherStep::Tuned }
    }
}

/// Unit steps taken before the contraction ratio is trusted.
const WARMUP_STEPS: usize = 3;

// With unit steps the residual contracts by r = h_max - 1, where h_max is
// the largest curvature of the mean objective (at least 1 on this
// manifold). The step 2/(1 + h_max) = 2/(2 + r) minimizes the worst-case
// contraction over curvatures in [1, h_max].
fn step_size(rule: KarcherStep, iter: usize, prev: &mut f64, residual: f64, tuned: &mut f64) -> f64 {
    if let KarcherStep::Fixed(a) = rule {
        return a;
    }
    let ratio = residual / *prev;
    *prev = residual;
    if iter < WARMUP_STEPS {
        return 1.0;
    }
    if iter == WARMUP_STEPS {
        *tuned = 2.0 / (2.0 + ratio.clamp(0.0, 1.0));
    } else if ratio > 1.0 {
        *tuned *= 0.5;
    }
    *tuned
}

/// Result of the Karcher iteration, including the logarithms of every
/// input at the returned mean.
#[derive(Debug, Clone)]
pub struct KarcherMean {
    pub mean: SpdMatrix,
    pub iterations: usize,
    pub residual: f64,
    /// `log(G^{-1/2}·C_i·G^{-1/2})` for each input, at the returned `G`.
    pub logs: Vec<SymmetricMatrix>,
}

/// Affine-invariant Karcher mean by fixed-point iteration from the
/// arithmetic mean.
pub fn geometric_mean(set: &[SpdMatrix], opts: KarcherOptions) -> Result<SpdMatrix> {
    Ok(karcher_mean(set, opts)?.mean)
}

/// Full Karcher iteration with diagnostics.
///
/// `G_{k+1} = G_k^{1/2}·exp(mean_i log(G_k^{-1/2}·C_i·G_k^{-1/2}))·G_k^{1/2}`.
/// Every elementwise mean sorts its summands first, so the result depends
/// only on the multiset of inputs and never on their order.
pub fn karcher_mean(set: &[SpdMatrix], opts: KarcherOptions) -> Result<KarcherMean> {
    let first = set.first().ok_or(Error::EmptyInput)?;
    let n = first.dim();
    for c in set {
        check_dims(n, c.dim())?;
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InsufficientData("Karcher tolerance must be positive"));
    }

    let mats: Vec<&Matrix> = set.iter().map(|c| c.matrix()).collect();
    let mut g = elementwise_mean(&mats);
    let mut residual = f64::INFINITY;
    let mut prev_residual = f64::INFINITY;
    let mut tuned = 1.0;
    for iter in 0..=opts.max_iter {
        let eig = linalg::sym_eig_unchecked(&g)?;
        if !(eig.values[0] > 0.0) {
            return Err(Error::NumericalFailure("Karcher iterate lost positive definiteness"));
        }
        let isq = eig.reconstruct_with(|x| 1.0 / libm::sqrt(x));
        let mut logs = Vec::with_capacity(set.len());
        for c in &mats {
            let inner = sandwich(&isq, c);
            let e = linalg::sym_eig_unchecked(&inner)?;
            if !(e.values[0] > 0.0) {
                return Err(Error::NotPositiveDefinite { min_eigenvalue: e.values[0] });
            }
            logs.push(e.reconstruct_with(libm::log));
        }
        let log_refs: Vec<&Matrix> = logs.iter().collect();
        let step = elementwise_mean(&log_refs);
        residual = step.frobenius_norm();
        if !residual.is_finite() {
            return Err(Error::NumericalFailure("non-finite Karcher residual"));
        }
        if residual <= opts.tol {
            return Ok(KarcherMean {
                mean: SpdMatrix(g),
                iterations: iter,
                residual,
                logs: logs.into_iter().map(SymmetricMatrix).collect(),
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let sq = eig.reconstruct_with(libm::sqrt);
        let alpha = step_size(opts.step, iter, &mut prev_residual, residual, &mut tuned);
        let exp_step = linalg::sym_eig_unchecked(&step)?.reconstruct_with(|x| libm::exp(alpha * x));
        g = sandwich(&sq, &exp_step);
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}

/// Mean of each upper-triangular entry, mirrored; summand order is canonical.
fn elementwise_mean(mats: &[&Matrix]) -> Matrix {
    let n = mats[0].rows();
    let count = mats.len() as f64;
    let mut out = Matrix::zeros(n, n);
    let mut buf = vec![0.0f64; mats.len()];
    for i in 0..n {
        for j in i..n {
            for (b, m) in buf.iter_mut().zip(mats) {
                *b = m[(i, j)];
            }
            let v = linalg::canonical_sum(&mut buf) / count;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Upper-triangle vectorization with off-diagonals weighted by √2, so the
/// Euclidean norm of the vector equals the Frobenius norm of the matrix.
pub fn vectorize_upper(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        v.push(m[(i, i)]);
        for j in i + 1..n {
            v.push(core::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    v
}

/// Inverse of [`vectorize_upper`].
pub fn unvectorize_upper(v: &[f64], n: usize) -> Result<SymmetricMatrix> {
    check_dims(n * (n + 1) / 2, v.len())?;
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = v[k];
        k += 1;
        for j in i + 1..n {
            let x = v[k] / core::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    SymmetricMatrix::new(m)
}

/// A tangent vector at `reference`, vectorized per [`vectorize_upper`].
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub dim_ambient: usize,
    pub values: Vec<f64>,
    pub reference: Arc<SpdMatrix>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        libm::sqrt(linalg::dot(&self.values, &self.values))
    }
}

/// Tangent space at a fixed base point, with `base^{-1/2}` cached.
#[derive(Debug, Clone)]
pub struct TangentSpace {
    base: Arc<SpdMatrix>,
    inv_sqrt: Matrix,
}

impl TangentSpace {
    pub fn new(base: SpdMatrix) -> Result<Self> {
        let inv_sqrt = base.inv_sqrt()?.into_matrix();
        Ok(Self { base: Arc::new(base), inv_sqrt })
    }

    pub fn base(&self) -> &SpdMatrix {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `log(base^{-1/2}·c·base^{-1/2})` as a symmetric matrix.
    pub fn log_map(&self, c: &SpdMatrix) -> Result<SymmetricMatrix> {
        check_dims(self.dim(), c.dim())?;
        let inner = sandwich(&self.inv_sqrt, c.matrix());
        let eig = linalg::sym_eig_unchecked(&inner)?;
        apply_to_eigen(&eig, MatrixFunction::Log)
    }

    pub fn project(&self, c: &SpdMatrix) -> Result<TangentVector> {
        let log = self.log_map(c)?;
        Ok(self.wrap(log.matrix()))
    }

    /// Vectorizes an already computed logarithm at this base point.
    pub fn wrap(&self, log: &Matrix) -> TangentVector {
        TangentVector { dim_ambient: self.dim(), values: vectorize_upper(log), reference: Arc::clone(&self.base) }
    }

    /// Inverse map: `base^{1/2}·exp(unvec(v))·base^{1/2}`.
    pub fn exp_map(&self, v: &TangentVector) -> Result<SpdMatrix> {
        let s = unvectorize_upper(&v.values, self.dim())?;
        let e = s.exp()?;
        let sq = self.base.sqrt()?;
        SpdMatrix::new(SymmetricMatrix::new(sandwich(sq.matrix(), e.matrix()))?)
    }
}

/// One-shot tangent projection of `c` at `base`.
pub fn tangent_project(c: &SpdMatrix, base: &SpdMatrix) -> Result<TangentVector> {
    check_dims(base.dim(), c.dim())?;
    TangentSpace::new(base.clone())?.project(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
        let a = Matrix::from_fn(n, n + 3, |_, _| rng.random::<f64>() - 0.5);
        let mut g = a.gram();
        for i in 0..n {
            g[(i, i)] += 0.1;
        }
        SpdMatrix::from_matrix(g).unwrap()
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.1, 1.0]]).unwrap();
        assert!(matches!(SymmetricMatrix::new(m), Err(Error::InvalidMatrix { .. })));
    }

    #[test]
    fn rejects_indefinite() {
        let err = SpdMatrix::from_diag(&[1.0, -2.0]).unwrap_err();
        match err {
            Error::NotPositiveDefinite { min_eigenvalue } => {
                assert!((min_eigenvalue + 2.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = SpdMatrix::identity(4).log().unwrap();
        assert_eq!(l.matrix().max_abs(), 0.0);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = SpdMatrix::from_diag(&[4.0, 9.0]).unwrap().sqrt().unwrap();
        let want = Matrix::from_diag(&[2.0, 3.0]);
        assert!(s.matrix().sub(&want).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn log_rejects_nonpositive_spectrum() {
        let s = SymmetricMatrix::from_diag(&[1.0, 0.0]).unwrap();
        assert!(matches!(s.apply(MatrixFunction::Log), Err(Error::NotPositiveDefinite { .. })));
        assert!(s.apply(MatrixFunction::Exp).is_ok());
    }

    #[test]
    fn exp_log_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &n in &[2usize, 6, 30] {
            let c = random_spd(n, &mut rng);
            let back = c.log().unwrap().exp().unwrap();
            assert!(rel_err(back.matrix(), c.matrix()) < 1e-9);
            let sq = c.sqrt().unwrap();
            let sq2 = sq.matrix().matmul(sq.matrix()).unwrap();
            assert!(rel_err(&sq2, c.matrix()) < 1e-9);
        }
    }

    #[test]
    fn distance_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_spd(5, &mut rng);
        assert!(airm_distance(&c, &c).unwrap() < 1e-12);
        let mut diag = vec![1.0; 4];
        diag[0] = core::f64::consts::E;
        let e = SpdMatrix::from_diag(&diag).unwrap();
        let d = airm_distance(&SpdMatrix::identity(4), &e).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        assert!(matches!(airm_distance(&c, &SpdMatrix::identity(4)), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn mean_of_singleton_and_replicas() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(4, &mut rng);
        let g1 = geometric_mean(core::slice::from_ref(&a), KarcherOptions::default()).unwrap();
        assert!(rel_err(g1.matrix(), a.matrix()) < 1e-12);
        let g3 = geometric_mean(&[a.clone(), a.clone(), a.clone()], KarcherOptions::default()).unwrap();
        assert!(rel_err(g3.matrix(), a.matrix()) < 1e-12);
    }

    #[test]
    fn mean_errors() {
        assert_eq!(geometric_mean(&[], KarcherOptions::default()).unwrap_err(), Error::EmptyInput);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set: Vec<SpdMatrix> = (0..5).map(|_| random_spd(6, &mut rng)).collect();
        let err = karcher_mean(&set, KarcherOptions { tol: 1e-14, max_iter: 1, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }));
    }

    #[test]
    fn step_rules_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let set: Vec<SpdMatrix> = (0..12).map(|_| random_spd(6, &mut rng)).collect();
        let unit = karcher_mean(&set, KarcherOptions { step: KarcherStep::Fixed(1.0), max_iter: 200, ..Default::default() }).unwrap();
        let tuned = karcher_mean(&set, KarcherOptions::default()).unwrap();
        assert!(tuned.iterations <= unit.iterations);
        assert!(airm_distance(&unit.mean, &tuned.mean).unwrap() < 1e-7);
    }

    #[test]
    fn projection_zero_at_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_spd(5, &mut rng);
        let v = tangent_project(&g, &g).unwrap();
        assert_eq!(v.values.len(), 15);
        assert!(v.values.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn exp_map_inverts_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_spd(4, &mut rng);
        let c = random_spd(4, &mut rng);
        let ts = TangentSpace::new(g).unwrap();
        let back = ts.exp_map(&ts.project(&c).unwrap()).unwrap();
        assert!(rel_err(back.matrix(), c.matrix()) < 1e-10);
    }

    #[test]
    fn vectorization_roundtrip() {
        let m = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]).unwrap();
        let v = vectorize_upper(&m);
        assert_eq!(v.len(), 6);
        assert!((linalg::dot(&v, &v).sqrt() - m.frobenius_norm()).abs() < 1e-12);
        let back = unvectorize_upper(&v, 3).unwrap();
        assert!(back.matrix().sub(&m).unwrap().max_abs() < 1e-14);
    }
}
