//! Quantum state representations: pure states, density matrices, tensor
//! bipartitions, partial trace and fidelity measures.
//!
//! Convention: in every bipartition the trash subsystem A is the leading
//! (most significant) tensor factor, so a composite index reads
//! `p * dim_b + k` with `p` indexing A and `k` indexing B.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QaeError, Result};
use crate::linalg::{hermitian_eigen, ComplexMatrix, C_ONE, C_ZERO};

const NORM_TOL: f64 = 1e-10;

/// Normalized pure state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = norm2(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QaeError::InvalidState(format!(
                "pure state norm {norm} deviates from 1 beyond {NORM_TOL}"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalize an arbitrary nonzero vector into a state.
    pub fn from_unnormalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = norm2(&amplitudes);
        if norm < 1e-12 {
            return Err(QaeError::ZeroVector);
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { amplitudes })
    }

    /// Computational basis state |index> in the given dimension.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut amplitudes = vec![C_ZERO; dim];
        amplitudes[index] = C_ONE;
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// <self|other>
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |self> (x) |other>
    pub fn tensor(&self, other: &Self) -> Self {
        let mut amplitudes = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Self { amplitudes }
    }

    /// |self><self|
    pub fn projector(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n, n);
        for p in 0..n {
            for q in 0..n {
                m[(p, q)] = self.amplitudes[p] * self.amplitudes[q].conj();
            }
        }
        m
    }

    pub fn apply(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.cols != self.dim() {
            return Err(QaeError::DimensionMismatch(format!(
                "operator is {}x{}, state has dim {}",
                u.rows,
                u.cols,
                self.dim()
            )));
        }
        Ok(Self {
            amplitudes: u.mul_vec(&self.amplitudes),
        })
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Haar-random pure state: normalized complex standard-Gaussian vector.
pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PureState {
    let amplitudes: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    PureState::from_unnormalized(amplitudes).expect("Gaussian vector is nonzero a.s.")
}

/// Hermitian, PSD, unit-trace operator.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(QaeError::DimensionMismatch(
                "density matrix must be square".into(),
            ));
        }
        if !matrix.is_hermitian(1e-9) {
            return Err(QaeError::InvalidState(
                "density matrix is not Hermitian".into(),
            ));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(QaeError::InvalidState(format!(
                "density matrix trace {tr} deviates from 1"
            )));
        }
        let es = hermitian_eigen(&matrix)?;
        if es.eigenvalues.iter().any(|&l| l < -1e-10) {
            return Err(QaeError::InvalidState(
                "density matrix has a negative eigenvalue".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self {
            matrix: psi.projector(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// U rho U^dag
    pub fn conjugated_by(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.cols != self.dim() {
            return Err(QaeError::DimensionMismatch(format!(
                "operator is {}x{}, density matrix has dim {}",
                u.rows,
                u.cols,
                self.dim()
            )));
        }
        Ok(Self {
            matrix: u.matmul(&self.matrix).matmul(&u.dagger()),
        })
    }
}

/// Tensor bipartition of a composite space; A is the leading factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bipartition {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl Bipartition {
    pub fn new(dim_a: usize, dim_b: usize) -> Self {
        assert!(dim_a >= 1 && dim_b >= 1);
        Self { dim_a, dim_b }
    }

    pub fn total(&self) -> usize {
        self.dim_a * self.dim_b
    }
}

/// Which subsystem survives a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    A,
    B,
}

/// Partial trace over the discarded subsystem.
pub fn partial_trace(rho: &DensityMatrix, part: Bipartition, keep: Keep) -> Result<DensityMatrix> {
    partial_trace_matrix(rho.matrix(), part, keep).map(|matrix| DensityMatrix { matrix })
}

/// Raw matrix variant, used internally where invariant re-validation would
/// be wasted work.
pub fn partial_trace_matrix(
    rho: &ComplexMatrix,
    part: Bipartition,
    keep: Keep,
) -> Result<ComplexMatrix> {
    let (da, db) = (part.dim_a, part.dim_b);
    if rho.rows != part.total() || rho.cols != part.total() {
        return Err(QaeError::DimensionMismatch(format!(
            "density matrix dim {} does not factor as {}x{}",
            rho.rows, da, db
        )));
    }
    match keep {
        Keep::A => {
            let mut out = ComplexMatrix::zeros(da, da);
            for p in 0..da {
                for q in 0..da {
                    let mut acc = C_ZERO;
                    for k in 0..db {
                        acc += rho[(p * db + k, q * db + k)];
                    }
                    out[(p, q)] = acc;
                }
            }
            Ok(out)
        }
        Keep::B => {
            let mut out = ComplexMatrix::zeros(db, db);
            for k in 0..db {
                for l in 0..db {
                    let mut acc = C_ZERO;
                    for p in 0..da {
                        acc += rho[(p * db + k, p * db + l)];
                    }
                    out[(k, l)] = acc;
                }
            }
            Ok(out)
        }
    }
}

/// <psi| rho |psi>, clamped to [0, 1].
pub fn fidelity_pure_mixed(psi: &PureState, rho: &DensityMatrix) -> Result<f64> {
    if psi.dim() != rho.dim() {
        return Err(QaeError::DimensionMismatch(format!(
            "state dim {} vs density matrix dim {}",
            psi.dim(),
            rho.dim()
        )));
    }
    let v = rho.matrix().mul_vec(psi.amplitudes());
    let overlap: Complex64 = psi
        .amplitudes()
        .iter()
        .zip(&v)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(overlap.re.clamp(0.0, 1.0))
}

/// Principal square root of a PSD Hermitian matrix. Roundoff-negative
/// eigenvalues in [-1e-10, 0) are clamped to 0.
fn sqrtm_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let es = hermitian_eigen(m)?;
    let n = m.rows;
    let mut scaled = es.eigenvectors.clone();
    for (col, &lam) in es.eigenvalues.iter().enumerate() {
        let root = lam.max(0.0).sqrt();
        for p in 0..n {
            scaled[(p, col)] *= root;
        }
    }
    Ok(scaled.matmul(&es.eigenvectors.dagger()))
}

/// Uhlmann fidelity F(a, b) = [Tr sqrt(sqrt(a) b sqrt(a))]^2.
pub fn fidelity_mixed(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(QaeError::DimensionMismatch(format!(
            "density matrix dims {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let sa = sqrtm_psd(a.matrix())?;
    let inner = sa.matmul(b.matrix()).matmul(&sa);
    let es = hermitian_eigen_lenient(&inner)?;
    // roundoff eigenvalues near 0 would contribute sqrt(eps) each; cut them
    let floor = es.iter().cloned().fold(0.0, f64::max) * 1e-13;
    let tr: f64 = es.iter().filter(|&&l| l > floor).map(|&l| l.sqrt()).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

// sqrt(a) b sqrt(a) is Hermitian up to roundoff that can slightly exceed the
// default tolerance after three matrix products; widen it.
fn hermitian_eigen_lenient(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let es = crate::linalg::hermitian_eigen_tol(m, 1e-7)?;
    Ok(es.eigenvalues)
}

/// Weighted ensemble of pure states {p_i, |psi_i>}.
#[derive(Debug, Clone)]
pub struct StateEnsemble {
    states: Vec<PureState>,
    weights: Vec<f64>,
}

impl StateEnsemble {
    pub fn new(states: Vec<PureState>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(QaeError::InvalidState(
                "ensemble needs matching nonempty states and weights".into(),
            ));
        }
        let dim = states[0].dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(QaeError::DimensionMismatch(
                "ensemble states must share one dimension".into(),
            ));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(QaeError::InvalidState("negative ensemble weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(QaeError::InvalidState(format!(
                "ensemble weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { states, weights })
    }

    /// Equal-weight ensemble.
    pub fn uniform(states: Vec<PureState>) -> Result<Self> {
        let q = states.len();
        Self::new(states, vec![1.0 / q as f64; q])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn states(&self) -> &[PureState] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// rho = sum_i p_i |psi_i><psi_i|
pub fn ensemble_density(e: &StateEnsemble) -> Result<DensityMatrix> {
    let n = e.dim();
    let mut m = ComplexMatrix::zeros(n, n);
    for (psi, &w) in e.states().iter().zip(e.weights()) {
        let wc = Complex64::new(w, 0.0);
        for p in 0..n {
            for q in 0..n {
                m[(p, q)] += wc * psi.amplitudes()[p] * psi.amplitudes()[q].conj();
            }
        }
    }
    DensityMatrix::new(m)
}

/// Number of singular values of the column-stacked matrix above `tol`
/// relative to the largest singular value (the paper's SpanF).
pub fn span_rank(states: &[PureState], tol: f64) -> Result<usize> {
    if states.is_empty() {
        return Err(QaeError::InvalidState("empty state list".into()));
    }
    let dim = states[0].dim();
    if states.iter().any(|s| s.dim() != dim) {
        return Err(QaeError::DimensionMismatch(
            "span_rank states must share one dimension".into(),
        ));
    }
    let v = nalgebra::DMatrix::from_fn(dim, states.len(), |p, q| states[q].amplitudes()[p]);
    let svs = v.singular_values();
    let max = svs.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(0);
    }
    Ok(svs.iter().filter(|&&s| s > tol * max).count())
}

/// Default relative tolerance for `span_rank`.
pub const SPAN_RANK_TOL: f64 = 1e-8;

/// Haar-random unitary: QR of a complex Gaussian matrix with the R diagonal
/// phase absorbed into Q.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = nalgebra::DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = ComplexMatrix::zeros(dim, dim);
    for col in 0..dim {
        let d = r[(col, col)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C_ONE };
        for row in 0..dim {
            out[(row, col)] = q[(row, col)] * phase;
        }
    }
    out
}

/// Random orthonormal set via Gram-Schmidt over Haar-random vectors.
pub fn random_orthonormal_states<R: Rng + ?Sized>(
    dim: usize,
    count: usize,
    rng: &mut R,
) -> Vec<PureState> {
    assert!(count <= dim, "cannot fit {count} orthonormal vectors in dim {dim}");
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    while basis.len() < count {
        let mut v = random_pure_state(dim, rng).amplitudes().to_vec();
        for b in &basis {
            let ov: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= ov * bi;
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|c| *c /= norm);
        basis.push(v);
    }
    basis
        .into_iter()
        .map(|v| PureState::new(v).unwrap())
        .collect()
}
