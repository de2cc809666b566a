//! Autoencoder objectives, the eigenvalue compression bound, the analytical
//! optimal encoder and the perfect-compression criterion.

use num_complex::Complex64;

use crate::error::{QaeError, Result};
use crate::linalg::{hermitian_eigen, kron, ComplexMatrix, C_ONE};
use crate::state::{
    ensemble_density, fidelity_pure_mixed, partial_trace_matrix, Bipartition, DensityMatrix,
    Keep, PureState, StateEnsemble, span_rank, SPAN_RANK_TOL,
};

/// Problem data: input ensemble, trash/latent split and reference state.
#[derive(Debug, Clone)]
pub struct AutoencoderTask {
    pub ensemble: StateEnsemble,
    pub partition: Bipartition,
    pub reference: PureState,
}

impl AutoencoderTask {
    pub fn new(
        ensemble: StateEnsemble,
        partition: Bipartition,
        reference: PureState,
    ) -> Result<Self> {
        if ensemble.dim() != partition.total() {
            return Err(QaeError::DimensionMismatch(format!(
                "ensemble dim {} vs partition total {}",
                ensemble.dim(),
                partition.total()
            )));
        }
        if reference.dim() != partition.dim_a {
            return Err(QaeError::DimensionMismatch(format!(
                "reference dim {} vs trash dim {}",
                reference.dim(),
                partition.dim_a
            )));
        }
        Ok(Self {
            ensemble,
            partition,
            reference,
        })
    }

    /// Task with the default |0...0> reference on the trash subsystem.
    pub fn with_default_reference(ensemble: StateEnsemble, partition: Bipartition) -> Result<Self> {
        let reference = PureState::basis_state(partition.dim_a, 0);
        Self::new(ensemble, partition, reference)
    }
}

/// Sorted spectrum of the ensemble density operator and the top-N_B partial
/// sum: the theoretical ceiling of the compression rate.
#[derive(Debug, Clone)]
pub struct CompressionBound {
    /// Eigenvalues of rho, descending.
    pub spectrum: Vec<f64>,
    /// Sum of the first N_B eigenvalues.
    pub bound: f64,
}

/// Top-N_B eigenvalue sum of the ensemble density operator. Never reads the
/// reference state.
pub fn compression_bound(task: &AutoencoderTask) -> Result<CompressionBound> {
    let rho = ensemble_density(&task.ensemble)?;
    let es = hermitian_eigen(rho.matrix())?;
    let bound = es.eigenvalues[..task.partition.dim_b].iter().sum();
    Ok(CompressionBound {
        spectrum: es.eigenvalues,
        bound,
    })
}

fn check_unitary(u: &ComplexMatrix, dim: usize) -> Result<()> {
    if u.rows != dim || u.cols != dim {
        return Err(QaeError::DimensionMismatch(format!(
            "encoder is {}x{}, task dim {}",
            u.rows, u.cols, dim
        )));
    }
    if !u.is_unitary(1e-8) {
        let residual = u
            .dagger()
            .matmul(u)
            .sub(&ComplexMatrix::identity(dim))
            .frobenius_norm();
        return Err(QaeError::NotUnitary {
            residual,
            tol: 1e-8,
        });
    }
    Ok(())
}

/// Ensemble compression rate <ref| Tr_B(U rho U^dag) |ref>, computed on the
/// density-operator route.
pub fn objective_j2(task: &AutoencoderTask, u: &ComplexMatrix) -> Result<f64> {
    check_unitary(u, task.partition.total())?;
    let rho = ensemble_density(&task.ensemble)?;
    let rho_t = u.matmul(rho.matrix()).matmul(&u.dagger());
    let trash = partial_trace_matrix(&rho_t, task.partition, Keep::A)?;
    let trash = DensityMatrix::new(trash)?;
    fidelity_pure_mixed(&task.reference, &trash)
}

/// Same objective on the per-state route: sum_i p_i J(U, psi_i). The two
/// routes agree to roundoff; this one is cheap enough for training loops.
pub fn objective_j2_per_state(task: &AutoencoderTask, u: &ComplexMatrix) -> Result<f64> {
    check_unitary(u, task.partition.total())?;
    let mut total = 0.0;
    for (psi, &w) in task.ensemble.states().iter().zip(task.ensemble.weights()) {
        total += w * single_state_j2_unchecked(u, psi, task.partition, &task.reference);
    }
    Ok(total)
}

/// J(U, psi) for one input state (Eq. 7 route); no unitarity re-check.
pub(crate) fn single_state_j2_unchecked(
    u: &ComplexMatrix,
    psi: &PureState,
    part: Bipartition,
    reference: &PureState,
) -> f64 {
    let v = u.mul_vec(psi.amplitudes());
    let (da, db) = (part.dim_a, part.dim_b);
    let refa = reference.amplitudes();
    // <ref| Tr_B(|v><v|) |ref> = sum_k |sum_p conj(ref_p) v_{p*db+k}|^2
    let mut total = 0.0;
    for k in 0..db {
        let mut amp = Complex64::new(0.0, 0.0);
        for p in 0..da {
            amp += refa[p].conj() * v[p * db + k];
        }
        total += amp.norm_sqr();
    }
    total.clamp(0.0, 1.0)
}

/// Recovery fidelity J1 for one input state:
/// <psi0| U^dag (rho_ref (x) Tr_A(U rho0 U^dag)) U |psi0>.
pub fn objective_j1(task: &AutoencoderTask, u: &ComplexMatrix, state_index: usize) -> Result<f64> {
    check_unitary(u, task.partition.total())?;
    let psi = &task.ensemble.states()[state_index];
    let v = u.mul_vec(psi.amplitudes());
    let n = task.partition.total();
    let mut vv = ComplexMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            vv[(p, q)] = v[p] * v[q].conj();
        }
    }
    let latent = partial_trace_matrix(&vv, task.partition, Keep::B)?;
    let sigma = kron(&task.reference.projector(), &latent);
    let sv = sigma.mul_vec(&v);
    let overlap: Complex64 = v.iter().zip(&sv).map(|(a, b)| a.conj() * b).sum();
    Ok(overlap.re.clamp(0.0, 1.0))
}

/// Weighted average of the per-state recovery fidelities.
pub fn objective_j1_mean(task: &AutoencoderTask, u: &ComplexMatrix) -> Result<f64> {
    let mut total = 0.0;
    for (i, &w) in task.ensemble.weights().iter().enumerate() {
        total += w * objective_j1(task, u, i)?;
    }
    Ok(total)
}

/// Complex Householder transfer: unitary H with H|x> = |y>. Returns the
/// identity when x and y coincide up to a negligible difference.
pub fn householder_transfer(x: &PureState, y: &PureState) -> Result<ComplexMatrix> {
    if x.dim() != y.dim() {
        return Err(QaeError::DimensionMismatch(format!(
            "transfer endpoints have dims {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let n = x.dim();
    let denom = C_ONE - y.inner(x);
    if denom.norm() < 1e-12 {
        return Ok(ComplexMatrix::identity(n));
    }
    let d: Vec<Complex64> = x
        .amplitudes()
        .iter()
        .zip(y.amplitudes())
        .map(|(a, b)| a - b)
        .collect();
    let mut h = ComplexMatrix::identity(n);
    let inv = C_ONE / denom;
    for p in 0..n {
        for q in 0..n {
            h[(p, q)] -= inv * d[p] * d[q].conj();
        }
    }
    Ok(h)
}

/// Multi-step transfer through intermediate points z_1..z_M; the overall
/// unitary is the product of the single-step transfers. Equivalent to the
/// direct transfer from the first to the last point for any choice of
/// intermediate states.
pub fn householder_chain(points: &[PureState]) -> Result<ComplexMatrix> {
    if points.len() < 2 {
        return Err(QaeError::InvalidState(
            "chain needs at least two points".into(),
        ));
    }
    let mut u = ComplexMatrix::identity(points[0].dim());
    for pair in points.windows(2) {
        u = householder_transfer(&pair[0], &pair[1])?.matmul(&u);
    }
    Ok(u)
}

/// Analytically optimal encoder: U = (U_A^dag (x) I_B) W, where W
/// diagonalizes rho with descending eigenvalues and U_A is the Householder
/// transfer taking the reference to the first trash basis vector. The free
/// block unitaries of the general solution are fixed to the identity.
pub fn optimal_unitary(task: &AutoencoderTask) -> Result<ComplexMatrix> {
    let rho = ensemble_density(&task.ensemble)?;
    let es = hermitian_eigen(rho.matrix())?;
    // W rho W^dag = Diag(lambda_1..lambda_N) with W = V^dag
    let w = es.eigenvectors.dagger();
    let e0 = PureState::basis_state(task.partition.dim_a, 0);
    let ua = householder_transfer(&task.reference, &e0)?;
    let lift = kron(&ua.dagger(), &ComplexMatrix::identity(task.partition.dim_b));
    Ok(lift.matmul(&w))
}

/// Theorem 2 criterion: perfect compression is possible iff the input states
/// span at most dim(latent) directions.
pub fn perfect_compression_possible(task: &AutoencoderTask) -> Result<bool> {
    let rank = span_rank(task.ensemble.states(), SPAN_RANK_TOL)?;
    Ok(rank <= task.partition.dim_b)
}

/// Per-state compression rate of the normalized linear combination
/// sum_i c_i |psi_i> under the same encoder.
pub fn linear_combination_property_check(
    task: &AutoencoderTask,
    u: &ComplexMatrix,
    coeffs: &[Complex64],
) -> Result<f64> {
    if coeffs.len() != task.ensemble.len() {
        return Err(QaeError::DimensionMismatch(format!(
            "{} coefficients for {} states",
            coeffs.len(),
            task.ensemble.len()
        )));
    }
    check_unitary(u, task.partition.total())?;
    let n = task.ensemble.dim();
    let mut combined = vec![Complex64::new(0.0, 0.0); n];
    for (psi, &c) in task.ensemble.states().iter().zip(coeffs) {
        for (acc, &a) in combined.iter_mut().zip(psi.amplitudes()) {
            *acc += c * a;
        }
    }
    let combined = PureState::from_unnormalized(combined)?;
    Ok(single_state_j2_unchecked(
        u,
        &combined,
        task.partition,
        &task.reference,
    ))
}
