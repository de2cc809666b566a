//! Dense complex linear algebra: matrix arithmetic, Hermitian
//! eigen-decomposition, spectral matrix exponential and Kronecker products.
//!
//! All matrices are small (N <= 16), so everything is dense row-major
//! storage with no attempt at sparsity.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QaeError, Result};

/// Default Frobenius tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-9;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must be rows*cols");
        Self { rows, cols, entries }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![C_ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C_ONE;
        }
        m
    }

    /// Build from a real row-major array.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        Self::new(
            rows,
            cols,
            entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for p in 0..self.rows {
            for q in 0..self.cols {
                out[(q, p)] = self[(p, q)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|&e| e * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// In-place axpy: self += c * other.
    pub fn axpy(&mut self, c: Complex64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a += c * b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul dimension mismatch {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for p in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(p, k)];
                if a == C_ZERO {
                    continue;
                }
                for q in 0..other.cols {
                    out[(p, q)] += a * other[(k, q)];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![C_ZERO; self.rows];
        for p in 0..self.rows {
            let mut acc = C_ZERO;
            for q in 0..self.cols {
                acc += self[(p, q)] * v[q];
            }
            out[p] = acc;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ||A - A^dag||_F <= tol
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.sub(&self.dagger()).frobenius_norm() <= tol
    }

    /// ||A^dag A - I||_F <= tol
    pub fn is_unitary(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        self.dagger()
            .matmul(self)
            .sub(&Self::identity(self.rows))
            .frobenius_norm()
            <= tol
    }

    /// (A + A^dag)/2
    pub fn symmetrized(&self) -> Self {
        self.add(&self.dagger()).scale(Complex64::new(0.5, 0.0))
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |p, q| self[(p, q)])
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (p, q): (usize, usize)) -> &Complex64 {
        &self.entries[p * self.cols + q]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (p, q): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[p * self.cols + q]
    }
}

/// Kronecker (tensor) product.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for p in 0..a.rows {
        for q in 0..a.cols {
            let apq = a[(p, q)];
            if apq == C_ZERO {
                continue;
            }
            for r in 0..b.rows {
                for s in 0..b.cols {
                    out[(p * b.rows + r, q * b.cols + s)] = apq * b[(r, s)];
                }
            }
        }
    }
    out
}

/// Kronecker product of a sequence of matrices, left to right.
pub fn kron_all(ms: &[&ComplexMatrix]) -> ComplexMatrix {
    let mut out = ms[0].clone();
    for m in &ms[1..] {
        out = kron(&out, m);
    }
    out
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(
        2,
        2,
        vec![
            C_ZERO,
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            C_ZERO,
        ],
    )
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Real eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors, aligned with `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// Column `i` of the eigenvector matrix.
    pub fn eigenvector(&self, i: usize) -> Vec<Complex64> {
        (0..self.eigenvectors.rows)
            .map(|p| self.eigenvectors[(p, i)])
            .collect()
    }
}

/// Decompose a Hermitian matrix. The input is symmetrized as (A+A^dag)/2
/// before decomposition; inputs outside the Hermiticity tolerance are
/// rejected.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<EigenDecomposition> {
    hermitian_eigen_tol(a, HERMITICITY_TOL)
}

pub fn hermitian_eigen_tol(a: &ComplexMatrix, tol: f64) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(QaeError::DimensionMismatch(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let residual = a.sub(&a.dagger()).frobenius_norm();
    if residual > tol {
        return Err(QaeError::NotHermitian { residual, tol });
    }
    let sym = a.symmetrized();
    let es = nalgebra::SymmetricEigen::try_new(sym.to_nalgebra(), f64::EPSILON, 0)
        .ok_or(QaeError::NoConvergence)?;
    let n = a.rows;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| es.eigenvalues[j].partial_cmp(&es.eigenvalues[i]).unwrap());
    let mut vecs = ComplexMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (col, &i) in idx.iter().enumerate() {
        vals.push(es.eigenvalues[i]);
        for p in 0..n {
            vecs[(p, col)] = es.eigenvectors[(p, i)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues: vals,
        eigenvectors: vecs,
    })
}

/// exp(-i * h * t) for Hermitian `h`, via spectral decomposition.
/// Exact for Hermitian generators and always unitary.
pub fn expm_skew_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let es = hermitian_eigen(h)?;
    Ok(expm_from_eigen(&es, t))
}

/// exp(-i * t * H) given a precomputed decomposition of H.
pub fn expm_from_eigen(es: &EigenDecomposition, t: f64) -> ComplexMatrix {
    let n = es.eigenvectors.rows;
    // V * diag(e^{-i lambda t}) * V^dag
    let mut scaled = es.eigenvectors.clone();
    for (col, &lam) in es.eigenvalues.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -lam * t);
        for p in 0..n {
            scaled[(p, col)] *= phase;
        }
    }
    scaled.matmul(&es.eigenvectors.dagger())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx_eq(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        a.sub(b).frobenius_norm() <= tol
    }

    #[test]
    fn kron_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert!(approx_eq(&kron(&i2, &i2), &ComplexMatrix::identity(4), 0.0));
    }

    #[test]
    fn kron_diagonal_pauli_z() {
        let zz = kron(&pauli_z(), &pauli_z());
        let expected = ComplexMatrix::from_real(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        assert!(approx_eq(&zz, &expected, 0.0));
    }

    #[test]
    fn kron_xx_flips_basis_state() {
        // Hand-multiplied: sigma_x (x) sigma_x is anti-diagonal ones, so it
        // maps e_0 to e_3.
        let xx = kron(&pauli_x(), &pauli_x());
        let v = vec![C_ONE, C_ZERO, C_ZERO, C_ZERO];
        let out = xx.mul_vec(&v);
        assert_eq!(out, vec![C_ZERO, C_ZERO, C_ZERO, C_ONE]);
    }

    #[test]
    fn eigen_diagonal_sorted_descending() {
        let a = ComplexMatrix::from_real(2, 2, &[0.2, 0.0, 0.0, 0.8]);
        let es = hermitian_eigen(&a).unwrap();
        assert!((es.eigenvalues[0] - 0.8).abs() < 1e-14);
        assert!((es.eigenvalues[1] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn eigen_pauli_x_spectrum() {
        let es = hermitian_eigen(&pauli_x()).unwrap();
        assert!((es.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((es.eigenvalues[1] + 1.0).abs() < 1e-12);
        // eigenvectors are (|0> +/- |1>)/sqrt(2) up to phase
        let v0 = es.eigenvector(0);
        assert!((v0[0].norm() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((v0[1].norm() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((v0[0] * v0[1].conj()).re > 0.0); // same-sign pair for +1
        assert!(es.eigenvectors.is_unitary(1e-12));
    }

    #[test]
    fn eigen_rank2_mixture() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut random_unit = |n: usize| {
            let mut v: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            v.iter_mut().for_each(|c| *c /= norm);
            v
        };
        let n = 4;
        let psi1 = random_unit(n);
        let psi2 = random_unit(n);
        let mut rho = ComplexMatrix::zeros(n, n);
        for p in 0..n {
            for q in 0..n {
                rho[(p, q)] = 0.5 * (psi1[p] * psi1[q].conj() + psi2[p] * psi2[q].conj());
            }
        }
        let es = hermitian_eigen(&rho).unwrap();
        let sum: f64 = es.eigenvalues.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        assert!(es.eigenvalues[0] + es.eigenvalues[1] > 1.0 - 1e-10);
        assert!(es.eigenvalues[2].abs() < 1e-12);
        assert!(es.eigenvalues[3].abs() < 1e-12);
        // reconstruction
        let mut recon = ComplexMatrix::zeros(n, n);
        for (k, &lam) in es.eigenvalues.iter().enumerate() {
            let v = es.eigenvector(k);
            for p in 0..n {
                for q in 0..n {
                    recon[(p, q)] += Complex64::new(lam, 0.0) * v[p] * v[q].conj();
                }
            }
        }
        assert!(approx_eq(&recon, &rho, 1e-10));
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let a = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            hermitian_eigen(&a),
            Err(QaeError::NotHermitian { .. })
        ));
    }

    #[test]
    fn expm_zero_time_is_identity() {
        let h = kron(&pauli_z(), &pauli_z());
        let u = expm_skew_hermitian(&h, 0.0).unwrap();
        assert!(approx_eq(&u, &ComplexMatrix::identity(4), 1e-12));
    }

    #[test]
    fn expm_zz_diagonal() {
        // exp(-i T sigma_z (x) sigma_z) = diag(e^{-iT}, e^{iT}, e^{iT}, e^{-iT})
        let t = 1.1;
        let u = expm_skew_hermitian(&kron(&pauli_z(), &pauli_z()), t).unwrap();
        let em = Complex64::from_polar(1.0, -t);
        let ep = Complex64::from_polar(1.0, t);
        let mut expected = ComplexMatrix::zeros(4, 4);
        expected[(0, 0)] = em;
        expected[(1, 1)] = ep;
        expected[(2, 2)] = ep;
        expected[(3, 3)] = em;
        assert!(approx_eq(&u, &expected, 1e-12));
    }

    #[test]
    fn expm_pauli_x_euler_identity() {
        // exp(-i (pi/2) sigma_x) = cos(pi/2) I - i sin(pi/2) sigma_x = -i sigma_x
        let u = expm_skew_hermitian(&pauli_x(), std::f64::consts::FRAC_PI_2).unwrap();
        let expected = pauli_x().scale(Complex64::new(0.0, -1.0));
        assert!(approx_eq(&u, &expected, 1e-12));
    }

    #[test]
    fn expm_unitary_and_semigroup() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = 4;
            let mut a = ComplexMatrix::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    a[(p, q)] = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                }
            }
            let h = a.symmetrized();
            let (t1, t2) = (rng.gen::<f64>(), rng.gen::<f64>());
            let u1 = expm_skew_hermitian(&h, t1).unwrap();
            let u2 = expm_skew_hermitian(&h, t2).unwrap();
            let u12 = expm_skew_hermitian(&h, t1 + t2).unwrap();
            assert!(u1.is_unitary(1e-10));
            assert!(approx_eq(&u1.matmul(&u2), &u12, 1e-9));
        }
    }

    #[test]
    fn eigenvalue_sum_matches_trace() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 8;
            let mut a = ComplexMatrix::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    a[(p, q)] = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                }
            }
            let h = a.symmetrized();
            let es = hermitian_eigen(&h).unwrap();
            let sum: f64 = es.eigenvalues.iter().sum();
            assert!((sum - h.trace().re).abs() < 1e-10);
            assert!(h.trace().im.abs() < 1e-12);
        }
    }
}
