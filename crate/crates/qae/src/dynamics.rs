//! Controlled quantum dynamics with piecewise-constant fields.
//!
//! A `ControlSystem` fixes the drift and control Hamiltonians, the box
//! constraints on the field amplitudes, the horizon `T` and the number of
//! equal sub-intervals `S`. A `ControlField` is the M x S amplitude table;
//! segment index 0 is earliest in time and the propagator left-multiplies
//! later segments. Atomic units throughout (hbar = 1).

use crate::error::{QaeError, Result};
use crate::linalg::{
    expm_skew_hermitian, kron_all, pauli_x, pauli_y, pauli_z, ComplexMatrix,
};
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct ControlSystem {
    pub dim: usize,
    pub h0: ComplexMatrix,
    pub controls: Vec<ComplexMatrix>,
    /// Per-control [u_min, u_max].
    pub bounds: Vec<(f64, f64)>,
    /// Total time T.
    pub horizon: f64,
    /// Number of equal sub-intervals S.
    pub segments: usize,
}

impl ControlSystem {
    pub fn new(
        h0: ComplexMatrix,
        controls: Vec<ComplexMatrix>,
        bounds: Vec<(f64, f64)>,
        horizon: f64,
        segments: usize,
    ) -> Result<Self> {
        let dim = h0.rows;
        if !h0.is_hermitian(1e-9) {
            return Err(QaeError::NotHermitian {
                residual: h0.sub(&h0.dagger()).frobenius_norm(),
                tol: 1e-9,
            });
        }
        for c in &controls {
            if c.rows != dim || c.cols != dim {
                return Err(QaeError::DimensionMismatch(
                    "control Hamiltonian dimension differs from drift".into(),
                ));
            }
            if !c.is_hermitian(1e-9) {
                return Err(QaeError::NotHermitian {
                    residual: c.sub(&c.dagger()).frobenius_norm(),
                    tol: 1e-9,
                });
            }
        }
        if bounds.len() != controls.len() {
            return Err(QaeError::DimensionMismatch(
                "one bound pair per control required".into(),
            ));
        }
        if bounds.iter().any(|&(lo, hi)| lo >= hi) {
            return Err(QaeError::Config("control bounds need u_min < u_max".into()));
        }
        if segments == 0 || horizon <= 0.0 {
            return Err(QaeError::Config("need positive horizon and segments".into()));
        }
        Ok(Self {
            dim,
            h0,
            controls,
            bounds,
            horizon,
            segments,
        })
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    /// Number of optimizable amplitudes (M x S).
    pub fn num_parameters(&self) -> usize {
        self.num_controls() * self.segments
    }

    /// Per-parameter bounds for the flattened amplitude table.
    pub fn flat_bounds(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for &b in &self.bounds {
            out.extend(std::iter::repeat(b).take(self.segments));
        }
        out
    }

    /// H_0 + sum_j u_j H_j for one segment.
    pub fn segment_hamiltonian(&self, u: &[f64]) -> ComplexMatrix {
        let mut h = self.h0.clone();
        for (hj, &uj) in self.controls.iter().zip(u) {
            h.axpy(Complex64::new(uj, 0.0), hj);
        }
        h
    }
}

/// Piecewise-constant amplitude table, amplitudes[j][s] = u_j on segment s.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    pub amplitudes: Vec<Vec<f64>>,
}

impl ControlField {
    pub fn new(amplitudes: Vec<Vec<f64>>) -> Self {
        Self { amplitudes }
    }

    /// Reshape a flat parameter vector (control-major: all segments of
    /// control 0, then control 1, ...).
    pub fn from_flat(theta: &[f64], num_controls: usize, segments: usize) -> Self {
        assert_eq!(theta.len(), num_controls * segments);
        Self {
            amplitudes: (0..num_controls)
                .map(|j| theta[j * segments..(j + 1) * segments].to_vec())
                .collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.amplitudes.concat()
    }

    fn validate(&self, sys: &ControlSystem) -> Result<()> {
        if self.amplitudes.len() != sys.num_controls()
            || self.amplitudes.iter().any(|row| row.len() != sys.segments)
        {
            return Err(QaeError::DimensionMismatch(format!(
                "field table must be {} controls x {} segments",
                sys.num_controls(),
                sys.segments
            )));
        }
        for (j, row) in self.amplitudes.iter().enumerate() {
            let (lo, hi) = sys.bounds[j];
            for (s, &u) in row.iter().enumerate() {
                if u < lo || u > hi {
                    return Err(QaeError::BoundsViolation {
                        control: j,
                        segment: s,
                        value: u,
                        min: lo,
                        max: hi,
                    });
                }
            }
        }
        Ok(())
    }

    /// Amplitudes of all controls on one segment.
    fn segment_values(&self, s: usize) -> Vec<f64> {
        self.amplitudes.iter().map(|row| row[s]).collect()
    }
}

/// Per-segment propagators: E_s = exp(-i H_s T/S), index 0 earliest.
pub fn segment_propagators(sys: &ControlSystem, u: &ControlField) -> Result<Vec<ComplexMatrix>> {
    u.validate(sys)?;
    let dt = sys.horizon / sys.segments as f64;
    (0..sys.segments)
        .map(|s| expm_skew_hermitian(&sys.segment_hamiltonian(&u.segment_values(s)), dt))
        .collect()
}

/// Phi(u) = E_{S-1} ... E_1 E_0, i.e. the earliest segment acts first.
pub fn propagate(sys: &ControlSystem, u: &ControlField) -> Result<ComplexMatrix> {
    let mut out = ComplexMatrix::identity(sys.dim);
    for e in segment_propagators(sys, u)? {
        out = e.matmul(&out);
    }
    Ok(out)
}

/// The 2-qubit benchmark system: H_0 = sigma_z (x) sigma_z with local
/// sigma_x / sigma_y drives, T = 1.1, 20 segments, amplitudes in [-4, 4].
pub fn two_qubit_model() -> ControlSystem {
    let i2 = ComplexMatrix::identity(2);
    let h0 = kron_all(&[&pauli_z(), &pauli_z()]);
    let controls = vec![
        kron_all(&[&pauli_x(), &i2]),
        kron_all(&[&i2, &pauli_x()]),
        kron_all(&[&pauli_y(), &i2]),
        kron_all(&[&i2, &pauli_y()]),
    ];
    ControlSystem::new(h0, controls, vec![(-4.0, 4.0); 4], 1.1, 20).expect("static model")
}

/// The 3-qubit benchmark system: pairwise 0.1 sigma_x couplings as drift,
/// local sigma_x / sigma_z drives, T = 20, 100 segments, amplitudes in [0, 1].
pub fn three_qubit_model() -> ControlSystem {
    let i2 = ComplexMatrix::identity(2);
    let sx = pauli_x();
    let sz = pauli_z();
    let c = Complex64::new(0.1, 0.0);
    let mut h0 = kron_all(&[&sx, &sx, &i2]).scale(c);
    h0.axpy(c, &kron_all(&[&i2, &sx, &sx]));
    h0.axpy(c, &kron_all(&[&sx, &i2, &sx]));
    let controls = vec![
        kron_all(&[&sx, &i2, &i2]),
        kron_all(&[&sz, &i2, &i2]),
        kron_all(&[&i2, &sx, &i2]),
        kron_all(&[&i2, &sz, &i2]),
        kron_all(&[&i2, &i2, &sx]),
        kron_all(&[&i2, &i2, &sz]),
    ];
    ControlSystem::new(h0, controls, vec![(0.0, 1.0); 6], 20.0, 100).expect("static model")
}
