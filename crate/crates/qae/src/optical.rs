//! Simulated two-qubit optical gate: a path qubit (R/L) and a polarization
//! qubit (H/V), with the gate assembled from four single-qubit polarization
//! elements, each a QWP-HWP-QWP stack plus a phase shifter.
//!
//! Basis ordering is {RH, RV, LH, LV} (path is the leading tensor factor).

use num_complex::Complex64;

use crate::autoencoder::AutoencoderTask;
use crate::error::{QaeError, Result};
use crate::linalg::ComplexMatrix;
use crate::optimizers::{run_gd, Objective, OptimizerConfig, TrainingTrace};
use crate::state::{Bipartition, PureState, StateEnsemble};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Waveplate with retardance gamma at fast-axis angle theta:
/// R(-theta) diag(1, e^{i gamma}) R(theta).
pub fn waveplate_unitary(theta: f64, gamma: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, gamma);
    let mut w = ComplexMatrix::zeros(2, 2);
    // R(-t) diag(1,e) R(t) expanded
    w[(0, 0)] = Complex64::new(c * c, 0.0) + e * (s * s);
    w[(0, 1)] = Complex64::new(c * s, 0.0) - e * (c * s);
    w[(1, 0)] = w[(0, 1)];
    w[(1, 1)] = Complex64::new(s * s, 0.0) + e * (c * c);
    w
}

pub fn quarter_wave_plate(theta: f64) -> ComplexMatrix {
    waveplate_unitary(theta, std::f64::consts::FRAC_PI_2)
}

pub fn half_wave_plate(theta: f64) -> ComplexMatrix {
    waveplate_unitary(theta, std::f64::consts::PI)
}

/// Polarization element: phase shifter times QWP(t1) HWP(t2) QWP(t3).
#[derive(Debug, Clone, Copy)]
pub struct PolarizationElement {
    pub qwp_front: f64,
    pub hwp: f64,
    pub qwp_back: f64,
    pub phase: f64,
}

impl PolarizationElement {
    pub fn unitary(&self) -> ComplexMatrix {
        let stack = quarter_wave_plate(self.qwp_front)
            .matmul(&half_wave_plate(self.hwp))
            .matmul(&quarter_wave_plate(self.qwp_back));
        stack.scale(Complex64::from_polar(1.0, self.phase))
    }
}

/// Sixteen angles: four per element, elements ordered V1, V2, VR, VL.
#[derive(Debug, Clone)]
pub struct OpticalGateParams {
    pub v1: PolarizationElement,
    pub v2: PolarizationElement,
    pub vr: PolarizationElement,
    pub vl: PolarizationElement,
}

impl OpticalGateParams {
    pub const NUM_ANGLES: usize = 16;

    pub fn from_flat(theta: &[f64]) -> Result<Self> {
        if theta.len() != Self::NUM_ANGLES {
            return Err(QaeError::Config(format!(
                "expected {} angles, got {}",
                Self::NUM_ANGLES,
                theta.len()
            )));
        }
        let elem = |o: usize| PolarizationElement {
            qwp_front: theta[o],
            hwp: theta[o + 1],
            qwp_back: theta[o + 2],
            phase: theta[o + 3],
        };
        Ok(Self {
            v1: elem(0),
            v2: elem(4),
            vr: elem(8),
            vl: elem(12),
        })
    }
}

/// Assemble the 4x4 path-polarization gate from four 2x2 unitaries:
/// U_RR = V2 (VR+VL) V1 / 2, U_LL = (VR+VL) / 2,
/// U_RL = -i V2 (VR-VL) / 2, U_LR = i (VR-VL) V1 / 2.
pub fn compose_two_qubit_gate(
    v1: &ComplexMatrix,
    v2: &ComplexMatrix,
    vr: &ComplexMatrix,
    vl: &ComplexMatrix,
) -> ComplexMatrix {
    let half = Complex64::new(0.5, 0.0);
    let sum = vr.add(vl).scale(half);
    let diff = vr.sub(vl).scale(half);
    let u_rr = v2.matmul(&sum).matmul(v1);
    let u_ll = sum;
    let u_rl = v2.matmul(&diff).scale(-I);
    let u_lr = diff.matmul(v1).scale(I);

    let mut u = ComplexMatrix::zeros(4, 4);
    for r in 0..2 {
        for c in 0..2 {
            u[(r, c)] = u_rr[(r, c)];
            u[(r, c + 2)] = u_rl[(r, c)];
            u[(r + 2, c)] = u_lr[(r, c)];
            u[(r + 2, c + 2)] = u_ll[(r, c)];
        }
    }
    u
}

pub fn gate_from_angles(theta: &[f64]) -> Result<ComplexMatrix> {
    let p = OpticalGateParams::from_flat(theta)?;
    Ok(compose_two_qubit_gate(
        &p.v1.unitary(),
        &p.v2.unitary(),
        &p.vr.unitary(),
        &p.vl.unitary(),
    ))
}

/// The two input-pair presets used in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpticalCase {
    /// Product states with opposite paths and identical polarization.
    Case1,
    /// Path-polarization entangled pair.
    Case2,
}

impl OpticalCase {
    pub fn input_states(self) -> Vec<PureState> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        let a = Complex64::new(s, 0.0);
        let b = Complex64::new(0.0, s);
        let amps = match self {
            Self::Case1 => [vec![a, b, z, z], vec![z, z, a, b]],
            Self::Case2 => [vec![a, z, z, b], vec![z, a, b, z]],
        };
        amps.into_iter()
            .map(|v| PureState::new(v).expect("preset states are normalized"))
            .collect()
    }

    /// Compression task: trash the path qubit against reference |R>.
    pub fn task(self) -> AutoencoderTask {
        let ensemble = StateEnsemble::uniform(self.input_states()).expect("two states");
        AutoencoderTask::with_default_reference(ensemble, Bipartition::new(2, 2))
            .expect("dimensions match")
    }
}

struct AngleObjective {
    task: AutoencoderTask,
}

impl Objective for AngleObjective {
    fn eval(&self, theta: &[f64]) -> f64 {
        let u = gate_from_angles(theta).expect("16 angles");
        let mut total = 0.0;
        for (psi, &w) in self.task.ensemble.states().iter().zip(self.task.ensemble.weights()) {
            total += w
                * crate::autoencoder::single_state_j2_unchecked(
                    &u,
                    psi,
                    self.task.partition,
                    &self.task.reference,
                );
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct OpticalOutcome {
    pub trace: TrainingTrace,
    pub gate: ComplexMatrix,
    pub final_j2: f64,
}

/// Gradient-train the sixteen gate angles to maximize path-qubit compression
/// for the chosen input pair.
pub fn simulate_optical_experiment(
    case: OpticalCase,
    max_iterations: usize,
    seed: u64,
) -> Result<OpticalOutcome> {
    let task = case.task();
    let objective = AngleObjective { task };
    let bounds = vec![(0.0, 2.0 * std::f64::consts::PI); OpticalGateParams::NUM_ANGLES];
    let mut cfg = OptimizerConfig::default();
    cfg.max_iterations = max_iterations;
    cfg.seed = seed;
    cfg.gd.alpha = 0.3;
    cfg.gd.beta_perturb = 0.01;
    let trace = run_gd(&objective, &cfg, &bounds)?;
    let gate = gate_from_angles(&trace.final_theta.values)?;
    let final_j2 = trace.final_objective();
    Ok(OpticalOutcome {
        trace,
        gate,
        final_j2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{compression_bound, objective_j2};
    use crate::state::random_unitary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn approx(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        a.sub(b).frobenius_norm() <= tol
    }

    #[test]
    fn waveplate_zero_angle_is_diagonal() {
        let q = quarter_wave_plate(0.0);
        assert!((q[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((q[(1, 1)] - I).norm() < 1e-14);
        assert!(q[(0, 1)].norm() < 1e-14 && q[(1, 0)].norm() < 1e-14);

        let h = half_wave_plate(0.0);
        assert!((h[(1, 1)] + Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn waveplates_are_unitary_and_pi_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = rng.gen::<f64>() * 2.0 * PI;
            let g = rng.gen::<f64>() * 2.0 * PI;
            let w = waveplate_unitary(t, g);
            assert!(w.is_unitary(1e-12));
            assert!(approx(&w, &waveplate_unitary(t + PI, g), 1e-12));
        }
    }

    #[test]
    fn qwp_hwp_qwp_at_zero_is_identity() {
        // diag(1,i) diag(1,-1) diag(1,i) = diag(1, i*(-1)*i) = I
        let stack = quarter_wave_plate(0.0)
            .matmul(&half_wave_plate(0.0))
            .matmul(&quarter_wave_plate(0.0));
        assert!(approx(&stack, &ComplexMatrix::identity(2), 1e-13));
    }

    #[test]
    fn hwp_at_45_degrees_swaps_h_and_v() {
        // up to the e^{i pi/2}... retardance phase convention: flip with det -1
        let h = half_wave_plate(PI / 4.0);
        assert!(h[(0, 0)].norm() < 1e-13 && h[(1, 1)].norm() < 1e-13);
        assert!((h[(0, 1)] - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        assert!((h[(1, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn composed_gate_is_unitary_for_random_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let theta: Vec<f64> = (0..16).map(|_| rng.gen::<f64>() * 2.0 * PI).collect();
            let u = gate_from_angles(&theta).unwrap();
            assert!(u.is_unitary(1e-10));
        }
    }

    #[test]
    fn composed_gate_with_equal_arms_is_identity_on_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_unitary(2, &mut rng);
        let id = ComplexMatrix::identity(2);
        let u = compose_two_qubit_gate(&id, &id, &v, &v);
        let expected = crate::linalg::kron(&id, &v);
        assert!(approx(&u, &expected, 1e-12));
    }

    #[test]
    fn stack_covers_arbitrary_polarization_unitaries() {
        // fit QWP(t1) HWP(t2) QWP(t3) to random 2x2 unitaries up to phase
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dist = |angles: &[f64; 3], target: &ComplexMatrix| -> f64 {
            let w = quarter_wave_plate(angles[0])
                .matmul(&half_wave_plate(angles[1]))
                .matmul(&quarter_wave_plate(angles[2]));
            let overlap = target.dagger().matmul(&w).trace().norm();
            (4.0 - 2.0 * overlap).max(0.0)
        };
        for _ in 0..5 {
            let target = random_unitary(2, &mut rng);
            // coarse grid then shrinking coordinate descent
            let mut best = [0.0; 3];
            let mut best_d = f64::INFINITY;
            let n = 24;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let a = [
                            PI * i as f64 / n as f64,
                            PI * j as f64 / n as f64,
                            PI * k as f64 / n as f64,
                        ];
                        let d = dist(&a, &target);
                        if d < best_d {
                            best_d = d;
                            best = a;
                        }
                    }
                }
            }
            let mut step = PI / n as f64;
            while step > 1e-7 {
                let mut improved = false;
                for c in 0..3 {
                    for sgn in [-1.0, 1.0] {
                        let mut cand = best;
                        cand[c] += sgn * step;
                        let d = dist(&cand, &target);
                        if d < best_d {
                            best_d = d;
                            best = cand;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            // recover the global phase and check the full distance
            let w = quarter_wave_plate(best[0])
                .matmul(&half_wave_plate(best[1]))
                .matmul(&quarter_wave_plate(best[2]));
            let tr = target.dagger().matmul(&w).trace();
            let phase = tr / tr.norm();
            let fitted = w.scale(phase.conj());
            assert!(
                approx(&fitted, &target, 1e-6),
                "residual {}",
                fitted.sub(&target).frobenius_norm()
            );
        }
    }

    #[test]
    fn preset_tasks_have_unit_bound() {
        for case in [OpticalCase::Case1, OpticalCase::Case2] {
            let task = case.task();
            let b = compression_bound(&task).unwrap();
            assert!((b.bound - 1.0).abs() < 1e-12, "{case:?} bound {}", b.bound);
        }
    }

    #[test]
    fn training_reaches_high_compression_both_cases() {
        for (case, seed) in [(OpticalCase::Case1, 5), (OpticalCase::Case2, 6)] {
            let out = simulate_optical_experiment(case, 500, seed).unwrap();
            assert!(
                out.final_j2 >= 0.99,
                "{case:?} reached only {}",
                out.final_j2
            );
            assert!(out.gate.is_unitary(1e-10));
            let j = objective_j2(&case.task(), &out.gate).unwrap();
            assert!((j - out.final_j2).abs() < 1e-9);
        }
    }
}
