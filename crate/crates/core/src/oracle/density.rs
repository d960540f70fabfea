//! Exact four-qubit simulation of one DEJMPS round.
//!
//! Qubit order in the 16-dimensional space is `(A1, B1, A2, B2)` with `A1`
//! the most significant bit, so the input state is simply `ρ_a ⊗ ρ_b`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Complex, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{Bell, BellDiagonalState};

type C64 = Complex<f64>;
type Mat2 = SMatrix<C64, 2, 2>;
type Mat4 = SMatrix<C64, 4, 4>;
type Mat16 = SMatrix<C64, 16, 16>;
type Ket4 = SVector<C64, 4>;

const PHYSICAL_TOL: f64 = 1e-12;

/// Local rotation applied to both pairs before the bilateral CNOT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreRotation {
    /// Alice applies `Rx(π/2)`, Bob `Rx(−π/2)` to each of their qubits.
    #[default]
    Dejmps,
    /// No rotation.
    Identity,
}

fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// `|Φ+⟩, |Φ−⟩, |Ψ+⟩, |Ψ−⟩` in the `|ab⟩` basis with `a` the high bit.
pub fn bell_ket(bell: Bell) -> Ket4 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = match bell {
        Bell::PhiPlus => [s, 0.0, 0.0, s],
        Bell::PhiMinus => [s, 0.0, 0.0, -s],
        Bell::PsiPlus => [0.0, s, s, 0.0],
        Bell::PsiMinus => [0.0, s, -s, 0.0],
    };
    Ket4::from_iterator(v.into_iter().map(c))
}

fn pair_density(state: &BellDiagonalState) -> Mat4 {
    Bell::ALL.iter().fold(Mat4::zeros(), |acc, &b| {
        let k = bell_ket(b);
        acc + k * k.adjoint() * c(state.weight(b))
    })
}

fn rx(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    Mat2::new(c(co), Complex::new(0.0, -s), Complex::new(0.0, -s), c(co))
}

/// `op` acting on `qubit` (0 = most significant) of four.
fn embed(op: &Mat2, qubit: usize) -> Mat16 {
    let eye = Mat2::identity();
    let factors: [&Mat2; 4] = std::array::from_fn(|i| if i == qubit { op } else { &eye });
    let m4: Mat4 = factors[0].kronecker(factors[1]);
    let m4b: Mat4 = factors[2].kronecker(factors[3]);
    m4.kronecker(&m4b)
}

fn bit(index: usize, qubit: usize) -> usize {
    (index >> (3 - qubit)) & 1
}

fn cnot(control: usize, target: usize) -> Mat16 {
    let mut u = Mat16::zeros();
    for i in 0..16 {
        let j = if bit(i, control) == 1 { i ^ (1 << (3 - target)) } else { i };
        u[(j, i)] = c(1.0);
    }
    u
}

/// A validated four-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix4(Mat16);

impl DensityMatrix4 {
    /// Checks Hermiticity, unit trace and positivity to within `1e-12`.
    pub fn new(m: Mat16) -> Result<Self> {
        let herm_err = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > PHYSICAL_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (max deviation {herm_err:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > PHYSICAL_TOL || tr.im.abs() > PHYSICAL_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_eig = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -PHYSICAL_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(m))
    }

    /// `ρ_a ⊗ ρ_b` for two Bell-diagonal pairs.
    pub fn from_pairs(a: &BellDiagonalState, b: &BellDiagonalState) -> Result<Self> {
        Self::new(pair_density(a).kronecker(&pair_density(b)))
    }

    pub fn matrix(&self) -> &Mat16 {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    /// Bell-basis diagonal of the kept control pair.
    pub state: BellDiagonalState,
    pub success: f64,
    /// Largest off-diagonal Bell-basis element of the kept pair.
    pub off_diagonal: f64,
    pub trace: f64,
}

/// One DEJMPS round on pairs `a = (A1, B1)` and `b = (A2, B2)`: pre-rotate,
/// CNOT `A1→A2` and `B1→B2`, measure `A2`, `B2` in the computational basis
/// and keep `(A1, B1)` when the outcomes agree.
pub fn dejmps_oracle(a: &BellDiagonalState, b: &BellDiagonalState, rotation: PreRotation) -> Result<OracleOutput> {
    let mut rho = DensityMatrix4::from_pairs(a, b)?.0;

    if rotation == PreRotation::Dejmps {
        let alice = rx(FRAC_PI_2);
        let bob = rx(-FRAC_PI_2);
        let r = embed(&alice, 0) * embed(&bob, 1) * embed(&alice, 2) * embed(&bob, 3);
        rho = r * rho * r.adjoint();
    }

    let u = cnot(0, 2) * cnot(1, 3);
    rho = u * rho * u.adjoint();

    let mut keep = Mat16::zeros();
    for i in 0..16 {
        if bit(i, 2) == bit(i, 3) {
            keep[(i, i)] = c(1.0);
        }
    }
    let kept = keep * rho * keep;
    let success = kept.trace().re;

    // trace out (A2, B2): the low two bits
    let mut control = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            control[(i, j)] = (0..4).map(|k| kept[(i * 4 + k, j * 4 + k)]).sum();
        }
    }
    let control = control / c(success);

    let mut weights = [0.0; 4];
    let mut off_diagonal: f64 = 0.0;
    for (i, &bi) in Bell::ALL.iter().enumerate() {
        for (j, &bj) in Bell::ALL.iter().enumerate() {
            let elem = (bell_ket(bi).adjoint() * control * bell_ket(bj))[(0, 0)];
            if i == j {
                weights[i] = elem.re;
            } else {
                off_diagonal = off_diagonal.max(elem.norm());
            }
        }
    }
    let trace = control.trace().re;
    let state = BellDiagonalState::from_unnormalized(weights.map(|w| w.max(0.0)))?;
    Ok(OracleOutput {
        state,
        success,
        off_diagonal,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{werner_state, WernerParam};

    #[test]
    fn bell_kets_are_orthonormal() {
        for &a in &Bell::ALL {
            for &b in &Bell::ALL {
                let ip = (bell_ket(a).adjoint() * bell_ket(b))[(0, 0)];
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip.re - expected).abs() < 1e-15 && ip.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dejmps_rotation_swaps_phi_minus_and_psi_minus() {
        let u = rx(FRAC_PI_2).kronecker(&rx(-FRAC_PI_2));
        let image = |b: Bell| u * bell_ket(b);
        let overlap = |a: Bell, b: Bell| (bell_ket(a).adjoint() * image(b))[(0, 0)].norm_sqr();
        assert!((overlap(Bell::PhiPlus, Bell::PhiPlus) - 1.0).abs() < 1e-12);
        assert!((overlap(Bell::PsiPlus, Bell::PsiPlus) - 1.0).abs() < 1e-12);
        assert!((overlap(Bell::PsiMinus, Bell::PhiMinus) - 1.0).abs() < 1e-12);
        assert!((overlap(Bell::PhiMinus, Bell::PsiMinus) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_target_pairs_always_agree() {
        let psi = BellDiagonalState::pure(Bell::PsiPlus);
        for rot in [PreRotation::Dejmps, PreRotation::Identity] {
            let out = dejmps_oracle(&psi, &psi, rot).unwrap();
            assert!((out.success - 1.0).abs() < 1e-12);
            assert!((out.state.fidelity() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn werner_069_round() {
        let w = werner_state(WernerParam::new(0.69).unwrap());
        let out = dejmps_oracle(&w, &w, PreRotation::Dejmps).unwrap();
        assert!((out.success - 0.738_05).abs() < 1e-9);
        assert!((out.success - (0.845f64.powi(2) + 0.155f64.powi(2))).abs() < 1e-12);
        let x_out = WernerParam::from_fidelity(out.state.fidelity()).value();
        assert!((x_out - 0.74).abs() < 0.01);
    }

    #[test]
    fn output_is_normalised_and_bell_diagonal() {
        let states = [
            BellDiagonalState::new([0.1, 0.2, 0.6, 0.1]).unwrap(),
            BellDiagonalState::new([0.4, 0.05, 0.3, 0.25]).unwrap(),
            BellDiagonalState::maximally_mixed(),
        ];
        for a in &states {
            for b in &states {
                let out = dejmps_oracle(a, b, PreRotation::Dejmps).unwrap();
                assert!((out.trace - 1.0).abs() < 1e-12);
                assert!(out.off_diagonal < 1e-12);
                let sum: f64 = out.state.weights().iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn success_symmetric_under_swap() {
        let a = BellDiagonalState::new([0.1, 0.2, 0.6, 0.1]).unwrap();
        let b = BellDiagonalState::new([0.4, 0.05, 0.3, 0.25]).unwrap();
        let ab = dejmps_oracle(&a, &b, PreRotation::Dejmps).unwrap();
        let ba = dejmps_oracle(&b, &a, PreRotation::Dejmps).unwrap();
        assert!((ab.success - ba.success).abs() < 1e-14);
    }

    #[test]
    fn maximally_mixed_is_fixed_point() {
        let m = BellDiagonalState::maximally_mixed();
        let out = dejmps_oracle(&m, &m, PreRotation::Dejmps).unwrap();
        assert!((out.success - 0.5).abs() < 1e-12);
        for w in out.state.weights() {
            assert!((w - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn non_physical_matrix_rejected() {
        let mut m = Mat16::identity() / c(16.0);
        m[(0, 0)] = c(-0.1);
        m[(1, 1)] += c(0.1 + 1.0 / 16.0);
        assert!(DensityMatrix4::new(m).is_err());
        let mut h = Mat16::identity() / c(16.0);
        h[(0, 1)] = c(0.01);
        assert!(DensityMatrix4::new(h).is_err());
        assert!(DensityMatrix4::new(Mat16::identity()).is_err());
    }
}
