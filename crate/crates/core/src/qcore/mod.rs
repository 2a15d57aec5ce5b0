//! Dense complex linear algebra and the Born rule for 1–3 qubit systems.
//!
//! Outcome convention: bit 0 is eigenvalue +1, bit 1 is eigenvalue −1.
//! Multi-party outcome tuples are indexed with party 0 as the most
//! significant bit, matching the ordering of tensor-product kets.

mod matrix;

pub use matrix::{pauli, tensor_product, ComplexMatrix, C64};

use crate::error::{Error, Result};

/// Numeric tolerances shared by every module.
pub mod tol {
    /// Construction checks on kets, density matrices and observables.
    pub const CONSTRUCTION: f64 = 1e-12;
    /// Algebraic identities (projector completeness, probability sums).
    pub const IDENTITY: f64 = 1e-10;
    /// Hermiticity accepted when validating user-supplied matrices.
    pub const HERMITIAN: f64 = 1e-10;
    /// Smallest eigenvalue accepted for a density matrix.
    pub const PSD: f64 = -1e-10;
    /// Distance of an observable eigenvalue from ±1.
    pub const EIGENVALUE: f64 = 1e-6;
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amplitudes: Vec<C64>,
}

impl Ket {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState("ket has no amplitudes".into()));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tol::CONSTRUCTION {
            return Err(Error::InvalidState(format!("ket norm {norm} is not 1")));
        }
        Ok(Ket { amplitudes })
    }

    /// Normalizes `amplitudes` before constructing the ket.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Ket::new(amplitudes.into_iter().map(|a| a / norm).collect())
    }

    /// Computational basis state `|index⟩` in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ket { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates and wraps `matrix`.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::validate(&matrix)?;
        Ok(DensityMatrix { matrix })
    }

    fn validate(matrix: &ComplexMatrix) -> Result<()> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                actual: matrix.cols(),
            });
        }
        let dev = matrix.hermiticity_deviation();
        if dev > tol::HERMITIAN {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol::IDENTITY || tr.im.abs() > tol::IDENTITY {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let (values, _) = matrix.hermitian_eigen()?;
        if let Some(&min) = values.first() {
            if min < tol::PSD {
                return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(())
    }

    pub fn from_ket(ket: &Ket) -> Self {
        DensityMatrix {
            matrix: ket.projector(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    /// Convex mixture `Σ w_k ρ_k`; weights must be non-negative and sum to 1.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("mixture components"))?;
        let dim = first.1.dim();
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for (w, rho) in parts {
            if *w < 0.0 {
                return Err(Error::out_of_range("weight", format!("{w} < 0")));
            }
            if rho.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: rho.dim(),
                });
            }
            acc = &acc + &rho.matrix.scale_real(*w);
        }
        DensityMatrix::new(acc)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// Eigenvalues ascending with their eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<C64>>) {
        self.matrix
            .hermitian_eigen()
            .expect("density matrix is Hermitian by construction")
    }

    /// Re-runs the Hermiticity/trace/PSD checks.
    pub fn check(&self) -> Result<()> {
        Self::validate(&self.matrix)
    }
}

/// Hermitian observable with eigenvalues ±1 and its two eigenprojectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: ComplexMatrix,
    projectors: [ComplexMatrix; 2],
}

impl Observable {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let projectors = eigenprojectors_of(&matrix)?;
        Ok(Observable { matrix, projectors })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Projector for outcome bit `outcome` (0 ↔ +1, 1 ↔ −1).
    pub fn projector(&self, outcome: u8) -> &ComplexMatrix {
        &self.projectors[outcome as usize]
    }

    pub fn pauli_x() -> Self {
        Observable::new(pauli::x()).unwrap()
    }

    pub fn pauli_y() -> Self {
        Observable::new(pauli::y()).unwrap()
    }

    pub fn pauli_z() -> Self {
        Observable::new(pauli::z()).unwrap()
    }
}

fn eigenprojectors_of(matrix: &ComplexMatrix) -> Result<[ComplexMatrix; 2]> {
    let dev = matrix.hermiticity_deviation();
    if dev > tol::CONSTRUCTION {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let (values, vectors) = matrix.hermitian_eigen()?;
    let dim = matrix.rows();
    let mut plus = ComplexMatrix::zeros(dim, dim);
    let mut minus = ComplexMatrix::zeros(dim, dim);
    for (lambda, v) in values.iter().zip(&vectors) {
        let p = ComplexMatrix::outer(v, v);
        if (lambda - 1.0).abs() <= tol::EIGENVALUE {
            plus = &plus + &p;
        } else if (lambda + 1.0).abs() <= tol::EIGENVALUE {
            minus = &minus + &p;
        } else {
            return Err(Error::InvalidEigenvalue { eigenvalue: *lambda });
        }
    }
    Ok([plus, minus])
}

/// Eigenprojectors of a ±1 observable as `(outcome bit, projector)` pairs.
pub fn eigenprojectors(obs: &Observable) -> Vec<(u8, ComplexMatrix)> {
    vec![(0, obs.projectors[0].clone()), (1, obs.projectors[1].clone())]
}

/// Joint outcome distribution of a multi-party measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    parties: usize,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn parties(&self) -> usize {
        self.parties
    }

    /// Probabilities indexed by outcome index (party 0 is the high bit).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, outcome: &[u8]) -> f64 {
        self.probs[outcome_index(outcome)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<u8>, f64)> + '_ {
        let parties = self.parties;
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (outcome_bits(i, parties), p))
    }
}

/// Outcome index for a tuple of bits, party 0 most significant.
pub fn outcome_index(outcome: &[u8]) -> usize {
    outcome.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
}

/// Inverse of [`outcome_index`].
pub fn outcome_bits(index: usize, parties: usize) -> Vec<u8> {
    (0..parties).map(|k| ((index >> (parties - 1 - k)) & 1) as u8).collect()
}

/// Parity of an outcome index.
pub fn outcome_parity(index: usize) -> u8 {
    (index.count_ones() & 1) as u8
}

/// Born-rule distribution of local ±1 measurements, one observable per party.
pub fn born_distribution(state: &DensityMatrix, observables: &[Observable]) -> Result<OutcomeDistribution> {
    let total: usize = observables.iter().map(Observable::dim).product();
    if observables.is_empty() || total != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            actual: total,
        });
    }
    let parties = observables.len();
    let probs = (0..1usize << parties)
        .map(|index| {
            let bits = outcome_bits(index, parties);
            let projector = observables
                .iter()
                .zip(&bits)
                .map(|(o, &b)| o.projector(b).clone())
                .reduce(|acc, p| acc.kron(&p))
                .expect("at least one party");
            state.matrix().trace_product_re(&projector).clamp(0.0, 1.0)
        })
        .collect();
    Ok(OutcomeDistribution { parties, probs })
}

/// `Tr(ρ O)` for a Hermitian operator.
pub fn expectation(state: &DensityMatrix, obs: &ComplexMatrix) -> Result<f64> {
    if obs.rows() != state.dim() || obs.cols() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            actual: obs.rows(),
        });
    }
    let dev = obs.hermiticity_deviation();
    if dev > tol::HERMITIAN {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(state.matrix().trace_product_re(obs))
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity_with_pure(state: &DensityMatrix, target: &Ket) -> Result<f64> {
    if target.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            actual: target.dim(),
        });
    }
    let rho_psi = state.matrix().apply(target.amplitudes())?;
    Ok(target
        .amplitudes()
        .iter()
        .zip(&rho_psi)
        .map(|(a, b)| (a.conj() * b).re)
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_8};

    use super::*;

    fn phi_plus() -> Ket {
        Ket::new(vec![
            C64::new(FRAC_1_SQRT_2, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(FRAC_1_SQRT_2, 0.0),
        ])
        .unwrap()
    }

    fn ghz() -> Ket {
        let mut a = vec![C64::new(0.0, 0.0); 8];
        a[0] = C64::new(FRAC_1_SQRT_2, 0.0);
        a[7] = C64::new(FRAC_1_SQRT_2, 0.0);
        Ket::new(a).unwrap()
    }

    fn x_plus_z() -> Observable {
        Observable::new((&pauli::x() + &pauli::z()).scale_real(FRAC_1_SQRT_2)).unwrap()
    }

    #[test]
    fn ket_rejects_unnormalized() {
        assert!(Ket::new(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).is_err());
        assert!(
            (Ket::normalized(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)])
                .unwrap()
                .norm()
                - 1.0)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(ComplexMatrix::identity(2)).is_err());
        let neg = ComplexMatrix::from_real(2, 2, &[1.5, 0.0, 0.0, -0.5]).unwrap();
        assert!(DensityMatrix::new(neg).is_err());
        let nonherm = ComplexMatrix::from_real(2, 2, &[0.5, 0.3, 0.0, 0.5]).unwrap();
        assert!(matches!(DensityMatrix::new(nonherm), Err(Error::NotHermitian { .. })));
        assert!(DensityMatrix::maximally_mixed(8).check().is_ok());
    }

    #[test]
    fn z_projectors() {
        let p = eigenprojectors(&Observable::pauli_z());
        let p0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let p1 = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p[0].0, 0);
        assert!(p[0].1.max_abs_diff(&p0) < 1e-15);
        assert!(p[1].1.max_abs_diff(&p1) < 1e-15);
    }

    #[test]
    fn x_projectors() {
        let p = eigenprojectors(&Observable::pauli_x());
        let plus = ComplexMatrix::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let minus = ComplexMatrix::from_real(2, 2, &[0.5, -0.5, -0.5, 0.5]).unwrap();
        assert!(p[0].1.max_abs_diff(&plus) < 1e-15);
        assert!(p[1].1.max_abs_diff(&minus) < 1e-15);
    }

    #[test]
    fn diagonal_observable_projectors() {
        // the closed-form branch for already-diagonal matrices must still
        // route eigenvalue +1 to outcome 0
        let minus_z = Observable::new(pauli::z().scale_real(-1.0)).unwrap();
        let p0 = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(minus_z.projector(0).max_abs_diff(&p0) < 1e-15);
    }

    #[test]
    fn rotated_projectors_at_pi_over_8() {
        // oracle: eigenvector of (X+Z)/√2 for +1 is (cos π/8, sin π/8)
        let obs = x_plus_z();
        let (cs, sn) = (FRAC_PI_8.cos(), FRAC_PI_8.sin());
        let plus = ComplexMatrix::from_real(2, 2, &[cs * cs, cs * sn, cs * sn, sn * sn]).unwrap();
        let minus = ComplexMatrix::from_real(2, 2, &[sn * sn, -cs * sn, -cs * sn, cs * cs]).unwrap();
        assert!(obs.projector(0).max_abs_diff(&plus) < 1e-12);
        assert!(obs.projector(1).max_abs_diff(&minus) < 1e-12);
        let sum = obs.projector(0) + obs.projector(1);
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(2)) < tol::IDENTITY);
        let sq = obs.projector(0) * obs.projector(0);
        assert!(sq.max_abs_diff(obs.projector(0)) < tol::IDENTITY);
    }

    #[test]
    fn observable_rejects_bad_input() {
        let nonherm = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(Observable::new(nonherm), Err(Error::NotHermitian { .. })));
        let half_z = pauli::z().scale_real(0.5);
        assert!(matches!(Observable::new(half_z), Err(Error::InvalidEigenvalue { .. })));
    }

    #[test]
    fn bell_zz_distribution() {
        let rho = DensityMatrix::from_ket(&phi_plus());
        let z = Observable::pauli_z();
        let d = born_distribution(&rho, &[z.clone(), z]).unwrap();
        assert!((d.get(&[0, 0]) - 0.5).abs() < 1e-15);
        assert!((d.get(&[1, 1]) - 0.5).abs() < 1e-15);
        assert!(d.get(&[0, 1]).abs() < 1e-15 && d.get(&[1, 0]).abs() < 1e-15);
    }

    #[test]
    fn bell_x_rotated_distribution() {
        let rho = DensityMatrix::from_ket(&phi_plus());
        let d = born_distribution(&rho, &[Observable::pauli_x(), x_plus_z()]).unwrap();
        let same = FRAC_PI_8.cos().powi(2) / 2.0;
        let diff = FRAC_PI_8.sin().powi(2) / 2.0;
        assert!((same - 0.42678).abs() < 1e-5 && (diff - 0.07322).abs() < 1e-5);
        assert!((d.get(&[0, 0]) - same).abs() < 1e-12);
        assert!((d.get(&[1, 1]) - same).abs() < 1e-12);
        assert!((d.get(&[0, 1]) - diff).abs() < 1e-12);
        assert!((d.get(&[1, 0]) - diff).abs() < 1e-12);
    }

    #[test]
    fn ghz_xxx_distribution() {
        let rho = DensityMatrix::from_ket(&ghz());
        let x = Observable::pauli_x();
        let d = born_distribution(&rho, &[x.clone(), x.clone(), x]).unwrap();
        for (bits, p) in d.iter() {
            let parity = bits.iter().sum::<u8>() % 2;
            let expected = if parity == 0 { 0.25 } else { 0.0 };
            assert!((p - expected).abs() < 1e-12, "{bits:?} {p}");
        }
        let xxx = pauli::x().kron(&pauli::x()).kron(&pauli::x());
        assert!((expectation(&rho, &xxx).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_dimension_mismatch() {
        let rho = DensityMatrix::from_ket(&ghz());
        let z = Observable::pauli_z();
        assert!(matches!(
            born_distribution(&rho, &[z.clone(), z]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bell_expectations() {
        let rho = DensityMatrix::from_ket(&phi_plus());
        let xx = pauli::x().kron(&pauli::x());
        let yy = pauli::y().kron(&pauli::y());
        assert!((expectation(&rho, &xx).unwrap() - 1.0).abs() < 1e-12);
        assert!((expectation(&rho, &yy).unwrap() + 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!(expectation(&mixed, &pauli::z().kron(&pauli::x())).unwrap().abs() < 1e-15);
        assert!(expectation(&mixed, &pauli::x()).is_err());
    }

    #[test]
    fn fidelities() {
        let psi = phi_plus();
        let rho = DensityMatrix::from_ket(&psi);
        assert!((fidelity_with_pure(&rho, &psi).unwrap() - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!((fidelity_with_pure(&mixed, &psi).unwrap() - 0.25).abs() < 1e-12);
        let werner = DensityMatrix::mixture(&[(0.8, &rho), (0.2, &mixed)]).unwrap();
        assert!((fidelity_with_pure(&werner, &psi).unwrap() - 0.85).abs() < 1e-12);
        assert!(fidelity_with_pure(&werner, &ghz()).is_err());
    }

    #[test]
    fn outcome_index_round_trip() {
        for i in 0..8 {
            assert_eq!(outcome_index(&outcome_bits(i, 3)), i);
        }
        assert_eq!(outcome_bits(4, 3), vec![1, 0, 0]);
    }
}
