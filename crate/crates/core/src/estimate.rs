//! User-side estimators: two-qubit tomography by linear inversion and the
//! four-setting GHZ witness.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    born_distribution, expectation, outcome_bits, pauli, tol, ComplexMatrix, DensityMatrix, Observable,
    OutcomeDistribution,
};

const PAULI_CHARS: [char; 4] = ['I', 'X', 'Y', 'Z'];

fn pauli_matrix(label: char) -> ComplexMatrix {
    match label {
        'I' => pauli::i(),
        'X' => pauli::x(),
        'Y' => pauli::y(),
        'Z' => pauli::z(),
        _ => unreachable!("label checked by caller"),
    }
}

/// All 16 two-qubit Pauli labels, `"II"` first.
pub fn pauli_labels() -> Vec<String> {
    PAULI_CHARS
        .iter()
        .flat_map(|&a| PAULI_CHARS.iter().map(move |&b| format!("{a}{b}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliEntry {
    pub value: f64,
    pub shots: u64,
}

/// Two-qubit Pauli expectations keyed by label such as `"XZ"`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PauliExpectations {
    entries: BTreeMap<String, PauliEntry>,
}

impl PauliExpectations {
    /// Empty map holding only `II = 1`.
    pub fn new() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("II".to_string(), PauliEntry { value: 1.0, shots: 0 });
        PauliExpectations { entries }
    }

    /// Inserts an expectation. `II` is fixed and cannot be overwritten.
    pub fn insert(&mut self, label: &str, value: f64, shots: u64) -> Result<()> {
        let valid = label.len() == 2 && label.chars().all(|c| PAULI_CHARS.contains(&c));
        if !valid {
            return Err(Error::UnknownName(label.to_string()));
        }
        if label == "II" {
            return Err(Error::out_of_range("II", "the identity expectation is fixed at 1"));
        }
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::out_of_range(
                "expectation",
                format!("{label} = {value} outside [-1, 1]"),
            ));
        }
        self.entries.insert(label.to_string(), PauliEntry { value, shots });
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<PauliEntry> {
        self.entries.get(label).copied()
    }

    pub fn value(&self, label: &str) -> Result<f64> {
        self.get(label)
            .map(|e| e.value)
            .ok_or_else(|| Error::MissingLabel(label.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, PauliEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Exact expectations of a two-qubit state.
    pub fn exact(state: &DensityMatrix) -> Result<Self> {
        if state.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                actual: state.dim(),
            });
        }
        let mut out = PauliExpectations::new();
        for label in pauli_labels().into_iter().skip(1) {
            let op = two_qubit_pauli(&label);
            out.insert(&label, expectation(state, &op)?.clamp(-1.0, 1.0), 0)?;
        }
        Ok(out)
    }
}

fn two_qubit_pauli(label: &str) -> ComplexMatrix {
    let mut chars = label.chars();
    let a = pauli_matrix(chars.next().expect("two chars"));
    let b = pauli_matrix(chars.next().expect("two chars"));
    a.kron(&b)
}

/// Linear-inversion reconstruction `ρ = ¼ Σ ⟨σᵢ⊗σⱼ⟩ σᵢ⊗σⱼ`, projected to the
/// PSD cone when an eigenvalue falls below the PSD tolerance.
pub fn tomography_2q(expectations: &PauliExpectations) -> Result<DensityMatrix> {
    let raw = linear_inversion(expectations)?;
    let (values, vectors) = raw.hermitian_eigen()?;
    if values[0] >= tol::PSD {
        return DensityMatrix::new(raw);
    }
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let mut rho = ComplexMatrix::zeros(4, 4);
    for (lambda, v) in clipped.iter().zip(&vectors) {
        if *lambda > 0.0 {
            rho = &rho + &ComplexMatrix::outer(v, v).scale_real(lambda / total);
        }
    }
    DensityMatrix::new(rho)
}

/// The unprojected linear-inversion estimate.
pub fn linear_inversion(expectations: &PauliExpectations) -> Result<ComplexMatrix> {
    let mut raw = ComplexMatrix::zeros(4, 4);
    for label in pauli_labels() {
        let value = expectations.value(&label)?;
        raw = &raw + &two_qubit_pauli(&label).scale_real(value / 4.0);
    }
    Ok(raw)
}

fn sample_counts<R: Rng + ?Sized>(dist: &OutcomeDistribution, shots: u64, rng: &mut R) -> Vec<u64> {
    let mut cumulative = Vec::with_capacity(dist.probs().len());
    let mut acc = 0.0;
    for p in dist.probs() {
        acc += p;
        cumulative.push(acc);
    }
    let last = cumulative.len() - 1;
    let mut counts = vec![0u64; cumulative.len()];
    for _ in 0..shots {
        let u = rng.random::<f64>() * acc;
        let k = cumulative.partition_point(|&c| c <= u).min(last);
        counts[k] += 1;
    }
    counts
}

/// Mean of the ±1 product over the parties selected by `mask`.
fn parity_mean(counts: &[u64], parties: usize, mask: &[bool]) -> f64 {
    let total: u64 = counts.iter().sum();
    let signed: i64 = counts
        .iter()
        .enumerate()
        .map(|(index, &n)| {
            let odd = outcome_bits(index, parties)
                .iter()
                .zip(mask)
                .filter(|(&b, &m)| m && b == 1)
                .count()
                % 2
                == 1;
            if odd {
                -(n as i64)
            } else {
                n as i64
            }
        })
        .sum();
    signed as f64 / total as f64
}

/// Samples the nine local Pauli settings with `shots` each. Single-qubit
/// labels pool the three settings that share the measured basis.
pub fn simulate_pauli_sampling<R: Rng + ?Sized>(
    state: &DensityMatrix,
    shots: u64,
    rng: &mut R,
) -> Result<PauliExpectations> {
    if shots == 0 {
        return Err(Error::out_of_range(
            "shots",
            "at least one shot per setting is required",
        ));
    }
    if state.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: state.dim(),
        });
    }
    let bases = ['X', 'Y', 'Z'];
    let mut singles: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    let mut out = PauliExpectations::new();
    for &a in &bases {
        for &b in &bases {
            let obs = [Observable::new(pauli_matrix(a))?, Observable::new(pauli_matrix(b))?];
            let counts = sample_counts(&born_distribution(state, &obs)?, shots, rng);
            out.insert(&format!("{a}{b}"), parity_mean(&counts, 2, &[true, true]), shots)?;
            for (label, mask) in [(format!("{a}I"), [true, false]), (format!("I{b}"), [false, true])] {
                let entry = singles.entry(label).or_insert((0.0, 0));
                entry.0 += parity_mean(&counts, 2, &mask) * shots as f64;
                entry.1 += shots;
            }
        }
    }
    for (label, (sum, n)) in singles {
        out.insert(&label, sum / n as f64, n)?;
    }
    Ok(out)
}

/// Populations and coherence settings of the four-setting GHZ witness.
///
/// `coherences[k]` is `⟨A_k ⊗ A_k ⊗ A_k⟩` with `A_k = cos(kπ/3) X + sin(kπ/3) Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessData {
    pub p000: f64,
    pub p111: f64,
    pub coherences: [f64; 3],
}

impl WitnessData {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("p000", self.p000), ("p111", self.p111)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::out_of_range(
                    "population",
                    format!("{name} = {v} outside [0, 1]"),
                ));
            }
        }
        for (k, &v) in self.coherences.iter().enumerate() {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::out_of_range(
                    "coherence",
                    format!("A_{k} term = {v} outside [-1, 1]"),
                ));
            }
        }
        Ok(())
    }
}

/// The coherence observable `A_k`.
pub fn witness_observable(k: usize) -> Observable {
    Observable::new(pauli::xy_plane(k as f64 * PI / 3.0)).expect("A_k is a valid ±1 observable")
}

/// `(P₀₀₀ + P₁₁₁)/2 + (1/6) Σ_k (−1)^k ⟨A_k^{⊗3}⟩`.
pub fn ghz_witness_fidelity(data: &WitnessData) -> Result<f64> {
    data.validate()?;
    let coherence: f64 = data
        .coherences
        .iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { *v } else { -*v })
        .sum();
    Ok((data.p000 + data.p111) / 2.0 + coherence / 6.0)
}

fn require_three_qubits(state: &DensityMatrix) -> Result<()> {
    if state.dim() != 8 {
        return Err(Error::DimensionMismatch {
            expected: 8,
            actual: state.dim(),
        });
    }
    Ok(())
}

/// Exact witness data of a three-qubit state.
pub fn exact_witness_data(state: &DensityMatrix) -> Result<WitnessData> {
    require_three_qubits(state)?;
    let m = state.matrix();
    let mut coherences = [0.0; 3];
    for (k, slot) in coherences.iter_mut().enumerate() {
        let a = witness_observable(k);
        let op = a.matrix().kron(a.matrix()).kron(a.matrix());
        *slot = expectation(state, &op)?.clamp(-1.0, 1.0);
    }
    Ok(WitnessData {
        p000: m[(0, 0)].re.clamp(0.0, 1.0),
        p111: m[(7, 7)].re.clamp(0.0, 1.0),
        coherences,
    })
}

/// Samples the witness: one Z-basis setting for the populations and one
/// setting per `A_k`, each with `shots` repetitions.
pub fn simulate_witness_sampling<R: Rng + ?Sized>(
    state: &DensityMatrix,
    shots: u64,
    rng: &mut R,
) -> Result<WitnessData> {
    if shots == 0 {
        return Err(Error::out_of_range(
            "shots",
            "at least one shot per setting is required",
        ));
    }
    require_three_qubits(state)?;
    let z = Observable::pauli_z();
    let counts = sample_counts(&born_distribution(state, &[z.clone(), z.clone(), z])?, shots, rng);
    let p000 = counts[0] as f64 / shots as f64;
    let p111 = counts[7] as f64 / shots as f64;
    let mut coherences = [0.0; 3];
    for (k, slot) in coherences.iter_mut().enumerate() {
        let a = witness_observable(k);
        let counts = sample_counts(&born_distribution(state, &[a.clone(), a.clone(), a])?, shots, rng);
        *slot = parity_mean(&counts, 3, &[true; 3]);
    }
    Ok(WitnessData { p000, p111, coherences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::fidelity_with_pure;
    use crate::rng::{substream, Stream};
    use crate::states::{apply_noise, make_target, NoiseKind, NoiseModel, TargetName};

    fn werner(name: TargetName, v: f64) -> DensityMatrix {
        apply_noise(
            &make_target(name),
            &NoiseModel::new(NoiseKind::WhiteNoise, 1.0 - v).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bell_expectations_reconstruct_bell_state() {
        let mut e = PauliExpectations::new();
        for label in pauli_labels().into_iter().skip(1) {
            let v = match label.as_str() {
                "XX" | "ZZ" => 1.0,
                "YY" => -1.0,
                _ => 0.0,
            };
            e.insert(&label, v, 0).unwrap();
        }
        let rho = tomography_2q(&e).unwrap();
        let target = make_target(TargetName::BellPhiPlus);
        assert!(rho.matrix().max_abs_diff(target.density_matrix().matrix()) < 1e-12);
        assert!((fidelity_with_pure(&rho, &target.ket).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn werner_expectations_give_closed_form_fidelity() {
        let mut e = PauliExpectations::new();
        for label in pauli_labels().into_iter().skip(1) {
            let v = match label.as_str() {
                "XX" | "ZZ" => 0.8,
                "YY" => -0.8,
                _ => 0.0,
            };
            e.insert(&label, v, 0).unwrap();
        }
        let rho = tomography_2q(&e).unwrap();
        let f = fidelity_with_pure(&rho, &make_target(TargetName::BellPhiPlus).ket).unwrap();
        assert!((f - (1.0 + 3.0 * 0.8) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_expectations_give_maximally_mixed() {
        let mut e = PauliExpectations::new();
        for label in pauli_labels().into_iter().skip(1) {
            e.insert(&label, 0.0, 0).unwrap();
        }
        let rho = tomography_2q(&e).unwrap();
        assert!(rho.matrix().max_abs_diff(DensityMatrix::maximally_mixed(4).matrix()) < 1e-15);
    }

    #[test]
    fn missing_label_rejected() {
        let mut e = PauliExpectations::new();
        e.insert("XX", 1.0, 0).unwrap();
        assert!(matches!(tomography_2q(&e), Err(Error::MissingLabel(_))));
        assert!(e.insert("II", 0.5, 0).is_err());
        assert!(e.insert("XQ", 0.5, 0).is_err());
        assert!(e.insert("XY", 1.5, 0).is_err());
    }

    #[test]
    fn tomography_exact_on_random_mixture() {
        let state = werner(TargetName::BellPhiPlus, 0.37);
        let e = PauliExpectations::exact(&state).unwrap();
        assert_eq!(e.value("II").unwrap(), 1.0);
        let raw = linear_inversion(&e).unwrap();
        assert!(raw.max_abs_diff(state.matrix()) < 1e-12);
    }

    #[test]
    fn non_psd_input_is_projected() {
        let mut e = PauliExpectations::new();
        for label in pauli_labels().into_iter().skip(1) {
            let v = match label.as_str() {
                "XX" | "ZZ" => 1.0,
                "YY" => -1.0,
                "ZI" => 0.3,
                _ => 0.0,
            };
            e.insert(&label, v, 0).unwrap();
        }
        let (values, _) = linear_inversion(&e).unwrap().hermitian_eigen().unwrap();
        assert!(values[0] < -1e-9);
        let rho = tomography_2q(&e).unwrap();
        assert!(rho.eigen().0.iter().all(|&v| v >= -1e-12));
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_rejects_zero_shots() {
        let mut rng = substream(1, Stream::User);
        let state = werner(TargetName::BellPhiPlus, 1.0);
        assert!(simulate_pauli_sampling(&state, 0, &mut rng).is_err());
        let ghz = werner(TargetName::Ghz3, 1.0);
        assert!(simulate_witness_sampling(&ghz, 0, &mut rng).is_err());
    }

    #[test]
    fn sampled_xx_on_bell_state() {
        let mut rng = substream(2, Stream::User);
        let state = werner(TargetName::BellPhiPlus, 1.0);
        let e = simulate_pauli_sampling(&state, 1_000_000, &mut rng).unwrap();
        assert!((e.value("XX").unwrap() - 1.0).abs() <= 0.004);
        assert_eq!(e.get("XI").unwrap().shots, 3_000_000);
    }

    #[test]
    fn sampled_werner_fidelity() {
        let mut rng = substream(3, Stream::User);
        let state = werner(TargetName::BellPhiPlus, 0.8);
        let e = simulate_pauli_sampling(&state, 100_000, &mut rng).unwrap();
        let f = fidelity_with_pure(&tomography_2q(&e).unwrap(), &make_target(TargetName::BellPhiPlus).ket).unwrap();
        assert!((f - 0.85).abs() < 0.01, "{f}");
    }

    #[test]
    fn ideal_ghz_witness() {
        let data = WitnessData {
            p000: 0.5,
            p111: 0.5,
            coherences: [1.0, -1.0, 1.0],
        };
        assert!((ghz_witness_fidelity(&data).unwrap() - 1.0).abs() < 1e-15);
        let exact = exact_witness_data(&werner(TargetName::Ghz3, 1.0)).unwrap();
        assert!((exact.coherences[1] + 1.0).abs() < 1e-12);
        assert!((ghz_witness_fidelity(&exact).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn white_noise_ghz_witness() {
        let data = exact_witness_data(&werner(TargetName::Ghz3, 0.92)).unwrap();
        assert!((ghz_witness_fidelity(&data).unwrap() - (1.0 + 7.0 * 0.92) / 8.0).abs() < 1e-12);
    }

    #[test]
    fn dephased_ghz_witness() {
        let data = WitnessData {
            p000: 0.5,
            p111: 0.5,
            coherences: [0.0; 3],
        };
        assert_eq!(ghz_witness_fidelity(&data).unwrap(), 0.5);
        let dephased = apply_noise(
            &make_target(TargetName::Ghz3),
            &NoiseModel::new(NoiseKind::Dephasing, 1.0).unwrap(),
        )
        .unwrap();
        let exact = exact_witness_data(&dephased).unwrap();
        assert!((ghz_witness_fidelity(&exact).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn witness_validates_ranges() {
        let data = WitnessData {
            p000: 1.2,
            p111: 0.0,
            coherences: [0.0; 3],
        };
        assert!(ghz_witness_fidelity(&data).is_err());
        let data = WitnessData {
            p000: f64::NAN,
            p111: 0.0,
            coherences: [0.0; 3],
        };
        assert!(ghz_witness_fidelity(&data).is_err());
    }
}
