//! Target states and the noise models used to produce physical states.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{ComplexMatrix, DensityMatrix, Ket, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetName {
    BellPhiPlus,
    Ghz3,
}

impl TargetName {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetName::BellPhiPlus => "bell_phi_plus",
            TargetName::Ghz3 => "ghz3",
        }
    }

    pub fn num_qubits(self) -> usize {
        match self {
            TargetName::BellPhiPlus => 2,
            TargetName::Ghz3 => 3,
        }
    }
}

impl fmt::Display for TargetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bell_phi_plus" => Ok(TargetName::BellPhiPlus),
            "ghz3" => Ok(TargetName::Ghz3),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub name: TargetName,
    pub ket: Ket,
}

impl TargetState {
    pub fn dim(&self) -> usize {
        self.ket.dim()
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::from_ket(&self.ket)
    }
}

/// `(|0…0⟩ + |1…1⟩)/√2` on `qubits` qubits (H ↔ 0, V ↔ 1).
fn cat_ket(qubits: usize) -> Ket {
    let dim = 1 << qubits;
    let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
    amplitudes[0] = C64::new(FRAC_1_SQRT_2, 0.0);
    amplitudes[dim - 1] = C64::new(FRAC_1_SQRT_2, 0.0);
    Ket::new(amplitudes).expect("cat state is normalized")
}

pub fn make_target(name: TargetName) -> TargetState {
    TargetState {
        name,
        ket: cat_ket(name.num_qubits()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    WhiteNoise,
    Dephasing,
    None,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::WhiteNoise => "white_noise",
            NoiseKind::Dephasing => "dephasing",
            NoiseKind::None => "none",
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white_noise" => Ok(NoiseKind::WhiteNoise),
            "dephasing" => Ok(NoiseKind::Dephasing),
            "none" => Ok(NoiseKind::None),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub strength: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, strength: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::out_of_range("strength", format!("{strength} not in [0, 1]")));
        }
        Ok(NoiseModel { kind, strength })
    }

    pub fn noiseless() -> Self {
        NoiseModel {
            kind: NoiseKind::None,
            strength: 0.0,
        }
    }
}

/// Physical state produced by `model` acting on `target`.
///
/// White noise: `v|ψ⟩⟨ψ| + (1 − v) I/d` with `v = 1 − strength`.
/// Dephasing: the `|0…0⟩⟨1…1|` coherences are scaled by `1 − strength`.
pub fn apply_noise(target: &TargetState, model: &NoiseModel) -> Result<DensityMatrix> {
    let model = NoiseModel::new(model.kind, model.strength)?;
    let pure = target.ket.projector();
    let dim = target.dim();
    let matrix = match model.kind {
        NoiseKind::None => pure,
        NoiseKind::WhiteNoise => {
            let v = 1.0 - model.strength;
            &pure.scale_real(v) + &ComplexMatrix::identity(dim).scale_real((1.0 - v) / dim as f64)
        }
        NoiseKind::Dephasing => {
            let mut m = pure;
            let keep = 1.0 - model.strength;
            m[(0, dim - 1)] *= keep;
            m[(dim - 1, 0)] *= keep;
            m
        }
    };
    DensityMatrix::new(matrix)
}

/// Closed-form fidelity of `apply_noise(target, model)` with the target.
pub fn noisy_fidelity(target: &TargetState, model: &NoiseModel) -> f64 {
    let d = target.dim() as f64;
    match model.kind {
        NoiseKind::None => 1.0,
        NoiseKind::WhiteNoise => {
            let v = 1.0 - model.strength;
            v + (1.0 - v) / d
        }
        NoiseKind::Dephasing => 1.0 - model.strength / 2.0,
    }
}

/// Inverse of [`noisy_fidelity`]: the strength giving `desired_fidelity`.
pub fn fidelity_to_noise_strength(target: &TargetState, kind: NoiseKind, desired_fidelity: f64) -> Result<f64> {
    let d = target.dim() as f64;
    let (min, max) = match kind {
        NoiseKind::None => (1.0, 1.0),
        NoiseKind::WhiteNoise => (1.0 / d, 1.0),
        NoiseKind::Dephasing => (0.5, 1.0),
    };
    // tolerate round-off at the edges of the reachable interval
    if !(desired_fidelity >= min - 1e-12 && desired_fidelity <= max + 1e-12) {
        return Err(Error::UnreachableFidelity {
            fidelity: desired_fidelity,
            model: kind.as_str(),
            min,
            max,
        });
    }
    let f = desired_fidelity.clamp(min, max);
    let strength = match kind {
        NoiseKind::None => 0.0,
        NoiseKind::WhiteNoise => {
            let v = (d * f - 1.0) / (d - 1.0);
            1.0 - v
        }
        NoiseKind::Dephasing => 2.0 * (1.0 - f),
    };
    Ok(strength.clamp(0.0, 1.0))
}

/// Deterministic per-emission noise schedule.
///
/// Emission `i` of `total` sees a fidelity interpolated linearly from
/// `start_fidelity` to `end_fidelity`, relaxing the identical-copies source
/// model to independent but drifting copies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDrift {
    pub start_fidelity: f64,
    pub end_fidelity: f64,
    pub total: u64,
}

impl LinearDrift {
    pub fn fidelity_at(&self, index: u64) -> f64 {
        if self.total <= 1 {
            return self.start_fidelity;
        }
        let t = (index.min(self.total - 1)) as f64 / (self.total - 1) as f64;
        self.start_fidelity + t * (self.end_fidelity - self.start_fidelity)
    }

    pub fn strength_at(&self, target: &TargetState, kind: NoiseKind, index: u64) -> Result<f64> {
        fidelity_to_noise_strength(target, kind, self.fidelity_at(index))
    }
}
