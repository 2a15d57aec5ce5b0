//! Nonlocal games built from the CHSH and Mermin inequalities.
//!
//! Each game has four settings chosen uniformly at random. The winning
//! outcomes of a setting are the most likely outcomes of the ideal target
//! state, so they are derived here rather than tabulated by hand.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    born_distribution, outcome_bits, outcome_index, outcome_parity, pauli, DensityMatrix, Observable,
    OutcomeDistribution,
};
use crate::states::{apply_noise, fidelity_to_noise_strength, NoiseKind, NoiseModel, TargetName, TargetState};

/// Relative tolerance separating winning from losing outcomes.
const WINNING_REL_TOL: f64 = 1e-6;

/// Residual below which a calibrated `P(η)` counts as linear.
pub const LINEAR_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameName {
    Chsh,
    Mermin3,
}

impl GameName {
    pub fn as_str(self) -> &'static str {
        match self {
            GameName::Chsh => "chsh",
            GameName::Mermin3 => "mermin3",
        }
    }

    pub fn parties(self) -> usize {
        match self {
            GameName::Chsh => 2,
            GameName::Mermin3 => 3,
        }
    }

    /// The target state the game certifies.
    pub fn target(self) -> TargetName {
        match self {
            GameName::Chsh => TargetName::BellPhiPlus,
            GameName::Mermin3 => TargetName::Ghz3,
        }
    }
}

impl fmt::Display for GameName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GameName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chsh" => Ok(GameName::Chsh),
            "mermin3" => Ok(GameName::Mermin3),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub name: GameName,
    /// Input tuples, one per setting.
    pub settings: Vec<Vec<u8>>,
    /// Per-setting, per-party observables.
    pub observables: Vec<Vec<Observable>>,
    /// Per-setting mask over outcome indices.
    pub winning: Vec<Vec<bool>>,
    pub p_qm: f64,
    pub classical_bound: f64,
    pub quantum_bound: f64,
    /// Sign of each setting's correlator in the inequality.
    pub sign: Vec<i8>,
    /// Global sign making the ideal state's inequality value positive.
    pub orientation: i8,
    /// Robustness constant in `P_η = P_QM − cη`.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub setting: usize,
    pub outcome: Vec<u8>,
    pub win: bool,
}

fn chsh_layout() -> (Vec<Vec<u8>>, Vec<Vec<Observable>>, Vec<i8>) {
    let a = [Observable::pauli_x(), Observable::pauli_z()];
    let b = [
        Observable::new((&pauli::x() + &pauli::z()).scale_real(FRAC_1_SQRT_2)).unwrap(),
        Observable::new((&pauli::x() - &pauli::z()).scale_real(FRAC_1_SQRT_2)).unwrap(),
    ];
    let settings = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
    let observables = settings
        .iter()
        .map(|s| vec![a[s[0] as usize].clone(), b[s[1] as usize].clone()])
        .collect();
    (settings, observables, vec![1, 1, 1, -1])
}

fn mermin_layout() -> (Vec<Vec<u8>>, Vec<Vec<Observable>>, Vec<i8>) {
    // input 0 ↔ Y, input 1 ↔ X for every party
    let local = [Observable::pauli_y(), Observable::pauli_x()];
    let settings = vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0], vec![1, 1, 1]];
    let observables = settings
        .iter()
        .map(|s| s.iter().map(|&i| local[i as usize].clone()).collect())
        .collect();
    (settings, observables, vec![1, 1, 1, -1])
}

/// Builds the game `name` around the ideal state `ideal`.
///
/// The robustness constant defaults to the white-noise calibration; use
/// [`GameSpec::with_c`] to override it.
pub fn build_game(name: GameName, ideal: &TargetState) -> Result<GameSpec> {
    let expected_dim = 1usize << name.parties();
    if ideal.dim() != expected_dim {
        return Err(Error::DimensionMismatch {
            expected: expected_dim,
            actual: ideal.dim(),
        });
    }
    let (settings, observables, sign) = match name {
        GameName::Chsh => chsh_layout(),
        GameName::Mermin3 => mermin_layout(),
    };
    let (classical_bound, quantum_bound) = match name {
        GameName::Chsh => (2.0, 2.0 * SQRT_2),
        GameName::Mermin3 => (2.0, 4.0),
    };

    let rho = ideal.density_matrix();
    let mut winning = Vec::with_capacity(settings.len());
    let mut win_parity = Vec::with_capacity(settings.len());
    let mut total_win = 0.0;
    for (s, obs) in observables.iter().enumerate() {
        let dist = born_distribution(&rho, obs)?;
        let probs = dist.probs();
        let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        if max - min <= WINNING_REL_TOL * max {
            return Err(Error::DegenerateGame { setting: s });
        }
        let mask: Vec<bool> = probs.iter().map(|&p| p >= max * (1.0 - WINNING_REL_TOL)).collect();
        let parities: Vec<u8> = (0..probs.len()).filter(|&i| mask[i]).map(outcome_parity).collect();
        win_parity.push(if parities.iter().all(|&p| p == parities[0]) {
            Some(parities[0])
        } else {
            None
        });
        total_win += probs.iter().zip(&mask).filter(|(_, &w)| w).map(|(p, _)| p).sum::<f64>();
        winning.push(mask);
    }
    let p_qm = total_win / settings.len() as f64;

    // Winning sets must be parity classes whose parity agrees with the
    // inequality signs up to one global flip.
    let mut orientation: Option<i8> = None;
    for (s, parity) in win_parity.iter().enumerate() {
        let parity =
            parity.ok_or_else(|| Error::out_of_range("winning_sets", format!("setting {s} is not a parity class")))?;
        let aligned = if parity == 0 { 1 } else { -1 } * sign[s];
        match orientation {
            None => orientation = Some(aligned),
            Some(o) if o == aligned => {}
            Some(_) => {
                return Err(Error::out_of_range(
                    "winning_sets",
                    format!("setting {s} parity disagrees with the inequality signs"),
                ))
            }
        }
    }

    let mut game = GameSpec {
        name,
        settings,
        observables,
        winning,
        p_qm,
        classical_bound,
        quantum_bound,
        sign,
        orientation: orientation.unwrap_or(1),
        c: f64::NAN,
    };
    game.c = calibrate_c(&game, ideal, NoiseKind::WhiteNoise)?.c;
    Ok(game)
}

impl GameSpec {
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn parties(&self) -> usize {
        self.name.parties()
    }

    pub fn num_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn num_outcomes(&self) -> usize {
        1 << self.parties()
    }

    pub fn is_win(&self, setting: usize, outcome: &[u8]) -> bool {
        self.winning[setting][outcome_index(outcome)]
    }

    /// Winning outcome tuples of `setting`.
    pub fn winning_set(&self, setting: usize) -> Vec<Vec<u8>> {
        self.winning[setting]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w)
            .map(|(i, _)| outcome_bits(i, self.parties()))
            .collect()
    }

    /// Index of the setting with input tuple `inputs`.
    pub fn setting_index(&self, inputs: &[u8]) -> Option<usize> {
        self.settings.iter().position(|s| s == inputs)
    }

    /// Per-setting outcome distributions of `state`.
    pub fn distributions(&self, state: &DensityMatrix) -> Result<Vec<OutcomeDistribution>> {
        self.observables
            .iter()
            .map(|obs| born_distribution(state, obs))
            .collect()
    }

    /// Winning probability of `state` under uniform setting choice.
    pub fn win_probability(&self, state: &DensityMatrix) -> Result<f64> {
        let dists = self.distributions(state)?;
        Ok(dists
            .iter()
            .zip(&self.winning)
            .map(|(d, mask)| {
                d.probs()
                    .iter()
                    .zip(mask)
                    .filter(|(_, &w)| w)
                    .map(|(p, _)| p)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.num_settings() as f64)
    }

    /// Inequality value from per-setting distributions (exact or empirical).
    pub fn inequality_value(&self, dists: &[OutcomeDistribution]) -> f64 {
        let freqs: Vec<Vec<f64>> = dists.iter().map(|d| d.probs().to_vec()).collect();
        self.value_from_frequencies(&freqs)
    }

    fn value_from_frequencies(&self, freqs: &[Vec<f64>]) -> f64 {
        let sum: f64 = freqs
            .iter()
            .zip(&self.sign)
            .map(|(f, &sign)| {
                let corr: f64 = f
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if outcome_parity(i) == 0 { *p } else { -p })
                    .sum();
                sign as f64 * corr
            })
            .sum();
        self.orientation as f64 * sum
    }
}

/// Per-setting outcome counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub counts: Vec<Vec<u64>>,
}

impl OutcomeCounts {
    pub fn new(game: &GameSpec) -> Self {
        OutcomeCounts {
            counts: vec![vec![0; game.num_outcomes()]; game.num_settings()],
        }
    }

    pub fn record(&mut self, round: &RoundResult) {
        self.counts[round.setting][outcome_index(&round.outcome)] += 1;
    }

    pub fn setting_total(&self, setting: usize) -> u64 {
        self.counts[setting].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn wins(&self, game: &GameSpec) -> u64 {
        self.counts
            .iter()
            .zip(&game.winning)
            .map(|(row, mask)| row.iter().zip(mask).filter(|(_, &w)| w).map(|(n, _)| n).sum::<u64>())
            .sum()
    }
}

/// Inequality estimate (`S` for CHSH, `B` for Mermin) from counts.
pub fn inequality_value_from_counts(game: &GameSpec, counts: &OutcomeCounts) -> Result<f64> {
    if counts.counts.len() != game.num_settings() {
        return Err(Error::DimensionMismatch {
            expected: game.num_settings(),
            actual: counts.counts.len(),
        });
    }
    let mut freqs = Vec::with_capacity(game.num_settings());
    for (s, row) in counts.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            return Err(Error::MissingCounts(s));
        }
        freqs.push(row.iter().map(|&n| n as f64 / total as f64).collect());
    }
    Ok(game.value_from_frequencies(&freqs))
}

/// Returns `(p_exp, b_est)`.
///
/// Under uniform settings and parity-class winning sets the two satisfy
/// `p_exp = 1/2 + b_est/8` exactly when every setting has the same count.
pub fn win_probability_identity_check(game: &GameSpec, counts: &OutcomeCounts) -> Result<(f64, f64)> {
    let b = inequality_value_from_counts(game, counts)?;
    let p = counts.wins(game) as f64 / counts.total() as f64;
    Ok((p, b))
}

/// Win probability implied by an inequality value.
pub fn win_probability_from_value(value: f64) -> f64 {
    0.5 + value / 8.0
}

/// Precomputed cumulative outcome tables for one physical state.
#[derive(Debug, Clone)]
pub struct RoundSampler {
    cumulative: Vec<Vec<f64>>,
}

impl RoundSampler {
    pub fn new(game: &GameSpec, state: &DensityMatrix) -> Result<Self> {
        let cumulative = game
            .distributions(state)?
            .iter()
            .map(|d| {
                let mut acc = 0.0;
                d.probs()
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(RoundSampler { cumulative })
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, setting: usize, rng: &mut R) -> usize {
        let table = &self.cumulative[setting];
        let u = rng.random::<f64>() * table[table.len() - 1];
        table.iter().position(|&c| u < c).unwrap_or(table.len() - 1)
    }

    pub fn play<R1, R2>(&self, game: &GameSpec, setting_rng: &mut R1, outcome_rng: &mut R2) -> RoundResult
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let setting = setting_rng.random_range(0..game.num_settings());
        self.play_setting(game, setting, outcome_rng)
    }

    pub fn play_setting<R: Rng + ?Sized>(&self, game: &GameSpec, setting: usize, outcome_rng: &mut R) -> RoundResult {
        let index = self.sample_outcome(setting, outcome_rng);
        RoundResult {
            setting,
            outcome: outcome_bits(index, game.parties()),
            win: game.winning[setting][index],
        }
    }
}

/// Plays one round: uniform setting, Born-rule outcome.
pub fn play_round<R1, R2>(
    game: &GameSpec,
    state: &DensityMatrix,
    setting_rng: &mut R1,
    outcome_rng: &mut R2,
) -> Result<RoundResult>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    Ok(RoundSampler::new(game, state)?.play(game, setting_rng, outcome_rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub c: f64,
    /// Largest deviation of `P_QM − P(η)` from `cη` on the grid.
    pub residual: f64,
}

impl Calibration {
    pub fn is_linear(&self) -> bool {
        self.residual <= LINEAR_RESIDUAL_TOL
    }
}

/// Least-squares slope of `P_QM − P_win(η)` against infidelity `η`.
///
/// The fit runs through the origin over `η ∈ {0.01, …, 0.20}`.
pub fn calibrate_c(game: &GameSpec, target: &TargetState, kind: NoiseKind) -> Result<Calibration> {
    if kind == NoiseKind::None {
        return Err(Error::out_of_range("noise kind", "calibration needs a noise model"));
    }
    let mut points = Vec::with_capacity(20);
    for k in 1..=20 {
        let eta = k as f64 * 0.01;
        let strength = fidelity_to_noise_strength(target, kind, 1.0 - eta)?;
        let rho = apply_noise(target, &NoiseModel::new(kind, strength)?)?;
        points.push((eta, game.p_qm - game.win_probability(&rho)?));
    }
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let c = sxy / sxx;
    let residual = points.iter().map(|(x, y)| (y - c * x).abs()).fold(0.0, f64::max);
    Ok(Calibration { c, residual })
}
