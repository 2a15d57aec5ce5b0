//! Versioned TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certify::p_eta;
use crate::error::{Error, Result};
use crate::games::{build_game, calibrate_c, GameName, GameSpec};
use crate::states::{fidelity_to_noise_strength, make_target, NoiseKind, TargetState};
use crate::switchsim::SwitchConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_delta() -> f64 {
    0.01
}

fn default_fidelity() -> f64 {
    1.0
}

fn default_noise() -> NoiseKind {
    NoiseKind::WhiteNoise
}

/// Default infidelity targets for each game.
pub fn default_eta_targets(game: GameName) -> Vec<f64> {
    match game {
        GameName::Chsh => vec![0.1, 0.15, 0.2],
        GameName::Mermin3 => vec![0.08, 0.14, 0.2],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Fidelity of each emitted state with the target.
    #[serde(default = "default_fidelity")]
    pub fidelity: f64,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    /// Fidelity of the last emission under a linear drift starting at
    /// `fidelity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_end_fidelity: Option<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            fidelity: default_fidelity(),
            noise: default_noise(),
            drift_end_fidelity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub game: GameName,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Infidelity targets tracked in the confidence trace.
    #[serde(default)]
    pub eta_targets: Vec<f64>,
    /// Robustness constant; calibrated from the noise model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Run length as an emission count. Exclusive with
    /// `switch.total_duration`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_emissions: Option<u64>,
    /// Shots per setting for the user-side estimate; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_estimate_shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub source: SourceConfig,
    pub switch: SwitchConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn target(&self) -> TargetState {
        make_target(self.game.target())
    }

    /// Validates every field and fills in every default, including the
    /// calibrated `c`. Resolving twice is a no-op.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            ));
        }
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(Error::config("delta", format!("{} not in (0, 1)", cfg.delta)));
        }
        cfg.switch.validate()?;
        if cfg.switch.num_photons != cfg.game.parties() {
            return Err(Error::config(
                "switch.num_photons",
                format!(
                    "{} needs {} photons, got {}",
                    cfg.game.as_str(),
                    cfg.game.parties(),
                    cfg.switch.num_photons
                ),
            ));
        }
        match (cfg.total_emissions, cfg.switch.total_duration > 0.0) {
            (Some(0), _) => return Err(Error::config("total_emissions", "must be positive")),
            (Some(_), true) | (None, false) => {
                return Err(Error::config(
                    "total_emissions",
                    "set exactly one of total_emissions or switch.total_duration",
                ))
            }
            _ => {}
        }
        if cfg.user_estimate_shots == Some(0) {
            return Err(Error::config("user_estimate_shots", "must be positive"));
        }

        let target = cfg.target();
        let kind = cfg.source.noise;
        for (field, f) in [
            ("source.fidelity", Some(cfg.source.fidelity)),
            ("source.drift_end_fidelity", cfg.source.drift_end_fidelity),
        ] {
            let Some(f) = f else { continue };
            if kind == NoiseKind::None && f != 1.0 {
                return Err(Error::config(field, "noise = \"none\" requires fidelity 1"));
            }
            fidelity_to_noise_strength(&target, kind, f).map_err(|e| Error::config(field, e.to_string()))?;
        }

        let game = build_game(cfg.game, &target)?;
        let c = match cfg.c {
            Some(c) if !(c > 0.0 && c.is_finite()) => return Err(Error::config("c", format!("{c} must be positive"))),
            Some(c) => c,
            None => {
                let calibration_kind = if kind == NoiseKind::None {
                    NoiseKind::WhiteNoise
                } else {
                    kind
                };
                calibrate_c(&game, &target, calibration_kind)?.c
            }
        };
        cfg.c = Some(c);
        let game = game.with_c(c);

        if cfg.eta_targets.is_empty() {
            cfg.eta_targets = default_eta_targets(cfg.game);
        }
        for &eta in &cfg.eta_targets {
            let valid = eta > 0.0 && eta < 1.0 && p_eta(&game, eta).is_ok_and(|p| p < 1.0);
            if !valid {
                return Err(Error::config(
                    "eta_targets",
                    format!("{eta} gives no valid P_eta for c = {c}"),
                ));
            }
        }
        Ok(cfg)
    }

    /// Game with the configured `c`. Call on a resolved config.
    pub fn game_spec(&self) -> Result<GameSpec> {
        let c = self.c.ok_or_else(|| Error::config("c", "config not resolved"))?;
        Ok(build_game(self.game, &self.target())?.with_c(c))
    }
}
