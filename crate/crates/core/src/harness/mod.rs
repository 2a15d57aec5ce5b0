//! End-to-end experiments: source, switches, game and certification wired
//! together, with file artifacts.
//!
//! A run writes `config.toml` (every default filled in), `events.jsonl`,
//! `summary.json`, `trace.csv`, `bits.txt` and, when a target is certified,
//! `certificate.json`. All writes go through a temporary file and a rename.

mod config;
mod log;

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{default_eta_targets, ExperimentConfig, SourceConfig, SCHEMA_VERSION};
pub use log::{certify_from_log, events_jsonl, read_events, replay_rows, trace_csv, EventRow, Replay};

use crate::certify::{issue_certificate, Certificate, CertificateRequest, CertificationState, TracePoint};
use crate::error::{Error, Result};
use crate::estimate::{ghz_witness_fidelity, simulate_pauli_sampling, simulate_witness_sampling, tomography_2q};
use crate::games::{GameName, RoundSampler};
use crate::qcore::{fidelity_with_pure, DensityMatrix};
use crate::rng::{substream, Stream};
use crate::states::{apply_noise, fidelity_to_noise_strength, LinearDrift, NoiseModel, TargetState};
use crate::switchsim::{route_emissions, run_routing, simulate_emission_count, RoutingSummary, Station};

/// First verifier count at which a target's confidence reached `1 − δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub eta: f64,
    pub n_ver: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub game: GameName,
    pub target: String,
    pub seed: u64,
    pub c: f64,
    pub delta: f64,
    pub routing: RoutingSummary,
    /// Emission time of the last event, in seconds.
    pub simulated_time: f64,
    pub n_wins: u64,
    pub p_exp: Option<f64>,
    /// Infidelity bound at confidence `1 − δ` after the last round.
    pub eta_final: Option<f64>,
    pub first_crossings: Vec<Crossing>,
    /// Strictest configured target certified at the end of the run.
    pub certified_eta: Option<f64>,
    /// User-side fidelity estimate, when configured.
    pub user_fidelity: Option<f64>,
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub events: Vec<EventRow>,
    pub summary: RunSummary,
    pub trace: Vec<TracePoint>,
    pub certificate: Option<Certificate>,
}

fn noisy_state(target: &TargetState, cfg: &ExperimentConfig, fidelity: f64) -> Result<DensityMatrix> {
    let strength = fidelity_to_noise_strength(target, cfg.source.noise, fidelity)?;
    apply_noise(target, &NoiseModel::new(cfg.source.noise, strength)?)
}

fn user_estimate(target: &TargetState, state: &DensityMatrix, game: GameName, shots: u64, seed: u64) -> Result<f64> {
    let mut rng = substream(seed, Stream::User);
    match game {
        GameName::Chsh => {
            let rho = tomography_2q(&simulate_pauli_sampling(state, shots, &mut rng)?)?;
            fidelity_with_pure(&rho, &target.ket)
        }
        GameName::Mermin3 => ghz_witness_fidelity(&simulate_witness_sampling(state, shots, &mut rng)?),
    }
}

/// Runs one experiment. The config is resolved first; the returned copy has
/// every default filled in.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let cfg = config.resolve()?;
    let game = cfg.game_spec()?;
    let target = cfg.target();

    let mut emission_rng = substream(cfg.seed, Stream::Emission);
    let mut routing_rng = substream(cfg.seed, Stream::Routing);
    let (routing_events, routing) = match cfg.total_emissions {
        Some(n) => {
            let times = simulate_emission_count(cfg.switch.emission_rate, n as usize, &mut emission_rng)?;
            let events = route_emissions(&times, &cfg.switch, &mut routing_rng);
            let summary = RoutingSummary::from_events(&events);
            (events, summary)
        }
        None => run_routing(&cfg.switch, &mut emission_rng, &mut routing_rng)?,
    };
    if routing.n_ver == 0 || routing.n_user == 0 {
        return Err(Error::out_of_range(
            "routing",
            format!(
                "run produced {} user and {} verifier events",
                routing.n_user, routing.n_ver
            ),
        ));
    }

    let mut state = CertificationState::new(game.clone(), routing.mu, cfg.delta, cfg.eta_targets.clone())?;
    let mut settings_rng = substream(cfg.seed, Stream::Settings);
    let mut outcomes_rng = substream(cfg.seed, Stream::Outcomes);
    let total = routing_events.len() as u64;
    let drift = cfg.source.drift_end_fidelity.map(|end| LinearDrift {
        start_fidelity: cfg.source.fidelity,
        end_fidelity: end,
        total,
    });
    let fixed_sampler = match drift {
        None => Some(RoundSampler::new(
            &game,
            &noisy_state(&target, &cfg, cfg.source.fidelity)?,
        )?),
        Some(_) => None,
    };

    let goal = 1.0 - cfg.delta;
    let mut crossings: Vec<Crossing> = cfg
        .eta_targets
        .iter()
        .map(|&eta| Crossing { eta, n_ver: None })
        .collect();
    let mut events = Vec::with_capacity(routing_events.len());
    let mut trace = Vec::with_capacity(routing.n_ver as usize);
    for (i, ev) in routing_events.iter().enumerate() {
        let mut row = EventRow {
            i: i as u64,
            t: ev.emission_time,
            station: ev.station,
            setting: Vec::new(),
            outcomes: Vec::new(),
            win: None,
        };
        if ev.station == Station::Verifier {
            let round = match (&fixed_sampler, drift) {
                (Some(sampler), _) => sampler.play(&game, &mut settings_rng, &mut outcomes_rng),
                (None, Some(d)) => {
                    let rho = noisy_state(&target, &cfg, d.fidelity_at(i as u64))?;
                    RoundSampler::new(&game, &rho)?.play(&game, &mut settings_rng, &mut outcomes_rng)
                }
                (None, None) => unreachable!("sampler exists without drift"),
            };
            row.setting = game.settings[round.setting].clone();
            row.outcomes = round.outcome.clone();
            row.win = Some(round.win);
            let point = state.accumulate(&round);
            for (crossing, &c) in crossings.iter_mut().zip(&point.confidences) {
                if crossing.n_ver.is_none() && c >= goal {
                    crossing.n_ver = Some(point.n_ver);
                }
            }
            trace.push(point);
        }
        events.push(row);
    }

    let final_point = state.trace_point();
    let mut passing: Vec<f64> = cfg
        .eta_targets
        .iter()
        .zip(&final_point.confidences)
        .filter(|(_, &c)| c >= goal)
        .map(|(&eta, _)| eta)
        .collect();
    passing.sort_by(f64::total_cmp);
    let certificate = passing
        .first()
        .map(|&eta| {
            issue_certificate(
                &state,
                &CertificateRequest {
                    target: target.name,
                    eta,
                    n_total: total,
                    seed: cfg.seed,
                },
            )
        })
        .transpose()?;

    let user_fidelity = match cfg.user_estimate_shots {
        Some(shots) => Some(user_estimate(
            &target,
            &noisy_state(&target, &cfg, cfg.source.fidelity)?,
            cfg.game,
            shots,
            cfg.seed,
        )?),
        None => None,
    };

    let summary = RunSummary {
        game: cfg.game,
        target: target.name.as_str().to_string(),
        seed: cfg.seed,
        c: game.c,
        delta: cfg.delta,
        simulated_time: routing_events.last().map_or(0.0, |e| e.emission_time),
        routing,
        n_wins: state.n_wins(),
        p_exp: state.p_exp(),
        eta_final: final_point.eta.value(),
        first_crossings: crossings,
        certified_eta: certificate.as_ref().map(|c| c.eta_certified),
        user_fidelity,
    };
    Ok(Experiment {
        config: cfg,
        events,
        summary,
        trace,
        certificate,
    })
}

impl Experiment {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.config.eta_targets, self.config.delta, &self.trace)
    }

    pub fn bits(&self) -> String {
        let mut s: String = self
            .events
            .iter()
            .filter_map(|e| match e.station {
                Station::User => Some('0'),
                Station::Verifier => Some('1'),
                _ => None,
            })
            .collect();
        s.push('\n');
        s
    }

    /// Writes all artifacts into `dir`, creating it if needed.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("config.toml"), self.config.to_toml()?.as_bytes())?;
        write_atomic(&dir.join("events.jsonl"), events_jsonl(&self.events)?.as_bytes())?;
        write_atomic(&dir.join("summary.json"), &json_bytes(&self.summary)?)?;
        write_atomic(&dir.join("trace.csv"), self.trace_csv().as_bytes())?;
        write_atomic(&dir.join("bits.txt"), self.bits().as_bytes())?;
        if let Some(cert) = &self.certificate {
            write_atomic(&dir.join("certificate.json"), &json_bytes(cert)?)?;
        }
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads `summary.json` back.
pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mermin_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
game = "mermin3"
seed = 11
total_emissions = 2000

[switch]
num_photons = 3
switch_frequency = 800000.0
emission_rate = 62000.0
"#,
        )
        .unwrap()
    }

    #[test]
    fn ideal_mermin_run_certifies_early() {
        let exp = run_experiment(&mermin_config()).unwrap();
        let s = &exp.summary;
        assert_eq!(s.routing.total, 2000);
        assert_eq!(s.n_wins, s.routing.n_ver);
        let first = s.first_crossings.iter().find(|c| c.eta == 0.08).unwrap();
        // closed form 1 − (1 − 4·0.08/7)^n first reaches 0.99 at n = 99
        assert_eq!(first.n_ver, Some(99));
        assert_eq!(exp.certificate.as_ref().unwrap().eta_certified, 0.08);
    }

    #[test]
    fn rows_reconcile_with_summary() {
        let exp = run_experiment(&mermin_config()).unwrap();
        let count = |st: Station| exp.events.iter().filter(|e| e.station == st).count() as u64;
        let r = &exp.summary.routing;
        assert_eq!(count(Station::User), r.n_user);
        assert_eq!(count(Station::Verifier), r.n_ver);
        assert_eq!(count(Station::Cross), r.n_cross);
        assert_eq!(count(Station::Lost), r.n_lost);
        assert_eq!(exp.events.len() as u64, r.total);
        assert_eq!(exp.trace.len() as u64, r.n_ver);
        assert!(exp.events.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn replay_reproduces_trace() {
        let exp = run_experiment(&mermin_config()).unwrap();
        let game = exp.config.game_spec().unwrap();
        let replay = replay_rows(
            &exp.events,
            &game,
            exp.config.delta,
            &exp.config.eta_targets,
            Path::new("mem"),
        )
        .unwrap();
        assert_eq!(
            trace_csv(&exp.config.eta_targets, exp.config.delta, &replay.trace),
            exp.trace_csv()
        );
        assert_eq!(replay.state.mu(), exp.summary.routing.mu);
    }

    #[test]
    fn tampered_win_rejected() {
        let exp = run_experiment(&mermin_config()).unwrap();
        let mut rows = exp.events.clone();
        let k = rows.iter().position(|r| r.station == Station::Verifier).unwrap();
        rows[k].win = Some(false);
        let game = exp.config.game_spec().unwrap();
        let err = replay_rows(&rows, &game, 0.01, &[0.08], Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Log { line, .. } if line == k + 1));
    }

    #[test]
    fn drift_lowers_late_win_rate() {
        let mut cfg = mermin_config();
        cfg.source.fidelity = 1.0;
        cfg.source.drift_end_fidelity = Some(0.8);
        cfg.total_emissions = Some(4000);
        let exp = run_experiment(&cfg).unwrap();
        let wins: Vec<bool> = exp.events.iter().filter_map(|e| e.win).collect();
        let half = wins.len() / 2;
        let early = wins[..half].iter().filter(|&&w| w).count();
        let late = wins[half..].iter().filter(|&&w| w).count();
        assert!(late < early, "{late} vs {early}");
    }
}
