//! Chernoff/KL confidence bound, the fixed-confidence infidelity solver,
//! sample-count estimates, the streaming accumulator and certificates.
//!
//! All logarithms are natural. The confidence that the unmeasured states
//! have average fidelity above `1 − η` after `n` verifier rounds with
//! empirical win rate `p_exp` is
//!
//! ```text
//! C = 1 − exp(−D(p_exp ‖ P_η) · n),    P_η = P_QM − c·η
//! ```
//!
//! and is zero whenever `p_exp ≤ P_η`.

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{GameSpec, RoundResult};
use crate::states::TargetName;

/// Bracket width at which the infidelity bisection stops.
const ETA_BISECTION_TOL: f64 = 1e-13;

fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Binary Kullback-Leibler divergence `D(x ‖ y)` in nats.
pub fn kl_divergence(x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::out_of_range("y", format!("{y} not in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::out_of_range("x", format!("{x} not in [0, 1]")));
    }
    Ok((xlogy_ratio(x, y) + xlogy_ratio(1.0 - x, 1.0 - y)).max(0.0))
}

/// `1 − exp(−D(p_exp ‖ p_eta) · n_ver)`, or 0 when `p_exp ≤ p_eta`.
pub fn confidence(p_exp: f64, p_eta: f64, n_ver: f64) -> Result<f64> {
    if !(p_eta > 0.0 && p_eta < 1.0) {
        return Err(Error::out_of_range("p_eta", format!("{p_eta} not in (0, 1)")));
    }
    if n_ver < 0.0 || n_ver.is_nan() {
        return Err(Error::out_of_range("n_ver", format!("{n_ver} < 0")));
    }
    if p_exp <= p_eta {
        return Ok(0.0);
    }
    let d = kl_divergence(p_exp, p_eta)?;
    Ok((-(-d * n_ver).exp_m1()).clamp(0.0, 1.0))
}

/// `P_η = P_QM − c·η`.
pub fn p_eta(game: &GameSpec, eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::out_of_range("eta", format!("{eta} not in [0, 1)")));
    }
    let p = game.p_qm - game.c * eta;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::out_of_range(
            "eta",
            format!("P_eta = {p} leaves (0, 1] for c = {}", game.c),
        ));
    }
    Ok(p)
}

/// Largest admissible infidelity for `game`: `P_η` must stay positive.
pub fn eta_max(game: &GameSpec) -> f64 {
    (game.p_qm / game.c).min(1.0)
}

/// Result of the fixed-confidence infidelity solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Option<f64>", from = "Option<f64>")]
pub enum EtaBound {
    Certified(f64),
    NotCertifiable,
}

impl EtaBound {
    pub fn value(self) -> Option<f64> {
        match self {
            EtaBound::Certified(eta) => Some(eta),
            EtaBound::NotCertifiable => None,
        }
    }
}

impl From<EtaBound> for Option<f64> {
    fn from(b: EtaBound) -> Self {
        b.value()
    }
}

impl From<Option<f64>> for EtaBound {
    fn from(v: Option<f64>) -> Self {
        v.map_or(EtaBound::NotCertifiable, EtaBound::Certified)
    }
}

fn confidence_at_eta(game: &GameSpec, p_exp: f64, n_ver: f64, eta: f64) -> f64 {
    let q = game.p_qm - game.c * eta;
    if q >= 1.0 {
        return 0.0;
    }
    confidence(p_exp, q, n_ver).unwrap_or(0.0)
}

/// Smallest `η` whose confidence reaches `1 − δ`, by bisection.
pub fn solve_eta(game: &GameSpec, p_exp: f64, n_ver: f64, delta: f64) -> Result<EtaBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::out_of_range("delta", format!("{delta} not in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&p_exp) {
        return Err(Error::out_of_range("p_exp", format!("{p_exp} not in [0, 1]")));
    }
    if game.c.is_nan() || game.c <= 0.0 {
        return Err(Error::out_of_range("c", format!("{} must be positive", game.c)));
    }
    let goal = 1.0 - delta;
    // keep P_η strictly inside (0, 1)
    let mut hi = eta_max(game) * (1.0 - 1e-12);
    if confidence_at_eta(game, p_exp, n_ver, hi) < goal {
        return Ok(EtaBound::NotCertifiable);
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= ETA_BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if confidence_at_eta(game, p_exp, n_ver, mid) >= goal {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(EtaBound::Certified(hi))
}

/// Estimated total sample count `⌈ln(1/δ) / ln(1 − μ + μ e^D)⌉`.
pub fn required_samples(p_exp: f64, p_eta: f64, mu: f64, delta: f64) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::out_of_range("delta", format!("{delta} not in (0, 1)")));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::out_of_range("mu", format!("{mu} not in (0, 1]")));
    }
    if p_exp <= p_eta {
        return Err(Error::out_of_range("p_exp", format!("{p_exp} <= p_eta = {p_eta}")));
    }
    let d = kl_divergence(p_exp, p_eta)?;
    // ln(1 − μ + μ e^D) = ln(1 + μ(e^D − 1))
    let denom = (mu * d.exp_m1()).ln_1p();
    Ok(((1.0 / delta).ln() / denom).ceil() as u64)
}

/// Lower bound on fidelity from self-testing: `1 − (P_QM − p_exp)/c`.
pub fn selftest_fidelity_bound(game: &GameSpec, p_exp: f64) -> f64 {
    let p = p_exp.min(game.p_qm);
    (1.0 - (game.p_qm - p) / game.c).clamp(0.0, 1.0)
}

/// One row of the running confidence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub n_ver: u64,
    pub n_wins: u64,
    pub p_exp: f64,
    /// Confidence for each configured η target, in configuration order.
    pub confidences: Vec<f64>,
    /// Infidelity certified at confidence `1 − δ`.
    pub eta: EtaBound,
}

/// Running verifier tally for one run.
#[derive(Debug, Clone)]
pub struct CertificationState {
    game: GameSpec,
    mu: f64,
    delta: f64,
    eta_targets: Vec<f64>,
    p_eta_targets: Vec<f64>,
    n_ver: u64,
    n_wins: u64,
}

impl CertificationState {
    pub fn new(game: GameSpec, mu: f64, delta: f64, eta_targets: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::out_of_range("delta", format!("{delta} not in (0, 1)")));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::out_of_range("mu", format!("{mu} not in (0, 1)")));
        }
        let p_eta_targets = eta_targets
            .iter()
            .map(|&eta| {
                let p = p_eta(&game, eta)?;
                if p >= 1.0 {
                    return Err(Error::out_of_range("eta", format!("target {eta} gives P_eta = 1")));
                }
                Ok(p)
            })
            .collect::<Result<_>>()?;
        Ok(CertificationState {
            game,
            mu,
            delta,
            eta_targets,
            p_eta_targets,
            n_ver: 0,
            n_wins: 0,
        })
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn set_mu(&mut self, mu: f64) {
        self.mu = mu;
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta_targets(&self) -> &[f64] {
        &self.eta_targets
    }

    pub fn n_ver(&self) -> u64 {
        self.n_ver
    }

    pub fn n_wins(&self) -> u64 {
        self.n_wins
    }

    pub fn p_exp(&self) -> Option<f64> {
        (self.n_ver > 0).then(|| self.n_wins as f64 / self.n_ver as f64)
    }

    /// Confidence for an arbitrary `η` from the current totals.
    pub fn confidence_at(&self, eta: f64) -> Result<f64> {
        let q = p_eta(&self.game, eta)?;
        match self.p_exp() {
            None => Ok(0.0),
            Some(p) => confidence(p, q, self.n_ver as f64),
        }
    }

    /// Records one verifier round and returns the updated trace point.
    pub fn accumulate(&mut self, round: &RoundResult) -> TracePoint {
        self.record(round.win)
    }

    pub fn record(&mut self, win: bool) -> TracePoint {
        self.n_ver += 1;
        self.n_wins += win as u64;
        self.trace_point()
    }

    /// Trace point recomputed from the current totals.
    pub fn trace_point(&self) -> TracePoint {
        let Some(p) = self.p_exp() else {
            return TracePoint {
                n_ver: 0,
                n_wins: 0,
                p_exp: 0.0,
                confidences: vec![0.0; self.eta_targets.len()],
                eta: EtaBound::NotCertifiable,
            };
        };
        let n = self.n_ver as f64;
        let confidences = self
            .p_eta_targets
            .iter()
            .map(|&q| confidence(p, q, n).expect("targets validated at construction"))
            .collect();
        let eta = solve_eta(&self.game, p, n, self.delta).expect("delta validated at construction");
        TracePoint {
            n_ver: self.n_ver,
            n_wins: self.n_wins,
            p_exp: p,
            confidences,
            eta,
        }
    }
}

/// Issued fidelity certificate. Field names are the on-disk JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub game: String,
    pub target: String,
    pub n_total: u64,
    pub n_verifier: u64,
    pub mu: f64,
    pub p_exp: f64,
    pub eta_certified: f64,
    pub confidence: f64,
    pub c: f64,
    pub delta: f64,
    pub seed: u64,
    pub timestamp_utc: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRequest {
    pub target: TargetName,
    pub eta: f64,
    pub n_total: u64,
    pub seed: u64,
}

/// Issues a certificate when the confidence at `request.eta` reaches `1 − δ`.
pub fn issue_certificate(state: &CertificationState, request: &CertificateRequest) -> Result<Certificate> {
    let confidence = state.confidence_at(request.eta)?;
    let required = 1.0 - state.delta;
    if confidence < required || !(request.eta > 0.0 && request.eta < 1.0) {
        return Err(Error::ThresholdNotMet {
            confidence,
            required,
            shortfall: required - confidence,
        });
    }
    Ok(Certificate {
        game: state.game.name.as_str().to_string(),
        target: request.target.as_str().to_string(),
        n_total: request.n_total,
        n_verifier: state.n_ver,
        mu: state.mu,
        p_exp: state.p_exp().unwrap_or(0.0),
        eta_certified: request.eta,
        confidence,
        c: state.game.c,
        delta: state.delta,
        seed: request.seed,
        timestamp_utc: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
    })
}
