//! Poisson source and synchronized-switch routing.
//!
//! Each of the `M` switches is a square wave with period `1/f`. A photon
//! emitted at time `t` sees switch `i` at phase `(t + φ_i) mod T`; the first
//! `duty_cycle` fraction of the period routes to the verifier, the rest to
//! the user. A transition window of width `w` is centred on both edges of
//! every period. A photon inside it is lost with probability 1/2 and
//! otherwise routed by a fair coin.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Station {
    User,
    Verifier,
    Cross,
    Lost,
    /// Dropped by the slot-multiplicity filter before routing.
    Filtered,
}

impl Station {
    pub fn as_str(self) -> &'static str {
        match self {
            Station::User => "user",
            Station::Verifier => "verifier",
            Station::Cross => "cross",
            Station::Lost => "lost",
            Station::Filtered => "filtered",
        }
    }
}

fn default_duty_cycle() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    /// Photons per emitted state (one switch each).
    pub num_photons: usize,
    /// Switch repetition rate in Hz.
    pub switch_frequency: f64,
    #[serde(default = "default_duty_cycle")]
    pub duty_cycle: f64,
    /// Per-switch phase offsets in seconds; empty means all zero.
    #[serde(default)]
    pub phase_offsets: Vec<f64>,
    /// Width of the window around each switching edge, in seconds.
    #[serde(default)]
    pub transition_window: f64,
    /// Emission rate of M-photon states in Hz.
    pub emission_rate: f64,
    /// Simulated duration in seconds; zero when the run length is given as an
    /// emission count instead.
    #[serde(default)]
    pub total_duration: f64,
    #[serde(default)]
    pub slot_multiplicity_filter: bool,
}

impl SwitchConfig {
    /// Ideal synchronized switches at 50% duty cycle.
    pub fn ideal(num_photons: usize, switch_frequency: f64, emission_rate: f64, total_duration: f64) -> Self {
        SwitchConfig {
            num_photons,
            switch_frequency,
            duty_cycle: 0.5,
            phase_offsets: Vec::new(),
            transition_window: 0.0,
            emission_rate,
            total_duration,
            slot_multiplicity_filter: false,
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.switch_frequency
    }

    pub fn phase_offset(&self, switch: usize) -> f64 {
        self.phase_offsets.get(switch).copied().unwrap_or(0.0)
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("switch.{name}");
        if self.num_photons < 1 {
            return Err(Error::config(field("num_photons"), "must be at least 1"));
        }
        if !(self.switch_frequency > 0.0 && self.switch_frequency.is_finite()) {
            return Err(Error::config(field("switch_frequency"), "must be positive"));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return Err(Error::config(field("duty_cycle"), "must lie in (0, 1)"));
        }
        if !self.phase_offsets.is_empty() && self.phase_offsets.len() != self.num_photons {
            return Err(Error::config(
                field("phase_offsets"),
                format!(
                    "expected {} entries, got {}",
                    self.num_photons,
                    self.phase_offsets.len()
                ),
            ));
        }
        if self.phase_offsets.iter().any(|p| !p.is_finite()) {
            return Err(Error::config(field("phase_offsets"), "must be finite"));
        }
        if !(self.transition_window >= 0.0 && self.transition_window < self.period() / 2.0) {
            return Err(Error::config(field("transition_window"), "must lie in [0, period/2)"));
        }
        if !(self.emission_rate > 0.0 && self.emission_rate.is_finite()) {
            return Err(Error::config(field("emission_rate"), "must be positive"));
        }
        if !(self.total_duration >= 0.0 && self.total_duration.is_finite()) {
            return Err(Error::config(field("total_duration"), "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingEvent {
    pub emission_time: f64,
    pub station: Station,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingSummary {
    pub n_user: u64,
    pub n_ver: u64,
    pub n_cross: u64,
    pub n_lost: u64,
    pub n_filtered: u64,
    pub total: u64,
    /// `(n_user + n_ver) / (n_user + n_ver + n_cross)`.
    pub epsilon: f64,
    /// `n_ver / (n_user + n_ver)`.
    pub mu: f64,
    #[serde(skip)]
    pub bitstring: Vec<u8>,
}

impl RoutingSummary {
    pub fn from_events(events: &[RoutingEvent]) -> Self {
        let count = |s: Station| events.iter().filter(|e| e.station == s).count() as u64;
        let (n_user, n_ver, n_cross) = (count(Station::User), count(Station::Verifier), count(Station::Cross));
        let routed = n_user + n_ver;
        RoutingSummary {
            n_user,
            n_ver,
            n_cross,
            n_lost: count(Station::Lost),
            n_filtered: count(Station::Filtered),
            total: events.len() as u64,
            epsilon: routed as f64 / (routed + n_cross) as f64,
            mu: n_ver as f64 / routed as f64,
            bitstring: routing_bits(events),
        }
    }
}

/// Homogeneous Poisson arrival times on `[0, duration)`.
pub fn simulate_emissions<R: Rng + ?Sized>(rate: f64, duration: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::out_of_range("rate", format!("{rate} must be positive")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::out_of_range("duration", format!("{duration} must be positive")));
    }
    let exp = Exp::new(rate).expect("rate checked");
    let mut times = Vec::with_capacity((rate * duration * 1.1) as usize + 16);
    let mut t = exp.sample(rng);
    while t < duration {
        times.push(t);
        t += exp.sample(rng);
    }
    Ok(times)
}

/// The first `count` arrival times of a Poisson process with rate `rate`.
pub fn simulate_emission_count<R: Rng + ?Sized>(rate: f64, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::out_of_range("rate", format!("{rate} must be positive")));
    }
    let exp = Exp::new(rate).expect("rate checked");
    let mut t = 0.0;
    Ok((0..count)
        .map(|_| {
            t += exp.sample(rng);
            t
        })
        .collect())
}

fn switch_fate<R: Rng + ?Sized>(phase: f64, cfg: &SwitchConfig, rng: &mut R) -> Station {
    let half_window = 0.5 * cfg.transition_window * cfg.switch_frequency;
    let edge_distance = phase.min(1.0 - phase).min((phase - cfg.duty_cycle).abs());
    if half_window > 0.0 && edge_distance < half_window {
        if rng.random_bool(0.5) {
            return Station::Lost;
        }
        return if rng.random_bool(0.5) {
            Station::Verifier
        } else {
            Station::User
        };
    }
    if phase < cfg.duty_cycle {
        Station::Verifier
    } else {
        Station::User
    }
}

/// Routes one emission at time `t`.
pub fn route_event<R: Rng + ?Sized>(t: f64, cfg: &SwitchConfig, rng: &mut R) -> RoutingEvent {
    let mut first: Option<Station> = None;
    let mut lost = false;
    let mut split = false;
    for i in 0..cfg.num_photons {
        let phase = ((t + cfg.phase_offset(i)) * cfg.switch_frequency).rem_euclid(1.0);
        match switch_fate(phase, cfg, rng) {
            Station::Lost => lost = true,
            s => match first {
                None => first = Some(s),
                Some(f) if f != s => split = true,
                Some(_) => {}
            },
        }
    }
    let station = if lost {
        Station::Lost
    } else if split {
        Station::Cross
    } else {
        first.expect("at least one photon")
    };
    RoutingEvent {
        emission_time: t,
        station,
    }
}

/// Marks emissions that share a switch half-period with another emission.
fn multiplicity_mask(times: &[f64], cfg: &SwitchConfig) -> Vec<bool> {
    let slot_len = cfg.period() / 2.0;
    let slots: Vec<i64> = times.iter().map(|t| (t / slot_len).floor() as i64).collect();
    (0..slots.len())
        .map(|k| (k > 0 && slots[k - 1] == slots[k]) || (k + 1 < slots.len() && slots[k + 1] == slots[k]))
        .collect()
}

/// Routes sorted emission times through the switches.
pub fn route_emissions<R: Rng + ?Sized>(times: &[f64], cfg: &SwitchConfig, rng: &mut R) -> Vec<RoutingEvent> {
    let crowded = if cfg.slot_multiplicity_filter {
        multiplicity_mask(times, cfg)
    } else {
        vec![false; times.len()]
    };
    times
        .iter()
        .zip(crowded)
        .map(|(&t, drop)| {
            if drop {
                RoutingEvent {
                    emission_time: t,
                    station: Station::Filtered,
                }
            } else {
                route_event(t, cfg, rng)
            }
        })
        .collect()
}

/// Full routing run: Poisson emissions over the configured duration.
pub fn run_routing<R1, R2>(
    cfg: &SwitchConfig,
    emission_rng: &mut R1,
    routing_rng: &mut R2,
) -> Result<(Vec<RoutingEvent>, RoutingSummary)>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    cfg.validate()?;
    let times = simulate_emissions(cfg.emission_rate, cfg.total_duration, emission_rng)?;
    let events = route_emissions(&times, cfg, routing_rng);
    let summary = RoutingSummary::from_events(&events);
    Ok((events, summary))
}

/// User '0' / verifier '1' bits in emission order.
pub fn routing_bits(events: &[RoutingEvent]) -> Vec<u8> {
    events
        .iter()
        .filter_map(|e| match e.station {
            Station::User => Some(0),
            Station::Verifier => Some(1),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyConvention {
    /// `(1/2)^M`, the probability that all photons reach one given station.
    #[default]
    SingleStation,
    /// `2 · (1/2)^M`, all photons at the same station, either one.
    EitherStation,
}

/// Efficiency of routing M photons with independent 50:50 beamsplitters.
pub fn passive_efficiency(m: u32) -> f64 {
    passive_efficiency_with(m, EfficiencyConvention::SingleStation)
}

pub fn passive_efficiency_with(m: u32, convention: EfficiencyConvention) -> f64 {
    let single = 0.5f64.powi(m as i32);
    match convention {
        EfficiencyConvention::SingleStation => single,
        EfficiencyConvention::EitherStation => (2.0 * single).min(1.0),
    }
}

/// Efficiency predicted for aligned switches whose transition windows cover
/// fraction `window_fraction` of every period (both edges together).
pub fn analytic_efficiency(num_photons: usize, window_fraction: f64) -> f64 {
    let m = num_photons as i32;
    let survive = 0.5f64.powi(m);
    let same_given_survive = 2.0 * 0.5f64.powi(m);
    let clean = 1.0 - window_fraction;
    (clean + window_fraction * survive * same_given_survive) / (clean + window_fraction * survive)
}

/// Transition window (seconds) that makes [`analytic_efficiency`] equal
/// `target`, found by bisection.
pub fn window_for_efficiency(target: f64, num_photons: usize, switch_frequency: f64) -> Result<f64> {
    let floor = analytic_efficiency(num_photons, 1.0 - 1e-15);
    if !(target > floor && target <= 1.0) {
        return Err(Error::out_of_range(
            "efficiency",
            format!("{target} not in ({floor}, 1]"),
        ));
    }
    // efficiency falls monotonically with window fraction
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if analytic_efficiency(num_photons, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fraction = 0.5 * (lo + hi);
    // two edges per period
    Ok(fraction / (2.0 * switch_frequency))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn run(cfg: &SwitchConfig, seed: u64) -> (Vec<RoutingEvent>, RoutingSummary) {
        run_routing(
            cfg,
            &mut substream(seed, Stream::Emission),
            &mut substream(seed, Stream::Routing),
        )
        .unwrap()
    }

    #[test]
    fn passive_efficiencies() {
        assert_eq!(passive_efficiency(1), 0.5);
        assert_eq!(passive_efficiency(2), 0.25);
        assert_eq!(passive_efficiency(3), 0.125);
        assert_eq!(passive_efficiency_with(2, EfficiencyConvention::EitherStation), 0.5);
    }

    #[test]
    fn emission_count_concentrates() {
        let mut inside = 0;
        for seed in 0..200 {
            let times = simulate_emissions(1e4, 1.0, &mut substream(seed, Stream::Emission)).unwrap();
            assert!(times.windows(2).all(|w| w[0] <= w[1]));
            assert!(times.iter().all(|&t| (0.0..1.0).contains(&t)));
            if (times.len() as f64 - 1e4).abs() <= 400.0 {
                inside += 1;
            }
        }
        assert!(inside >= 200, "{inside}");
    }

    #[test]
    fn emission_rejects_bad_input() {
        let mut rng = substream(0, Stream::Emission);
        assert!(simulate_emissions(1.0, 0.0, &mut rng).is_err());
        assert!(simulate_emissions(0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn inter_arrivals_are_exponential() {
        let rate = 50.0;
        let times = simulate_emissions(rate, 100.0, &mut substream(4, Stream::Emission)).unwrap();
        let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let ks = gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let cdf = 1.0 - (-rate * g).exp();
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(ks < 1.628 / n.sqrt(), "ks {ks}");
    }

    #[test]
    fn ideal_switches_never_cross() {
        let cfg = SwitchConfig::ideal(3, 800e3, 62e3, 1.0);
        let (events, summary) = run(&cfg, 1);
        assert_eq!(summary.n_cross, 0);
        assert_eq!(summary.n_lost, 0);
        assert_eq!(summary.epsilon, 1.0);
        let n = (summary.n_user + summary.n_ver) as f64;
        assert!((summary.mu - 0.5).abs() <= 4.0 * (0.25 / n).sqrt());
        assert_eq!(summary.total as usize, events.len());
    }

    #[test]
    fn conservation_and_recount() {
        let mut cfg = SwitchConfig::ideal(2, 1e3, 2e3, 5.0);
        cfg.transition_window = 0.1e-3;
        cfg.phase_offsets = vec![0.0, 0.05e-3];
        cfg.slot_multiplicity_filter = true;
        let (events, s) = run(&cfg, 2);
        assert_eq!(s.n_user + s.n_ver + s.n_cross + s.n_lost + s.n_filtered, s.total);
        assert_eq!(RoutingSummary::from_events(&events), s);
        assert!(s.n_cross > 0 && s.n_lost > 0 && s.n_filtered > 0);
    }

    #[test]
    fn quarter_period_offset_halves_efficiency() {
        let mut cfg = SwitchConfig::ideal(2, 1e3, 20.0, 5000.0);
        cfg.phase_offsets = vec![0.0, 0.25e-3];
        let (_, s) = run(&cfg, 3);
        let routed = (s.n_user + s.n_ver + s.n_cross) as f64;
        // overlap-fraction oracle: two half-duty square waves a quarter
        // period apart agree on exactly half of the period
        let agree = (0..100_000)
            .filter(|k| {
                let p = *k as f64 / 100_000.0;
                (p < 0.5) == ((p + 0.25) % 1.0 < 0.5)
            })
            .count() as f64
            / 100_000.0;
        assert!((agree - 0.5).abs() < 1e-4);
        let sigma = (agree * (1.0 - agree) / routed).sqrt();
        assert!((s.epsilon - agree).abs() <= 4.0 * sigma, "{}", s.epsilon);
    }

    #[test]
    fn duty_cycle_sets_mu() {
        let mut cfg = SwitchConfig::ideal(2, 800e3, 62e3, 2.0);
        cfg.duty_cycle = 0.43;
        let (_, s) = run(&cfg, 4);
        let n = (s.n_user + s.n_ver) as f64;
        assert!((s.mu - 0.43).abs() <= 4.0 * (0.43 * 0.57 / n).sqrt());
    }

    #[test]
    fn window_bisection_matches_algebraic_inverse() {
        // M = 2: (1 − 7f/8) / (1 − 3f/4) = ε  ⇔  f = (1 − ε) / (7/8 − 3ε/4)
        let eps = 0.9439;
        let f_closed = (1.0 - eps) / (7.0 / 8.0 - 0.75 * eps);
        let w = window_for_efficiency(eps, 2, 1.0).unwrap();
        assert!((2.0 * w - f_closed).abs() < 1e-12);
        assert!((w - 0.16788867275175795).abs() < 1e-12);
        assert!(window_for_efficiency(0.1, 2, 1.0).is_err());
    }

    #[test]
    fn tuned_window_reproduces_measured_efficiency() {
        let f = 800e3;
        let mut cfg = SwitchConfig::ideal(2, f, 62e3, 2.0);
        cfg.transition_window = window_for_efficiency(0.9439, 2, f).unwrap();
        let (_, s) = run(&cfg, 5);
        assert!((s.epsilon - 0.9439).abs() < 0.01, "{}", s.epsilon);
    }

    #[test]
    fn filter_discards_crowded_slots() {
        // R/f = 5 ⇒ λ = 2.5 emissions per half-period slot; an emission
        // survives only when its slot holds no other: P = e^{−λ}
        let mut cfg = SwitchConfig::ideal(2, 1e3, 5e3, 20.0);
        cfg.slot_multiplicity_filter = true;
        let (_, s) = run(&cfg, 6);
        let frac = s.n_filtered as f64 / s.total as f64;
        let oracle = 1.0 - (-2.5f64).exp();
        assert!(frac >= 0.9, "{frac}");
        // filtered emissions share slots, so allow more than binomial spread
        assert!((frac - oracle).abs() < 0.01, "{frac} vs {oracle}");
    }

    #[test]
    fn bits_follow_convention() {
        let ev = |s| RoutingEvent {
            emission_time: 0.0,
            station: s,
        };
        let events = [
            ev(Station::User),
            ev(Station::Cross),
            ev(Station::Verifier),
            ev(Station::Lost),
            ev(Station::User),
        ];
        assert_eq!(routing_bits(&events), vec![0, 1, 0]);
        assert_eq!(routing_bits(&[ev(Station::User), ev(Station::User)]), vec![0, 0]);
    }

    #[test]
    fn deterministic_for_seed() {
        let mut cfg = SwitchConfig::ideal(3, 5.0, 0.5, 2000.0);
        cfg.transition_window = 0.01;
        assert_eq!(run(&cfg, 77).0, run(&cfg, 77).0);
    }

    #[test]
    fn config_validation_names_field() {
        let mut cfg = SwitchConfig::ideal(2, 1e3, 1e2, 1.0);
        cfg.transition_window = 0.6e-3;
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "switch.transition_window"),
            other => panic!("{other:?}"),
        }
        cfg.transition_window = 0.0;
        cfg.phase_offsets = vec![0.0];
        assert!(cfg.validate().is_err());
    }
}
