//! Scaling analysis: theory curves at fixed confidence, averaging of simulated
//! repetitions and log-log slope fits.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::solve_eta;
use crate::error::{Error, Result};
use crate::games::{GameName, GameSpec, RoundSampler};
use crate::qcore::DensityMatrix;
use crate::rng::{repetition_substream, Stream};

/// Minimum number of certifiable points for a slope fit.
pub const MIN_FIT_POINTS: usize = 5;

/// Default fit window for each game.
pub fn default_fit_window(game: GameName) -> (u64, u64) {
    match game {
        GameName::Chsh => (10, 300),
        GameName::Mermin3 => (10, 100),
    }
}

/// Repetition counts of the reference laboratory protocol. Desk-scale runs
/// use fewer and report both.
pub fn protocol_repetitions(game: GameName) -> (usize, u64) {
    match game {
        GameName::Chsh => (1398, 300),
        GameName::Mermin3 => (20, 75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n_ver: u64,
    /// `None` when no repetition is certifiable at this count.
    pub eta: Option<f64>,
    pub eta_sd: Option<f64>,
    pub inclusion_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTrace {
    pub game: GameName,
    pub seed: Option<u64>,
    pub points: Vec<ScalingPoint>,
}

impl ScalingTrace {
    fn from_etas(game: GameName, seed: Option<u64>, etas: impl IntoIterator<Item = (u64, Option<f64>)>) -> Self {
        let points = etas
            .into_iter()
            .map(|(n_ver, eta)| ScalingPoint {
                n_ver,
                eta,
                eta_sd: None,
                inclusion_count: usize::from(eta.is_some()),
            })
            .collect();
        ScalingTrace { game, seed, points }
    }

    /// CSV with columns `n_ver,eta_mean,eta_sd,inclusion_count`; empty fields
    /// mark missing values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_ver,eta_mean,eta_sd,inclusion_count\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.n_ver,
                opt(p.eta),
                opt(p.eta_sd),
                p.inclusion_count
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub residual_rms: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::out_of_range("delta", format!("{delta} not in (0, 1)")));
    }
    Ok(())
}

/// `η(n)` at ideal `p_exp = P_QM` for `n = 1..=n_max`.
pub fn theory_curve(game: &GameSpec, delta: f64, n_max: u64) -> Result<ScalingTrace> {
    theory_curve_at(game, delta, &(1..=n_max).collect::<Vec<_>>())
}

/// `η(n)` at ideal `p_exp = P_QM` on an explicit strictly increasing grid.
pub fn theory_curve_at(game: &GameSpec, delta: f64, grid: &[u64]) -> Result<ScalingTrace> {
    check_delta(delta)?;
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid.first() == Some(&0) {
        return Err(Error::out_of_range(
            "grid",
            "counts must be positive and strictly increasing",
        ));
    }
    let p = game.p_qm.min(1.0);
    let etas = grid
        .par_iter()
        .map(|&n| Ok((n, solve_eta(game, p, n as f64, delta)?.value())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingTrace::from_etas(game.name, None, etas))
}

/// Logarithmically spaced integer grid over `[lo, hi]`, deduplicated.
pub fn log_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let (a, b) = ((lo.max(1)) as f64, hi as f64);
    let steps = ((b / a).log10() * per_decade as f64).ceil().max(1.0) as usize;
    let mut grid: Vec<u64> = (0..=steps)
        .map(|k| (a * (b / a).powf(k as f64 / steps as f64)).round() as u64)
        .collect();
    grid.dedup();
    grid
}

/// Pointwise mean of certifiable `η` values across repetitions.
pub fn average_traces(traces: &[ScalingTrace]) -> Result<ScalingTrace> {
    let first = traces.first().ok_or(Error::Empty("traces"))?;
    for t in traces {
        let same_grid =
            t.points.len() == first.points.len() && t.points.iter().zip(&first.points).all(|(a, b)| a.n_ver == b.n_ver);
        if t.game != first.game || !same_grid {
            return Err(Error::out_of_range(
                "traces",
                "all traces must share the game and n grid",
            ));
        }
    }
    let points = (0..first.points.len())
        .map(|i| {
            let values: Vec<f64> = traces.iter().filter_map(|t| t.points[i].eta).collect();
            let k = values.len();
            let mean = (k > 0).then(|| values.iter().sum::<f64>() / k as f64);
            let sd = mean
                .filter(|_| k > 1)
                .map(|m| (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt());
            ScalingPoint {
                n_ver: first.points[i].n_ver,
                eta: mean,
                eta_sd: sd,
                inclusion_count: k,
            }
        })
        .collect();
    Ok(ScalingTrace {
        game: first.game,
        seed: None,
        points,
    })
}

/// OLS on `(log₁₀ n, log₁₀ η)` over certifiable points with `n` in
/// `[n_min, n_max]`.
pub fn fit_loglog_slope(trace: &ScalingTrace, n_min: u64, n_max: u64) -> Result<SlopeFit> {
    let xy: Vec<(f64, f64)> = trace
        .points
        .iter()
        .filter(|p| (n_min..=n_max).contains(&p.n_ver))
        .filter_map(|p| {
            p.eta
                .filter(|&e| e > 0.0)
                .map(|e| ((p.n_ver as f64).log10(), e.log10()))
        })
        .collect();
    if xy.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            required: MIN_FIT_POINTS,
            actual: xy.len(),
        });
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_rms = (xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        n_min,
        n_max,
        residual_rms,
    })
}

/// Plays `n_max` verifier rounds on `state` and solves for `η` after each.
pub fn simulate_trace(
    game: &GameSpec,
    sampler: &RoundSampler,
    delta: f64,
    n_max: u64,
    seed: u64,
    repetition: u64,
) -> Result<ScalingTrace> {
    check_delta(delta)?;
    let mut settings = repetition_substream(seed, Stream::Settings, repetition);
    let mut outcomes = repetition_substream(seed, Stream::Outcomes, repetition);
    let mut wins = 0u64;
    let mut etas = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        if sampler.play(game, &mut settings, &mut outcomes).win {
            wins += 1;
        }
        let p_exp = wins as f64 / n as f64;
        etas.push((n, solve_eta(game, p_exp, n as f64, delta)?.value()));
    }
    Ok(ScalingTrace::from_etas(game.name, Some(repetition), etas))
}

/// Runs `repetitions` independent traces in parallel.
pub fn simulate_repetitions(
    game: &GameSpec,
    state: &DensityMatrix,
    delta: f64,
    n_max: u64,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<ScalingTrace>> {
    let sampler = RoundSampler::new(game, state)?;
    (0..repetitions as u64)
        .into_par_iter()
        .map(|r| simulate_trace(game, &sampler, delta, n_max, seed, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::build_game;
    use crate::states::{make_target, TargetName};

    fn game(name: GameName) -> GameSpec {
        build_game(name, &make_target(name.target())).unwrap()
    }

    fn power_law(a: f64, exponent: f64, n_max: u64) -> ScalingTrace {
        ScalingTrace::from_etas(
            GameName::Chsh,
            None,
            (1..=n_max).map(|n| (n, Some(a * (n as f64).powf(exponent)))),
        )
    }

    #[test]
    fn mermin_curve_matches_closed_form() {
        let g = game(GameName::Mermin3).with_c(1.0);
        let curve = theory_curve(&g, 0.01, 200).unwrap();
        for p in &curve.points {
            let closed = 1.0 - 0.01f64.powf(1.0 / p.n_ver as f64);
            assert!((p.eta.unwrap() - closed).abs() < 1e-10, "n = {}", p.n_ver);
        }
        assert!((curve.points[99].eta.unwrap() - 0.045007413978564).abs() < 1e-10);
    }

    #[test]
    fn theory_curves_decrease() {
        for name in [GameName::Chsh, GameName::Mermin3] {
            let curve = theory_curve(&game(name), 0.01, 400).unwrap();
            let etas: Vec<f64> = curve.points.iter().filter_map(|p| p.eta).collect();
            assert!(etas.windows(2).all(|w| w[1] < w[0]), "{name:?}");
        }
    }

    #[test]
    fn mermin_asymptote() {
        let g = game(GameName::Mermin3).with_c(1.0);
        let curve = theory_curve_at(&g, 0.01, &[1_000_000]).unwrap();
        let scaled = 1e6 * curve.points[0].eta.unwrap();
        assert!((scaled / 100f64.ln() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn exact_power_law_fit() {
        let fit = fit_loglog_slope(&power_law(2.0, -1.0, 100), 1, 100).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 2f64.log10()).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn average_of_scaled_power_laws() {
        let avg = average_traces(&[power_law(1.0, -1.0, 50), power_law(3.0, -1.0, 50)]).unwrap();
        for p in &avg.points {
            assert!((p.eta.unwrap() - 2.0 / p.n_ver as f64).abs() < 1e-12);
            assert_eq!(p.inclusion_count, 2);
        }
        assert!((fit_loglog_slope(&avg, 1, 50).unwrap().slope + 1.0).abs() < 1e-12);
        let same = average_traces(&vec![power_law(1.0, -0.5, 20); 3]).unwrap();
        for (a, b) in same.points.iter().zip(&power_law(1.0, -0.5, 20).points) {
            assert!((a.eta.unwrap() - b.eta.unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn averaging_skips_missing_points() {
        let mut a = power_law(1.0, -1.0, 10);
        a.points[0].eta = None;
        a.points[0].inclusion_count = 0;
        let b = power_law(1.0, -1.0, 10);
        let avg = average_traces(&[a, b]).unwrap();
        assert_eq!(avg.points[0].inclusion_count, 1);
        assert_eq!(avg.points[0].eta, Some(1.0));
        assert_eq!(avg.points[0].eta_sd, None);
    }

    #[test]
    fn averaging_errors() {
        assert!(matches!(average_traces(&[]), Err(Error::Empty(_))));
        assert!(average_traces(&[power_law(1.0, -1.0, 10), power_law(1.0, -1.0, 11)]).is_err());
    }

    #[test]
    fn fit_needs_five_points() {
        let r = fit_loglog_slope(&power_law(1.0, -1.0, 4), 1, 4);
        assert!(matches!(r, Err(Error::InsufficientPoints { required: 5, actual: 4 })));
    }

    #[test]
    fn fitted_slopes_in_display_windows() {
        let chsh = theory_curve(&game(GameName::Chsh), 0.01, 300).unwrap();
        let s = fit_loglog_slope(&chsh, 10, 300).unwrap().slope;
        assert!((-0.62..=-0.52).contains(&s), "{s}");
        let mermin = theory_curve(&game(GameName::Mermin3), 0.01, 100).unwrap();
        let s = fit_loglog_slope(&mermin, 10, 100).unwrap().slope;
        assert!((-0.95..=-0.88).contains(&s), "{s}");
    }

    #[test]
    fn slope_is_c_invariant() {
        // η ≤ 1 caps small-n points when c shrinks, so compare from the
        // first count certifiable under both values
        for name in [GameName::Chsh, GameName::Mermin3] {
            let (lo, hi) = default_fit_window(name);
            let g = game(name);
            let base = theory_curve(&g, 0.01, hi).unwrap();
            for factor in [0.5, 0.9, 1.7, 3.0] {
                let scaled = theory_curve(&g.clone().with_c(g.c * factor), 0.01, hi).unwrap();
                let start = base
                    .points
                    .iter()
                    .zip(&scaled.points)
                    .find(|(a, b)| a.n_ver >= lo && a.eta.is_some() && b.eta.is_some())
                    .unwrap()
                    .0
                    .n_ver;
                for (a, b) in base.points.iter().zip(&scaled.points).filter(|(a, _)| a.n_ver >= start) {
                    let ratio = a.eta.unwrap() / b.eta.unwrap();
                    assert!((ratio - factor).abs() < 1e-10, "{name:?} n = {}", a.n_ver);
                }
                let s0 = fit_loglog_slope(&base, start, hi).unwrap().slope;
                let s1 = fit_loglog_slope(&scaled, start, hi).unwrap().slope;
                assert!((s0 - s1).abs() < 1e-12, "{name:?} {factor}: {s0} vs {s1}");
            }
        }
    }

    #[test]
    fn csv_marks_missing_values() {
        let mut t = power_law(1.0, -1.0, 2);
        t.points[0].eta = None;
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n_ver,eta_mean,eta_sd,inclusion_count");
        assert_eq!(lines[1], "1,,,1");
        assert!(lines[2].starts_with("2,5.0"));
    }

    #[test]
    fn simulated_repetitions_are_deterministic() {
        let g = game(GameName::Chsh);
        let state = make_target(TargetName::BellPhiPlus).density_matrix();
        let a = simulate_repetitions(&g, &state, 0.01, 50, 4, 9).unwrap();
        let b = simulate_repetitions(&g, &state, 0.01, 50, 4, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn log_grid_bounds() {
        let g = log_grid(1000, 100_000, 20);
        assert_eq!(g.first(), Some(&1000));
        assert_eq!(g.last(), Some(&100_000));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
