//! Event-log rows, the trace CSV and replay from a log file.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certify::{CertificationState, TracePoint};
use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::switchsim::Station;

/// One emission in `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRow {
    pub i: u64,
    pub t: f64,
    pub station: Station,
    /// Input bits, verifier rows only.
    pub setting: Vec<u8>,
    /// Outcome bits, verifier rows only.
    pub outcomes: Vec<u8>,
    pub win: Option<bool>,
}

/// JSONL text of `rows`, one object per line.
pub fn events_jsonl(rows: &[EventRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Trace CSV: `n_ver,p_exp,confidence@<eta>...,eta@<delta>`. A
/// non-certifiable bound leaves its field empty.
pub fn trace_csv(eta_targets: &[f64], delta: f64, trace: &[TracePoint]) -> String {
    let mut out = String::from("n_ver,p_exp");
    for eta in eta_targets {
        let _ = write!(out, ",confidence@{eta}");
    }
    let _ = writeln!(out, ",eta@{delta}");
    for p in trace {
        let _ = write!(out, "{},{}", p.n_ver, p.p_exp);
        for c in &p.confidences {
            let _ = write!(out, ",{c}");
        }
        match p.eta.value() {
            Some(eta) => {
                let _ = writeln!(out, ",{eta}");
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

/// Parses `events.jsonl`, reporting the 1-based line of the first bad row.
pub fn read_events(path: &Path) -> Result<Vec<EventRow>> {
    let file = std::fs::File::open(path)?;
    let log_error = |line: usize, message: String| Error::Log {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let number = k + 1;
        if line.trim().is_empty() {
            return Err(log_error(number, "empty row".to_string()));
        }
        let row: EventRow = serde_json::from_str(&line).map_err(|e| log_error(number, e.to_string()))?;
        if row.t < last_t {
            return Err(log_error(number, format!("time {} precedes the previous row", row.t)));
        }
        last_t = row.t;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(log_error(0, "no event rows".to_string()));
    }
    Ok(rows)
}

/// Result of replaying a log through the accumulator.
#[derive(Debug, Clone)]
pub struct Replay {
    pub state: CertificationState,
    pub trace: Vec<TracePoint>,
    pub n_total: u64,
    pub n_user: u64,
}

/// Feeds the verifier rows of `rows` through a fresh accumulator. Wins are
/// recomputed from settings and outcomes and must match the recorded flag.
///
/// `mu` is the realized verifier fraction among routed rows.
pub fn replay_rows(rows: &[EventRow], game: &GameSpec, delta: f64, eta_targets: &[f64], path: &Path) -> Result<Replay> {
    let log_error = |index: usize, message: String| Error::Log {
        path: path.to_path_buf(),
        line: index + 1,
        message,
    };
    let n_user = rows.iter().filter(|r| r.station == Station::User).count() as u64;
    let n_ver = rows.iter().filter(|r| r.station == Station::Verifier).count() as u64;
    if n_ver == 0 {
        return Err(log_error(
            rows.len().saturating_sub(1),
            "log holds no verifier rows".to_string(),
        ));
    }
    let mu = n_ver as f64 / (n_user + n_ver) as f64;
    let mut state = CertificationState::new(game.clone(), mu, delta, eta_targets.to_vec())?;
    let mut trace = Vec::with_capacity(n_ver as usize);
    let parties = game.parties();
    for (index, row) in rows.iter().enumerate() {
        if row.station != Station::Verifier {
            if !row.setting.is_empty() || !row.outcomes.is_empty() || row.win.is_some() {
                return Err(log_error(
                    index,
                    format!("{} row carries game data", row.station.as_str()),
                ));
            }
            continue;
        }
        if row.setting.len() != parties || row.outcomes.len() != parties {
            return Err(log_error(
                index,
                format!("{} expects {parties} inputs and outputs", game.name.as_str()),
            ));
        }
        if row.outcomes.iter().chain(&row.setting).any(|&b| b > 1) {
            return Err(log_error(index, "bits must be 0 or 1".to_string()));
        }
        let setting = game
            .setting_index(&row.setting)
            .ok_or_else(|| log_error(index, format!("setting {:?} is not part of the game", row.setting)))?;
        let win = game.is_win(setting, &row.outcomes);
        if row.win != Some(win) {
            return Err(log_error(
                index,
                format!("recorded win {:?} disagrees with recomputed {win}", row.win),
            ));
        }
        trace.push(state.record(win));
    }
    Ok(Replay {
        state,
        trace,
        n_total: rows.len() as u64,
        n_user,
    })
}

/// Reads and replays an event log.
pub fn certify_from_log(path: &Path, game: &GameSpec, delta: f64, eta_targets: &[f64]) -> Result<Replay> {
    let rows = read_events(path)?;
    replay_rows(&rows, game, delta, eta_targets, path)
}
