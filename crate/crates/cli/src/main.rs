//! `diqsc`: command-line front end.
//!
//! Exit codes: 0 on success, 1 on a domain error (invalid parameters,
//! threshold not met, malformed log), 2 on a usage error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diqsc_core::analysis::{
    average_traces, default_fit_window, fit_loglog_slope, protocol_repetitions, simulate_repetitions, theory_curve,
};
use diqsc_core::certify::{issue_certificate, solve_eta, CertificateRequest};
use diqsc_core::games::build_game;
use diqsc_core::harness::{certify_from_log, json_bytes, run_experiment, trace_csv, write_atomic, ExperimentConfig};
use diqsc_core::randsuite::{run_suite, BitString};
use diqsc_core::states::{apply_noise, fidelity_to_noise_strength, make_target, NoiseModel};
use diqsc_core::{Error, GameName, GameSpec, NoiseKind};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "diqsc",
    version,
    about = "Device-independent quantum state certification simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a TOML config and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay an event log and certify a target or print the η trace.
    Certify(CertifyArgs),
    /// Solve for the infidelity certified at confidence 1 − δ.
    SolveEta {
        #[arg(long, value_parser = parse_game)]
        game: GameName,
        #[arg(long)]
        p_exp: f64,
        /// Number of verifier rounds.
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Run the seven-test randomness suite on a bit file.
    Randomness {
        #[arg(long)]
        bits: PathBuf,
        /// Read the file as packed bytes (MSB first) instead of ASCII 0/1.
        #[arg(long)]
        packed: bool,
    },
    /// Simulate repetitions, average their η traces and fit the slope.
    Scaling(ScalingArgs),
    /// Theory curve η(n) at ideal win rate, as CSV.
    Theory {
        #[arg(long, value_parser = parse_game)]
        game: GameName,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long)]
        nmax: u64,
        #[arg(long)]
        c: Option<f64>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    events: PathBuf,
    /// Run config supplying game, c, δ and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_game, required_unless_present = "config")]
    game: Option<GameName>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Issue a certificate for this infidelity.
    #[arg(long, conflicts_with = "confidence", required_unless_present = "confidence")]
    eta: Option<f64>,
    /// Print the η trace at this confidence level.
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_parser = parse_game)]
    game: GameName,
    #[arg(long, default_value_t = 1.0)]
    fidelity: f64,
    #[arg(long, default_value = "white_noise", value_parser = parse_noise)]
    noise: NoiseKind,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Verifier rounds per repetition; defaults to the fit window end.
    #[arg(long)]
    nmax: Option<u64>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    fit_min: Option<u64>,
    #[arg(long)]
    fit_max: Option<u64>,
    /// Directory for `scaling.csv` and `slope.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_game(s: &str) -> Result<GameName, String> {
    s.parse()
        .map_err(|_| format!("unknown game `{s}` (expected chsh or mermin3)"))
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    s.parse()
        .map_err(|_| format!("unknown noise `{s}` (expected white_noise, dephasing or none)"))
}

fn game_spec(name: GameName, c: Option<f64>) -> Result<GameSpec, Error> {
    let game = build_game(name, &make_target(name.target()))?;
    Ok(match c {
        Some(c) => game.with_c(c),
        None => game,
    })
}

fn print_json(value: &serde_json::Value) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<(), Error> {
    let cfg = ExperimentConfig::from_path(config)?;
    let dir = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| Error::Config {
        field: "output_dir".into(),
        message: "pass --out or set output_dir in the config".into(),
    })?;
    let exp = run_experiment(&cfg)?;
    exp.write_artifacts(&dir)?;
    print_json(&serde_json::to_value(&exp.summary)?)
}

fn certify(args: CertifyArgs) -> Result<(), Error> {
    let cfg = args.config.as_deref().map(ExperimentConfig::from_path).transpose()?;
    let game_name = args
        .game
        .or(cfg.as_ref().map(|c| c.game))
        .expect("clap requires game or config");
    let c = args.c.or(cfg.as_ref().and_then(|c| c.c));
    let game = game_spec(game_name, c)?;
    let seed = args.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    match (args.eta, args.confidence) {
        (Some(eta), _) => {
            let delta = args.delta.or(cfg.as_ref().map(|c| c.delta)).unwrap_or(0.01);
            let replay = certify_from_log(&args.events, &game, delta, &[eta])?;
            let request = CertificateRequest {
                target: game_name.target(),
                eta,
                n_total: replay.n_total,
                seed,
            };
            let cert = issue_certificate(&replay.state, &request)?;
            print_json(&serde_json::to_value(cert)?)
        }
        (None, Some(confidence)) => {
            if !(confidence > 0.0 && confidence < 1.0) {
                return Err(Error::Config {
                    field: "confidence".into(),
                    message: format!("{confidence} not in (0, 1)"),
                });
            }
            let replay = certify_from_log(&args.events, &game, 1.0 - confidence, &[])?;
            print!("{}", trace_csv(&[], 1.0 - confidence, &replay.trace));
            Ok(())
        }
        (None, None) => unreachable!("clap requires eta or confidence"),
    }
}

fn randomness(path: &Path, packed: bool) -> Result<(), Error> {
    let bits = if packed {
        BitString::from_packed(&fs::read(path)?)
    } else {
        BitString::from_ascii(&fs::read_to_string(path)?)?
    };
    let report = run_suite(&bits)?;
    let mut out = String::new();
    for r in &report.results {
        let _ = writeln!(out, "{}", serde_json::to_string(r)?);
    }
    let _ = writeln!(out, "{}", json!({"n_bits": bits.len(), "all_pass": report.all_pass}));
    print!("{out}");
    Ok(())
}

fn scaling(args: ScalingArgs) -> Result<(), Error> {
    let game = game_spec(args.game, args.c)?;
    let (window_min, window_max) = default_fit_window(args.game);
    let fit_min = args.fit_min.unwrap_or(window_min);
    let fit_max = args.fit_max.unwrap_or(window_max);
    let n_max = args.nmax.unwrap_or(fit_max);
    let target = make_target(args.game.target());
    let strength = fidelity_to_noise_strength(&target, args.noise, args.fidelity)?;
    let state = apply_noise(&target, &NoiseModel::new(args.noise, strength)?)?;
    let traces = simulate_repetitions(&game, &state, args.delta, n_max, args.reps, args.seed)?;
    let average = average_traces(&traces)?;
    let fit = fit_loglog_slope(&average, fit_min, fit_max)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("scaling.csv"), average.to_csv().as_bytes())?;
        write_atomic(&dir.join("slope.json"), &json_bytes(&fit)?)?;
    }
    let (protocol_reps, protocol_n) = protocol_repetitions(args.game);
    print_json(&json!({
        "game": args.game,
        "fidelity": args.fidelity,
        "noise": args.noise,
        "c": game.c,
        "delta": args.delta,
        "seed": args.seed,
        "repetitions": args.reps,
        "n_max": n_max,
        "protocol_repetitions": protocol_reps,
        "protocol_n_max": protocol_n,
        "fit": fit,
    }))
}

fn theory(game: GameName, delta: f64, nmax: u64, c: Option<f64>, out: Option<PathBuf>) -> Result<(), Error> {
    let spec = game_spec(game, c)?;
    let curve = theory_curve(&spec, delta, nmax)?;
    let mut csv = String::from("n_ver,eta\n");
    for p in &curve.points {
        let eta = p.eta.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{eta}", p.n_ver);
    }
    match out {
        Some(path) => write_atomic(&path, csv.as_bytes()),
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::Certify(args) => certify(args),
        Command::SolveEta {
            game,
            p_exp,
            n,
            delta,
            c,
        } => {
            let spec = game_spec(game, c)?;
            let eta = solve_eta(&spec, p_exp, n as f64, delta)?;
            print_json(&json!({
                "game": game,
                "p_exp": p_exp,
                "n_ver": n,
                "delta": delta,
                "c": spec.c,
                "eta": eta,
            }))
        }
        Command::Randomness { bits, packed } => randomness(&bits, packed),
        Command::Scaling(args) => scaling(args),
        Command::Theory {
            game,
            delta,
            nmax,
            c,
            out,
        } => theory(game, delta, nmax, c, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
