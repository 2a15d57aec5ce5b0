use std::fs;

use diqsc_core::certify::EtaBound;
use diqsc_core::harness::{certify_from_log, read_summary, run_experiment, trace_csv, ExperimentConfig};
use diqsc_core::{Error, Station};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

const MERMIN: &str = r#"
game = "mermin3"
seed = 3
total_emissions = 2000

[switch]
num_photons = 3
switch_frequency = 800000.0
emission_rate = 62000.0
"#;

#[test]
fn artifacts_written_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let exp = run_experiment(&config(MERMIN)).unwrap();
    exp.write_artifacts(dir.path()).unwrap();
    for name in [
        "config.toml",
        "events.jsonl",
        "summary.json",
        "trace.csv",
        "bits.txt",
        "certificate.json",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }

    let cert: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("certificate.json")).unwrap()).unwrap();
    let keys: Vec<&str> = cert.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = vec![
        "game",
        "target",
        "n_total",
        "n_verifier",
        "mu",
        "p_exp",
        "eta_certified",
        "confidence",
        "c",
        "delta",
        "seed",
        "timestamp_utc",
    ];
    expected.sort();
    let mut keys_sorted = keys.clone();
    keys_sorted.sort();
    assert_eq!(keys_sorted, expected);

    let game = exp.config.game_spec().unwrap();
    let replay = certify_from_log(
        &dir.path().join("events.jsonl"),
        &game,
        exp.config.delta,
        &exp.config.eta_targets,
    )
    .unwrap();
    let replayed = trace_csv(&exp.config.eta_targets, exp.config.delta, &replay.trace);
    assert_eq!(replayed, fs::read_to_string(dir.path().join("trace.csv")).unwrap());

    // the routing bitstring lives in bits.txt, not in summary.json
    let mut expected_summary = exp.summary.clone();
    expected_summary.routing.bitstring.clear();
    assert_eq!(
        read_summary(&dir.path().join("summary.json")).unwrap(),
        expected_summary
    );
    let bits = fs::read_to_string(dir.path().join("bits.txt")).unwrap();
    let from_summary: String = exp
        .summary
        .routing
        .bitstring
        .iter()
        .map(|b| if *b == 1 { '1' } else { '0' })
        .collect();
    assert_eq!(bits.trim_end(), from_summary);
}

#[test]
fn persisted_config_reproduces_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config(MERMIN))
        .unwrap()
        .write_artifacts(a.path())
        .unwrap();
    let copy = ExperimentConfig::from_path(&a.path().join("config.toml")).unwrap();
    run_experiment(&copy).unwrap().write_artifacts(b.path()).unwrap();
    for name in ["config.toml", "events.jsonl", "summary.json", "trace.csv", "bits.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn truncated_log_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let exp = run_experiment(&config(MERMIN)).unwrap();
    exp.write_artifacts(dir.path()).unwrap();
    let path = dir.path().join("events.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let cut = &text[..text.len() - 10];
    fs::write(&path, cut).unwrap();
    let lines = cut.lines().count();
    let game = exp.config.game_spec().unwrap();
    match certify_from_log(&path, &game, 0.01, &[0.08]) {
        Err(Error::Log { line, .. }) => assert_eq!(line, lines),
        other => panic!("expected log error, got {other:?}"),
    }
}

#[test]
fn station_arity_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let exp = run_experiment(&config(MERMIN)).unwrap();
    exp.write_artifacts(dir.path()).unwrap();
    let chsh = diqsc_core::games::build_game(
        diqsc_core::GameName::Chsh,
        &diqsc_core::states::make_target(diqsc_core::TargetName::BellPhiPlus),
    )
    .unwrap();
    let err = certify_from_log(&dir.path().join("events.jsonl"), &chsh, 0.01, &[0.1]).unwrap_err();
    assert!(matches!(err, Error::Log { .. }), "{err}");
}

#[test]
fn eta_falls_on_wins_and_jumps_on_losses() {
    // a win rate near 0.97 gives the sawtooth trace of a real run
    let text = MERMIN.replace("total_emissions = 2000", "total_emissions = 6000") + "\n[source]\nfidelity = 0.947\n";
    let exp = run_experiment(&config(&text)).unwrap();
    let p = exp.summary.p_exp.unwrap();
    assert!((p - 0.97).abs() < 0.02, "{p}");
    let mut rises = 0;
    for (prev, next) in exp.trace.iter().zip(exp.trace.iter().skip(1)) {
        let won = next.n_wins > prev.n_wins;
        match (prev.eta, next.eta) {
            (EtaBound::Certified(a), EtaBound::Certified(b)) => {
                if won {
                    assert!(b <= a, "eta rose on a win at n = {}", next.n_ver);
                } else if b > a {
                    rises += 1;
                }
            }
            (EtaBound::Certified(_), EtaBound::NotCertifiable) => assert!(!won),
            _ => {}
        }
    }
    assert!(rises > 10);
}

#[test]
fn chsh_duty_cycle_sets_mu() {
    let text = r#"
game = "chsh"
seed = 5
total_emissions = 100000

[switch]
num_photons = 2
switch_frequency = 800000.0
emission_rate = 62000.0
duty_cycle = 0.43
"#;
    let exp = run_experiment(&config(text)).unwrap();
    let r = &exp.summary.routing;
    let n = (r.n_user + r.n_ver) as f64;
    let sigma = (0.43 * 0.57 / n).sqrt();
    assert!((r.mu - 0.43).abs() < 4.0 * sigma, "{}", r.mu);
    assert_eq!(r.epsilon, 1.0);
    assert!(exp.events.iter().all(|e| e.station != Station::Cross));
}

#[test]
fn duration_based_run() {
    let text = MERMIN.replace("total_emissions = 2000\n", "").replace(
        "emission_rate = 62000.0",
        "emission_rate = 62000.0\ntotal_duration = 0.01",
    );
    let exp = run_experiment(&config(&text)).unwrap();
    assert!(exp.summary.simulated_time < 0.01);
    let n = exp.summary.routing.total as f64;
    assert!((n - 620.0).abs() < 4.0 * 620f64.sqrt());
}

#[test]
fn user_estimate_recorded() {
    let text = MERMIN.replace("seed = 3", "seed = 3\nuser_estimate_shots = 20000");
    let exp = run_experiment(&config(&text)).unwrap();
    let f = exp.summary.user_fidelity.unwrap();
    assert!((f - 1.0).abs() < 0.02, "{f}");
}
