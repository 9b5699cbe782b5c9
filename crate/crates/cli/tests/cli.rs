use std::fs;
use std::path::Path;
use std::process::Command;

use mpf_cli::compare::{compare_dir, compare_rows};
use mpf_cli::config::{parse_scenario, parse_scenario_str, Engine};
use mpf_cli::run::{self, execute};

const BIN: &str = env!("CARGO_BIN_EXE_mpf");

fn scenario(engines: &str, seeds: &str, extra: &str) -> String {
    format!(
        "schema = 1\nname = \"t\"\n[model]\npreset = \"linear-ou\"\n{extra}\n[run]\nengines = [{engines}]\nseeds = [{seeds}]\nparticles = 20000\n"
    )
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn echoed_scenario_round_trips() {
    for preset in ["linear-ou", "cubic-sensor", "bimodal-drift"] {
        let text = format!("schema = 1\n[model]\npreset = \"{preset}\"\n[observation]\nmode = \"continuous\"\n");
        let sc = parse_scenario_str(&text).unwrap();
        assert_eq!(parse_scenario_str(&sc.to_toml()).unwrap(), sc);
    }
}

#[test]
fn mpf_only_run_writes_two_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let sc = parse_scenario_str(&scenario("\"mpf\"", "0", "")).unwrap();
    let report = run::run(&sc, dir.path()).unwrap();
    assert_eq!(report.failures(), 0);
    assert_eq!(csv_files(dir.path()), ["mpf-s0.csv", "summary.csv"]);
    let head = fs::read_to_string(dir.path().join("mpf-s0.csv")).unwrap();
    assert!(head.starts_with("t,engine,mean,variance,l2_residual_drift,ess,events\n"));
}

#[test]
fn identical_seeds_give_identical_csv() {
    let text = scenario("\"mpf\", \"particle\", \"grid\"", "4, 5", "");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = parse_scenario_str(&text).unwrap();
    run::run(&sc, a.path()).unwrap();
    run::run(&sc, b.path()).unwrap();
    let files = csv_files(a.path());
    assert_eq!(files, csv_files(b.path()));
    for f in files {
        assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn self_comparison_has_zero_discrepancy() {
    let sc = parse_scenario_str(&scenario("\"mpf\"", "0", "")).unwrap();
    let report = execute(&sc);
    let rows = &report.get(Engine::Mpf, 0).unwrap().rows;
    let d = compare_rows(0, "mpf", rows, "mpf", rows).unwrap();
    assert_eq!(d.len(), rows.len());
    assert!(d.iter().all(|x| x.mean_gap == 0.0 && x.variance_gap == 0.0));
}

#[test]
fn galerkin_matches_mpf_on_prediction_steps() {
    // substeps put four pure prediction records between observations
    let text = scenario("\"mpf\", \"galerkin\"", "0", "[integrator]\nsubsteps = 5");
    let dir = tempfile::tempdir().unwrap();
    run::run(&parse_scenario_str(&text).unwrap(), dir.path()).unwrap();
    let d = compare_dir(dir.path()).unwrap();
    assert_eq!(d.len(), 101);
    let worst = d.iter().map(|x| x.mean_gap.max(x.variance_gap)).fold(0.0, f64::max);
    assert!(worst <= 1e-10, "{worst}");
}

#[test]
fn mpf_tracks_particle_filter_within_monte_carlo_band() {
    let sc = parse_scenario_str(&scenario("\"mpf\", \"particle\"", "0, 1, 2", "")).unwrap();
    let report = execute(&sc);
    for seed in 0..3 {
        let m = &report.get(Engine::Mpf, seed).unwrap().rows;
        let p = &report.get(Engine::Particle, seed).unwrap().rows;
        assert_eq!(m.len(), p.len());
        let gap: f64 = m.iter().zip(p).map(|(a, b)| (a.mean - b.mean).abs()).sum::<f64>() / m.len() as f64;
        let se: f64 = p.iter().map(|r| (r.variance / r.ess.unwrap()).sqrt()).sum::<f64>() / p.len() as f64;
        assert!(gap <= 3.0 * se, "seed {seed}: gap {gap:.3e} vs se {se:.3e}");
    }
}

#[test]
fn failing_engine_is_recorded_and_others_continue() {
    // a non-linear sensor is outside the Kalman filter's scope
    let text = "schema = 1\n[model]\npreset = \"cubic-sensor\"\n[run]\nengines = [\"mpf\", \"kalman\"]\n";
    let dir = tempfile::tempdir().unwrap();
    let report = run::run(&parse_scenario_str(text).unwrap(), dir.path()).unwrap();
    let k = report.get(Engine::Kalman, 0).unwrap();
    assert!(k.error.is_some() && k.rows.is_empty());
    assert!(report.get(Engine::Mpf, 0).unwrap().error.is_none());
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("0,kalman,failed")));
    assert!(dir.path().join("kalman-s0.csv").exists());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, scenario("\"mpf\"", "0", "")).unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "schema = 1\n[model]\npreset = \"linear-ou\"\n[basis]\ncomponents = [[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]\ntheta = [0.2, 0.3, 0.5]\n").unwrap();
    let kalman = dir.path().join("kalman.toml");
    fs::write(&kalman, "schema = 1\n[model]\npreset = \"cubic-sensor\"\n[run]\nengines = [\"kalman\"]\n").unwrap();

    let out = dir.path().join("out");
    let ok = Command::new(BIN).args(["run", good.to_str().unwrap(), "-o", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(out.join("mpf-s0.csv").exists());

    let env_out = dir.path().join("from-env");
    let ok = Command::new(BIN).args(["run", good.to_str().unwrap()]).env("MPF_OUTPUT_DIR", &env_out).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(env_out.join("summary.csv").exists());

    let v = Command::new(BIN).args(["run", bad.to_str().unwrap(), "-o", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(v.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&v.stderr).contains("basis.theta"));

    let n = Command::new(BIN).args(["run", kalman.to_str().unwrap(), "-o", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(n.status.code(), Some(3));

    let c = Command::new(BIN).args(["compare", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(c.status.code(), Some(2), "a single engine cannot be compared");

    let m = Command::new(BIN).args(["metrics", "--family", "gaussian", "--coords", "expectation"]).output().unwrap();
    assert_eq!(m.status.code(), Some(0));
    let text = String::from_utf8(m.stdout).unwrap();
    for name in ["fisher canonical", "fisher expectation", "l2 canonical", "l2 expectation"] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn parse_errors_name_the_source() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.toml");
    fs::write(&p, "schema = 1\n[model\n").unwrap();
    let e = parse_scenario(&p).unwrap_err();
    assert!(e.to_string().contains("broken.toml"), "{e}");
    assert_eq!(e.exit_code(), 2);
}
