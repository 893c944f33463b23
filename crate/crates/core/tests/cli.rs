use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use sarkit::cli::{execute, main_with_args, Cli};
use sarkit::io::{matrix_to_image, matrix_to_profiles, Matrix};
use sarkit::scenario::Scenario;

const TINY: &str = r#"
seed = 3
measurements = 17

[geometry]
start = [-0.08, 0.0, 10.0]

[[geometry.receivers]]
kind = "mono"
offset = [0.0, 0.0, 0.0]

[[geometry.receivers]]
kind = "bistatic"
offset = [0.5, 0.0, 0.0]

[[geometry.targets]]
position = [0.0, 10.0, 0.0]

[errors]
cpe_max = 3.14
to_max = 2e-9

[grid]
x0 = -0.5
y0 = 9.5
dx = 0.1
dy = 0.1
nx = 11
ny = 11
"#;

fn scenario_file(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn run(args: &[&str], scenario: &Path, out: &Path) -> sarkit::Result<String> {
    let mut argv: Vec<OsString> = std::iter::once("sarkit")
        .chain(args.iter().copied())
        .map(Into::into)
        .collect();
    argv.extend([
        "--scenario".into(),
        scenario.into(),
        "--out".into(),
        out.into(),
    ]);
    execute(&Cli::try_parse_from(argv).unwrap())
}

fn bins(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".bin") || n.ends_with(".csv") || n.ends_with(".pgm"))
        .collect();
    v.sort();
    v
}

#[test]
fn stages_compose_to_figure_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = scenario_file(tmp.path());
    let staged = tmp.path().join("staged");
    for stage in ["simulate", "process", "image", "metrics"] {
        run(&[stage], &sc, &staged).unwrap();
    }
    let fig = tmp.path().join("fig");
    run(&["figure", "9"], &sc, &fig).unwrap();
    let baseline = fig.join("figure9").join("baseline");

    let produced = bins(&baseline);
    assert!(produced.iter().any(|n| n.starts_with("profiles_")));
    assert!(produced.iter().any(|n| n == "image_combined_coherent.bin"));
    for name in &produced {
        let a = std::fs::read(staged.join(name)).unwrap();
        let b = std::fs::read(baseline.join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    assert_eq!(
        std::fs::read(staged.join("metrics.json")).unwrap(),
        std::fs::read(baseline.join("metrics.json")).unwrap()
    );
    assert!(staged.join("signals_rx1_sidelink.bin").exists());
}

#[test]
fn artifacts_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = scenario_file(tmp.path());
    let out = tmp.path().join("o");
    for stage in ["simulate", "process", "image"] {
        run(&[stage], &sc, &out).unwrap();
    }
    let profiles =
        matrix_to_profiles(&Matrix::load(&out.join("profiles_rx1_sidelink.bin")).unwrap()).unwrap();
    assert_eq!(profiles.len(), 17);
    let image = matrix_to_image(&Matrix::load(&out.join("image_rx0_mono.bin")).unwrap()).unwrap();
    assert_eq!((image.grid.nu, image.grid.nv), (11, 11));
    let (_, iu, iv) = image.peak();
    assert_eq!((iu, iv), (5, 5));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = scenario_file(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&["figure", "10", "--threads", "1"], &sc, &a).unwrap();
    run(&["figure", "10", "--threads", "3"], &sc, &b).unwrap();
    for case in ["baseline", "case1", "case3"] {
        let (da, db) = (a.join("figure10").join(case), b.join("figure10").join(case));
        for name in bins(&da) {
            assert_eq!(
                std::fs::read(da.join(&name)).unwrap(),
                std::fs::read(db.join(&name)).unwrap()
            );
        }
    }
}

#[test]
fn seed_flag_overrides_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = scenario_file(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&["simulate", "--seed", "3"], &sc, &a).unwrap();
    run(&["simulate", "--seed", "4"], &sc, &b).unwrap();
    let name = "signals_rx1_radar.bin";
    assert_ne!(
        std::fs::read(a.join(name)).unwrap(),
        std::fs::read(b.join(name)).unwrap()
    );
    let c = tmp.path().join("c");
    run(&["simulate"], &sc, &c).unwrap();
    assert_eq!(
        std::fs::read(a.join(name)).unwrap(),
        std::fs::read(c.join(name)).unwrap()
    );
}

#[test]
fn failures_carry_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = scenario_file(tmp.path());
    let empty = tmp.path().join("empty");

    let e = run(&["process"], &sc, &empty).unwrap_err();
    assert_eq!(e.kind(), "io");
    let e = run(&["figure", "4"], &sc, &empty).unwrap_err();
    assert_eq!(e.kind(), "invalid_params");

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "measurements = 0\n").unwrap();
    let e = run(&["budget"], &bad, &empty).unwrap_err();
    assert_eq!(e.kind(), "validation");

    let typo = tmp.path().join("typo.toml");
    std::fs::write(&typo, "seed = 1\nmeasurments = 3\n").unwrap();
    let e = run(&["budget"], &typo, &empty).unwrap_err();
    assert_eq!(e.kind(), "parse");

    let code = main_with_args([
        "sarkit",
        "image",
        "--out",
        empty.to_str().unwrap(),
        "--scenario",
        sc.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert_eq!(main_with_args(["sarkit", "nonsense"]), 2);
}

#[test]
fn budget_and_trigger_stages_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = scenario_file(tmp.path());
    let out = tmp.path().join("o");
    let summary: serde_json::Value =
        serde_json::from_str(&run(&["budget"], &sc, &out).unwrap()).unwrap();
    assert_eq!(summary["streams"], 2);
    let b: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("budget.json")).unwrap()).unwrap();
    assert_eq!(b, summary);

    let t: serde_json::Value =
        serde_json::from_str(&run(&["trigger"], &sc, &out).unwrap()).unwrap();
    assert_eq!(t["detected"], 3);
    assert_eq!(t["false_triggers"], 0);
    let lines = std::fs::read_to_string(out.join("trigger_events.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);

    assert_eq!(Scenario::load(&sc).unwrap().measurements, 17);
}
