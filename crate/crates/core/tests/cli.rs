use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use spa_control::cli::traces::write_trace;
use spa_control::cli::{run, Cli};
use spa_control::sysid::synthetic::second_order_step_trace;
use tempfile::TempDir;

use clap::Parser;

fn bundle() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/bundle/design1")
}

/// Copy of the bundled project (config and traces) in a fresh directory.
fn project() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(bundle().join("config.json"), dir.path().join("config.json")).unwrap();
    fs::create_dir(dir.path().join("traces")).unwrap();
    for entry in fs::read_dir(bundle().join("traces")).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join("traces").join(p.file_name().unwrap())).unwrap();
    }
    dir
}

fn bin(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_spa-control"))
        .arg("--config")
        .arg(dir.join("config.json"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn lib(dir: &Path, args: &[&str]) -> Result<String, spa_control::cli::CliError> {
    let config = dir.join("config.json");
    let mut argv = vec!["spa-control", "--config", config.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(&Cli::try_parse_from(argv).unwrap())
}

const PIPELINE: [&[&str]; 9] = [
    &["model"],
    &["fit-zeta"],
    &["sysid"],
    &["weight"],
    &["lqr"],
    &["simulate"],
    &["simulate", "--ref", "square"],
    &["robust"],
    &["gripper"],
];

fn run_pipeline(dir: &Path) {
    for args in PIPELINE {
        let (code, _, err) = bin(dir, args);
        assert_eq!(code, 0, "{args:?}: {err}");
    }
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = project();
    run_pipeline(dir.path());
    let out = dir.path().join("out");
    for f in [
        "model.json",
        "damping.json",
        "sysid.json",
        "weight.json",
        "weight.csv",
        "lqr.json",
        "simulate_step.csv",
        "simulate_step_metrics.json",
        "simulate_square.csv",
        "simulate_square_metrics.json",
        "robust.json",
        "gripper.json",
        "robust.manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let damping: Value = serde_json::from_slice(&fs::read(out.join("damping.json")).unwrap()).unwrap();
    let zeta = damping["estimate"]["zeta_nominal"].as_f64().unwrap();
    assert!((zeta - 0.6).abs() < 0.02, "{zeta}");

    let robust: Value = serde_json::from_slice(&fs::read(out.join("robust.json")).unwrap()).unwrap();
    assert_eq!(robust["pass"], json!(true));
    assert_eq!(robust["sampled_all_stable"], json!(true));

    let manifest: Value = serde_json::from_slice(&fs::read(out.join("robust.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], json!("robust"));
    assert_eq!(manifest["inputs"], json!(["config.json", "weight.json", "lqr.json"]));
    assert_eq!(manifest["inputs_sha256"].as_str().unwrap().len(), 64);

    let csv = fs::read_to_string(out.join("simulate_step.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,reference,output,command");
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (project(), project());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let mut names: Vec<_> = fs::read_dir(a.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 20);
    for n in names {
        let x = fs::read(a.path().join("out").join(&n)).unwrap();
        let y = fs::read(b.path().join("out").join(&n)).unwrap();
        assert!(x == y, "{n:?} differs between runs");
    }
}

#[test]
fn seed_changes_only_seeded_artifacts() {
    let dir = project();
    assert_eq!(bin(dir.path(), &["gripper", "--seed", "1"]).0, 0);
    let one = fs::read(dir.path().join("out/gripper.json")).unwrap();
    assert_eq!(bin(dir.path(), &["gripper", "--seed", "2"]).0, 0);
    let two = fs::read(dir.path().join("out/gripper.json")).unwrap();
    assert_ne!(one, two);
    assert_eq!(bin(dir.path(), &["gripper", "--seed", "1"]).0, 0);
    assert_eq!(one, fs::read(dir.path().join("out/gripper.json")).unwrap());
}

#[test]
fn missing_upstream_artifacts_exit_4() {
    let dir = project();
    for (cmd, hint) in [("weight", "spa-control sysid"), ("robust", "spa-control weight")] {
        let (code, _, err) = bin(dir.path(), &[cmd]);
        assert_eq!(code, 4, "{cmd}: {err}");
        assert!(err.contains(hint), "{cmd}: {err}");
    }
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = project();
    assert_eq!(bin(dir.path(), &["bogus"]).0, 2);
    assert_eq!(bin(dir.path(), &["simulate", "--amplitude", "ninety"]).0, 2);
    assert_eq!(bin(dir.path(), &["lqr"]).0, 0);
    for bad in ["infdeg", "NaN"] {
        let (code, _, err) = bin(dir.path(), &["simulate", "--amplitude", bad]);
        assert_eq!(code, 2, "{bad}: {err}");
    }

    let out = Command::new(env!("CARGO_BIN_EXE_spa-control")).arg("model").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_spa-control"))
        .args(["--config", "/nonexistent/config.json", "model"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_spa-control")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn empty_trace_directory_is_a_validation_error() {
    let dir = project();
    for e in fs::read_dir(dir.path().join("traces")).unwrap() {
        fs::remove_file(e.unwrap().path()).unwrap();
    }
    let (code, _, err) = bin(dir.path(), &["fit-zeta"]);
    assert_eq!(code, 2);
    assert!(err.contains("no") && err.contains(".csv"), "{err}");
}

#[test]
fn malformed_trace_reports_file_and_line() {
    let dir = project();
    let p = dir.path().join("traces/run_3.csv");
    let mut lines: Vec<String> = fs::read_to_string(&p).unwrap().lines().map(String::from).collect();
    lines[41] = "0.4,20000,abc".into();
    fs::write(&p, lines.join("\n")).unwrap();
    let (code, _, err) = bin(dir.path(), &["sysid"]);
    assert_eq!(code, 2);
    assert!(err.contains("run_3.csv:42"), "{err}");
}

#[test]
fn strict_turns_boundary_fits_into_failures() {
    let dir = project();
    for e in fs::read_dir(dir.path().join("traces")).unwrap() {
        fs::remove_file(e.unwrap().path()).unwrap();
    }
    let trace = second_order_step_trace(0.999, 1.812, 5e-5, 20000.0, 100.0, 10.0).unwrap();
    write_trace(&trace, fs::File::create(dir.path().join("traces/overdamped.csv")).unwrap()).unwrap();

    let (code, summary, err) = bin(dir.path(), &["fit-zeta"]);
    assert_eq!(code, 0, "{err}");
    assert!(summary.contains("boundary warning"), "{summary}");
    let (code, _, err) = bin(dir.path(), &["fit-zeta", "--strict"]);
    assert_eq!(code, 3, "{err}");
    assert!(dir.path().join("out/damping.json").is_file());
}

/// Applies `edit` to the bundled config and returns the validation message.
fn mutated(edit: impl FnOnce(&mut Value)) -> String {
    let dir = project();
    let path = dir.path().join("config.json");
    let mut v: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    edit(&mut v);
    fs::write(&path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    let err = lib(dir.path(), &["model"]).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{}", err.message);
    err.message
}

fn remove(v: &mut Value, section: &str, key: &str) {
    v[section].as_object_mut().unwrap().remove(key);
}

#[test]
fn schema_mutations_name_the_offending_field() {
    type Edit = Box<dyn FnOnce(&mut Value)>;
    let cases: Vec<(Edit, &str)> = vec![
        (Box::new(|v| remove(v, "actuator", "moment_of_inertia")), "config actuator.moment_of_inertia: missing field"),
        (Box::new(|v| remove(v, "actuator", "youngs_modulus")), "config actuator.youngs_modulus: missing field"),
        (Box::new(|v| remove(v, "pump", "syringe_area")), "config pump.syringe_area: missing field"),
        (Box::new(|v| v.as_object_mut().unwrap().remove("pump").map(|_| ()).unwrap()), "config pump: missing field"),
        (Box::new(|v| v["actuator"]["colour"] = json!("red")), "config actuator.colour: unknown field"),
        (Box::new(|v| v["extra"] = json!(1)), "config extra: unknown field"),
        (Box::new(|v| v["actuator"]["mass"] = json!("heavy")), "config actuator.mass: invalid type"),
        (Box::new(|v| v["actuator"]["mass_unit"] = json!("lb")), "config actuator.mass_unit: unknown variant"),
        (Box::new(|v| v["actuator"]["mass"] = json!(-1.0)), "config actuator.mass:"),
        (Box::new(|v| v["actuator"]["length"] = json!(0.0)), "config actuator."),
        (Box::new(|v| v["actuator"]["damping_ratio"] = json!(1.2)), "config actuator.damping_ratio: 1.2 is outside (0, 1)"),
        (Box::new(|v| v["actuator"]["damping_perturbation"] = json!(0.7)), "config actuator.damping_perturbation:"),
        (
            Box::new(|v| v["actuator"]["moment_of_inertia"] = json!({ "from_natural_frequency": -2.0 })),
            "config actuator.moment_of_inertia.from_natural_frequency: -2 must be finite and > 0",
        ),
        (Box::new(|v| v["pump"]["max_motor_speed"] = json!(0.0)), "config pump.max_motor_speed: 0 must be finite and > 0"),
        (Box::new(|v| v["lqr"]["p"] = json!(-5.0)), "config lqr.p: -5 must be > 0"),
        (Box::new(|v| v["lqr"]["r"] = json!(0.0)), "config lqr.r: 0 must be > 0"),
        (Box::new(|v| v["lqr"]["settling_band"] = json!(0.5)), "config lqr.settling_band: 0.5 is outside (0, 0.1]"),
        (Box::new(|v| v["sim"]["dt"] = json!(0.0)), "config sim.dt: 0 must be finite and > 0"),
        (Box::new(|v| v["sim"]["dt"] = json!(20.0)), "config sim.dt: 20 must be below the horizon 10"),
        (Box::new(|v| v["identification"]["order"] = json!(25)), "config identification.order: 25 must lie in [1, hankel_rows - 1]"),
        (Box::new(|v| v["identification"]["weight_order"] = json!(3)), "config identification.weight_order: 3 must be 0, 1 or 2"),
        (Box::new(|v| v["gripper"] = json!({ "zeta_spread": 0.3 })), "config gripper.zeta_spread: 0.3 must lie in [0, damping_perturbation = 0.1]"),
    ];
    assert!(cases.len() >= 20);
    for (edit, expected) in cases {
        let msg = mutated(edit);
        assert!(msg.starts_with(expected), "expected `{expected}`, got `{msg}`");
    }
}
