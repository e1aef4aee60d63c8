//! End-to-end runs of the `fibrelab` binary against temporary run directories.

use fibrelab_core::run::{read_csv, RunDir, RunManifest};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str =
    "steps = 1\nseed = 7\n\n[report]\nrays = 3\nsamples_per_ray = 5\nhist_bins = 6\n";

fn fibrelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibrelab"))
        .args(args)
        .env_remove("FIBRELAB_THREADS")
        .output()
        .expect("spawn fibrelab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn construct(cfg: &str, out: &Path, resume: bool) -> Output {
    let mut args = vec!["construct", "--config", cfg, "--out", out.to_str().unwrap()];
    if resume {
        args.push("--resume");
    }
    fibrelab(&args)
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn strip_times(m: &RunManifest) -> serde_json::Value {
    let mut v = serde_json::to_value(m).unwrap();
    v["created"] = serde_json::Value::Null;
    v["updated"] = serde_json::Value::Null;
    for s in v["steps"].as_array_mut().unwrap() {
        s["started"] = serde_json::Value::Null;
        s["finished"] = serde_json::Value::Null;
    }
    v
}

#[test]
fn construct_then_report_produces_a_readable_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    let o = construct(&cfg, &out, false);
    assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));

    let r = fibrelab(&["report", "--run", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let run = RunDir::open(&out).unwrap();
    assert_eq!(run.manifest.acceptance.scheduled, 1);
    assert_eq!(run.records.len(), run.manifest.acceptance.accepted);

    let (header, rows) = read_csv(&out.join("ray.csv")).unwrap();
    assert_eq!(header, ["ray", "index", "radius", "abs_f"]);
    assert_eq!(rows.len(), 3 * 5);
    let (header, _) = read_csv(&out.join("histogram.csv")).unwrap();
    assert_eq!(header, ["step", "lo", "hi", "count"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rays"]["rays"], 3);
    assert_eq!(report["rays"]["samples_per_ray"], 5);
}

#[test]
fn verify_and_trace_write_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    construct(&cfg, &out, false);
    let run = out.to_str().unwrap();

    let v = fibrelab(&["verify", "--run", run, "--band", "--paths"]);
    assert!(matches!(code(&v), 0 | 4), "{}", stderr(&v));
    let verification: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert!(verification["bands"].is_array());
    let (header, _) = read_csv(&out.join("paths.csv")).unwrap();
    assert_eq!(header, ["step", "restart", "length", "feasible"]);

    let t = fibrelab(&[
        "trace",
        "--run",
        run,
        "--c",
        "0.5,0",
        "--start",
        "0.5,0,0.1,0",
    ]);
    assert_eq!(code(&t), 0, "{}", stderr(&t));
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert!(trace["ledger"]["residual"].as_f64().unwrap() <= 1e-8);
    read_csv(&out.join("trace.csv")).unwrap();
}

#[test]
fn non_interlacing_schedule_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "steps = 2\n\n[schedule]\nbase = 0.625\ninner = [0.75, 0.7]\nouter = [0.8, 0.72]\ndelta = [1.0, 1.0]\nlambda = [0.5, 0.25]\n",
    );
    let o = construct(&cfg, &tmp.path().join("run"), false);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("interlace"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "stepz = 2\n");
    let o = construct(&cfg, &tmp.path().join("run"), false);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn existing_run_requires_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    construct(&cfg, &out, false);
    let again = construct(&cfg, &out, false);
    assert_eq!(code(&again), 2, "{}", stderr(&again));
}

#[test]
fn resume_only_appends_to_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    construct(&cfg, &out, false);
    let before = manifest(&out);

    let o = fibrelab(&["construct", "--out", out.to_str().unwrap(), "--resume"]);
    assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));
    let after = manifest(&out);
    assert_eq!(after.config_hash, before.config_hash);
    assert_eq!(after.created, before.created);
    assert!(after.steps.len() >= before.steps.len());
    for (a, b) in after.steps.iter().zip(&before.steps) {
        assert_eq!(
            serde_json::to_value(a).unwrap(),
            serde_json::to_value(b).unwrap()
        );
    }
}

#[test]
fn resume_with_a_different_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    construct(&cfg, &out, false);
    let other = tmp.path().join("other.toml");
    fs::write(&other, SMALL.replace("seed = 7", "seed = 8")).unwrap();
    let o = construct(other.to_str().unwrap(), &out, true);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn locked_run_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    construct(&cfg, &out, false);
    fs::write(out.join("run.lock"), "").unwrap();
    let o = construct(&cfg, &out, true);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(out.join("run.lock").exists());
}

#[test]
fn malformed_manifest_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    construct(&cfg, &out, false);
    fs::write(out.join("manifest.json"), "{").unwrap();
    let o = fibrelab(&["report", "--run", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_fibrelab"))
        .args(["report", "--run", "/nonexistent"])
        .env("FIBRELAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("FIBRELAB_THREADS"));
}

#[test]
fn constructs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let threads = |n: &str, out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_fibrelab"))
            .args([
                "construct",
                "--config",
                &cfg,
                "--out",
                out.to_str().unwrap(),
            ])
            .env("FIBRELAB_THREADS", n)
            .output()
            .unwrap()
    };
    threads("1", &a);
    threads("4", &b);
    assert_eq!(strip_times(&manifest(&a)), strip_times(&manifest(&b)));
    for f in ["config.json", "init.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let names = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d.join("steps"))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names(&a), names(&b));
    for n in names(&a) {
        assert_eq!(
            fs::read(a.join("steps").join(&n)).unwrap(),
            fs::read(b.join("steps").join(&n)).unwrap()
        );
    }
}

#[test]
fn labyrinth_subcommand_certifies_a_thick_shell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lab");
    let o = fibrelab(&[
        "labyrinth",
        "--inner",
        "0.5",
        "--outer",
        "0.9",
        "--delta",
        "0.1",
        "--eta",
        "0.2",
        "--restarts",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lab: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("labyrinth.json")).unwrap()).unwrap();
    assert!(!lab["labyrinth"]["components"]
        .as_array()
        .unwrap()
        .is_empty());
    let (_, rows) = read_csv(&out.join("paths.csv")).unwrap();
    assert_eq!(rows.len(), 10);
    for r in rows {
        assert!(r[2].parse::<f64>().unwrap() >= 0.1);
    }
}

#[test]
fn malformed_complex_argument_is_a_usage_error() {
    let o = fibrelab(&["trace", "--run", "x", "--c", "0.5", "--start", "0,0,0,0"]);
    assert_eq!(code(&o), 2);
}
