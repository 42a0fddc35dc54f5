use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_speckle-puf"));
    c.env_remove("SPECKLE_PUF_THREADS");
    c
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = r#"{
        "version": 1,
        "seed": 5,
        "modes": {"max_modes": 24, "grid_size": 48},
        "population": {"count": 5},
        "detector": {"noise_repeats": 3},
        "analysis": {"key_count": 5},
        "challenges": {"offset_devices": 3},
        "hash": {"gabor_wavelengths_px": [6.0]},
        "reservoir": {"defect_counts": [0, 5], "snr_levels_db": [20.0, 30.0], "trials": 2,
                      "stream_len": 40, "feature_count": 16}
    }"#;
    let p = dir.join("config.json");
    fs::write(&p, cfg).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> Value {
    let mut m: Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m.as_object_mut().unwrap().remove("created_unix_s");
    m
}

#[test]
fn modes_prints_scale_without_solving() {
    let text = ok(run(&["modes"]));
    assert!(text.contains("V-number         999.60"), "{text}");
    let count: f64 =
        text.lines().find(|l| l.starts_with("modes")).unwrap().split_whitespace().last().unwrap().parse().unwrap();
    assert!((count / 5e5 - 1.0).abs() < 0.01);
}

#[test]
fn unknown_pipeline_is_a_usage_error() {
    let out = run(&["run", "fig5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig5"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"version": 1, "population": {"count": 3, "colour": 1}}"#).unwrap();
    let out = run(&["--config", p.to_str().unwrap(), "simulate", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("population") && err.contains("colour"), "{err}");
}

#[test]
fn simulate_writes_one_pgm_per_device_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(run(&["--config", cfg.to_str().unwrap(), "--threads", "1", "--out", a.to_str().unwrap(), "simulate"]));
    ok(bin()
        .env("SPECKLE_PUF_THREADS", "3")
        .args(["--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "simulate"])
        .output()
        .unwrap());
    let pgms: Vec<_> = fs::read_dir(a.join("images")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(pgms.len(), 5);
    for n in &pgms {
        let n = n.to_string_lossy();
        assert!(n.starts_with("dev") && n.contains("_wl1540_n") && n.ends_with(".pgm"), "{n}");
    }
    let m = manifest(&a);
    assert_eq!(m, manifest(&b));
    for art in m["artifacts"].as_array().unwrap() {
        let rel = art["path"].as_str().unwrap();
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    assert_eq!(m["seeds"]["master"], 5);
    assert_eq!(m["seeds"]["devices"].as_array().unwrap().len(), 5);

    // a different seed changes the devices
    let c = dir.path().join("c");
    ok(run(&["--config", cfg.to_str().unwrap(), "--seed", "6", "--out", c.to_str().unwrap(), "simulate"]));
    assert_ne!(manifest(&c)["seeds"]["devices"], m["seeds"]["devices"]);

    // images hash back into keys
    let imgs: Vec<String> =
        fs::read_dir(a.join("images")).unwrap().map(|e| e.unwrap().path().display().to_string()).collect();
    let d = dir.path().join("d");
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "enroll", "--images"];
    args.extend(imgs.iter().map(String::as_str));
    ok(run(&args));
    assert_eq!(fs::read_to_string(d.join("keys/images.keys")).unwrap().lines().count(), 5);
}

#[test]
fn stats_then_fig3_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    ok(run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "stats"]));
    let fig3 = fs::read_to_string(out.join("fig3.csv")).unwrap();
    let rep = dir.path().join("rep");
    ok(run(&["--out", rep.to_str().unwrap(), "report", "fig3", "--stats", out.join("stats.json").to_str().unwrap()]));
    assert_eq!(fs::read_to_string(rep.join("fig3.csv")).unwrap(), fig3);
    assert_eq!(fig3.lines().count(), 65);

    // a report with one class removed is rejected by name
    let mut stats: Value = serde_json::from_slice(&fs::read(out.join("stats.json")).unwrap()).unwrap();
    stats.as_object_mut().unwrap().remove("inter_i");
    let partial = dir.path().join("partial.json");
    fs::write(&partial, serde_json::to_vec(&stats).unwrap()).unwrap();
    let res = run(&["--out", rep.to_str().unwrap(), "report", "fig3", "--stats", partial.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("inter_I"));

    // key files from the run feed the analysis commands
    let keys = out.join("keys/inter_I.keys");
    let e = dir.path().join("e");
    let text = ok(run(&["--out", e.to_str().unwrap(), "entropy", "--keys", keys.to_str().unwrap()]));
    assert!(text.contains("h_min"));
    let table = fs::read_to_string(e.join("table1.csv")).unwrap();
    assert!(table.starts_with("method,source,h_conditional,h_minimum\nsimulated,"));
    assert!(table.contains("Waveguide-PUF,reference,0.99,0.929"));
    let n = dir.path().join("n");
    ok(run(&["--out", n.to_str().unwrap(), "nist", "--keys", keys.to_str().unwrap()]));
    let report: Value = serde_json::from_slice(&fs::read(n.join("nist.json")).unwrap()).unwrap();
    assert_eq!(report["tests"].as_array().unwrap().len(), 7);
}

#[test]
fn rc_train_eval_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let sweep = dir.path().join("sweep");
    ok(run(&["--config", c, "--out", sweep.to_str().unwrap(), "rc", "sweep"]));
    let fig4 = fs::read_to_string(sweep.join("fig4.csv")).unwrap();
    assert_eq!(fig4.lines().next().unwrap(), "defects,snr_db,mean_error,std_error,trials");
    assert_eq!(fig4.lines().count(), 1 + 2 * 2);
    let rep = dir.path().join("rep");
    ok(run(&["--out", rep.to_str().unwrap(), "report", "fig4", "--sweep", sweep.join("sweep.json").to_str().unwrap()]));
    assert_eq!(fs::read_to_string(rep.join("fig4.csv")).unwrap(), fig4);

    let train = dir.path().join("train");
    ok(run(&[
        "--config",
        c,
        "--out",
        train.to_str().unwrap(),
        "rc",
        "train",
        "--defects",
        "5",
        "--trial",
        "1",
        "--snr",
        "30",
    ]));
    let model = train.join("rc_model.json");
    let eval = dir.path().join("eval");
    ok(run(&["--config", c, "--out", eval.to_str().unwrap(), "rc", "eval", "--model", model.to_str().unwrap()]));
    let e: Value = serde_json::from_slice(&fs::read(eval.join("rc_eval.json")).unwrap()).unwrap();
    let s: Value = serde_json::from_slice(&fs::read(sweep.join("sweep.json")).unwrap()).unwrap();
    let cell = s["cells"].as_array().unwrap().iter().find(|c| c["defects"] == 5 && c["snr_db"] == 30.0).unwrap();
    assert_eq!(e["test_error"], cell["errors"][1]);
}
