use std::path::Path;
use std::process::{Command, Output};

use errp::report::Report;

fn errp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_errp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = errp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    errp(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--set", "n_trials=40", "--set", "n_channels=4", "--set", "fs_hz=128"];

fn synth(dir: &Path, seed: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out", s(dir), "--seed", seed];
    args.extend(SMALL);
    args.extend(extra);
    ok(&args);
}

#[test]
fn synth_is_deterministic_and_valid() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, "3", &[]);
    synth(&b, "3", &[]);
    for f in ["manifest.json", "data.f32", "labels.u8"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(ok(&["validate", "--input", s(&a)]).trim(), "ok");
    let manifest = std::fs::read_to_string(a.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"n_trials\": 40") && manifest.contains("\"produced_by\""));
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    synth(&a, "1", &[]);
    assert_eq!(code(&["validate", "--input", s(&t.path().join("missing"))]), 2);
    assert_eq!(code(&["run", "--input", s(&a), "--method", "riemann", "--set", "no_such_key=1"]), 2);
    assert_eq!(code(&["run", "--input", s(&a), "--method", "neither"]), 2);
    assert_eq!(code(&["run", "--input", s(&a), "--method", "benchmark", "--folds", "30"]), 2);
    assert_eq!(code(&["run", "--input", s(&a), "--method", "benchmark", "--set", "shrinkage=2"]), 2);
    let labels = a.join("labels.u8");
    let mut lb = std::fs::read(&labels).unwrap();
    lb[0] = 7;
    std::fs::write(&labels, lb).unwrap();
    let out = errp(&["validate", "--input", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("invalid label byte"));
}

#[test]
fn run_reports_plan_and_accuracies() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    synth(&a, "2", &["--set", "frn_amp_uv=-15", "--set", "noise_rms_uv=3"]);
    let mut digests = Vec::new();
    for m in ["riemann", "benchmark"] {
        let out = t.path().join(format!("{m}.json"));
        ok(&["run", "--input", s(&a), "--method", m, "--folds", "4", "--repeats", "3", "--seed", "7", "--out", s(&out)]);
        let r = Report::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let d = &r.datasets[0];
        assert_eq!(d.methods[0].accuracies.len(), 12);
        assert!(d.methods[0].mean >= 0.95, "{m} {}", d.methods[0].mean);
        assert_eq!(r.seeds.plan, 7);
        digests.push(d.plan.digest.clone());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn compare_single_and_multi() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    synth(&a, "4", &[]);
    synth(&b, "5", &[]);
    let common = ["--folds", "4", "--repeats", "2", "--set", "n_permutations=200"];
    let mut one = vec!["compare", "--input", s(&a)];
    one.extend(common);
    let single = ok(&one);
    assert!(single.contains("\"t_test\": {") && single.contains("\"permutation_test\": null"));
    let erp = t.path().join("erp.csv");
    let acc = t.path().join("acc.csv");
    let mut two = vec!["compare", "--input", s(&a), "--input", s(&b), "--emit-erp", s(&erp), "--emit-accuracy", s(&acc)];
    two.extend(common);
    let multi = Report::from_json(&ok(&two)).unwrap();
    let perm = multi.permutation_test.unwrap();
    assert!(perm.p > 0.0 && perm.p <= 1.0 && perm.z.is_finite());
    let text = std::fs::read_to_string(&erp).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "dataset,channel,time_s,success_mean,failure_mean,difference");
    assert_eq!(lines.count(), 2 * 4 * 320);
    let acc = std::fs::read_to_string(&acc).unwrap();
    assert_eq!(acc.lines().count(), 1 + 2 * 2 * 8);
}

#[test]
fn chance_command() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    synth(&a, "6", &[]);
    let r = Report::from_json(&ok(&["chance", "--input", s(&a), "--folds", "4", "--repeats", "1", "--set", "n_shuffles=30"])).unwrap();
    let c = r.datasets[0].chance.as_ref().unwrap();
    assert_eq!(c.n_shuffles, 30);
    assert!(c.threshold_97_5 >= c.mean_accuracy);
    assert!(r.datasets[0].methods.is_empty());
}

#[test]
fn preprocess_continuous_recording() {
    let t = tempfile::tempdir().unwrap();
    let raw = t.path().join("raw");
    let ep = t.path().join("ep");
    ok(&["synth", "--continuous", "--out", s(&raw), "--set", "n_trials=4", "--set", "n_channels=3", "--set", "line_noise_uv=30"]);
    ok(&["preprocess", "--input", s(&raw), "--out", s(&ep)]);
    assert_eq!(ok(&["validate", "--input", s(&ep)]).trim(), "ok");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ep.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["n_samples"], 640);
    assert_eq!(m["fs_hz"], 256.0);
    assert_eq!(m["t0_offset_s"], -0.5);
    assert_eq!(m["n_trials"], 4);

    let silent = t.path().join("silent");
    ok(&["synth", "--continuous", "--out", s(&silent), "--set", "n_trials=2", "--set", "n_channels=3"]);
    assert_eq!(code(&["preprocess", "--input", s(&silent), "--out", s(&t.path().join("x")), "--set", "event_code=9"]), 2);
}

#[test]
fn echoed_config_reproduces_report() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    synth(&a, "8", &[]);
    let first = ok(&["compare", "--input", s(&a), "--folds", "3", "--repeats", "2", "--seed", "11", "--chance", "--set", "n_shuffles=10"]);
    let r = Report::from_json(&first).unwrap();
    let cfg = t.path().join("echo.json");
    std::fs::write(&cfg, serde_json::to_string(&r.config).unwrap()).unwrap();
    let again = ok(&["compare", "--input", s(&a), "--config", s(&cfg), "--chance", "--threads", "2"]);
    let cut = |x: &str| x[..x.find("\"timestamp\"").unwrap()].to_string();
    assert_eq!(cut(&first), cut(&again));
}
