//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use errp::commands;
use errp::config::Config;
use errp::core::eval::{self, Method};
use errp::core::filter;
use errp::core::linalg::Matrix;
use errp::core::logistic::{self, Point, Problem};
use errp::core::signal::{self, ContinuousRecording, Label};
use errp::core::spd::{self, KarcherOptions, SpdMatrix};
use errp::core::synth::{self, PsychometricModel, StaircaseConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
    let a = gaussian(d, d, rng);
    let m = a.matmul(&a.transpose()).unwrap().scaled(1.0 / d as f64);
    let m = m.add(&Matrix::identity(d).scaled(0.1)).unwrap();
    SpdMatrix::from_matrix(m).unwrap()
}

fn rel_frob(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

fn midpoint(a: &SpdMatrix, b: &SpdMatrix) -> Matrix {
    let s = a.sqrt().unwrap();
    let is = a.inv_sqrt().unwrap();
    let inner = is.matrix().matmul(b.matrix()).unwrap().matmul(is.matrix()).unwrap();
    let inner = SpdMatrix::from_matrix(inner.add(&inner.transpose()).unwrap().scaled(0.5)).unwrap();
    let r = inner.sqrt().unwrap();
    s.matrix().matmul(r.matrix()).unwrap().matmul(s.matrix()).unwrap()
}

fn c1_manifold() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_exp_log = 0.0f64;
    let mut worst_mid = 0.0f64;
    let mut n = 0;
    for &(d, count) in &[(2usize, 50usize), (6, 40), (96, 12)] {
        for _ in 0..count {
            let a = random_spd(d, &mut rng);
            let b = random_spd(d, &mut rng);
            let back = a.log().unwrap().exp().unwrap();
            worst_exp_log = worst_exp_log.max(rel_frob(back.matrix(), a.matrix()));
            let g = spd::geometric_mean(&[a.clone(), b.clone()], KarcherOptions::default()).unwrap();
            worst_mid = worst_mid.max(rel_frob(g.matrix(), &midpoint(&a, &b)));
            n += 2;
        }
    }
    let mut worst_eq = 0.0f64;
    for _ in 0..20 {
        let set: Vec<SpdMatrix> = (0..8).map(|_| random_spd(6, &mut rng)).collect();
        let w = gaussian(6, 6, &mut rng).add(&Matrix::identity(6).scaled(3.0)).unwrap();
        let moved: Vec<SpdMatrix> = set.iter().map(|c| c.congruence(&w).unwrap()).collect();
        let lhs = spd::geometric_mean(&moved, KarcherOptions::default()).unwrap();
        let rhs = spd::geometric_mean(&set, KarcherOptions::default()).unwrap().congruence(&w).unwrap();
        worst_eq = worst_eq.max(rel_frob(lhs.matrix(), rhs.matrix()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_exp_log < 1e-9 && worst_mid < 1e-8 && worst_eq < 1e-7 && secs < 60.0,
        format!("{n} matrices; exp(log) {worst_exp_log:.2e}, midpoint {worst_mid:.2e}, congruence {worst_eq:.2e}, {secs:.1}s"),
    )
}

fn c2_tangent_isometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = [2, 6, 16][i % 3];
        let c = random_spd(d, &mut rng);
        let g = random_spd(d, &mut rng);
        let v = spd::tangent_project(&c, &g).unwrap();
        let dist = spd::airm_distance(&g, &c).unwrap();
        worst = worst.max((v.norm() - dist).abs());
    }
    outcome(worst < 1e-8, format!("100 pairs; max |‖v‖ - δ| {worst:.2e}"))
}

fn c3_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (n, d) = (20, 5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let labels: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Success } else { Label::Failure }).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let prob = Problem::from_rows(&refs, &labels, 1.0).unwrap();
        let p = Point { weights: (0..d).map(|_| rng.sample(StandardNormal)).collect(), bias: rng.sample(StandardNormal) };
        worst = worst.max(logistic::grad_check(&prob, &p, 1e-5));
    }
    outcome(worst < 1e-5, format!("20 points; max relative error {worst:.2e}"))
}

fn c4_statistics() -> Outcome {
    let p = eval::normal_two_sided_p(4.028);
    let p_ok = (p - 5.632e-05).abs() < 1e-7;
    let accs = vec![0.8; 100];
    let labels: Vec<Label> = (0..300).map(|i| if i % 2 == 0 { Label::Success } else { Label::Failure }).collect();
    let plan = eval::make_fold_plan(&labels, 10, 10, 1).unwrap();
    let cv = |m| eval::CvResult {
        method: m,
        accuracies: accs.clone(),
        per_fold_test_sizes: vec![30; 100],
        audits: Vec::new(),
        plan: plan.clone(),
    };
    let same = eval::corrected_t_test(&cv(Method::Riemann), &cv(Method::Benchmark)).unwrap();
    let same_ok = same.t == 0.0 && same.p == 1.0 && same.df == 99;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let diffs: Vec<f64> = (0..100).map(|_| 0.01 + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
    let n = diffs.len() as f64;
    let m = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1.0);
    let t_plain = m / (var / n).sqrt();
    let ratio = 1.0 / 9.0;
    let corrected = eval::corrected_t_from_diffs(&diffs, ratio).unwrap();
    let expect = t_plain * ((1.0 / n) / (1.0 / n + ratio)).sqrt();
    let scale_err = (corrected.t - expect).abs();
    outcome(
        p_ok && same_ok && scale_err < 1e-10,
        format!("p(4.028) {p:.4e}; identical inputs t={} p={} df={}; scaling error {scale_err:.1e}", same.t, same.p, same.df),
    )
}

fn base_config(overrides: &[&str]) -> Config {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Config::load(None, &owned).unwrap()
}

const SMALL: [&str; 4] = ["n_trials=60", "n_channels=8", "fs_hz=128", "confound_enabled=false"];

fn c5_null_calibration() -> Outcome {
    let seeds = 50;
    let (k, r) = (5, 2);
    let mut below = [0usize; 2];
    let mut rejects = 0;
    for seed in 0..seeds {
        let mut o = SMALL.to_vec();
        let s = format!("seed={seed}");
        o.extend(["frn_amp_uv=0", "p3a_amp_success_uv=0", "p3a_amp_failure_uv=0", s.as_str()]);
        let cfg = base_config(&o);
        let hp = cfg.hyperparams();
        let set = commands::synth_epochs(&cfg).unwrap();
        let plan = eval::make_fold_plan(&set.labels(), k, r, seed).unwrap();
        let rie = eval::run_cv(&set, Method::Riemann, &plan, &hp).unwrap();
        let ben = eval::run_cv(&set, Method::Benchmark, &plan, &hp).unwrap();
        let chance = eval::chance_level(&set, k, r, seed.wrapping_add(1000), 100, &hp).unwrap();
        for (i, cv) in [&rie, &ben].iter().enumerate() {
            if cv.mean() < chance.threshold_97_5 {
                below[i] += 1;
            }
        }
        if eval::corrected_t_test(&rie, &ben).unwrap().p < 0.05 {
            rejects += 1;
        }
    }
    let frac = |c: usize| c as f64 / seeds as f64;
    outcome(
        frac(below[0]) >= 0.9 && frac(below[1]) >= 0.9 && frac(rejects) <= 0.1,
        format!(
            "{seeds} seeds; below threshold riemann {}/{seeds}, benchmark {}/{seeds}; t-test rejections {rejects}/{seeds}",
            below[0], below[1]
        ),
    )
}

fn c6_signal_detection() -> Outcome {
    let (k, r) = (5, 2);
    let mut lines = Vec::new();
    let mut pass = true;
    for (noise, bar) in [("noise_rms_uv=2", 0.95), ("noise_rms_uv=0", 0.999)] {
        let mut o = SMALL.to_vec();
        o.extend(["frn_amp_uv=-12", noise, "seed=6"]);
        let cfg = base_config(&o);
        let hp = cfg.hyperparams();
        let set = commands::synth_epochs(&cfg).unwrap();
        let plan = eval::make_fold_plan(&set.labels(), k, r, 6).unwrap();
        for m in [Method::Riemann, Method::Benchmark] {
            let acc = eval::run_cv(&set, m, &plan, &hp).unwrap().mean();
            pass &= acc >= bar;
            lines.push(format!("{} {}={acc:.3}", noise, m.name()));
        }
    }
    outcome(pass, lines.join(", "))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn c7_desk_analogue() -> Outcome {
    let path = workspace_root().join("configs/desk_benchmark.json");
    let seeds = 10u64;
    let mut wins = 0;
    let mut losses = 0;
    let mut medians = Vec::new();
    for seed in 0..seeds {
        let cfg = Config::load(Some(&path), &[format!("seed={seed}")]).unwrap();
        let hp = cfg.hyperparams();
        let set = commands::synth_epochs(&cfg).unwrap();
        let plan = eval::make_fold_plan(&set.labels(), cfg.folds, cfg.repeats, seed).unwrap();
        let rie = eval::run_cv(&set, Method::Riemann, &plan, &hp).unwrap().median();
        let ben = eval::run_cv(&set, Method::Benchmark, &plan, &hp).unwrap().median();
        if rie > ben {
            wins += 1;
        } else if rie < ben {
            losses += 1;
        }
        medians.push(format!("{rie:.3}/{ben:.3}"));
    }
    let n = wins + losses;
    let p = sign_test_p(wins, n);
    outcome(
        wins > losses && p < 0.05,
        format!("riemann/benchmark medians [{}]; {wins} wins, {losses} losses, sign test p={p:.4}", medians.join(" ")),
    )
}

/// One-sided binomial tail P(X ≥ wins) for X ~ Bin(n, 1/2).
fn sign_test_p(wins: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for i in 0..=n {
        if i > 0 {
            c = c * (n - i + 1) as f64 / i as f64;
        }
        if i >= wins {
            tail += c;
        }
    }
    tail / 2f64.powi(n as i32)
}

fn c8_staircase() -> Outcome {
    let step = PsychometricModel::step(0.005);
    let hist = synth::staircase_run(&step, 10_000, 0.01, 1.05, 8);
    let pc_step = 100.0 * hist.iter().filter(|h| h.1).count() as f64 / hist.len() as f64;
    let per_seed: Vec<f64> = (0..100).map(|s| synth::percent_correct(&synth::run_blocks(&StaircaseConfig::default(), s))).collect();
    let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    let inside = per_seed.iter().filter(|p| (55.0..=60.0).contains(*p)).count();
    outcome(
        (pc_step - 50.0).abs() <= 3.0 && (55.0..=60.0).contains(&mean),
        format!("step observer {pc_step:.2}% over 10000 trials; default observer mean {mean:.2}% over 100 seeds ({inside} seeds inside [55, 60])"),
    )
}

fn sinusoid(freq: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin()).collect()
}

fn filtered(x: &[f64], fs: f64, f: impl Fn(&ContinuousRecording) -> ContinuousRecording) -> Vec<f64> {
    let rec = ContinuousRecording::new(fs, vec!["x".into()], Matrix::from_vec(1, x.len(), x.to_vec()).unwrap(), Vec::new()).unwrap();
    f(&rec).data().row(0).to_vec()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn c9_filters() -> Outcome {
    let fs = 2048.0;
    let n = 20 * 2048;
    let mid = n / 4..3 * n / 4;
    let db = |g: f64| 20.0 * g.log10();

    let notch_sos = filter::iir_notch(50.0, 35.0, fs).unwrap();
    let notch_design = -db(notch_sos.gain(50.0, fs).powi(2));
    let line = sinusoid(50.0, fs, n);
    let y = filtered(&line, fs, |r| signal::notch(r, 50.0).unwrap());
    let notch_meas = -db(rms(&y[mid.clone()]) / rms(&line[mid.clone()]));

    let dc = vec![1.0; n];
    let y = filtered(&dc, fs, |r| signal::bandpass(r, 1.0, 100.0).unwrap());
    let dc_meas = -db(rms(&y[mid.clone()]).max(1e-15));

    let tone = sinusoid(10.0, fs, n);
    let y = filtered(&tone, fs, |r| signal::bandpass(r, 1.0, 100.0).unwrap());
    let mid_gain = db(rms(&y[mid.clone()]) / rms(&tone[mid.clone()]));
    let lag = best_lag(&tone[mid.clone()], &y[mid.clone()], 20);

    outcome(
        notch_design >= 40.0 && notch_meas >= 40.0 && dc_meas >= 40.0 && mid_gain.abs() <= 1.0 && lag == 0,
        format!(
            "notch 50 Hz {notch_meas:.1} dB (design {notch_design:.1}); bandpass DC {dc_meas:.1} dB; 10 Hz gain {mid_gain:+.3} dB; lag {lag} samples"
        ),
    )
}

fn best_lag(x: &[f64], y: &[f64], max_lag: i64) -> i64 {
    let n = x.len() as i64;
    let score = |l: i64| -> f64 { (max_lag..n - max_lag).map(|i| x[i as usize] * y[(i + l) as usize]).sum() };
    (-max_lag..=max_lag).max_by(|a, b| score(*a).total_cmp(&score(*b))).unwrap()
}

fn run_cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_errp")).args(args).output().expect("errp runs");
    assert!(out.status.success(), "errp {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn strip_timestamp(text: &str) -> &str {
    let at = text.find("\"timestamp\"").expect("report has a timestamp block");
    &text[..at]
}

fn c10_determinism(suite_start: Instant) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    for (name, seed) in [("a", "1"), ("b", "2")] {
        run_cli(&["synth", "--out", &p(name), "--seed", seed, "--set", "n_trials=60", "--set", "n_channels=8"]);
    }
    let compare = |threads: &str, out: &str| {
        run_cli(&[
            "compare",
            "--input",
            &p("a"),
            "--input",
            &p("b"),
            "--chance",
            "--folds",
            "5",
            "--repeats",
            "2",
            "--seed",
            "7",
            "--set",
            "n_shuffles=20",
            "--threads",
            threads,
            "--out",
            &p(out),
        ]);
        std::fs::read_to_string(p(out)).unwrap()
    };
    let r1 = compare("1", "r1.json");
    let r2 = compare("1", "r2.json");
    let r4 = compare("4", "r4.json");
    let same_runs = strip_timestamp(&r1) == strip_timestamp(&r2);
    let same_threads = strip_timestamp(&r1) == strip_timestamp(&r4);
    let parsed = errp::report::Report::from_json(&r1).is_ok();
    let has_z = r1.contains("\"z\"");
    let total = suite_start.elapsed().as_secs_f64();
    outcome(
        same_runs && same_threads && parsed && has_z && total < 600.0,
        format!("repeat identical {same_runs}, threads 1 vs 4 identical {same_threads}, report reads back {parsed}; acceptance runtime {total:.0}s"),
    )
}

type Criterion = Box<dyn Fn() -> Outcome>;

fn main() {
    let suite_start = Instant::now();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 manifold suite", Box::new(c1_manifold)),
        ("2 tangent isometry", Box::new(c2_tangent_isometry)),
        ("3 gradient check", Box::new(c3_gradient_check)),
        ("4 statistics", Box::new(c4_statistics)),
        ("5 null calibration", Box::new(c5_null_calibration)),
        ("6 signal detection", Box::new(c6_signal_detection)),
        ("7 desk-scale analogue", Box::new(c7_desk_analogue)),
        ("8 staircase behavior", Box::new(c8_staircase)),
        ("9 filters", Box::new(c9_filters)),
        ("10 determinism", Box::new(move || c10_determinism(suite_start))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let t = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {name}: {tag} ({:.1}s) {}", t.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
