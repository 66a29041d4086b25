//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release --test acceptance`; pass criterion numbers
//! after `--` to run a subset, e.g. `-- 1 2 3`.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use tempattn::data::synth::{gen_actions, gen_interpolation, gen_keyframe, ActionSpec, InterpolationSpec, KeyframeSpec};
use tempattn::data::SequenceDataset;
use tempattn::ffatt::{ffatt_forward, FfAttParams};
use tempattn::gradcheck::GRAD_TOL;
use tempattn::layers::Activation;
use tempattn::metrics::{attention_report, evaluate};
use tempattn::model::{AttentionKind, Model, ModelConfig};
use tempattn::rng::Rng;
use tempattn::suite::run_suite;
use tempattn::tcl::{tcl_forward, tcl_param_count, TclParams};
use tempattn::train::{early_stop_check, sparsity_penalty, train, EarlyStop, LossKind, TrainConfig};
use tempattn::Matrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    let mut cases = 0;
    for seed in 0..10 {
        let entries = match run_suite(seed) {
            Ok(e) => e,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        for e in entries {
            cases += 1;
            let err = e.report.max_rel_err;
            if err > worst.0 {
                worst = (err, format!("{} seed {seed}", e.name));
            }
            if err.is_nan() || err >= GRAD_TOL {
                failures.push(format!("{} seed {seed} ({err:.2e})", e.name));
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = failures.is_empty() && within(elapsed, 60);
    outcome(
        pass,
        format!(
            "{cases} checks over 10 seeds, worst {:.2e} ({}), {:.1}s{}",
            worst.0,
            worst.1,
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!(", failing: {}", failures.join(", ")) }
        ),
    )
}

fn random_tcl(rng: &mut Rng, m: usize, n: usize, g: usize, sigma: f64) -> TclParams {
    TclParams::new(
        random_matrix(rng, m, n, sigma),
        random_matrix(rng, m, g, sigma),
        random_matrix(rng, g, n, sigma),
        random_matrix(rng, m, n, sigma),
    )
    .unwrap()
}

fn attention_algebra() -> Outcome {
    let mut rng = Rng::new(2024);
    let (mut worst_sum, mut worst_hull) = (0.0f64, 0.0f64);
    let mut problems = Vec::new();
    for case in 0..100 {
        let (n, g, m) = (rng.int_in(1, 12), rng.int_in(1, 8), rng.int_in(1, 8));
        let h = random_matrix(&mut rng, n, g, 2.0);
        let params = random_tcl(&mut rng, m, n, g, 1.5);
        let mask: Option<Vec<bool>> = (case % 3 == 2).then(|| (0..n).map(|t| t == 0 || rng.uniform() < 0.7).collect());
        let valid: Vec<usize> = (0..n).filter(|&t| mask.as_ref().is_none_or(|mk| mk[t])).collect();
        let (c, a, _) = tcl_forward(&h, &params, mask.as_deref()).unwrap();
        for r in 0..m {
            worst_sum = worst_sum.max((a.row(r).iter().sum::<f64>() - 1.0).abs());
            for col in 0..g {
                let (lo, hi) = valid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                    (lo.min(h[(t, col)]), hi.max(h[(t, col)]))
                });
                let x = c[(r, col)];
                worst_hull = worst_hull.max((lo - x).max(x - hi).max(0.0));
            }
        }

        let zero = TclParams::zeros(m, n, g);
        let (_, a0, _) = tcl_forward(&h, &zero, mask.as_deref()).unwrap();
        let uniform = 1.0 / valid.len() as f64;
        for r in 0..m {
            for t in 0..n {
                let want = if valid.contains(&t) { uniform } else { 0.0 };
                if a0[(r, t)] != want {
                    problems.push(format!("case {case}: zero-parameter attention {} at ({r},{t})", a0[(r, t)]));
                }
            }
        }

        let formula = 2 * m * n + g * m + g * n;
        if tcl_param_count(m, n, g).unwrap() != formula || params.scalar_count() != formula {
            problems.push(format!("case {case}: parameter count for (m={m}, n={n}, g={g})"));
        }
    }
    let big = tcl_param_count(1, 227, 16).unwrap();
    if big != 4102 {
        problems.push(format!("(1, 227, 16) gave {big}"));
    }
    if worst_sum > 1e-9 {
        problems.push(format!("row sum off by {worst_sum:.2e}"));
    }
    if worst_hull > 1e-12 {
        problems.push(format!("context outside column range by {worst_hull:.2e}"));
    }
    let detail = format!(
        "100 instances, max |row sum - 1| {worst_sum:.2e}, max hull violation {worst_hull:.2e}, (1,227,16) -> {big}"
    );
    if problems.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{detail}; {}", problems.join("; ")))
    }
}

fn oracle_match() -> Outcome {
    let mut rng = Rng::new(3);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let (n, g, m) = (rng.int_in(1, 6), rng.int_in(1, 6), rng.int_in(1, 6));
        let h = random_matrix(&mut rng, n, g, 1.0);
        let mask: Option<Vec<bool>> = (case % 2 == 1).then(|| (0..n).map(|t| t == 0 || rng.uniform() < 0.6).collect());

        let p = random_tcl(&mut rng, m, n, g, 1.0);
        let (c, a, _) = tcl_forward(&h, &p, mask.as_deref()).unwrap();
        let (wc, wa) = tcl(&grid(&h), &grid(&p.u), &grid(&p.p), &grid(&p.v), &grid(&p.q), mask.as_deref());
        worst = worst.max(max_diff(&wc, &c)).max(max_diff(&wa, &a));

        let hidden = rng.int_in(1, 6);
        let fp = FfAttParams::new(
            random_matrix(&mut rng, g, hidden, 1.0),
            random_matrix(&mut rng, 1, hidden, 1.0),
            random_matrix(&mut rng, hidden, 1, 1.0),
        )
        .unwrap();
        let (fc, fa, _) = ffatt_forward(&h, &fp, mask.as_deref()).unwrap();
        let (oc, oa) = ffatt(&grid(&h), &grid(&fp.w), fp.b.row(0), fp.score.as_slice(), mask.as_deref());
        worst = worst.max(max_diff(&vec![oc], &fc)).max(max_diff(&vec![oa], &fa));
    }
    outcome(worst <= 1e-12, format!("20 TCL + 20 feed-forward instances, max deviation {worst:.2e}"))
}

fn keyframe_data() -> (SequenceDataset, SequenceDataset) {
    gen_keyframe(0, 800, &KeyframeSpec::default()).unwrap().split_tail(200)
}

/// The key-frame protocol: m = 1, 10 frames, f = 32, lambda = 0.01.
fn keyframe_run(train_ds: &SequenceDataset, attention: AttentionKind, seed: u64) -> Model {
    let mut cfg = ModelConfig::autoencoder(10, 1, 32, 32);
    cfg.encoder_activation = Activation::Relu;
    cfg.attention = attention;
    let model = Model::init(cfg, &mut Rng::new(seed)).unwrap();
    let tc = TrainConfig {
        batch_size: 8,
        max_epochs: 600,
        learning_rate: 1e-3,
        sparsity_lambda: 0.01,
        seed,
        ..Default::default()
    };
    train(model, train_ds, &tc).unwrap().0
}

fn keyframe_task() -> Outcome {
    let started = Instant::now();
    let (train_ds, test_ds) = keyframe_data();
    let model = keyframe_run(&train_ds, AttentionKind::Temporal, 0);
    let report = evaluate(&model, &test_ds, &[]).unwrap();
    let det = report.detection_accuracy.unwrap();
    let elapsed = started.elapsed();
    outcome(
        det >= 0.90 && within(elapsed, 300),
        format!(
            "test detection {det:.3} (need >= 0.90), median entropy {:.3}, {:.0}s",
            report.median_entropy,
            elapsed.as_secs_f64()
        ),
    )
}

fn interpolation_task() -> Outcome {
    let started = Instant::now();
    let (train_ds, test_ds) = gen_interpolation(0, 500, &InterpolationSpec::default()).unwrap().split_tail(100);
    let cfg = ModelConfig::autoencoder(train_ds.n, train_ds.n, train_ds.f, 16);
    let untrained = Model::init(cfg, &mut Rng::new(0)).unwrap();
    let tc = TrainConfig { batch_size: 8, max_epochs: 350, learning_rate: 3e-3, ..Default::default() };
    let (model, _) = train(untrained.clone(), &train_ds, &tc).unwrap();

    let offsets = [10, 30, 59];
    let report = evaluate(&model, &test_ds, &offsets).unwrap();
    let trained = report.horizon_mse.unwrap();
    let baseline = report.baseline_horizon_mse.unwrap();
    let whole: Vec<usize> = (0..InterpolationSpec::default().hole_len).collect();
    let hole_mse = |m: &Model| {
        let v = evaluate(m, &test_ds, &whole).unwrap().horizon_mse.unwrap();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (before, after) = (hole_mse(&untrained), hole_mse(&model));
    let ratio = before / after;
    let beats_baseline = trained.iter().zip(&baseline).all(|(t, b)| t < b);
    let elapsed = started.elapsed();
    let per_offset: Vec<String> = offsets
        .iter()
        .zip(trained.iter().zip(&baseline))
        .map(|(o, (t, b))| format!("@{o} {t:.4} vs hold-last {b:.4}"))
        .collect();
    outcome(
        beats_baseline && ratio >= 5.0 && within(elapsed, 600),
        format!(
            "{}; in-hole MSE {after:.4} vs untrained {before:.4} ({ratio:.2}x, need >= 5x); {:.0}s",
            per_offset.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn classification_task() -> Outcome {
    let started = Instant::now();
    let (train_ds, test_ds) = gen_actions(0, 1980, &ActionSpec::default()).unwrap().split_tail(180);
    let mut cfg = ModelConfig::classifier(train_ds.n, train_ds.f, 16, train_ds.num_classes);
    cfg.encoder_activation = Activation::Relu;
    let model = Model::init(cfg, &mut Rng::new(0)).unwrap();
    let tc = TrainConfig {
        batch_size: 17,
        max_epochs: 200,
        learning_rate: 3e-3,
        loss: LossKind::CrossEntropy,
        sparsity_lambda: 0.1,
        early_stop: Some(EarlyStop { min_delta: 0.01, patience: 10 }),
        ..Default::default()
    };
    let (model, hist) = train(model, &train_ds, &tc).unwrap();
    let att = attention_report(&model, &test_ds).unwrap();
    let hits = att.detection_hits.clone().unwrap();
    let (mut correct, mut inside) = (0usize, 0usize);
    for (s, hit) in test_ds.samples.iter().zip(hits) {
        let out = model.forward(&s.input, Some(&s.mask)).unwrap().output;
        if out.row_argmax(0) == s.label().unwrap() {
            correct += 1;
            inside += hit as usize;
        }
    }
    let acc = correct as f64 / test_ds.len() as f64;
    let focus = inside as f64 / correct.max(1) as f64;
    let elapsed = started.elapsed();
    outcome(
        acc >= 0.95 && focus >= 0.80 && within(elapsed, 600),
        format!(
            "accuracy {acc:.3} (need >= 0.95), argmax in motif window {focus:.3} of correct (need >= 0.80), \
             stopped after {} epochs, {:.0}s",
            hist.epochs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn focus_claim() -> Outcome {
    let (train_ds, test_ds) = keyframe_data();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let entropy = |kind| {
            let model = keyframe_run(&train_ds, kind, seed);
            attention_report(&model, &test_ds).unwrap().median_entropy()
        };
        let (tcl_h, ff_h) = (entropy(AttentionKind::Temporal), entropy(AttentionKind::FeedForward));
        wins += (tcl_h < ff_h) as usize;
        rows.push(format!("seed {seed}: {tcl_h:.3} vs {ff_h:.3}"));
    }
    outcome(wins >= 4, format!("temporal more focused in {wins}/5 seeds (need 4); {}", rows.join(", ")))
}

fn sparsity_range() -> Outcome {
    let mut rng = Rng::new(8);
    let mut problems = Vec::new();
    let lambda = 0.37;
    for case in 0..200 {
        let n = rng.int_in(1, 20);
        let sharp = rng.uniform_in(0.0, 10.0);
        let logits: Vec<f64> = (0..n).map(|_| rng.normal(0.0, sharp)).collect();
        let row = Matrix::row_vector(&softmax_row(&logits)).unwrap();
        let ratio = sparsity_penalty(&row, lambda).0 / lambda;
        if !(-1.0 - 1e-12..=-1.0 / n as f64 + 1e-12).contains(&ratio) {
            problems.push(format!("case {case}: {ratio} outside [-1, -1/{n}]"));
        }
    }
    let mut worst = 0.0f64;
    for n in 1..=64 {
        let mut onehot = Matrix::zeros(1, n);
        onehot[(0, n / 2)] = 1.0;
        worst = worst.max((sparsity_penalty(&onehot, 1.0).0 + 1.0).abs());
        let uniform = Matrix::filled(1, n, 1.0 / n as f64);
        worst = worst.max((sparsity_penalty(&uniform, 1.0).0 + 1.0 / n as f64).abs());
    }
    if worst > 1e-12 {
        problems.push(format!("extremes off by {worst:.2e}"));
    }
    let detail = format!("200 random rows in range, extremes exact to {worst:.1e}");
    if problems.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, problems.join("; "))
    }
}

fn run_binary(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tempattn")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |p: &Path| p.to_str().unwrap().to_string();
    let data = path(&dir.path().join("keyframe"));
    if let Err(e) = run_binary(&["gen", "--task", "keyframe", "--seed", "0", "--count", "200", "--out", &data]) {
        return outcome(false, format!("gen failed: {e}"));
    }
    let mut files = Vec::new();
    for run in ["first", "second"] {
        let out = path(&dir.path().join(run));
        let args = [
            "train", "--data", &data, "--out", &out, "--m", "1", "--g", "16", "--encoder_activation", "relu",
            "--max_epochs", "15", "--sparsity_lambda", "0.01", "--seed", "3",
        ];
        if let Err(e) = run_binary(&args) {
            return outcome(false, format!("train failed: {e}"));
        }
        let read = |name: &str| fs::read(dir.path().join(run).join(name)).unwrap_or_default();
        files.push((read("checkpoint.json"), read("history.csv")));
    }
    let same_ckpt = !files[0].0.is_empty() && files[0].0 == files[1].0;
    let same_hist = !files[0].1.is_empty() && files[0].1 == files[1].1;
    outcome(
        same_ckpt && same_hist,
        format!(
            "checkpoint {} ({} bytes), history {} ({} bytes)",
            if same_ckpt { "identical" } else { "differs" },
            files[0].0.len(),
            if same_hist { "identical" } else { "differs" },
            files[0].1.len()
        ),
    )
}

fn early_stopping() -> Outcome {
    let steps = |start: f64, step: f64, count: usize| -> Vec<f64> { (0..count).map(|i| start - step * i as f64).collect() };
    let mut window = vec![1.0; 5];
    window.push(0.8);
    window.extend([0.8; 9]);
    let cases: Vec<(&str, Vec<f64>, bool)> = vec![
        ("flat for 10 epochs", vec![0.5; 11], true),
        ("flat for 9 epochs", vec![0.5; 10], false),
        ("improves by exactly 0.01", steps(1.0, 0.01, 11), false),
        ("improves by 0.009", steps(1.0, 0.009, 11), true),
        ("improves by 0.011", steps(1.0, 0.011, 11), false),
        ("large drop inside the window", window, false),
        ("rebounds to the old minimum", [1.0, 2.0].repeat(5).into_iter().chain([1.0]).collect(), true),
    ];
    let wrong: Vec<&str> = cases
        .iter()
        .filter(|(_, h, want)| early_stop_check(h, 0.01, 10) != *want)
        .map(|(name, _, _)| *name)
        .collect();
    if wrong.is_empty() {
        outcome(true, format!("{} hand-built histories decided correctly", cases.len()))
    } else {
        outcome(false, format!("wrong decision for: {}", wrong.join(", ")))
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient suite", gradient_suite),
        ("attention algebra", attention_algebra),
        ("oracle match", oracle_match),
        ("key-frame task", keyframe_task),
        ("interpolation task", interpolation_task),
        ("classification task", classification_task),
        ("focus claim", focus_claim),
        ("sparsity penalty range", sparsity_range),
        ("reproducibility", reproducibility),
        ("early stopping", early_stopping),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !wanted.is_empty() && !wanted.contains(&number) {
            continue;
        }
        let result = check();
        failed += !result.pass as usize;
        println!(
            "criterion {number:>2} {:<24} {}  {}",
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("criteria failed: {failed}");
        ExitCode::FAILURE
    }
}
