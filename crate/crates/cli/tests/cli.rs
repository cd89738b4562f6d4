use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use abelnet_cli::pgm;
use tempfile::TempDir;

const TOY: &str = "dataset = bernoulli
bernoulli_probs = 0.8,0.2,0.5
bernoulli_samples = 500
dbn_layers = 4,3
disc_layers = 3,8,1
iterations = 60
checkpoint_every = 30
loglik_every = 20
loglik_samples = 50
loglik_points = 20
";

fn abelnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abelnet"))
        .args(args)
        .current_dir(dir)
        .env_remove("ABELNET_OUT")
        .output()
        .expect("spawn abelnet")
}

fn setup(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.cfg"), config).unwrap();
    dir
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}, stderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_line(out: &Output) -> String {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error kind="), "stderr: {err}");
    err
}

#[test]
fn train_is_reproducible_across_worker_counts() {
    let dir = setup(TOY);
    let p = dir.path();
    for (out, workers) in [("a", "1"), ("b", "3")] {
        assert_ok(&abelnet(
            p,
            &["train", "--config", "run.cfg", "--out", out, "--workers", workers],
        ));
    }
    for f in ["metrics.csv", "loglik.csv", "checkpoint.bin", "checkpoint_00000030.bin"] {
        assert_eq!(read(p, &format!("a/{f}")), read(p, &format!("b/{f}")), "{f}");
    }
    let metrics = String::from_utf8(read(p, "a/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 61);
    assert!(metrics.starts_with("iter,loss_total,score_real_mean,score_fake_mean,gtheta_norm,grho_norm\n"));
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = setup(TOY);
    let p = dir.path();
    assert_ok(&abelnet(
        p,
        &["train", "--config", "run.cfg", "--out", "a", "--seed", "1"],
    ));
    assert_ok(&abelnet(
        p,
        &["train", "--config", "run.cfg", "--out", "b", "--seed", "2"],
    ));
    assert_ne!(read(p, "a/metrics.csv"), read(p, "b/metrics.csv"));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = setup(TOY);
    let p = dir.path();
    assert_ok(&abelnet(p, &["train", "--config", "run.cfg", "--out", "full"]));
    assert_ok(&abelnet(
        p,
        &[
            "train",
            "--config",
            "run.cfg",
            "--out",
            "resumed",
            "--checkpoint",
            "full/checkpoint_00000030.bin",
        ],
    ));
    assert_eq!(read(p, "full/checkpoint.bin"), read(p, "resumed/checkpoint.bin"));
    let full = String::from_utf8(read(p, "full/metrics.csv")).unwrap();
    let resumed = String::from_utf8(read(p, "resumed/metrics.csv")).unwrap();
    let tail: Vec<&str> = full.lines().skip(31).collect();
    assert_eq!(resumed.lines().skip(1).collect::<Vec<_>>(), tail);
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = setup(TOY);
    let p = dir.path();
    assert_ok(&abelnet(
        p,
        &[
            "train", "--config", "run.cfg", "--out", "a", "--seed", "9", "--iters", "40",
        ],
    ));
    let manifest = String::from_utf8(read(p, "a/manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 9"));
    assert!(manifest.contains("# artifact metrics.csv sha256="));
    assert_ok(&abelnet(p, &["train", "--config", "a/manifest.txt", "--out", "b"]));
    assert_eq!(read(p, "a/metrics.csv"), read(p, "b/metrics.csv"));
}

#[test]
fn writes_stay_inside_the_output_directory() {
    let dir = setup(TOY);
    let p = dir.path();
    assert_ok(&abelnet(p, &["train", "--config", "run.cfg", "--out", "nested/out"]));
    let mut top: Vec<String> = fs::read_dir(p)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    top.sort();
    assert_eq!(top, ["nested", "run.cfg"]);
}

#[test]
fn out_defaults_to_environment_variable() {
    let dir = setup(TOY);
    let p = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_abelnet"))
        .args(["train", "--config", "run.cfg", "--iters", "5"])
        .current_dir(p)
        .env("ABELNET_OUT", "from_env")
        .output()
        .unwrap();
    assert_ok(&out);
    assert!(p.join("from_env/metrics.csv").exists());
}

#[test]
fn sample_writes_pgm_grids() {
    let dir = setup(TOY);
    let p = dir.path();
    assert_ok(&abelnet(p, &["train", "--config", "run.cfg", "--out", "t"]));
    assert_ok(&abelnet(
        p,
        &[
            "sample",
            "--config",
            "run.cfg",
            "--out",
            "s",
            "--checkpoint",
            "t/checkpoint.bin",
        ],
    ));
    // 100 tiles of 1x3 in 10 columns, with one-pixel separators.
    for name in ["s/samples.pgm", "s/probs.pgm"] {
        let (w, h, px) = pgm::decode(&read(p, name)).unwrap();
        assert_eq!((w, h), (10 * 3 + 9, 10 + 9));
        assert_eq!(px.len(), w * h);
    }
    let (_, _, px) = pgm::decode(&read(p, "s/samples.pgm")).unwrap();
    assert!(px.iter().all(|&v| v == 0 || v == 255 || v == pgm::SEPARATOR));
    let csv = String::from_utf8(read(p, "s/samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 100);
    assert!(csv.lines().all(|l| l.split(',').count() == 3));
}

#[test]
fn eval_reports_rates() {
    let dir = setup(TOY);
    let p = dir.path();
    assert_ok(&abelnet(p, &["train", "--config", "run.cfg", "--out", "t"]));
    assert_ok(&abelnet(
        p,
        &[
            "eval",
            "--config",
            "run.cfg",
            "--out",
            "e",
            "--checkpoint",
            "t/checkpoint.bin",
        ],
    ));
    let csv = String::from_utf8(read(p, "e/eval.csv")).unwrap();
    for key in ["loglik_mean,", "marginal_mad,", "rate_model_2,", "rate_data_0,"] {
        assert!(csv.lines().any(|l| l.starts_with(key)), "{key} missing");
    }
}

#[test]
fn gradcheck_passes_on_small_net() {
    let dir = setup("dbn_layers = 3,4,5\ndisc_layers = 5,4,1\n");
    let out = abelnet(dir.path(), &["gradcheck", "--config", "run.cfg", "--out", "g"]);
    assert_ok(&out);
    let table = String::from_utf8(read(dir.path(), "g/gradcheck.csv")).unwrap();
    assert_eq!(table.matches(",PASS").count(), 2, "{table}");
}

#[test]
fn bench_reports_bitwise_equality() {
    let dir = setup("bench_layers = 4\nbench_width = 32\nbench_batch = 8\nbench_workers = 1,2\nbench_repeats = 1\n");
    let out = abelnet(dir.path(), &["bench-parallel", "--config", "run.cfg", "--out", "b"]);
    assert_ok(&out);
    let csv = String::from_utf8(read(dir.path(), "b/bench.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("workers,seconds,speedup,bitwise_equal"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
}

#[test]
fn unknown_key_fails_with_single_line() {
    let dir = setup("dbn_layer = 4,3\n");
    let out = abelnet(dir.path(), &["train", "--config", "run.cfg", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out).contains("dbn_layer"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn bad_flag_is_usage_error() {
    let dir = setup(TOY);
    let out = abelnet(dir.path(), &["train", "--config", "run.cfg", "--iters", "many"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error kind=usage"));
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = setup(TOY);
    let out = abelnet(
        dir.path(),
        &[
            "sample",
            "--config",
            "run.cfg",
            "--checkpoint",
            "nope.bin",
            "--out",
            "s",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    error_line(&out);
}

#[test]
fn corrupt_checkpoint_is_a_format_error() {
    let dir = setup(TOY);
    fs::write(dir.path().join("bad.bin"), b"not a checkpoint").unwrap();
    let out = abelnet(
        dir.path(),
        &["eval", "--config", "run.cfg", "--checkpoint", "bad.bin", "--out", "e"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out).starts_with("error kind=format"));
}

#[test]
fn conditional_digits_run() {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/digits.csv");
    let dir = setup(&format!(
        "dataset = digits\ndata_path = {data}\ndbn_layers = 16,64\ndisc_layers = 64,8,1\n\
         conditional_classes = 10\niterations = 5\nsample_count = 20\n"
    ));
    let p = dir.path();
    assert_ok(&abelnet(p, &["train", "--config", "run.cfg", "--out", "t"]));
    assert_ok(&abelnet(
        p,
        &[
            "sample",
            "--config",
            "run.cfg",
            "--out",
            "s",
            "--checkpoint",
            "t/checkpoint.bin",
        ],
    ));
    let (w, h, _) = pgm::decode(&read(p, "s/samples.pgm")).unwrap();
    assert_eq!((w, h), (10 * 8 + 9, 2 * 8 + 1));
}
