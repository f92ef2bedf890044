//! End-to-end subcommand tests against the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use listenhead_core::eval::{save_png, GrayImage};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_listenhead")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("LISTENHEAD_SEED")
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_silence_wav(path: &Path, seconds: f64) {
    let samples = vec![0.0; (seconds * 16000.0) as usize];
    listenhead_core::audio::write_wav_16bit_mono(path, &samples, 16000).unwrap();
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    fs::write(
        &path,
        r#"{
  "model.residual_channels": 4,
  "model.skip_channels": 4,
  "model.kernel_size": 2,
  "model.dilation_schedule": [1, 2],
  "model.lstm_hidden": 5,
  "model.expression_dim": 4,
  "train.epochs": 3,
  "train.seed": 7
}"#,
    )
    .unwrap();
    path
}

#[test]
fn features_silence_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    write_silence_wav(&dir.path().join("s.wav"), 1.0);

    let out = run(&["features", "--audio", "s.wav", "--out", "a.csv"], dir.path());
    assert_exit(&out, 0);
    let csv = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 31); // header + 30 rows
    assert!(lines[0].starts_with("mfcc00,"));
    assert_eq!(lines[0].split(',').count(), 45);

    let out = run(&["features", "--audio", "s.wav", "--out", "b.csv"], dir.path());
    assert_exit(&out, 0);
    assert_eq!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn features_missing_file_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["features", "--audio", "absent.wav", "--out", "x.csv"],
        dir.path(),
    );
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("absent.wav"), "{stderr}");
    assert_eq!(stderr.lines().count(), 1, "diagnostic must be one line");
}

#[test]
fn synth_data_determinism_and_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "synth-data", "--out", "d1", "--seed", "7", "--clips", "4", "--duration", "0.6",
        "--set", "model.expression_dim=4",
    ];
    assert_exit(&run(&args, dir.path()), 0);
    let manifest = fs::read_to_string(dir.path().join("d1/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 5); // header + 4 rows

    let mut args2 = args;
    args2[2] = "d2";
    assert_exit(&run(&args2, dir.path()), 0);
    for entry in fs::read_dir(dir.path().join("d1")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(dir.path().join("d1").join(&name)).unwrap();
        let b = fs::read(dir.path().join("d2").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between identical invocations");
    }

    let out = run(
        &["synth-data", "--out", "d3", "--seed", "1", "--clips", "0"],
        dir.path(),
    );
    assert_exit(&out, 1);
}

#[test]
fn seed_env_var_is_last_resort() {
    let dir = tempfile::tempdir().unwrap();
    let explicit = Command::new(bin())
        .args(["synth-data", "--out", "by-flag", "--seed", "21", "--clips", "1",
               "--duration", "0.5", "--set", "model.expression_dim=2"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(explicit.status.code(), Some(0));
    let via_env = Command::new(bin())
        .args(["synth-data", "--out", "by-env", "--clips", "1",
               "--duration", "0.5", "--set", "model.expression_dim=2"])
        .current_dir(dir.path())
        .env("LISTENHEAD_SEED", "21")
        .output()
        .unwrap();
    assert_eq!(via_env.status.code(), Some(0));
    assert_eq!(
        fs::read(dir.path().join("by-flag/clip_000.wav")).unwrap(),
        fs::read(dir.path().join("by-env/clip_000.wav")).unwrap()
    );
}

fn make_dataset(dir: &Path) {
    let out = run(
        &["synth-data", "--out", "data", "--seed", "7", "--clips", "2", "--duration",
          "0.6", "--set", "model.expression_dim=4"],
        dir,
    );
    assert_exit(&out, 0);
}

#[test]
fn train_writes_checkpoint_and_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    make_dataset(dir.path());
    let cfg = tiny_config(dir.path());

    let out = run(
        &["train", "--data", "data/manifest.csv", "--out", "m.ckpt",
          "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_exit(&out, 0);
    assert!(dir.path().join("m.ckpt").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let epochs: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).expect("epoch line is JSON"))
        .collect();
    assert_eq!(epochs.len(), 3);
    assert!(epochs[0]["total"].as_f64().unwrap() > 0.0);

    // lr = 0 keeps losses constant.
    let out = run(
        &["train", "--data", "data/manifest.csv", "--out", "m0.ckpt",
          "--config", cfg.to_str().unwrap(), "--set", "train.lr=0.0"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let totals: Vec<f64> = stdout
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["total"].as_f64().unwrap())
        .collect();
    assert!(totals.windows(2).all(|w| w[0] == w[1]), "{totals:?}");
}

#[test]
fn train_rejects_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    make_dataset(dir.path());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"model.hidden_units": 4}"#).unwrap();
    let out = run(
        &["train", "--data", "data/manifest.csv", "--out", "m.ckpt",
          "--config", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_exit(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.hidden_units"));
}

#[test]
fn infer_shapes_determinism_and_dim_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    make_dataset(dir.path());
    let cfg = tiny_config(dir.path());
    assert_exit(
        &run(
            &["train", "--data", "data/manifest.csv", "--out", "m.ckpt",
              "--config", cfg.to_str().unwrap()],
            dir.path(),
        ),
        0,
    );

    let infer = ["infer", "--ckpt", "m.ckpt", "--audio", "data/clip_000.wav",
                 "--ref-coeffs", "data/clip_000.csv", "--out", "p1.csv"];
    assert_exit(&run(&infer, dir.path()), 0);
    let rows = fs::read_to_string(dir.path().join("p1.csv")).unwrap().lines().count();
    assert_eq!(rows, 18); // floor(0.6 s * 30 fps)

    let mut infer2 = infer;
    infer2[8] = "p2.csv";
    assert_exit(&run(&infer2, dir.path()), 0);
    assert_eq!(
        fs::read(dir.path().join("p1.csv")).unwrap(),
        fs::read(dir.path().join("p2.csv")).unwrap()
    );

    // Reference file with the wrong width.
    fs::write(dir.path().join("badref.csv"), "0,0,0,0,0,0,0\n").unwrap();
    let out = run(
        &["infer", "--ckpt", "m.ckpt", "--audio", "data/clip_000.wav",
          "--ref-coeffs", "badref.csv", "--out", "p3.csv"],
        dir.path(),
    );
    assert_exit(&out, 2);
}

#[test]
fn eval_reports_and_row_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    make_dataset(dir.path());

    // pred == gt: all coefficient distances zero.
    let out = run(
        &["eval", "--pred", "data/clip_000.csv", "--gt", "data/clip_000.csv"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("report is JSON");
    assert_eq!(report["angle"], 0.0);
    assert_eq!(report["exp"], 0.0);
    assert_eq!(report["trans"], 0.0);
    assert_eq!(report["fid"], "n/a");
    assert_eq!(report["csim"], "n/a");
    assert_eq!(report["ssim"], "n/a");

    // With frame directories the image metrics appear.
    for (sub, offset) in [("fp", 0.0), ("fg", 4.0)] {
        let d = dir.path().join(sub);
        fs::create_dir(&d).unwrap();
        for i in 0..2 {
            let img = GrayImage::from_fn(32, 32, |y, x| {
                ((x * 5 + y * 3 + i * 11) % 200) as f64 + offset
            });
            save_png(&img, &d.join(format!("frame_{:06}.png", i + 1))).unwrap();
        }
    }
    let out = run(
        &["eval", "--pred", "data/clip_000.csv", "--gt", "data/clip_000.csv",
          "--frames-pred", "fp", "--frames-gt", "fg"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["ssim"].as_f64().unwrap() > 0.0);
    assert!(report["psnr"].as_f64().unwrap() > 0.0);
    assert!(report["cpbd"].is_number());
    assert_eq!(report["fid"], "n/a");

    // Row-count mismatch.
    let short = dir.path().join("short.csv");
    let full = fs::read_to_string(dir.path().join("data/clip_000.csv")).unwrap();
    let first_line = full.lines().next().unwrap();
    fs::write(&short, format!("{first_line}\n")).unwrap();
    let out = run(
        &["eval", "--pred", "short.csv", "--gt", "data/clip_000.csv"],
        dir.path(),
    );
    assert_exit(&out, 2);
}

#[test]
fn grad_check_passes_fails_and_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());

    for seed in ["3", "4"] {
        let out = run(
            &["grad-check", "--config", cfg.to_str().unwrap(), "--seed", seed],
            dir.path(),
        );
        assert_exit(&out, 0);
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["pass"], true);
        assert!(report["max_relative_error"].as_f64().unwrap() < 1e-4);
    }

    // An unreachable tolerance forces a numerical failure: exit 3.
    let out = run(
        &["grad-check", "--config", cfg.to_str().unwrap(), "--seed", "3",
          "--tolerance", "1e-18"],
        dir.path(),
    );
    assert_exit(&out, 3);

    // Invalid config value: exit 1.
    let out = run(
        &["grad-check", "--config", cfg.to_str().unwrap(), "--set",
          "model.lstm_hidden=0"],
        dir.path(),
    );
    assert_exit(&out, 1);
}
