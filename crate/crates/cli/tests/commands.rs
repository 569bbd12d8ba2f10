use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
[training]
total_samples = 3000
batch_size = 500

[evaluation]
n_trials = 10000
n_calibration = 10000
";

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_default_config_writes_checkpoint_and_full_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = isac(&["train", "--omega-r", "0.09", "--out", s(dir.path())]);
    ok(&out);
    assert!(dir.path().join("model_omega_0.09.ckpt").is_file());
    // 2e6 samples / 1e4 per batch, split over three stages of 67 batches
    assert_eq!(data_rows(&dir.path().join("train_log_omega_0.09.csv")).len(), 201);
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        ok(&isac(&[
            "train",
            "--config",
            s(&cfg),
            "--omega-r",
            "0.5",
            "--seed",
            "3",
            "--out",
            s(&out_dir),
        ]));
        bytes.push(fs::read(out_dir.join("model_omega_0.5.ckpt")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn out_of_range_omega_is_a_validation_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = isac(&["train", "--omega-r", "1.5", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}

#[test]
fn bad_config_and_usage_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[scenario]\nsnr_radr_db = 3.0\n").unwrap();
    assert_eq!(isac(&["train", "--config", s(&cfg)]).status.code(), Some(1));
    assert_eq!(isac(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(isac(&[]).status.code(), Some(1));
    assert_eq!(isac(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ckpt");
    let out = isac(&["eval", "--checkpoint", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("No such file"));
}

#[test]
fn baseline_eval_writes_one_row_and_beampattern() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let args = [
        "eval",
        "--config",
        s(&cfg),
        "--baseline",
        "--rho",
        "1.0",
        "--phi",
        "0.0",
        "--beampattern",
        "--out",
    ];
    let mut first = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let mut a = args.to_vec();
        a.push(s(&out_dir));
        ok(&isac(&a));
        let rows = data_rows(&out_dir.join("eval.csv"));
        assert_eq!(rows.len(), 1);
        let fields: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(&fields[..3], ["rho_phi", "1", "0"]);
        let pd: f64 = fields[4].parse().unwrap();
        assert!(pd > 0.5, "radar beam detects: {pd}");
        assert_eq!(data_rows(&out_dir.join("beampattern.csv")).len(), 181);
        first.push(fs::read(out_dir.join("eval.csv")).unwrap());
    }
    assert_eq!(first[0], first[1], "reruns produce identical CSVs");
}

#[test]
fn checkpoint_eval_calibrate_and_beampattern() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&isac(&[
        "train",
        "--config",
        s(&cfg),
        "--omega-r",
        "0.4",
        "--out",
        s(dir.path()),
    ]));
    let ckpt = dir.path().join("model_omega_0.4.ckpt");
    ok(&isac(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ckpt),
        "--omega-r",
        "0.4",
        "--out",
        s(dir.path()),
    ]));
    let rows = data_rows(&dir.path().join("eval.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("omega_r,0.4,,"));

    ok(&isac(&[
        "calibrate",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(dir.path()),
    ]));
    let text = fs::read_to_string(dir.path().join("calibration.csv")).unwrap();
    assert!(text.starts_with("threshold,target_pfa,achieved_pfa,n_calibration_trials\n"));
    assert!(data_rows(&dir.path().join("calibration.csv"))[0].ends_with(",10000"));

    ok(&isac(&[
        "beampattern",
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(dir.path()),
    ]));
    let rows = data_rows(&dir.path().join("beampattern.csv"));
    assert_eq!(rows.len(), 181);
    assert!(rows[0].starts_with("-90,"));
}

#[test]
fn calibrate_refuses_too_few_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = isac(&["calibrate", "--baseline", "--trials", "5000", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ae_sweep_writes_rows_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&isac(&[
        "sweep",
        "--config",
        s(&cfg),
        "--ae",
        "--omegas",
        "0,0.09,1",
        "--out",
        s(dir.path()),
    ]));
    let rows = data_rows(&dir.path().join("sweep_ae.csv"));
    assert_eq!(rows.len(), 3);
    for w in ["0", "0.09", "1"] {
        assert!(dir.path().join(format!("model_omega_{w}.ckpt")).is_file());
        assert!(dir.path().join(format!("train_log_omega_{w}.csv")).is_file());
    }
}

#[test]
fn baseline_sweep_covers_default_grid_and_impaired_run_is_paired() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let nominal = dir.path().join("nominal");
    ok(&isac(&[
        "sweep",
        "--config",
        s(&cfg),
        "--baseline",
        "--trials",
        "2000",
        "--out",
        s(&nominal),
    ]));
    assert_eq!(data_rows(&nominal.join("sweep_baseline.csv")).len(), 72);

    let impaired = dir.path().join("impaired");
    ok(&isac(&[
        "sweep",
        "--config",
        s(&cfg),
        "--sigma-lambda-frac",
        "0.0333",
        "--omegas",
        "0.5",
        "--trials",
        "2000",
        "--out",
        s(&impaired),
    ]));
    assert_eq!(data_rows(&impaired.join("impaired_sweep_baseline.csv")).len(), 72);
    assert_eq!(data_rows(&impaired.join("impaired_sweep_ae.csv")).len(), 1);
    assert_eq!(data_rows(&impaired.join("impaired_geometry.csv")).len(), 15);
    assert!(impaired.join("model_impaired_omega_0.5.ckpt").is_file());
}

#[test]
fn sweep_without_target_is_rejected() {
    assert_eq!(isac(&["sweep"]).status.code(), Some(1));
}
