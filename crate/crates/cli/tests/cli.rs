//! End-to-end tests of the `pprs` binary: exit codes, output files,
//! determinism, and cleanup of partial outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pprs_core::pnm::{load_pnm, save_pnm};
use pprs_core::Image64;

const BLOBS3: &str = "blobs:count=6,height=8,width=8,regions=3,classes=3,seed=11";
const BLOBS2: &str = "blobs:count=4,height=6,width=6,regions=3,classes=2,seed=3";

fn pprs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pprs"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_gradient_pgm(path: &Path, height: usize, width: usize) {
    let data: Vec<f64> = (0..height * width)
        .map(|i| i as f64 / (height * width) as f64)
        .collect();
    let img = Image64::new(height, width, 1, data).unwrap();
    save_pnm(path, &img).unwrap();
}

#[test]
fn help_and_version_succeed() {
    assert_success(&pprs(&["--help"]));
    assert_success(&pprs(&["--version"]));
    assert_success(&pprs(&["certify", "--help"]));
}

#[test]
fn missing_required_flags_exit_2_with_usage() {
    let out = pprs(&["certify"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "stderr was: {err}");

    // Everything present except the mandatory seed.
    let out = pprs(&[
        "certify",
        "--dataset", BLOBS3,
        "--classifier", &format!("centroid:{BLOBS3}"),
        "--mode", "rs",
        "--sigma", "0.5",
        "--out", "/tmp/unused.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let out = pprs(&["segment", "--bogus", "value"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn pprs_modes_require_a_scheme() {
    let out = pprs(&[
        "certify",
        "--dataset", BLOBS3,
        "--classifier", &format!("centroid:{BLOBS3}"),
        "--mode", "pprs-dynamic",
        "--sigma", "0.5",
        "--seed", "1",
        "--out", "/tmp/unused.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scheme"));
}

#[test]
fn segment_writes_label_map_average_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.pgm");
    write_gradient_pgm(&input, 12, 12);
    let labels = dir.path().join("labels.txt");
    let averaged = dir.path().join("averaged.pgm");

    let out = pprs(&[
        "segment",
        "--in", input.to_str().unwrap(),
        "--scheme", "slic",
        "--components", "4",
        "--out", labels.to_str().unwrap(),
        "--averaged-out", averaged.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(stdout(&out).contains("partitions"));

    let map = fs::read_to_string(&labels).unwrap();
    assert!(!map.trim().is_empty());
    let avg = load_pnm::<f64>(&averaged).unwrap();
    assert_eq!((avg.height(), avg.width()), (12, 12));

    let manifest_file = dir.path().join("labels.txt.manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(manifest_file).unwrap()).unwrap();
    assert!(manifest["transform"].as_str().unwrap().starts_with("slic("));
}

#[test]
fn certify_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let classifier = format!("centroid:{BLOBS3}");
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = pprs(&[
            "certify",
            "--dataset", BLOBS3,
            "--classifier", &classifier,
            "--mode", "rs",
            "--sigma", "0.5",
            "--n0", "20",
            "--n", "200",
            "--alpha", "0.01",
            "--seed", seed,
            "--out", path.to_str().unwrap(),
        ]);
        assert_success(&out);
        fs::read(&path).unwrap()
    };

    let first = run("a.jsonl", "42");
    let second = run("b.jsonl", "42");
    let other_seed = run("c.jsonl", "43");
    assert_eq!(first, second);
    assert_ne!(first, other_seed);

    let lines: Vec<&str> = std::str::from_utf8(&first)
        .unwrap()
        .lines()
        .collect();
    assert_eq!(lines.len(), 6);
    for line in lines {
        let cert: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(cert["radius"].as_f64().unwrap() >= 0.0);
    }

    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("a.jsonl.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"].as_u64(), Some(42));
    assert_eq!(manifest["smoothing"]["n"].as_u64(), Some(200));
}

#[test]
fn worker_count_does_not_change_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let classifier = format!("centroid:{BLOBS3}");
    let run = |name: &str, workers: &str| {
        let path = dir.path().join(name);
        let out = pprs(&[
            "certify",
            "--dataset", BLOBS3,
            "--classifier", &classifier,
            "--mode", "pprs-dynamic",
            "--scheme", "grid",
            "--cell-height", "4",
            "--cell-width", "4",
            "--sigma", "0.5",
            "--n0", "20",
            "--n", "200",
            "--alpha", "0.01",
            "--seed", "7",
            "--workers", workers,
            "--out", path.to_str().unwrap(),
        ]);
        assert_success(&out);
        fs::read(&path).unwrap()
    };
    assert_eq!(run("w1.jsonl", "1"), run("w4.jsonl", "4"));
}

#[test]
fn certify_then_evaluate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let certs = dir.path().join("certs.jsonl");
    let classifier = format!("centroid:{BLOBS3}");
    assert_success(&pprs(&[
        "certify",
        "--dataset", BLOBS3,
        "--classifier", &classifier,
        "--mode", "pprs-dynamic",
        "--scheme", "grid",
        "--cell-height", "2",
        "--cell-width", "2",
        "--sigma", "0.5",
        "--n0", "20",
        "--n", "200",
        "--alpha", "0.01",
        "--seed", "5",
        "--out", certs.to_str().unwrap(),
    ]));

    let evaluate = |name: &str| {
        let path = dir.path().join(name);
        let out = pprs(&[
            "evaluate",
            "--certs", certs.to_str().unwrap(),
            "--labels", BLOBS3,
            "--grid", "0:1:0.5",
            "--out", path.to_str().unwrap(),
        ]);
        assert_success(&out);
        fs::read(&path).unwrap()
    };

    let curve = evaluate("curve.csv");
    let again = evaluate("curve2.csv");
    assert_eq!(curve, again);

    let text = String::from_utf8(curve).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# manifest_hash="));
    assert_eq!(lines[0].len(), "# manifest_hash=".len() + 64);
    assert_eq!(lines[1], "radius,certified_accuracy");
    assert_eq!(lines.len(), 2 + 3);
    assert!(lines[2].starts_with("0.000000,"));

    // Accuracy never rises with the radius.
    let accs: Vec<f64> = lines[2..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(accs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn evaluate_rejects_mismatched_labels() {
    let dir = tempfile::tempdir().unwrap();
    let certs = dir.path().join("certs.jsonl");
    let classifier = format!("centroid:{BLOBS2}");
    assert_success(&pprs(&[
        "certify",
        "--dataset", BLOBS2,
        "--classifier", &classifier,
        "--mode", "rs",
        "--sigma", "0.5",
        "--n0", "10",
        "--n", "100",
        "--alpha", "0.01",
        "--seed", "1",
        "--out", certs.to_str().unwrap(),
    ]));

    let labels = dir.path().join("labels.txt");
    fs::write(&labels, "0\n1\n").unwrap();
    let curve = dir.path().join("curve.csv");
    let out = pprs(&[
        "evaluate",
        "--certs", certs.to_str().unwrap(),
        "--labels", labels.to_str().unwrap(),
        "--out", curve.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!curve.exists());
    assert!(!dir.path().join("curve.csv.manifest.json").exists());
}

#[test]
fn sweep_writes_curves_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let classifier = format!("centroid:{BLOBS3}");
    let out = pprs(&[
        "sweep",
        "--dataset", BLOBS3,
        "--classifier", &classifier,
        "--mode", "rs",
        "--sigmas", "0.25,0.5",
        "--n0", "10",
        "--n", "100",
        "--alpha", "0.01",
        "--grid", "0:0.5:0.25",
        "--seed", "2",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);

    for name in [
        "curve_sigma_0.25.csv",
        "curve_sigma_0.5.csv",
        "sweep.csv",
        "manifest.json",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let summary = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("# manifest_hash="));
    assert_eq!(
        lines.next().unwrap(),
        "sigma,transform,certified_accuracy,certified_f_measure,avg_superpixel_size"
    );
    assert_eq!(lines.count(), 2);
    assert!(summary.contains("0.25,rs,"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sigmas"].as_array().unwrap().len(), 2);
}

#[test]
fn failed_sweep_removes_its_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    // A directory squatting on the summary path makes the last write fail
    // after the per-sigma curves already landed.
    fs::create_dir_all(out_dir.join("sweep.csv")).unwrap();

    let classifier = format!("centroid:{BLOBS3}");
    let out = pprs(&[
        "sweep",
        "--dataset", BLOBS3,
        "--classifier", &classifier,
        "--mode", "rs",
        "--sigmas", "0.25,0.5",
        "--n0", "10",
        "--n", "100",
        "--alpha", "0.01",
        "--grid", "0:0.5:0.25",
        "--seed", "2",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.join("curve_sigma_0.25.csv").exists());
    assert!(!out_dir.join("curve_sigma_0.5.csv").exists());
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn attack_confirms_halfspace_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let certs = dir.path().join("certs.jsonl");
    let common = [
        "--dataset", BLOBS2,
        "--classifier", "halfspace:seed=7",
        "--mode", "rs",
        "--sigma", "0.5",
        "--n0", "20",
        "--n", "300",
        "--alpha", "0.01",
    ];

    let mut certify_args = vec!["certify"];
    certify_args.extend_from_slice(&common);
    certify_args.extend_from_slice(&["--seed", "5", "--out", certs.to_str().unwrap()]);
    assert_success(&pprs(&certify_args));

    let report = dir.path().join("attack.json");
    let mut attack_args = vec!["attack", "--certs", certs.to_str().unwrap()];
    attack_args.extend_from_slice(&common);
    attack_args.extend_from_slice(&[
        "--trials", "2",
        "--seed", "9",
        "--out", report.to_str().unwrap(),
    ]);
    let out = pprs(&attack_args);
    assert_success(&out);
    assert!(stdout(&out).contains(" 0 violations"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["violations"].as_u64(), Some(0));
    assert_eq!(report["certificates"].as_u64(), Some(4));
}

#[test]
fn rho_is_zero_for_input_independent_grids() {
    let out = pprs(&[
        "rho",
        "--scheme", "grid",
        "--cell-height", "2",
        "--cell-width", "2",
        "--dataset", BLOBS2,
        "--pairs", "4",
        "--scale", "0.5",
        "--seed", "3",
    ]);
    assert_success(&out);
    assert!(stdout(&out).contains("rho = 0.000000"));
}

#[test]
fn noisy_demo_writes_both_images() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.pgm");
    write_gradient_pgm(&input, 10, 10);
    let noisy = dir.path().join("noisy.pgm");
    let averaged = dir.path().join("pprs.pgm");

    let out = pprs(&[
        "noisy-demo",
        "--in", input.to_str().unwrap(),
        "--sigma", "0.3",
        "--scheme", "grid",
        "--cell-height", "5",
        "--cell-width", "5",
        "--seed", "1",
        "--out-noisy", noisy.to_str().unwrap(),
        "--out-pprs", averaged.to_str().unwrap(),
    ]);
    assert_success(&out);

    let noisy_img = load_pnm::<f64>(&noisy).unwrap();
    let avg_img = load_pnm::<f64>(&averaged).unwrap();
    assert_eq!((noisy_img.height(), noisy_img.width()), (10, 10));
    assert_eq!((avg_img.height(), avg_img.width()), (10, 10));
    // Averaging a 5x5 cell leaves at most 4 distinct stored values.
    let mut values: Vec<u64> = avg_img.data().iter().map(|v| v.to_bits()).collect();
    values.sort_unstable();
    values.dedup();
    assert!(values.len() <= 4, "got {} distinct values", values.len());
    assert!(dir.path().join("pprs.pgm.manifest.json").exists());
}

#[test]
fn mlp_classifier_certifies_from_a_saved_network() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("readout.mlp");
    let data = pprs_core::blobs::generate_blobs_dataset::<f64>(8, 8, 3, 3, 6, 11).unwrap();
    let mlp = pprs_core::classifier::fit_linear_readout(&data, 0.1).unwrap();
    mlp.save(&model).unwrap();

    let certs = dir.path().join("certs.jsonl");
    let out = pprs(&[
        "certify",
        "--dataset", BLOBS3,
        "--classifier", &format!("mlp:{}", model.display()),
        "--mode", "rs",
        "--sigma", "0.5",
        "--n0", "20",
        "--n", "100",
        "--seed", "5",
        "--out", certs.to_str().unwrap(),
    ]);
    assert_success(&out);

    let lines: Vec<String> = fs::read_to_string(&certs)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 6);
    for line in &lines {
        let cert: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(cert.get("radius").is_some(), "certificate missing radius: {line}");
    }
}
