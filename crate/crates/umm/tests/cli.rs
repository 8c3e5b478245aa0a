use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;
use umm::cli::decode_lda;
use umm::log::read_log_file;
use umm::session_io::{read_manifest, MANIFEST_FILE};

fn umm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = umm(args);
    assert!(
        out.status.success(),
        "umm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, preset: &str, seed: u64, snr: f64, trials: usize) {
    ok(&[
        "synth", "--preset", preset, "--seed", &seed.to_string(), "--snr", &snr.to_string(),
        "--trials", &trials.to_string(), "--out", p(dir),
    ]);
}

#[test]
fn high_snr_replay_is_accurate() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("s");
    let log = tmp.path().join("r.csv");
    synth(&data, "visual-random", 21, 1.5, 60);
    let stdout = ok(&[
        "replay", "--data", p(&data), "--cov", "toeplitz", "--cov-scope", "all", "--mean", "confidence",
        "--out", p(&log),
    ]);
    assert!(stdout.contains("pooled accuracy"));
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("r.csv.metrics.json")).unwrap()).unwrap();
    let acc = metrics["pooled_accuracy"].as_f64().unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
    let logs = read_log_file(&log).unwrap();
    assert_eq!(logs.len(), 1);
    assert_eq!(logs[0].rows.len(), 60);
}

#[test]
fn deleting_labels_leaves_decisions_unchanged() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("s");
    synth(&data, "visual-random", 22, 0.6, 15);
    let labeled = tmp.path().join("a.csv");
    ok(&["replay", "--data", p(&data), "--out", p(&labeled)]);

    let mut manifest = read_manifest(&data).unwrap();
    for t in &mut manifest.trials {
        t.true_symbol = None;
    }
    fs::write(data.join(MANIFEST_FILE), serde_json::to_vec(&manifest).unwrap()).unwrap();
    let unlabeled = tmp.path().join("b.csv");
    let stdout = ok(&["replay", "--data", p(&data), "--out", p(&unlabeled)]);
    assert!(stdout.contains("metrics skipped"));
    assert!(!tmp.path().join("b.csv.metrics.json").exists());

    let a = read_log_file(&labeled).unwrap().remove(0).rows;
    let b = read_log_file(&unlabeled).unwrap().remove(0).rows;
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(y.true_symbol.is_none() && y.correct.is_none());
        let mut x = x.clone();
        x.true_symbol = None;
        x.correct = None;
        assert_eq!(&x, y);
    }
}

#[test]
fn instant_means_with_pooled_covariance_are_logged() {
    let tmp = tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    synth(&a, "row-column", 23, 0.8, 8);
    synth(&b, "row-column", 24, 0.8, 8);
    let log = tmp.path().join("r.csv");
    ok(&[
        "replay", "--data", p(&a), "--data", p(&b), "--mean", "instant", "--cov-scope", "all", "--out", p(&log),
    ]);
    let logs = read_log_file(&log).unwrap();
    assert_eq!(logs.iter().map(|l| l.session_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    for l in &logs {
        for (i, r) in l.rows.iter().enumerate() {
            assert_eq!(r.trial_index, i);
            assert_eq!(r.mean_strategy, "instant");
            assert_eq!(r.covariance_scope, "all");
            assert_eq!(r.covariance_kind, "toeplitz");
        }
        for w in l.rows.windows(2) {
            assert!(w[1].cumulative_confidence >= w[0].cumulative_confidence);
            assert!(w[1].cumulative_instant_confidence >= w[0].cumulative_instant_confidence);
        }
    }
    let header = fs::read_to_string(&log).unwrap();
    assert_eq!(header.lines().next().unwrap(), umm::log::LOG_HEADER.join(","));
}

#[test]
fn missing_data_directory_is_named() {
    let tmp = tempdir().unwrap();
    let missing = tmp.path().join("no-such-session");
    let out = umm(&["replay", "--data", p(&missing), "--out", p(&tmp.path().join("r.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(p(&missing)));
}

#[test]
fn flags_are_validated_before_reading_data() {
    let tmp = tempdir().unwrap();
    let missing = tmp.path().join("absent");
    let out = umm(&[
        "replay", "--data", p(&missing), "--cov", "shrinkage", "--taper-band", "3", "--out", "r.csv",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--taper-band"), "{err}");
    let out = umm(&["replay", "--data", p(&missing), "--degeneracy-ratio", "0.5", "--out", "r.csv"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degeneracy ratio"));
}

#[test]
fn failing_trial_flushes_a_partial_log() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("s");
    synth(&data, "sequential", 25, 0.5, 4);
    // trial 2 never highlights symbol 5, so its hypothesis has no targets
    let mut manifest = read_manifest(&data).unwrap();
    for ev in &mut manifest.trials[2].events {
        if ev == &[5] {
            *ev = vec![0];
        }
    }
    fs::write(data.join(MANIFEST_FILE), serde_json::to_vec(&manifest).unwrap()).unwrap();
    let log = tmp.path().join("r.csv");
    let out = umm(&["replay", "--data", p(&data), "--out", p(&log)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trial 2"));
    assert!(!log.exists());
    let partial = read_log_file(&tmp.path().join("r.csv.partial")).unwrap();
    assert_eq!(partial[0].rows.len(), 2);
}

#[test]
fn synth_is_deterministic_under_seed() {
    let tmp = tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    synth(&a, "sequential", 5, 0.7, 3);
    synth(&b, "sequential", 5, 0.7, 3);
    synth(&c, "sequential", 6, 0.7, 3);
    let payload = |d: &Path| fs::read(d.join("epochs.f32le")).unwrap();
    assert_eq!(payload(&a), payload(&b));
    assert_ne!(payload(&a), payload(&c));
    assert_eq!(
        fs::read(a.join(MANIFEST_FILE)).unwrap(),
        fs::read(b.join(MANIFEST_FILE)).unwrap()
    );
}

#[test]
fn toy_csv_has_an_input_panel_and_one_panel_per_hypothesis() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("toy.csv");
    ok(&["toy", "--seed", "3", "--draws", "10", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "panel,letter,x,y,kind");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let points = rows.iter().filter(|r| r[4] == "point").count();
    assert_eq!(points, 5 * 40);
    for letter in ["A", "B", "C", "D"] {
        let panel = format!("hypothesis_{letter}");
        let kinds: Vec<&str> = rows.iter().filter(|r| r[0] == panel && r[4] != "point").map(|r| r[4]).collect();
        assert_eq!(kinds, ["hyp_target_mean", "hyp_nontarget_mean"]);
    }
    let again = tmp.path().join("toy2.csv");
    ok(&["toy", "--seed", "3", "--draws", "10", "--out", p(&again)]);
    assert_eq!(text, fs::read_to_string(&again).unwrap());
}

#[test]
fn lda_export_writes_header_and_weights() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("s");
    synth(&data, "sequential", 26, 1.0, 10);
    let out = tmp.path().join("w.bin");
    ok(&["lda-export", "--data", p(&data), "--mean", "optimistic", "--out", p(&out)]);
    let bytes = fs::read(&out).unwrap();
    assert_eq!(&bytes[..8], b"UMMLDA01");
    let (model, c, t) = decode_lda(&bytes).unwrap();
    assert_eq!((c, t), (8, 10));
    assert_eq!(model.weights.len(), 80);
    assert!(model.weights.iter().all(|w| w.is_finite()) && model.bias.is_finite());
    assert!(decode_lda(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn info_reports_assignment_counts() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("s");
    synth(&data, "sequential", 27, 1.0, 2);
    let stdout = ok(&["info", "--data", p(&data)]);
    assert!(stdout.contains("symbols      6"));
    // binomial(90, 15)
    assert!(stdout.contains("45795673964460816"), "{stdout}");
}
