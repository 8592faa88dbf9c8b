use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
bootstrap = 20
lambda_search = false
[synth]
n_lung = 20
n_lesion = 60
corruption = 0.5
[lung_train]
max_epochs = 2
[disc_train]
max_epochs = 2
[seg_train]
max_epochs = 2
"#;

fn cseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cseg")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn gradcheck_passes_and_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc");
    let o = cseg(&["gradcheck", "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("end_to_end(λ=0)") && !stdout.contains("FAIL"), "{stdout}");
    assert_eq!(fs::read_to_string(out.join("gradcheck.txt")).unwrap(), stdout);
}

#[test]
fn contract_violations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ws");
    let out = out.to_str().unwrap();

    let bad = write_config(dir.path(), "[morph]\nclose_kk = 3\n");
    let o = cseg(&["synth", "--config", &bad, "--out", out]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("close_kk"), "{}", text(&o.stderr));

    let empty = write_config(dir.path(), "[synth]\nn_lesion = 0\n");
    let o = cseg(&["synth", "--config", &empty, "--out", out]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("synth.n_lesion"), "{}", text(&o.stderr));

    let o = cseg(&["phase2", "--out", out]);
    assert!(!o.status.success());

    let o = cseg(&["phase3", "--mode", "sideways", "--out", out]);
    assert!(!o.status.success());

    let o = cseg(&["sweep", "--axis", "close_k", "--config", "/nonexistent/run.toml", "--out", out]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("/nonexistent/run.toml"));
}

#[test]
fn small_run_through_every_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let ws = dir.path().join("ws");
    let out = ws.to_str().unwrap();
    for verb in ["synth", "phase1", "phase2"] {
        let o = cseg(&[verb, "--config", &cfg, "--out", out]);
        assert!(o.status.success(), "{verb}: {}", text(&o.stderr));
    }
    let o = cseg(&["phase3", "--config", &cfg, "--out", out, "--mode", "constrained"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let report = text(&o.stdout);
    assert!(report.contains("mode = full") && report.contains("iou.mean"), "{report}");

    let o = cseg(&["phase3", "--config", &cfg, "--out", out, "--mode", "baseline"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("lambda = none"));

    let o = cseg(&["eval", "--config", &cfg, "--out", out, "--mode", "constrained"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let metrics = fs::read_to_string(ws.join("phase3/full/metrics_per_sample.csv")).unwrap();
    let eval = fs::read_to_string(ws.join("phase3/full/eval_per_sample.csv")).unwrap();
    assert_eq!(metrics, eval);
}
