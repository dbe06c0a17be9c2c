use std::fs;
use std::process::Command;

fn bin(name: &str) -> Command {
    Command::new(match name {
        "ot" => env!("CARGO_BIN_EXE_ot"),
        "bench2d" => env!("CARGO_BIN_EXE_bench2d"),
        _ => env!("CARGO_BIN_EXE_darcy"),
    })
}

#[test]
fn ot_selftest_passes_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin("ot").args(["selftest", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{text}");
    assert!(dir.path().join("selftest.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn rate_writes_csvs_and_a_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin("bench2d")
        .args(["rate", "--dist", "checkerboard", "--grid", "64,128,256", "--nref", "1024", "--repeats", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("rate_summary.csv")).unwrap();
    assert!(csv.starts_with("n,w2_mean,w2_se\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("rate.svg").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["n_ref"], 1024);
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = bin("bench2d")
        .args(["sweep", "--var", "depth", "--dist", "swissroll", "--grid", "1,2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!unknown.status.success());
    let unsorted = bin("bench2d")
        .args(["rate", "--dist", "pinwheel", "--grid", "256,128,512", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!unsorted.status.success());
    let missing = bin("darcy")
        .args(["run", "--prior"])
        .arg(dir.path().join("absent.bin"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!missing.status.success());
}

#[test]
fn errored_cells_give_a_failing_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin("bench2d")
        .args(["sweep", "--var", "epochs", "--dist", "pinwheel", "--grid", "2,64", "--repeats", "1", "--lr", "1e12", "--objective", "sinkhorn"])
        .args(["--stages", "1", "--n-train", "64", "--n-gen", "64", "--n-ref", "128", "--m-out", "32", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let cells = fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 3);
    assert!(cells.contains("diverged"));
}

#[test]
fn darcy_prior_and_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prior = dir.path().join("prior.bin");
    let out = bin("darcy")
        .args(["train-prior", "--epochs", "3", "--stages", "1", "--n-data", "256", "--out"])
        .arg(&prior)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("prior.bin.d/manifest.json").exists());
    let run = dir.path().join("run");
    let out = bin("darcy")
        .args(["run", "--noise", "0.2", "--samples", "1000", "--prior"])
        .arg(&prior)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("posterior_mean.pgm").exists());
    assert!(run.join("ess.csv").exists());
}
