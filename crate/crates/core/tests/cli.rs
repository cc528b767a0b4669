use std::path::Path;
use std::process::{Command, Output};

fn mshlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mshlab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.ini");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "# small disc\nname = small\nweight = green\nintervals = 64\n\
    theta = constant\ntheta_value = 0.5\nc_list = 1, 2, 4\n";

#[test]
fn verify_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let run = mshlab(&["verify", "--config", &cfg, "--out", out_s]);
    let code = run.status.code().unwrap();
    assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("sandwich: PASS"), "{stdout}");
    assert!(out.join("report.json").exists() && out.join("field_u.bin").exists());

    let report = mshlab(&["report", "--out", out_s]);
    assert_eq!(report.status.code(), Some(code));
    assert!(String::from_utf8_lossy(&report.stdout).starts_with("scenario small"));
}

#[test]
fn stages_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("stages");
    let out_s = out.to_str().unwrap();
    for (cmd, file) in [
        ("check-weight", "hypotheses.csv"),
        ("build-sub", "field_sub.bin"),
        ("build-super", "superweight.json"),
        ("solve", "stabilization.json"),
    ] {
        let r = mshlab(&[cmd, "--config", &cfg, "--out", out_s, "--grid", "32"]);
        assert_eq!(r.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(out.join(file).exists(), "{cmd}");
    }
}

#[test]
fn errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "n = 3\n");
    assert_eq!(mshlab(&["verify", "--config", &bad]).status.code(), Some(3));
    assert_eq!(mshlab(&["solve"]).status.code(), Some(3));
    let missing = dir.path().join("nothing");
    assert_eq!(mshlab(&["report", "--out", missing.to_str().unwrap()]).status.code(), Some(3));
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(mshlab(&["verify", "--config", &cfg, "--grid", "63"]).status.code(), Some(3));
}
