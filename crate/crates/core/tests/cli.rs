use std::fs;
use std::process::Command;

fn semcom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semcom"))
}

#[test]
fn show_config_applies_overrides() {
    let out = semcom()
        .args(["show-config", "--seed", "42", "--out", "elsewhere", "--preset", "paper"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 42"), "{text}");
    assert!(text.contains("out_dir = \"elsewhere\""));
    assert!(text.contains("epochs = 200"));
}

#[test]
fn config_file_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[model]\nsymbol_width = 7\n").unwrap();
    let out = semcom().arg("show-config").arg("--config").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("model.symbol_width"), "{err}");

    fs::write(&path, "[train]\nepoch = 3\n").unwrap();
    let out = semcom().arg("show-config").arg("--config").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("epoch"));
}

#[test]
fn gradcheck_reports_every_op() {
    let out = semcom().args(["gradcheck", "--points", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for op in ["matmul", "tanh", "interference_channel", "filtered_channel"] {
        assert!(text.contains(op), "{op} missing from\n{text}");
    }
}

#[test]
fn train_without_data_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, format!("[data]\ndir = \"{}\"\n", tmp.path().join("none").display())).unwrap();
    let out = semcom()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("fetch-data"));
}

#[test]
fn unknown_subcommand_is_rejected() {
    assert!(!semcom().arg("frobnicate").output().unwrap().status.success());
}
