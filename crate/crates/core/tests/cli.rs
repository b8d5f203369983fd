//! End-to-end runs of the `ntkae` binary.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ntkae"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ntkae-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let cfg = tmp("rc.cfg");
    std::fs::write(
        &cfg,
        "# small sweep\nn0 = 8\nn = 4\nr = 1, 10, 100\nactivation = erf_scaled_sigmoid, sigmoid\nrepetitions = 2\n",
    )
    .unwrap();
    let run = |out: &PathBuf, seed: &str| {
        let st = bin()
            .args(["experiment", "radius_curve", "--seed", seed, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(st.success());
        std::fs::read(out).unwrap()
    };
    let a = run(&tmp("a.csv"), "5");
    let b = run(&tmp("b.csv"), "5");
    let c = run(&tmp("c.csv"), "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# schema=radius_curve version=1\ncell,rep,filtered,"));
    assert_eq!(text.lines().count(), 2 + 3 * 2 * 2);
}

#[test]
fn json_output_is_an_array() {
    let out = bin().args(["kernel", "--format", "json", "--set", "n0=4"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["n0"], 4);
}

#[test]
fn config_errors_name_the_field() {
    let out = bin().args(["experiment", "radius_curve", "--set", "repetitions=0"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`repetitions`"));
}

#[test]
fn train_then_spectrum_from_checkpoint() {
    let ck = tmp("net.ckpt");
    let args = ["--set", "n0=6", "--set", "n=3", "--set", "r=2", "--set", "width=64", "--set", "max_iter=50"];
    let st = bin().arg("train").arg("--checkpoint").arg(&ck).args(args).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert_eq!(&std::fs::read(&ck).unwrap()[..8], b"NTKAE001");
    let out = bin().arg("spectrum").arg("--checkpoint").arg(&ck).args(args).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2 + 6);
}

#[test]
fn verify_exits_zero_when_hard_checks_pass() {
    let out = bin().arg("verify").output().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "{err}");
    assert!(err.contains("0 hard failures"));
}
