use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tenderbft"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tenderbft-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_check_replay_roundtrip() {
    let dir = scratch("roundtrip");
    let scenario = example("happy-path.toml");
    let run = bin()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .env("TENDERBFT_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", stdout(&run));
    let trace = dir.join("happy-path-1.trace");
    assert!(trace.exists());

    let check = bin()
        .args(["check", "--scenario"])
        .arg(&scenario)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(check.status.success());
    assert_eq!(stdout(&check).lines().filter(|l| l.contains("PASS")).count(), 6);

    let replay = bin()
        .args(["replay", "--scenario"])
        .arg(&scenario)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(replay.status.success(), "{}", stdout(&replay));

    let text = std::fs::read_to_string(&trace).unwrap();
    let tampered = dir.join("tampered.trace");
    std::fs::write(&tampered, text.replacen("ev=decide h=0 r=0", "ev=decide h=0 r=1", 1)).unwrap();
    let replay = bin()
        .args(["replay", "--scenario"])
        .arg(&scenario)
        .arg("--trace")
        .arg(&tampered)
        .output()
        .unwrap();
    assert_eq!(replay.status.code(), Some(1));
    assert!(stdout(&replay).contains("diverged at line"));
}

#[test]
fn check_exits_nonzero_on_a_failed_verdict() {
    let dir = scratch("fail");
    let scenario = example("happy-path.toml");
    let trace = dir.join("t.trace");
    bin()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    // drop one process's decisions: termination must fail
    let text = std::fs::read_to_string(&trace).unwrap();
    let cut: String = text
        .lines()
        .filter(|l| !l.contains("p=1 ev=decide"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&trace, cut).unwrap();
    let out = bin()
        .args(["check", "--checkers", "agreement,termination", "--scenario"])
        .arg(&scenario)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let s = stdout(&out);
    assert!(s.contains("agreement") && s.contains("FAIL"), "{s}");
}

#[test]
fn fuzz_aggregates_verdicts() {
    let out = bin()
        .args(["fuzz", "--seeds", "10..30", "--checkers", "agreement,validity", "--scenario"])
        .arg(example("equivocation-late-gst.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let s = stdout(&out);
    assert!(s.contains("agreement        pass 20"), "{s}");
    assert!(s.contains("20 runs"), "{s}");
}

#[test]
fn bad_input_is_a_usage_error() {
    let dir = scratch("bad");
    let bad = dir.join("bad.toml");
    std::fs::write(
        &bad,
        "seed = 0\nheights = 1\n[validators]\npowers = [1, 1, 1]\nmax_faulty = 1\n[network]\ngst = 0\ndelta = 10\n",
    )
    .unwrap();
    let out = bin().args(["run", "--scenario"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n > 3f"));
    let out = bin()
        .args(["check", "--checkers", "liveness", "--trace", "x", "--scenario"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
}
