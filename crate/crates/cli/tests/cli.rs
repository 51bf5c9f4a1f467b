use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.toml"))
}

fn byzcone(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzcone"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn byzcone")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_passes_on_every_scenario() {
    for name in ["chain", "ghost", "investigators", "pingpong", "relay", "vat"] {
        let dir = tempfile::tempdir().unwrap();
        let o = byzcone(dir.path(), &["run", path(&scenario(name))]);
        assert_eq!(code(&o), 0, "{name}: {}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
        assert!(!stdout(&o).contains("FAIL"));
        assert!(dir.path().join("reports/summary.txt").is_file());
    }
}

#[test]
fn run_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sc = scenario("relay");
    assert_eq!(code(&byzcone(a.path(), &["run", path(&sc)])), 0);
    assert_eq!(code(&byzcone(b.path(), &["run", path(&sc)])), 0);
    for sub in ["reports", "traces", "graphs"] {
        let mut names: Vec<_> = std::fs::read_dir(a.path().join(sub))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty(), "{sub} is empty");
        for n in names {
            let x = std::fs::read(a.path().join(sub).join(&n)).unwrap();
            let y = std::fs::read(b.path().join(sub).join(&n)).unwrap();
            assert_eq!(x, y, "{sub}/{n:?} differs");
        }
    }
}

#[test]
fn eval_checks_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("vat");
    let ok = byzcone(
        dir.path(),
        &["eval", path(&sc), "--formula", "(K 1 (occurred-correctly e))", "--expect", "false"],
    );
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let bad = byzcone(
        dir.path(),
        &["eval", path(&sc), "--formula", "(K 1 (occurred-correctly e))", "--expect", "true"],
    );
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).contains("FAIL"));
    let at = byzcone(
        dir.path(),
        &["eval", path(&sc), "--formula", "(occurred 2 recv(1, m))", "--time", "3", "--script", "observed", "--expect", "true"],
    );
    assert_eq!(code(&at), 0, "{}", stdout(&at));
}

#[test]
fn dot_and_partition() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("chain");
    let o = byzcone(dir.path(), &["dot", path(&sc), "--script", "o-at-1", "--theta", "3@4"]);
    assert_eq!(code(&o), 0);
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("fillcolor"));
    assert!(dir.path().join("graphs/partition.dot").is_file());
    let o = byzcone(dir.path(), &["partition", path(&sc), "--script", "o-at-1", "--theta", "3@4"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("1@1"));
}

#[test]
fn verify_vat_and_multipede() {
    let dir = tempfile::tempdir().unwrap();
    let o = byzcone(dir.path(), &["verify-lemma5", path(&scenario("ghost"))]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = byzcone(dir.path(), &["vat", path(&scenario("vat")), "--victim", "2", "--time", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let chain = scenario("chain");
    let o = byzcone(
        dir.path(),
        &["multipede", path(&chain), "--script", "o-at-4", "--theta", "3@4", "--event", "ext(o)", "--expect", "satisfied"],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = byzcone(
        dir.path(),
        &["multipede", path(&chain), "--script", "o-at-1", "--theta", "3@4", "--event", "ext(o)", "--expect", "satisfied"],
    );
    assert_eq!(code(&o), 1, "{}", stdout(&o));
}

#[test]
fn simulate_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("pingpong");
    let o = byzcone(dir.path(), &["simulate", path(&sc), "--random", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("# forged"));
    for name in ["honest", "forged", "random-5"] {
        let dump = dir.path().join(format!("traces/{name}.json"));
        let o = byzcone(dir.path(), &["replay", path(&sc), path(&dump)]);
        assert_eq!(code(&o), 0, "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("replay reproduces all 4 rounds"));
    }
    let o = byzcone(dir.path(), &["enumerate", path(&scenario("ghost"))]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).trim_end().ends_with("runs"));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nagents = 2\nhorizon = \"x\"\n").unwrap();
    let o = byzcone(dir.path(), &["run", path(&bad)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let o = byzcone(dir.path(), &["run", path(&dir.path().join("missing.toml"))]);
    assert_eq!(code(&o), 2);
    let o = byzcone(dir.path(), &["--budget", "1", "run", path(&scenario("vat"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let o = byzcone(dir.path(), &["eval", path(&scenario("vat")), "--formula", "(K 1"]);
    assert_eq!(code(&o), 2);
}
