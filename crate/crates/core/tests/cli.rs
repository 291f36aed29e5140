use std::process::{Command, Output};

use casim::bench::parse_csv;

fn casim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casim")).args(args).env_remove("CASIM_SEED").output().expect("spawn casim")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bogus_scheme_is_a_usage_error() {
    let o = casim(&["bench", "--smr", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_and_missing_subcommand_exit_2() {
    assert_eq!(casim(&["bench", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(casim(&[]).status.code(), Some(2));
}

#[test]
fn bad_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[workload]\nthreads = \"many\"\n").unwrap();
    let o = casim(&["bench", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid configuration"));
    let missing = casim(&["bench", "--config", "/nonexistent/casim.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn invalid_workload_exits_2() {
    assert_eq!(casim(&["bench", "--updates", "101"]).status.code(), Some(2));
}

#[test]
fn footprint_writes_a_csv_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    let o = casim(&[
        "footprint",
        "--threads",
        "4",
        "--ops",
        "500",
        "--key-range",
        "200",
        "--sample-every",
        "200",
        "--out",
        p.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.contains("# command=footprint\n"));
    assert!(text.contains("# threads=4\n"));
    let rows = parse_csv(&text).unwrap();
    for scheme in ["none", "ca", "qsbr", "hp"] {
        assert_eq!(rows.iter().filter(|r| r.scheme == scheme).count(), 10, "{scheme}");
    }
    assert!(o.stdout.is_empty());
}

#[test]
fn bench_writes_csv_to_stdout_and_summary_to_stderr() {
    let o = casim(&["bench", "--ds", "hashtable", "--threads", "2", "--ops", "400", "--sample-every", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let rows = parse_csv(&text).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.scheme == "ca" && r.structure == "hashtable"));
    assert!(stderr(&o).contains("throughput"));
}

#[test]
fn seed_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_casim"))
        .args(["bench", "--ops", "100"])
        .env("CASIM_SEED", "77")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("# seed=77\n"));
    let flag = casim(&["bench", "--ops", "100", "--seed", "78"]);
    assert!(String::from_utf8_lossy(&flag.stdout).contains("# seed=78\n"));
}

#[test]
fn violation_exits_1_and_replays_identically() {
    let o = casim(&["safety-suite", "--runs", "10", "--ds", "stack", "--smr", "none", "--immediate-free"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    let cmd = err.lines().find_map(|l| l.strip_prefix("replay: casim ")).expect("replay command printed");
    let args: Vec<&str> = cmd.split_whitespace().collect();
    let a = casim(&args);
    let b = casim(&args);
    assert_eq!(a.status.code(), Some(1));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert!(stderr(&a).contains("violation"));
}

#[test]
fn clean_runs_exit_0() {
    assert_eq!(casim(&["safety-suite", "--runs", "5"]).status.code(), Some(0));
    assert_eq!(casim(&["explore", "--ds", "stack"]).status.code(), Some(0));
    assert_eq!(casim(&["replay", "3", "--ds", "extbst"]).status.code(), Some(0));
}
