use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_offload-sim");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const MINIMAL: &str = "version = 1\ngames_per_round = 20\n\n[topology.generate]\nhandhelds = 6\naccess_points = 2\nradius = 0.5\n";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_outputs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", MINIMAL);
    let out = dir.path().join("out");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["games.csv", "transfers.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("traces.jsonl").exists());
    let text = stdout(&o);
    assert!(text.contains("delivery ratio: 1.0000"), "{text}");
    assert!(text.contains("top balances:"));
    let games = std::fs::read_to_string(out.join("games.csv")).unwrap();
    assert!(games.starts_with("round,game,packet_id,outcome"));
    assert_eq!(games.lines().count(), 21);
    assert!(!games.contains('\r'));
}

#[test]
fn quiet_run_prints_nothing_and_seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", MINIMAL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = run(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    run(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--quiet", "--seed", "99"]);
    let read = |d: &Path| std::fs::read(d.join("games.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}

#[test]
fn fine_above_budget_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        &format!("{MINIMAL}\n[packet]\nbudget = {{ constant = 50 }}\nfine = {{ constant = 60 }}\n"),
    );
    let o = run(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("packet.fine") && err.contains("smaller or equal to the budget"), "{err}");
    assert_eq!(run(&["validate", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn missing_files_and_bad_syntax_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--config", "/nonexistent/x.toml", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write(dir.path(), "bad.toml", "version = 1\n[topology\n");
    let o = run(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let cfg = write(dir.path(), "f.toml", "version = 1\n[topology]\nfile = \"missing.toml\"\n");
    assert_eq!(run(&["validate", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", MINIMAL);
    let blocker = write(dir.path(), "file", "");
    let o = run(&["run", "--config", &cfg, "--out", &format!("{blocker}/sub")]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn validate_reports_the_topology() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", MINIMAL);
    let o = run(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "ok: 6 handhelds, 2 access points");
}

#[test]
fn generated_topology_feeds_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-topology", "--handhelds", "7", "--aps", "3", "--radius", "0.5", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let again = run(&["gen-topology", "--handhelds", "7", "--aps", "3", "--radius", "0.5", "--seed", "4"]);
    assert_eq!(o.stdout, again.stdout);
    let topo = dir.path().join("net.toml");
    let o = run(&[
        "gen-topology", "--handhelds", "7", "--aps", "3", "--radius", "0.5", "--seed", "4", "--out",
        topo.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let cfg = write(dir.path(), "s.toml", "version = 1\n[topology]\nfile = \"net.toml\"\n");
    let o = run(&["validate", "--config", &cfg]);
    assert_eq!(stdout(&o).trim(), "ok: 7 handhelds, 3 access points");
    let o = run(&["gen-topology", "--handhelds", "7", "--radius", "0.001", "--max-attempts", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bid_curve_rows() {
    let o = run(&["bid-curve", "--steepness", "0", "--samples", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "a_n,c_n,offer\n0,0,140.000\n0,0.5,140.000\n0,1,140.000\n0,1.5,140.000\n0,2,140.000\n"
    );
    let o = run(&["bid-curve", "--budget", "100", "--fine", "20", "--steepness", "1", "--samples", "3"]);
    let rows: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(rows[2], "1,1,60.000");
    assert_eq!(run(&["bid-curve", "--budget", "80", "--fine", "81"]).status.code(), Some(2));
    assert_eq!(run(&["bid-curve", "--samples", "1"]).status.code(), Some(2));
}

#[test]
fn preference_grid_rows() {
    let o = run(&["preference-grid", "--grid", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "op_i,c_i,preference\n0.000,0,2\n0.000,3,5\n20.000,0,0\n20.000,3,3\n");
    assert_eq!(run(&["preference-grid", "--k1", "3", "--k2", "3"]).status.code(), Some(2));
    assert_eq!(run(&["preference-grid", "--k1", "0", "--k2", "3"]).status.code(), Some(2));
    assert_eq!(run(&["preference-grid", "--c-max", "0"]).status.code(), Some(2));
}

#[test]
fn replay_round_trip_and_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "version = 1\ngames_per_round = 30\nseed = 3\n\n[topology.generate]\nhandhelds = 8\naccess_points = 2\nradius = 0.35\n",
    );
    let out = dir.path().join("o");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--traces", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let traces = out.join("traces.jsonl");
    let o = run(&["replay", traces.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "ok: 30 games verified");

    // inflate one payment amount in place
    let text = std::fs::read_to_string(&traces).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut game: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    game["transfers"][0]["amount"] = serde_json::Value::String("999999.000".into());
    lines[1] = game.to_string();
    let tampered = dir.path().join("t.jsonl");
    std::fs::write(&tampered, lines.join("\n")).unwrap();
    let o = run(&["replay", tampered.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("conservation"), "{}", stderr(&o));

    std::fs::write(&tampered, "{\"record\":\"game\"}\n").unwrap();
    assert_eq!(run(&["replay", tampered.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["replay", "/nonexistent.jsonl"]).status.code(), Some(2));
}
