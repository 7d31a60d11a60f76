use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn duplex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duplex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn model(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "models", name].iter().collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn build_writes_six_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = duplex(&["build", &model("seal_in.b0"), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["fingerprint.txt", "image_a.hex", "image_b.hex", "listing_a.txt", "listing_b.asm", "map.json"]
    );
    let fp = fs::read_to_string(out.join("fingerprint.txt")).unwrap();
    assert!(fs::read_to_string(out.join("listing_a.txt")).unwrap().contains(fp.trim()));
    assert!(fs::read_to_string(out.join("listing_b.asm")).unwrap().contains(fp.trim()));

    let again = dir.path().join("c");
    duplex(&["build", &model("seal_in.b0"), "--out", p(&again)]);
    for f in ["fingerprint.txt", "image_a.hex", "image_b.hex", "map.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn build_rejects_type_errors_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("bad.b0");
    fs::write(&src, "MACHINE M\nINPUTS b : BOOL\nOUTPUTS n : INT(0..9)\nOPERATION user_logic BEGIN\n  n := b\nEND\n").unwrap();
    let o = duplex(&["build", p(&src), "--out", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.b0:5:"), "{}", stderr(&o));
}

#[test]
fn one_hex_record_per_instruction_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    duplex(&["build", &model("seal_in.b0"), "--out", p(&out), "--record-bytes", "4"]);
    let records = fs::read_to_string(out.join("image_b.hex"))
        .unwrap()
        .lines()
        .filter(|l| &l[7..9] == "00")
        .count();
    let instructions = fs::read_to_string(out.join("listing_b.asm"))
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("    "))
        .count();
    assert_eq!(records, instructions);
}

#[test]
fn runs_are_byte_identical_and_match_the_hand_table() {
    let dir = tempfile::tempdir().unwrap();
    let scen = model("seal_in.scenario.json");
    let t1 = dir.path().join("t1.jsonl");
    let t2 = dir.path().join("t2.jsonl");
    let o = duplex(&["run", &model("seal_in.b0"), "--scenario", &scen, "--trace", p(&t1)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // From a build directory instead of source: same trace.
    let b = dir.path().join("b");
    duplex(&["build", &model("seal_in.b0"), "--out", p(&b)]);
    duplex(&["run", p(&b), "--scenario", &scen, "--trace", p(&t2)]);
    assert_eq!(fs::read(&t1).unwrap(), fs::read(&t2).unwrap());

    // start at 0, released at 1, stop at 5..6: motor on for cycles 0..=4.
    let text = fs::read_to_string(&t1).unwrap();
    let changes: Vec<serde_json::Value> = text
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|e| e["kind"] == "output_change")
        .collect();
    assert_eq!(changes.len(), 2);
    assert_eq!((changes[0]["cycle"].as_u64(), changes[1]["cycle"].as_u64()), (Some(0), Some(5)));
}

#[test]
fn empty_run_prints_only_the_header() {
    let o = duplex(&["run", &model("seal_in.b0"), "--cycles", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    let header: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(header["trace"], "duplex");
    assert!(header["config_hash"].is_string());
}

#[test]
fn scenario_errors_come_before_cycle_zero() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    fs::write(&s, r#"{"inputs":[{"at":3,"set":{"nope":1}}],"cycles":5}"#).unwrap();
    let o = duplex(&["run", &model("seal_in.b0"), "--scenario", p(&s)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn inject_kill_times_out_three_cycles_later() {
    let o = duplex(&[
        "inject",
        &model("seal_in.b0"),
        "--scenario",
        &model("seal_in.scenario.json"),
        "--fault",
        r#"{"kind":"mcu_kill","mcu":"MCU2","at_cycle":2}"#,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let timeout = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|e| e["kind"] == "heartbeat_timeout")
        .expect("survivor notices");
    assert_eq!(timeout["cycle"], 5);
    assert_eq!(timeout["source"], "MCU1");

    let bad = duplex(&["inject", &model("seal_in.b0"), "--fault", r#"{"kind":"meteor"}"#]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn relay_output_builds() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("seal.b0");
    let o = duplex(&["relay", &model("seal_in.net"), "--out", p(&m)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let b = duplex(&["build", p(&m), "--out", p(&dir.path().join("b"))]);
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));

    let bad = dir.path().join("bad.net");
    fs::write(&bad, "INPUT a;\nOUTPUT o = a & x;\n").unwrap();
    let o = duplex(&["relay", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.net:2:"), "{}", stderr(&o));
}

#[test]
fn check_verdicts_and_exit_codes() {
    let o = duplex(&["check", &model("counter_wrap.b0")]);
    assert_eq!((o.status.code(), stdout(&o)), (Some(0), "holds, 4 states\n".to_string()));
    let o = duplex(&["check", &model("counter_nowrap.b0")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("witness trace of length 4"));
    let o = duplex(&["check", &model("counter_wrap.b0"), "--max-states", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("state space too large"));
}

#[test]
fn fuzz_exit_codes_and_reproduction_lines() {
    let o = duplex(&["fuzz", "--programs", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let o = duplex(&["fuzz", "--programs", "25", "--cycles", "40", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("failures: 0"));

    let o = duplex(&["fuzz", "--programs", "5", "--cycles", "40", "--seed", "7", "--break-add"]);
    assert_eq!(o.status.code(), Some(1));
    let line = stdout(&o)
        .lines()
        .find_map(|l| l.trim().strip_prefix("reproduce: ").map(str::to_string))
        .expect("a reproduction line");
    // The printed command replays exactly that one failure.
    let args: Vec<&str> = line.split_whitespace().skip(1).collect();
    let again = duplex(&args);
    assert_eq!(again.status.code(), Some(1));
    assert!(stdout(&again).contains("failures: 1"));
}

#[test]
fn bench_reports_throughput() {
    let o = duplex(&["bench", "--equations", "1", "--cycles", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("cycles/s"));
    let o = duplex(&["bench", "--equations", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(duplex(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(duplex(&["build"]).status.code(), Some(2));
    assert_eq!(duplex(&["fuzz", "--programs", "many"]).status.code(), Some(2));
}
