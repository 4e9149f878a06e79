use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mmab-sax");

const CONFIG: &str = r#"{
  "arms": [
    {"mean": 0.9, "capacity": 2},
    {"mean": 0.6, "capacity": 1},
    {"mean": 0.3, "capacity": 1}
  ],
  "players": 2,
  "horizon": 3000,
  "delta": 0.05,
  "seed": 4
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), config).unwrap();
    dir
}

#[test]
fn run_writes_results_and_traces() {
    let dir = setup(CONFIG);
    let out = run(
        dir.path(),
        &["run", "--config", "c.json", "--out", "r", "--trace", "ev.jsonl", "--trace-steps", "steps.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "horizon,seed,cumulative_regret,good_event,phase1_steps,partition_epochs,final_assignment"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "3000");
    assert_eq!(row[1], "4");
    assert_eq!(row[6].split(';').count(), 2);
    let steps = std::fs::read_to_string(dir.path().join("steps.csv")).unwrap();
    assert_eq!(steps.lines().next().unwrap(), "t,player,arm,psi,pass,in_full_group,reward");
    assert_eq!(steps.lines().count(), 1 + 2 * 3000);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["steps"], 3000);
    for line in std::fs::read_to_string(dir.path().join("ev.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["event"].is_string() && v["t"].is_u64() && v["player"].is_u64());
    }
    let replay = run(dir.path(), &["trace-replay", "--trace", "ev.jsonl"]);
    assert_eq!(replay.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&replay.stdout).contains("checkpoint"));
}

#[test]
fn overrides_beat_file_values() {
    let dir = setup(CONFIG);
    let out = run(
        dir.path(),
        &["run", "--config", "c.json", "--seed", "9", "--horizon", "600", "--delta", "theorem_default", "--out", "r"],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("600,9,"));
}

#[test]
fn config_errors_exit_2_without_output() {
    let bad = [
        CONFIG.replace("0.6", "0.9"),
        CONFIG.replace("\"players\": 2", "\"players\": 7"),
        CONFIG.replace("\"seed\": 4", "\"seed\": 4, \"colour\": 1"),
        "{ not json".to_string(),
    ];
    for cfg in &bad {
        let dir = setup(cfg);
        let out = run(dir.path(), &["run", "--config", "c.json", "--out", "r"]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
        assert!(!dir.path().join("r.csv").exists());
        assert!(!dir.path().join("r.json").exists());
    }
    let dir = setup(CONFIG);
    for args in [
        vec!["run", "--config", "c.json", "--delta", "0.5", "--out", "r"],
        vec!["run", "--config", "c.json", "--feedback-mode", "loud", "--out", "r"],
        vec!["run", "--config", "missing.json", "--out", "r"],
        vec!["sweep", "--config", "c.json", "--horizons", "0", "--out", "s.csv"],
    ] {
        let out = run(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn sweep_reads_jobs_from_env() {
    let dir = setup(CONFIG);
    let out = Command::new(BIN)
        .current_dir(dir.path())
        .env("MMAB_SAX_JOBS", "2")
        .args(["sweep", "--config", "c.json", "--horizons", "900,1800", "--seeds", "3", "--out", "s.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let keys: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["900,4", "900,5", "900,6", "1800,4", "1800,5", "1800,6"]);
    let bad = Command::new(BIN)
        .current_dir(dir.path())
        .env("MMAB_SAX_JOBS", "many")
        .args(["sweep", "--config", "c.json", "--out", "t.csv"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn check_passes_and_fault_fails() {
    let dir = tempfile::tempdir().unwrap();
    let good = run(dir.path(), &["check"]);
    assert_eq!(good.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&good.stdout).contains("FAIL"));
    let bad = run(dir.path(), &["check", "--inject-fault", "codec"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL codec"));
}
