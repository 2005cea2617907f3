use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pitchfork(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pitchfork"))
        .args(args)
        .current_dir(dir)
        .env("PITCHFORK_THREADS", "1")
        .output()
        .expect("spawn pitchfork")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str(line).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (head, rows)
}

#[test]
fn validate_toy_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = pitchfork(dir.path(), &["validate", "--model", "toy", "--out", "v"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (head, rows) = csv_rows(&dir.path().join("v/validate.csv"));
    assert_eq!(head.last().unwrap(), "producer");
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] == "true"));
}

#[test]
fn validate_reports_failed_assumption() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "tau = 3.141592653589793\nf = { cos = [1.0] }\n",
    )
    .unwrap();
    let out = pitchfork(
        dir.path(),
        &["validate", "--model-file", "bad.toml", "--out", "v"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "check_failed");
    let (_, rows) = csv_rows(&dir.path().join("v/validate.csv"));
    let zeros = rows.iter().find(|r| r[0] == "zeros").unwrap();
    assert_eq!(zeros[1], "false");
}

#[test]
fn constants_match_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = pitchfork(dir.path(), &["constants", "--out", "c"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rows) = csv_rows(&dir.path().join("c/constants.csv"));
    let get = |name: &str| -> f64 {
        rows.iter().find(|r| r[0] == name).unwrap()[1]
            .parse()
            .unwrap()
    };
    assert!((get("e1") - 1.19814023473559).abs() < 1e-9);
    assert!((get("e4_raw") - 2.0).abs() < 1e-9);
    assert!((get("e2") - 2f64.powf(1.5)).abs() < 1e-9);

    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c/constants.json")).unwrap())
            .unwrap();
    assert_eq!(side["command"], "constants");
    assert!(side["versions"]["pitchfork"].is_string());
    assert_eq!(side["config"]["model"], "toy");
    assert!(side["runtime_seconds"]["total"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bad_config_gives_json_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "bogus_key = 1\n").unwrap();
    let out = pitchfork(dir.path(), &["constants", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("bogus_key"));

    let out = pitchfork(dir.path(), &["predict"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "config");

    let out = pitchfork(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pitchfork"))
        .args(["constants"])
        .current_dir(dir.path())
        .env("PITCHFORK_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "config");
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "eps = 0.08\noutput_dir = \"from_file\"\n[integrate]\nperiods = 0.5\nstride = 50\n",
    )
    .unwrap();
    let out = pitchfork(
        dir.path(),
        &["integrate", "--config", "run.toml", "--eps", "0.04"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let side: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("from_file/integrate.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(side["config"]["eps"], 0.04);
    assert_eq!(side["config"]["integrate"]["stride"], 50);
    let t_end = side["summary"]["t_end"].as_f64().unwrap();
    assert!((t_end - std::f64::consts::PI / 0.04).abs() < 1e-9);
    assert!(side["summary"]["max_energy_drift"].as_f64().unwrap() < 1e-9);
}

#[test]
fn fit_reads_census_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let head = "eps[-],pos_count[count],spos_count[count],spos_small_count[count],upos_small_count[count],producer";
    let mut text = String::from(head);
    for (e, c) in [(0.08, 32), (0.04, 47), (0.02, 63)] {
        text.push_str(&format!("\n{e},0,0,0,{c},test"));
    }
    fs::write(dir.path().join("s.csv"), text + "\n").unwrap();
    let out = pitchfork(dir.path(), &["fit", "--input", "s.csv", "--out", "f"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f/fit.json")).unwrap()).unwrap();
    let a = side["summary"]["a"].as_f64().unwrap();
    assert!(a > 2.0 && a < 5.0, "a = {a}");
    let (_, rows) = csv_rows(&dir.path().join("f/fit.csv"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "eps = 0.04\n[continuation]\ncount = 3\n[integrate]\nperiods = 0.25\n",
    )
    .unwrap();
    let commands: [(&str, &[&str]); 4] = [
        ("integrate", &["trajectory.csv"]),
        ("predict", &["seeds.csv"]),
        ("continue", &["continuation.csv"]),
        ("cover", &["cover_steps.csv"]),
    ];
    for (cmd, files) in commands {
        for run in ["a", "b"] {
            let out = pitchfork(dir.path(), &[cmd, "--config", "run.toml", "--out", run]);
            assert!(
                out.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
        for f in files {
            let a = fs::read(dir.path().join("a").join(f)).unwrap();
            let b = fs::read(dir.path().join("b").join(f)).unwrap();
            assert!(!a.is_empty());
            assert_eq!(a, b, "{cmd}: {f} differs between runs");
        }
    }
}
