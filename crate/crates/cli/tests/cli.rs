use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlab")).args(args).current_dir(cwd).output().expect("spawn dlab")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A two-dimensional config that runs every experiment kind in a few seconds.
const SMALL: &str = r#"
version = 1
output = "out"
seed = 3

[grid]
dim = 2
points = 64
length = 20.0

[time]
t_end = 0.2
dt = 0.01

[data]
source = "profile"
amplitude = 0.5
profile = { kind = "gaussian_bump", width = 1.0 }

[[experiments]]
kind = "evolve"
id = "ev"
frames = 5

[[experiments]]
kind = "project"
id = "pr"
band = { kind = "dyadic", n = 2.0 }

[[experiments]]
kind = "randomize"
id = "rz"
draw = 1

[[experiments]]
kind = "norms"
id = "nm"
frames = 9
norms = [{ kind = "strichartz", q = 2.0, r = 4.0 }, { kind = "energy_sup" }]

[[experiments]]
kind = "solve"
id = "nls"
mode = "nls"
params = { stride = 2 }

[[experiments]]
kind = "solve"
id = "forced"
mode = "forced"
params = { stride = 2 }

[[experiments]]
kind = "solve"
id = "picard"
mode = "picard"
params = { tau = 0.1 }
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn empty_experiment_list_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.toml", "version = 1\noutput = \"o\"\n");
    let out = dlab(&["run", "c.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("o/report.json"));
    assert_eq!(r["entries"].as_array().unwrap().len(), 0);
    assert_eq!(r["schema_version"], 1);
}

#[test]
fn malformed_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL
        .replace("version = 1", "version = 2")
        .replace("points = 64", "points = 63")
        .replace("dt = 0.01", "dt = 0.0")
        .replace("id = \"rz\"", "id = \"ev\"");
    write_config(dir.path(), "bad.toml", &bad);
    let out = dlab(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["version", "grid", "time.dt", "duplicate id"] {
        assert!(err.contains(needle), "missing `{needle}` in:\n{err}");
    }
    assert!(!dir.path().join("out").exists());

    write_config(dir.path(), "typo.toml", &SMALL.replace("seed = 3", "sed = 3"));
    let out = dlab(&["run", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sed"));
}

#[test]
fn every_experiment_kind_runs_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.toml", SMALL);
    let first = dlab(&["run", "c.toml"], dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let report = json(&dir.path().join("out/report.json"));
    let ids: Vec<&str> = report["entries"].as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["ev", "pr", "rz", "nm", "nls", "forced", "picard"]);
    for id in &ids {
        let a = json(&dir.path().join(format!("out/{id}.json")));
        assert_eq!(a["pass"], true, "{id}: {}", a["result"]);
        assert_eq!(a["config_hash"].as_str().unwrap().len(), 64);
    }
    assert!(dir.path().join("out/ev/manifest.json").exists());
    assert!(dir.path().join("out/nls/frame_00000.dlab").exists());

    let before = files(&dir.path().join("out"));
    std::fs::remove_dir_all(dir.path().join("out")).unwrap();
    let second = dlab(&["run", "c.toml"], dir.path());
    assert_eq!(second.status.code(), Some(0));
    let after = files(&dir.path().join("out"));
    assert_eq!(before.len(), after.len());
    for ((pa, a), (pb, b)) in before.iter().zip(&after) {
        assert_eq!(pa, pb);
        assert!(a == b, "{} differs between runs", pa.display());
    }
}

#[test]
fn norms_of_a_stored_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.split("[[experiments]]").next().unwrap().to_string()
        + "[[experiments]]\nkind = \"evolve\"\nid = \"ev\"\nframes = 5\n\n"
        + "[[experiments]]\nkind = \"norms\"\nid = \"stored\"\ntrajectory = \"out/ev\"\nframes = 5\n"
        + "norms = [{ kind = \"strichartz\", q = inf, r = 2.0 }]\n\n"
        + "[[experiments]]\nkind = \"norms\"\nid = \"fresh\"\nframes = 5\n"
        + "norms = [{ kind = \"strichartz\", q = inf, r = 2.0 }]\n";
    write_config(dir.path(), "c.toml", &cfg);
    let out = dlab(&["run", "c.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stored = json(&dir.path().join("out/stored.json"));
    let fresh = json(&dir.path().join("out/fresh.json"));
    let a = stored["result"][0]["value"].as_f64().unwrap();
    let b = fresh["result"][0]["value"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
}

#[test]
fn verify_bernstein_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlab(&["verify", "--estimate", "bernstein", "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&dir.path().join("v/bernstein.json"));
    assert_eq!(a["pass"], true);
    let csv = std::fs::read_to_string(dir.path().join("v/bernstein.csv")).unwrap();
    assert!(csv.lines().count() > 3);

    let out = dlab(&["verify", "--estimate", "no_such"], dir.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn solve_mode_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.toml", SMALL);
    let out = dlab(&["solve", "--mode", "nls", "--config", "c.toml", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("s/report.json"));
    assert_eq!(r["entries"].as_array().unwrap().len(), 3);
    let forced = json(&dir.path().join("s/forced.json"));
    assert!(forced["config"].as_str().unwrap().contains("mode = \"nls\""));
}

#[test]
fn ensemble_subcommand_extends_stored_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "version = 1\noutput = \"e\"\n\n[[experiments]]\nkind = \"ensemble\"\nid = \"base\"\n\
               ensemble = { norm = { kind = \"l3_l6\" }, s = 0.6, points = 8, length = 6.5, t_end = 0.5, frames = 5, p_list = [2, 4] }\n";
    write_config(dir.path(), "c.toml", cfg);
    let run = |q: &str| dlab(&["ensemble", "--stat", "l3_l6", "--draws", q, "--seed", "9", "--config", "c.toml"], dir.path());
    let out = run("20");
    // Twenty draws cannot populate the tail fit, which is a failed check rather than an error.
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let first = json(&dir.path().join("e/l3_l6.json"));
    let v20: Vec<f64> = first["result"]["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(v20.len(), 20);

    let _ = run("40");
    let second = json(&dir.path().join("e/l3_l6.json"));
    let v40: Vec<f64> = second["result"]["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(v40.len(), 40);
    assert_eq!(&v40[..20], &v20[..]);
}

#[test]
fn report_merge_identity_union_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let entry = |id: &str, pass: bool| {
        serde_json::json!({ "id": id, "kind": "verify", "seed": 0, "pass": pass, "config_hash": "00", "artifact": format!("{id}.json") })
    };
    let a = serde_json::json!({ "schema_version": 1, "entries": [entry("a", true), entry("b", true)], "warnings": [] });
    let b = serde_json::json!({ "schema_version": 1, "entries": [entry("b", false), entry("c", true)], "warnings": [] });
    std::fs::write(dir.path().join("a.json"), a.to_string()).unwrap();
    std::fs::write(dir.path().join("b.json"), b.to_string()).unwrap();

    let out = dlab(&["report", "merge", "a.json", "-o", "id.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("id.json")), a);

    let out = dlab(&["report", "merge", "a.json", "b.json", "-o", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate id `b`"));
    let m = json(&dir.path().join("m.json"));
    let entries = m["entries"].as_array().unwrap();
    let ids: Vec<&str> = entries.iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(entries[1]["pass"], true);
    assert_eq!(m["warnings"].as_array().unwrap().len(), 1);

    std::fs::write(dir.path().join("v9.json"), r#"{"schema_version": 9, "entries": []}"#).unwrap();
    let out = dlab(&["report", "merge", "v9.json", "-o", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
