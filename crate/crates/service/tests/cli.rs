use std::path::Path;
use std::process::{Command, Output};

fn propagator(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propagator"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("PROPAGATOR_CONFIG")
        .output()
        .unwrap()
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout).lines().map(str::to_owned).collect()
}

fn seeded() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = propagator(dir.path(), &["synth-corpus", "--reference-page", "pg-ref1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn search_lists_one_row_per_region() {
    let dir = seeded();
    let out = propagator(dir.path(), &["search", "pg-ref1"]);
    assert!(out.status.success());
    let rows = stdout_lines(&out);
    assert_eq!(rows.len(), 19);
    assert!(rows.iter().all(|r| r.contains("\tok\t")));

    let out = propagator(dir.path(), &["search", "pg-ref1", "--must-not", "region_2"]);
    let rows = stdout_lines(&out);
    assert_eq!(rows.len(), 18);
    assert!(rows.iter().all(|r| !r.contains("region_2-")));
}

#[test]
fn unknown_page_exits_2() {
    let dir = seeded();
    let out = propagator(dir.path(), &["search", "pg-nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = propagator(dir.path(), &["propagate", "pg-nope", "--rank", "1", "--yes"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn propagate_needs_confirmation() {
    let dir = seeded();
    let out = propagator(dir.path(), &["propagate", "pg-ref1", "--rank", "1"]);
    assert!(!out.status.success());
    assert!(stdout_lines(&out).is_empty());
    assert_eq!(stdout_lines(&propagator(dir.path(), &["search", "pg-ref1"])).len(), 19);
}

#[test]
fn propagate_rank_then_all_then_nothing() {
    let dir = seeded();
    let out = propagator(dir.path(), &["propagate", "pg-ref1", "--rank", "1", "--yes"]);
    assert!(out.status.success());
    assert_eq!(stdout_lines(&out).len(), 1);

    let out = propagator(dir.path(), &["propagate", "pg-ref1", "--all-validated", "--yes"]);
    assert!(out.status.success());
    let ids = stdout_lines(&out);
    assert_eq!(ids.len(), 18);
    assert!(ids.iter().all(|id| id.starts_with("pg-")));

    let out = propagator(dir.path(), &["propagate", "pg-ref1", "--all-validated", "--yes"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout_lines(&out).is_empty());
}

#[test]
fn propagate_all_on_fresh_store() {
    let dir = seeded();
    let out = propagator(dir.path(), &["propagate", "pg-ref1", "--all-validated", "--yes"]);
    assert_eq!(stdout_lines(&out).len(), 19);
}

#[test]
fn index_and_records() {
    let dir = seeded();
    let status = stdout_lines(&propagator(dir.path(), &["index", "status"]));
    let rebuilt = stdout_lines(&propagator(dir.path(), &["index", "rebuild"]));
    assert_eq!(status, rebuilt);
    assert!(status[0].contains("streams 150"));

    let out = propagator(dir.path(), &["vis", "add", "vis-line", "line_v1"]);
    assert_eq!(stdout_lines(&out), vec!["vis-line"]);
    let out = propagator(
        dir.path(),
        &["page", "add", "--vis", "vis-line", "--data", "ds-region_3-home", "--id", "pg-line3", "--reference"],
    );
    assert_eq!(stdout_lines(&out), vec!["pg-line3"]);
    let out = propagator(dir.path(), &["page", "add", "--vis", "vis-line", "--data", "ds-missing"]);
    assert!(!out.status.success());
}
