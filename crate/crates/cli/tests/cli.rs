//! End-to-end tests of the command-line surface: exit codes, output
//! determinism, and the bundled single-frame example.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voltsched"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("voltsched-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(mut cmd: Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_is_deterministic_and_writes_manifest() {
    let dir_a = tmp_dir("gen-a");
    let dir_b = tmp_dir("gen-b");
    for dir in [&dir_a, &dir_b] {
        let out = run({
            let mut c = bin();
            c.args([
                "gen", "--tasks", "5", "--ratio", "0.1", "--count", "3", "--seed", "7", "--out",
            ])
            .arg(dir);
            c
        });
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let names: Vec<String> = {
        let mut v: Vec<String> = std::fs::read_dir(&dir_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names.len(), 4, "3 task sets + manifest: {names:?}");
    assert!(names.contains(&"manifest.json".to_string()));
    for name in &names {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn gen_rejects_bad_ratio() {
    let out = run({
        let mut c = bin();
        c.args(["gen", "--tasks", "3", "--ratio", "1.5", "--count", "1"]);
        c
    });
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_and_simulate_the_bundled_example() {
    let dir = tmp_dir("solve");
    let schedule = dir.join("mot.acs.json");

    let out = run({
        let mut c = bin();
        c.args(["solve"])
            .arg(data("single-frame.json"))
            .args(["--policy", "acs", "--out"])
            .arg(&schedule);
        c
    });
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("policy=acs"));

    // worst-case scenario on the solved schedule: bounded by the verifier
    let out = run({
        let mut c = bin();
        c.args(["simulate"])
            .arg(&schedule)
            .arg(data("single-frame.json"))
            .args(["--fixed", "wcec"]);
        c
    });
    assert!(out.status.success());
    let csv = stdout(&out);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "acs");
    let misses: usize = row[4].parse().unwrap();
    assert_eq!(misses, 0);
}

#[test]
fn known_energies_from_the_handwritten_schedule() {
    // average-case run of the deadline end-time schedule
    let out = run({
        let mut c = bin();
        c.args(["simulate"])
            .arg(data("single-frame.deadline-schedule.json"))
            .arg(data("single-frame.json"))
            .args(["--fixed", "acec"]);
        c
    });
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout(&out);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let energy: f64 = row[2].parse().unwrap();
    assert!((energy - 120.0).abs() < 0.5, "acec energy {energy}");

    // worst-case run of the same schedule
    let out = run({
        let mut c = bin();
        c.args(["simulate"])
            .arg(data("single-frame.deadline-schedule.json"))
            .arg(data("single-frame.json"))
            .args(["--fixed", "wcec"]);
        c
    });
    let csv = stdout(&out);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let energy: f64 = row[2].parse().unwrap();
    let misses: usize = row[4].parse().unwrap();
    assert!((energy - 720.0).abs() < 0.5, "wcec energy {energy}");
    assert_eq!(misses, 0);

    // verify accepts it
    let out = run({
        let mut c = bin();
        c.args(["verify"])
            .arg(data("single-frame.deadline-schedule.json"))
            .arg(data("single-frame.json"));
        c
    });
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_rejects_mismatched_taskset() {
    let out = run({
        let mut c = bin();
        c.args(["simulate"])
            .arg(data("single-frame.deadline-schedule.json"))
            .arg(data("periodic.json"))
            .args(["--fixed", "acec"]);
        c
    });
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unschedulable_cap_exits_3() {
    // same system, V_max capped at 1 V: even the first deadline is
    // impossible in the worst case
    let dir = tmp_dir("cap");
    let capped = dir.join("capped.json");
    let text = std::fs::read_to_string(data("single-frame.json")).unwrap();
    std::fs::write(&capped, text.replace("\"vmax\": 5.0", "\"vmax\": 1.0")).unwrap();

    let out = run({
        let mut c = bin();
        c.args(["solve"]).arg(&capped).args(["--policy", "acs"]);
        c
    });
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unschedulable"), "{err}");
}

#[test]
fn experiment_runs_and_is_reproducible() {
    let dir_a = tmp_dir("exp-a");
    let dir_b = tmp_dir("exp-b");
    let plan = dir_a.join("plan.json");
    std::fs::write(
        &plan,
        r#"{ "cells": [ { "n_tasks": 3, "ratio": 0.1 } ],
            "sets_per_cell": 2, "trials_per_set": 50, "seed": 3,
            "utilization": 0.7, "solver_starts": 8 }"#,
    )
    .unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = run({
            let mut c = bin();
            c.args(["experiment"]).arg(&plan).args(["--strict", "--out"]).arg(dir);
            c
        });
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir_a.join("report.csv")).unwrap();
    let b = std::fs::read(dir_b.join("report.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir_a.join("improvement_n3.csv").exists());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# voltsched "), "meta line missing: {text}");
    assert!(text.contains("n_tasks,ratio,sets,trials,acs_mean,wcs_mean,improvement_pct,misses,failures"));
}

#[test]
fn simulate_is_deterministic_across_runs() {
    let dir = tmp_dir("sim-det");
    let schedule = dir.join("mot.wcs.json");
    let out = run({
        let mut c = bin();
        c.args(["solve"])
            .arg(data("single-frame.json"))
            .args(["--policy", "wcs", "--out"])
            .arg(&schedule);
        c
    });
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let simulate = || {
        let out = run({
            let mut c = bin();
            c.args(["simulate"])
                .arg(&schedule)
                .arg(data("single-frame.json"))
                .args(["--trials", "1000", "--seed", "21"]);
            c
        });
        assert!(out.status.success());
        stdout(&out)
    };
    assert_eq!(simulate(), simulate());
}

#[test]
fn simulate_writes_segment_trace() {
    let dir = tmp_dir("trace");
    let trace = dir.join("trace.csv");
    let out = run({
        let mut c = bin();
        c.args(["simulate"])
            .arg(data("single-frame.deadline-schedule.json"))
            .arg(data("single-frame.json"))
            .args(["--fixed", "acec", "--trace"])
            .arg(&trace);
        c
    });
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,task,instance,part,start,voltage,cycles,duration,energy"
    );
    assert_eq!(lines.count(), 3, "one row per executed segment");
}
