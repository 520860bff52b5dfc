//! On-disk formats.
//!
//! Task sets and schedules are JSON documents with a strict schema:
//! unknown fields are rejected, and parse errors name the offending
//! field path. Every file written by the tools embeds the tool version
//! and the seed that produced it; schedule files additionally embed a
//! hash of the canonical task-set content so downstream commands can
//! detect mismatched inputs.
//!
//! Task-set schema:
//!
//! ```json
//! {
//!   "name": "example",
//!   "one_shot": false,
//!   "power_model": {
//!     "variant": "alpha_law",
//!     "lambda": 1.0, "vth": 0.7, "alpha": 2.0,
//!     "vmin": 1.0, "vmax": 5.0
//!   },
//!   "tasks": [
//!     { "period": 10, "wcec": 200, "bcec": 20.0, "capacitance": 1.0 },
//!     { "period": 15, "wcec": 100, "bcec_ratio": 0.5, "acec": 80.0,
//!       "capacitance": 1.0 }
//!   ],
//!   "meta": { "version": "0.1.0", "seed": 7 }
//! }
//! ```
//!
//! `one_shot`, `vth`, `alpha`, `acec` and `meta` are optional; exactly
//! one of `bcec` / `bcec_ratio` is required per task; `acec` defaults to
//! the midpoint of `[bcec, wcec]`.

use crate::optimizer::{Policy, ScheduleRow, SolveStatus, StaticSchedule};
use crate::power::{ModelVariant, PowerModel};
use crate::taskmodel::{validate_taskset, Frame, Task, TaskSet};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {path}: {detail}")]
    Parse {
        file: String,
        /// JSON field path of the offending value.
        path: String,
        detail: String,
    },
    #[error("{file}: {detail}")]
    Schema { file: String, detail: String },
    #[error("{file}: invalid task set: {report}")]
    InvalidTaskSet { file: String, report: String },
}

fn read(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), FileError> {
    fs::write(path, text).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, FileError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| FileError::Parse {
        file: path.display().to_string(),
        path: e.path().to_string(),
        detail: e.inner().to_string(),
    })
}

/// 64-bit FNV-1a over the canonical serialized content.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------------
// task-set files
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerModelFile {
    variant: ModelVariant,
    lambda: f64,
    #[serde(default)]
    vth: f64,
    #[serde(default = "default_alpha")]
    alpha: f64,
    vmin: f64,
    vmax: f64,
}

fn default_alpha() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    period: u64,
    wcec: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bcec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bcec_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acec: Option<f64>,
    capacitance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TasksetFile {
    name: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    one_shot: bool,
    power_model: PowerModelFile,
    tasks: Vec<TaskFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<FileMeta>,
}

fn to_dto(ts: &TaskSet, model: &PowerModel, meta: Option<FileMeta>) -> TasksetFile {
    TasksetFile {
        name: ts.name.clone(),
        one_shot: ts.frame == Frame::OneShot,
        power_model: PowerModelFile {
            variant: model.variant(),
            lambda: model.lambda(),
            vth: model.v_th(),
            alpha: model.alpha(),
            vmin: model.v_min(),
            vmax: model.v_max(),
        },
        tasks: ts
            .tasks
            .iter()
            .map(|t| TaskFile {
                period: t.period,
                wcec: t.wcec,
                bcec: Some(t.bcec),
                bcec_ratio: None,
                acec: Some(t.acec),
                capacitance: t.capacitance,
            })
            .collect(),
        meta,
    }
}

fn from_dto(path: &Path, file: TasksetFile) -> Result<(TaskSet, PowerModel), FileError> {
    let schema_err = |detail: String| FileError::Schema {
        file: path.display().to_string(),
        detail,
    };
    let model = PowerModel::from_parts(
        file.power_model.variant,
        file.power_model.lambda,
        file.power_model.vth,
        file.power_model.alpha,
        file.power_model.vmin,
        file.power_model.vmax,
    )
    .map_err(|e| schema_err(format!("power_model: {e}")))?;

    let mut tasks = Vec::with_capacity(file.tasks.len());
    for (i, t) in file.tasks.iter().enumerate() {
        let bcec = match (t.bcec, t.bcec_ratio) {
            (Some(b), None) => b,
            (None, Some(r)) => r * t.wcec as f64,
            _ => {
                return Err(schema_err(format!(
                    "tasks[{i}]: exactly one of bcec / bcec_ratio is required"
                )))
            }
        };
        let mut task = Task::new(t.period, t.wcec, bcec, t.capacitance);
        if let Some(acec) = t.acec {
            task = task.with_acec(acec);
        }
        tasks.push(task);
    }

    let ts = if file.one_shot {
        TaskSet::one_shot(file.name, tasks)
    } else {
        TaskSet::periodic(file.name, tasks)
    }
    .map_err(|e| schema_err(e.to_string()))?;

    let report = validate_taskset(&ts);
    if !report.is_valid() {
        return Err(FileError::InvalidTaskSet {
            file: path.display().to_string(),
            report: report.to_string(),
        });
    }
    Ok((ts, model))
}

pub fn load_taskset(path: impl AsRef<Path>) -> Result<(TaskSet, PowerModel), FileError> {
    let path = path.as_ref();
    let text = read(path)?;
    let file: TasksetFile = parse(path, &text)?;
    from_dto(path, file)
}

pub fn save_taskset(
    ts: &TaskSet,
    model: &PowerModel,
    seed: Option<u64>,
    path: impl AsRef<Path>,
) -> Result<(), FileError> {
    let meta = FileMeta {
        version: Some(TOOL_VERSION.to_string()),
        seed,
    };
    let dto = to_dto(ts, model, Some(meta));
    let mut text = serde_json::to_string_pretty(&dto).expect("serializable");
    text.push('\n');
    write(path.as_ref(), &text)
}

/// Hash of the canonical task-set content (name, frame, model, tasks) —
/// independent of file formatting and of the meta block.
pub fn taskset_hash(ts: &TaskSet, model: &PowerModel) -> String {
    let canonical = serde_json::to_string(&to_dto(ts, model, None)).expect("serializable");
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}

// ---------------------------------------------------------------------
// schedule files
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleMeta {
    version: String,
    seed: u64,
    taskset_hash: String,
    policy: Policy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    meta: ScheduleMeta,
    objective: f64,
    status: SolveStatus,
    residual_max: f64,
    rows: Vec<ScheduleRowFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleRowFile {
    task: usize,
    instance: usize,
    part: usize,
    order: usize,
    te: f64,
    w_hat: f64,
    ts: f64,
    w_bar: f64,
    v_bar: f64,
    v_hat: f64,
}

pub fn save_schedule(
    schedule: &StaticSchedule,
    taskset_hash: &str,
    path: impl AsRef<Path>,
) -> Result<(), FileError> {
    let file = ScheduleFile {
        meta: ScheduleMeta {
            version: TOOL_VERSION.to_string(),
            seed: schedule.seed,
            taskset_hash: taskset_hash.to_string(),
            policy: schedule.policy,
        },
        objective: schedule.objective,
        status: schedule.status,
        residual_max: schedule.residual_max,
        rows: schedule
            .rows
            .iter()
            .map(|r| ScheduleRowFile {
                task: r.task,
                instance: r.instance,
                part: r.part,
                order: r.order,
                te: r.te,
                w_hat: r.w_hat,
                ts: r.ts,
                w_bar: r.w_bar,
                v_bar: r.v_bar,
                v_hat: r.v_hat,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("serializable");
    text.push('\n');
    write(path.as_ref(), &text)
}

/// Load a schedule file; returns the schedule and the embedded hash of
/// the task set it was solved for.
pub fn load_schedule(path: impl AsRef<Path>) -> Result<(StaticSchedule, String), FileError> {
    let path = path.as_ref();
    let text = read(path)?;
    let file: ScheduleFile = parse(path, &text)?;
    let mut rows: Vec<ScheduleRow> = file
        .rows
        .into_iter()
        .map(|r| ScheduleRow {
            task: r.task,
            instance: r.instance,
            part: r.part,
            order: r.order,
            te: r.te,
            w_hat: r.w_hat,
            ts: r.ts,
            w_bar: r.w_bar,
            v_bar: r.v_bar,
            v_hat: r.v_hat,
        })
        .collect();
    rows.sort_by_key(|r| r.order);
    if rows.iter().enumerate().any(|(i, r)| r.order != i) {
        return Err(FileError::Schema {
            file: path.display().to_string(),
            detail: "rows must carry each order index 0..n exactly once".into(),
        });
    }
    Ok((
        StaticSchedule {
            policy: file.meta.policy,
            rows,
            objective: file.objective,
            status: file.status,
            residual_max: file.residual_max,
            seed: file.meta.seed,
        },
        file.meta.taskset_hash,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskmodel::Task;

    fn sample() -> (TaskSet, PowerModel) {
        let ts = TaskSet::periodic(
            "p346",
            vec![
                Task::new(3, 6, 3.0, 1.0),
                Task::new(4, 8, 4.0, 1.0),
                Task::new(6, 12, 6.0, 1.5),
            ],
        )
        .unwrap();
        let model = PowerModel::alpha_law(1.0, 0.7, 2.0, 1.0, 5.0).unwrap();
        (ts, model)
    }

    #[test]
    fn round_trip() {
        let (ts, model) = sample();
        let dir = std::env::temp_dir().join("voltsched-files-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.json");
        save_taskset(&ts, &model, Some(11), &path).unwrap();
        let (ts2, model2) = load_taskset(&path).unwrap();
        assert_eq!(ts, ts2);
        assert_eq!(model, model2);
    }

    #[test]
    fn missing_field_names_path() {
        let dir = std::env::temp_dir().join("voltsched-files-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("missing.json");
        fs::write(
            &path,
            r#"{"name":"x","power_model":{"variant":"inverse_law","lambda":1.0,"vmin":0.7,"vmax":5.0},
               "tasks":[{"wcec":10,"bcec":5.0,"capacitance":1.0}]}"#,
        )
        .unwrap();
        let err = load_taskset(&path).unwrap_err().to_string();
        assert!(err.contains("tasks[0]"), "{err}");
        assert!(err.contains("period"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let dir = std::env::temp_dir().join("voltsched-files-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("unknown.json");
        fs::write(
            &path,
            r#"{"name":"x","power_model":{"variant":"inverse_law","lambda":1.0,"vmin":0.7,"vmax":5.0},
               "tasks":[{"period":4,"wcec":10,"bcec":5.0,"capacitance":1.0,"priority":3}]}"#,
        )
        .unwrap();
        let err = load_taskset(&path).unwrap_err().to_string();
        assert!(err.contains("priority"), "{err}");
    }

    #[test]
    fn bcec_xor_ratio_required() {
        let dir = std::env::temp_dir().join("voltsched-files-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("xor.json");
        fs::write(
            &path,
            r#"{"name":"x","power_model":{"variant":"inverse_law","lambda":1.0,"vmin":0.7,"vmax":5.0},
               "tasks":[{"period":4,"wcec":10,"capacitance":1.0}]}"#,
        )
        .unwrap();
        let err = load_taskset(&path).unwrap_err().to_string();
        assert!(err.contains("bcec"), "{err}");
    }

    #[test]
    fn hash_ignores_meta_and_formatting() {
        let (ts, model) = sample();
        let h1 = taskset_hash(&ts, &model);
        let dir = std::env::temp_dir().join("voltsched-files-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("hash.json");
        save_taskset(&ts, &model, Some(99), &path).unwrap();
        let (ts2, model2) = load_taskset(&path).unwrap();
        assert_eq!(h1, taskset_hash(&ts2, &model2));
    }

    #[test]
    fn bcec_ratio_resolves() {
        let dir = std::env::temp_dir().join("voltsched-files-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ratio.json");
        fs::write(
            &path,
            r#"{"name":"x","power_model":{"variant":"inverse_law","lambda":1.0,"vmin":0.7,"vmax":5.0},
               "tasks":[{"period":4,"wcec":10,"bcec_ratio":0.9,"capacitance":1.0}]}"#,
        )
        .unwrap();
        let (ts, _) = load_taskset(&path).unwrap();
        assert!((ts.tasks[0].bcec - 9.0).abs() < 1e-12);
        assert!((ts.tasks[0].acec - 9.5).abs() < 1e-12);
    }
}
