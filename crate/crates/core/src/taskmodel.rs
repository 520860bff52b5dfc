//! Core domain types for periodic task sets.
//!
//! Tasks are frame-based and rate-monotonic: the task with the shorter
//! period has the higher priority, the relative deadline equals the
//! period, and the frame of length `L` (the hyper-period) repeats
//! forever. Within a task set, tasks are ordered by priority — index 1
//! is the highest — and equal periods keep their input order.
//!
//! Time is an integer grid for releases and deadlines; execution times
//! and cycle counts downstream are real-valued.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// One periodic task. Cycle quantities satisfy `0 ≤ bcec ≤ acec ≤ wcec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Period and relative deadline, in integer time units.
    pub period: u64,
    /// Worst-case execution cycles.
    pub wcec: u64,
    /// Best-case execution cycles.
    pub bcec: f64,
    /// Average-case execution cycles.
    pub acec: f64,
    /// Effective switching capacitance (energy per cycle per volt²).
    pub capacitance: f64,
}

impl Task {
    /// Task with the average-case cycles defaulting to the midpoint of
    /// `[bcec, wcec]`, matching symmetric workload sampling.
    pub fn new(period: u64, wcec: u64, bcec: f64, capacitance: f64) -> Self {
        Task {
            period,
            wcec,
            bcec,
            acec: (bcec + wcec as f64) / 2.0,
            capacitance,
        }
    }

    pub fn with_acec(mut self, acec: f64) -> Self {
        self.acec = acec;
        self
    }
}

/// Whether the frame repeats or runs once.
///
/// `Periodic` is the normal case: the hyper-period is the LCM of all
/// periods and every task releases `L / P_i` instances. `OneShot` models
/// a single frame in which every task releases exactly one instance at
/// `t = 0` with deadline `P_i`; it exists so that single-frame systems
/// (all releases at zero, staggered deadlines) can be expressed without
/// inventing fictitious later releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Periodic,
    OneShot,
}

/// A priority-ordered task set plus its hyper-period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub name: String,
    pub tasks: Vec<Task>,
    pub frame: Frame,
    hyper_period: u64,
}

#[derive(Debug, Error)]
pub enum TaskModelError {
    #[error("task set must contain at least one task")]
    Empty,
    #[error("task {task} has zero period")]
    ZeroPeriod { task: usize },
    #[error("hyper-period too large: LCM of periods overflows the time-unit type")]
    HyperPeriodTooLarge,
}

/// One released instance of a task: window `[release, deadline)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    /// 1-based task index (priority rank).
    pub task: usize,
    /// 1-based instance index within the frame.
    pub instance: usize,
    pub release: u64,
    pub deadline: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Least common multiple of the given periods.
pub fn hyperperiod(periods: &[u64]) -> Result<u64, TaskModelError> {
    if periods.is_empty() {
        return Err(TaskModelError::Empty);
    }
    let mut l: u64 = 1;
    for (idx, &p) in periods.iter().enumerate() {
        if p == 0 {
            return Err(TaskModelError::ZeroPeriod { task: idx + 1 });
        }
        let g = gcd(l, p);
        l = l
            .checked_mul(p / g)
            .ok_or(TaskModelError::HyperPeriodTooLarge)?;
    }
    Ok(l)
}

impl TaskSet {
    /// Periodic task set; the hyper-period is the LCM of all periods.
    pub fn periodic(name: impl Into<String>, tasks: Vec<Task>) -> Result<Self, TaskModelError> {
        let periods: Vec<u64> = tasks.iter().map(|t| t.period).collect();
        let hyper_period = hyperperiod(&periods)?;
        Ok(TaskSet {
            name: name.into(),
            tasks,
            frame: Frame::Periodic,
            hyper_period,
        })
    }

    /// Single-frame task set: one instance per task, all released at 0.
    pub fn one_shot(name: impl Into<String>, tasks: Vec<Task>) -> Result<Self, TaskModelError> {
        if tasks.is_empty() {
            return Err(TaskModelError::Empty);
        }
        if let Some(idx) = tasks.iter().position(|t| t.period == 0) {
            return Err(TaskModelError::ZeroPeriod { task: idx + 1 });
        }
        let hyper_period = tasks.iter().map(|t| t.period).max().unwrap();
        Ok(TaskSet {
            name: name.into(),
            tasks,
            frame: Frame::OneShot,
            hyper_period,
        })
    }

    pub fn hyper_period(&self) -> u64 {
        self.hyper_period
    }

    /// Number of instances task `i` (1-based) releases per frame.
    pub fn instance_count(&self, task: usize) -> u64 {
        match self.frame {
            Frame::Periodic => self.hyper_period / self.tasks[task - 1].period,
            Frame::OneShot => 1,
        }
    }
}

/// All task instances of one frame, sorted by (release, priority).
pub fn expand_instances(ts: &TaskSet) -> Vec<TaskInstance> {
    let mut out = Vec::new();
    for (idx, task) in ts.tasks.iter().enumerate() {
        let n = ts.instance_count(idx + 1);
        for j in 1..=n {
            out.push(TaskInstance {
                task: idx + 1,
                instance: j as usize,
                release: (j - 1) * task.period,
                deadline: j * task.period,
            });
        }
    }
    out.sort_by_key(|inst| (inst.release, inst.task));
    out
}

/// One violated task-set invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroPeriod { task: usize },
    ZeroWcec { task: usize },
    NonPositiveCapacitance { task: usize, value: f64 },
    /// `0 ≤ bcec ≤ acec ≤ wcec` does not hold.
    CycleOrder { task: usize, detail: String },
    /// Periods must be non-decreasing with the priority index.
    PriorityOrder { task: usize },
    EmptyTaskSet,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroPeriod { task } => write!(f, "task {task}: period must be positive"),
            Violation::ZeroWcec { task } => write!(f, "task {task}: wcec must be positive"),
            Violation::NonPositiveCapacitance { task, value } => {
                write!(f, "task {task}: capacitance must be positive (got {value})")
            }
            Violation::CycleOrder { task, detail } => {
                write!(f, "task {task}: cycle ordering violated ({detail})")
            }
            Violation::PriorityOrder { task } => write!(
                f,
                "task {task}: priority order violated (shorter period must come first)"
            ),
            Violation::EmptyTaskSet => write!(f, "task set is empty"),
        }
    }
}

/// Everything wrong with a task set; empty iff the set is valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check every task-set invariant and report all violations found.
pub fn validate_taskset(ts: &TaskSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    if ts.tasks.is_empty() {
        report.violations.push(Violation::EmptyTaskSet);
        return report;
    }
    for (idx, task) in ts.tasks.iter().enumerate() {
        let i = idx + 1;
        if task.period == 0 {
            report.violations.push(Violation::ZeroPeriod { task: i });
        }
        if task.wcec == 0 {
            report.violations.push(Violation::ZeroWcec { task: i });
        }
        if !(task.capacitance > 0.0) {
            report.violations.push(Violation::NonPositiveCapacitance {
                task: i,
                value: task.capacitance,
            });
        }
        let w = task.wcec as f64;
        if !(0.0 <= task.bcec && task.bcec <= task.acec && task.acec <= w) {
            report.violations.push(Violation::CycleOrder {
                task: i,
                detail: format!(
                    "bcec {} / acec {} / wcec {} must be ordered",
                    task.bcec, task.acec, task.wcec
                ),
            });
        }
        if idx > 0 && ts.tasks[idx - 1].period > task.period {
            report.violations.push(Violation::PriorityOrder { task: i });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hyperperiod_examples() {
        assert_eq!(hyperperiod(&[3, 4, 6]).unwrap(), 12);
        assert_eq!(hyperperiod(&[5]).unwrap(), 5);
    }

    #[test]
    fn hyperperiod_matches_scanning_oracle() {
        // Oracle: the smallest t > 0 that every period divides, found by
        // scanning multiples of the largest period.
        fn smallest_common_multiple(periods: &[u64]) -> u64 {
            let max = *periods.iter().max().unwrap();
            let mut t = max;
            loop {
                if periods.iter().all(|&p| t % p == 0) {
                    return t;
                }
                t += max;
            }
        }
        for periods in [
            vec![2, 3, 5, 7],
            vec![3, 4, 6],
            vec![10, 15, 20],
            vec![12, 12, 8],
        ] {
            assert_eq!(
                hyperperiod(&periods).unwrap(),
                smallest_common_multiple(&periods),
                "periods {periods:?}"
            );
        }
        assert_eq!(hyperperiod(&[2, 3, 5, 7]).unwrap(), 210);
    }

    #[test]
    fn hyperperiod_errors() {
        assert!(matches!(hyperperiod(&[]), Err(TaskModelError::Empty)));
        assert!(matches!(
            hyperperiod(&[4, 0]),
            Err(TaskModelError::ZeroPeriod { task: 2 })
        ));
        assert!(matches!(
            hyperperiod(&[u64::MAX - 1, u64::MAX - 3]),
            Err(TaskModelError::HyperPeriodTooLarge)
        ));
    }

    fn set_346() -> TaskSet {
        TaskSet::periodic(
            "p346",
            vec![
                Task::new(3, 6, 3.0, 1.0),
                Task::new(4, 8, 4.0, 1.0),
                Task::new(6, 12, 6.0, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn expand_instances_examples() {
        let ts = set_346();
        assert_eq!(ts.hyper_period(), 12);
        let insts = expand_instances(&ts);
        assert_eq!(insts.len(), 9); // 4 + 3 + 2

        let t2: Vec<_> = insts.iter().filter(|i| i.task == 2).collect();
        assert_eq!(
            t2.iter().map(|i| i.release).collect::<Vec<_>>(),
            vec![0, 4, 8]
        );
        assert_eq!(
            t2.iter().map(|i| i.deadline).collect::<Vec<_>>(),
            vec![4, 8, 12]
        );

        let single = TaskSet::periodic("one", vec![Task::new(6, 10, 5.0, 1.0)]).unwrap();
        let insts = expand_instances(&single);
        assert_eq!(insts.len(), 1);
        assert_eq!((insts[0].release, insts[0].deadline), (0, 6));
    }

    #[test]
    fn one_shot_expansion() {
        let ts = TaskSet::one_shot(
            "mot",
            vec![
                Task::new(10, 20, 10.0, 1.0).with_acec(10.0),
                Task::new(15, 20, 10.0, 1.0).with_acec(10.0),
                Task::new(20, 20, 10.0, 1.0).with_acec(10.0),
            ],
        )
        .unwrap();
        assert_eq!(ts.hyper_period(), 20);
        let insts = expand_instances(&ts);
        assert_eq!(insts.len(), 3);
        assert!(insts.iter().all(|i| i.release == 0));
        assert_eq!(
            insts.iter().map(|i| i.deadline).collect::<Vec<_>>(),
            vec![10, 15, 20]
        );
    }

    #[test]
    fn validation_well_formed() {
        assert!(validate_taskset(&set_346()).is_valid());
    }

    #[test]
    fn validation_cycle_order() {
        let mut ts = set_346();
        ts.tasks[1].acec = 100.0; // acec > wcec
        let report = validate_taskset(&ts);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::CycleOrder { task: 2, .. }
        ));
    }

    #[test]
    fn validation_priority_order() {
        let ts = TaskSet::periodic(
            "bad",
            vec![Task::new(6, 5, 1.0, 1.0), Task::new(3, 5, 1.0, 1.0)],
        )
        .unwrap();
        let report = validate_taskset(&ts);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PriorityOrder { task: 2 })));
    }

    #[test]
    fn acec_defaults_to_midpoint() {
        let t = Task::new(10, 30, 10.0, 1.0);
        assert_eq!(t.acec, 20.0);
    }

    proptest! {
        #[test]
        fn expansion_counts_and_windows(
            periods in proptest::collection::vec(1u64..=12, 1..=4),
        ) {
            let tasks: Vec<Task> = {
                let mut ps = periods.clone();
                ps.sort_unstable();
                ps.iter().map(|&p| Task::new(p, 4, 2.0, 1.0)).collect()
            };
            let ts = TaskSet::periodic("prop", tasks).unwrap();
            let insts = expand_instances(&ts);
            let expected: u64 = ts.tasks.iter().map(|t| ts.hyper_period() / t.period).sum();
            prop_assert_eq!(insts.len() as u64, expected);
            for inst in &insts {
                let p = ts.tasks[inst.task - 1].period;
                prop_assert_eq!(inst.deadline - inst.release, p);
                prop_assert_eq!(inst.release, (inst.instance as u64 - 1) * p);
                prop_assert!(inst.deadline <= ts.hyper_period());
            }
        }
    }
}
