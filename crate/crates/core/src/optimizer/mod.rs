//! Static schedule optimization.
//!
//! The problem: choose an end time `te` and a worst-case budget `ŵ` for
//! every sub-instance of the fully preemptive schedule so that the
//! predicted energy of the average-case run is minimal while the
//! worst-case run still meets every end time within the voltage range.
//! Only `(te, ŵ)` are handed to the online phase; start times, average
//! workloads and both voltages are diagnostics implied by them.
//!
//! [`solve_acs`] optimizes against the average workloads; [`solve_wcs`]
//! is the baseline that assumes the worst case everywhere. Both produce
//! a [`StaticSchedule`] whose rows satisfy the full constraint system,
//! re-checkable at any time with [`evaluate_residuals`].

mod eval;
mod fill;
mod residual;
mod solve;

pub use fill::{average_fill, FillError};
pub use residual::{evaluate_residuals, ConstraintResidual, ResidualReport};

use crate::fps::FpSchedule;
use crate::power::PowerModel;
use crate::taskmodel::TaskSet;
use eval::ReducedProblem;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// How many constraints of each family the problem instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub release_bounds: usize,
    pub deadline_bounds: usize,
    pub voltage_ranges: usize,
    pub end_time_couplings: usize,
    pub worst_case_windows: usize,
    pub slack_bounds: usize,
    pub average_workload_sums: usize,
    pub budget_sums: usize,
    pub budget_bounds: usize,
    pub fill_rules: usize,
}

/// The scheduling problem: the fully preemptive schedule, the task data
/// and the power model, together with the constraint-system shape.
///
/// Six quantities per sub-instance are determined (`ts`, `te`, `w̄`, `ŵ`,
/// `v̄`, `v̂`); the solver reduces them to `te` and `ŵ` and recovers the
/// rest in closed form.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    fps: FpSchedule,
    taskset: TaskSet,
    model: PowerModel,
    counts: ConstraintCounts,
}

/// Assemble the problem record for a task set.
pub fn build_nlp(fps: &FpSchedule, taskset: &TaskSet, model: &PowerModel) -> NlpProblem {
    let n = fps.len();
    let m = fps.instances().len();
    NlpProblem {
        fps: fps.clone(),
        taskset: taskset.clone(),
        model: model.clone(),
        counts: ConstraintCounts {
            release_bounds: n,
            deadline_bounds: n,
            voltage_ranges: n,
            end_time_couplings: n,
            worst_case_windows: n,
            slack_bounds: n,
            average_workload_sums: m,
            budget_sums: m,
            budget_bounds: n,
            fill_rules: n,
        },
    }
}

impl NlpProblem {
    pub fn fps(&self) -> &FpSchedule {
        &self.fps
    }
    pub fn taskset(&self) -> &TaskSet {
        &self.taskset
    }
    pub fn model(&self) -> &PowerModel {
        &self.model
    }
    pub fn counts(&self) -> &ConstraintCounts {
        &self.counts
    }
    /// Free variables per sub-instance before reduction.
    pub fn variables_per_sub_instance(&self) -> usize {
        6
    }
    pub fn sub_instance_count(&self) -> usize {
        self.fps.len()
    }
}

/// Which workload assumption a schedule was optimized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Average-case-aware: average energy objective, worst-case constraints.
    Acs,
    /// Worst-case-only baseline.
    Wcs,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Acs => "acs",
            Policy::Wcs => "wcs",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-sub-instance result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub task: usize,
    pub instance: usize,
    pub part: usize,
    pub order: usize,
    /// End time handed to the online phase.
    pub te: f64,
    /// Worst-case budget handed to the online phase.
    pub w_hat: f64,
    /// Diagnostic: average-case start time.
    pub ts: f64,
    /// Diagnostic: average workload executed here.
    pub w_bar: f64,
    /// Diagnostic: voltage of the average-case run.
    pub v_bar: f64,
    /// Diagnostic: voltage of the worst-case run.
    pub v_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Converged with integer budgets.
    Converged,
    /// Converged, but budget rounding was not restorable; budgets are
    /// reported as the continuous optimum.
    ConvergedContinuousBudgets,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Converged => f.write_str("converged"),
            SolveStatus::ConvergedContinuousBudgets => {
                f.write_str("converged (continuous budgets)")
            }
        }
    }
}

/// The static schedule: one row per sub-instance in total order, plus
/// solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSchedule {
    pub policy: Policy,
    pub rows: Vec<ScheduleRow>,
    /// Predicted average energy (the objective value).
    pub objective: f64,
    pub status: SolveStatus,
    /// Largest relative constraint residual of the emitted rows.
    pub residual_max: f64,
    pub seed: u64,
}

impl StaticSchedule {
    pub fn end_times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.te).collect()
    }
    pub fn budgets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.w_hat).collect()
    }
}

/// Why an instance cannot be scheduled.
#[derive(Debug, Clone)]
pub struct DeadlineMiss {
    pub task: usize,
    pub instance: usize,
    pub finish: f64,
    pub deadline: f64,
}

/// Diagnosis attached to a failed solve.
#[derive(Debug, Clone, Default)]
pub struct InfeasibilityReport {
    /// Instances that miss their deadline even with every task at its
    /// worst case and the processor pinned at `V_max`. Non-empty means
    /// the task set itself is unschedulable.
    pub unschedulable_at_vmax: Vec<DeadlineMiss>,
    /// Best constraint violation over all starts (absolute, time units).
    pub best_violation: f64,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unschedulable_at_vmax.is_empty() {
            write!(
                f,
                "no feasible schedule found (best constraint violation {:.3e})",
                self.best_violation
            )
        } else {
            write!(f, "task set unschedulable even at V_max:")?;
            for m in &self.unschedulable_at_vmax {
                write!(
                    f,
                    " instance ({},{}) finishes at {:.4} past deadline {}",
                    m.task, m.instance, m.finish, m.deadline
                )?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("{0}")]
    Infeasible(InfeasibilityReport),
    #[error("schedule must cover every sub-instance ({expected} rows, got {got})")]
    RowMismatch { expected: usize, got: usize },
}

/// Solver knobs. Identical options and seed give bit-identical output.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Number of multi-start points.
    pub starts: usize,
    pub seed: u64,
    /// Descent iterations per start (scaled up automatically for large
    /// problems).
    pub max_iters: usize,
    /// Round budgets to integer cycles for reporting.
    pub round_budgets: bool,
    /// Run the multi-starts on the rayon pool. Results are identical
    /// either way.
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            starts: 16,
            seed: 0,
            max_iters: 800,
            round_budgets: true,
            parallel: true,
        }
    }
}

/// Solve the average-case-aware problem.
pub fn solve_acs(problem: &NlpProblem, options: &SolveOptions) -> Result<StaticSchedule, SolveError> {
    solve::run(problem, options, Policy::Acs)
}

/// Solve the worst-case-only baseline: the same problem with every
/// average workload replaced by the worst case. Best-case cycles are
/// untouched, so simulation against the original task set is unaffected.
pub fn solve_wcs(
    fps: &FpSchedule,
    taskset: &TaskSet,
    model: &PowerModel,
    options: &SolveOptions,
) -> Result<StaticSchedule, SolveError> {
    let problem = build_nlp(fps, taskset, model);
    solve::run(&problem, options, Policy::Wcs)
}

/// The task-set copy a WCS schedule's constraint system refers to
/// (average workload pinned to the worst case).
pub fn wcs_taskset(taskset: &TaskSet) -> TaskSet {
    let mut ts = taskset.clone();
    for t in &mut ts.tasks {
        t.acec = t.wcec as f64;
    }
    ts
}

/// One problem with a worst-case trajectory check.
#[derive(Debug, Clone)]
pub enum WorstCaseViolation {
    /// The budget does not fit between the trajectory position and the
    /// end time even at `V_max`.
    NeedsAboveVmax { sub: (usize, usize, usize), required_window: f64, available: f64 },
    FinishAfterEndTime { sub: (usize, usize, usize), finish: f64, te: f64 },
    FinishAfterDeadline { sub: (usize, usize, usize), finish: f64, deadline: f64 },
}

impl fmt::Display for WorstCaseViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorstCaseViolation::NeedsAboveVmax {
                sub,
                required_window,
                available,
            } => write!(
                f,
                "({},{},{}): worst case needs {:.4} time units but only {:.4} remain before te",
                sub.0, sub.1, sub.2, required_window, available
            ),
            WorstCaseViolation::FinishAfterEndTime { sub, finish, te } => write!(
                f,
                "({},{},{}): worst-case finish {:.4} is past the end time {:.4}",
                sub.0, sub.1, sub.2, finish, te
            ),
            WorstCaseViolation::FinishAfterDeadline {
                sub,
                finish,
                deadline,
            } => write!(
                f,
                "({},{},{}): worst-case finish {:.4} is past the deadline {:.4}",
                sub.0, sub.1, sub.2, finish, deadline
            ),
        }
    }
}

/// Outcome of simulating the all-worst-case trajectory of a schedule.
#[derive(Debug, Clone)]
pub struct WorstCaseReport {
    pub feasible: bool,
    /// Energy of the worst-case run (voltages capped at `V_max`).
    pub energy: f64,
    pub violations: Vec<WorstCaseViolation>,
}

/// Simulate the all-worst-case trajectory: every sub-instance starts at
/// the later of the running finish time and its release, draws the
/// voltage for its full budget against its end time, and must finish by
/// both the end time and the deadline.
pub fn verify_worst_case(
    schedule: &StaticSchedule,
    fps: &FpSchedule,
    taskset: &TaskSet,
    model: &PowerModel,
) -> Result<WorstCaseReport, SolveError> {
    if schedule.rows.len() != fps.len() {
        return Err(SolveError::RowMismatch {
            expected: fps.len(),
            got: schedule.rows.len(),
        });
    }
    // floor covers the solver's deadline-capped restoration shortfall
    let tol = (1e-9 * (taskset.hyper_period() as f64).max(1.0)).max(2e-7);
    let mut violations = Vec::new();
    let mut energy = 0.0;
    let mut t = 0.0f64;

    for (row, sub) in schedule.rows.iter().zip(fps.subs()) {
        debug_assert_eq!((row.task, row.instance, row.part), sub.id());
        if row.w_hat <= eval::W_TOL {
            continue;
        }
        let release = sub.release as f64;
        let deadline = sub.deadline as f64;
        let start = t.max(release);
        let window = row.te - start;
        let required = row.w_hat * model.ct_unchecked(model.v_max());
        if required > window + tol {
            violations.push(WorstCaseViolation::NeedsAboveVmax {
                sub: sub.id(),
                required_window: required,
                available: window,
            });
        }
        let v = if window <= 0.0 {
            model.v_max()
        } else {
            match model.voltage_for_duration(row.w_hat, window) {
                Ok(choice) => choice.voltage,
                Err(_) => model.v_max(),
            }
        };
        let finish = start + row.w_hat * model.ct_unchecked(v);
        energy += crate::power::energy(
            taskset.tasks[sub.task - 1].capacitance,
            row.w_hat,
            v,
        );
        if finish > row.te + tol {
            violations.push(WorstCaseViolation::FinishAfterEndTime {
                sub: sub.id(),
                finish,
                te: row.te,
            });
        }
        if finish > deadline + tol {
            violations.push(WorstCaseViolation::FinishAfterDeadline {
                sub: sub.id(),
                finish,
                deadline,
            });
        }
        t = finish;
    }

    Ok(WorstCaseReport {
        feasible: violations.is_empty(),
        energy,
        violations,
    })
}

/// Objective and window-constraint values of the reduced problem at a
/// given point. Diagnostic API used by tests and tooling; `average_case
/// = false` evaluates the worst-case-only variant.
pub fn eval_objective_and_constraints(
    problem: &NlpProblem,
    average_case: bool,
    te: &[f64],
    w_hat: &[f64],
) -> (f64, Vec<f64>) {
    let rp = ReducedProblem::new(problem, average_case);
    let e = rp.evaluate(te, w_hat);
    (e.energy, e.g)
}

/// Analytic gradient of `objective + Σ weights_k · g_k` with respect to
/// `(te, ŵ)`. Counterpart of [`eval_objective_and_constraints`] for
/// derivative checks.
pub fn eval_lagrangian_gradient(
    problem: &NlpProblem,
    average_case: bool,
    te: &[f64],
    w_hat: &[f64],
    weights: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let rp = ReducedProblem::new(problem, average_case);
    let (_, d_te, d_w) = rp.gradient(te, w_hat, weights);
    (d_te, d_w)
}

/// Build a schedule from explicit end times and budgets (diagnostics
/// derived the same way the solver derives them). The point must satisfy
/// the window constraints; otherwise the worst-case voltages are capped.
pub fn schedule_from_point(
    problem: &NlpProblem,
    average_case: bool,
    te: &[f64],
    w_hat: &[f64],
    policy: Policy,
) -> StaticSchedule {
    solve::emit_schedule(problem, average_case, te, w_hat, policy, 0)
}
