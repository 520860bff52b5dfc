//! Independent constraint-residual evaluator for emitted schedules.
//!
//! Re-checks every constraint of the scheduling problem against the
//! reported schedule values alone. Deliberately shares no evaluation
//! code with the solver: even the cycle-time law is recomputed inline
//! from the model parameters, so a defect in the solver's evaluation
//! cannot hide here.
//!
//! A sub-instance with no worst-case budget never executes in any
//! scenario; the window and slack chains pass through it and it carries
//! no window constraint of its own. Its reported end time still has to
//! respect the release/deadline box and the start-time coupling.

use crate::fps::FpSchedule;
use crate::optimizer::ScheduleRow;
use crate::power::{ModelVariant, PowerModel};
use crate::taskmodel::TaskSet;
use std::fmt;

/// Budgets at or below this count as "no work" (same convention as the
/// runtime and the verifier).
const ZERO_BUDGET: f64 = 1e-9;

/// Residual of a single constraint instance. `violation` is the raw
/// constraint violation (0 when satisfied), `relative` the violation
/// scaled by the constraint's magnitude.
#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub family: &'static str,
    pub subject: String,
    pub violation: f64,
    pub relative: f64,
}

/// All residuals of a schedule, with the worst one summarized.
#[derive(Debug, Clone, Default)]
pub struct ResidualReport {
    pub entries: Vec<ConstraintResidual>,
    pub max_relative: f64,
}

impl ResidualReport {
    pub fn worst(&self) -> Option<&ConstraintResidual> {
        self.entries
            .iter()
            .max_by(|a, b| a.relative.total_cmp(&b.relative))
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.max_relative <= tol
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.worst() {
            Some(w) if w.relative > 0.0 => write!(
                f,
                "max relative residual {:.3e} ({} at {})",
                self.max_relative, w.family, w.subject
            ),
            _ => write!(f, "all constraints satisfied"),
        }
    }
}

// Cycle time recomputed from raw model parameters, on purpose not
// calling into `power`.
fn cycle_time_inline(model: &PowerModel, v: f64) -> f64 {
    match model.variant() {
        ModelVariant::InverseLaw => model.lambda() / v,
        ModelVariant::AlphaLaw => model.lambda() * v / (v - model.v_th()).powf(model.alpha()),
    }
}

struct Collector {
    entries: Vec<ConstraintResidual>,
    max_relative: f64,
}

impl Collector {
    fn new() -> Self {
        Collector {
            entries: Vec::new(),
            max_relative: 0.0,
        }
    }

    /// `lhs ≤ rhs`
    fn le(&mut self, family: &'static str, subject: String, lhs: f64, rhs: f64) {
        let violation = (lhs - rhs).max(0.0);
        self.push(family, subject, violation, lhs.abs().max(rhs.abs()));
    }

    /// `lhs = rhs`
    fn eq(&mut self, family: &'static str, subject: String, lhs: f64, rhs: f64) {
        let violation = (lhs - rhs).abs();
        self.push(family, subject, violation, lhs.abs().max(rhs.abs()));
    }

    fn push(&mut self, family: &'static str, subject: String, violation: f64, scale: f64) {
        let relative = violation / scale.max(1.0);
        self.max_relative = self.max_relative.max(relative);
        self.entries.push(ConstraintResidual {
            family,
            subject,
            violation,
            relative,
        });
    }
}

/// Evaluate every constraint family against the reported rows.
///
/// `rows` must be in total order and cover every sub-instance of `fps`.
/// The release/deadline constraints use the timing data from `fps`; the
/// workload sums use per-task cycles from `taskset`; the end-time chain
/// treats the predecessor of the first budgeted sub-instance as ending
/// at 0.
pub fn evaluate_residuals(
    rows: &[ScheduleRow],
    fps: &FpSchedule,
    taskset: &TaskSet,
    model: &PowerModel,
) -> ResidualReport {
    let mut c = Collector::new();
    assert_eq!(
        rows.len(),
        fps.len(),
        "schedule must cover every sub-instance"
    );

    let v_min = model.v_min();
    let v_max = model.v_max();

    // chain state of the previous budgeted row
    let mut prev_te = 0.0f64;
    let mut prev_slack = 0.0f64;

    for (row, sub) in rows.iter().zip(fps.subs()) {
        debug_assert_eq!((row.task, row.instance, row.part), sub.id());
        let id = format!("({},{},{})", row.task, row.instance, row.part);
        let release = sub.release as f64;
        let deadline = sub.deadline as f64;

        // (5) release ≤ average start
        c.le("release-start", id.clone(), release, row.ts);
        // (6) end time within the deadline
        c.le("deadline", id.clone(), row.te, deadline);
        // (7) voltage range for both reported voltages
        c.le("voltage-range", id.clone(), v_min, row.v_bar);
        c.le("voltage-range", id.clone(), row.v_bar, v_max);
        c.le("voltage-range", id.clone(), v_min, row.v_hat);
        c.le("voltage-range", id.clone(), row.v_hat, v_max);
        // (8) end time = start + worst-case budget at the average voltage
        let avg_span = if row.w_hat > ZERO_BUDGET {
            row.w_hat * cycle_time_inline(model, row.v_bar)
        } else {
            0.0
        };
        c.eq("end-start-coupling", id.clone(), row.te, row.ts + avg_span);
        // (13) average workload within the budget
        c.le("budget-bound", id.clone(), row.w_bar, row.w_hat);

        if row.w_hat <= ZERO_BUDGET {
            continue;
        }

        // (9), strengthened: the worst case fits between the later of
        // (budgeted predecessor end, own release) and the end time.
        let worst_span = row.w_hat * cycle_time_inline(model, row.v_hat);
        c.le(
            "worst-case-window",
            id.clone(),
            worst_span,
            row.te - prev_te.max(release),
        );
        // (10) start no earlier than the predecessor's end minus its slack
        c.le("slack-bound", id.clone(), prev_te - prev_slack, row.ts);

        prev_slack = (row.w_hat - row.w_bar) * cycle_time_inline(model, row.v_hat);
        prev_te = row.te;
    }

    // Per-instance sums (11), (12) and the fill rule (14).
    for (inst, orders) in fps.instances() {
        let task = &taskset.tasks[inst.task - 1];
        let id = format!("({},{})", inst.task, inst.instance);
        let sum_bar: f64 = orders.iter().map(|&o| rows[o].w_bar).sum();
        let sum_hat: f64 = orders.iter().map(|&o| rows[o].w_hat).sum();
        c.eq("average-workload-sum", id.clone(), sum_bar, task.acec);
        c.eq("budget-sum", id.clone(), sum_hat, task.wcec as f64);

        // (14): while leftover average work remains after sub-instance k,
        // that sub-instance must have been filled to its budget:
        // w̄_k·ol_k ≥ ŵ_k·ol_k with ol_k = acec − Σ_{k'≤k} w̄.
        let mut cum = 0.0;
        for &o in orders {
            let row = &rows[o];
            cum += row.w_bar;
            let ol = task.acec - cum;
            let sid = format!("({},{},{})", row.task, row.instance, row.part);
            c.le("fill-rule", sid.clone(), row.w_hat * ol, row.w_bar * ol);
            // dependent-variable sanity: leftover can never go negative
            c.le("leftover-nonneg", sid, -ol, 0.0);
        }
    }

    ResidualReport {
        max_relative: c.max_relative,
        entries: c.entries,
    }
}
