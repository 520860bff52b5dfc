//! Reduced evaluation of the scheduling problem.
//!
//! After variable reduction the free variables are the per-sub-instance
//! end times `te` and the per-instance budget splits `ŵ` (one simplex per
//! instance). Everything else is recovered in closed form:
//!
//! * average workloads by the greedy fill,
//! * the worst-case voltage from the window between the predecessor's
//!   end time (or the release, whichever is later) and the own end time,
//! * the average start time from the predecessor's slack, and
//! * the average voltage from the window it leaves.
//!
//! A sub-instance whose worst-case budget is zero never executes in any
//! scenario; it takes part in no window or slack chain and its end time
//! is a reporting convention. "Predecessor" therefore always means the
//! previous sub-instance in total order that carries a budget.
//!
//! The remaining inequality is per budgeted sub-instance: the worst case
//! must fit its window even at `V_max`,
//! `g_k = ŵ_k·CT(V_max) − (te_k − a_k) ≤ 0`. Deadlines and the budget
//! simplex are handled by projection in the solver.
//!
//! The same recurrence is differentiated by a hand-written reverse sweep;
//! clamped voltages and `max(·,·)` branches contribute the one-sided
//! derivative of the branch taken.

use crate::optimizer::fill::average_fill;
use crate::optimizer::NlpProblem;
use crate::power::PowerModel;

/// Which branch the greedy fill took for a sub-instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FillCase {
    /// Budget fully used: `w̄ = ŵ`.
    Full,
    /// Leftover smaller than the budget: `w̄ = acec − Σ earlier ŵ`.
    Partial,
    /// Nothing left: `w̄ = 0`.
    Empty,
}

/// Voltage choice with the partial derivatives of the unclamped root.
#[derive(Debug, Clone, Copy)]
struct VoltageNode {
    v: f64,
    /// ∂v/∂w and ∂v/∂d of the implicit root of `w·CT(v) = d`; zero when
    /// the voltage is clamped or the sub-instance carries no work.
    dv_dw: f64,
    dv_dd: f64,
}

/// Data shared by every objective/gradient evaluation of one problem.
#[derive(Debug, Clone)]
pub(crate) struct ReducedProblem {
    pub n: usize,
    pub model: PowerModel,
    /// Per order index.
    pub release: Vec<f64>,
    pub deadline: Vec<f64>,
    pub capacitance: Vec<f64>,
    pub seg_len: Vec<f64>,
    /// Instance position → order indices of its sub-instances (ascending k).
    pub inst_orders: Vec<Vec<usize>>,
    pub inst_acec: Vec<f64>,
    pub inst_wcec: Vec<f64>,
    pub ct_vmax: f64,
    pub ct_vmin: f64,
    /// Characteristic time magnitude (the frame length).
    pub t_scale: f64,
}

/// Budgets at or below this count as "no work".
pub(crate) const W_TOL: f64 = 1e-9;

impl ReducedProblem {
    /// `average_case = false` replaces every instance's average workload
    /// with its worst case, which is exactly the worst-case-only problem.
    pub fn new(problem: &NlpProblem, average_case: bool) -> Self {
        let fps = problem.fps();
        let taskset = problem.taskset();
        let model = problem.model().clone();
        let n = fps.len();

        let mut release = vec![0.0; n];
        let mut deadline = vec![0.0; n];
        let mut capacitance = vec![0.0; n];
        let mut seg_len = vec![0.0; n];
        let mut inst_orders = Vec::with_capacity(fps.instances().len());
        let mut inst_acec = Vec::with_capacity(fps.instances().len());
        let mut inst_wcec = Vec::with_capacity(fps.instances().len());

        for (inst, orders) in fps.instances() {
            let task = &taskset.tasks[inst.task - 1];
            inst_orders.push(orders.clone());
            inst_wcec.push(task.wcec as f64);
            inst_acec.push(if average_case {
                task.acec
            } else {
                task.wcec as f64
            });
            for &o in orders {
                let sub = &fps.subs()[o];
                release[o] = sub.release as f64;
                deadline[o] = sub.deadline as f64;
                capacitance[o] = task.capacitance;
                seg_len[o] = (sub.seg_end - sub.seg_start) as f64;
            }
        }

        let t_scale = taskset.hyper_period() as f64;
        ReducedProblem {
            n,
            ct_vmax: model.ct_unchecked(model.v_max()),
            ct_vmin: model.ct_unchecked(model.v_min()),
            model,
            release,
            deadline,
            capacitance,
            seg_len,
            inst_orders,
            inst_acec,
            inst_wcec,
            t_scale,
        }
    }

    fn h_tol(&self) -> f64 {
        1e-14 * self.t_scale.max(1.0)
    }

    /// Voltage needed to fit `w` cycles into window `d`, clamped to the
    /// model range, with implicit-function derivatives where unclamped.
    fn voltage_node(&self, w: f64, d: f64) -> VoltageNode {
        let m = &self.model;
        if w <= W_TOL {
            return VoltageNode {
                v: m.v_min(),
                dv_dw: 0.0,
                dv_dd: 0.0,
            };
        }
        if d <= self.h_tol() || w * self.ct_vmax >= d {
            return VoltageNode {
                v: m.v_max(),
                dv_dw: 0.0,
                dv_dd: 0.0,
            };
        }
        if w * self.ct_vmin <= d {
            return VoltageNode {
                v: m.v_min(),
                dv_dw: 0.0,
                dv_dd: 0.0,
            };
        }
        let v = match m.voltage_for_duration(w, d) {
            Ok(choice) => choice.voltage,
            Err(_) => m.v_max(),
        };
        // w·CT(v) = d  ⇒  dv/dd = 1/(w·CT'), dv/dw = −CT/(w·CT')
        let ct = m.ct_unchecked(v);
        let ct_d = m.ct_deriv(v);
        let denom = w * ct_d;
        VoltageNode {
            v,
            dv_dw: -ct / denom,
            dv_dd: 1.0 / denom,
        }
    }

    /// Greedy fill of every instance; returns `(w̄, branch taken)`.
    fn fill_all(&self, w_hat: &[f64]) -> (Vec<f64>, Vec<FillCase>) {
        let mut w_bar = vec![0.0; self.n];
        let mut case = vec![FillCase::Empty; self.n];
        for (pos, orders) in self.inst_orders.iter().enumerate() {
            let mut remaining = self.inst_acec[pos];
            for &o in orders {
                let cap = w_hat[o].max(0.0);
                if cap <= remaining {
                    w_bar[o] = cap;
                    remaining -= cap;
                    case[o] = FillCase::Full;
                } else if remaining > 0.0 {
                    w_bar[o] = remaining;
                    remaining = 0.0;
                    case[o] = FillCase::Partial;
                } else {
                    w_bar[o] = 0.0;
                    case[o] = FillCase::Empty;
                }
            }
        }
        (w_bar, case)
    }
}

/// Result of a forward evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    /// Objective: predicted average energy.
    pub energy: f64,
    /// Constraint values `g_k ≤ 0` (worst case fits its window at
    /// `V_max`); zero for budgetless sub-instances.
    pub g: Vec<f64>,
    /// Largest positive constraint value.
    pub max_violation: f64,
}

/// Full forward state, kept for the reverse sweep.
struct Forward {
    w_bar: Vec<f64>,
    fill_case: Vec<FillCase>,
    /// Previous budgeted sub-instance in total order, if any.
    budget_prev: Vec<Option<usize>>,
    a_from_prev: Vec<bool>,
    b_from_prev: Vec<bool>,
    v_hat: Vec<VoltageNode>,
    ct_hat: Vec<f64>,
    v_bar: Vec<VoltageNode>,
    slack: Vec<f64>,
}

impl ReducedProblem {
    pub fn evaluate(&self, te: &[f64], w_hat: &[f64]) -> Evaluation {
        self.forward(te, w_hat).0
    }

    fn forward(&self, te: &[f64], w_hat: &[f64]) -> (Evaluation, Forward) {
        let n = self.n;
        let (w_bar, fill_case) = self.fill_all(w_hat);
        let mut fwd = Forward {
            w_bar,
            fill_case,
            budget_prev: vec![None; n],
            a_from_prev: vec![false; n],
            b_from_prev: vec![false; n],
            v_hat: Vec::with_capacity(n),
            ct_hat: Vec::with_capacity(n),
            v_bar: Vec::with_capacity(n),
            slack: vec![0.0; n],
        };
        let zero_node = VoltageNode {
            v: self.model.v_min(),
            dv_dw: 0.0,
            dv_dd: 0.0,
        };
        let mut g = Vec::with_capacity(n);
        let mut energy = 0.0;
        let mut max_violation: f64 = 0.0;
        // chain state of the last budgeted sub-instance
        let mut prev: Option<usize> = None;
        let mut prev_te = 0.0;
        let mut prev_slack = 0.0;

        for k in 0..n {
            let r = self.release[k];
            let w = w_hat[k].max(0.0);
            if w <= W_TOL {
                g.push(0.0);
                fwd.v_hat.push(zero_node);
                fwd.ct_hat.push(self.ct_vmin);
                fwd.v_bar.push(zero_node);
                continue;
            }
            fwd.budget_prev[k] = prev;

            let a = if prev_te > r {
                fwd.a_from_prev[k] = true;
                prev_te
            } else {
                r
            };
            let h = te[k] - a;
            let gk = w * self.ct_vmax - h;
            max_violation = max_violation.max(gk);
            g.push(gk);

            let v_hat = self.voltage_node(w, h);
            let ct_hat = self.model.ct_unchecked(v_hat.v);
            let slack = (w - fwd.w_bar[k]).max(0.0) * ct_hat;

            let m = prev_te - prev_slack;
            let b = if m > r {
                fwd.b_from_prev[k] = true;
                m
            } else {
                r
            };
            let u = te[k] - b;
            let v_bar = self.voltage_node(w, u);

            energy += self.capacitance[k] * fwd.w_bar[k] * v_bar.v * v_bar.v;

            fwd.v_hat.push(v_hat);
            fwd.ct_hat.push(ct_hat);
            fwd.v_bar.push(v_bar);
            fwd.slack[k] = slack;
            prev = Some(k);
            prev_te = te[k];
            prev_slack = slack;
        }

        (
            Evaluation {
                energy,
                g,
                max_violation,
            },
            fwd,
        )
    }

    /// Gradient of `L(te, ŵ) = energy + Σ_k y_k·g_k` by a reverse sweep
    /// over the forward recurrence.
    pub fn gradient(
        &self,
        te: &[f64],
        w_hat: &[f64],
        y: &[f64],
    ) -> (Evaluation, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let (eval, fwd) = self.forward(te, w_hat);
        let mut d_te = vec![0.0; n];
        let mut d_w = vec![0.0; n];
        let mut d_wbar = vec![0.0; n];
        let mut d_slack = vec![0.0; n];

        for k in (0..n).rev() {
            let w = w_hat[k].max(0.0);
            if w <= W_TOL {
                continue;
            }
            let c = self.capacitance[k];
            let vb = &fwd.v_bar[k];
            let vh = &fwd.v_hat[k];
            let prev = fwd.budget_prev[k];

            // objective term C·w̄·v̄²
            let d_vbar = 2.0 * c * fwd.w_bar[k] * vb.v;
            d_wbar[k] += c * vb.v * vb.v;

            // constraint term y_k·(ŵ·CT(V_max) − (te_k − a_k))
            d_w[k] += y[k] * self.ct_vmax;
            let mut d_h = -y[k];

            // v̄ = V(ŵ, u),  u = te_k − b_k
            d_w[k] += d_vbar * vb.dv_dw;
            let d_u = d_vbar * vb.dv_dd;
            d_te[k] += d_u;
            let d_b = -d_u;
            if fwd.b_from_prev[k] {
                if let Some(p) = prev {
                    // b = te_p − slack_p
                    d_te[p] += d_b;
                    d_slack[p] -= d_b;
                }
            }

            // slack_k = (ŵ − w̄)·CT(v̂); consumed by the next budgeted
            // sub-instance, so its adjoint is ready by now
            let dsl = d_slack[k];
            if (w - fwd.w_bar[k]) > 0.0 {
                d_w[k] += dsl * fwd.ct_hat[k];
                d_wbar[k] -= dsl * fwd.ct_hat[k];
            }
            let d_cthat = dsl * (w - fwd.w_bar[k]).max(0.0);
            let d_vhat = d_cthat * self.model.ct_deriv(vh.v);

            // v̂ = V(ŵ, h),  h = te_k − a_k
            d_w[k] += d_vhat * vh.dv_dw;
            d_h += d_vhat * vh.dv_dd;
            d_te[k] += d_h;
            if fwd.a_from_prev[k] {
                if let Some(p) = prev {
                    d_te[p] -= d_h;
                }
            }
        }

        // Fill Jacobian: full sub-instances pass their adjoint straight to
        // the budget; a partial one pushes the negated adjoint onto every
        // earlier budget of the same instance.
        for orders in &self.inst_orders {
            for (pos, &o) in orders.iter().enumerate() {
                match fwd.fill_case[o] {
                    FillCase::Full => d_w[o] += d_wbar[o],
                    FillCase::Partial => {
                        for &earlier in &orders[..pos] {
                            d_w[earlier] -= d_wbar[o];
                        }
                    }
                    FillCase::Empty => {}
                }
            }
        }

        (eval, d_te, d_w)
    }

    /// The fill used for reporting.
    pub fn report_fill(&self, w_hat: &[f64]) -> Vec<f64> {
        let mut w_bar = vec![0.0; self.n];
        for (pos, orders) in self.inst_orders.iter().enumerate() {
            let caps: Vec<f64> = orders.iter().map(|&o| w_hat[o].max(0.0)).collect();
            // budget sums are maintained by the solver; clamp defensively
            let acec = self.inst_acec[pos].min(caps.iter().sum());
            let fill = average_fill(acec, &caps).expect("fill within capacity");
            for (&o, w) in orders.iter().zip(fill) {
                w_bar[o] = w;
            }
        }
        w_bar
    }
}
