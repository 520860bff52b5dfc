//! Multi-start solver for the reduced scheduling problem.
//!
//! Free variables: end times (boxed by release/deadline) and per-instance
//! budget splits (a simplex each). Iterates stay exactly feasible the
//! whole way: every candidate step is box/simplex-projected and then run
//! through the restoration sweep, which enforces the worst-case window
//! chain by moving end times later; a step the sweep cannot repair is
//! rejected and shortened. Descent is projected gradient with a
//! Barzilai-Borwein step and a monotone Armijo acceptance on the energy
//! objective.
//!
//! Schedulability is decided up front by simulating rate-monotonic
//! execution at `V_max` with worst-case workloads: a miss there proves
//! the task set unschedulable, while a clean run doubles as a feasible
//! start point. Starts differ in how budgets and end times are seeded;
//! the best result wins, ties broken by start index, so the outcome is
//! deterministic for a given seed regardless of how starts are scheduled.

use super::eval::{ReducedProblem, W_TOL};
use super::residual::evaluate_residuals;
use super::{
    wcs_taskset, DeadlineMiss, InfeasibilityReport, NlpProblem, Policy, ScheduleRow, SolveError,
    SolveOptions, SolveStatus, StaticSchedule,
};
use crate::power::VoltageFit;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Restoration accepts a deadline-capped shortfall up to this many time
/// units; anything larger rejects the point.
const RESTORE_SHORTFALL_TOL: f64 = 1e-7;

// ---------------------------------------------------------------------
// projections and restoration
// ---------------------------------------------------------------------

/// Euclidean projection onto the simplex `{x ≥ 0, Σx = total}`.
fn project_simplex(x: &mut [f64], total: f64) {
    if x.len() == 1 {
        x[0] = total;
        return;
    }
    let mut u: Vec<f64> = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - total) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            tau = t;
        }
    }
    for xi in x.iter_mut() {
        *xi = (*xi - tau).max(0.0);
    }
    // absorb rounding drift into the largest coordinate
    let drift = total - x.iter().sum::<f64>();
    if drift != 0.0 {
        let imax = (0..x.len()).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
        x[imax] = (x[imax] + drift).max(0.0);
    }
}

fn project(rp: &ReducedProblem, te: &mut [f64], w: &mut [f64]) {
    for k in 0..rp.n {
        te[k] = te[k].clamp(rp.release[k], rp.deadline[k]);
    }
    for (pos, orders) in rp.inst_orders.iter().enumerate() {
        let total = rp.inst_wcec[pos];
        if orders.len() == 1 {
            w[orders[0]] = total;
            continue;
        }
        let mut block: Vec<f64> = orders.iter().map(|&o| w[o]).collect();
        project_simplex(&mut block, total);
        for (&o, v) in orders.iter().zip(block) {
            w[o] = v;
        }
    }
}

/// Forward sweep enforcing the window constraints exactly, moving end
/// times later only. Budgetless sub-instances are outside the chain and
/// only get their end time boxed. Fails if a deadline blocks a required
/// move by more than the shortfall tolerance, reporting where and by how
/// much.
fn restore_sweep(rp: &ReducedProblem, te: &mut [f64], w: &[f64]) -> Result<(), (usize, f64)> {
    let mut prev = 0.0f64;
    for k in 0..rp.n {
        if w[k] <= W_TOL {
            te[k] = te[k].clamp(rp.release[k], rp.deadline[k]);
            continue;
        }
        let lo = prev.max(rp.release[k]) + w[k] * rp.ct_vmax;
        let hi = rp.deadline[k];
        if lo > hi + RESTORE_SHORTFALL_TOL {
            return Err((k, lo - hi));
        }
        te[k] = te[k].max(lo).min(hi);
        prev = te[k];
    }
    Ok(())
}

fn restore(rp: &ReducedProblem, te: &mut [f64], w: &[f64]) -> Result<(), ()> {
    restore_sweep(rp, te, w).map_err(|_| ())
}

/// Restoration for integer budgets: when a deadline blocks a sub-instance,
/// move whole overflow cycles to the next sub-instance of the same
/// instance and try again. Preserves per-instance sums and integrality.
fn restore_shifting(rp: &ReducedProblem, te: &mut [f64], w: &mut [f64]) -> Result<(), ()> {
    for _ in 0..4 * rp.n.max(8) {
        let (k, overflow) = match restore_sweep(rp, te, w) {
            Ok(()) => return Ok(()),
            Err(at) => at,
        };
        let orders = rp
            .inst_orders
            .iter()
            .find(|orders| orders.contains(&k))
            .expect("sub-instance belongs to an instance");
        let pos = orders.iter().position(|&o| o == k).unwrap();
        let Some(&next) = orders.get(pos + 1) else {
            return Err(());
        };
        let shift = ((overflow / rp.ct_vmax).ceil()).max(1.0).min(w[k]);
        if shift <= 0.0 {
            return Err(());
        }
        w[k] -= shift;
        w[next] += shift;
    }
    Err(())
}

// ---------------------------------------------------------------------
// feasible descent
// ---------------------------------------------------------------------

#[derive(Clone)]
struct Point {
    te: Vec<f64>,
    w: Vec<f64>,
}

/// Which variable block a descent phase moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    EndTimes,
    Budgets,
    Joint,
}

/// Monotone projected-gradient descent over the feasible set, moving only
/// the chosen variable block. The point must be feasible on entry and
/// stays feasible throughout.
fn descend(rp: &ReducedProblem, point: &mut Point, max_iter: usize, block: Block) -> f64 {
    let n = rp.n;
    let zero_y = vec![0.0; n];
    let step_floor = 1e-13 * rp.t_scale.max(1.0);
    let step_cap = 1e6 * rp.t_scale.max(1.0);
    let mask = |g_te: &mut Vec<f64>, g_w: &mut Vec<f64>| match block {
        Block::EndTimes => g_w.iter_mut().for_each(|g| *g = 0.0),
        Block::Budgets => g_te.iter_mut().for_each(|g| *g = 0.0),
        Block::Joint => {}
    };

    let mut energy = rp.evaluate(&point.te, &point.w).energy;
    let (_, mut g_te, mut g_w) = rp.gradient(&point.te, &point.w, &zero_y);
    mask(&mut g_te, &mut g_w);

    let mut step = {
        let gmax = g_te
            .iter()
            .chain(g_w.iter())
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax > 0.0 {
            0.02 * rp.t_scale.max(1.0) / gmax
        } else {
            return energy;
        }
    };

    for _ in 0..max_iter {
        let mut t = step;
        let mut accepted: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        for _ in 0..60 {
            let mut te_new: Vec<f64> = point
                .te
                .iter()
                .zip(&g_te)
                .map(|(x, g)| x - t * g)
                .collect();
            let mut w_new: Vec<f64> = point.w.iter().zip(&g_w).map(|(x, g)| x - t * g).collect();
            project(rp, &mut te_new, &mut w_new);
            if restore(rp, &mut te_new, &w_new).is_err() {
                t *= 0.5;
                if t < step_floor {
                    break;
                }
                continue;
            }
            let e_new = rp.evaluate(&te_new, &w_new).energy;
            let descent_term: f64 = point
                .te
                .iter()
                .zip(&te_new)
                .zip(&g_te)
                .map(|((x, xn), g)| g * (xn - x))
                .chain(
                    point
                        .w
                        .iter()
                        .zip(&w_new)
                        .zip(&g_w)
                        .map(|((x, xn), g)| g * (xn - x)),
                )
                .sum();
            if e_new <= energy + 1e-4 * descent_term.min(0.0) {
                accepted = Some((te_new, w_new, e_new));
                break;
            }
            t *= 0.5;
            if t < step_floor {
                break;
            }
        }
        let Some((te_new, w_new, e_new)) = accepted else {
            break;
        };

        let (_, mut g_te_new, mut g_w_new) = rp.gradient(&te_new, &w_new, &zero_y);
        mask(&mut g_te_new, &mut g_w_new);

        // Barzilai-Borwein step from the accepted move.
        let mut ss = 0.0;
        let mut sy = 0.0;
        let mut dx_max = 0.0f64;
        for ((xn, x), (gn, g)) in te_new
            .iter()
            .zip(&point.te)
            .zip(g_te_new.iter().zip(&g_te))
            .chain(w_new.iter().zip(&point.w).zip(g_w_new.iter().zip(&g_w)))
        {
            let s = xn - x;
            let y = gn - g;
            ss += s * s;
            sy += s * y;
            dx_max = dx_max.max(s.abs());
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(step_floor, step_cap)
        } else {
            (2.0 * t).clamp(step_floor, step_cap)
        };

        point.te = te_new;
        point.w = w_new;
        energy = e_new;
        g_te = g_te_new;
        g_w = g_w_new;

        if dx_max <= 1e-12 * rp.t_scale.max(1.0) {
            break;
        }
    }
    energy
}

// ---------------------------------------------------------------------
// starts
// ---------------------------------------------------------------------

/// Budgets proportional to segment lengths; end times at segment ends.
fn start_proportional(rp: &ReducedProblem, problem: &NlpProblem) -> Point {
    let fps = problem.fps();
    let mut te = vec![0.0; rp.n];
    let mut w = vec![0.0; rp.n];
    for (pos, orders) in rp.inst_orders.iter().enumerate() {
        let total_len: f64 = orders.iter().map(|&o| rp.seg_len[o]).sum();
        for &o in orders {
            let sub = &fps.subs()[o];
            te[o] = sub.seg_end as f64;
            w[o] = rp.inst_wcec[pos] * rp.seg_len[o] / total_len.max(1e-12);
        }
    }
    Point { te, w }
}

/// Same budgets, end times packed as early as the worst case allows.
fn start_compaction(rp: &ReducedProblem, base: &Point) -> Point {
    let mut te = vec![0.0; rp.n];
    let mut prev = 0.0f64;
    for k in 0..rp.n {
        let lo = prev.max(rp.release[k]) + base.w[k] * rp.ct_vmax;
        te[k] = lo.min(rp.deadline[k]);
        if base.w[k] > W_TOL {
            prev = te[k];
        }
    }
    Point {
        te,
        w: base.w.clone(),
    }
}

/// Same budgets, end times pushed as late as the chain allows (backward
/// sweep from the deadlines).
fn start_latest(rp: &ReducedProblem, base: &Point) -> Point {
    let mut te = vec![0.0; rp.n];
    let mut next_cap = f64::INFINITY;
    for k in (0..rp.n).rev() {
        if base.w[k] <= W_TOL {
            te[k] = rp.deadline[k].min(next_cap.max(rp.release[k]));
            continue;
        }
        te[k] = rp.deadline[k].min(next_cap);
        next_cap = te[k] - base.w[k] * rp.ct_vmax;
    }
    Point {
        te,
        w: base.w.clone(),
    }
}

fn perturb(rp: &ReducedProblem, base: &Point, rng: &mut ChaCha8Rng) -> Point {
    let mut te = base.te.clone();
    let mut w = base.w.clone();
    for k in 0..rp.n {
        let span = rp.deadline[k] - rp.release[k];
        te[k] += (rng.random::<f64>() - 0.5) * 0.4 * span;
        w[k] *= (0.5 + rng.random::<f64>()).powi(2);
    }
    Point { te, w }
}

// ---------------------------------------------------------------------
// schedulability witness
// ---------------------------------------------------------------------

/// Simulate rate-monotonic execution at a fixed cycle time `ct` with
/// every instance at its worst case. Misses mean the set is not
/// schedulable at that speed; otherwise the executed chunks give a
/// feasible `(te, ŵ)` seed point.
fn rm_witness_at(
    rp: &ReducedProblem,
    problem: &NlpProblem,
    ct: f64,
) -> Result<Option<Point>, Vec<DeadlineMiss>> {
    let fps = problem.fps();
    let instances = fps.instances();
    let horizon = rp.t_scale;

    let mut events: Vec<f64> = instances
        .iter()
        .map(|(inst, _)| inst.release as f64)
        .collect();
    events.push(horizon);
    events.sort_by(f64::total_cmp);
    events.dedup();

    let mut remaining: Vec<f64> = (0..instances.len()).map(|pos| rp.inst_wcec[pos]).collect();
    let mut finish: Vec<Option<f64>> = vec![None; instances.len()];
    // order index → (cycles, end time)
    let mut chunks: Vec<Option<(f64, f64)>> = vec![None; rp.n];

    // dispatch order: task priority first, then instance index
    let mut by_priority: Vec<usize> = (0..instances.len()).collect();
    by_priority.sort_by_key(|&p| (instances[p].0.task, instances[p].0.instance));

    for win in events.windows(2) {
        let (wa, wb) = (win[0], win[1]);
        let mut t = wa;
        for &pos in &by_priority {
            let (inst, orders) = &instances[pos];
            if remaining[pos] <= 0.0 || (inst.release as f64) > wa {
                continue;
            }
            if wb - t <= 0.0 {
                break;
            }
            let can = (wb - t) / ct;
            let cycles = remaining[pos].min(can);
            if cycles <= 0.0 {
                continue;
            }
            let end = t + cycles * ct;
            // the chunk lies inside exactly one segment of the instance
            let seg = orders.iter().find(|&&o| {
                let s = &fps.subs()[o];
                (s.seg_start as f64) <= t + 1e-9 && t < (s.seg_end as f64)
            });
            if let Some(&o) = seg {
                let entry = chunks[o].get_or_insert((0.0, end));
                entry.0 += cycles;
                entry.1 = end;
            }
            remaining[pos] -= cycles;
            if remaining[pos] <= 1e-12 {
                remaining[pos] = 0.0;
                finish[pos] = Some(end);
            }
            t = end;
        }
    }

    let mut misses = Vec::new();
    for (pos, (inst, _)) in instances.iter().enumerate() {
        let deadline = inst.deadline as f64;
        match finish[pos] {
            Some(f) if f <= deadline + 1e-9 => {}
            Some(f) => misses.push(DeadlineMiss {
                task: inst.task,
                instance: inst.instance,
                finish: f,
                deadline,
            }),
            None => misses.push(DeadlineMiss {
                task: inst.task,
                instance: inst.instance,
                finish: f64::INFINITY,
                deadline,
            }),
        }
    }
    if !misses.is_empty() {
        return Err(misses);
    }

    // Assemble the witness point along the total order. Sub-instances
    // without a chunk carry no budget and stay out of the chain.
    let mut te = vec![0.0; rp.n];
    let mut w = vec![0.0; rp.n];
    let mut prev = 0.0f64;
    for k in 0..rp.n {
        match chunks[k] {
            Some((cycles, end)) => {
                w[k] = cycles;
                te[k] = end;
                // sanity: the chunk sequence satisfies the budgeted chain
                let lo = prev.max(rp.release[k]) + cycles * rp.ct_vmax;
                if end + 1e-6 < lo || end > rp.deadline[k] + 1e-6 {
                    return Ok(None);
                }
                prev = end;
            }
            None => {
                w[k] = 0.0;
                te[k] = prev.max(rp.release[k]).min(rp.deadline[k]);
            }
        }
    }
    Ok(Some(Point { te, w }))
}

/// Schedulability check and seed point at `V_max`.
fn rm_vmax_witness(
    rp: &ReducedProblem,
    problem: &NlpProblem,
) -> Result<Option<Point>, Vec<DeadlineMiss>> {
    rm_witness_at(rp, problem, rp.ct_vmax)
}

/// The uniform-speed schedule: the lowest single voltage at which
/// rate-monotonic execution of the all-worst-case workload meets every
/// deadline, realized as the chunks of that simulation. A strong seed
/// for the worst-case objective and entirely ignorant of average
/// workloads.
fn uniform_speed_start(rp: &ReducedProblem, problem: &NlpProblem) -> Option<Point> {
    let feasible = |v: f64| -> Option<Option<Point>> {
        rm_witness_at(rp, problem, rp.model.ct_unchecked(v)).ok()
    };
    let mut lo = rp.model.v_min();
    let mut hi = rp.model.v_max();
    if let Some(p) = feasible(lo) {
        return p;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    feasible(hi).flatten()
}

// ---------------------------------------------------------------------
// rounding
// ---------------------------------------------------------------------

/// Sum-preserving integer roundings of every budget block, as the
/// largest-remainder assignment plus swap variants for the most
/// ambiguous blocks.
fn rounding_candidates(rp: &ReducedProblem, w: &[f64]) -> Vec<Vec<f64>> {
    let mut base = w.to_vec();
    // (ambiguity, instance pos, swap pair) where rounding was a coin toss
    let mut swaps: Vec<(f64, usize, usize, usize)> = Vec::new();

    for (pos, orders) in rp.inst_orders.iter().enumerate() {
        if orders.len() == 1 {
            base[orders[0]] = rp.inst_wcec[pos];
            continue;
        }
        let total = rp.inst_wcec[pos].round() as i64;
        let floors: Vec<i64> = orders.iter().map(|&o| w[o].floor() as i64).collect();
        let fracs: Vec<f64> = orders
            .iter()
            .zip(&floors)
            .map(|(&o, &f)| w[o] - f as f64)
            .collect();
        let mut extra = total - floors.iter().sum::<i64>();
        let mut rank: Vec<usize> = (0..orders.len()).collect();
        rank.sort_by(|&a, &b| fracs[b].total_cmp(&fracs[a]).then(a.cmp(&b)));
        let mut rounded = floors.clone();
        for &r in &rank {
            if extra <= 0 {
                break;
            }
            rounded[r] += 1;
            extra -= 1;
        }
        let up_count = (total - floors.iter().sum::<i64>()).max(0) as usize;
        if up_count > 0 && up_count < orders.len() {
            let p = rank[up_count - 1]; // weakest up-rounding
            let q = rank[up_count]; // strongest down-rounding
            let ambiguity = 0.5 - (fracs[p] - 0.5).abs().min((fracs[q] - 0.5).abs());
            if rounded[p] > 0 {
                swaps.push((ambiguity, pos, p, q));
            }
        }
        for (&o, &r) in orders.iter().zip(&rounded) {
            base[o] = r as f64;
        }
    }

    let mut out = vec![base.clone()];
    swaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, pos, p, q) in swaps.iter().take(4) {
        let orders = &rp.inst_orders[pos];
        let mut alt = base.clone();
        alt[orders[p]] -= 1.0;
        alt[orders[q]] += 1.0;
        out.push(alt);
    }
    out
}

// ---------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------

/// Derive the reported rows from `(te, ŵ)`.
///
/// Start times sit exactly on the slack bound unless even `V_min` leaves
/// surplus time, in which case the start moves later so that the budget
/// at `V_min` meets the end time exactly. Zero-budget sub-instances
/// report both voltages at `V_min`, start at their end time, and take
/// the latest in-window position that keeps the reported sequence
/// monotone where possible.
fn build_rows(
    rp: &ReducedProblem,
    problem: &NlpProblem,
    te: &[f64],
    w: &[f64],
) -> (Vec<ScheduleRow>, f64) {
    let fps = problem.fps();
    let model = &rp.model;
    let w_bar = rp.report_fill(w);
    let mut rows = Vec::with_capacity(rp.n);
    let mut energy = 0.0;
    let mut prev_te = 0.0f64;
    let mut prev_slack = 0.0;
    let mut prev_reported = 0.0f64;
    let mut te = te.to_vec();

    for k in 0..rp.n {
        let sub = &fps.subs()[k];
        let r = rp.release[k];
        let (ts, v_bar, v_hat, slack);
        if w[k] <= W_TOL {
            // no execution in any scenario; the end time is a reporting
            // convention inside the window
            te[k] = prev_reported.max(r).min(rp.deadline[k]);
            ts = te[k];
            v_bar = model.v_min();
            v_hat = model.v_min();
            slack = 0.0;
        } else {
            let a = prev_te.max(r);
            let window_hat = te[k] - a;
            v_hat = match model.voltage_for_duration(w[k], window_hat.max(f64::MIN_POSITIVE)) {
                Ok(c) => c.voltage,
                Err(_) => model.v_max(),
            };
            let ts_min = r.max(prev_te - prev_slack);
            let window_bar = te[k] - ts_min;
            match model.voltage_for_duration(w[k], window_bar.max(f64::MIN_POSITIVE)) {
                Ok(c) if c.fit == VoltageFit::SurplusAtVmin => {
                    v_bar = model.v_min();
                    ts = te[k] - w[k] * model.ct_unchecked(model.v_min());
                }
                Ok(c) => {
                    v_bar = c.voltage;
                    ts = ts_min;
                }
                Err(_) => {
                    v_bar = model.v_max();
                    ts = ts_min;
                }
            }
            slack = (w[k] - w_bar[k]).max(0.0) * model.ct_unchecked(v_hat);
        }
        energy += rp.capacitance[k] * w_bar[k] * v_bar * v_bar;
        rows.push(ScheduleRow {
            task: sub.task,
            instance: sub.instance,
            part: sub.part,
            order: k,
            te: te[k],
            w_hat: w[k],
            ts,
            w_bar: w_bar[k],
            v_bar,
            v_hat,
        });
        if w[k] > W_TOL {
            prev_te = te[k];
            prev_slack = slack;
        }
        prev_reported = te[k];
    }
    (rows, energy)
}

pub(super) fn emit_schedule(
    problem: &NlpProblem,
    average_case: bool,
    te: &[f64],
    w_hat: &[f64],
    policy: Policy,
    seed: u64,
) -> StaticSchedule {
    let rp = ReducedProblem::new(problem, average_case);
    let (rows, energy) = build_rows(&rp, problem, te, w_hat);
    let check_ts = if average_case {
        problem.taskset().clone()
    } else {
        wcs_taskset(problem.taskset())
    };
    let report = evaluate_residuals(&rows, problem.fps(), &check_ts, problem.model());
    StaticSchedule {
        policy,
        rows,
        objective: energy,
        status: SolveStatus::Converged,
        residual_max: report.max_relative,
        seed,
    }
}

// ---------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------

struct Candidate {
    te: Vec<f64>,
    w: Vec<f64>,
    energy: f64,
}

/// Descend from every start; keep the best feasible outcome.
fn run_starts(
    rp: &ReducedProblem,
    problem: &NlpProblem,
    opts: &SolveOptions,
    extra: &[Point],
) -> Option<Candidate> {
    let bases: Vec<Point> = {
        let mut v = Vec::new();
        let proportional = start_proportional(rp, problem);
        v.push(start_compaction(rp, &proportional));
        v.push(start_latest(rp, &proportional));
        v.push(proportional);
        for p in extra {
            v.push(p.clone());
        }
        v
    };
    let total = opts.starts.max(bases.len());
    let starts: Vec<Point> = (0..total)
        .map(|i| {
            if i < bases.len() {
                bases[i].clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(i as u64 + 1);
                perturb(rp, &bases[i % bases.len()], &mut rng)
            }
        })
        .collect();

    let max_iter = opts.max_iters.max(2 * rp.n);
    // The end-time and budget landscapes have very different scales, so
    // joint steps crawl; alternating block phases until neither moves,
    // with a joint finish, converges far better.
    let solve_one = |(start_idx, mut p): (usize, Point)| -> Option<Candidate> {
        project(rp, &mut p.te, &mut p.w);
        restore(rp, &mut p.te, &p.w).ok()?;
        debug_assert!(
            rp.evaluate(&p.te, &p.w).max_violation <= 2.0 * RESTORE_SHORTFALL_TOL,
            "restored start must be feasible"
        );
        let mut energy = descend(rp, &mut p, max_iter, Block::EndTimes);
        for _cycle in 0..6 {
            descend(rp, &mut p, max_iter / 2, Block::Budgets);
            let e = descend(rp, &mut p, max_iter / 2, Block::EndTimes);
            let stalled = e >= energy * (1.0 - 1e-10);
            energy = e;
            if stalled {
                break;
            }
        }
        energy = descend(rp, &mut p, max_iter / 2, Block::Joint);

        // basin hops: kick the budgets, re-descend, keep improvements
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
        rng.set_stream(start_idx as u64 + 1);
        for _hop in 0..3 {
            let mut q = p.clone();
            for k in 0..rp.n {
                q.w[k] *= (0.6 + 0.8 * rng.random::<f64>()).powi(2);
            }
            project(rp, &mut q.te, &mut q.w);
            if restore(rp, &mut q.te, &q.w).is_err() {
                continue;
            }
            descend(rp, &mut q, max_iter / 2, Block::Budgets);
            descend(rp, &mut q, max_iter / 2, Block::EndTimes);
            descend(rp, &mut q, max_iter / 2, Block::Budgets);
            let e = descend(rp, &mut q, max_iter / 2, Block::EndTimes);
            if e < energy {
                energy = e;
                p = q;
            }
        }
        Some(Candidate {
            te: p.te,
            w: p.w,
            energy,
        })
    };

    let candidates: Vec<Option<Candidate>> = if opts.parallel {
        starts.into_par_iter().enumerate().map(solve_one).collect()
    } else {
        starts.into_iter().enumerate().map(solve_one).collect()
    };

    let mut best: Option<Candidate> = None;
    for c in candidates.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| c.energy < b.energy) {
            best = Some(c);
        }
    }
    best
}

/// Integer budgets for reporting: try sum-preserving roundings with a
/// short end-time polish, keep the best restorable one. Falls back to
/// the continuous budgets when no rounding fits the deadlines.
fn finalize(
    rp: &ReducedProblem,
    best: &Candidate,
    opts: &SolveOptions,
) -> (Vec<f64>, Vec<f64>, SolveStatus) {
    let mut chosen: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    if opts.round_budgets {
        for w_int in rounding_candidates(rp, &best.w) {
            let mut p = Point {
                te: best.te.clone(),
                w: w_int,
            };
            if restore_shifting(rp, &mut p.te, &mut p.w).is_err() {
                continue;
            }
            let polish_iters = (opts.max_iters / 4).max(200);
            let e = descend(rp, &mut p, polish_iters, Block::EndTimes);
            if chosen.as_ref().map_or(true, |(_, _, be)| e < *be) {
                chosen = Some((p.te, p.w, e));
            }
        }
    }
    match chosen {
        Some((te, w, _)) => (te, w, SolveStatus::Converged),
        None => {
            // Continuous fallback: snap budget crumbs to zero so the
            // runtime's zero-budget convention applies to them, keeping
            // per-instance sums intact.
            let mut w = best.w.clone();
            for orders in &rp.inst_orders {
                let mut removed = 0.0;
                for &o in orders {
                    if w[o] > 0.0 && w[o] < 1e-7 {
                        removed += w[o];
                        w[o] = 0.0;
                    }
                }
                if removed > 0.0 {
                    let imax = orders
                        .iter()
                        .copied()
                        .max_by(|&a, &b| w[a].total_cmp(&w[b]))
                        .unwrap();
                    w[imax] += removed;
                }
            }
            let mut te = best.te.clone();
            if restore(rp, &mut te, &w).is_err() {
                (
                    best.te.clone(),
                    best.w.clone(),
                    SolveStatus::ConvergedContinuousBudgets,
                )
            } else {
                (te, w, SolveStatus::ConvergedContinuousBudgets)
            }
        }
    }
}

pub(super) fn run(
    problem: &NlpProblem,
    opts: &SolveOptions,
    policy: Policy,
) -> Result<StaticSchedule, SolveError> {
    let average_case = policy == Policy::Acs;
    let rp = ReducedProblem::new(problem, average_case);
    let rp_wc = ReducedProblem::new(problem, false);

    let witness = match rm_vmax_witness(&rp, problem) {
        Ok(point) => point,
        Err(misses) => {
            return Err(SolveError::Infeasible(InfeasibilityReport {
                unschedulable_at_vmax: misses,
                best_violation: f64::INFINITY,
            }))
        }
    };
    let infeasible = || {
        SolveError::Infeasible(InfeasibilityReport {
            unschedulable_at_vmax: Vec::new(),
            best_violation: f64::INFINITY,
        })
    };

    let mut seeds: Vec<Point> = witness.iter().cloned().collect();
    if let Some(p) = uniform_speed_start(&rp_wc, problem) {
        seeds.push(p);
    }

    // The worst-case-only solve: multi-start descent of the worst-case
    // objective alone. The baseline never sees average workloads.
    let wc_best = run_starts(&rp_wc, problem, opts, &seeds).ok_or_else(infeasible)?;

    let (te_final, w_final, status) = if policy == Policy::Wcs {
        finalize(&rp_wc, &wc_best, opts)
    } else {
        // The average-case solve starts from everything the baseline
        // found (including its rounded form, which is exactly what the
        // worst-case entry emits) and then alternates between the two
        // objectives: descent under one routinely escapes plateaus of
        // the other, and the worst-case passes only serve exploration
        // here.
        let rp_avg = ReducedProblem::new(problem, true);
        let (wc_te, wc_w, _) = finalize(&rp_wc, &wc_best, opts);
        seeds.push(Point {
            te: wc_best.te.clone(),
            w: wc_best.w.clone(),
        });
        seeds.push(Point { te: wc_te, w: wc_w });

        let mut best_avg: Option<Candidate> = None;
        for _round in 0..3 {
            let Some(c) = run_starts(&rp_avg, problem, opts, &seeds) else {
                break;
            };
            let better = best_avg
                .as_ref()
                .map_or(true, |b| c.energy < b.energy * (1.0 - 1e-9));
            if !better {
                break;
            }
            seeds.push(Point {
                te: c.te.clone(),
                w: c.w.clone(),
            });
            best_avg = Some(c);
            // exploration pass under the worst-case objective
            if let Some(c) = run_starts(&rp_wc, problem, opts, &seeds) {
                seeds.push(Point { te: c.te, w: c.w });
            }
        }
        let best_avg = best_avg.ok_or_else(infeasible)?;
        finalize(&rp, &best_avg, opts)
    };

    let mut schedule = emit_schedule(problem, average_case, &te_final, &w_final, policy, opts.seed);
    schedule.status = status;
    Ok(schedule)
}
