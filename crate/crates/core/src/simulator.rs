//! Runtime DVS simulation with greedy slack reclamation.
//!
//! A trial walks the sub-instances in total order. Each one starts at
//! the later of the running clock and its release, executes up to its
//! budget of the instance's remaining cycles, and draws its voltage for
//! the *full* budget against its end time — slack from early finishers
//! is thereby handed to the next sub-instance in order. Sub-instances
//! whose instance has no cycles left are skipped at zero cost.
//!
//! Monte Carlo runs sample per-instance cycles from a clamped normal
//! distribution; each trial's stream is derived from (seed, trial), so
//! results do not depend on how trials are scheduled.

use crate::fps::FpSchedule;
use crate::optimizer::StaticSchedule;
use crate::power::{energy, PowerModel, VoltageFit};
use crate::taskmodel::TaskSet;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("need one cycle count per instance ({expected}), got {got}")]
    CycleCountMismatch { expected: usize, got: usize },
    #[error("instance ({task},{instance}) sampled {cycles} cycles above its worst case {wcec}")]
    CyclesAboveWorstCase {
        task: usize,
        instance: usize,
        cycles: f64,
        wcec: u64,
    },
    #[error("schedule has {got} rows but the fully preemptive schedule has {expected}")]
    RowMismatch { expected: usize, got: usize },
}

/// Per-task truncated-normal workload distribution: mean at the average
/// case, `σ = (wcec − bcec)/6`, samples clamped into `[bcec, wcec]` and
/// rounded to whole cycles.
#[derive(Debug, Clone)]
pub struct WorkloadSampler {
    params: Vec<(f64, f64, f64, f64)>, // (mu, sigma, lo, hi) per task
}

impl WorkloadSampler {
    pub fn new(taskset: &TaskSet) -> Self {
        let params = taskset
            .tasks
            .iter()
            .map(|t| {
                let hi = t.wcec as f64;
                (t.acec, (hi - t.bcec) / 6.0, t.bcec, hi)
            })
            .collect();
        WorkloadSampler { params }
    }

    pub fn sigma(&self, task: usize) -> f64 {
        self.params[task - 1].1
    }

    /// Draw one cycle count for 1-based task index `task`.
    ///
    /// Draws the normal deviate by Box-Muller (always consuming exactly
    /// two uniforms), clamps into `[bcec, wcec]`, then rounds to the
    /// nearest whole cycle inside the bounds.
    pub fn sample(&self, task: usize, rng: &mut impl Rng) -> f64 {
        let (mu, sigma, lo, hi) = self.params[task - 1];
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        if hi <= lo {
            return hi;
        }
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        let c = (mu + sigma * z).clamp(lo, hi);
        c.round().clamp(lo.ceil(), hi.floor())
    }
}

/// One executed segment of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSegment {
    pub task: usize,
    pub instance: usize,
    pub part: usize,
    pub start: f64,
    pub voltage: f64,
    pub cycles: f64,
    pub duration: f64,
    pub energy: f64,
}

/// Completion record of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceOutcome {
    pub task: usize,
    pub instance: usize,
    pub finish: f64,
    pub deadline_met: bool,
}

/// Full record of one simulated hyper-period.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub segments: Vec<TraceSegment>,
    pub instances: Vec<InstanceOutcome>,
    pub total_energy: f64,
    pub deadline_misses: usize,
    /// Sub-instances whose budget did not fit their window even at
    /// `V_max` (simulated capped at `V_max`).
    pub voltage_cap_events: Vec<(usize, usize, usize)>,
}

/// Execute one hyper-period with the given actual cycles per instance
/// (aligned with `fps.instances()`).
pub fn run_trial(
    schedule: &StaticSchedule,
    fps: &FpSchedule,
    taskset: &TaskSet,
    model: &PowerModel,
    actual_cycles: &[f64],
) -> Result<Trace, SimError> {
    if schedule.rows.len() != fps.len() {
        return Err(SimError::RowMismatch {
            expected: fps.len(),
            got: schedule.rows.len(),
        });
    }
    if actual_cycles.len() != fps.instances().len() {
        return Err(SimError::CycleCountMismatch {
            expected: fps.instances().len(),
            got: actual_cycles.len(),
        });
    }
    for (pos, (inst, _)) in fps.instances().iter().enumerate() {
        let wcec = taskset.tasks[inst.task - 1].wcec;
        if actual_cycles[pos] > wcec as f64 {
            return Err(SimError::CyclesAboveWorstCase {
                task: inst.task,
                instance: inst.instance,
                cycles: actual_cycles[pos],
                wcec,
            });
        }
    }

    // order index → instance position
    let mut inst_pos = vec![0usize; fps.len()];
    for (pos, (_, orders)) in fps.instances().iter().enumerate() {
        for &o in orders {
            inst_pos[o] = pos;
        }
    }

    const EXHAUSTED: f64 = 1e-9;
    let mut remaining: Vec<f64> = actual_cycles.to_vec();
    let mut finish: Vec<f64> = fps
        .instances()
        .iter()
        .map(|(inst, _)| inst.release as f64)
        .collect();
    let mut trace = Trace::default();
    let mut t = 0.0f64;

    for (row, sub) in schedule.rows.iter().zip(fps.subs()) {
        let pos = inst_pos[sub.order];
        let exec = remaining[pos].min(row.w_hat);
        if exec <= 0.0 {
            continue;
        }
        let start = t.max(sub.release as f64);
        let window = row.te - start;
        let v = if window > 0.0 {
            match model.voltage_for_duration(row.w_hat, window) {
                Ok(choice) => {
                    if choice.fit == VoltageFit::InfeasibleAtVmax {
                        trace.voltage_cap_events.push(sub.id());
                    }
                    choice.voltage
                }
                Err(_) => model.v_max(),
            }
        } else {
            trace.voltage_cap_events.push(sub.id());
            model.v_max()
        };
        let duration = exec * model.ct_unchecked(v);
        let seg_energy = energy(taskset.tasks[sub.task - 1].capacitance, exec, v);
        trace.total_energy += seg_energy;
        trace.segments.push(TraceSegment {
            task: sub.task,
            instance: sub.instance,
            part: sub.part,
            start,
            voltage: v,
            cycles: exec,
            duration,
            energy: seg_energy,
        });
        t = start + duration;
        remaining[pos] -= exec;
        if remaining[pos] <= EXHAUSTED {
            remaining[pos] = 0.0;
            finish[pos] = t;
        }
    }

    // floor covers the solver's deadline-capped restoration shortfall
    let tol = (1e-9 * (taskset.hyper_period() as f64).max(1.0)).max(2e-7);
    for (pos, (inst, _)) in fps.instances().iter().enumerate() {
        let met = remaining[pos] <= 0.0 && finish[pos] <= inst.deadline as f64 + tol;
        if !met {
            trace.deadline_misses += 1;
        }
        trace.instances.push(InstanceOutcome {
            task: inst.task,
            instance: inst.instance,
            finish: finish[pos],
            deadline_met: met,
        });
    }
    Ok(trace)
}

/// Aggregates over repeated hyper-periods.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub trials: usize,
    pub mean_energy: f64,
    pub std_energy: f64,
    pub min_energy: f64,
    pub max_energy: f64,
    pub deadline_misses: usize,
    pub seed: u64,
}

fn sample_instance_cycles(
    sampler: &WorkloadSampler,
    fps: &FpSchedule,
    rng: &mut impl Rng,
) -> Vec<f64> {
    fps.instances()
        .iter()
        .map(|(inst, _)| sampler.sample(inst.task, rng))
        .collect()
}

/// The cycle vector that trial `trial` of a Monte Carlo run with `seed`
/// draws — handy for replaying a single trial.
pub fn sample_cycles_for_trial(
    sampler: &WorkloadSampler,
    fps: &FpSchedule,
    seed: u64,
    trial: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    sample_instance_cycles(sampler, fps, &mut rng)
}

/// Run `trials` independent hyper-periods with sampled workloads.
/// Trial `i` draws from a ChaCha stream `(seed, i)`, so the result is
/// reproducible and independent of execution order.
pub fn run_monte_carlo(
    schedule: &StaticSchedule,
    fps: &FpSchedule,
    taskset: &TaskSet,
    model: &PowerModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloResult, SimError> {
    assert!(trials >= 1, "at least one trial");
    let sampler = WorkloadSampler::new(taskset);
    let run_one = |trial: usize| -> Result<(f64, usize), SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);
        let cycles = sample_instance_cycles(&sampler, fps, &mut rng);
        let trace = run_trial(schedule, fps, taskset, model, &cycles)?;
        Ok((trace.total_energy, trace.deadline_misses))
    };
    let outcomes: Result<Vec<(f64, usize)>, SimError> = if trials >= 32 {
        (0..trials).into_par_iter().map(run_one).collect()
    } else {
        (0..trials).map(run_one).collect()
    };
    let outcomes = outcomes?;

    let mut misses = 0;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &(e, m) in &outcomes {
        sum += e;
        misses += m;
        min = min.min(e);
        max = max.max(e);
    }
    let mean = sum / trials as f64;
    let var = if trials > 1 {
        outcomes
            .iter()
            .map(|(e, _)| (e - mean) * (e - mean))
            .sum::<f64>()
            / (trials as f64 - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarloResult {
        trials,
        mean_energy: mean,
        std_energy: var.sqrt(),
        min_energy: min,
        max_energy: max,
        deadline_misses: misses,
        seed,
    })
}

/// Cycle vectors for the forced scenarios exposed by the CLI.
pub fn fixed_cycles(fps: &FpSchedule, taskset: &TaskSet, worst_case: bool) -> Vec<f64> {
    fps.instances()
        .iter()
        .map(|(inst, _)| {
            let t = &taskset.tasks[inst.task - 1];
            if worst_case {
                t.wcec as f64
            } else {
                t.acec
            }
        })
        .collect()
}

pub fn write_trace_csv_header(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "trial,task,instance,part,start,voltage,cycles,duration,energy")
}

pub fn write_trace_csv(w: &mut impl Write, trial: usize, trace: &Trace) -> std::io::Result<()> {
    for s in &trace.segments {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            trial, s.task, s.instance, s.part, s.start, s.voltage, s.cycles, s.duration, s.energy
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv_header(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "policy,trials,mean_energy,std_energy,misses,seed")
}

pub fn write_aggregate_csv_row(
    w: &mut impl Write,
    policy: &str,
    result: &MonteCarloResult,
) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{}",
        policy,
        result.trials,
        result.mean_energy,
        result.std_energy,
        result.deadline_misses,
        result.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fps::build_fps;
    use crate::optimizer::{build_nlp, schedule_from_point, Policy};
    use crate::taskmodel::{Task, TaskSet};

    fn single_frame() -> (TaskSet, PowerModel) {
        let ts = TaskSet::one_shot(
            "single-frame",
            vec![
                Task::new(10, 20, 10.0, 1.0).with_acec(10.0),
                Task::new(15, 20, 10.0, 1.0).with_acec(10.0),
                Task::new(20, 20, 10.0, 1.0).with_acec(10.0),
            ],
        )
        .unwrap();
        let model = PowerModel::inverse_law(1.0, 0.7, 5.0).unwrap();
        (ts, model)
    }

    fn schedule_with(
        ts: &TaskSet,
        model: &PowerModel,
        te: &[f64],
    ) -> (StaticSchedule, FpSchedule) {
        let fps = build_fps(ts).unwrap();
        let problem = build_nlp(&fps, ts, model);
        let w: Vec<f64> = vec![20.0; 3];
        (
            schedule_from_point(&problem, true, te, &w, Policy::Acs),
            fps,
        )
    }

    #[test]
    fn deadline_end_times_average_run() {
        let (ts, model) = single_frame();
        let (schedule, fps) = schedule_with(&ts, &model, &[10.0, 15.0, 20.0]);
        let trace = run_trial(&schedule, &fps, &ts, &model, &[10.0, 10.0, 10.0]).unwrap();
        assert!((trace.total_energy - 120.0).abs() < 0.5, "{}", trace.total_energy);
        assert_eq!(trace.deadline_misses, 0);
        let volts: Vec<f64> = trace.segments.iter().map(|s| s.voltage).collect();
        for (v, want) in volts.iter().zip([2.0, 2.0, 2.0]) {
            assert!((v - want).abs() < 1e-9);
        }
        let finishes: Vec<f64> = trace.instances.iter().map(|i| i.finish).collect();
        for (f, want) in finishes.iter().zip([5.0, 10.0, 15.0]) {
            assert!((f - want).abs() < 1e-9);
        }
    }

    #[test]
    fn deadline_end_times_worst_run() {
        let (ts, model) = single_frame();
        let (schedule, fps) = schedule_with(&ts, &model, &[10.0, 15.0, 20.0]);
        let trace = run_trial(&schedule, &fps, &ts, &model, &[20.0, 20.0, 20.0]).unwrap();
        assert!((trace.total_energy - 720.0).abs() < 0.5);
        assert_eq!(trace.deadline_misses, 0);
        let volts: Vec<f64> = trace.segments.iter().map(|s| s.voltage).collect();
        for (v, want) in volts.iter().zip([2.0, 4.0, 4.0]) {
            assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn compact_end_times_average_run() {
        let (ts, model) = single_frame();
        let (schedule, fps) = schedule_with(&ts, &model, &[20.0 / 3.0, 40.0 / 3.0, 20.0]);
        let trace = run_trial(&schedule, &fps, &ts, &model, &[10.0, 10.0, 10.0]).unwrap();
        // 10·9 + 10·4 + 10·(12/7)² ≈ 159.4
        assert!(
            (trace.total_energy - 159.2).abs() <= 0.01 * 159.2,
            "{}",
            trace.total_energy
        );
    }

    #[test]
    fn zero_cycles_zero_cost() {
        let (ts, model) = single_frame();
        let (schedule, fps) = schedule_with(&ts, &model, &[10.0, 15.0, 20.0]);
        let trace = run_trial(&schedule, &fps, &ts, &model, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(trace.total_energy, 0.0);
        assert!(trace.segments.is_empty());
        assert_eq!(trace.deadline_misses, 0);
    }

    #[test]
    fn sampler_sigma_and_bounds() {
        let ts = TaskSet::periodic("s", vec![Task::new(10, 70, 10.0, 1.0)]).unwrap();
        let sampler = WorkloadSampler::new(&ts);
        assert!((sampler.sigma(1) - 10.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let c = sampler.sample(1, &mut rng);
            assert!((10.0..=70.0).contains(&c));
            assert_eq!(c, c.round());
        }
    }

    #[test]
    fn sampler_degenerate_interval() {
        let ts = TaskSet::periodic(
            "deg",
            vec![Task::new(10, 50, 50.0, 1.0).with_acec(50.0)],
        )
        .unwrap();
        let sampler = WorkloadSampler::new(&ts);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sampler.sample(1, &mut rng), 50.0);
        }
    }

    #[test]
    fn sampler_mean_close_to_acec() {
        let ts = TaskSet::periodic(
            "stat",
            vec![Task::new(10, 70, 10.0, 1.0).with_acec(40.0)],
        )
        .unwrap();
        let sampler = WorkloadSampler::new(&ts);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sampler.sample(1, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 40.0).abs() < 0.2, "sample mean {mean}");
    }

    #[test]
    fn monte_carlo_deterministic_and_zero_variance_when_fixed() {
        let (ts, model) = single_frame();
        let mut fixed = ts.clone();
        for t in &mut fixed.tasks {
            t.bcec = t.wcec as f64;
            t.acec = t.wcec as f64;
        }
        let (schedule, fps) = schedule_with(&fixed, &model, &[10.0, 15.0, 20.0]);
        let a = run_monte_carlo(&schedule, &fps, &fixed, &model, 200, 9).unwrap();
        let b = run_monte_carlo(&schedule, &fps, &fixed, &model, 200, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.std_energy, 0.0);
        assert_eq!(a.deadline_misses, 0);
        assert!((a.mean_energy - 720.0).abs() < 0.5);
    }

    #[test]
    fn work_conservation() {
        let (ts, model) = single_frame();
        let (schedule, fps) = schedule_with(&ts, &model, &[10.0, 15.0, 20.0]);
        let cycles = [13.0, 4.0, 17.0];
        let trace = run_trial(&schedule, &fps, &ts, &model, &cycles).unwrap();
        for (pos, (inst, _)) in fps.instances().iter().enumerate() {
            let executed: f64 = trace
                .segments
                .iter()
                .filter(|s| s.task == inst.task && s.instance == inst.instance)
                .map(|s| s.cycles)
                .sum();
            assert!((executed - cycles[pos]).abs() < 1e-12);
        }
    }

    #[test]
    fn overcommitted_schedule_records_cap_events() {
        let (ts, model) = single_frame();
        // end times far too tight for the worst case: capped at V_max and
        // flagged, and the overrun shows up as misses
        let (schedule, fps) = schedule_with(&ts, &model, &[2.0, 3.0, 4.0]);
        let trace = run_trial(&schedule, &fps, &ts, &model, &[20.0, 20.0, 20.0]).unwrap();
        assert!(!trace.voltage_cap_events.is_empty());
        assert!(trace.segments.iter().all(|s| s.voltage <= model.v_max()));
        // segments overrun their end times but stay within the deadlines
        assert!(trace
            .segments
            .iter()
            .any(|s| s.start + s.duration > 4.0 + 1e-9));
        assert_eq!(trace.deadline_misses, 0);
    }

    #[test]
    fn rejects_cycles_above_worst_case() {
        let (ts, model) = single_frame();
        let (schedule, fps) = schedule_with(&ts, &model, &[10.0, 15.0, 20.0]);
        assert!(matches!(
            run_trial(&schedule, &fps, &ts, &model, &[25.0, 10.0, 10.0]),
            Err(SimError::CyclesAboveWorstCase { task: 1, .. })
        ));
    }
}
