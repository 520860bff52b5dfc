//! Offline voltage scheduling for preemptive real-time task sets.
//!
//! The crate computes static voltage schedules for frame-based,
//! rate-monotonic task sets on a variable-voltage processor and simulates
//! their runtime behaviour under workload variation:
//!
//! * [`taskmodel`] — periodic tasks, instance expansion over the
//!   hyper-period, validation.
//! * [`power`] — the voltage/frequency/energy model and its inversion.
//! * [`fps`] — the fully preemptive schedule: every possible sub-instance
//!   and their total execution order.
//! * [`optimizer`] — the end-time/workload optimization producing the
//!   static schedule (average-case objective, worst-case constraints),
//!   the worst-case-only baseline, and a worst-case feasibility verifier.
//! * [`simulator`] — runtime DVS simulation with greedy slack reclamation
//!   and Monte Carlo aggregation.
//! * [`benchgen`] — random task-set generation for benchmark sweeps.
//! * [`experiment`] — the ACS-vs-WCS sweep harness behind the CLI.
//! * [`files`] — on-disk formats (task sets, schedules, manifests).
//!
//! ```
//! use voltsched::{build_fps, build_nlp, run_monte_carlo, solve_acs, solve_wcs};
//! use voltsched::optimizer::SolveOptions;
//! use voltsched::power::PowerModel;
//! use voltsched::taskmodel::{Task, TaskSet};
//!
//! let taskset = TaskSet::periodic(
//!     "example",
//!     vec![Task::new(4, 6, 2.0, 1.0), Task::new(6, 6, 2.0, 1.0)],
//! )?;
//! let model = PowerModel::alpha_law(1.0, 0.7, 2.0, 1.0, 5.0)?;
//! let fps = build_fps(&taskset)?;
//!
//! let opts = SolveOptions::default();
//! let acs = solve_acs(&build_nlp(&fps, &taskset, &model), &opts)?;
//! let wcs = solve_wcs(&fps, &taskset, &model, &opts)?;
//!
//! let sampled = run_monte_carlo(&acs, &fps, &taskset, &model, 200, 1)?;
//! let baseline = run_monte_carlo(&wcs, &fps, &taskset, &model, 200, 1)?;
//! assert_eq!(sampled.deadline_misses + baseline.deadline_misses, 0);
//! assert!(sampled.mean_energy <= baseline.mean_energy);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod benchgen;
pub mod experiment;
pub mod files;
pub mod fps;
pub mod optimizer;
pub mod power;
pub mod simulator;
pub mod taskmodel;

pub use fps::{build_fps, FpSchedule, SubInstance};
pub use optimizer::{
    average_fill, build_nlp, solve_acs, solve_wcs, verify_worst_case, NlpProblem, SolveOptions,
    StaticSchedule,
};
pub use power::{energy, PowerModel};
pub use simulator::{run_monte_carlo, run_trial, MonteCarloResult, Trace, WorkloadSampler};
pub use taskmodel::{expand_instances, hyperperiod, validate_taskset, Task, TaskInstance, TaskSet};
