//! Random task-set generation for benchmark sweeps.
//!
//! Periods (= deadlines) are drawn uniformly from an integer range;
//! worst-case cycles are scaled so the task set loads the processor to a
//! target utilization when everything runs at `V_max`; best-case cycles
//! are a fixed ratio of the worst case and the average sits at the
//! midpoint. Draws whose fully preemptive expansion would exceed the
//! sub-instance cap are discarded and redrawn rather than truncated, so
//! accepted sets always expand within the cap.

use crate::files;
use crate::fps::{build_fps_with_cap, FpsError};
use crate::power::PowerModel;
use crate::taskmodel::{Task, TaskSet};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("generation retry budget exhausted; binding constraint: {binding}")]
    RetryBudgetExhausted { binding: String },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

fn default_model() -> PowerModel {
    PowerModel::alpha_law(1.0, 0.7, 2.0, 1.0, 5.0).expect("default model is valid")
}

/// What to generate. Identical specs (including the seed) produce
/// identical task sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    /// Number of tasks.
    pub tasks: usize,
    /// BCEC/WCEC ratio in (0, 1].
    pub ratio: f64,
    /// Target processor utilization with every task at `V_max`.
    pub utilization: f64,
    /// Inclusive period range.
    pub period_range: (u64, u64),
    /// Reject draws whose expansion exceeds this many sub-instances.
    pub sub_instance_cap: usize,
    /// Switching capacitance given to every task.
    pub capacitance: f64,
    pub seed: u64,
    /// Power model embedded in the generated set.
    pub model: PowerModel,
}

impl GenSpec {
    pub fn new(tasks: usize, ratio: f64, seed: u64) -> Self {
        GenSpec {
            tasks,
            ratio,
            utilization: 0.7,
            period_range: (10, 100),
            sub_instance_cap: 1000,
            capacitance: 1.0,
            seed,
            model: default_model(),
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.tasks == 0 {
            return Err(GenError::InvalidSpec("task count must be positive".into()));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(GenError::InvalidSpec(format!(
                "bcec/wcec ratio must lie in (0, 1] (got {})",
                self.ratio
            )));
        }
        if !(self.utilization > 0.0 && self.utilization < 1.0) {
            return Err(GenError::InvalidSpec(format!(
                "utilization must lie in (0, 1) (got {})",
                self.utilization
            )));
        }
        if self.period_range.0 == 0 || self.period_range.0 > self.period_range.1 {
            return Err(GenError::InvalidSpec(format!(
                "bad period range {:?}",
                self.period_range
            )));
        }
        if !(self.capacitance > 0.0) {
            return Err(GenError::InvalidSpec("capacitance must be positive".into()));
        }
        Ok(())
    }
}

/// Utilization of the set with every task running at `V_max`.
pub fn utilization_at_vmax(ts: &TaskSet, model: &PowerModel) -> f64 {
    let ct = model.cycle_time(model.v_max()).expect("vmax in range");
    ts.tasks
        .iter()
        .map(|t| t.wcec as f64 * ct / t.period as f64)
        .sum()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Draw periods one at a time, redrawing any period that would push the
/// running LCM past `lcm_cap`.
fn draw_periods(
    rng: &mut ChaCha8Rng,
    n: usize,
    range: (u64, u64),
    lcm_cap: u64,
) -> Option<Vec<u64>> {
    let mut periods = Vec::with_capacity(n);
    let mut l: u64 = 1;
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..400 {
            let p = rng.random_range(range.0..=range.1);
            let l2 = l / gcd(l, p) * p;
            if l2 <= lcm_cap {
                periods.push(p);
                l = l2;
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(periods)
}

/// Generate one task set per the spec.
pub fn generate_taskset(spec: &GenSpec) -> Result<TaskSet, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ct_vmax = spec
        .model
        .cycle_time(spec.model.v_max())
        .expect("vmax in range");

    // The LCM budget starts generous and tightens whenever the expansion
    // blows the sub-instance cap.
    let mut lcm_cap: u64 = 2000;
    let mut last_failure = "period LCM within the sub-instance cap".to_string();

    for _restart in 0..80 {
        let Some(periods) = draw_periods(&mut rng, spec.tasks, spec.period_range, lcm_cap) else {
            lcm_cap = (lcm_cap * 8 / 10).max(spec.period_range.1);
            continue;
        };

        // Utilization shares proportional to uniform raw weights.
        let weights: Vec<f64> = (0..spec.tasks).map(|_| rng.random::<f64>() + 1e-3).collect();
        let weight_sum: f64 = weights.iter().sum();
        let mut wcecs: Vec<u64> = periods
            .iter()
            .zip(&weights)
            .map(|(&p, &w)| {
                let share = spec.utilization * w / weight_sum;
                ((share * p as f64 / ct_vmax).round() as u64).max(1)
            })
            .collect();

        // One correction pass on the largest task re-hits the target
        // after integer rounding.
        let util = |wcecs: &[u64]| -> f64 {
            wcecs
                .iter()
                .zip(&periods)
                .map(|(&w, &p)| w as f64 * ct_vmax / p as f64)
                .sum()
        };
        let largest = (0..spec.tasks).max_by_key(|&i| wcecs[i]).unwrap();
        let delta = (spec.utilization - util(&wcecs)) * periods[largest] as f64 / ct_vmax;
        let corrected = (wcecs[largest] as f64 + delta).round().max(1.0) as u64;
        wcecs[largest] = corrected;
        if (util(&wcecs) - spec.utilization).abs() > 0.01 {
            last_failure = format!(
                "utilization {:.4} not within 0.01 of target {}",
                util(&wcecs),
                spec.utilization
            );
            continue;
        }

        let mut tasks: Vec<Task> = periods
            .iter()
            .zip(&wcecs)
            .map(|(&p, &w)| Task::new(p, w, spec.ratio * w as f64, spec.capacitance))
            .collect();
        tasks.sort_by_key(|t| t.period);

        let ts = TaskSet::periodic(format!("gen-n{}-s{}", spec.tasks, spec.seed), tasks)
            .expect("periods positive");

        match build_fps_with_cap(&ts, spec.sub_instance_cap) {
            Ok(_) => return Ok(ts),
            Err(FpsError::TooManySubInstances { count, cap }) => {
                last_failure = format!("expansion produced {count} sub-instances (cap {cap})");
                lcm_cap = (lcm_cap * 7 / 10).max(spec.period_range.1);
            }
            Err(e) => {
                last_failure = e.to_string();
            }
        }
    }
    Err(GenError::RetryBudgetExhausted {
        binding: last_failure,
    })
}

/// Re-exported file operations, so generation and persistence live side
/// by side.
pub use files::{load_taskset, save_taskset};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fps::build_fps_with_cap;

    #[test]
    fn utilization_hits_target() {
        for seed in [1, 7, 42] {
            let spec = GenSpec::new(3, 0.5, seed);
            let ts = generate_taskset(&spec).unwrap();
            let u = utilization_at_vmax(&ts, &spec.model);
            assert!((0.69..=0.71).contains(&u), "seed {seed}: utilization {u}");
        }
    }

    #[test]
    fn ratio_defines_bcec() {
        let spec = GenSpec::new(4, 0.9, 11);
        let ts = generate_taskset(&spec).unwrap();
        for t in &ts.tasks {
            assert!((t.bcec - 0.9 * t.wcec as f64).abs() < 1e-9);
            assert!((t.acec - (t.bcec + t.wcec as f64) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn expansion_within_cap() {
        for (n, seed) in [(2, 3), (5, 19), (10, 23), (10, 77)] {
            let spec = GenSpec::new(n, 0.1, seed);
            let ts = generate_taskset(&spec).unwrap();
            let fps = build_fps_with_cap(&ts, spec.sub_instance_cap).unwrap();
            assert!(fps.len() <= 1000, "n={n} seed={seed}: {} subs", fps.len());
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = GenSpec::new(6, 0.3, 1234);
        let a = generate_taskset(&spec).unwrap();
        let b = generate_taskset(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(matches!(
            generate_taskset(&GenSpec::new(3, 1.5, 0)),
            Err(GenError::InvalidSpec(_))
        ));
        assert!(matches!(
            generate_taskset(&GenSpec::new(0, 0.5, 0)),
            Err(GenError::InvalidSpec(_))
        ));
    }

    #[test]
    fn periods_ordered_and_in_range() {
        let spec = GenSpec::new(8, 0.5, 5);
        let ts = generate_taskset(&spec).unwrap();
        for w in ts.tasks.windows(2) {
            assert!(w[0].period <= w[1].period);
        }
        for t in &ts.tasks {
            assert!((10..=100).contains(&t.period));
            assert!(t.wcec >= 1);
        }
    }
}
