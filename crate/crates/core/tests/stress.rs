//! Randomized end-to-end sweep: generation, both solves, residuals,
//! worst-case verification, and simulation across many task sets.
//! Slow; excluded from the default run (`cargo test -- --ignored`).

use rayon::prelude::*;
use voltsched::benchgen::{generate_taskset, GenSpec};
use voltsched::fps::build_fps;
use voltsched::optimizer::{
    build_nlp, evaluate_residuals, solve_acs, solve_wcs, verify_worst_case, wcs_taskset,
    SolveOptions,
};
use voltsched::simulator::{fixed_cycles, run_monte_carlo, run_trial};

#[test]
#[ignore = "multi-minute randomized sweep"]
fn stress_many_generated_sets() {
    let cases: Vec<(usize, f64, u64)> = (0..240u64)
        .map(|i| {
            let n = 2 + (i as usize) % 9;
            let ratio = [0.1, 0.3, 0.5, 0.7, 0.9][(i as usize) % 5];
            (n, ratio, 0xABC0 + i)
        })
        .collect();
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|&(n, ratio, seed)| {
            let spec = GenSpec::new(n, ratio, seed);
            let ts = match generate_taskset(&spec) {
                Ok(ts) => ts,
                Err(e) => return Some(format!("gen n={n} r={ratio} s={seed}: {e}")),
            };
            let fps = build_fps(&ts).ok()?;
            let problem = build_nlp(&fps, &ts, &spec.model);
            let opts = SolveOptions {
                starts: 12,
                seed,
                parallel: false,
                ..SolveOptions::default()
            };
            let acs = match solve_acs(&problem, &opts) {
                Ok(s) => s,
                Err(_) => return None, // unschedulable draws are expected
            };
            let wcs = match solve_wcs(&fps, &ts, &spec.model, &opts) {
                Ok(s) => s,
                Err(e) => return Some(format!("wcs n={n} r={ratio} s={seed}: {e}")),
            };
            for (name, sched, check_ts) in
                [("acs", &acs, ts.clone()), ("wcs", &wcs, wcs_taskset(&ts))]
            {
                let res = evaluate_residuals(&sched.rows, &fps, &check_ts, &spec.model);
                if res.max_relative > 1e-6 {
                    return Some(format!("{name} residual n={n} r={ratio} s={seed}: {res}"));
                }
                let v = verify_worst_case(sched, &fps, &ts, &spec.model).unwrap();
                if !v.feasible {
                    return Some(format!(
                        "{name} verify n={n} r={ratio} s={seed}: {:?}",
                        v.violations.first()
                    ));
                }
                let wc = fixed_cycles(&fps, &ts, true);
                let tr = run_trial(sched, &fps, &ts, &spec.model, &wc).unwrap();
                if tr.deadline_misses > 0 {
                    return Some(format!(
                        "{name} forced-wc misses n={n} r={ratio} s={seed}: {}",
                        tr.deadline_misses
                    ));
                }
                let mc = run_monte_carlo(sched, &fps, &ts, &spec.model, 300, seed).unwrap();
                if mc.deadline_misses > 0 {
                    return Some(format!(
                        "{name} mc misses n={n} r={ratio} s={seed}: {}",
                        mc.deadline_misses
                    ));
                }
            }
            None
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
    eprintln!("stress: all {} cases clean", cases.len());
}
