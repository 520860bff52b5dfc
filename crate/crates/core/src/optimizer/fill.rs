//! Greedy distribution of an instance's average workload over its
//! sub-instance budgets.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FillError {
    #[error("average workload {acec} exceeds total sub-instance capacity {capacity}")]
    InfeasibleFill { acec: f64, capacity: f64 },
    #[error("sub-instance capacity must be non-negative (got {0})")]
    NegativeCapacity(f64),
    #[error("average workload must be non-negative (got {0})")]
    NegativeWorkload(f64),
}

/// Distribute `acec` cycles over sub-instances with worst-case budgets
/// `w_hat`, front-to-back: a sub-instance only receives work once every
/// earlier one is filled to its budget, so
/// `w̄_k = min(ŵ_k, max(0, acec − Σ_{k'<k} ŵ_{k'}))`.
///
/// This is the unique assignment in which work never spills past an
/// unfilled budget, mirroring how the runtime consumes budgets in order.
pub fn average_fill(acec: f64, w_hat: &[f64]) -> Result<Vec<f64>, FillError> {
    if acec < 0.0 {
        return Err(FillError::NegativeWorkload(acec));
    }
    if let Some(&bad) = w_hat.iter().find(|&&w| w < 0.0) {
        return Err(FillError::NegativeCapacity(bad));
    }
    let capacity: f64 = w_hat.iter().sum();
    if acec > capacity * (1.0 + 1e-12) + 1e-12 {
        return Err(FillError::InfeasibleFill { acec, capacity });
    }
    let mut remaining = acec.min(capacity);
    let mut out = Vec::with_capacity(w_hat.len());
    for &cap in w_hat {
        let take = cap.min(remaining);
        out.push(take);
        remaining -= take;
        if remaining < 0.0 {
            remaining = 0.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_case() {
        let fill = average_fill(15.0, &[10.0, 10.0, 10.0]).unwrap();
        assert_eq!(fill, vec![10.0, 5.0, 0.0]);
    }

    #[test]
    fn single_full_budget() {
        assert_eq!(average_fill(20.0, &[20.0]).unwrap(), vec![20.0]);
    }

    #[test]
    fn zero_workload() {
        assert_eq!(
            average_fill(0.0, &[3.0, 1.0, 7.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn infeasible_workload() {
        assert!(matches!(
            average_fill(10.0, &[4.0, 4.0]),
            Err(FillError::InfeasibleFill { .. })
        ));
    }

    proptest! {
        /// The fill satisfies the constraint system it stands in for:
        /// the per-instance sum (11), the budget bound (13), and the
        /// full-until-exhausted rule (14) via the leftover variable
        /// ol_k = acec − Σ_{k'≤k} w̄_{k'}.
        #[test]
        fn fill_satisfies_workload_constraints(
            caps in proptest::collection::vec(0.0f64..50.0, 1..8),
            frac in 0.0f64..=1.0,
        ) {
            let capacity: f64 = caps.iter().sum();
            let acec = frac * capacity;
            let fill = average_fill(acec, &caps).unwrap();

            // (11): sum equals the average workload
            let total: f64 = fill.iter().sum();
            prop_assert!((total - acec).abs() <= 1e-9 * acec.max(1.0));

            let mut cum = 0.0;
            for (k, (&w_bar, &cap)) in fill.iter().zip(&caps).enumerate() {
                // (13): never exceeds the budget
                prop_assert!(w_bar <= cap + 1e-12);
                prop_assert!(w_bar >= 0.0);
                cum += w_bar;
                let ol = acec - cum;
                prop_assert!(ol >= -1e-9 * acec.max(1.0));
                // (14): while work remains, the sub-instance is full
                if ol > 1e-9 * acec.max(1.0) {
                    prop_assert!(
                        (w_bar - cap).abs() <= 1e-9 * cap.max(1.0),
                        "sub {} not full while ol={}", k, ol
                    );
                }
            }
        }
    }
}
