//! Voltage/frequency/energy model of a variable-voltage processor.
//!
//! Two cycle-time laws are supported:
//!
//! * the alpha-power law `CT(v) = λ·v / (v − V_th)^α`, the usual CMOS
//!   delay model with a process constant `α ∈ [1, 2]`, and
//! * the inverse law `CT(v) = λ / v`, the simplified model where cycle
//!   time is inversely proportional to the supply voltage.
//!
//! Energy per task is `C·w·v²` for `w` cycles executed at voltage `v`
//! with effective switching capacitance `C`.
//!
//! The core runtime primitive is [`PowerModel::voltage_for_duration`]:
//! the smallest in-range voltage at which `w` cycles fit into a time
//! budget `d`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which cycle-time law the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// `CT(v) = λ·v / (v − V_th)^α`
    AlphaLaw,
    /// `CT(v) = λ / v` (threshold voltage treated as 0)
    InverseLaw,
}

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("invalid power model: {0}")]
    InvalidModel(String),
    #[error("voltage {v} outside supported range [{v_min}, {v_max}]")]
    VoltageOutOfRange { v: f64, v_min: f64, v_max: f64 },
    #[error("{what} must be positive (got {value})")]
    NonPositive { what: &'static str, value: f64 },
    #[error("cycle count must be non-negative (got {0})")]
    NegativeCycles(f64),
}

/// How a [`PowerModel::voltage_for_duration`] query resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoltageFit {
    /// The unclamped solution lies inside `[V_min, V_max]`.
    Exact,
    /// Even `V_min` finishes the work early; the voltage was clamped up
    /// to `V_min` and the budget has surplus time.
    SurplusAtVmin,
    /// The work does not fit even at `V_max`; the returned voltage is
    /// `V_max` and the budget is infeasible.
    InfeasibleAtVmax,
}

impl VoltageFit {
    pub fn is_feasible(self) -> bool {
        !matches!(self, VoltageFit::InfeasibleAtVmax)
    }
}

/// Result of a voltage inversion: the clamped voltage plus how it fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageChoice {
    pub voltage: f64,
    pub fit: VoltageFit,
}

/// Immutable processor power model. Construction validates the parameter
/// ranges and checks that cycle time is strictly decreasing over the
/// supported voltage range (on a 1000-point grid), so every later query
/// can rely on monotonicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    variant: ModelVariant,
    lambda: f64,
    v_th: f64,
    alpha: f64,
    v_min: f64,
    v_max: f64,
}

const MONOTONICITY_GRID: usize = 1000;
/// Relative tolerance of the bisection fallback in voltage inversion.
const BISECT_REL_TOL: f64 = 1e-12;

impl PowerModel {
    /// Alpha-power-law model `CT(v) = λ·v/(v − V_th)^α`.
    pub fn alpha_law(
        lambda: f64,
        v_th: f64,
        alpha: f64,
        v_min: f64,
        v_max: f64,
    ) -> Result<Self, PowerError> {
        let model = PowerModel {
            variant: ModelVariant::AlphaLaw,
            lambda,
            v_th,
            alpha,
            v_min,
            v_max,
        };
        model.validate()?;
        Ok(model)
    }

    /// Inverse-law model `CT(v) = λ/v`.
    pub fn inverse_law(lambda: f64, v_min: f64, v_max: f64) -> Result<Self, PowerError> {
        let model = PowerModel {
            variant: ModelVariant::InverseLaw,
            lambda,
            v_th: 0.0,
            alpha: 1.0,
            v_min,
            v_max,
        };
        model.validate()?;
        Ok(model)
    }

    /// Rebuild from raw parts (used by the file loader).
    pub fn from_parts(
        variant: ModelVariant,
        lambda: f64,
        v_th: f64,
        alpha: f64,
        v_min: f64,
        v_max: f64,
    ) -> Result<Self, PowerError> {
        match variant {
            ModelVariant::AlphaLaw => Self::alpha_law(lambda, v_th, alpha, v_min, v_max),
            ModelVariant::InverseLaw => Self::inverse_law(lambda, v_min, v_max),
        }
    }

    fn validate(&self) -> Result<(), PowerError> {
        if !(self.lambda > 0.0) {
            return Err(PowerError::InvalidModel(format!(
                "lambda must be positive (got {})",
                self.lambda
            )));
        }
        if !(self.v_min < self.v_max) {
            return Err(PowerError::InvalidModel(format!(
                "vmin {} must be strictly below vmax {}",
                self.v_min, self.v_max
            )));
        }
        if !(self.v_min > 0.0) {
            return Err(PowerError::InvalidModel(format!(
                "vmin must be positive (got {})",
                self.v_min
            )));
        }
        if self.variant == ModelVariant::AlphaLaw {
            if !(self.v_th >= 0.0) {
                return Err(PowerError::InvalidModel(format!(
                    "vth must be non-negative (got {})",
                    self.v_th
                )));
            }
            // Cycle time diverges at the threshold voltage.
            if !(self.v_th < self.v_min) {
                return Err(PowerError::InvalidModel(format!(
                    "vth {} must be strictly below vmin {}",
                    self.v_th, self.v_min
                )));
            }
            if !(1.0..=2.0).contains(&self.alpha) {
                return Err(PowerError::InvalidModel(format!(
                    "alpha must lie in [1, 2] (got {})",
                    self.alpha
                )));
            }
        }
        // There is no clean closed-form boundary for the decreasing region
        // of the alpha law at general alpha, so monotonicity is checked
        // numerically over the supported range.
        let mut prev = self.ct_unchecked(self.v_min);
        for step in 1..=MONOTONICITY_GRID {
            let v = self.v_min
                + (self.v_max - self.v_min) * (step as f64) / (MONOTONICITY_GRID as f64);
            let ct = self.ct_unchecked(v);
            if !(ct < prev) {
                return Err(PowerError::InvalidModel(format!(
                    "cycle time is not strictly decreasing near v = {v:.6}"
                )));
            }
            prev = ct;
        }
        Ok(())
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn v_th(&self) -> f64 {
        self.v_th
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn v_min(&self) -> f64 {
        self.v_min
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    fn check_range(&self, v: f64) -> Result<(), PowerError> {
        // A hair of slack so values computed right at the bounds pass.
        let eps = 1e-12 * self.v_max.max(1.0);
        if v < self.v_min - eps || v > self.v_max + eps {
            return Err(PowerError::VoltageOutOfRange {
                v,
                v_min: self.v_min,
                v_max: self.v_max,
            });
        }
        Ok(())
    }

    pub(crate) fn ct_unchecked(&self, v: f64) -> f64 {
        match self.variant {
            ModelVariant::InverseLaw => self.lambda / v,
            ModelVariant::AlphaLaw => {
                if self.alpha == 2.0 {
                    let d = v - self.v_th;
                    self.lambda * v / (d * d)
                } else {
                    self.lambda * v / (v - self.v_th).powf(self.alpha)
                }
            }
        }
    }

    /// d(CT)/dv, used by implicit differentiation of the inversion.
    pub(crate) fn ct_deriv(&self, v: f64) -> f64 {
        match self.variant {
            ModelVariant::InverseLaw => -self.lambda / (v * v),
            ModelVariant::AlphaLaw => {
                let d = v - self.v_th;
                self.lambda * (d - self.alpha * v) / d.powf(self.alpha + 1.0)
            }
        }
    }

    /// Time per cycle at supply voltage `v`.
    pub fn cycle_time(&self, v: f64) -> Result<f64, PowerError> {
        self.check_range(v)?;
        Ok(self.ct_unchecked(v))
    }

    /// Duration of `w` cycles at voltage `v`.
    pub fn exec_time(&self, w: f64, v: f64) -> Result<f64, PowerError> {
        if w < 0.0 {
            return Err(PowerError::NegativeCycles(w));
        }
        Ok(w * self.cycle_time(v)?)
    }

    /// Solve `w · CT(v) = d` for `v`, ignoring the range clamp.
    ///
    /// Closed forms exist for the inverse law and for the alpha law with
    /// `α = 2`; anything else falls back to bisection over the supported
    /// range (the caller has already established the root lies inside).
    fn invert_unclamped(&self, w: f64, d: f64) -> f64 {
        match self.variant {
            ModelVariant::InverseLaw => self.lambda * w / d,
            ModelVariant::AlphaLaw if self.alpha == 2.0 => {
                // d·v² − (2d·vth + wλ)·v + d·vth² = 0; the root above vth
                // is the larger one. The discriminant is expanded to the
                // cancellation-free product form wλ·(4d·vth + wλ).
                let wl = w * self.lambda;
                let b = 2.0 * d * self.v_th + wl;
                let disc = wl * (4.0 * d * self.v_th + wl);
                (b + disc.sqrt()) / (2.0 * d)
            }
            ModelVariant::AlphaLaw => {
                let mut lo = self.v_min;
                let mut hi = self.v_max;
                // exec_time decreases in v: root has exec(lo) >= d >= exec(hi).
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if w * self.ct_unchecked(mid) > d {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if (hi - lo) <= BISECT_REL_TOL * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Smallest voltage in `[V_min, V_max]` at which `w` cycles complete
    /// within duration `d`, together with a flag describing the clamp.
    pub fn voltage_for_duration(&self, w: f64, d: f64) -> Result<VoltageChoice, PowerError> {
        if !(w > 0.0) {
            return Err(PowerError::NonPositive {
                what: "cycle count",
                value: w,
            });
        }
        if !(d > 0.0) {
            return Err(PowerError::NonPositive {
                what: "duration",
                value: d,
            });
        }
        if w * self.ct_unchecked(self.v_min) <= d {
            return Ok(VoltageChoice {
                voltage: self.v_min,
                fit: VoltageFit::SurplusAtVmin,
            });
        }
        if w * self.ct_unchecked(self.v_max) > d {
            return Ok(VoltageChoice {
                voltage: self.v_max,
                fit: VoltageFit::InfeasibleAtVmax,
            });
        }
        let v = self.invert_unclamped(w, d).clamp(self.v_min, self.v_max);
        Ok(VoltageChoice {
            voltage: v,
            fit: VoltageFit::Exact,
        })
    }
}

/// Dynamic energy of executing `w` cycles at voltage `v` with effective
/// switching capacitance `c`.
pub fn energy(c: f64, w: f64, v: f64) -> f64 {
    c * w * v * v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inverse_unit() -> PowerModel {
        PowerModel::inverse_law(1.0, 0.7, 5.0).unwrap()
    }

    #[test]
    fn cycle_time_inverse_law() {
        let m = inverse_unit();
        assert!((m.cycle_time(2.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cycle_time_alpha_law() {
        let m = PowerModel::alpha_law(1.0, 0.7, 2.0, 1.0, 5.0).unwrap();
        // 1.7 / (1.7 - 0.7)^2 = 1.7
        assert!((m.cycle_time(1.7).unwrap() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn cycle_time_decreasing_over_range() {
        for m in [
            inverse_unit(),
            PowerModel::alpha_law(1.0, 0.7, 2.0, 1.0, 5.0).unwrap(),
            PowerModel::alpha_law(0.5, 0.4, 1.5, 0.8, 3.3).unwrap(),
        ] {
            assert!(m.cycle_time(m.v_max()).unwrap() < m.cycle_time(m.v_min()).unwrap());
        }
    }

    #[test]
    fn cycle_time_rejects_out_of_range() {
        let m = inverse_unit();
        assert!(matches!(
            m.cycle_time(0.2),
            Err(PowerError::VoltageOutOfRange { .. })
        ));
        assert!(matches!(
            m.cycle_time(6.0),
            Err(PowerError::VoltageOutOfRange { .. })
        ));
    }

    #[test]
    fn exec_time_examples() {
        let m = inverse_unit();
        assert!((m.exec_time(20.0, 2.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(m.exec_time(0.0, 3.3).unwrap(), 0.0);
        assert!((m.exec_time(20.0, 3.0).unwrap() - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        assert!((energy(1.0, 10.0, 2.0) - 40.0).abs() < 1e-12);
        assert_eq!(energy(1.0, 0.0, 4.2), 0.0);
        // three equal tasks at 3 V, 20 cycles each
        assert!((3.0 * energy(1.0, 20.0, 3.0) - 540.0).abs() < 1e-12);
    }

    #[test]
    fn voltage_for_duration_examples() {
        let m = inverse_unit();
        let c = m.voltage_for_duration(20.0, 10.0).unwrap();
        assert_eq!(c.fit, VoltageFit::Exact);
        assert!((c.voltage - 2.0).abs() < 1e-12);

        let c = m.voltage_for_duration(20.0, 5.0).unwrap();
        assert_eq!(c.fit, VoltageFit::Exact);
        assert!((c.voltage - 4.0).abs() < 1e-12);

        let tight = PowerModel::inverse_law(1.0, 0.7, 3.3).unwrap();
        let c = tight.voltage_for_duration(20.0, 5.0).unwrap();
        assert_eq!(c.fit, VoltageFit::InfeasibleAtVmax);
        assert_eq!(c.voltage, 3.3);
    }

    #[test]
    fn voltage_for_duration_surplus() {
        let m = inverse_unit();
        let c = m.voltage_for_duration(1.0, 100.0).unwrap();
        assert_eq!(c.fit, VoltageFit::SurplusAtVmin);
        assert_eq!(c.voltage, m.v_min());
    }

    #[test]
    fn voltage_for_duration_domain_errors() {
        let m = inverse_unit();
        assert!(m.voltage_for_duration(0.0, 1.0).is_err());
        assert!(m.voltage_for_duration(5.0, 0.0).is_err());
        assert!(m.voltage_for_duration(-1.0, 1.0).is_err());
    }

    #[test]
    fn alpha2_closed_form_matches_bisection() {
        // Drive the same inversion through the generic bisection path by
        // perturbing alpha to a value with no closed form.
        let closed = PowerModel::alpha_law(0.8, 0.6, 2.0, 1.0, 5.0).unwrap();
        let bisect = PowerModel::alpha_law(0.8, 0.6, 1.9999999999, 1.0, 5.0).unwrap();
        for (w, d) in [(10.0, 4.0), (3.0, 2.0), (100.0, 60.0)] {
            let a = closed.voltage_for_duration(w, d).unwrap().voltage;
            let b = bisect.voltage_for_duration(w, d).unwrap().voltage;
            assert!((a - b).abs() <= 1e-6 * a, "w={w} d={d}: {a} vs {b}");
        }
    }

    #[test]
    fn round_trip_inversion() {
        let models = [
            inverse_unit(),
            PowerModel::alpha_law(1.0, 0.7, 2.0, 1.0, 5.0).unwrap(),
            PowerModel::alpha_law(2.0, 0.5, 1.6, 0.9, 4.0).unwrap(),
        ];
        for m in &models {
            for i in 0..100 {
                let v = m.v_min() + (m.v_max() - m.v_min()) * (i as f64 + 0.5) / 100.0;
                let w = 7.0 + i as f64;
                let d = m.exec_time(w, v).unwrap();
                let back = m.voltage_for_duration(w, d).unwrap();
                assert_eq!(back.fit, VoltageFit::Exact);
                assert!(
                    (back.voltage - v).abs() <= 1e-9 * v,
                    "variant {:?}: {} vs {}",
                    m.variant(),
                    back.voltage,
                    v
                );
            }
        }
    }

    #[test]
    fn energy_monotone_in_each_argument() {
        let base = energy(1.0, 10.0, 2.0);
        assert!(energy(1.5, 10.0, 2.0) > base);
        assert!(energy(1.0, 11.0, 2.0) > base);
        assert!(energy(1.0, 10.0, 2.1) > base);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(PowerModel::alpha_law(1.0, 0.7, 2.0, 0.7, 5.0).is_err()); // vth == vmin
        assert!(PowerModel::alpha_law(1.0, 0.7, 2.5, 1.0, 5.0).is_err()); // alpha out of range
        assert!(PowerModel::inverse_law(0.0, 0.7, 5.0).is_err()); // lambda
        assert!(PowerModel::inverse_law(1.0, 5.0, 5.0).is_err()); // empty range
    }
}
