use serde::{Deserialize, Serialize};

use super::Direction;
use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 200;

/// Exponential state-dependent device: updates shrink as the weight
/// approaches the boundary it is being driven toward.
///
/// `alpha` is calibrated so that `steps` noise-free potentiation pulses
/// carry the device from `w_min` to `w_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearExpSpec {
    pub beta: f64,
    pub steps: u32,
    pub w_min: f64,
    pub w_max: f64,
    pub alpha: f64,
}

impl NonlinearExpSpec {
    pub fn calibrated(beta: f64, steps: u32, w_min: f64, w_max: f64) -> Result<Self> {
        let alpha = calibrate_alpha(beta, steps, w_min, w_max)?;
        Ok(Self {
            beta,
            steps,
            w_min,
            w_max,
            alpha,
        })
    }

    pub fn epsilon(&self) -> f64 {
        (self.w_max - self.w_min) / self.steps as f64
    }

    pub fn delta(&self, w: f64, direction: Direction) -> f64 {
        nonlinear_delta(w, direction, self)
    }

    pub fn apply(&self, mut w: f64, pulses: i32) -> f64 {
        let direction = if pulses > 0 {
            Direction::Potentiation
        } else {
            Direction::Depression
        };
        for _ in 0..pulses.unsigned_abs() {
            let d = self.delta(w, direction);
            w = match direction {
                Direction::Potentiation => w + d,
                Direction::Depression => w - d,
            }
            .clamp(self.w_min, self.w_max);
        }
        w
    }
}

/// Magnitude of one pulse's weight change at state `w`.
pub fn nonlinear_delta(w: f64, direction: Direction, spec: &NonlinearExpSpec) -> f64 {
    let range = spec.w_max - spec.w_min;
    let distance = match direction {
        Direction::Potentiation => w - spec.w_min,
        Direction::Depression => spec.w_max - w,
    };
    spec.alpha * (-spec.beta * distance / range).exp()
}

/// Final state after `steps` unclamped potentiation pulses from `w_min`.
fn potentiate_from_bottom(alpha: f64, beta: f64, steps: u32, w_min: f64, w_max: f64) -> f64 {
    let range = w_max - w_min;
    let mut w = w_min;
    for _ in 0..steps {
        w += alpha * (-beta * (w - w_min) / range).exp();
    }
    w
}

/// Bisection on `alpha` so that `steps` potentiation pulses starting at
/// `w_min` end within `1e-9 * (w_max - w_min)` of `w_max`.
pub fn calibrate_alpha(beta: f64, steps: u32, w_min: f64, w_max: f64) -> Result<f64> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    if !(w_min < w_max) {
        return Err(Error::InvalidArgument(format!(
            "range must satisfy wMin < wMax, got [{w_min}, {w_max}]"
        )));
    }
    let range = w_max - w_min;
    if beta == 0.0 {
        return Ok(range / steps as f64);
    }
    let tol = 1e-9 * range;
    let (mut lo, mut hi) = (0.0, range);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let end = potentiate_from_bottom(mid, beta, steps, w_min, w_max);
        if (end - w_max).abs() <= tol {
            return Ok(mid);
        }
        if end < w_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "alpha bisection did not converge for beta={beta}, steps={steps}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent forward iteration of the potentiation rule.
    fn oracle_endpoint(alpha: f64, beta: f64, steps: u32) -> f64 {
        let mut w: f64 = -1.0;
        for _ in 0..steps {
            let x = (w + 1.0) / 2.0;
            w += alpha * f64::exp(-beta * x);
        }
        w
    }

    #[test]
    fn linear_case_is_exact() {
        assert_eq!(calibrate_alpha(0.0, 14, -1.0, 1.0).unwrap(), 1.0 / 7.0);
        let spec = NonlinearExpSpec::calibrated(0.0, 14, -1.0, 1.0).unwrap();
        for w in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(spec.delta(w, Direction::Potentiation), spec.alpha);
            assert_eq!(spec.delta(w, Direction::Depression), spec.alpha);
        }
    }

    #[test]
    fn calibration_passes_forward_iteration_oracle() {
        for beta in [0.0, 1.0, 2.0, 3.0, 5.0] {
            let alpha = calibrate_alpha(beta, 14, -1.0, 1.0).unwrap();
            let end = oracle_endpoint(alpha, beta, 14);
            assert!((end - 1.0).abs() <= 2e-9, "beta {beta}: end {end}");
        }
    }

    #[test]
    fn alpha_increases_with_beta() {
        let alphas: Vec<f64> = [0.0, 1.0, 2.0, 3.0, 5.0]
            .iter()
            .map(|&b| calibrate_alpha(b, 14, -1.0, 1.0).unwrap())
            .collect();
        assert!(alphas.windows(2).all(|w| w[1] > w[0]), "{alphas:?}");
    }

    #[test]
    fn delta_endpoints() {
        let spec = NonlinearExpSpec::calibrated(5.0, 14, -1.0, 1.0).unwrap();
        assert_eq!(spec.delta(-1.0, Direction::Potentiation), spec.alpha);
        let top = spec.delta(1.0, Direction::Potentiation);
        assert!((top - spec.alpha * (-5.0f64).exp()).abs() < 1e-15);
        assert_eq!(spec.delta(1.0, Direction::Depression), spec.alpha);
    }

    #[test]
    fn potentiation_and_depression_mirror() {
        let spec = NonlinearExpSpec::calibrated(3.0, 14, -1.0, 1.0).unwrap();
        for k in 0..=40 {
            let w = -1.0 + 2.0 * k as f64 / 40.0;
            let p = spec.delta(w, Direction::Potentiation);
            let d = spec.delta(spec.w_max + spec.w_min - w, Direction::Depression);
            assert!((p - d).abs() < 1e-15);
        }
    }

    #[test]
    fn pulses_stay_in_range() {
        let spec = NonlinearExpSpec::calibrated(5.0, 14, -1.0, 1.0).unwrap();
        let w = spec.apply(-1.0, 40);
        assert!(w <= 1.0);
        let w = spec.apply(w, -40);
        assert!(w >= -1.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(calibrate_alpha(1.0, 0, -1.0, 1.0).is_err());
        assert!(calibrate_alpha(-1.0, 14, -1.0, 1.0).is_err());
    }
}
