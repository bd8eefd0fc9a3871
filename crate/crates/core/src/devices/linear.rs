use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RandomStream;

/// Step size for an `bits`-granular device over a range of width `range`.
///
/// The device covers its range in `2^bits - 2` steps, giving `2^bits - 1`
/// levels including zero. One bit means a single step spans the full range.
pub fn step_for_bits(bits: u32, range: f64) -> f64 {
    if bits == 1 {
        range
    } else {
        range / ((1u64 << bits) - 2) as f64
    }
}

fn check_common(w_min: f64, w_max: f64, sigma_frac: f64) -> Result<()> {
    if !(w_min.is_finite() && w_max.is_finite() && w_min < w_max) {
        return Err(Error::InvalidArgument(format!(
            "device range must satisfy wMin < wMax, got [{w_min}, {w_max}]"
        )));
    }
    if !(sigma_frac >= 0.0 && sigma_frac.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigmaFrac must be >= 0, got {sigma_frac}"
        )));
    }
    Ok(())
}

fn check_bits(name: &str, bits: u32) -> Result<()> {
    if !(1..=30).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be in 1..=30, got {bits}"
        )));
    }
    Ok(())
}

/// Symmetric linear device with `bits` update granularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDeviceSpec {
    pub bits: u32,
    pub w_min: f64,
    pub w_max: f64,
    pub sigma_frac: f64,
}

impl LinearDeviceSpec {
    pub fn new(bits: u32, sigma_frac: f64) -> Result<Self> {
        Self::with_range(bits, -1.0, 1.0, sigma_frac)
    }

    pub fn with_range(bits: u32, w_min: f64, w_max: f64, sigma_frac: f64) -> Result<Self> {
        check_bits("bits", bits)?;
        check_common(w_min, w_max, sigma_frac)?;
        Ok(Self {
            bits,
            w_min,
            w_max,
            sigma_frac,
        })
    }

    pub fn epsilon(&self) -> f64 {
        step_for_bits(self.bits, self.w_max - self.w_min)
    }

    pub fn response(&self) -> StepResponse {
        StepResponse {
            eps_p: self.epsilon(),
            eps_d: self.epsilon(),
            sigma_frac: self.sigma_frac,
            w_min: self.w_min,
            w_max: self.w_max,
        }
    }
}

/// Linear device with independent potentiation and depression granularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricDeviceSpec {
    pub bits_p: u32,
    pub bits_d: u32,
    pub w_min: f64,
    pub w_max: f64,
    pub sigma_frac: f64,
}

impl AsymmetricDeviceSpec {
    pub fn new(bits_p: u32, bits_d: u32, sigma_frac: f64) -> Result<Self> {
        check_bits("bitsP", bits_p)?;
        check_bits("bitsD", bits_d)?;
        check_common(-1.0, 1.0, sigma_frac)?;
        Ok(Self {
            bits_p,
            bits_d,
            w_min: -1.0,
            w_max: 1.0,
            sigma_frac,
        })
    }

    pub fn epsilon_p(&self) -> f64 {
        step_for_bits(self.bits_p, self.w_max - self.w_min)
    }

    pub fn epsilon_d(&self) -> f64 {
        step_for_bits(self.bits_d, self.w_max - self.w_min)
    }

    pub fn response(&self) -> StepResponse {
        StepResponse {
            eps_p: self.epsilon_p(),
            eps_d: self.epsilon_d(),
            sigma_frac: self.sigma_frac,
            w_min: self.w_min,
            w_max: self.w_max,
        }
    }
}

/// Runtime pulse response shared by the linear and asymmetric specs: each
/// pulse moves the weight by `N(±ε, (σ_frac·ε)²)`, clamped to the range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponse {
    pub eps_p: f64,
    pub eps_d: f64,
    pub sigma_frac: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl StepResponse {
    pub fn apply(&self, mut w: f64, pulses: i32, stream: &mut RandomStream) -> f64 {
        let (mean, eps) = if pulses > 0 {
            (self.eps_p, self.eps_p)
        } else {
            (-self.eps_d, self.eps_d)
        };
        let std = self.sigma_frac * eps;
        for _ in 0..pulses.unsigned_abs() {
            w = (w + stream.normal_unchecked(mean, std)).clamp(self.w_min, self.w_max);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_follows_granularity_rule() {
        assert_eq!(LinearDeviceSpec::new(2, 0.0).unwrap().epsilon(), 1.0);
        assert!((LinearDeviceSpec::new(3, 0.0).unwrap().epsilon() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(LinearDeviceSpec::new(1, 0.0).unwrap().epsilon(), 2.0);
        let asym = AsymmetricDeviceSpec::new(8, 1, 0.0).unwrap();
        assert_eq!(asym.epsilon_p(), 2.0 / 254.0);
        assert_eq!(asym.epsilon_d(), 2.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(LinearDeviceSpec::new(0, 0.0).is_err());
        assert!(LinearDeviceSpec::new(4, -0.5).is_err());
        assert!(LinearDeviceSpec::with_range(4, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn full_range_takes_two_pow_n_minus_two_pulses() {
        let mut s = RandomStream::new(0, 0);
        for bits in 2..=8 {
            let spec = LinearDeviceSpec::new(bits, 0.0).unwrap();
            let r = spec.response();
            let steps = (1i32 << bits) - 2;
            let mut w = -1.0;
            for _ in 0..steps - 1 {
                w = r.apply(w, 1, &mut s);
            }
            assert!(w < 1.0 - 1e-9, "bits {bits} reached the top early");
            w = r.apply(w, 1, &mut s);
            assert!((w - 1.0).abs() < 1e-9, "bits {bits}: {w}");
        }
    }
}
