use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DeviceArray, DeviceModel, PcmModelTables};
use crate::error::{Error, Result};
use crate::numerics::{RandomStream, RealMatrix};

/// Longest pulse train used when re-encoding a refreshed weight.
const MAX_REFRESH_PULSES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RefreshPolicy {
    /// Training examples between saturation checks.
    pub check_interval: usize,
    /// A device is saturated above `g_min + fraction·(g_max − g_min)`.
    pub saturation_fraction: f64,
}

impl Default for RefreshPolicy {
    fn default() -> Self {
        Self {
            check_interval: 100,
            saturation_fraction: 0.75,
        }
    }
}

impl RefreshPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.check_interval == 0 {
            return Err(Error::config("refresh.checkInterval", "must be >= 1"));
        }
        if !(self.saturation_fraction > 0.0 && self.saturation_fraction < 1.0) {
            return Err(Error::config(
                "refresh.saturationFraction",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// Two PCM arrays whose conductance difference encodes the weight:
/// `W = scale_k·(G+ − G−)`. Positive updates potentiate `G+`, negative
/// updates potentiate `G−`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialPair {
    g_plus: DeviceArray,
    g_minus: DeviceArray,
    scale_k: f64,
    policy: RefreshPolicy,
    tables: Arc<PcmModelTables>,
    /// Noise-free conductance after `n` pulses from `g_min`.
    trajectory: Vec<f64>,
}

impl DifferentialPair {
    pub fn new(
        rows: usize,
        cols: usize,
        tables: Arc<PcmModelTables>,
        scale_k: f64,
        policy: RefreshPolicy,
    ) -> Result<Self> {
        if !(scale_k > 0.0 && scale_k.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scaleK must be > 0, got {scale_k}"
            )));
        }
        policy.validate()?;
        let model = DeviceModel::Pcm(tables.clone());
        Ok(Self {
            g_plus: DeviceArray::new(rows, cols, model.clone()),
            g_minus: DeviceArray::new(rows, cols, model),
            scale_k,
            policy,
            trajectory: tables.mean_trajectory(MAX_REFRESH_PULSES),
            tables,
        })
    }

    pub fn rows(&self) -> usize {
        self.g_plus.rows()
    }

    pub fn cols(&self) -> usize {
        self.g_plus.cols()
    }

    pub fn scale_k(&self) -> f64 {
        self.scale_k
    }

    pub fn policy(&self) -> &RefreshPolicy {
        &self.policy
    }

    pub fn tables(&self) -> &PcmModelTables {
        &self.tables
    }

    pub fn g_plus(&self) -> &DeviceArray {
        &self.g_plus
    }

    pub fn g_minus(&self) -> &DeviceArray {
        &self.g_minus
    }

    pub fn g_plus_mut(&mut self) -> &mut DeviceArray {
        &mut self.g_plus
    }

    pub fn g_minus_mut(&mut self) -> &mut DeviceArray {
        &mut self.g_minus
    }

    #[inline]
    pub(crate) fn weight_flat(&self, idx: usize) -> f64 {
        self.scale_k * (self.g_plus.get_flat(idx) - self.g_minus.get_flat(idx))
    }

    #[inline]
    pub(crate) fn apply_pulses_flat(&mut self, idx: usize, pulses: i32, stream: &mut RandomStream) {
        if pulses > 0 {
            self.g_plus.apply_pulses_flat(idx, pulses, stream);
        } else if pulses < 0 {
            self.g_minus.apply_pulses_flat(idx, -pulses, stream);
        }
    }

    pub fn saturation_threshold(&self) -> f64 {
        self.tables.g_min + self.policy.saturation_fraction * self.tables.range()
    }

    /// Number of pulses from `g_min` whose noise-free end point is closest
    /// to `target` (µS).
    pub fn pulses_for_conductance(&self, target: f64) -> usize {
        let t = &self.trajectory;
        let above = t.partition_point(|&g| g < target).min(t.len() - 1);
        if above == 0 {
            return 0;
        }
        if (t[above] - target).abs() < (target - t[above - 1]).abs() {
            above
        } else {
            above - 1
        }
    }

    /// Re-encodes every pair with a saturated device. Returns the flat
    /// indices that were reprogrammed.
    pub fn refresh(&mut self, stream: &mut RandomStream) -> Vec<usize> {
        let threshold = self.saturation_threshold();
        let g_min = self.tables.g_min;
        let mut touched = Vec::new();
        for idx in 0..self.g_plus.state().len() {
            let gp = self.g_plus.get_flat(idx);
            let gm = self.g_minus.get_flat(idx);
            if gp <= threshold && gm <= threshold {
                continue;
            }
            let w = self.scale_k * (gp - gm);
            self.g_plus.set_flat(idx, g_min);
            self.g_minus.set_flat(idx, g_min);
            let n = self.pulses_for_conductance(w.abs() / self.scale_k) as i32;
            if n > 0 {
                let target = if w > 0.0 {
                    &mut self.g_plus
                } else {
                    &mut self.g_minus
                };
                target.apply_pulses_flat(idx, n, stream);
            }
            touched.push(idx);
        }
        touched
    }
}

/// `scale_k·(G+ − G−)` for every synapse.
pub fn pair_weight(pair: &DifferentialPair) -> Result<RealMatrix> {
    pair.g_plus
        .state()
        .zip_with(pair.g_minus.state(), |p, m| pair.scale_k * (p - m))
}

pub fn refresh_pair(pair: &mut DifferentialPair, stream: &mut RandomStream) -> Vec<usize> {
    pair.refresh(stream)
}
