//! Phase-change memory device model.
//!
//! Each programming pulse changes the conductance by a Gaussian `ΔG` whose
//! mean and standard deviation are piecewise-linear functions of the current
//! conductance, read from a table of knots. Outside the knot range the end
//! values are held constant. Conductances are in microsiemens.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RandomStream;

const DEFAULT_TABLES: &str = include_str!("../../../../configs/pcm_default_tables.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PcmModelTables {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub knots: Vec<f64>,
    pub mu_delta_g: Vec<f64>,
    pub sigma_delta_g: Vec<f64>,
    pub g_min: f64,
    pub g_max: f64,
}

impl PcmModelTables {
    /// Tables shipped in `configs/pcm_default_tables.json`.
    pub fn default_tables() -> Self {
        Self::from_json(DEFAULT_TABLES).expect("shipped PCM tables are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tables: Self = serde_json::from_str(text)?;
        tables.validate()?;
        Ok(tables)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::DataFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.knots.len();
        if n == 0 {
            return Err(Error::config("knots", "at least one knot is required"));
        }
        if self.mu_delta_g.len() != n {
            return Err(Error::config(
                "muDeltaG",
                format!("expected {n} entries, got {}", self.mu_delta_g.len()),
            ));
        }
        if self.sigma_delta_g.len() != n {
            return Err(Error::config(
                "sigmaDeltaG",
                format!("expected {n} entries, got {}", self.sigma_delta_g.len()),
            ));
        }
        if self.knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("knots", "must be strictly ascending"));
        }
        if self.sigma_delta_g.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::config("sigmaDeltaG", "entries must be >= 0"));
        }
        let all_finite = self
            .knots
            .iter()
            .chain(&self.mu_delta_g)
            .chain(&self.sigma_delta_g)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::config("knots", "table entries must be finite"));
        }
        if !(self.g_min.is_finite() && self.g_max.is_finite() && self.g_min < self.g_max) {
            return Err(Error::config("gMin", "must satisfy gMin < gMax"));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.g_max - self.g_min
    }

    pub fn g_mid(&self) -> f64 {
        self.g_min + 0.5 * self.range()
    }

    pub fn mu_at(&self, g: f64) -> f64 {
        interpolate(&self.knots, &self.mu_delta_g, g)
    }

    pub fn sigma_at(&self, g: f64) -> f64 {
        interpolate(&self.knots, &self.sigma_delta_g, g)
    }

    /// Same tables with every standard deviation zeroed.
    pub fn noiseless(&self) -> Self {
        Self {
            sigma_delta_g: vec![0.0; self.knots.len()],
            ..self.clone()
        }
    }

    /// Noise-free conductance after each of `0..=max_pulses` pulses from `g_min`.
    pub fn mean_trajectory(&self, max_pulses: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(max_pulses + 1);
        let mut g = self.g_min;
        out.push(g);
        for _ in 0..max_pulses {
            g = (g + self.mu_at(g)).clamp(self.g_min, self.g_max);
            out.push(g);
        }
        out
    }
}

/// Piecewise-linear interpolation with constant extrapolation.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// One potentiation pulse: `g + N(μ(g), σ(g)²)`, clamped to the table bounds.
pub fn pcm_apply_pulse(g: f64, tables: &PcmModelTables, stream: &mut RandomStream) -> f64 {
    let dg = stream.normal_unchecked(tables.mu_at(g), tables.sigma_at(g));
    (g + dg).clamp(tables.g_min, tables.g_max)
}
