//! Stochastic resistive-device models.
//!
//! A [`DeviceArray`] holds the hidden state of every device in a crossbar
//! together with the model that decides how that state responds to blind
//! programming pulses. Callers only ever send pulse counts; the resulting
//! state is never returned to the training loop.

mod linear;
mod nonlinear;
mod pair;
mod pcm;

use std::sync::Arc;

pub use linear::{step_for_bits, AsymmetricDeviceSpec, LinearDeviceSpec, StepResponse};
pub use nonlinear::{calibrate_alpha, nonlinear_delta, NonlinearExpSpec};
pub use pair::{pair_weight, refresh_pair, DifferentialPair, RefreshPolicy};
pub use pcm::{pcm_apply_pulse, PcmModelTables};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RandomStream, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Direction {
    Potentiation,
    Depression,
}

/// How PCM devices realize a synaptic weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PcmMode {
    /// `W = k·(G+ − G−)` with periodic refresh.
    Differential,
    /// One device per synapse mapped affinely onto `[-1, 1]`; depression
    /// resets the device to `g_min`.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcmSpec {
    pub tables: Arc<PcmModelTables>,
    pub mode: PcmMode,
    /// Accumulate-and-fire threshold in weight units; `None` uses the mean
    /// single-pulse weight change at mid-range conductance.
    pub epsilon: Option<f64>,
    pub refresh: RefreshPolicy,
    /// Mean of the initial conductance distribution, µS.
    pub init_mean: f64,
}

impl PcmSpec {
    /// Weight change per microsiemens.
    pub fn weight_per_us(&self) -> f64 {
        match self.mode {
            PcmMode::Differential => 1.0 / self.tables.range(),
            PcmMode::Single => 2.0 / self.tables.range(),
        }
    }

    pub fn mid_range_epsilon(&self) -> f64 {
        self.weight_per_us() * self.tables.mu_at(self.tables.g_mid())
    }
}

/// Resolved device description for one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceSpec {
    Linear(LinearDeviceSpec),
    Asymmetric(AsymmetricDeviceSpec),
    Nonlinear(NonlinearExpSpec),
    Pcm(PcmSpec),
}

/// Accumulate-and-fire threshold for `direction`, in weight units.
pub fn epsilon_of(spec: &DeviceSpec, direction: Direction) -> f64 {
    match spec {
        DeviceSpec::Linear(s) => s.epsilon(),
        DeviceSpec::Asymmetric(s) => match direction {
            Direction::Potentiation => s.epsilon_p(),
            Direction::Depression => s.epsilon_d(),
        },
        DeviceSpec::Nonlinear(s) => s.epsilon(),
        DeviceSpec::Pcm(s) => {
            let eps = s.epsilon.unwrap_or_else(|| s.mid_range_epsilon());
            match (s.mode, direction) {
                (PcmMode::Single, Direction::Depression) => 2.0,
                _ => eps,
            }
        }
    }
}

/// Pulse response of a single device.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceModel {
    Step(StepResponse),
    Exponential(NonlinearExpSpec),
    /// Potentiation follows the tables; any depression request resets the
    /// device to `g_min`.
    Pcm(Arc<PcmModelTables>),
}

impl DeviceModel {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            DeviceModel::Step(r) => (r.w_min, r.w_max),
            DeviceModel::Exponential(s) => (s.w_min, s.w_max),
            DeviceModel::Pcm(t) => (t.g_min, t.g_max),
        }
    }

    pub fn apply(&self, state: f64, pulses: i32, stream: &mut RandomStream) -> f64 {
        match self {
            DeviceModel::Step(r) => r.apply(state, pulses, stream),
            DeviceModel::Exponential(s) => s.apply(state, pulses),
            DeviceModel::Pcm(t) => {
                if pulses < 0 {
                    t.g_min
                } else {
                    (0..pulses).fold(state, |g, _| pcm_apply_pulse(g, t, stream))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceArray {
    state: RealMatrix,
    model: DeviceModel,
}

impl DeviceArray {
    /// All devices start at the lower bound for PCM, at `0` (clamped into
    /// range) otherwise.
    pub fn new(rows: usize, cols: usize, model: DeviceModel) -> Self {
        let (lo, hi) = model.bounds();
        let start = match model {
            DeviceModel::Pcm(_) => lo,
            _ => 0.0f64.clamp(lo, hi),
        };
        Self {
            state: RealMatrix::filled(rows, cols, start),
            model,
        }
    }

    pub fn rows(&self) -> usize {
        self.state.rows()
    }

    pub fn cols(&self) -> usize {
        self.state.cols()
    }

    pub fn model(&self) -> &DeviceModel {
        &self.model
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.model.bounds()
    }

    pub fn state(&self) -> &RealMatrix {
        &self.state
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.state.get(i, j)
    }

    #[inline]
    pub(crate) fn get_flat(&self, idx: usize) -> f64 {
        self.state.as_slice()[idx]
    }

    /// Sets a device state, clamped into bounds.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let idx = self.state.checked_index(i, j)?;
        self.set_flat(idx, value);
        Ok(())
    }

    pub(crate) fn set_flat(&mut self, idx: usize, value: f64) {
        let (lo, hi) = self.bounds();
        self.state.as_mut_slice()[idx] = value.clamp(lo, hi);
    }

    pub fn apply_pulses(
        &mut self,
        i: usize,
        j: usize,
        pulses: i32,
        stream: &mut RandomStream,
    ) -> Result<()> {
        if pulses == 0 {
            return Err(Error::InvalidArgument("pulse count must be nonzero".into()));
        }
        let idx = self.state.checked_index(i, j)?;
        self.apply_pulses_flat(idx, pulses, stream);
        Ok(())
    }

    #[inline]
    pub(crate) fn apply_pulses_flat(&mut self, idx: usize, pulses: i32, stream: &mut RandomStream) {
        let cell = &mut self.state.as_mut_slice()[idx];
        *cell = self.model.apply(*cell, pulses, stream);
    }
}

/// Sequential Gaussian pulses on a linear device at `(i, j)`.
pub fn apply_pulses_linear(
    array: &mut DeviceArray,
    i: usize,
    j: usize,
    pulses: i32,
    stream: &mut RandomStream,
) -> Result<()> {
    if !matches!(array.model(), DeviceModel::Step(_)) {
        return Err(Error::InvalidArgument(
            "apply_pulses_linear needs a linear device array".into(),
        ));
    }
    array.apply_pulses(i, j, pulses, stream)
}
