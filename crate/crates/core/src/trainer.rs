//! Mixed-precision training engine.
//!
//! Forward and backward weighted sums run on crossbar layers. Requested
//! weight updates `ΔW = −η·δ·xᵀ` accumulate per synapse in a high-precision
//! buffer `χ`; whenever `χ` reaches a whole multiple of the device
//! granularity `ε`, that many pulses are fired at the device and the same
//! amount is removed from `χ`. The devices are never read back.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crossbar::{AdcCalibration, CrossbarLayer, Pass, PulseMatrix, Synapses, WeightMap};
use crate::dataio::Dataset;
use crate::devices::{
    epsilon_of, DeviceArray, DeviceModel, DeviceSpec, DifferentialPair, Direction, PcmMode,
};
use crate::error::{Error, Result};
use crate::numerics::{RandomStream, RealMatrix, StreamPurpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum UpdateScheme {
    FloatingPoint,
    MixedPrecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub bias_enabled: bool,
    pub update_scheme: UpdateScheme,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::config(
                "trainer.layerSizes",
                "need at least two nonzero layer sizes",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("trainer.learningRate", "must be > 0"));
        }
        Ok(())
    }
}

/// Converter and read-noise settings shared by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HardwareConfig {
    pub read_noise_frac: f64,
    pub dac_bits: Option<u32>,
    pub adc_bits: Option<u32>,
}

/// Per-synapse high-precision update accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix {
    values: RealMatrix,
    eps_p: f64,
    eps_d: f64,
}

impl ChiMatrix {
    pub fn new(rows: usize, cols: usize, eps_p: f64, eps_d: f64) -> Result<Self> {
        if !(eps_p > 0.0 && eps_d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "update thresholds must be > 0, got εP={eps_p}, εD={eps_d}"
            )));
        }
        Ok(Self {
            values: RealMatrix::zeros(rows, cols),
            eps_p,
            eps_d,
        })
    }

    pub fn values(&self) -> &RealMatrix {
        &self.values
    }

    pub fn eps_p(&self) -> f64 {
        self.eps_p
    }

    pub fn eps_d(&self) -> f64 {
        self.eps_d
    }

    /// Adds `dw` to the accumulator at `idx` and drains whole thresholds.
    /// Returns the signed pulse count.
    #[inline]
    fn accumulate(&mut self, idx: usize, dw: f64) -> i32 {
        let chi = &mut self.values.as_mut_slice()[idx];
        let (p, rest) = transfer(*chi + dw, self.eps_p, self.eps_d);
        *chi = rest;
        p
    }
}

/// Relative slack below which an accumulated value counts as a whole
/// multiple of the threshold, so that decimal inputs such as `0.3` against
/// `ε = 0.1` fire three pulses despite binary rounding.
const MULTIPLE_SLACK: f64 = 1e-9;

/// Splits an accumulated update into whole pulses (floored toward zero)
/// and the residual left in the accumulator, which satisfies
/// `−eps_d < residual < eps_p`.
#[inline]
pub fn transfer(chi: f64, eps_p: f64, eps_d: f64) -> (i32, f64) {
    if chi >= eps_p * (1.0 - MULTIPLE_SLACK) {
        let (p, rest) = drain(chi, eps_p);
        (p, rest)
    } else if chi <= -eps_d * (1.0 - MULTIPLE_SLACK) {
        let (p, rest) = drain(-chi, eps_d);
        (-p, -rest)
    } else {
        (0, chi)
    }
}

#[inline]
fn drain(x: f64, eps: f64) -> (i32, f64) {
    let mut p = (x / eps).floor();
    let mut rest = x - p * eps;
    // the division can round either way
    while rest >= eps * (1.0 - MULTIPLE_SLACK) {
        p += 1.0;
        rest -= eps;
    }
    while rest < -eps * MULTIPLE_SLACK && p > 0.0 {
        p -= 1.0;
        rest += eps;
    }
    (p as i32, rest)
}

/// `ΔW = −η·δ·aᵀ`, the change that descends the loss.
pub fn outer_product_update(delta: &[f64], activation: &[f64], eta: f64) -> RealMatrix {
    RealMatrix::from_fn(delta.len(), activation.len(), |j, i| {
        -eta * delta[j] * activation[i]
    })
}

/// Adds `delta_w` into `chi`, fires the resulting pulses at `layer` and
/// returns them with the number of programming events.
pub fn accumulate_and_transfer(
    chi: &mut ChiMatrix,
    delta_w: &RealMatrix,
    layer: &mut CrossbarLayer,
    stream: &mut RandomStream,
) -> Result<(PulseMatrix, usize)> {
    if chi.values.shape() != delta_w.shape() {
        return Err(Error::dims(
            "accumulate_and_transfer",
            format!("{:?}", chi.values.shape()),
            format!("{:?}", delta_w.shape()),
        ));
    }
    let (rows, cols) = delta_w.shape();
    let mut pulses = PulseMatrix::new(rows, cols);
    for (idx, &dw) in delta_w.as_slice().iter().enumerate() {
        let p = chi.accumulate(idx, dw);
        if p != 0 {
            pulses.push_flat(idx, p);
        }
    }
    let events = layer.program_devices(&pulses, stream)?;
    Ok((pulses, events))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Inputs seen by every layer and the network output.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    /// `inputs[l]` is the vector fed to layer `l`, bias entry included.
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Back-propagated errors. The true error of layer `l` is
/// `scales[l] · normalized[l]`; vectors that are read through a crossbar
/// are normalized to unit max-magnitude first.
#[derive(Debug, Clone, PartialEq)]
pub struct Deltas {
    pub normalized: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

impl Deltas {
    pub fn true_delta(&self, layer: usize) -> Vec<f64> {
        self.normalized[layer]
            .iter()
            .map(|d| d * self.scales[layer])
            .collect()
    }
}

/// Running totals that let tests check `requested = delivered + χ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateAudit {
    pub requested: RealMatrix,
    pub delivered: RealMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub programming_events: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayerCalibration {
    pub layer: usize,
    pub forward: AdcCalibration,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub backward: Option<AdcCalibration>,
}

#[derive(Debug, Clone)]
struct Streams {
    programming: RandomStream,
    read_noise: RandomStream,
    refresh: RandomStream,
}

#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    device: DeviceSpec,
    layers: Vec<CrossbarLayer>,
    chi: Vec<ChiMatrix>,
    audit: Option<Vec<UpdateAudit>>,
    streams: Streams,
    examples_seen: u64,
    evaluations: u64,
    scratch: Vec<PulseMatrix>,
}

impl Network {
    /// Builds an uninitialized network; call
    /// [`initialize_weights`](Self::initialize_weights) before training.
    pub fn build(config: NetworkConfig, device: DeviceSpec, hw: HardwareConfig) -> Result<Self> {
        config.validate()?;
        let bias = config.bias_enabled as usize;
        let mut layers = Vec::new();
        let mut chi = Vec::new();
        for w in config.layer_sizes.windows(2) {
            let (rows, cols) = (w[1], w[0] + bias);
            let synapses = match config.update_scheme {
                UpdateScheme::FloatingPoint => Synapses::Ideal(RealMatrix::zeros(rows, cols)),
                UpdateScheme::MixedPrecision => {
                    chi.push(ChiMatrix::new(
                        rows,
                        cols,
                        epsilon_of(&device, Direction::Potentiation),
                        epsilon_of(&device, Direction::Depression),
                    )?);
                    device_synapses(&device, rows, cols)?
                }
            };
            let layer = CrossbarLayer::new(synapses)
                .with_read_noise(hw.read_noise_frac)?
                .with_dac(hw.dac_bits)?
                .with_adc(hw.adc_bits)?;
            layers.push(layer);
        }
        let seed = config.seed;
        let scratch = layers
            .iter()
            .map(|l| PulseMatrix::new(l.rows(), l.cols()))
            .collect();
        Ok(Self {
            config,
            device,
            layers,
            chi,
            audit: None,
            streams: Streams {
                programming: RandomStream::for_purpose(seed, StreamPurpose::Programming),
                read_noise: RandomStream::for_purpose(seed, StreamPurpose::ReadNoise),
                refresh: RandomStream::for_purpose(seed, StreamPurpose::Refresh),
            },
            examples_seen: 0,
            evaluations: 0,
            scratch,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }

    pub fn layers(&self) -> &[CrossbarLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CrossbarLayer] {
        &mut self.layers
    }

    pub fn chi(&self) -> &[ChiMatrix] {
        &self.chi
    }

    pub fn audit(&self) -> Option<&[UpdateAudit]> {
        self.audit.as_deref()
    }

    /// Starts tracking requested and delivered updates per synapse.
    pub fn enable_audit(&mut self) {
        self.audit = Some(
            self.layers
                .iter()
                .map(|l| UpdateAudit {
                    requested: RealMatrix::zeros(l.rows(), l.cols()),
                    delivered: RealMatrix::zeros(l.rows(), l.cols()),
                })
                .collect(),
        );
    }

    /// Draws the initial device states.
    ///
    /// Weight-valued devices and the floating-point reference take values in
    /// `{−1, 0, +1}` with `P(±1) = v/2`, `v = 2/(n_in + n_out)`, so the
    /// weight variance is `v`. PCM pairs draw both conductances from a
    /// normal around `init_mean` truncated to the device range, with the
    /// spread chosen to give the same weight variance.
    pub fn initialize_weights(&mut self, stream: &mut RandomStream) -> Result<()> {
        let sizes = self.config.layer_sizes.clone();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let v = 2.0 / (sizes[l] + sizes[l + 1]) as f64;
            if v > 1.0 {
                return Err(Error::config(
                    "trainer.layerSizes",
                    format!("initial weight variance {v} exceeds 1"),
                ));
            }
            let device = &self.device;
            layer.with_synapses_mut(|syn| init_synapses(syn, device, v, stream));
        }
        Ok(())
    }

    fn layer_input(&self, x: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(x.len() + 1);
        input.extend_from_slice(x);
        if self.config.bias_enabled {
            input.push(1.0);
        }
        input
    }

    /// Sigmoid activations of every layer for input `x`.
    pub fn forward_pass(&self, x: &[f64], stream: &mut RandomStream) -> Result<Activations> {
        if x.len() != self.config.layer_sizes[0] {
            return Err(Error::dims("forward_pass", self.config.layer_sizes[0], x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("input contains non-finite values".into()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = self.layer_input(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward_mvm(&current, stream)?;
            let a: Vec<f64> = z.into_iter().map(sigmoid).collect();
            inputs.push(std::mem::take(&mut current));
            current = if l + 1 < self.layers.len() {
                self.layer_input(&a)
            } else {
                a
            };
        }
        Ok(Activations {
            inputs,
            output: current,
        })
    }

    /// Errors for the quadratic loss `½‖a − t‖²` through sigmoid units.
    pub fn backward_pass(
        &self,
        acts: &Activations,
        target: &[f64],
        stream: &mut RandomStream,
    ) -> Result<Deltas> {
        let n_layers = self.layers.len();
        if target.len() != acts.output.len() {
            return Err(Error::dims("backward_pass", acts.output.len(), target.len()));
        }
        let mut normalized = vec![Vec::new(); n_layers];
        let mut scales = vec![0.0; n_layers];

        let out: Vec<f64> = acts
            .output
            .iter()
            .zip(target)
            .map(|(&a, &t)| (a - t) * a * (1.0 - a))
            .collect();
        let (norm, scale) = normalize(out);
        normalized[n_layers - 1] = norm;
        scales[n_layers - 1] = scale;

        for l in (1..n_layers).rev() {
            let upstream = self.layers[l].backward_mvm(&normalized[l], stream)?;
            let n = self.config.layer_sizes[l];
            let raw: Vec<f64> = upstream[..n]
                .iter()
                .zip(&acts.inputs[l][..n])
                .map(|(&b, &a)| b * a * (1.0 - a))
                .collect();
            if l >= 2 {
                let (norm, s) = normalize(raw);
                normalized[l - 1] = norm;
                scales[l - 1] = scales[l] * s;
            } else {
                normalized[l - 1] = raw;
                scales[l - 1] = scales[l];
            }
        }
        Ok(Deltas { normalized, scales })
    }

    /// Loss gradient `∂L/∂W` per layer for one example, using noiseless
    /// converter-free reads only if the network is configured that way.
    pub fn gradients(&self, x: &[f64], target: &[f64]) -> Result<Vec<RealMatrix>> {
        let mut s = RandomStream::for_purpose(self.config.seed, StreamPurpose::Calibration);
        let acts = self.forward_pass(x, &mut s)?;
        let deltas = self.backward_pass(&acts, target, &mut s)?;
        Ok((0..self.layers.len())
            .map(|l| outer_product_update(&deltas.true_delta(l), &acts.inputs[l], -1.0))
            .collect())
    }

    /// One online SGD step. Returns the example's loss and the number of
    /// programming events per layer.
    pub fn train_example(&mut self, x: &[f64], target: &[f64]) -> Result<(f64, Vec<u64>)> {
        let mut noise = std::mem::replace(&mut self.streams.read_noise, RandomStream::new(0, 0));
        let result = self
            .forward_pass(x, &mut noise)
            .and_then(|acts| Ok((self.backward_pass(&acts, target, &mut noise)?, acts)));
        self.streams.read_noise = noise;
        let (deltas, acts) = result?;

        let loss = 0.5
            * acts
                .output
                .iter()
                .zip(target)
                .map(|(a, t)| (a - t) * (a - t))
                .sum::<f64>();

        let eta = self.config.learning_rate;
        let mut events = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let coeff = -eta * deltas.scales[l];
            let e = if coeff == 0.0 {
                0
            } else {
                self.apply_update(l, coeff, &deltas.normalized[l], &acts.inputs[l])?
            };
            events.push(e as u64);
        }

        self.examples_seen += 1;
        for layer in &mut self.layers {
            if let Some(interval) = layer.refresh_interval() {
                if self.examples_seen.is_multiple_of(interval as u64) {
                    layer.refresh(&mut self.streams.refresh);
                }
            }
        }
        Ok((loss, events))
    }

    /// Applies `coeff · δ ⊗ input` to layer `l`, touching only synapses whose
    /// input is nonzero.
    fn apply_update(&mut self, l: usize, coeff: f64, delta: &[f64], input: &[f64]) -> Result<usize> {
        let active: Vec<(usize, f64)> = input
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        let cols = self.layers[l].cols();
        let mut audit = self.audit.as_mut().map(|a| &mut a[l]);

        if self.layers[l].is_ideal() && audit.is_none() {
            let layer = &mut self.layers[l];
            let mut events = 0;
            for (j, &d) in delta.iter().enumerate() {
                let c = coeff * d;
                if c != 0.0 {
                    events += layer.add_row_exact(j, c, &active);
                }
            }
            return Ok(events);
        }
        if self.layers[l].is_ideal() {
            let layer = &mut self.layers[l];
            let mut events = 0;
            for (j, &d) in delta.iter().enumerate() {
                let c = coeff * d;
                if c == 0.0 {
                    continue;
                }
                for &(i, v) in &active {
                    let dw = c * v;
                    if dw == 0.0 {
                        continue;
                    }
                    let idx = j * cols + i;
                    layer.add_exact(idx, dw);
                    if let Some(a) = audit.as_deref_mut() {
                        a.requested.as_mut_slice()[idx] += dw;
                        a.delivered.as_mut_slice()[idx] += dw;
                    }
                    events += 1;
                }
            }
            return Ok(events);
        }

        let chi = &mut self.chi[l];
        let pulses = &mut self.scratch[l];
        pulses.clear();
        if audit.is_none() {
            // Same decisions as `transfer`; the common no-pulse case skips it.
            let up = chi.eps_p * (1.0 - MULTIPLE_SLACK);
            let down = -chi.eps_d * (1.0 - MULTIPLE_SLACK);
            let (eps_p, eps_d) = (chi.eps_p, chi.eps_d);
            let values = chi.values.as_mut_slice();
            for (j, &d) in delta.iter().enumerate() {
                let c = coeff * d;
                if c == 0.0 {
                    continue;
                }
                let row = &mut values[j * cols..(j + 1) * cols];
                for &(i, v) in &active {
                    let x = row[i] + c * v;
                    if x < up && x > down {
                        row[i] = x;
                        continue;
                    }
                    let (p, rest) = transfer(x, eps_p, eps_d);
                    row[i] = rest;
                    if p != 0 {
                        pulses.push_flat(j * cols + i, p);
                    }
                }
            }
            return self.layers[l].program_devices(pulses, &mut self.streams.programming);
        }
        for (j, &d) in delta.iter().enumerate() {
            let c = coeff * d;
            if c == 0.0 {
                continue;
            }
            for &(i, v) in &active {
                let idx = j * cols + i;
                let dw = c * v;
                let p = chi.accumulate(idx, dw);
                if let Some(a) = audit.as_deref_mut() {
                    a.requested.as_mut_slice()[idx] += dw;
                    let eps = if p > 0 { chi.eps_p } else { chi.eps_d };
                    a.delivered.as_mut_slice()[idx] += p as f64 * eps;
                }
                if p != 0 {
                    pulses.push_flat(idx, p);
                }
            }
        }
        self.layers[l].program_devices(pulses, &mut self.streams.programming)
    }

    /// One pass over `train` in an order shuffled per epoch.
    pub fn train_epoch(&mut self, train: &Dataset, epoch: usize) -> Result<(f64, Vec<u64>)> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        RandomStream::substream(self.config.seed, StreamPurpose::Shuffle, epoch as u64)
            .shuffle(&mut order);
        let mut events = vec![0u64; self.layers.len()];
        let mut loss = 0.0;
        let mut x = Vec::with_capacity(train.image_size());
        for &k in &order {
            train.image_into(k, &mut x);
            let (l, e) = self.train_example(&x, &train.one_hot(k))?;
            loss += l;
            for (total, n) in events.iter_mut().zip(e) {
                *total += n;
            }
        }
        let mean_loss = if train.is_empty() {
            0.0
        } else {
            loss / train.len() as f64
        };
        Ok((mean_loss, events))
    }

    /// Fraction of `test` classified correctly (argmax of the outputs).
    /// Read noise, when configured, uses one derived stream per example.
    pub fn evaluate(&mut self, test: &Dataset) -> Result<f64> {
        let round = self.evaluations;
        self.evaluations += 1;
        if test.is_empty() {
            return Ok(0.0);
        }
        let noisy = self.layers.iter().any(|l| l.read_noise_frac() > 0.0);
        let mut quiet = RandomStream::new(self.config.seed, 0);
        let mut correct = 0usize;
        let mut x = Vec::with_capacity(test.image_size());
        for k in 0..test.len() {
            test.image_into(k, &mut x);
            let acts = if noisy {
                let mut s = RandomStream::substream(
                    self.config.seed,
                    StreamPurpose::EvalNoise,
                    (round << 32) | k as u64,
                );
                self.forward_pass(&x, &mut s)?
            } else {
                self.forward_pass(&x, &mut quiet)?
            };
            if argmax(&acts.output) == test.label(k) {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.len() as f64)
    }

    /// Trains for the configured number of epochs, evaluating after each.
    pub fn train(&mut self, train: &Dataset, test: &Dataset) -> Result<Vec<EpochMetrics>> {
        self.train_with(train, test, |_| {})
    }

    pub fn train_with(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        mut on_epoch: impl FnMut(&EpochMetrics),
    ) -> Result<Vec<EpochMetrics>> {
        let mut out = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let (train_loss, events) = self.train_epoch(train, epoch)?;
            let test_accuracy = self.evaluate(test)?;
            let m = EpochMetrics {
                epoch: epoch + 1,
                train_loss,
                test_accuracy,
                programming_events: events,
            };
            on_epoch(&m);
            out.push(m);
        }
        Ok(out)
    }

    /// Observes noiseless, converter-free weighted sums on `samples` and
    /// returns symmetric ADC ranges for every layer and pass.
    pub fn observe_adc_ranges(&self, samples: &Dataset) -> Result<Vec<LayerCalibration>> {
        let mut probe = self.clone();
        for layer in &mut probe.layers {
            *layer = layer
                .clone()
                .with_read_noise(0.0)?
                .with_dac(None)?
                .with_adc(None)?;
        }
        let mut s = RandomStream::new(0, 0);
        let n_layers = probe.layers.len();
        let mut forward_samples = vec![Vec::new(); n_layers];
        let mut backward_samples = vec![Vec::new(); n_layers];
        let mut x = Vec::new();
        for k in 0..samples.len() {
            samples.image_into(k, &mut x);
            let acts = probe.forward_pass(&x, &mut s)?;
            let deltas = probe.backward_pass(&acts, &samples.one_hot(k), &mut s)?;
            for l in 0..n_layers {
                if l >= 1 {
                    backward_samples[l].push(deltas.normalized[l].clone());
                }
            }
            for (l, input) in acts.inputs.into_iter().enumerate() {
                forward_samples[l].push(input);
            }
        }
        let mut out = Vec::with_capacity(n_layers);
        for (l, layer) in probe.layers.iter_mut().enumerate() {
            let forward = layer.calibrate_adc_range(Pass::Forward, &forward_samples[l])?;
            let backward = if l >= 1 {
                Some(layer.calibrate_adc_range(Pass::Backward, &backward_samples[l])?)
            } else {
                None
            };
            out.push(LayerCalibration {
                layer: l,
                forward,
                backward,
            });
        }
        Ok(out)
    }

    pub fn apply_adc_calibration(&mut self, cals: &[LayerCalibration]) -> Result<()> {
        for cal in cals {
            let layer = self.layers.get_mut(cal.layer).ok_or_else(|| {
                Error::InvalidArgument(format!("no layer {} to calibrate", cal.layer))
            })?;
            layer.set_adc_range(Pass::Forward, cal.forward)?;
            if let Some(b) = cal.backward {
                layer.set_adc_range(Pass::Backward, b)?;
            }
        }
        Ok(())
    }
}

fn normalize(v: Vec<f64>) -> (Vec<f64>, f64) {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        (v, 0.0)
    } else {
        (v.into_iter().map(|x| x / m).collect(), m)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn device_synapses(device: &DeviceSpec, rows: usize, cols: usize) -> Result<Synapses> {
    let single = |model: DeviceModel, map: WeightMap| Synapses::Single {
        array: DeviceArray::new(rows, cols, model),
        map,
    };
    Ok(match device {
        DeviceSpec::Linear(s) => single(DeviceModel::Step(s.response()), WeightMap::IDENTITY),
        DeviceSpec::Asymmetric(s) => single(DeviceModel::Step(s.response()), WeightMap::IDENTITY),
        DeviceSpec::Nonlinear(s) => single(DeviceModel::Exponential(*s), WeightMap::IDENTITY),
        DeviceSpec::Pcm(pcm) => match pcm.mode {
            PcmMode::Differential => Synapses::Pair(DifferentialPair::new(
                rows,
                cols,
                Arc::clone(&pcm.tables),
                pcm.weight_per_us(),
                pcm.refresh,
            )?),
            PcmMode::Single => {
                let scale = pcm.weight_per_us();
                single(
                    DeviceModel::Pcm(Arc::clone(&pcm.tables)),
                    WeightMap {
                        scale,
                        offset: -1.0 - scale * pcm.tables.g_min,
                    },
                )
            }
        },
    })
}

fn discrete_weight(v: f64, stream: &mut RandomStream) -> f64 {
    let u = stream.uniform();
    if u < 0.5 * v {
        -1.0
    } else if u < v {
        1.0
    } else {
        0.0
    }
}

fn truncated_normal(mean: f64, std: f64, lo: f64, hi: f64, stream: &mut RandomStream) -> f64 {
    for _ in 0..1000 {
        let g = stream.normal_unchecked(mean, std);
        if (lo..=hi).contains(&g) {
            return g;
        }
    }
    mean.clamp(lo, hi)
}

fn init_synapses(syn: &mut Synapses, device: &DeviceSpec, v: f64, stream: &mut RandomStream) {
    match syn {
        Synapses::Ideal(w) => {
            for x in w.as_mut_slice() {
                *x = discrete_weight(v, stream);
            }
        }
        Synapses::Single { array, map } => {
            let n = array.state().len();
            match (device, array.model()) {
                (DeviceSpec::Pcm(pcm), DeviceModel::Pcm(tables)) => {
                    let (lo, hi) = (tables.g_min, tables.g_max);
                    let centre = map.invert(0.0);
                    let std = v.sqrt() / map.scale;
                    let _ = pcm;
                    for idx in 0..n {
                        let g = truncated_normal(centre, std, lo, hi, stream);
                        array.set_flat(idx, g);
                    }
                }
                _ => {
                    for idx in 0..n {
                        let w = discrete_weight(v, stream);
                        array.set_flat(idx, map.invert(w));
                    }
                }
            }
        }
        Synapses::Pair(pair) => {
            let init_mean = match device {
                DeviceSpec::Pcm(p) => p.init_mean,
                _ => pair.tables().g_min,
            };
            let (lo, hi) = (pair.tables().g_min, pair.tables().g_max);
            // Var(k·(G+ − G−)) = 2·k²·s² = v
            let std = (0.5 * v).sqrt() / pair.scale_k();
            let n = pair.g_plus().state().len();
            for idx in 0..n {
                let gp = truncated_normal(init_mean, std, lo, hi, stream);
                let gm = truncated_normal(init_mean, std, lo, hi, stream);
                pair.g_plus_mut().set_flat(idx, gp);
                pair.g_minus_mut().set_flat(idx, gm);
            }
        }
    }
}
