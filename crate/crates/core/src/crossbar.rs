//! One synaptic layer realized as a crossbar array.
//!
//! Forward reads compute `Ŵ·x`, backward reads compute `Ŵᵀ·δ`, where `Ŵ` is
//! the stored weight plus fresh zero-mean read noise on every call. Inputs
//! pass through a DAC and outputs through an ADC when those are configured.
//! Programming is blind: pulse counts go in, nothing comes back.

use serde::{Deserialize, Serialize};

use crate::devices::{DeviceArray, DifferentialPair};
use crate::error::{Error, Result};
use crate::numerics::{RandomStream, RealMatrix, UniformQuantizer};

/// Forward DAC range for sigmoid activations and normalized pixels.
pub const INPUT_DAC_RANGE: (f64, f64) = (0.0, 1.0);
/// Error DAC range; the trainer normalizes errors into it.
pub const ERROR_DAC_RANGE: (f64, f64) = (-1.0, 1.0);

/// `weight = scale·state + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMap {
    pub scale: f64,
    pub offset: f64,
}

impl WeightMap {
    pub const IDENTITY: WeightMap = WeightMap {
        scale: 1.0,
        offset: 0.0,
    };

    #[inline]
    pub fn apply(&self, state: f64) -> f64 {
        self.scale * state + self.offset
    }

    #[inline]
    pub fn invert(&self, weight: f64) -> f64 {
        (weight - self.offset) / self.scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Synapses {
    /// Real-valued weights updated exactly; the floating-point reference.
    Ideal(RealMatrix),
    Single { array: DeviceArray, map: WeightMap },
    Pair(DifferentialPair),
}

impl Synapses {
    fn shape(&self) -> (usize, usize) {
        match self {
            Synapses::Ideal(w) => w.shape(),
            Synapses::Single { array, .. } => (array.rows(), array.cols()),
            Synapses::Pair(p) => (p.rows(), p.cols()),
        }
    }

    fn weight_flat(&self, idx: usize) -> f64 {
        match self {
            Synapses::Ideal(w) => w.as_slice()[idx],
            Synapses::Single { array, map } => map.apply(array.get_flat(idx)),
            Synapses::Pair(p) => p.weight_flat(idx),
        }
    }

    fn weight_range(&self) -> f64 {
        match self {
            Synapses::Ideal(_) => 2.0,
            Synapses::Single { array, map } => {
                let (lo, hi) = array.bounds();
                (map.scale * (hi - lo)).abs()
            }
            Synapses::Pair(p) => 2.0 * p.scale_k() * p.tables().range(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Pass {
    Forward,
    Backward,
}

/// Symmetric ADC range observed for one layer and pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdcCalibration {
    pub observed_lo: f64,
    pub observed_hi: f64,
}

/// Sparse integer pulse counts for one layer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PulseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, i32)>,
}

impl PulseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(rows: usize, cols: usize, counts: &[i32]) -> Result<Self> {
        if counts.len() != rows * cols {
            return Err(Error::dims("PulseMatrix::from_dense", rows * cols, counts.len()));
        }
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(idx, &p)| (idx, p))
            .collect();
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn set(&mut self, row: usize, col: usize, pulses: i32) {
        debug_assert!(row < self.rows && col < self.cols);
        if pulses != 0 {
            self.entries.push((row * self.cols + col, pulses));
        }
    }

    #[inline]
    pub(crate) fn push_flat(&mut self, idx: usize, pulses: i32) {
        self.entries.push((idx, pulses));
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        let idx = row * self.cols + col;
        self.entries
            .iter()
            .filter(|(i, _)| *i == idx)
            .map(|(_, p)| *p)
            .sum()
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, i32)] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarLayer {
    synapses: Synapses,
    /// Mirror of the weights encoded by `synapses`, refreshed on every write.
    weights: RealMatrix,
    input_dac: Option<UniformQuantizer>,
    error_dac: Option<UniformQuantizer>,
    adc_bits: Option<u32>,
    forward_adc: Option<UniformQuantizer>,
    backward_adc: Option<UniformQuantizer>,
    read_noise_frac: f64,
    weight_range: f64,
}

impl CrossbarLayer {
    pub fn new(synapses: Synapses) -> Self {
        let (rows, cols) = synapses.shape();
        let weights = RealMatrix::from_fn(rows, cols, |r, c| synapses.weight_flat(r * cols + c));
        let weight_range = synapses.weight_range();
        Self {
            synapses,
            weights,
            input_dac: None,
            error_dac: None,
            adc_bits: None,
            forward_adc: None,
            backward_adc: None,
            read_noise_frac: 0.0,
            weight_range,
        }
    }

    /// Enables DACs on both inputs with `bits` resolution.
    pub fn with_dac(mut self, bits: Option<u32>) -> Result<Self> {
        self.input_dac = bits
            .map(|b| UniformQuantizer::new(b, INPUT_DAC_RANGE.0, INPUT_DAC_RANGE.1))
            .transpose()?;
        self.error_dac = bits
            .map(|b| UniformQuantizer::new(b, ERROR_DAC_RANGE.0, ERROR_DAC_RANGE.1))
            .transpose()?;
        Ok(self)
    }

    /// Enables ADCs with `bits` resolution over a provisional `[-1, 1]`
    /// range until [`calibrate_adc_range`](Self::calibrate_adc_range) or
    /// [`set_adc_range`](Self::set_adc_range) runs.
    pub fn with_adc(mut self, bits: Option<u32>) -> Result<Self> {
        self.adc_bits = bits;
        self.forward_adc = bits.map(|b| UniformQuantizer::new(b, -1.0, 1.0)).transpose()?;
        self.backward_adc = self.forward_adc;
        Ok(self)
    }

    pub fn with_read_noise(mut self, frac: f64) -> Result<Self> {
        if !(frac >= 0.0 && frac.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "readNoiseFrac must be >= 0, got {frac}"
            )));
        }
        self.read_noise_frac = frac;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.weights.rows()
    }

    pub fn cols(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &RealMatrix {
        &self.weights
    }

    pub fn synapses(&self) -> &Synapses {
        &self.synapses
    }

    pub fn read_noise_frac(&self) -> f64 {
        self.read_noise_frac
    }

    pub fn weight_range(&self) -> f64 {
        self.weight_range
    }

    pub fn adc(&self, pass: Pass) -> Option<&UniformQuantizer> {
        match pass {
            Pass::Forward => self.forward_adc.as_ref(),
            Pass::Backward => self.backward_adc.as_ref(),
        }
    }

    pub fn has_adc(&self) -> bool {
        self.adc_bits.is_some()
    }

    fn read_noise_std(&self) -> f64 {
        self.read_noise_frac * self.weight_range
    }

    /// `ADC(Ŵ · DAC(x))`.
    pub fn forward_mvm(&self, x: &[f64], stream: &mut RandomStream) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(Error::dims("forward_mvm", self.cols(), x.len()));
        }
        let active: Vec<(usize, f64)> = x
            .iter()
            .map(|&v| self.input_dac.map_or(v, |q| q.quantize(v)))
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        let mut out = vec![0.0; self.rows()];
        // Four rows at a time keeps independent add chains in flight; each
        // row still sums in input order, so results match a row-by-row loop.
        let w = self.weights.as_slice();
        let cols = self.cols();
        let mut chunks = out.chunks_exact_mut(4);
        for (c, dst) in chunks.by_ref().enumerate() {
            let base = 4 * c * cols;
            let rows = &w[base..base + 4 * cols];
            let (r0, rest) = rows.split_at(cols);
            let (r1, rest) = rest.split_at(cols);
            let (r2, r3) = rest.split_at(cols);
            let mut acc = [0.0; 4];
            for &(i, v) in &active {
                acc[0] += r0[i] * v;
                acc[1] += r1[i] * v;
                acc[2] += r2[i] * v;
                acc[3] += r3[i] * v;
            }
            dst.copy_from_slice(&acc);
        }
        let done = self.rows() - chunks.into_remainder().len();
        for (r, o) in out.iter_mut().enumerate().skip(done) {
            let row = self.weights.row(r);
            *o = active.iter().fold(0.0, |acc, &(i, v)| acc + row[i] * v);
        }
        if self.read_noise_frac > 0.0 {
            let norm = active.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            self.add_read_noise(&mut out, norm, stream);
        }
        if let Some(q) = &self.forward_adc {
            q.quantize_slice(&mut out);
        }
        Ok(out)
    }

    /// `ADC(Ŵᵀ · DAC(δ))`.
    pub fn backward_mvm(&self, delta: &[f64], stream: &mut RandomStream) -> Result<Vec<f64>> {
        if delta.len() != self.rows() {
            return Err(Error::dims("backward_mvm", self.rows(), delta.len()));
        }
        let mut out = vec![0.0; self.cols()];
        let mut norm_sq = 0.0;
        for (r, &d) in delta.iter().enumerate() {
            let d = self.error_dac.map_or(d, |q| q.quantize(d));
            if d == 0.0 {
                continue;
            }
            norm_sq += d * d;
            for (o, &w) in out.iter_mut().zip(self.weights.row(r)) {
                *o += w * d;
            }
        }
        if self.read_noise_frac > 0.0 {
            self.add_read_noise(&mut out, norm_sq.sqrt(), stream);
        }
        if let Some(q) = &self.backward_adc {
            q.quantize_slice(&mut out);
        }
        Ok(out)
    }

    /// Adds the output-referred effect of independent per-element read noise:
    /// `Σ_i n_i·x_i` with `n_i ~ N(0, s²)` is exactly `N(0, s²·‖x‖²)`, so one
    /// draw per output reproduces the per-element model in distribution.
    fn add_read_noise(&self, out: &mut [f64], input_norm: f64, stream: &mut RandomStream) {
        let std = self.read_noise_std() * input_norm;
        if std == 0.0 {
            return;
        }
        for o in out {
            *o += std * stream.standard_normal();
        }
    }

    /// Sends pulses to the devices. Returns the number of synapses touched.
    pub fn program_devices(&mut self, pulses: &PulseMatrix, stream: &mut RandomStream) -> Result<usize> {
        if pulses.shape() != self.weights.shape() {
            return Err(Error::dims(
                "program_devices",
                format!("{:?}", self.weights.shape()),
                format!("{:?}", pulses.shape()),
            ));
        }
        for &(idx, p) in pulses.entries() {
            match &mut self.synapses {
                Synapses::Ideal(_) => {
                    return Err(Error::InvalidArgument(
                        "ideal synapses are updated exactly, not by pulses".into(),
                    ))
                }
                Synapses::Single { array, .. } => array.apply_pulses_flat(idx, p, stream),
                Synapses::Pair(pair) => pair.apply_pulses_flat(idx, p, stream),
            }
            self.weights.as_mut_slice()[idx] = self.synapses.weight_flat(idx);
        }
        Ok(pulses.nonzero_count())
    }

    /// Adds `dw` to an ideal weight.
    #[inline]
    pub(crate) fn add_exact(&mut self, idx: usize, dw: f64) {
        if let Synapses::Ideal(w) = &mut self.synapses {
            w.as_mut_slice()[idx] += dw;
            self.weights.as_mut_slice()[idx] = w.as_slice()[idx];
        }
    }

    /// Adds `c·v` to ideal weight `(row, i)` for every active `(i, v)`.
    /// Returns how many weights changed.
    pub(crate) fn add_row_exact(&mut self, row: usize, c: f64, active: &[(usize, f64)]) -> usize {
        let Synapses::Ideal(w) = &mut self.synapses else {
            return 0;
        };
        let cols = self.weights.cols();
        let w = &mut w.as_mut_slice()[row * cols..(row + 1) * cols];
        let mirror = self.weights.row_mut(row);
        let mut changed = 0;
        for &(i, v) in active {
            let dw = c * v;
            if dw != 0.0 {
                w[i] += dw;
                mirror[i] = w[i];
                changed += 1;
            }
        }
        changed
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self.synapses, Synapses::Ideal(_))
    }

    /// Runs the weight-refresh policy if the synapses are differential
    /// pairs. Returns the number of synapses re-encoded.
    pub fn refresh(&mut self, stream: &mut RandomStream) -> usize {
        let Synapses::Pair(pair) = &mut self.synapses else {
            return 0;
        };
        let touched = pair.refresh(stream);
        for &idx in &touched {
            self.weights.as_mut_slice()[idx] = pair.weight_flat(idx);
        }
        touched.len()
    }

    pub fn refresh_interval(&self) -> Option<usize> {
        match &self.synapses {
            Synapses::Pair(p) => Some(p.policy().check_interval),
            _ => None,
        }
    }

    /// Mutable access to the underlying devices for initialization. The
    /// weight mirror is rebuilt when the closure returns.
    pub fn with_synapses_mut<T>(&mut self, f: impl FnOnce(&mut Synapses) -> T) -> T {
        let out = f(&mut self.synapses);
        self.sync_weights();
        out
    }

    fn sync_weights(&mut self) {
        let synapses = &self.synapses;
        for (idx, w) in self.weights.as_mut_slice().iter_mut().enumerate() {
            *w = synapses.weight_flat(idx);
        }
    }

    /// Observes noiseless, converter-free weighted sums over `samples` and
    /// adopts the symmetric range `[-m, m]` (`m` = largest magnitude) for
    /// this pass's ADC. An all-zero observation falls back to `[-1, 1]`.
    pub fn calibrate_adc_range(&mut self, pass: Pass, samples: &[Vec<f64>]) -> Result<AdcCalibration> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument(
                "ADC calibration needs at least one sample".into(),
            ));
        }
        let transposed;
        let matrix = match pass {
            Pass::Forward => &self.weights,
            Pass::Backward => {
                transposed = self.weights.transpose();
                &transposed
            }
        };
        let mut m: f64 = 0.0;
        for s in samples {
            for v in matrix.matvec(s)? {
                m = m.max(v.abs());
            }
        }
        let m = if m > 0.0 { m } else { 1.0 };
        let cal = AdcCalibration {
            observed_lo: -m,
            observed_hi: m,
        };
        self.set_adc_range(pass, cal)?;
        Ok(cal)
    }

    /// Installs an ADC range; a no-op on the quantizer when no ADC is
    /// configured.
    pub fn set_adc_range(&mut self, pass: Pass, cal: AdcCalibration) -> Result<()> {
        let Some(bits) = self.adc_bits else {
            return Ok(());
        };
        let q = UniformQuantizer::new(bits, cal.observed_lo, cal.observed_hi)?;
        match pass {
            Pass::Forward => self.forward_adc = Some(q),
            Pass::Backward => self.backward_adc = Some(q),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{DeviceModel, StepResponse};
    use crate::numerics::matmul;

    fn random_weights(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut s = RandomStream::new(seed, 0);
        RealMatrix::from_fn(rows, cols, |_, _| 2.0 * s.uniform() - 1.0)
    }

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut s = RandomStream::new(seed, 1);
        (0..n)
            .map(|_| if s.uniform() < 0.3 { 0.0 } else { s.uniform() })
            .collect()
    }

    fn linear_layer(rows: usize, cols: usize, eps: f64) -> CrossbarLayer {
        let array = DeviceArray::new(
            rows,
            cols,
            DeviceModel::Step(StepResponse {
                eps_p: eps,
                eps_d: eps,
                sigma_frac: 0.0,
                w_min: -1.0,
                w_max: 1.0,
            }),
        );
        CrossbarLayer::new(Synapses::Single {
            array,
            map: WeightMap::IDENTITY,
        })
    }

    #[test]
    fn identity_forward_passes_input_through() {
        let layer = CrossbarLayer::new(Synapses::Ideal(RealMatrix::identity(4)));
        let x = vec![0.1, 0.0, 0.7, 1.0];
        let mut s = RandomStream::new(0, 0);
        assert_eq!(layer.forward_mvm(&x, &mut s).unwrap(), x);
    }

    #[test]
    fn noiseless_reads_match_matmul() {
        let w = random_weights(7, 9, 1);
        let layer = CrossbarLayer::new(Synapses::Ideal(w.clone()));
        let mut s = RandomStream::new(0, 0);
        let x = random_input(9, 2);
        let got = layer.forward_mvm(&x, &mut s).unwrap();
        let want = matmul(&w, &RealMatrix::column(&x)).unwrap();
        assert_eq!(got, want.as_slice());

        let d: Vec<f64> = random_input(7, 3).iter().map(|v| v - 0.5).collect();
        let got = layer.backward_mvm(&d, &mut s).unwrap();
        let want = matmul(&w.transpose(), &RealMatrix::column(&d)).unwrap();
        assert_eq!(got, want.as_slice());
    }

    #[test]
    fn zero_delta_gives_zero_output() {
        let layer = CrossbarLayer::new(Synapses::Ideal(random_weights(3, 5, 4)));
        let mut s = RandomStream::new(0, 0);
        assert_eq!(layer.backward_mvm(&[0.0; 3], &mut s).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn forward_and_backward_read_the_same_element() {
        let w = random_weights(4, 6, 5);
        let layer = CrossbarLayer::new(Synapses::Ideal(w.clone()));
        let mut s = RandomStream::new(0, 0);
        for i in 0..6 {
            for j in 0..4 {
                let mut e_i = vec![0.0; 6];
                e_i[i] = 1.0;
                let mut e_j = vec![0.0; 4];
                e_j[j] = 1.0;
                let f = layer.forward_mvm(&e_i, &mut s).unwrap()[j];
                let b = layer.backward_mvm(&e_j, &mut s).unwrap()[i];
                assert_eq!(f, w.get(j, i));
                assert_eq!(b, w.get(j, i));
            }
        }
    }

    #[test]
    fn rejects_wrong_lengths() {
        let layer = CrossbarLayer::new(Synapses::Ideal(random_weights(3, 5, 4)));
        let mut s = RandomStream::new(0, 0);
        assert!(layer.forward_mvm(&[0.0; 3], &mut s).is_err());
        assert!(layer.backward_mvm(&[0.0; 5], &mut s).is_err());
    }

    #[test]
    fn read_noise_variance_on_one_hot() {
        let layer = CrossbarLayer::new(Synapses::Ideal(RealMatrix::zeros(1, 3)))
            .with_read_noise(0.05)
            .unwrap();
        let mut s = RandomStream::for_purpose(8, crate::numerics::StreamPurpose::ReadNoise);
        let x = [0.0, 1.0, 0.0];
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| layer.forward_mvm(&x, &mut s).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = (0.05f64 * 2.0).powi(2);
        assert!((var / expected - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn read_noise_never_writes_back() {
        let w = random_weights(5, 5, 6);
        let noisy = CrossbarLayer::new(Synapses::Ideal(w.clone()))
            .with_read_noise(0.1)
            .unwrap();
        let mut s = RandomStream::new(1, 1);
        let x = random_input(5, 7);
        for _ in 0..10 {
            noisy.forward_mvm(&x, &mut s).unwrap();
        }
        assert_eq!(noisy.weights(), &w);
        let clean = noisy.clone().with_read_noise(0.0).unwrap();
        assert_eq!(
            clean.forward_mvm(&x, &mut s).unwrap(),
            w.matvec(&x).unwrap()
        );
    }

    #[test]
    fn adc_clamps_outputs() {
        let w = random_weights(6, 8, 9);
        let mut layer = CrossbarLayer::new(Synapses::Ideal(w)).with_adc(Some(4)).unwrap();
        layer
            .set_adc_range(
                Pass::Forward,
                AdcCalibration {
                    observed_lo: -0.2,
                    observed_hi: 0.2,
                },
            )
            .unwrap();
        let mut s = RandomStream::new(0, 0);
        for k in 0..20 {
            let out = layer.forward_mvm(&random_input(8, k), &mut s).unwrap();
            assert!(out.iter().all(|v| (-0.2..=0.2).contains(v)));
        }
    }

    #[test]
    fn programming_counts_and_moves_weights() {
        let mut layer = linear_layer(3, 3, 0.25);
        let before = layer.weights().clone();
        let mut s = RandomStream::new(0, 0);
        let zero = PulseMatrix::new(3, 3);
        assert_eq!(layer.program_devices(&zero, &mut s).unwrap(), 0);
        assert_eq!(layer.weights(), &before);

        let mut counts = vec![0; 9];
        counts[4] = 3;
        counts[7] = -1;
        let pulses = PulseMatrix::from_dense(3, 3, &counts).unwrap();
        assert_eq!(layer.program_devices(&pulses, &mut s).unwrap(), 2);
        assert_eq!(layer.weights().get(1, 1), 0.75);
        assert_eq!(layer.weights().get(2, 1), -0.25);

        let bad = PulseMatrix::new(2, 3);
        assert!(layer.program_devices(&bad, &mut s).is_err());
    }

    #[test]
    fn adc_calibration_ranges() {
        let mut zero = CrossbarLayer::new(Synapses::Ideal(RealMatrix::zeros(2, 2)))
            .with_adc(Some(8))
            .unwrap();
        let cal = zero.calibrate_adc_range(Pass::Forward, &[vec![1.0, 1.0]]).unwrap();
        assert_eq!((cal.observed_lo, cal.observed_hi), (-1.0, 1.0));
        assert!(zero.calibrate_adc_range(Pass::Forward, &[]).is_err());

        let w = RealMatrix::from_vec(2, 2, vec![0.5, -2.0, 1.0, 0.25]).unwrap();
        let mut layer = CrossbarLayer::new(Synapses::Ideal(w)).with_adc(Some(8)).unwrap();
        let cal = layer.calibrate_adc_range(Pass::Forward, &[vec![1.0, 0.5]]).unwrap();
        // sums: [-0.5, 1.125]
        assert_eq!((cal.observed_lo, cal.observed_hi), (-1.125, 1.125));
        assert_eq!(layer.adc(Pass::Forward).unwrap().hi(), 1.125);
        let cal = layer.calibrate_adc_range(Pass::Backward, &[vec![1.0, -1.0]]).unwrap();
        // transposed sums: [-0.5, -2.25]
        assert_eq!(cal.observed_hi, 2.25);
    }
}
