//! Experiment specification files.
//!
//! A spec is a JSON object describing one device/hardware/trainer setup plus
//! optional sweep axes and variants. [`ExperimentSpec::expand`] turns it into
//! one [`RunSpec`] per (cell, seed), where cells are the variants crossed with
//! the cartesian product of the sweep axes (first axis slowest).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::devices::{
    AsymmetricDeviceSpec, DeviceSpec, LinearDeviceSpec, NonlinearExpSpec, PcmMode,
    PcmModelTables, PcmSpec, RefreshPolicy,
};
use crate::error::{Error, Result};
use crate::trainer::{HardwareConfig, NetworkConfig, UpdateScheme};

/// Fixed learning rate picked by grid search on the floating-point baseline.
pub const DEFAULT_LEARNING_RATE: f64 = 0.4;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn default_layer_sizes() -> Vec<usize> {
    vec![784, 250, 10]
}
fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_epochs() -> usize {
    10
}
fn default_scheme() -> UpdateScheme {
    UpdateScheme::MixedPrecision
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_w_min() -> f64 {
    -1.0
}
fn default_w_max() -> f64 {
    1.0
}
fn default_steps() -> i64 {
    14
}
fn default_init_mean() -> f64 {
    2.0
}
fn default_pcm_mode() -> PcmMode {
    PcmMode::Differential
}
fn default_calibration_samples() -> usize {
    1000
}
fn default_reference_epochs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrainerSettings {
    #[serde(default = "default_layer_sizes")]
    pub layer_sizes: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub bias_enabled: bool,
    #[serde(default = "default_scheme")]
    pub update_scheme: UpdateScheme,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        Self {
            layer_sizes: default_layer_sizes(),
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: default_epochs(),
            bias_enabled: false,
            update_scheme: default_scheme(),
        }
    }
}

/// Device model as written in a spec file. Integer fields are signed so
/// that out-of-range values produce an error naming the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "camelCase", deny_unknown_fields)]
pub enum DeviceConfig {
    #[serde(rename_all = "camelCase")]
    Linear {
        bits: i64,
        #[serde(default)]
        sigma_frac: f64,
        #[serde(default = "default_w_min")]
        w_min: f64,
        #[serde(default = "default_w_max")]
        w_max: f64,
    },
    #[serde(rename_all = "camelCase")]
    Asymmetric {
        bits_p: i64,
        bits_d: i64,
        #[serde(default)]
        sigma_frac: f64,
    },
    #[serde(rename_all = "camelCase")]
    Nonlinear {
        beta: f64,
        #[serde(default = "default_steps")]
        steps: i64,
        #[serde(default = "default_w_min")]
        w_min: f64,
        #[serde(default = "default_w_max")]
        w_max: f64,
    },
    #[serde(rename_all = "camelCase")]
    Pcm {
        #[serde(default = "default_pcm_mode")]
        mode: PcmMode,
        /// Path to a tables file; the shipped defaults when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tables: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default)]
        refresh: RefreshPolicy,
        #[serde(default = "default_init_mean")]
        init_mean: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AdcCalibrationSettings {
    /// Training images whose weighted sums set the ADC ranges.
    #[serde(default = "default_calibration_samples")]
    pub samples: usize,
    /// Epochs of floating-point training for the reference network the
    /// ranges are observed on.
    #[serde(default = "default_reference_epochs")]
    pub reference_epochs: usize,
}

impl Default for AdcCalibrationSettings {
    fn default() -> Self {
        Self {
            samples: default_calibration_samples(),
            reference_epochs: default_reference_epochs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into the spec, e.g. `device.bits`.
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    /// Dotted path → value overrides.
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    /// Required unless the trainer runs in floating-point mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceConfig>,
    #[serde(default)]
    pub read_noise_frac: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dac_bits: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adc_bits: Option<i64>,
    #[serde(default)]
    pub adc_calibration: AdcCalibrationSettings,
    #[serde(default)]
    pub trainer: TrainerSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn from_value<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        Error::config(key, e.into_inner().to_string())
    })
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))
}

fn check_bits(key: &str, bits: i64, max: i64) -> Result<u32> {
    if bits < 1 || bits > max {
        return Err(Error::config(key, format!("must lie in 1..={max}, got {bits}")));
    }
    Ok(bits as u32)
}

fn check_finite(key: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::config(key, format!("must be finite, got {v}")));
    }
    Ok(())
}

fn check_non_negative(key: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::config(key, format!("must be >= 0, got {v}")));
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = from_value(parse_json(text)?)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads and validates a spec. Relative PCM table paths are resolved
    /// against the spec file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_json_str(&text)?;
        if let Some(DeviceConfig::Pcm {
            tables: Some(t), ..
        }) = &mut spec.device
        {
            if t.is_relative() {
                if let Some(dir) = path.parent() {
                    *t = dir.join(&*t);
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.trainer;
        if t.layer_sizes.len() < 2 || t.layer_sizes.contains(&0) {
            return Err(Error::config(
                "trainer.layerSizes",
                "need at least two nonzero layer sizes",
            ));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::config("trainer.learningRate", "must be > 0"));
        }
        check_non_negative("readNoiseFrac", self.read_noise_frac)?;
        if let Some(b) = self.dac_bits {
            check_bits("dacBits", b, 52)?;
        }
        if let Some(b) = self.adc_bits {
            check_bits("adcBits", b, 52)?;
            if self.adc_calibration.samples == 0 {
                return Err(Error::config("adcCalibration.samples", "must be >= 1"));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(Error::config(
                    format!("sweep.{}", axis.param),
                    "needs at least one value",
                ));
            }
        }
        match (&self.device, t.update_scheme) {
            (None, UpdateScheme::MixedPrecision) => Err(Error::config(
                "device",
                "required when trainer.updateScheme is mixedPrecision",
            )),
            (Some(d), _) => validate_device(d),
            (None, UpdateScheme::FloatingPoint) => Ok(()),
        }
    }

    /// Resolved runs in deterministic order: cells (variants × sweep
    /// product, first axis slowest), then seeds.
    pub fn expand(&self) -> Result<Vec<RunSpec>> {
        let mut base = self.clone();
        base.sweep.clear();
        base.variants.clear();
        let base_value = serde_json::to_value(&base)?;

        let variants: Vec<Option<&Variant>> = if self.variants.is_empty() {
            vec![None]
        } else {
            self.variants.iter().map(Some).collect()
        };

        let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(combos.len() * axis.values.len());
            for combo in &combos {
                for v in &axis.values {
                    let mut c = combo.clone();
                    c.push((axis.param.clone(), v.clone()));
                    next.push(c);
                }
            }
            combos = next;
        }

        let mut runs = Vec::new();
        for variant in &variants {
            for combo in &combos {
                let mut value = base_value.clone();
                if let Some(v) = variant {
                    for (path, val) in &v.set {
                        set_path(&mut value, path, val.clone())?;
                    }
                }
                for (path, val) in combo {
                    set_path(&mut value, path, val.clone())?;
                }
                let resolved: ExperimentSpec = from_value(value)?;
                resolved.validate()?;

                let mut cell = BTreeMap::new();
                let mut parts = Vec::new();
                if let Some(v) = variant {
                    cell.insert("variant".to_string(), Value::String(v.label.clone()));
                    parts.push(v.label.clone());
                }
                for (path, val) in combo {
                    cell.insert(path.clone(), val.clone());
                    let leaf = path.rsplit('.').next().unwrap_or(path);
                    parts.push(format!("{leaf}={}", value_label(val)));
                }
                let cell_label = if parts.is_empty() {
                    "default".to_string()
                } else {
                    parts.join("_")
                };
                for &seed in &resolved.seeds {
                    runs.push(RunSpec {
                        run_id: format!("{}_seed{seed}", sanitize(&cell_label)),
                        cell_label: cell_label.clone(),
                        cell: cell.clone(),
                        seed,
                        spec: resolved.clone(),
                    });
                }
            }
        }
        Ok(runs)
    }
}

fn validate_device(d: &DeviceConfig) -> Result<()> {
    match d {
        DeviceConfig::Linear {
            bits,
            sigma_frac,
            w_min,
            w_max,
        } => {
            check_bits("device.bits", *bits, 30)?;
            check_non_negative("device.sigmaFrac", *sigma_frac)?;
            check_finite("device.wMin", *w_min)?;
            check_finite("device.wMax", *w_max)?;
            if w_min >= w_max {
                return Err(Error::config("device.wMax", "must exceed wMin"));
            }
        }
        DeviceConfig::Asymmetric {
            bits_p,
            bits_d,
            sigma_frac,
        } => {
            check_bits("device.bitsP", *bits_p, 30)?;
            check_bits("device.bitsD", *bits_d, 30)?;
            check_non_negative("device.sigmaFrac", *sigma_frac)?;
        }
        DeviceConfig::Nonlinear {
            beta,
            steps,
            w_min,
            w_max,
        } => {
            check_non_negative("device.beta", *beta)?;
            if *steps < 1 || *steps > u32::MAX as i64 {
                return Err(Error::config("device.steps", format!("must be >= 1, got {steps}")));
            }
            check_finite("device.wMin", *w_min)?;
            check_finite("device.wMax", *w_max)?;
            if w_min >= w_max {
                return Err(Error::config("device.wMax", "must exceed wMin"));
            }
        }
        DeviceConfig::Pcm {
            epsilon,
            refresh,
            init_mean,
            ..
        } => {
            if let Some(e) = epsilon {
                if !(*e > 0.0 && e.is_finite()) {
                    return Err(Error::config("device.epsilon", "must be > 0"));
                }
            }
            refresh
                .validate()
                .map_err(|e| Error::config("device.refresh", e.to_string()))?;
            check_finite("device.initMean", *init_mean)?;
        }
    }
    Ok(())
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if key.is_empty() {
            return Err(Error::config(path, "empty path segment"));
        }
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => return Err(Error::config(path, format!("`{key}` is not inside an object"))),
        };
        if keys.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '-' | '_' | '=' | '.' => c,
            _ => '-',
        })
        .collect()
}

/// One fully resolved training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub cell_label: String,
    /// Sweep coordinates (and variant label) identifying the cell.
    pub cell: BTreeMap<String, Value>,
    pub seed: u64,
    pub spec: ExperimentSpec,
}

impl RunSpec {
    pub fn network_config(&self) -> NetworkConfig {
        let t = &self.spec.trainer;
        NetworkConfig {
            layer_sizes: t.layer_sizes.clone(),
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            seed: self.seed,
            bias_enabled: t.bias_enabled,
            update_scheme: t.update_scheme,
        }
    }

    pub fn hardware(&self) -> HardwareConfig {
        HardwareConfig {
            read_noise_frac: self.spec.read_noise_frac,
            dac_bits: self.spec.dac_bits.map(|b| b as u32),
            adc_bits: self.spec.adc_bits.map(|b| b as u32),
        }
    }

    /// Device description; a noiseless 30-bit linear device stands in for
    /// floating-point runs, where it only fixes the weight range.
    pub fn device(&self) -> Result<DeviceSpec> {
        let Some(d) = &self.spec.device else {
            return Ok(DeviceSpec::Linear(LinearDeviceSpec::new(30, 0.0)?));
        };
        Ok(match d {
            DeviceConfig::Linear {
                bits,
                sigma_frac,
                w_min,
                w_max,
            } => DeviceSpec::Linear(LinearDeviceSpec::with_range(
                *bits as u32,
                *w_min,
                *w_max,
                *sigma_frac,
            )?),
            DeviceConfig::Asymmetric {
                bits_p,
                bits_d,
                sigma_frac,
            } => DeviceSpec::Asymmetric(AsymmetricDeviceSpec::new(
                *bits_p as u32,
                *bits_d as u32,
                *sigma_frac,
            )?),
            DeviceConfig::Nonlinear {
                beta,
                steps,
                w_min,
                w_max,
            } => DeviceSpec::Nonlinear(NonlinearExpSpec::calibrated(
                *beta,
                *steps as u32,
                *w_min,
                *w_max,
            )?),
            DeviceConfig::Pcm {
                mode,
                tables,
                epsilon,
                refresh,
                init_mean,
            } => {
                let tables = match tables {
                    Some(path) => PcmModelTables::load(path)?,
                    None => PcmModelTables::default_tables(),
                };
                DeviceSpec::Pcm(PcmSpec {
                    tables: Arc::new(tables),
                    mode: *mode,
                    epsilon: *epsilon,
                    refresh: *refresh,
                    init_mean: *init_mean,
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_fills_defaults() {
        let spec = ExperimentSpec::from_json_str(r#"{"device": {"model": "linear", "bits": 4}}"#)
            .unwrap();
        assert_eq!(
            spec.device,
            Some(DeviceConfig::Linear {
                bits: 4,
                sigma_frac: 0.0,
                w_min: -1.0,
                w_max: 1.0
            })
        );
        assert_eq!(spec.read_noise_frac, 0.0);
        assert_eq!(spec.dac_bits, None);
        assert_eq!(spec.adc_bits, None);
        assert_eq!(spec.trainer, TrainerSettings::default());
        assert_eq!(spec.seeds, DEFAULT_SEEDS.to_vec());
        let runs = spec.expand().unwrap();
        assert_eq!(runs.len(), 5);
        assert_eq!(runs[0].cell_label, "default");
    }

    #[test]
    fn sweep_expands_to_cartesian_product() {
        let spec = ExperimentSpec::from_json_str(
            r#"{
                "device": {"model": "linear", "bits": 4},
                "seeds": [1],
                "sweep": [
                    {"param": "device.bits", "values": [2, 3, 4, 5, 8]},
                    {"param": "device.sigmaFrac", "values": [0, 0.5, 1, 1.5, 2]}
                ]
            }"#,
        )
        .unwrap();
        let runs = spec.expand().unwrap();
        assert_eq!(runs.len(), 25);
        assert_eq!(runs[0].cell_label, "bits=2_sigmaFrac=0");
        assert_eq!(runs[1].cell_label, "bits=2_sigmaFrac=0.5");
        assert_eq!(runs[5].cell_label, "bits=3_sigmaFrac=0");
        match &runs[24].spec.device {
            Some(DeviceConfig::Linear {
                bits, sigma_frac, ..
            }) => assert_eq!((*bits, *sigma_frac), (8, 2.0)),
            other => panic!("{other:?}"),
        }
        assert!(runs[24].spec.sweep.is_empty());
    }

    #[test]
    fn variants_and_seeds_multiply() {
        let spec = ExperimentSpec::from_json_str(
            r#"{
                "device": {"model": "linear", "bits": 4},
                "seeds": [3, 4],
                "variants": [
                    {"label": "plain"},
                    {"label": "dac8", "set": {"dacBits": 8}}
                ]
            }"#,
        )
        .unwrap();
        let runs = spec.expand().unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[2].run_id, "dac8_seed3");
        assert_eq!(runs[2].spec.dac_bits, Some(8));
        assert_eq!(runs[0].spec.dac_bits, None);
        assert_eq!(runs[3].hardware().dac_bits, Some(8));
    }

    #[test]
    fn errors_name_the_offending_key() {
        let err = ExperimentSpec::from_json_str(r#"{"device": {"model": "linear", "bits": -2}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("device.bits"), "{err}");

        let err = ExperimentSpec::from_json_str(
            r#"{"device": {"model": "linear", "bits": 4}, "trainer": {"learningRat": 0.1}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("trainer"), "{err}");
        assert!(err.contains("learningRat"), "{err}");

        let err = ExperimentSpec::from_json_str(r#"{"device": {"model": "linear", "bits": 4, "sigma": 1}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("sigma"), "{err}");

        let err = ExperimentSpec::from_json_str(r#"{"readNoiseFrac": 0.1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("device"), "{err}");

        let err = ExperimentSpec::from_json_str(
            r#"{"device": {"model": "linear", "bits": 4},
                "sweep": [{"param": "device.bits", "values": [4, 0]}]}"#,
        )
        .unwrap()
        .expand()
        .unwrap_err()
        .to_string();
        assert!(err.contains("device.bits"), "{err}");
    }

    #[test]
    fn floating_point_needs_no_device() {
        let spec =
            ExperimentSpec::from_json_str(r#"{"trainer": {"updateScheme": "floatingPoint"}}"#)
                .unwrap();
        let run = &spec.expand().unwrap()[0];
        assert_eq!(run.network_config().update_scheme, UpdateScheme::FloatingPoint);
        assert!(run.device().is_ok());
    }

    #[test]
    fn pcm_defaults() {
        let spec = ExperimentSpec::from_json_str(r#"{"device": {"model": "pcm"}}"#).unwrap();
        let run = &spec.expand().unwrap()[0];
        match run.device().unwrap() {
            DeviceSpec::Pcm(p) => {
                assert_eq!(p.mode, PcmMode::Differential);
                assert_eq!(p.init_mean, 2.0);
                assert_eq!(p.refresh, RefreshPolicy::default());
                assert_eq!(p.tables.g_max, 25.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn set_path_creates_objects() {
        let mut v = serde_json::json!({"a": {"b": 1}});
        set_path(&mut v, "a.c.d", Value::from(2)).unwrap();
        assert_eq!(v, serde_json::json!({"a": {"b": 1, "c": {"d": 2}}}));
        assert!(set_path(&mut v, "a.b.x", Value::from(3)).is_err());
    }
}
