//! The committed experiment specs, one per figure scenario.

use crate::dataio::ExperimentSpec;
use crate::error::{Error, Result};

macro_rules! preset {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../configs/", $name, ".json")))
    };
}

pub const PRESETS: [(&str, &str); 8] = [
    preset!("baseline"),
    preset!("fig3-granularity"),
    preset!("fig5-asymmetry"),
    preset!("fig6-nonlinearity"),
    preset!("fig7a-readnoise"),
    preset!("fig7b-converters"),
    preset!("fig8-pcm"),
    preset!("pcm-single"),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{name}`")))?;
    ExperimentSpec::from_json_str(text)
}
