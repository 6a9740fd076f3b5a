use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffmodel::{FbConfig, ModelParams, Variant};
use crate::error::{Error, Result};

use super::ensure_parent;

pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Summary of the model shape, checked against the parameters on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsMeta {
    pub variant: Variant,
    pub fb_config: FbConfig,
    pub channels: usize,
    pub sections: Option<u32>,
    pub n: usize,
    pub frames: usize,
    pub sample_rate: f64,
}

impl ParamsMeta {
    pub fn of(params: &ModelParams) -> Result<Self> {
        let first = params.channels.first().ok_or_else(|| Error::InvalidArgument("model has no channels".into()))?;
        Ok(Self {
            variant: first.variant,
            fb_config: first.fb_config,
            channels: params.channels.len(),
            sections: first.variant.sections(),
            n: params.n,
            frames: params.frame_count(),
            sample_rate: params.sample_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub format_version: u32,
    pub meta: ParamsMeta,
    pub params: ModelParams,
}

fn parse_err(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Parse { field: field.into(), msg: msg.into() }
}

pub fn params_to_json(params: &ModelParams) -> Result<String> {
    if let Some(i) = params.flatten().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "save", node: i });
    }
    let file = ParamsFile { format_version: PARAMS_FORMAT_VERSION, meta: ParamsMeta::of(params)?, params: params.clone() };
    serde_json::to_string_pretty(&file).map_err(|e| parse_err("params", e.to_string()))
}

/// Parses a params file; errors name the offending field.
pub fn params_from_json(text: &str) -> Result<ModelParams> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ParamsFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        parse_err(if path == "." { "params".to_string() } else { path }, e.into_inner().to_string())
    })?;
    if file.format_version != PARAMS_FORMAT_VERSION {
        return Err(parse_err(
            "format_version",
            format!("unsupported version {} (expected {PARAMS_FORMAT_VERSION})", file.format_version),
        ));
    }
    let p = file.params;
    for (i, ch) in p.channels.iter().enumerate() {
        ch.validate().map_err(|e| parse_err(format!("params.channels[{i}]"), e.to_string()))?;
        if ch.lfo.frames() != p.frame_count() {
            return Err(parse_err(format!("params.channels[{i}].lfo.lut"), "LUT lengths differ between channels"));
        }
    }
    let actual = ParamsMeta::of(&p).map_err(|e| parse_err("params.channels", e.to_string()))?;
    if actual != file.meta {
        return Err(parse_err("meta", format!("does not describe the stored parameters (found {actual:?})")));
    }
    Ok(p)
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, params_to_json(params)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text)
}
