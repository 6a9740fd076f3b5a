//! Run configuration: profile defaults, then the config file, then flags.

use std::path::Path;

use modfx::diffmodel::{FbConfig, Variant};
use modfx::signals::KernelKind;
use modfx::tdengine::{ToyConfig, ToyKind};
use modfx::trainer::{Preemphasis, Profile, TrainConfig};
use modfx::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every field optional; unset fields fall back to the profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<Profile>,
    pub variant: Option<String>,
    pub sections: Option<u32>,
    pub fb_config: Option<String>,
    pub channels: Option<usize>,
    pub n: Option<usize>,
    pub n_prime: Option<usize>,
    pub sample_rate: Option<f64>,
    pub length: Option<usize>,
    pub input_kind: Option<KernelKind>,
    pub preemphasis: Option<Preemphasis>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub seeds: Option<usize>,
    pub base_seed: Option<u64>,
    pub jobs: Option<usize>,
    pub align: Option<bool>,
    pub toy: Option<ToyFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyFile {
    pub kind: Option<ToyKind>,
    pub lfo_rate_hz: Option<f64>,
    pub a1: Option<f64>,
    pub sections: Option<u32>,
    pub break_min_hz: Option<f64>,
    pub break_max_hz: Option<f64>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.message().to_string();
        let field = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "config".to_string());
        Error::Parse { field, msg: format!("{}: {msg}", path.display()) }
    })
}

/// Overlays `b` on `a` field by field.
pub fn merge(a: FileConfig, b: FileConfig) -> FileConfig {
    macro_rules! pick {
        ($($f:ident),*) => { FileConfig { $($f: b.$f.or(a.$f)),*, toy: match (a.toy, b.toy) {
            (Some(x), Some(y)) => Some(ToyFile {
                kind: y.kind.or(x.kind),
                lfo_rate_hz: y.lfo_rate_hz.or(x.lfo_rate_hz),
                a1: y.a1.or(x.a1),
                sections: y.sections.or(x.sections),
                break_min_hz: y.break_min_hz.or(x.break_min_hz),
                break_max_hz: y.break_max_hz.or(x.break_max_hz),
            }),
            (x, y) => y.or(x),
        } } };
    }
    pick!(
        profile, variant, sections, fb_config, channels, n, n_prime, sample_rate, length, input_kind, preemphasis,
        iterations, learning_rate, beta1, beta2, eps, seeds, base_seed, jobs, align
    )
}

fn parse_variant(name: &str, sections: u32) -> Result<Variant> {
    match name {
        "delay-line" | "delay" | "flanger" | "chorus" => Ok(Variant::DelayLine),
        "apf-cascade" | "apf" | "phaser" => Ok(Variant::ApfCascade { k: sections }),
        other => Err(Error::Parse { field: "variant".into(), msg: format!("expected delay-line or apf-cascade, got `{other}`") }),
    }
}

impl FileConfig {
    pub fn profile(&self) -> Profile {
        self.profile.unwrap_or(Profile::Paper)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let variant = parse_variant(self.variant.as_deref().unwrap_or("delay-line"), self.sections.unwrap_or(6))?;
        let mut c = TrainConfig::new(self.profile(), variant);
        if let Some(v) = &self.fb_config {
            c.fb_config = v.parse::<FbConfig>()?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(channels, n, sample_rate, length, input_kind, preemphasis, iterations, learning_rate, beta1, beta2, eps, seeds, base_seed);
        c.n_prime = self.n_prime.unwrap_or(c.n / 2);
        c.validate()?;
        Ok(c)
    }

    pub fn toy_config(&self, kind: Option<ToyKind>) -> Result<ToyConfig> {
        let t = self.toy.clone().unwrap_or_default();
        let kind = kind.or(t.kind).ok_or_else(|| Error::Parse { field: "toy.kind".into(), msg: "missing".into() })?;
        let n = self.n.unwrap_or(1024);
        let fs = self.sample_rate.unwrap_or(44100.0);
        let profile = self.profile();
        let rate = match (t.lfo_rate_hz, self.length) {
            (Some(r), _) => r,
            (None, Some(l)) if profile == Profile::Desk => ToyConfig::rate_for_cycles(2.0, l, fs),
            _ => profile.toy_lfo_rate(fs),
        };
        let mut toy = ToyConfig::new(kind, n, fs, rate);
        if let Some(v) = t.a1 {
            toy.a1 = v;
        }
        if let Some(v) = t.sections.or(self.sections) {
            toy.sections = v;
        }
        if let Some(v) = t.break_min_hz {
            toy.break_min_hz = v;
        }
        if let Some(v) = t.break_max_hz {
            toy.break_max_hz = v;
        }
        if !(toy.lfo_rate_hz > 0.0) || toy.sections == 0 || !(toy.break_min_hz > 0.0 && toy.break_max_hz < fs / 2.0) {
            return Err(Error::Parse { field: "toy".into(), msg: format!("invalid toy settings {toy:?}") });
        }
        Ok(toy)
    }
}
