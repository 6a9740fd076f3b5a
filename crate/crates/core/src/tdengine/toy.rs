//! Digital toy targets with a known, sinusoidal LFO, and a synthetic
//! plucked-string signal used for validation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmodel::{
    control_from_delay, control_from_pole, ChannelParams, CombParams, FbConfig, LfoParams, ModelParams, SvfBypass, SvfParams,
    Variant,
};
use crate::error::{Error, Result};

use super::process_channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyKind {
    Flanger,
    Phaser,
}

impl std::str::FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flanger" => Ok(ToyKind::Flanger),
            "phaser" => Ok(ToyKind::Phaser),
            other => Err(Error::Parse { field: "kind".into(), msg: format!("expected flanger or phaser, got `{other}`") }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub kind: ToyKind,
    pub n: usize,
    pub sample_rate: f64,
    pub lfo_rate_hz: f64,
    pub a1: f64,
    pub sections: u32,
    /// Phaser break-frequency sweep, Hz.
    pub break_min_hz: f64,
    pub break_max_hz: f64,
}

impl ToyConfig {
    pub fn new(kind: ToyKind, n: usize, sample_rate: f64, lfo_rate_hz: f64) -> Self {
        Self { kind, n, sample_rate, lfo_rate_hz, a1: 0.5, sections: 6, break_min_hz: 100.0, break_max_hz: 4000.0 }
    }

    /// LFO rate giving exactly `cycles` periods over `len` samples.
    pub fn rate_for_cycles(cycles: f64, len: usize, sample_rate: f64) -> f64 {
        cycles * sample_rate / len as f64
    }

    /// Delay in samples at time `t` (flanger).
    pub fn delay_at(&self, t: f64) -> f64 {
        self.n as f64 / 4.0 * (1.0 - (2.0 * PI * self.lfo_rate_hz * t).cos())
    }

    /// Break frequency in Hz at time `t` (phaser), sinusoidal in log frequency.
    pub fn break_frequency_at(&self, t: f64) -> f64 {
        let (lo, hi) = (self.break_min_hz.ln(), self.break_max_hz.ln());
        let phase = 0.5 * (1.0 - (2.0 * PI * self.lfo_rate_hz * t).cos());
        (lo + (hi - lo) * phase).exp()
    }

    /// All-pass pole at time `t` (phaser).
    pub fn pole_at(&self, t: f64) -> f64 {
        let w = (PI * self.break_frequency_at(t) / self.sample_rate).tan();
        (1.0 - w) / (1.0 + w)
    }

    /// Model control value at time `t`.
    pub fn control_at(&self, t: f64) -> f64 {
        match self.kind {
            ToyKind::Flanger => control_from_delay(self.delay_at(t), self.n),
            ToyKind::Phaser => control_from_pole(self.pole_at(t)),
        }
    }

    /// The swept quantity the model learns: delay (flanger) or pole (phaser).
    pub fn trajectory_at(&self, t: f64) -> f64 {
        match self.kind {
            ToyKind::Flanger => self.delay_at(t),
            ToyKind::Phaser => self.pole_at(t),
        }
    }

    pub fn sample_control(&self, len: usize) -> Vec<f64> {
        (0..len).map(|i| self.control_at(i as f64 / self.sample_rate)).collect()
    }

    /// Control at the centre of each of `frames` frames.
    pub fn frame_control(&self, frames: usize) -> Vec<f64> {
        (0..frames).map(|m| self.control_at(self.frame_time(m))).collect()
    }

    pub fn frame_trajectory(&self, frames: usize) -> Vec<f64> {
        (0..frames).map(|m| self.trajectory_at(self.frame_time(m))).collect()
    }

    fn frame_time(&self, m: usize) -> f64 {
        crate::signals::frame_centre_time(m, self.n, self.sample_rate)
    }

    pub fn variant(&self) -> Variant {
        match self.kind {
            ToyKind::Flanger => Variant::DelayLine,
            ToyKind::Phaser => Variant::ApfCascade { k: self.sections },
        }
    }

    /// The target structure: SVFs omitted, `b0 = b1 = 1`, configuration (i).
    pub fn channel(&self, lfo: LfoParams) -> ChannelParams {
        let unit = SvfParams { f_prime: 0.0, r_prime: 0.0, m_l: 0.0, m_b: 0.0, m_h: 1.0 };
        ChannelParams {
            comb: CombParams { b0: 1.0, b1: 1.0, a1: self.a1 },
            svf1: unit,
            svf2: unit,
            lfo,
            variant: self.variant(),
            fb_config: FbConfig::I,
            bypass: SvfBypass { svf1: true, svf2: true },
        }
    }

    /// The target expressed as model parameters over `frames` frames.
    pub fn params(&self, frames: usize) -> ModelParams {
        let lfo = LfoParams::from_control(&self.frame_control(frames));
        ModelParams { n: self.n, sample_rate: self.sample_rate, channels: vec![self.channel(lfo)] }
    }
}

/// One-pole coefficient of the pluck excitation filter.
const PLUCK_SMOOTHING: f64 = 0.8;

/// Applies the toy effect to `x`, LFO starting at phase zero.
pub fn make_toy_target(cfg: &ToyConfig, x: &[f64]) -> Result<Vec<f64>> {
    let control = cfg.sample_control(x.len());
    process_channel(&cfg.channel(LfoParams::zeros(1)), cfg.n, &control, x)
}

/// Sequence of Karplus-Strong plucks in the guitar range, one every
/// quarter second, deterministic in `seed`. The excitation is a one-pole
/// low-passed noise burst, giving a darker, more guitar-like spectrum than
/// white noise.
pub fn validation_signal(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let note_len = ((0.25 * sample_rate) as usize).max(1);
    let mut out = vec![0.0; len];
    let mut start = 0;
    while start < len {
        let f = 82.4 * 2f64.powf(rng.gen_range(0.0..24.0) / 12.0);
        let period = (sample_rate / f).round().max(2.0) as usize;
        let mut lp = 0.0;
        let mut line: Vec<f64> = (0..period)
            .map(|_| {
                lp += (1.0 - PLUCK_SMOOTHING) * (rng.gen_range(-1.0..1.0) - lp);
                lp
            })
            .collect();
        let amp = rng.gen_range(0.2..0.5);
        let end = (start + 4 * note_len).min(len);
        let mut idx = 0;
        for v in &mut out[start..end] {
            let next = (idx + 1) % period;
            let y = line[idx];
            line[idx] = 0.996 * 0.5 * (line[idx] + line[next]);
            *v += amp * y;
            idx = next;
        }
        start += note_len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_output() {
        for kind in [ToyKind::Flanger, ToyKind::Phaser] {
            let cfg = ToyConfig::new(kind, 1024, 44100.0, 1.0);
            let y = make_toy_target(&cfg, &vec![0.0; 5000]).unwrap();
            assert!(y.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn trajectories_stay_in_range() {
        let cfg = ToyConfig::new(ToyKind::Phaser, 1024, 44100.0, 1.3);
        for i in 0..1000 {
            let t = i as f64 * 1e-3;
            let f = cfg.break_frequency_at(t);
            assert!((99.999..=4000.001).contains(&f));
            assert!(cfg.pole_at(t) > 0.0 && cfg.pole_at(t) < 1.0);
            let d = ToyConfig { kind: ToyKind::Flanger, ..cfg }.delay_at(t);
            assert!((0.0..=512.0).contains(&d));
        }
        assert!((cfg.break_frequency_at(0.0) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn control_reproduces_trajectory() {
        for kind in [ToyKind::Flanger, ToyKind::Phaser] {
            let cfg = ToyConfig::new(kind, 1024, 44100.0, 0.7);
            for i in 0..50 {
                let t = i as f64 * 0.031;
                let c = cfg.control_at(t);
                let back = match kind {
                    ToyKind::Flanger => crate::diffmodel::delay_from_control(c, 1024),
                    ToyKind::Phaser => crate::diffmodel::pole_from_control(c),
                };
                assert!((back - cfg.trajectory_at(t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn validation_signal_is_deterministic_and_bounded() {
        let a = validation_signal(44100, 44100.0, 9);
        assert_eq!(a, validation_signal(44100, 44100.0, 9));
        assert_ne!(a, validation_signal(44100, 44100.0, 10));
        assert!(a.iter().all(|v| v.abs() < 4.0));
        assert!(a.iter().map(|v| v * v).sum::<f64>() > 1.0);
    }

    #[test]
    fn feedback_target_stays_bounded() {
        let len = 1 << 16;
        let x = validation_signal(len, 44100.0, 1);
        for kind in [ToyKind::Flanger, ToyKind::Phaser] {
            let cfg = ToyConfig::new(kind, 1024, 44100.0, ToyConfig::rate_for_cycles(2.0, len, 44100.0));
            let y = make_toy_target(&cfg, &x).unwrap();
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ey: f64 = y.iter().map(|v| v * v).sum();
            assert!(ey < 100.0 * ex);
        }
    }
}
