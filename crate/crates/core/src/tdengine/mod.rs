//! Zero-latency time-domain inference. The frame-rate control learned by
//! the frequency-sampling model is turned into a per-sample control (via a
//! one-period wavetable) that drives a delay line or all-pass cascade inside
//! the comb/feedback structure, with SVFs realised as biquads.

pub mod blocks;
pub mod lfo;
pub mod toy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmodel::{delay_from_control, pole_from_control, ChannelParams, CombParams, FbConfig, ModelParams, Variant, FEEDBACK_GUARD};
use crate::error::{Error, Result};
use blocks::{ApfCascade, Biquad, DelayLine};
pub use lfo::{estimate_f0, extract_wavetable, render_lfo, LfoWavetable};
pub use toy::{make_toy_target, validation_signal, ToyConfig, ToyKind};

/// Output-to-input energy ratio (60 dB) that trips the watchdog.
pub const WATCHDOG_RATIO: f64 = 1e6;

/// Cumulative energy guard.
#[derive(Debug, Clone, Default)]
pub struct Watchdog {
    input_energy: f64,
    output_energy: f64,
}

impl Watchdog {
    pub fn check(&mut self, n: usize, x: f64, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::Instability(format!("non-finite output at sample {n}")));
        }
        self.input_energy += x * x;
        self.output_energy += y * y;
        if self.output_energy > WATCHDOG_RATIO * self.input_energy + 1e-300 {
            return Err(Error::Instability(format!(
                "output energy exceeds input energy by more than 60 dB at sample {n}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Core {
    Delay(DelayLine),
    Apf(ApfCascade),
}

impl Core {
    fn gain(&self) -> f64 {
        match self {
            Core::Delay(d) => d.gain(),
            Core::Apf(a) => a.gain(),
        }
    }

    fn offset(&self) -> f64 {
        match self {
            Core::Delay(d) => d.offset(),
            Core::Apf(a) => a.offset(),
        }
    }

    fn tick(&mut self, u: f64) -> f64 {
        match self {
            Core::Delay(d) => d.tick(u),
            Core::Apf(a) => a.tick(u),
        }
    }
}

/// Streaming state of one channel.
#[derive(Debug, Clone)]
pub struct ChannelEngine {
    comb: CombParams,
    fb_config: FbConfig,
    n: usize,
    svf1: Biquad,
    svf2: Biquad,
    core: Core,
    sample: usize,
}

impl ChannelEngine {
    pub fn new(ch: &ChannelParams, n: usize) -> Result<Self> {
        ch.validate()?;
        let svf = |bypass: bool, p: &crate::diffmodel::SvfParams| {
            if bypass {
                Biquad::identity()
            } else {
                Biquad::new(&p.coeffs())
            }
        };
        let core = match ch.variant {
            Variant::DelayLine => Core::Delay(DelayLine::new(n / 2 + 1)),
            Variant::ApfCascade { k } => Core::Apf(ApfCascade::new(k)),
        };
        Ok(Self {
            comb: ch.comb,
            fb_config: ch.fb_config,
            n,
            svf1: svf(ch.bypass.svf1, &ch.svf1),
            svf2: svf(ch.bypass.svf2, &ch.svf2),
            core,
            sample: 0,
        })
    }

    /// Processes one sample with control value `c`.
    pub fn tick(&mut self, c: f64, x: f64) -> Result<f64> {
        match &mut self.core {
            Core::Delay(d) => d.set_delay(delay_from_control(c, self.n)),
            Core::Apf(a) => a.set_pole(pole_from_control(c)),
        }
        let CombParams { b0, b1, a1 } = self.comb;
        let (gs, os) = (self.core.gain(), self.core.offset());
        let (num, den) = match self.fb_config {
            FbConfig::I => (x + a1 * os, 1.0 - a1 * gs),
            FbConfig::II => {
                let (g2, o2) = (self.svf2.gain(), self.svf2.offset());
                (x + a1 * (g2 * os + o2), 1.0 - a1 * g2 * gs)
            }
        };
        if den.abs() < FEEDBACK_GUARD {
            return Err(Error::Instability(format!("delay-free feedback loop is singular at sample {}", self.sample)));
        }
        let u = num / den;
        let s = self.core.tick(u);
        let wet = self.svf2.tick(s);
        self.sample += 1;
        Ok(self.svf1.tick(b0 * u + b1 * wet))
    }
}

/// Runs one channel over `x` with a per-sample control signal.
pub fn process_channel(ch: &ChannelParams, n: usize, control: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if control.len() < x.len() {
        return Err(Error::ShapeMismatch(format!("control has {} samples, input {}", control.len(), x.len())));
    }
    let mut engine = ChannelEngine::new(ch, n)?;
    let mut dog = Watchdog::default();
    let mut y = Vec::with_capacity(x.len());
    for (i, (&xi, &c)) in x.iter().zip(control).enumerate() {
        let yi = engine.tick(c, xi)?;
        dog.check(i, xi, yi)?;
        y.push(yi);
    }
    Ok(y)
}

pub fn process_flanger(ch: &ChannelParams, n: usize, control: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if ch.variant != Variant::DelayLine {
        return Err(Error::InvalidArgument("process_flanger needs the delay-line variant".into()));
    }
    process_channel(ch, n, control, x)
}

pub fn process_phaser(ch: &ChannelParams, n: usize, control: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if !matches!(ch.variant, Variant::ApfCascade { .. }) {
        return Err(Error::InvalidArgument("process_phaser needs the all-pass variant".into()));
    }
    process_channel(ch, n, control, x)
}

/// How the frame-rate control becomes a per-sample control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// One extracted period played back from a wavetable.
    #[default]
    Wavetable,
    /// Cubic interpolation of the frame values, wrapping after `M` frames.
    FrameInterp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub rate_scale: f64,
    pub mode: ControlMode,
    /// LFO start position in frames.
    pub frame_offset: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { rate_scale: 1.0, mode: ControlMode::Wavetable, frame_offset: 0.0 }
    }
}

/// Per-sample control generator for one channel. Frame `m` of the learned
/// control is taken to describe the centre of that frame, audio time
/// `m N + N/2`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSource {
    Constant(f64),
    Table { wavetable: LfoWavetable, period_frames: f64 },
    Frames(Vec<f64>),
}

impl ControlSource {
    pub fn from_control(control: &[f64], n: usize, sample_rate: f64, mode: ControlMode) -> Result<Self> {
        if control.is_empty() {
            return Err(Error::InvalidArgument("empty control signal".into()));
        }
        let mean = control.iter().sum::<f64>() / control.len() as f64;
        let spread = control.iter().map(|c| (c - mean).abs()).fold(0.0, f64::max);
        if spread <= 1e-9 * (1.0 + mean.abs()) {
            return Ok(ControlSource::Constant(mean));
        }
        match mode {
            ControlMode::FrameInterp => Ok(ControlSource::Frames(control.to_vec())),
            ControlMode::Wavetable => {
                let frame_rate = sample_rate / n as f64;
                // No period inside the window: loop the whole window instead.
                match extract_wavetable(control, frame_rate, sample_rate) {
                    Ok(wavetable) => {
                        let period_frames = frame_rate / wavetable.f0;
                        Ok(ControlSource::Table { wavetable, period_frames })
                    }
                    Err(Error::NoPeriodicity) => Ok(ControlSource::Frames(control.to_vec())),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Fundamental of the control in Hz, if periodic.
    pub fn f0(&self) -> Option<f64> {
        match self {
            ControlSource::Table { wavetable, .. } => Some(wavetable.f0),
            _ => None,
        }
    }

    pub fn render(&self, n: usize, len: usize, rate_scale: f64, frame_offset: f64) -> Result<Vec<f64>> {
        if !(rate_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("rate scale must be positive, got {rate_scale}")));
        }
        let frame_pos = |t: usize| (t as f64 - n as f64 / 2.0) / n as f64 * rate_scale + frame_offset;
        Ok(match self {
            ControlSource::Constant(c) => vec![*c; len],
            ControlSource::Frames(c) => (0..len).map(|t| lfo::cubic_wrapped(c, frame_pos(t))).collect(),
            ControlSource::Table { wavetable, period_frames } => {
                let per_frame = wavetable.len() as f64 / period_frames;
                let start = frame_pos(0) * per_frame;
                lfo::render_lfo_from(wavetable, rate_scale * per_frame / n as f64, len, start)?
            }
        })
    }
}

/// Control sources for every channel of a model.
pub fn control_sources(params: &ModelParams, mode: ControlMode) -> Result<Vec<ControlSource>> {
    params
        .channels
        .iter()
        .map(|ch| ControlSource::from_control(&playback_control(ch), params.n, params.sample_rate, mode))
        .collect()
}

/// Frame control prepared for interpolation. The delay map is even and
/// 2-periodic in `c`, so training may settle on either sign frame by frame;
/// folding onto `[0, 1]` keeps every delay and makes the trajectory continuous.
pub fn playback_control(ch: &ChannelParams) -> Vec<f64> {
    let c = ch.lfo.control();
    match ch.variant {
        Variant::DelayLine => c.into_iter().map(fold_delay_control).collect(),
        Variant::ApfCascade { .. } => c,
    }
}

/// Representative of `c` in `[0, 1]` with the same delay.
pub fn fold_delay_control(c: f64) -> f64 {
    let r = c.rem_euclid(2.0);
    if r > 1.0 {
        2.0 - r
    } else {
        r
    }
}

/// Renders `x` through every channel and sums the outputs.
pub fn process_with_sources(params: &ModelParams, sources: &[ControlSource], x: &[f64], opts: &RenderOptions) -> Result<Vec<f64>> {
    let outputs: Vec<Vec<f64>> = params
        .channels
        .par_iter()
        .zip(sources)
        .map(|(ch, src)| {
            let control = src.render(params.n, x.len(), opts.rate_scale, opts.frame_offset)?;
            process_channel(ch, params.n, &control, x)
        })
        .collect::<Result<_>>()?;
    let mut y = vec![0.0; x.len()];
    for out in outputs {
        for (a, b) in y.iter_mut().zip(out) {
            *a += b;
        }
    }
    Ok(y)
}

/// Full inference: control extraction, rendering and channel summation.
pub fn process(params: &ModelParams, x: &[f64], opts: &RenderOptions) -> Result<Vec<f64>> {
    let sources = control_sources(params, opts.mode)?;
    process_with_sources(params, &sources, x, opts)
}
