//! The frequency-sampling model used during training: a learnable control
//! signal (look-up table followed by a small MLP) sweeping either a delay or
//! an all-pass cascade inside a feedback comb, wrapped by two SVF biquads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, BiquadCoeffs, FreqGrid, HalfSpectrum};

/// Width of the LFO MLP hidden layer.
pub const HIDDEN: usize = 16;

/// Smallest `|1 - a1 s|` tolerated by the frame response.
pub const FEEDBACK_GUARD: f64 = 1e-9;

/// Margin keeping `f` strictly inside `(0, 0.5)` once the sigmoid saturates.
pub const F_MARGIN: f64 = 1e-9;

/// Smallest resonance, reached only when the softplus underflows.
pub const R_MIN: f64 = 1e-12;

/// Largest pole magnitude, reached only when the tanh rounds to 1.
pub const POLE_LIMIT: f64 = 1.0 - 1e-9;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// State-variable filter in unconstrained form. `f_prime` and `r_prime` map
/// to a normalised frequency in (0, 0.5) and a positive resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvfParams {
    pub f_prime: f64,
    pub r_prime: f64,
    pub m_l: f64,
    pub m_b: f64,
    pub m_h: f64,
}

impl SvfParams {
    /// Normalised frequency `1 / (2 (1 + e^{-f'}))`.
    pub fn f(&self) -> f64 {
        (0.5 * sigmoid(self.f_prime)).clamp(F_MARGIN, 0.5 - F_MARGIN)
    }

    /// Resonance `log(1 + e^{R'})`.
    pub fn r(&self) -> f64 {
        softplus(self.r_prime).max(R_MIN)
    }

    pub fn g(&self) -> f64 {
        (PI * self.f()).tan()
    }

    pub fn coeffs(&self) -> BiquadCoeffs {
        svf_coeffs(self.g(), self.r(), self.m_l, self.m_b, self.m_h)
    }
}

pub fn svf_coeffs(g: f64, r: f64, m_l: f64, m_b: f64, m_h: f64) -> BiquadCoeffs {
    let g2 = g * g;
    BiquadCoeffs {
        beta: [g2 * m_l + g * m_b + m_h, 2.0 * g2 * m_l - 2.0 * m_h, g2 * m_l - g * m_b + m_h],
        alpha: [g2 + 2.0 * r + 1.0, 2.0 * g2 - 2.0, g2 - 2.0 * r + 1.0],
    }
}

/// Feed-forward dry gain `b0`, wet gain `b1` and feedback gain `a1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombParams {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
}

impl Default for CombParams {
    fn default() -> Self {
        Self { b0: 1.0, b1: 1.0, a1: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfoParams {
    pub lut: Vec<f64>,
    pub mlp_w1: Vec<f64>,
    pub mlp_b1: Vec<f64>,
    pub mlp_w2: Vec<f64>,
    pub mlp_b2: f64,
}

impl LfoParams {
    pub fn zeros(frames: usize) -> Self {
        Self {
            lut: vec![0.0; frames],
            mlp_w1: vec![0.0; HIDDEN],
            mlp_b1: vec![0.0; HIDDEN],
            mlp_w2: vec![0.0; HIDDEN],
            mlp_b2: 0.0,
        }
    }

    /// An LFO whose output reproduces `control` (to ~1e-7): one hidden unit
    /// operating in the linear region of tanh.
    pub fn from_control(control: &[f64]) -> Self {
        const EPS: f64 = 1e-4;
        let mut lfo = Self::zeros(control.len());
        lfo.lut = control.to_vec();
        lfo.mlp_w1[0] = EPS;
        lfo.mlp_w2[0] = 1.0 / EPS;
        lfo
    }

    pub fn frames(&self) -> usize {
        self.lut.len()
    }

    pub fn eval(&self, input: f64) -> f64 {
        let mut out = self.mlp_b2;
        for j in 0..HIDDEN {
            out += self.mlp_w2[j] * (self.mlp_w1[j] * input + self.mlp_b1[j]).tanh();
        }
        out
    }

    /// `c_m = MLP(LUT[m])`
    pub fn forward(&self, m: usize) -> Result<f64> {
        let x = *self.lut.get(m).ok_or(Error::IndexOutOfRange { index: m, len: self.lut.len() })?;
        Ok(self.eval(x))
    }

    pub fn control(&self) -> Vec<f64> {
        self.lut.iter().map(|&x| self.eval(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Variant {
    /// Flanger / chorus: interpolated delay line.
    DelayLine,
    /// Phaser: `k` first-order all-pass sections.
    ApfCascade { k: u32 },
}

impl Variant {
    pub fn sections(&self) -> Option<u32> {
        match self {
            Variant::DelayLine => None,
            Variant::ApfCascade { k } => Some(*k),
        }
    }
}

/// Where SVF2 sits relative to the feedback loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FbConfig {
    /// Feedback taken before SVF2.
    I,
    /// SVF2 inside the feedback loop.
    II,
}

impl std::str::FromStr for FbConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" | "I" | "1" => Ok(FbConfig::I),
            "ii" | "II" | "2" => Ok(FbConfig::II),
            other => Err(Error::Parse { field: "fb_config".into(), msg: format!("expected i or ii, got `{other}`") }),
        }
    }
}

/// Replaces an SVF with a unit response. Used by toy targets (which omit
/// the filters) and tests; never set by training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvfBypass {
    pub svf1: bool,
    pub svf2: bool,
}

impl SvfBypass {
    fn is_none(&self) -> bool {
        !self.svf1 && !self.svf2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub comb: CombParams,
    pub svf1: SvfParams,
    pub svf2: SvfParams,
    pub lfo: LfoParams,
    pub variant: Variant,
    pub fb_config: FbConfig,
    #[serde(default, skip_serializing_if = "SvfBypass::is_none")]
    pub bypass: SvfBypass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Frame length `N` the model was trained with.
    pub n: usize,
    pub sample_rate: f64,
    pub channels: Vec<ChannelParams>,
}

/// `d = (N/4)(1 - cos(π c))`, bounded to `[0, N/2]`.
pub fn delay_from_control(c: f64, n: usize) -> f64 {
    n as f64 / 4.0 * (1.0 - (PI * c).cos())
}

/// Inverse of [`delay_from_control`] on `c ∈ [0, 1]`.
pub fn control_from_delay(d: f64, n: usize) -> f64 {
    (1.0 - 4.0 * d / n as f64).clamp(-1.0, 1.0).acos() / PI
}

/// `p = tanh(π c + 0.5)`, always inside the unit circle for finite `c`.
pub fn pole_from_control(c: f64) -> f64 {
    (PI * c + 0.5).tanh().clamp(-POLE_LIMIT, POLE_LIMIT)
}

/// Inverse of [`pole_from_control`].
pub fn control_from_pole(p: f64) -> f64 {
    (p.atanh() - 0.5) / PI
}

/// Delay-line frame component and the delay it implies.
pub fn delay_variant_response(c: f64, grid: &FreqGrid) -> (HalfSpectrum, f64) {
    let d = delay_from_control(c, grid.n);
    (spectral::delay_response(d, grid), d)
}

/// All-pass frame component and the pole it implies.
pub fn phaser_variant_response(c: f64, k_sections: u32, grid: &FreqGrid) -> Result<(HalfSpectrum, f64)> {
    if k_sections == 0 {
        return Err(Error::InvalidArgument("all-pass cascade needs at least one section".into()));
    }
    let p = pole_from_control(c);
    Ok((spectral::apf_cascade_response(p, k_sections, grid)?, p))
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if let Variant::ApfCascade { k: 0 } = self.variant {
            return Err(Error::InvalidArgument("ApfCascade needs K >= 1".into()));
        }
        let l = &self.lfo;
        if l.mlp_w1.len() != HIDDEN || l.mlp_b1.len() != HIDDEN || l.mlp_w2.len() != HIDDEN {
            return Err(Error::ShapeMismatch(format!("LFO MLP layers must have width {HIDDEN}")));
        }
        Ok(())
    }

    pub fn svf_responses(&self, grid: &FreqGrid) -> Result<(HalfSpectrum, HalfSpectrum)> {
        let h1 = if self.bypass.svf1 { HalfSpectrum::ones(grid.n) } else { spectral::svf_response(&self.svf1, grid)? };
        let h2 = if self.bypass.svf2 { HalfSpectrum::ones(grid.n) } else { spectral::svf_response(&self.svf2, grid)? };
        Ok((h1, h2))
    }

    /// Frame component `s_m` for control value `c`.
    pub fn variant_response(&self, c: f64, grid: &FreqGrid) -> Result<HalfSpectrum> {
        match self.variant {
            Variant::DelayLine => Ok(delay_variant_response(c, grid).0),
            Variant::ApfCascade { k } => Ok(phaser_variant_response(c, k, grid)?.0),
        }
    }

    pub(crate) fn combine(&self, m: usize, h1: &HalfSpectrum, h2: &HalfSpectrum, s: &HalfSpectrum) -> Result<HalfSpectrum> {
        let CombParams { b0, b1, a1 } = self.comb;
        let mut bins = Vec::with_capacity(s.len());
        for k in 0..s.len() {
            let wet = h2.bins[k] * s.bins[k];
            let den = match self.fb_config {
                FbConfig::I => 1.0 - a1 * s.bins[k],
                FbConfig::II => 1.0 - a1 * wet,
            };
            if den.norm() < FEEDBACK_GUARD {
                return Err(Error::NearSingularFeedback { frame: m, bin: k, magnitude: den.norm() });
            }
            bins.push(h1.bins[k] * (b0 + b1 * wet) / den);
        }
        Ok(HalfSpectrum { bins, n: s.n })
    }
}

/// Frequency response `h_m` of one channel at frame `m`.
pub fn frame_response(ch: &ChannelParams, m: usize, grid: &FreqGrid) -> Result<HalfSpectrum> {
    ch.validate()?;
    let c = ch.lfo.forward(m)?;
    let (h1, h2) = ch.svf_responses(grid)?;
    let s = ch.variant_response(c, grid)?;
    ch.combine(m, &h1, &h2, &s)
}

/// Per-frame responses of one channel, reusing the frame-invariant SVFs.
pub fn channel_responses(ch: &ChannelParams, grid: &FreqGrid) -> Result<Vec<HalfSpectrum>> {
    ch.validate()?;
    let (h1, h2) = ch.svf_responses(grid)?;
    ch.lfo
        .control()
        .into_iter()
        .enumerate()
        .map(|(m, c)| {
            let s = ch.variant_response(c, grid)?;
            ch.combine(m, &h1, &h2, &s)
        })
        .collect()
}

/// `Ŷ_m = Σ_channels X_m ⊙ h_m`
pub fn fs_forward(params: &ModelParams, inputs: &[HalfSpectrum]) -> Result<Vec<HalfSpectrum>> {
    let grid = FreqGrid::new(params.n)?;
    let frames = params.frame_count();
    if inputs.len() != frames {
        return Err(Error::FrameCountMismatch { expected: frames, got: inputs.len() });
    }
    let mut out: Vec<HalfSpectrum> = inputs
        .iter()
        .map(|x| HalfSpectrum { bins: vec![Complex64::new(0.0, 0.0); x.len()], n: x.n })
        .collect();
    for ch in &params.channels {
        let hs = channel_responses(ch, &grid)?;
        for ((y, x), h) in out.iter_mut().zip(inputs).zip(&hs) {
            if x.n != params.n {
                return Err(Error::ShapeMismatch(format!("input frame N={} vs model N={}", x.n, params.n)));
            }
            for ((yb, xb), hb) in y.bins.iter_mut().zip(&x.bins).zip(&h.bins) {
                *yb += xb * hb;
            }
        }
    }
    Ok(out)
}

/// Shape of a model to initialise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub variant: Variant,
    pub fb_config: FbConfig,
    pub channels: usize,
    pub n: usize,
    pub frames: usize,
    pub sample_rate: f64,
}

/// Seeded random initialisation.
pub fn init_params(seed: u64, shape: &ModelShape) -> Result<ModelParams> {
    if shape.channels == 0 {
        return Err(Error::InvalidArgument("model needs at least one channel".into()));
    }
    if let Variant::ApfCascade { k: 0 } = shape.variant {
        return Err(Error::InvalidArgument("ApfCascade needs K >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lut_dist = Normal::new(0.0, (1.0 / (2.0 * PI)).sqrt()).expect("valid normal");
    let mix = Uniform::new_inclusive(0.5, 1.5);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let f_dist = Normal::new(-PI, 1.0).expect("valid normal");
    // fan-in 1 for the hidden layer, HIDDEN for the output layer
    let w1_bound = 1.0;
    let w2_bound = (1.0 / HIDDEN as f64).sqrt();

    let svf = |rng: &mut ChaCha8Rng| SvfParams {
        f_prime: f_dist.sample(rng),
        r_prime: std_normal.sample(rng),
        m_l: mix.sample(rng),
        m_b: mix.sample(rng),
        m_h: mix.sample(rng),
    };

    let channels = (0..shape.channels)
        .map(|_| {
            let lut = (0..shape.frames).map(|_| lut_dist.sample(&mut rng)).collect();
            let mlp_w1 = (0..HIDDEN).map(|_| rng.gen_range(-w1_bound..=w1_bound)).collect();
            let mlp_w2 = (0..HIDDEN).map(|_| rng.gen_range(-w2_bound..=w2_bound)).collect();
            let svf1 = svf(&mut rng);
            let svf2 = svf(&mut rng);
            ChannelParams {
                comb: CombParams::default(),
                svf1,
                svf2,
                lfo: LfoParams { lut, mlp_w1, mlp_b1: vec![0.0; HIDDEN], mlp_w2, mlp_b2: 0.0 },
                variant: shape.variant,
                fb_config: shape.fb_config,
                bypass: SvfBypass::default(),
            }
        })
        .collect();
    Ok(ModelParams { n: shape.n, sample_rate: shape.sample_rate, channels })
}

impl ModelParams {
    pub fn frame_count(&self) -> usize {
        self.channels.first().map_or(0, |c| c.lfo.frames())
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn num_params(&self) -> usize {
        self.channels.iter().map(|c| CHANNEL_FIXED + c.lfo.frames()).sum()
    }

    /// Learnable values in a fixed order: per channel `b0 b1 a1`, SVF1,
    /// SVF2, LUT, `w1 b1 w2 b2`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for ch in &self.channels {
            v.extend([ch.comb.b0, ch.comb.b1, ch.comb.a1]);
            for s in [&ch.svf1, &ch.svf2] {
                v.extend([s.f_prime, s.r_prime, s.m_l, s.m_b, s.m_h]);
            }
            v.extend(&ch.lfo.lut);
            v.extend(&ch.lfo.mlp_w1);
            v.extend(&ch.lfo.mlp_b1);
            v.extend(&ch.lfo.mlp_w2);
            v.push(ch.lfo.mlp_b2);
        }
        v
    }

    /// Inverse of [`flatten`](Self::flatten), keeping structure from `self`.
    pub fn with_flat(&self, values: &[f64]) -> Result<ModelParams> {
        if values.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector has {} entries, model needs {}",
                values.len(),
                self.num_params()
            )));
        }
        let mut out = self.clone();
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("length checked");
        for ch in &mut out.channels {
            ch.comb = CombParams { b0: next(), b1: next(), a1: next() };
            for s in [&mut ch.svf1, &mut ch.svf2] {
                *s = SvfParams { f_prime: next(), r_prime: next(), m_l: next(), m_b: next(), m_h: next() };
            }
            for v in ch.lfo.lut.iter_mut() {
                *v = next();
            }
            for layer in [&mut ch.lfo.mlp_w1, &mut ch.lfo.mlp_b1, &mut ch.lfo.mlp_w2] {
                for v in layer.iter_mut() {
                    *v = next();
                }
            }
            ch.lfo.mlp_b2 = next();
        }
        Ok(out)
    }

    /// Name of the flat slot at `index`, e.g. `ch0.svf1.f_prime`.
    pub fn slot_name(&self, mut index: usize) -> String {
        for (c, ch) in self.channels.iter().enumerate() {
            let m = ch.lfo.frames();
            let size = CHANNEL_FIXED + m;
            if index < size {
                const HEAD: [&str; 13] = [
                    "comb.b0", "comb.b1", "comb.a1", "svf1.f_prime", "svf1.r_prime", "svf1.m_l", "svf1.m_b",
                    "svf1.m_h", "svf2.f_prime", "svf2.r_prime", "svf2.m_l", "svf2.m_b", "svf2.m_h",
                ];
                let name = if index < 13 {
                    HEAD[index].to_string()
                } else if index < 13 + m {
                    format!("lfo.lut[{}]", index - 13)
                } else {
                    let j = index - 13 - m;
                    match j / HIDDEN {
                        0 => format!("lfo.mlp_w1[{}]", j % HIDDEN),
                        1 => format!("lfo.mlp_b1[{}]", j % HIDDEN),
                        2 => format!("lfo.mlp_w2[{}]", j % HIDDEN),
                        _ => "lfo.mlp_b2".to_string(),
                    }
                };
                return format!("ch{c}.{name}");
            }
            index -= size;
        }
        format!("out-of-range[{index}]")
    }

    /// Control signal `c_m` of every channel.
    pub fn controls(&self) -> Vec<Vec<f64>> {
        self.channels.iter().map(|c| c.lfo.control()).collect()
    }
}

/// Per-channel slot count excluding the LUT.
pub const CHANNEL_FIXED: usize = 3 + 5 + 5 + 3 * HIDDEN + 1;
