//! Reverse-mode gradients of the spectral training loss with respect to
//! every learnable model parameter, plus finite-difference checking.

mod tape;

pub use tape::{CVar, Op, Tape, Var};

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::diffmodel::{self, ChannelParams, FbConfig, ModelParams, Variant, FEEDBACK_GUARD, F_MARGIN, HIDDEN, POLE_LIMIT, R_MIN};
use crate::error::{Error, Result};
use crate::spectral::{FreqGrid, HalfSpectrum};
use crate::trainer::spectral_loss;

/// Input and target spectra for a set of frame indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Frame index `m` of each entry (selects the LUT row).
    pub frames: Vec<usize>,
    pub inputs: Vec<HalfSpectrum>,
    pub targets: Vec<HalfSpectrum>,
}

impl Batch {
    /// Every frame `0..M` in order.
    pub fn full(inputs: Vec<HalfSpectrum>, targets: Vec<HalfSpectrum>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::FrameCountMismatch { expected: inputs.len(), got: targets.len() });
        }
        Ok(Self { frames: (0..inputs.len()).collect(), inputs, targets })
    }

    pub fn subset(&self, frames: &[usize]) -> Self {
        let pick = |v: &Vec<HalfSpectrum>| frames.iter().map(|&i| v[i].clone()).collect();
        Self {
            frames: frames.iter().map(|&i| self.frames[i]).collect(),
            inputs: pick(&self.inputs),
            targets: pick(&self.targets),
        }
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if self.inputs.len() != self.frames.len() || self.targets.len() != self.frames.len() {
            return Err(Error::ShapeMismatch("batch frames, inputs and targets differ in length".into()));
        }
        let m = params.frame_count();
        if let Some(&bad) = self.frames.iter().find(|&&f| f >= m) {
            return Err(Error::IndexOutOfRange { index: bad, len: m });
        }
        let bins = params.n / 2 + 1;
        if self.inputs.iter().chain(&self.targets).any(|s| s.len() != bins) {
            return Err(Error::ShapeMismatch(format!("batch spectra must have {bins} bins")));
        }
        Ok(())
    }
}

/// Optional pre-emphasis response applied inside the loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossSpec {
    pub preemphasis: Option<HalfSpectrum>,
}

impl LossSpec {
    /// Per-bin loss weights: Parseval multiplicity times `|h_L|²`.
    fn weights(&self, n: usize) -> Result<Vec<f64>> {
        let bins = n / 2 + 1;
        let emph = match &self.preemphasis {
            None => vec![1.0; bins],
            Some(h) if h.len() == bins => h.power(),
            Some(h) => return Err(Error::ShapeMismatch(format!("pre-emphasis has {} bins, expected {bins}", h.len()))),
        };
        Ok(emph.iter().enumerate().map(|(k, w)| w * HalfSpectrum::bin_multiplicity(k, n)).collect())
    }
}

/// Loss evaluated without the tape (model forward + spectral loss).
pub fn batch_loss(params: &ModelParams, batch: &Batch, spec: &LossSpec) -> Result<f64> {
    batch.check(params)?;
    let grid = FreqGrid::new(params.n)?;
    let mut pred: Vec<HalfSpectrum> = batch
        .inputs
        .iter()
        .map(|x| HalfSpectrum { bins: vec![Complex64::new(0.0, 0.0); x.len()], n: x.n })
        .collect();
    for ch in &params.channels {
        ch.validate()?;
        let (h1, h2) = ch.svf_responses(&grid)?;
        for (i, &m) in batch.frames.iter().enumerate() {
            let c = ch.lfo.forward(m)?;
            let s = ch.variant_response(c, &grid)?;
            let h = ch.combine(m, &h1, &h2, &s)?;
            for ((y, x), hk) in pred[i].bins.iter_mut().zip(&batch.inputs[i].bins).zip(&h.bins) {
                *y += x * hk;
            }
        }
    }
    spectral_loss(&pred, &batch.targets, spec.preemphasis.as_ref())
}

/// Reusable tape for repeated loss/gradient evaluation.
#[derive(Debug, Default)]
pub struct LossGraph {
    tape: Tape,
}

struct BinConsts {
    omega: Vec<f64>,
    zinv: Vec<Complex64>,
    zinv2: Vec<Complex64>,
}

impl LossGraph {
    pub fn new() -> Self {
        Self { tape: Tape::new() }
    }

    /// Nodes recorded by the last evaluation.
    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }

    /// Loss and flat gradient (ordered as [`ModelParams::flatten`]).
    pub fn evaluate(&mut self, params: &ModelParams, batch: &Batch, spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
        batch.check(params)?;
        let n = params.n;
        let grid = FreqGrid::new(n)?;
        let bins = grid.len();
        let weights = spec.weights(n)?;
        let denom: f64 = batch
            .targets
            .iter()
            .map(|y| y.bins.iter().zip(&weights).map(|(b, w)| w * b.norm_sqr()).sum::<f64>())
            .sum();
        if !(denom > 0.0) {
            return Err(Error::DegenerateTarget("weighted target energy is zero".into()));
        }
        let consts = BinConsts {
            omega: (0..bins).map(|k| grid.omega(k)).collect(),
            zinv: (0..bins).map(|k| grid.zinv(k)).collect(),
            zinv2: (0..bins).map(|k| grid.zinv(k) * grid.zinv(k)).collect(),
        };

        let tape = &mut self.tape;
        tape.clear();
        let flat = params.flatten();
        let slots: Vec<Var> = flat.iter().map(|&v| tape.input(v)).collect();

        let mut h_total: Vec<Vec<CVar>> = Vec::with_capacity(batch.frames.len());
        let mut offset = 0;
        for (ci, ch) in params.channels.iter().enumerate() {
            ch.validate()?;
            let size = diffmodel::CHANNEL_FIXED + ch.lfo.frames();
            let sl = &slots[offset..offset + size];
            offset += size;
            let responses = channel_on_tape(tape, ch, sl, batch, &consts, n)?;
            if ci == 0 {
                h_total = responses;
            } else {
                for (acc, h) in h_total.iter_mut().zip(responses) {
                    for (a, b) in acc.iter_mut().zip(h) {
                        *a = tape.cadd(*a, b);
                    }
                }
            }
        }

        let mut terms = Vec::with_capacity(batch.frames.len() * bins);
        for (i, h) in h_total.iter().enumerate() {
            let (x, y) = (&batch.inputs[i].bins, &batch.targets[i].bins);
            for k in 0..bins {
                terms.push(tape.residual_energy(h[k], x[k], y[k], weights[k]));
            }
        }
        let num = tape.sum(&terms);
        let loss = tape.scale(num, 1.0 / denom);
        if let Some((node, op)) = tape.first_non_finite() {
            return Err(Error::NonFinite { op, node });
        }
        let value = tape.value(loss);
        let grads = tape.gradient(loss, &slots);
        Ok((value, grads))
    }
}

fn svf_on_tape(tape: &mut Tape, sl: &[Var], consts: &BinConsts) -> Result<Vec<CVar>> {
    let (fp, rp, ml, mb, mh) = (sl[0], sl[1], sl[2], sl[3], sl[4]);
    let sig = tape.sigmoid(fp);
    let half = tape.scale(sig, 0.5);
    let f = tape.clamp(half, F_MARGIN, 0.5 - F_MARGIN);
    let pif = tape.scale(f, PI);
    let g = tape.tan(pif);
    let sp = tape.softplus(rp);
    let r = tape.clamp(sp, R_MIN, f64::INFINITY);
    let g2 = tape.mul(g, g);
    let g2ml = tape.mul(g2, ml);
    let gmb = tape.mul(g, mb);
    let beta = [
        tape.lincomb(&[(g2ml, 1.0), (gmb, 1.0), (mh, 1.0)], 0.0),
        tape.lincomb(&[(g2ml, 2.0), (mh, -2.0)], 0.0),
        tape.lincomb(&[(g2ml, 1.0), (gmb, -1.0), (mh, 1.0)], 0.0),
    ];
    let alpha = [
        tape.lincomb(&[(g2, 1.0), (r, 2.0)], 1.0),
        tape.lincomb(&[(g2, 2.0)], -2.0),
        tape.lincomb(&[(g2, 1.0), (r, -2.0)], 1.0),
    ];
    let mut out = Vec::with_capacity(consts.zinv.len());
    for k in 0..consts.zinv.len() {
        let (z1, z2) = (consts.zinv[k], consts.zinv2[k]);
        let poly = |tape: &mut Tape, c: &[Var; 3]| CVar {
            re: tape.lincomb(&[(c[0], 1.0), (c[1], z1.re), (c[2], z2.re)], 0.0),
            im: tape.lincomb(&[(c[1], z1.im), (c[2], z2.im)], 0.0),
        };
        let num = poly(tape, &beta);
        let den = poly(tape, &alpha);
        let mag = tape.cvalue(den).norm();
        if mag < 1e-12 {
            return Err(Error::SingularFilter { bin: k, magnitude: mag });
        }
        out.push(tape.cdiv(num, den));
    }
    Ok(out)
}

fn mlp_on_tape(tape: &mut Tape, lfo_slots: &[Var], x: Var) -> Var {
    let (w1, rest) = lfo_slots.split_at(HIDDEN);
    let (b1, rest) = rest.split_at(HIDDEN);
    let (w2, rest) = rest.split_at(HIDDEN);
    let mut acc = rest[0];
    for j in 0..HIDDEN {
        let pre = tape.mul_add(w1[j], x, b1[j]);
        let act = tape.tanh(pre);
        acc = tape.mul_add(w2[j], act, acc);
    }
    acc
}

/// Records `h_m` for every batch frame of one channel.
fn channel_on_tape(
    tape: &mut Tape,
    ch: &ChannelParams,
    sl: &[Var],
    batch: &Batch,
    consts: &BinConsts,
    n: usize,
) -> Result<Vec<Vec<CVar>>> {
    let (b0, b1, a1) = (sl[0], sl[1], sl[2]);
    let h1 = if ch.bypass.svf1 { None } else { Some(svf_on_tape(tape, &sl[3..8], consts)?) };
    let h2 = if ch.bypass.svf2 { None } else { Some(svf_on_tape(tape, &sl[8..13], consts)?) };
    let frames = ch.lfo.frames();
    let lut = &sl[13..13 + frames];
    let mlp = &sl[13 + frames..];
    let neg_a1 = tape.neg(a1);
    let bins = consts.zinv.len();

    let mut out = Vec::with_capacity(batch.frames.len());
    for &m in &batch.frames {
        let c = mlp_on_tape(tape, mlp, lut[m]);
        let pic = tape.scale(c, PI);
        let control = match ch.variant {
            Variant::DelayLine => {
                let cos = tape.cos(pic);
                tape.lincomb(&[(cos, -(n as f64) / 4.0)], n as f64 / 4.0)
            }
            Variant::ApfCascade { .. } => {
                let shifted = tape.add_const(pic, 0.5);
                let p = tape.tanh(shifted);
                tape.clamp(p, -POLE_LIMIT, POLE_LIMIT)
            }
        };
        let mut hm = Vec::with_capacity(bins);
        for k in 0..bins {
            let s = match ch.variant {
                Variant::DelayLine => tape.delay_phasor(control, consts.omega[k]),
                Variant::ApfCascade { k: sections } => tape.allpass_pow(control, consts.zinv[k], sections),
            };
            let wet = match &h2 {
                Some(h2) => tape.cmul(h2[k], s),
                None => s,
            };
            let num = CVar { re: tape.mul_add(b1, wet.re, b0), im: tape.mul(b1, wet.im) };
            let fb = match ch.fb_config {
                FbConfig::I => s,
                FbConfig::II => wet,
            };
            let t = tape.mul(neg_a1, fb.re);
            let den = CVar { re: tape.add_const(t, 1.0), im: tape.mul(neg_a1, fb.im) };
            let mag = tape.cvalue(den).norm();
            if mag < FEEDBACK_GUARD {
                return Err(Error::NearSingularFeedback { frame: m, bin: k, magnitude: mag });
            }
            let q = tape.cdiv(num, den);
            hm.push(match &h1 {
                Some(h1) => tape.cmul(h1[k], q),
                None => q,
            });
        }
        out.push(hm);
    }
    Ok(out)
}

/// Loss and its exact gradient, shaped like the parameters.
pub fn grad_of_loss(params: &ModelParams, batch: &Batch, spec: &LossSpec) -> Result<(f64, ModelParams)> {
    let (loss, flat) = LossGraph::new().evaluate(params, batch, spec)?;
    Ok((loss, params.with_flat(&flat)?))
}

/// Central-difference step for a parameter of value `theta`.
pub fn fd_step(theta: f64) -> f64 {
    1e-4 * theta.abs().max(1.0)
}

/// Adjoints below this magnitude are reported but not judged.
pub const CHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub slot: usize,
    pub name: String,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
    pub checked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub loss: f64,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().filter(|e| e.checked).all(|e| e.rel_error <= self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().filter(|e| e.checked).map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.checked && e.rel_error > self.tolerance)
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares every adjoint against central finite differences of the
/// tape-free loss at steps `h` and `h/2`, Richardson-extrapolated.
pub fn check_gradients(params: &ModelParams, batch: &Batch, spec: &LossSpec, tolerance: f64) -> Result<GradReport> {
    let (loss, grads) = LossGraph::new().evaluate(params, batch, spec)?;
    let flat = params.flatten();
    let mut entries = Vec::with_capacity(flat.len());
    let mut probe = flat.clone();
    for (i, (&theta, &adj)) in flat.iter().zip(&grads).enumerate() {
        let h = fd_step(theta);
        let mut central = |h: f64| -> Result<f64> {
            probe[i] = theta + h;
            let up = batch_loss(&params.with_flat(&probe)?, batch, spec)?;
            probe[i] = theta - h;
            let dn = batch_loss(&params.with_flat(&probe)?, batch, spec)?;
            probe[i] = theta;
            Ok((up - dn) / (2.0 * h))
        };
        let (coarse, fine) = (central(h)?, central(0.5 * h)?);
        let fd = (4.0 * fine - coarse) / 3.0;
        entries.push(GradCheckEntry {
            slot: i,
            name: params.slot_name(i),
            adjoint: adj,
            finite_difference: fd,
            rel_error: relative_error(adj, fd),
            checked: adj.abs() > CHECK_FLOOR,
        });
    }
    Ok(GradReport { loss, tolerance, entries })
}

/// Delay-estimation loss `Σ_k |X(k)|² (1 - cos(2πk(D̂ - D)/N))` and its
/// derivative in `D̂`, computed on the tape.
pub fn delay_loss_on_tape(dhat: f64, target: f64, x: &HalfSpectrum) -> Result<(f64, f64)> {
    let grid = FreqGrid::new(x.n)?;
    let mut tape = Tape::new();
    let d = tape.input(dhat);
    let diff = tape.add_const(d, -target);
    let mut terms = Vec::with_capacity(x.len());
    for (k, b) in x.bins.iter().enumerate() {
        let phase = tape.scale(diff, grid.omega(k));
        let c = tape.cos(phase);
        terms.push((c, -b.norm_sqr()));
    }
    let total: f64 = x.power().iter().sum();
    let loss = tape.lincomb(&terms, total);
    let g = tape.gradient(loss, &[d])[0];
    Ok((tape.value(loss), g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmodel::{init_params, CombParams, ModelShape};
    use crate::spectral::rfft;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_batch(n: usize, frames: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = || {
            let x: Vec<f64> = (0..n).map(|i| if i < n / 2 { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
            rfft(&x).unwrap()
        };
        let inputs: Vec<_> = (0..frames).map(|_| spec()).collect();
        let targets: Vec<_> = (0..frames).map(|_| spec()).collect();
        Batch::full(inputs, targets).unwrap()
    }

    fn shape(variant: Variant, fb: FbConfig, channels: usize) -> ModelShape {
        ModelShape { variant, fb_config: fb, channels, n: 32, frames: 4, sample_rate: 44100.0 }
    }

    #[test]
    fn tape_loss_equals_plain_loss() {
        for (variant, fb) in [
            (Variant::DelayLine, FbConfig::I),
            (Variant::ApfCascade { k: 4 }, FbConfig::II),
        ] {
            let mut p = init_params(5, &shape(variant, fb, 2)).unwrap();
            p.channels[0].comb = CombParams { b0: 0.8, b1: 1.1, a1: 0.4 };
            let b = toy_batch(32, 4, 1);
            let spec = LossSpec { preemphasis: Some(crate::signals::gen_triangular(16).unwrap().spectrum(32).unwrap()) };
            let (l, _) = LossGraph::new().evaluate(&p, &b, &spec).unwrap();
            let plain = batch_loss(&p, &b, &spec).unwrap();
            assert!((l - plain).abs() < 1e-12 * plain.max(1.0));
        }
    }

    #[test]
    fn fresh_init_passes_gradient_check() {
        for (variant, fb) in [
            (Variant::DelayLine, FbConfig::I),
            (Variant::DelayLine, FbConfig::II),
            (Variant::ApfCascade { k: 6 }, FbConfig::I),
            (Variant::ApfCascade { k: 2 }, FbConfig::II),
        ] {
            let mut p = init_params(11, &shape(variant, fb, 1)).unwrap();
            p.channels[0].comb.a1 = 0.3;
            let report = check_gradients(&p, &toy_batch(32, 4, 2), &LossSpec::default(), 1e-3).unwrap();
            let worst: Vec<_> = report.failures().collect();
            assert!(report.passed(), "{variant:?} {fb:?}: {worst:?}");
        }
    }

    #[test]
    fn zero_target_is_degenerate() {
        let p = init_params(1, &shape(Variant::DelayLine, FbConfig::I, 1)).unwrap();
        let zero = HalfSpectrum { bins: vec![Complex64::new(0.0, 0.0); 17], n: 32 };
        let b = Batch::full(vec![zero.clone(); 4], vec![zero; 4]).unwrap();
        assert!(matches!(check_gradients(&p, &b, &LossSpec::default(), 1e-3), Err(Error::DegenerateTarget(_))));
    }

    #[test]
    fn unused_lut_rows_get_exact_zero() {
        let mut p = init_params(2, &shape(Variant::DelayLine, FbConfig::I, 1)).unwrap();
        p.channels[0].lfo.lut = vec![0.2; 4];
        let b = toy_batch(32, 4, 3).subset(&[1, 3]);
        let (_, g) = grad_of_loss(&p, &b, &LossSpec::default()).unwrap();
        let lut = &g.channels[0].lfo.lut;
        assert_eq!(lut[0], 0.0);
        assert_eq!(lut[2], 0.0);
        assert!(lut[1] != 0.0 && lut[3] != 0.0);
    }

    #[test]
    fn bypassed_svf_gets_zero_gradient() {
        let mut p = init_params(2, &shape(Variant::DelayLine, FbConfig::I, 1)).unwrap();
        p.channels[0].bypass.svf2 = true;
        let (_, g) = grad_of_loss(&p, &toy_batch(32, 4, 3), &LossSpec::default()).unwrap();
        let s = g.channels[0].svf2;
        assert_eq!([s.f_prime, s.r_prime, s.m_l, s.m_b, s.m_h], [0.0; 5]);
        assert!(g.channels[0].svf1.m_l != 0.0);
    }

    #[test]
    fn stationary_at_target_parameters() {
        let p = init_params(8, &shape(Variant::ApfCascade { k: 3 }, FbConfig::I, 1)).unwrap();
        let inputs = toy_batch(32, 4, 4).inputs;
        let targets = diffmodel::fs_forward(&p, &inputs).unwrap();
        let b = Batch::full(inputs, targets).unwrap();
        let (loss, g) = LossGraph::new().evaluate(&p, &b, &LossSpec::default()).unwrap();
        assert!(loss < 1e-25);
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-10, "{norm}");
    }

    #[test]
    fn gradients_are_linear_in_loss_terms() {
        let p = init_params(4, &shape(Variant::DelayLine, FbConfig::I, 1)).unwrap();
        let b = toy_batch(32, 4, 6);
        let b1 = b.subset(&[0, 1]);
        let b2 = b.subset(&[2, 3]);
        // with equal denominators the loss is a sum of per-subset numerators
        let denom = |b: &Batch| -> f64 {
            b.targets
                .iter()
                .flat_map(|y| y.bins.iter().enumerate().map(|(k, c)| HalfSpectrum::bin_multiplicity(k, y.n) * c.norm_sqr()))
                .sum()
        };
        let (_, g) = LossGraph::new().evaluate(&p, &b, &LossSpec::default()).unwrap();
        let (_, g1) = LossGraph::new().evaluate(&p, &b1, &LossSpec::default()).unwrap();
        let (_, g2) = LossGraph::new().evaluate(&p, &b2, &LossSpec::default()).unwrap();
        let (d, d1, d2) = (denom(&b), denom(&b1), denom(&b2));
        for i in 0..g.len() {
            let sum = (g1[i] * d1 + g2[i] * d2) / d;
            assert!((g[i] - sum).abs() < 1e-12 * (1.0 + g[i].abs()));
        }
    }

    #[test]
    fn evaluation_is_bit_deterministic() {
        let p = init_params(4, &shape(Variant::ApfCascade { k: 6 }, FbConfig::II, 2)).unwrap();
        let b = toy_batch(32, 4, 6);
        let mut graph = LossGraph::new();
        let a = graph.evaluate(&p, &b, &LossSpec::default()).unwrap();
        let c = graph.evaluate(&p, &b, &LossSpec::default()).unwrap();
        assert_eq!(a.0.to_bits(), c.0.to_bits());
        assert!(a.1.iter().zip(&c.1).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_parameters_are_diagnosed() {
        let mut p = init_params(4, &shape(Variant::DelayLine, FbConfig::I, 1)).unwrap();
        p.channels[0].svf1.f_prime = f64::NAN;
        let err = LossGraph::new().evaluate(&p, &toy_batch(32, 4, 1), &LossSpec::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "input", .. }), "{err}");
    }

    #[test]
    fn delay_only_adjoint_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 256;
        let x: Vec<f64> = (0..n).map(|i| if i < 64 { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        let xs = rfft(&x).unwrap();
        for _ in 0..20 {
            let dhat = rng.gen_range(0.0..200.0);
            let (_, g) = delay_loss_on_tape(dhat, 100.0, &xs).unwrap();
            // derivative as printed, times the 2π/N chain factor
            let printed: f64 = xs
                .power()
                .iter()
                .enumerate()
                .map(|(k, p)| p * k as f64 * (2.0 * PI * k as f64 * (dhat - 100.0) / n as f64).sin())
                .sum();
            let closed = 2.0 * PI / n as f64 * printed;
            assert!((g - closed).abs() < 1e-8 * closed.abs().max(1.0));
        }
    }
}
