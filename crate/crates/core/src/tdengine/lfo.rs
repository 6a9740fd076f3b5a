//! Inference-time control signals: fundamental estimation of the learned
//! frame-rate control, single-period wavetable extraction and playback.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-padding factor for the f0 search spectrum.
pub const F0_PADDING: usize = 8;

/// 4-point Lagrange weights for nodes at 0, 1, 2, 3 evaluated at `x`.
pub fn lagrange4(x: f64) -> [f64; 4] {
    let (a, b, c, d) = (x, x - 1.0, x - 2.0, x - 3.0);
    [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0]
}

/// Cubic interpolation of `x` at fractional index `pos`. Near the ends the
/// four nodes shift inwards (one-sided Lagrange) rather than clamping.
pub fn cubic_at(x: &[f64], pos: f64) -> f64 {
    if x.len() < 4 {
        let i = (pos.round().max(0.0) as usize).min(x.len().saturating_sub(1));
        return x.get(i).copied().unwrap_or(0.0);
    }
    let base = (pos.floor() as isize - 1).clamp(0, x.len() as isize - 4) as usize;
    let w = lagrange4(pos - base as f64);
    (0..4).map(|j| w[j] * x[base + j]).sum()
}

/// Cubic interpolation over a periodic table.
pub fn cubic_wrapped(table: &[f64], pos: f64) -> f64 {
    let len = table.len() as isize;
    let i = pos.floor() as isize;
    let w = lagrange4(pos - i as f64 + 1.0);
    (0..4).map(|j| w[j] * table[(i - 1 + j as isize).rem_euclid(len) as usize]).sum()
}

/// Fundamental frequency (Hz) of a control series sampled at `frame_rate`.
///
/// The coarse estimate is the peak of the 8x zero-padded magnitude spectrum
/// of the mean-removed series, refined by a parabola through the log
/// magnitudes around the peak. With only a few periods in the record the
/// negative-frequency image pulls that peak noticeably, so the result is
/// then polished by a least-squares fit of a periodic signal (a few
/// harmonics) within half a DFT bin.
pub fn estimate_f0(control: &[f64], frame_rate: f64) -> Result<f64> {
    let (coarse, size) = spectral_peak(control)?;
    let half_bin = F0_PADDING as f64 / 2.0;
    let cycles = refine_periodic_fit(control, coarse / F0_PADDING as f64, half_bin / F0_PADDING as f64);
    Ok(cycles * F0_PADDING as f64 * frame_rate / size as f64)
}

/// Peak position in padded bins and the padded size.
fn spectral_peak(control: &[f64]) -> Result<(f64, usize)> {
    let m = control.len();
    if m < 8 {
        return Err(Error::InvalidArgument(format!("f0 estimation needs at least 8 frames, got {m}")));
    }
    let mean = control.iter().sum::<f64>() / m as f64;
    let scale = control.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let spread = control.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-9 * scale {
        return Err(Error::NoPeriodicity);
    }
    let size = m * F0_PADDING;
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for (b, v) in buf.iter_mut().zip(control) {
        b.re = v - mean;
    }
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let mag: Vec<f64> = buf[..=size / 2].iter().map(|c| c.norm()).collect();
    // ignore leakage from the removed mean: at least half a cycle per record
    let lo = F0_PADDING / 2;
    let (peak, &peak_mag) = mag
        .iter()
        .enumerate()
        .skip(lo)
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite spectrum"))
        .ok_or(Error::NoPeriodicity)?;
    let mut sorted = mag[lo..].to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite spectrum"));
    let median = sorted[sorted.len() / 2];
    if peak_mag <= 4.0 * median || peak + 1 >= mag.len() {
        return Err(Error::NoPeriodicity);
    }
    let (a, b, c) = ((mag[peak - 1] + 1e-300).ln(), (peak_mag + 1e-300).ln(), (mag[peak + 1] + 1e-300).ln());
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Ok((peak as f64 + offset, size))
}

/// Harmonics used by the periodic least-squares refinement.
const FIT_HARMONICS: usize = 8;

/// Energy captured by the least-squares fit of a constant plus harmonics
/// `1..=H` of `w = 2π cycles / len`; `H` stays below Nyquist.
fn periodic_fit_energy(x: &[f64], cycles: f64) -> f64 {
    let len = x.len();
    let w = 2.0 * std::f64::consts::PI * cycles / len as f64;
    let h = ((0.5 * len as f64 / cycles).floor() as usize).saturating_sub(1).clamp(1, FIT_HARMONICS);
    let dim = 2 * h + 1;
    let mut g = vec![vec![0.0; dim]; dim];
    let mut r = vec![0.0; dim];
    let mut basis = vec![0.0; dim];
    for (n, &v) in x.iter().enumerate() {
        basis[0] = 1.0;
        for k in 1..=h {
            let ph = w * (k * n) as f64;
            basis[2 * k - 1] = ph.cos();
            basis[2 * k] = ph.sin();
        }
        for i in 0..dim {
            r[i] += basis[i] * v;
            for j in 0..dim {
                g[i][j] += basis[i] * basis[j];
            }
        }
    }
    match solve(g, r.clone()) {
        Some(coef) => coef.iter().zip(&r).map(|(c, r)| c * r).sum(),
        None => 0.0,
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Golden-section search for the best-fitting cycle count in
/// `centre ± radius`.
fn refine_periodic_fit(x: &[f64], centre: f64, radius: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = ((centre - radius).max(0.25), centre + radius);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (periodic_fit_energy(x, a), periodic_fit_energy(x, b));
    for _ in 0..80 {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = periodic_fit_energy(x, a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = periodic_fit_energy(x, b);
        }
    }
    0.5 * (lo + hi)
}

/// One period of the control signal at audio rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfoWavetable {
    pub table: Vec<f64>,
    pub f0: f64,
    pub source_frame_rate: f64,
}

impl LfoWavetable {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Estimates f0 of `control`, slices one period from its first sample and
/// resamples it (cubic) to `round(F_s / f0)` samples. A fundamental whose
/// period does not fit in the window counts as no periodicity.
pub fn extract_wavetable(control: &[f64], frame_rate: f64, sample_rate: f64) -> Result<LfoWavetable> {
    let f0 = estimate_f0(control, frame_rate)?;
    if frame_rate / f0 > (control.len() - 1) as f64 {
        return Err(Error::NoPeriodicity);
    }
    wavetable_with_f0(control, frame_rate, sample_rate, f0)
}

pub fn wavetable_with_f0(control: &[f64], frame_rate: f64, sample_rate: f64, f0: f64) -> Result<LfoWavetable> {
    if !(f0 > 0.0) {
        return Err(Error::InvalidArgument(format!("f0 must be positive, got {f0}")));
    }
    let period_frames = frame_rate / f0;
    if period_frames > (control.len() - 1) as f64 {
        return Err(Error::InvalidArgument(format!(
            "period of {period_frames:.2} frames exceeds the {} available",
            control.len()
        )));
    }
    let len = (sample_rate / f0).round().max(1.0) as usize;
    let step = period_frames / len as f64;
    let table = (0..len).map(|j| cubic_at(control, j as f64 * step)).collect();
    Ok(LfoWavetable { table, f0, source_frame_rate: frame_rate })
}

/// Reads the table with a phase accumulator advancing `rate_scale` samples
/// per output sample.
pub fn render_lfo(wt: &LfoWavetable, rate_scale: f64, length: usize) -> Result<Vec<f64>> {
    render_lfo_from(wt, rate_scale, length, 0.0)
}

/// As [`render_lfo`], starting at table position `start`.
pub fn render_lfo_from(wt: &LfoWavetable, rate_scale: f64, length: usize, start: f64) -> Result<Vec<f64>> {
    if !(rate_scale > 0.0) {
        return Err(Error::InvalidArgument(format!("rate scale must be positive, got {rate_scale}")));
    }
    let len = wt.table.len() as f64;
    Ok((0..length)
        .map(|n| {
            let pos = (start + n as f64 * rate_scale).rem_euclid(len);
            cubic_wrapped(&wt.table, pos)
        })
        .collect())
}
