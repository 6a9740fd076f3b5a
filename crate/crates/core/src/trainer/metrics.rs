//! Time-domain validation metrics.

use crate::error::{Error, Result};
use crate::spectral::rfft;

/// dB value reported for a perfect match.
pub const ESR_DB_FLOOR: f64 = -120.0;

/// FFT sizes averaged by [`mrsl`].
pub const MRSL_RESOLUTIONS: [usize; 3] = [512, 1024, 2048];

const LOG_EPS: f64 = 1e-8;

/// Error-to-signal ratio `Σ(y - ŷ)² / Σ y²`.
pub fn esr(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!("ESR on lengths {} and {}", target.len(), pred.len())));
    }
    let den: f64 = target.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::DegenerateTarget("silent target".into()));
    }
    let num: f64 = target.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / den)
}

pub fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        ESR_DB_FLOOR
    } else {
        (10.0 * ratio.log10()).max(ESR_DB_FLOOR)
    }
}

pub fn esr_db(target: &[f64], pred: &[f64]) -> Result<f64> {
    esr(target, pred).map(to_db)
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

fn log_magnitudes(x: &[f64], n: usize) -> Vec<f64> {
    let hop = n / 4;
    let win = hann(n);
    let mut out = Vec::new();
    let mut start = 0;
    let mut frame = vec![0.0; n];
    loop {
        for (i, f) in frame.iter_mut().enumerate() {
            *f = x.get(start + i).copied().unwrap_or(0.0) * win[i];
        }
        let s = rfft(&frame).expect("even FFT size");
        out.extend(s.bins.iter().map(|b| (b.norm() + LOG_EPS).ln()));
        start += hop;
        if start >= x.len() {
            break;
        }
    }
    out
}

/// Multi-resolution spectral loss: mean absolute difference of
/// Hann-windowed log-magnitude spectrograms (hop n/4), averaged over
/// [`MRSL_RESOLUTIONS`]. Phase-blind.
pub fn mrsl(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!("MRSL on lengths {} and {}", target.len(), pred.len())));
    }
    let mut total = 0.0;
    for &n in &MRSL_RESOLUTIONS {
        let a = log_magnitudes(target, n);
        let b = log_magnitudes(pred, n);
        total += a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum::<f64>() / a.len() as f64;
    }
    Ok(total / MRSL_RESOLUTIONS.len() as f64)
}
