use crate::error::{Error, Result};
use crate::spectral::HalfSpectrum;

/// Normalised spectral error between predicted and target frames, with an
/// optional pre-emphasis response `h_L`:
/// `Σ_m ||h_L ⊙ (Y_m - Ŷ_m)||² / Σ_m ||h_L ⊙ Y_m||²`, with norms taken over
/// the full spectrum so that the unweighted loss equals the time-domain ESR.
pub fn spectral_loss(pred: &[HalfSpectrum], target: &[HalfSpectrum], preemph: Option<&HalfSpectrum>) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::FrameCountMismatch { expected: target.len(), got: pred.len() });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, y) in pred.iter().zip(target) {
        if p.len() != y.len() {
            return Err(Error::ShapeMismatch(format!("frame has {} bins, target {}", p.len(), y.len())));
        }
        if let Some(h) = preemph {
            if h.len() != y.len() {
                return Err(Error::ShapeMismatch(format!("pre-emphasis has {} bins, frames {}", h.len(), y.len())));
            }
        }
        for k in 0..y.len() {
            let w = HalfSpectrum::bin_multiplicity(k, y.n) * preemph.map_or(1.0, |h| h.bins[k].norm_sqr());
            num += w * (y.bins[k] - p.bins[k]).norm_sqr();
            den += w * y.bins[k].norm_sqr();
        }
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateTarget("weighted target energy is zero".into()));
    }
    Ok(num / den)
}
