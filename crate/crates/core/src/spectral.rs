//! Real DFT utilities, the half-spectrum frequency grid and closed-form
//! frequency responses shared by the analysis tools and the model.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::diffmodel::SvfParams;
use crate::error::{Error, Result};

/// Nonnegative-frequency content of one length-`n` frame (`n/2 + 1` bins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpectrum {
    pub bins: Vec<Complex64>,
    pub n: usize,
}

impl HalfSpectrum {
    pub fn new(bins: Vec<Complex64>, n: usize) -> Result<Self> {
        if n % 2 != 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("DFT length {n} must be even and nonzero")));
        }
        if bins.len() != n / 2 + 1 {
            return Err(Error::ShapeMismatch(format!(
                "half spectrum of N={n} needs {} bins, got {}",
                n / 2 + 1,
                bins.len()
            )));
        }
        Ok(Self { bins, n })
    }

    pub fn ones(n: usize) -> Self {
        Self { bins: vec![Complex64::new(1.0, 0.0); n / 2 + 1], n }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Power spectrum `|X(k)|^2`.
    pub fn power(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Multiplicity of each bin in the full spectrum: 1 for DC and
    /// Nyquist, 2 for the conjugate-paired bins in between. Weighting by it
    /// makes half-spectrum energies agree with Parseval.
    pub fn bin_multiplicity(k: usize, n: usize) -> f64 {
        if k == 0 || 2 * k == n {
            1.0
        } else {
            2.0
        }
    }

    /// Elementwise product.
    pub fn mul(&self, other: &HalfSpectrum) -> HalfSpectrum {
        debug_assert_eq!(self.n, other.n);
        HalfSpectrum {
            bins: self.bins.iter().zip(&other.bins).map(|(a, b)| a * b).collect(),
            n: self.n,
        }
    }
}

/// `z[k] = exp(2πj k / N)` for `k = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    pub z: Vec<Complex64>,
    pub n: usize,
}

impl FreqGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n % 2 != 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("DFT length {n} must be even and nonzero")));
        }
        let z = (0..=n / 2)
            .map(|k| {
                if k == 0 {
                    Complex64::new(1.0, 0.0)
                } else if 2 * k == n {
                    Complex64::new(-1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)
                }
            })
            .collect();
        Ok(Self { z, n })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Angular frequency of bin `k` in radians per sample.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n as f64
    }

    /// `z[k]^{-1}`
    pub fn zinv(&self, k: usize) -> Complex64 {
        self.z[k].conj()
    }
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// Forward DFT of a real frame, nonnegative bins only.
pub fn rfft(frame: &[f64]) -> Result<HalfSpectrum> {
    let n = frame.len();
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("rfft needs an even, nonzero length (got {n})")));
    }
    let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan(n, false).process(&mut buf);
    buf.truncate(n / 2 + 1);
    Ok(HalfSpectrum { bins: buf, n })
}

/// Inverse of [`rfft`]. The imaginary parts of the DC and Nyquist bins are
/// ignored (forced to zero).
pub fn irfft(spec: &HalfSpectrum) -> Vec<f64> {
    let n = spec.n;
    let half = n / 2;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[0] = Complex64::new(spec.bins[0].re, 0.0);
    buf[half] = Complex64::new(spec.bins[half].re, 0.0);
    for k in 1..half {
        buf[k] = spec.bins[k];
        buf[n - k] = spec.bins[k].conj();
    }
    plan(n, true).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.into_iter().map(|c| c.re * scale).collect()
}

/// Linear-phase delay of `d` samples: `exp(-2πj k d / N)`.
pub fn delay_response(d: f64, grid: &FreqGrid) -> HalfSpectrum {
    let bins = (0..grid.len())
        .map(|k| Complex64::from_polar(1.0, -grid.omega(k) * d))
        .collect();
    HalfSpectrum { bins, n: grid.n }
}

/// One first-order all-pass section `(p - z^-1) / (1 - p z^-1)` at bin `k`.
pub fn apf_section(p: f64, zinv: Complex64) -> Complex64 {
    (p - zinv) / (1.0 - p * zinv)
}

/// `K` cascaded first-order all-pass sections sharing pole `p`.
pub fn apf_cascade_response(p: f64, k_sections: u32, grid: &FreqGrid) -> Result<HalfSpectrum> {
    if !(p.abs() < 1.0) {
        return Err(Error::Instability(format!("all-pass pole {p} outside the unit circle")));
    }
    let bins = (0..grid.len())
        .map(|k| apf_section(p, grid.zinv(k)).powu(k_sections))
        .collect();
    Ok(HalfSpectrum { bins, n: grid.n })
}

/// Biquad polynomial coefficients `(β, α)` in powers of `z^-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadCoeffs {
    pub beta: [f64; 3],
    pub alpha: [f64; 3],
}

impl BiquadCoeffs {
    pub fn eval(&self, zinv: Complex64) -> (Complex64, Complex64) {
        let z2 = zinv * zinv;
        let num = self.beta[0] + self.beta[1] * zinv + self.beta[2] * z2;
        let den = self.alpha[0] + self.alpha[1] * zinv + self.alpha[2] * z2;
        (num, den)
    }
}

pub fn svf_response(params: &SvfParams, grid: &FreqGrid) -> Result<HalfSpectrum> {
    biquad_response(&params.coeffs(), grid)
}

pub fn biquad_response(c: &BiquadCoeffs, grid: &FreqGrid) -> Result<HalfSpectrum> {
    let mut bins = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let (num, den) = c.eval(grid.zinv(k));
        if den.norm() < 1e-12 {
            return Err(Error::SingularFilter { bin: k, magnitude: den.norm() });
        }
        bins.push(num / den);
    }
    Ok(HalfSpectrum { bins, n: grid.n })
}
