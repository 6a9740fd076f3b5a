//! Training kernels (triangle, linear-group-delay chirp, all-pass chirp) and
//! the repeated-frame training input built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{irfft, FreqGrid, HalfSpectrum};

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Tri,
    LinChirp,
    ApChirp,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tri" => Ok(KernelKind::Tri),
            "lin-chirp" | "lin_chirp" | "linchirp" => Ok(KernelKind::LinChirp),
            "ap-chirp" | "ap_chirp" | "apchirp" => Ok(KernelKind::ApChirp),
            other => Err(Error::Parse { field: "kind".into(), msg: format!("unknown kernel kind `{other}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub samples: Vec<f64>,
    pub kind: KernelKind,
}

impl Kernel {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Zero-padded `n`-point spectrum of the kernel.
    pub fn spectrum(&self, n: usize) -> Result<HalfSpectrum> {
        if self.len() > n {
            return Err(Error::InvalidArgument(format!("kernel length {} exceeds DFT length {n}", self.len())));
        }
        let mut frame = vec![0.0; n];
        frame[..self.len()].copy_from_slice(&self.samples);
        crate::spectral::rfft(&frame)
    }
}

/// Number of all-pass sections used for the AP chirp.
pub const AP_CHIRP_SECTIONS: u32 = 100;

/// Default AP-chirp pole: places the low-frequency group delay of the
/// cascade at 0.8 N' so the impulse response decays inside the kernel.
pub fn ap_chirp_default_pole(n_prime: usize, sections: u32) -> f64 {
    let r = (0.8 * n_prime as f64 / sections as f64).max(1.0);
    (r - 1.0) / (r + 1.0)
}

pub fn gen_triangular(n_prime: usize) -> Result<Kernel> {
    if n_prime == 0 {
        return Err(Error::InvalidArgument("triangle length must be at least 1".into()));
    }
    let span = (n_prime - 1).max(1) as f64;
    let samples = (0..n_prime)
        .map(|n| 1.0 - (2.0 * n as f64 - (n_prime - 1) as f64).abs() / span)
        .collect();
    Ok(Kernel { samples, kind: KernelKind::Tri })
}

/// Unit-modulus half spectrum whose group delay rises linearly from 0 at DC
/// to `n_prime - 1` samples at Nyquist.
pub fn lin_chirp_spectrum(n_prime: usize, n: usize) -> Result<HalfSpectrum> {
    if n_prime == 0 || n_prime > n {
        return Err(Error::InvalidArgument(format!("chirp length {n_prime} must be in 1..={n}")));
    }
    let grid = FreqGrid::new(n)?;
    let half = n / 2;
    let mut phase = 0.0;
    let mut bins = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let tau = (n_prime - 1) as f64 * k as f64 / half as f64;
        phase -= 2.0 * PI * tau / n as f64;
        bins.push(Complex64::from_polar(1.0, phase));
    }
    bins[half] = Complex64::new(bins[half].re.signum(), 0.0);
    debug_assert_eq!(bins.len(), grid.len());
    HalfSpectrum::new(bins, n)
}

pub fn gen_lin_chirp(n_prime: usize, n: usize) -> Result<Kernel> {
    let spec = lin_chirp_spectrum(n_prime, n)?;
    let mut samples = irfft(&spec);
    samples.truncate(n_prime);
    Ok(Kernel { samples, kind: KernelKind::LinChirp })
}

/// Impulse response of `sections` first-order all-pass filters
/// `(p - z^-1)/(1 - p z^-1)` in series, truncated to `n_prime` samples.
pub fn gen_ap_chirp(sections: u32, pole: f64, n_prime: usize) -> Result<Kernel> {
    if !(pole.abs() < 1.0) {
        return Err(Error::Instability(format!("all-pass pole {pole} outside the unit circle")));
    }
    if n_prime == 0 || sections == 0 {
        return Err(Error::InvalidArgument("AP chirp needs n_prime >= 1 and at least one section".into()));
    }
    let mut h = vec![0.0; n_prime];
    h[0] = 1.0;
    for _ in 0..sections {
        // transposed direct form: y = p x + s; s = p y - x
        let mut s = 0.0;
        for v in h.iter_mut() {
            let x = *v;
            let y = pole * x + s;
            s = pole * y - x;
            *v = y;
        }
    }
    Ok(Kernel { samples: h, kind: KernelKind::ApChirp })
}

/// Kernel of the requested kind with the library defaults for the chirps.
pub fn gen_kernel(kind: KernelKind, n_prime: usize, n: usize) -> Result<Kernel> {
    if n_prime > n {
        return Err(Error::InvalidArgument(format!("kernel length {n_prime} exceeds frame length {n}")));
    }
    match kind {
        KernelKind::Tri => gen_triangular(n_prime),
        KernelKind::LinChirp => gen_lin_chirp(n_prime, n),
        KernelKind::ApChirp => gen_ap_chirp(AP_CHIRP_SECTIONS, ap_chirp_default_pole(n_prime, AP_CHIRP_SECTIONS), n_prime),
    }
}

/// `frame_count` identical frames of length `frame_len`, each holding the
/// kernel followed by zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FramedInput {
    pub frames: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub kernel_len: usize,
}

impl FramedInput {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.frames.iter().flatten().copied().collect()
    }
}

pub fn build_training_input(kernel: &Kernel, frame_len: usize, frame_count: usize) -> Result<FramedInput> {
    if kernel.len() > frame_len {
        return Err(Error::InvalidArgument(format!(
            "kernel length {} exceeds frame length {frame_len}",
            kernel.len()
        )));
    }
    let mut frame = vec![0.0; frame_len];
    frame[..kernel.len()].copy_from_slice(&kernel.samples);
    Ok(FramedInput { frames: vec![frame; frame_count], frame_len, kernel_len: kernel.len() })
}

/// Splits `x` into non-overlapping rows of `frame_len`; a partial last
/// frame is zero padded.
pub fn frame_signal(x: &[f64], frame_len: usize) -> Result<Vec<Vec<f64>>> {
    if frame_len == 0 {
        return Err(Error::InvalidArgument("frame length must be positive".into()));
    }
    Ok(x.chunks(frame_len)
        .map(|c| {
            let mut row = c.to_vec();
            row.resize(frame_len, 0.0);
            row
        })
        .collect())
}

/// Centre of frame `m` in seconds.
pub fn frame_centre_time(m: usize, frame_len: usize, sample_rate: f64) -> f64 {
    (m as f64 + 0.5) * frame_len as f64 / sample_rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{naive, rfft};
    use proptest::prelude::*;

    #[test]
    fn triangle_small_cases() {
        assert_eq!(gen_triangular(1).unwrap().samples, vec![1.0]);
        assert_eq!(gen_triangular(3).unwrap().samples, vec![0.0, 1.0, 0.0]);
        assert_eq!(gen_triangular(2).unwrap().samples, vec![0.0, 0.0]);
        assert!(matches!(gen_triangular(0), Err(Error::InvalidArgument(_))));
        let t = gen_triangular(5).unwrap().samples;
        assert_eq!(t, vec![0.0, 0.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn triangle_spectrum_is_lowpass() {
        let k = gen_triangular(128).unwrap();
        let mut x = vec![0.0; 256];
        x[..128].copy_from_slice(&k.samples);
        let mag: Vec<f64> = naive::dft(&x).iter().take(129).map(|c| c.norm()).collect();
        // main lobe ends near bin 2N/N' = 4
        assert!(mag[0] > mag[1] && mag[1] > mag[2] && mag[2] > mag[3]);
        let first_dip = (1..10).find(|&k| mag[k] < mag[k - 1] && mag[k] < mag[k + 1]).unwrap();
        assert_eq!(first_dip, 4);
        assert!(mag[4] < 1e-2 * mag[0]);
        let lo: f64 = mag[..8].iter().map(|m| m * m).sum();
        let hi: f64 = mag[8..].iter().map(|m| m * m).sum();
        assert!(lo > 100.0 * hi);
    }

    #[test]
    fn lin_chirp_unit_impulse_for_length_one() {
        let k = gen_lin_chirp(1, 64).unwrap();
        assert_eq!(k.len(), 1);
        assert!((k.samples[0] - 1.0).abs() < 1e-12);
        let s = k.spectrum(64).unwrap();
        assert!(s.bins.iter().all(|b| (b.norm() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn lin_chirp_group_delay() {
        let spec = lin_chirp_spectrum(128, 256).unwrap();
        let dphi = (spec.bins[64] / spec.bins[63]).arg();
        let gd = -dphi / (2.0 * PI / 256.0);
        assert!((gd - 63.5).abs() < 1.0, "group delay {gd}");
    }

    #[test]
    fn lin_chirp_errors() {
        assert!(matches!(gen_lin_chirp(300, 256), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ap_chirp_matches_series_expansion() {
        let k = gen_ap_chirp(1, 0.0, 2).unwrap();
        assert_eq!(k.samples, vec![0.0, -1.0]);
        // (0.5 - z^-1)/(1 - 0.5 z^-1) by long division
        let k = gen_ap_chirp(1, 0.5, 3).unwrap();
        let expect = [0.5, -0.75, -0.375];
        for (a, b) in k.samples.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(gen_ap_chirp(2, 1.0, 8), Err(Error::Instability(_))));
    }

    #[test]
    fn ap_chirp_is_flat_when_it_has_decayed() {
        let n = 2048;
        let full = gen_ap_chirp(50, 0.9, 8 * n).unwrap();
        let e_total: f64 = full.samples.iter().map(|v| v * v).sum();
        let e_head: f64 = full.samples[..n].iter().map(|v| v * v).sum();
        assert!(e_head / e_total >= 0.999);
        let k = gen_ap_chirp(50, 0.9, n).unwrap();
        let s = rfft(&k.samples).unwrap();
        for b in &s.bins {
            assert!((b.norm() - 1.0).abs() < 1e-3 * 10.0, "{}", b.norm());
        }
    }

    #[test]
    fn default_ap_chirp_fits_half_frame() {
        let n = 1024;
        let p = ap_chirp_default_pole(n / 2, AP_CHIRP_SECTIONS);
        let long = gen_ap_chirp(AP_CHIRP_SECTIONS, p, 16 * n).unwrap();
        let total: f64 = long.samples.iter().map(|v| v * v).sum();
        let head: f64 = long.samples[..n / 2].iter().map(|v| v * v).sum();
        assert!(head / total > 0.999);
    }

    #[test]
    fn training_input_shapes() {
        let k = Kernel { samples: vec![1.0], kind: KernelKind::Tri };
        let f = build_training_input(&k, 4, 2).unwrap();
        assert_eq!(f.frames, vec![vec![1.0, 0.0, 0.0, 0.0]; 2]);

        let k = gen_triangular(512).unwrap();
        let f = build_training_input(&k, 1024, 256).unwrap();
        assert_eq!(f.flatten().len(), 1 << 18);

        let k = gen_triangular(3).unwrap();
        assert!(matches!(build_training_input(&k, 2, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn framing() {
        assert_eq!(frame_signal(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(
            frame_signal(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap(),
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 0.0]]
        );
        assert_eq!(frame_signal(&vec![0.0; 1 << 18], 4096).unwrap().len(), 64);
    }

    proptest! {
        #[test]
        fn tri_dc_bin_is_sample_sum(np in 1usize..200, extra in 0usize..100) {
            let n = 2 * ((np + extra) / 2 + 1);
            let k = gen_triangular(np).unwrap();
            let s = k.spectrum(n).unwrap();
            let sum: f64 = k.samples.iter().sum();
            prop_assert!((s.bins[0].norm() - sum.abs()).abs() < 1e-9);
            for i in 0..np { prop_assert_eq!(k.samples[i], k.samples[np - 1 - i]); }
        }

        #[test]
        fn lin_chirp_construction_unit_modulus(np in 1usize..256) {
            let s = lin_chirp_spectrum(np, 256).unwrap();
            for b in &s.bins { prop_assert!((b.norm() - 1.0).abs() < 1e-9); }
        }

        #[test]
        fn reframing_round_trips(np in 1usize..16, n in 16usize..40, m in 1usize..6) {
            let k = gen_triangular(np).unwrap();
            let f = build_training_input(&k, n, m).unwrap();
            prop_assert_eq!(frame_signal(&f.flatten(), n).unwrap(), f.frames.clone());
            for fr in &f.frames {
                prop_assert!(fr[np..].iter().all(|&v| v == 0.0));
            }
        }
    }
}
