//! Sample-by-sample building blocks. Each block exposes the affine map from
//! its current input to its current output (`gain`, `offset`) so feedback
//! loops without a unit delay can be solved exactly before committing.

use crate::spectral::BiquadCoeffs;

use super::lfo::lagrange4;

/// Transposed direct-form II biquad.
#[derive(Debug, Clone, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(c: &BiquadCoeffs) -> Self {
        let a0 = c.alpha[0];
        Self {
            b: [c.beta[0] / a0, c.beta[1] / a0, c.beta[2] / a0],
            a: [c.alpha[1] / a0, c.alpha[2] / a0],
            s1: 0.0,
            s2: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self { b: [1.0, 0.0, 0.0], a: [0.0, 0.0], s1: 0.0, s2: 0.0 }
    }

    pub fn gain(&self) -> f64 {
        self.b[0]
    }

    pub fn offset(&self) -> f64 {
        self.s1
    }

    pub fn tick(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }

    pub fn state(&self) -> [f64; 2] {
        [self.s1, self.s2]
    }
}

/// Circular buffer read with 4-point Lagrange interpolation. The tap at
/// time `n` may include `u[n]` itself when the delay is below one sample.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<f64>,
    mask: usize,
    write: usize,
    weights: [f64; 4],
    base: usize,
}

impl DelayLine {
    /// Room for delays up to `max_delay` samples.
    pub fn new(max_delay: usize) -> Self {
        let size = (max_delay + 4).next_power_of_two();
        Self { buf: vec![0.0; size], mask: size - 1, write: 0, weights: [0.0; 4], base: 0 }
    }

    /// Selects the read delay for the current sample; `d` must lie in
    /// `[0, max_delay]`.
    pub fn set_delay(&mut self, d: f64) {
        let i = d.floor();
        let frac = d - i;
        let i = i as usize;
        if i == 0 {
            self.base = 0;
            self.weights = lagrange4(frac);
        } else {
            self.base = i - 1;
            self.weights = lagrange4(frac + 1.0);
        }
    }

    fn past(&self, delay: usize) -> f64 {
        // `write` holds the sample from one step ago
        self.buf[(self.write + 1).wrapping_sub(delay) & self.mask]
    }

    /// Coefficient of the not-yet-written current input in the tap.
    pub fn gain(&self) -> f64 {
        if self.base == 0 {
            self.weights[0]
        } else {
            0.0
        }
    }

    /// Tap value contributed by already stored samples.
    pub fn offset(&self) -> f64 {
        (0..4)
            .filter(|&j| self.base + j > 0)
            .map(|j| self.weights[j] * self.past(self.base + j))
            .sum()
    }

    /// Stores `u` as the current sample and advances one step.
    pub fn push(&mut self, u: f64) {
        self.write = (self.write + 1) & self.mask;
        self.buf[self.write] = u;
    }

    /// Reads at the selected delay with `u` as the current input, stores it
    /// and advances. Returns the tap.
    pub fn tick(&mut self, u: f64) -> f64 {
        let y = self.gain() * u + self.offset();
        self.push(u);
        y
    }
}

/// `K` first-order all-pass sections `(p - z^-1)/(1 - p z^-1)` sharing a
/// time-varying pole.
#[derive(Debug, Clone)]
pub struct ApfCascade {
    states: Vec<f64>,
    p: f64,
}

impl ApfCascade {
    pub fn new(sections: u32) -> Self {
        Self { states: vec![0.0; sections as usize], p: 0.0 }
    }

    pub fn set_pole(&mut self, p: f64) {
        self.p = p;
    }

    pub fn sections(&self) -> usize {
        self.states.len()
    }

    pub fn gain(&self) -> f64 {
        self.p.powi(self.states.len() as i32)
    }

    pub fn offset(&self) -> f64 {
        self.states.iter().fold(0.0, |o, s| self.p * o + s)
    }

    pub fn tick(&mut self, x: f64) -> f64 {
        let p = self.p;
        let mut v = x;
        for s in &mut self.states {
            let y = p * v + *s;
            *s = p * y - v;
            v = y;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmodel::SvfParams;
    use crate::spectral::{apf_cascade_response, biquad_response, rfft, FreqGrid};

    fn impulse(n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x
    }

    #[test]
    fn biquad_matches_polynomial_response() {
        let svf = SvfParams { f_prime: -1.2, r_prime: 0.3, m_l: 0.9, m_b: 1.3, m_h: 0.6 };
        let c = svf.coeffs();
        let n = 4096;
        let mut bq = Biquad::new(&c);
        let h: Vec<f64> = impulse(n).into_iter().map(|x| bq.tick(x)).collect();
        let spec = rfft(&h).unwrap();
        let want = biquad_response(&c, &FreqGrid::new(n).unwrap()).unwrap();
        for (a, b) in spec.bins.iter().zip(&want.bins) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn biquad_gain_offset_predict_output() {
        let c = SvfParams { f_prime: 0.4, r_prime: -0.5, m_l: 1.0, m_b: 0.2, m_h: 0.7 }.coeffs();
        let mut bq = Biquad::new(&c);
        for i in 0..50 {
            let x = (i as f64 * 0.37).sin();
            let pred = bq.gain() * x + bq.offset();
            assert_eq!(pred, bq.tick(x));
        }
    }

    #[test]
    fn integer_delay_is_exact() {
        let mut dl = DelayLine::new(64);
        let x: Vec<f64> = (0..200).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        for d in [0usize, 1, 2, 17, 64] {
            let mut dl2 = DelayLine::new(64);
            for (n, &v) in x.iter().enumerate() {
                dl2.set_delay(d as f64);
                let y = dl2.tick(v);
                let want = if n >= d { x[n - d] } else { 0.0 };
                assert_eq!(y, want, "d={d} n={n}");
            }
        }
        dl.set_delay(0.0);
        assert_eq!(dl.gain(), 1.0);
    }

    #[test]
    fn fractional_delay_interpolates_cubics_exactly() {
        let f = |t: f64| 0.01 * t * t * t - 0.3 * t * t + t;
        for d in [0.25, 0.5, 1.75, 3.4, 10.9] {
            let mut dl = DelayLine::new(32);
            let mut last = 0.0;
            for n in 0..40 {
                dl.set_delay(d);
                last = dl.tick(f(n as f64));
            }
            assert!((last - f(39.0 - d)).abs() < 1e-9, "d={d}");
        }
    }

    #[test]
    fn apf_impulse_response_matches_spectrum() {
        let n = 2048;
        for (p, k) in [(0.3, 1u32), (-0.6, 4), (0.8, 6)] {
            let mut ap = ApfCascade::new(k);
            ap.set_pole(p);
            let h: Vec<f64> = impulse(n).into_iter().map(|x| ap.tick(x)).collect();
            let spec = rfft(&h).unwrap();
            let want = apf_cascade_response(p, k, &FreqGrid::new(n).unwrap()).unwrap();
            for (a, b) in spec.bins.iter().zip(&want.bins) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn apf_gain_offset_predict_output() {
        let mut ap = ApfCascade::new(5);
        for i in 0..100 {
            ap.set_pole(0.9 * (i as f64 * 0.05).cos());
            let x = (i as f64 * 1.3).sin();
            let pred = ap.gain() * x + ap.offset();
            assert!((pred - ap.tick(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pole_section_is_negated_unit_delay() {
        let mut ap = ApfCascade::new(1);
        ap.set_pole(0.0);
        let x = [1.0, 2.0, -3.0, 0.5];
        let y: Vec<f64> = x.iter().map(|&v| ap.tick(v)).collect();
        assert_eq!(y, vec![0.0, -1.0, -2.0, 3.0]);
    }
}
