//! Wengert-list tape for reverse-mode differentiation of real scalars.
//!
//! Every node stores its value and the local partial derivative with
//! respect to each parent, computed during the forward pass. A backward
//! sweep then accumulates adjoints in reverse recording order. Complex
//! arithmetic is carried as separate real and imaginary nodes.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A complex value on the tape as a pair of real nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    AddConst,
    MulAdd,
    Sum,
    LinComb,
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Tanh,
    Sigmoid,
    Softplus,
    Clamp,
    Powi,
    CMul,
    CDiv,
    Phasor,
    AllPassPow,
    ResidualEnergy,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Const => "const",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Scale => "scale",
            Op::AddConst => "add_const",
            Op::MulAdd => "mul_add",
            Op::Sum => "sum",
            Op::LinComb => "lincomb",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tan => "tan",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Softplus => "softplus",
            Op::Clamp => "clamp",
            Op::Powi => "powi",
            Op::CMul => "complex_mul",
            Op::CDiv => "complex_div",
            Op::Phasor => "delay_phasor",
            Op::AllPassPow => "allpass_pow",
            Op::ResidualEnergy => "residual_energy",
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    ops: Vec<Op>,
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    adjoints: Vec<f64>,
    first_non_finite: Option<(usize, Op)>,
}

impl Tape {
    pub fn new() -> Self {
        let mut t = Self::default();
        t.offsets.push(0);
        t
    }

    /// Drops all nodes, keeping allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.ops.clear();
        self.offsets.clear();
        self.offsets.push(0);
        self.parents.clear();
        self.partials.clear();
        self.first_non_finite = None;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn cvalue(&self, v: CVar) -> Complex64 {
        Complex64::new(self.value(v.re), self.value(v.im))
    }

    /// First node whose value was NaN or infinite, with the op that made it.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.first_non_finite.map(|(i, op)| (i, op.name()))
    }

    fn push(&mut self, op: Op, value: f64, edges: &[(Var, f64)]) -> Var {
        let idx = self.values.len();
        if !value.is_finite() && self.first_non_finite.is_none() {
            self.first_non_finite = Some((idx, op));
        }
        self.values.push(value);
        self.ops.push(op);
        for &(p, d) in edges {
            self.parents.push(p.0);
            self.partials.push(d);
        }
        self.offsets.push(self.parents.len() as u32);
        Var(idx as u32)
    }

    pub fn input(&mut self, value: f64) -> Var {
        self.push(Op::Input, value, &[])
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Const, value, &[])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add, v, &[(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub, v, &[(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(Op::Mul, x * y, &[(a, y), (b, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let q = x / y;
        self.push(Op::Div, q, &[(a, 1.0 / y), (b, -q / y)])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(Op::Neg, v, &[(a, -1.0)])
    }

    /// `c * a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.value(a);
        self.push(Op::Scale, v, &[(a, c)])
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(Op::AddConst, v, &[(a, 1.0)])
    }

    /// `a * b + c`
    pub fn mul_add(&mut self, a: Var, b: Var, c: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let v = x * y + self.value(c);
        self.push(Op::MulAdd, v, &[(a, y), (b, x), (c, 1.0)])
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let v = terms.iter().map(|&t| self.value(t)).sum();
        let edges: Vec<(Var, f64)> = terms.iter().map(|&t| (t, 1.0)).collect();
        self.push(Op::Sum, v, &edges)
    }

    /// `offset + Σ c_i x_i` with constant coefficients.
    pub fn lincomb(&mut self, terms: &[(Var, f64)], offset: f64) -> Var {
        let v = offset + terms.iter().map(|&(t, c)| c * self.value(t)).sum::<f64>();
        self.push(Op::LinComb, v, terms)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.push(Op::Exp, v, &[(a, v)])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(Op::Log, x.ln(), &[(a, 1.0 / x)])
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(Op::Sin, x.sin(), &[(a, x.cos())])
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(Op::Cos, x.cos(), &[(a, -x.sin())])
    }

    pub fn tan(&mut self, a: Var) -> Var {
        let t = self.value(a).tan();
        self.push(Op::Tan, t, &[(a, 1.0 + t * t)])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.push(Op::Tanh, t, &[(a, 1.0 - t * t)])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = crate::diffmodel::sigmoid(self.value(a));
        self.push(Op::Sigmoid, s, &[(a, s * (1.0 - s))])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(Op::Softplus, crate::diffmodel::softplus(x), &[(a, crate::diffmodel::sigmoid(x))])
    }

    /// `a` limited to `[lo, hi]`; zero derivative where the limit is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let x = self.value(a);
        let d = if x > lo && x < hi { 1.0 } else { 0.0 };
        self.push(Op::Clamp, x.clamp(lo, hi), &[(a, d)])
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        let x = self.value(a);
        let d = if n == 0 { 0.0 } else { n as f64 * x.powi(n - 1) };
        self.push(Op::Powi, x.powi(n), &[(a, d)])
    }

    pub fn cconst(&mut self, c: Complex64) -> CVar {
        CVar { re: self.constant(c.re), im: self.constant(c.im) }
    }

    pub fn cadd(&mut self, a: CVar, b: CVar) -> CVar {
        CVar { re: self.add(a.re, b.re), im: self.add(a.im, b.im) }
    }

    pub fn cmul(&mut self, a: CVar, b: CVar) -> CVar {
        let (x, y) = (self.cvalue(a), self.cvalue(b));
        let p = x * y;
        let re = self.push(Op::CMul, p.re, &[(a.re, y.re), (b.re, x.re), (a.im, -y.im), (b.im, -x.im)]);
        let im = self.push(Op::CMul, p.im, &[(a.re, y.im), (b.im, x.re), (a.im, y.re), (b.re, x.im)]);
        CVar { re, im }
    }

    /// `a / b`
    pub fn cdiv(&mut self, a: CVar, b: CVar) -> CVar {
        let (x, y) = (self.cvalue(a), self.cvalue(b));
        let q = x / y;
        // dq/da = 1/b, dq/db = -q/b, each a complex-analytic derivative
        let inv = 1.0 / y;
        let dqb = -q * inv;
        let re = self.push(Op::CDiv, q.re, &[(a.re, inv.re), (a.im, -inv.im), (b.re, dqb.re), (b.im, -dqb.im)]);
        let im = self.push(Op::CDiv, q.im, &[(a.re, inv.im), (a.im, inv.re), (b.re, dqb.im), (b.im, dqb.re)]);
        CVar { re, im }
    }

    /// `exp(-j ω d)` as a function of the delay `d`.
    pub fn delay_phasor(&mut self, d: Var, omega: f64) -> CVar {
        let phi = omega * self.value(d);
        let (s, c) = phi.sin_cos();
        let re = self.push(Op::Phasor, c, &[(d, -omega * s)]);
        let im = self.push(Op::Phasor, -s, &[(d, -omega * c)]);
        CVar { re, im }
    }

    /// `((p - z^-1) / (1 - p z^-1))^K` as a function of the real pole `p`.
    pub fn allpass_pow(&mut self, p: Var, zinv: Complex64, k: u32) -> CVar {
        let pv = self.value(p);
        let den = 1.0 - pv * zinv;
        let a = (pv - zinv) / den;
        let da = (1.0 - zinv * zinv) / (den * den);
        let v = a.powu(k);
        let dv = if k == 0 { Complex64::new(0.0, 0.0) } else { k as f64 * a.powu(k - 1) * da };
        let re = self.push(Op::AllPassPow, v.re, &[(p, dv.re)]);
        let im = self.push(Op::AllPassPow, v.im, &[(p, dv.im)]);
        CVar { re, im }
    }

    /// `w |y - x h|^2` for constants `w, x, y`.
    pub fn residual_energy(&mut self, h: CVar, x: Complex64, y: Complex64, w: f64) -> Var {
        let e = y - x * self.cvalue(h);
        let ce = e.conj();
        let d_re = -2.0 * w * (ce * x).re;
        let d_im = -2.0 * w * (ce * x * Complex64::new(0.0, 1.0)).re;
        self.push(Op::ResidualEnergy, w * e.norm_sqr(), &[(h.re, d_re), (h.im, d_im)])
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    pub fn backward(&mut self, output: Var) -> &[f64] {
        let n = self.values.len();
        self.adjoints.clear();
        self.adjoints.resize(n, 0.0);
        self.adjoints[output.index()] = 1.0;
        for i in (0..=output.index()).rev() {
            let a = self.adjoints[i];
            if a == 0.0 {
                continue;
            }
            let (s, e) = (self.offsets[i] as usize, self.offsets[i + 1] as usize);
            for j in s..e {
                self.adjoints[self.parents[j] as usize] += self.partials[j] * a;
            }
        }
        &self.adjoints
    }

    /// Adjoints of `inputs` after a backward sweep from `output`.
    pub fn gradient(&mut self, output: Var, inputs: &[Var]) -> Vec<f64> {
        let adj = self.backward(output);
        inputs.iter().map(|v| adj[v.index()]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Central difference of a scalar function.
    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn unary(build: impl Fn(&mut Tape, Var) -> Var, x: f64) -> (f64, f64) {
        let mut t = Tape::new();
        let v = t.input(x);
        let y = build(&mut t, v);
        let g = t.gradient(y, &[v])[0];
        (t.value(y), g)
    }

    #[test]
    fn elementary_unary_ops_match_finite_differences() {
        type F = fn(&mut Tape, Var) -> Var;
        let cases: Vec<(F, fn(f64) -> f64, f64)> = vec![
            (|t, v| t.exp(v), f64::exp, 0.3),
            (|t, v| t.log(v), f64::ln, 1.7),
            (|t, v| t.sin(v), f64::sin, 0.9),
            (|t, v| t.cos(v), f64::cos, -0.4),
            (|t, v| t.tan(v), f64::tan, 0.6),
            (|t, v| t.tanh(v), f64::tanh, -1.2),
            (|t, v| t.sigmoid(v), crate::diffmodel::sigmoid, 0.8),
            (|t, v| t.softplus(v), crate::diffmodel::softplus, -0.7),
            (|t, v| t.clamp(v, -1.0, 1.0), |x: f64| x.clamp(-1.0, 1.0), 0.4),
            (|t, v| t.powi(v, 3), |x| x.powi(3), 1.3),
            (|t, v| t.neg(v), |x| -x, 2.0),
            (|t, v| t.scale(v, 2.5), |x| 2.5 * x, 2.0),
            (|t, v| t.add_const(v, 2.5), |x| x + 2.5, 2.0),
        ];
        for (build, f, x) in cases {
            let (val, g) = unary(build, x);
            assert!((val - f(x)).abs() < 1e-15);
            assert!((g - fd(f, x)).abs() < 1e-8, "{g} vs {}", fd(f, x));
        }
    }

    #[test]
    fn binary_ops_and_fan_out() {
        let mut t = Tape::new();
        let a = t.input(1.5);
        let b = t.input(-0.5);
        let p = t.mul(a, b);
        let q = t.div(a, b);
        let s = t.sub(p, q);
        let r = t.mul_add(s, a, b);
        let g = t.gradient(r, &[a, b]);
        // r = (ab - a/b) a + b
        let f = |a: f64, b: f64| (a * b - a / b) * a + b;
        let ga = (f(1.5 + 1e-6, -0.5) - f(1.5 - 1e-6, -0.5)) / 2e-6;
        let gb = (f(1.5, -0.5 + 1e-6) - f(1.5, -0.5 - 1e-6)) / 2e-6;
        assert!((g[0] - ga).abs() < 1e-6 && (g[1] - gb).abs() < 1e-6);
    }

    #[test]
    fn untouched_inputs_get_zero() {
        let mut t = Tape::new();
        let a = t.input(1.0);
        let b = t.input(2.0);
        let y = t.sin(a);
        assert_eq!(t.gradient(y, &[b])[0], 0.0);
    }

    #[test]
    fn non_finite_is_located() {
        let mut t = Tape::new();
        let a = t.input(-1.0);
        let _ok = t.exp(a);
        let _bad = t.log(a);
        assert_eq!(t.first_non_finite(), Some((2, "log")));
        t.clear();
        assert!(t.first_non_finite().is_none() && t.is_empty());
    }

    #[test]
    fn sum_and_lincomb() {
        let mut t = Tape::new();
        let xs: Vec<Var> = (0..4).map(|i| t.input(i as f64)).collect();
        let s = t.sum(&xs);
        let l = t.lincomb(&[(xs[1], 2.0), (xs[3], -1.0), (s, 0.5)], 10.0);
        assert_eq!(t.value(l), 10.0 + 2.0 - 3.0 + 3.0);
        assert_eq!(t.gradient(l, &xs), vec![0.5, 2.5, 0.5, -0.5]);
    }

    fn complex_fd(f: &dyn Fn(f64) -> Complex64, x: f64) -> Complex64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn fused_complex_nodes_match_finite_differences() {
        let zinv = Complex64::from_polar(1.0, -0.7);
        for k in [1u32, 2, 6] {
            let f = |p: f64| ((p - zinv) / (1.0 - p * zinv)).powu(k);
            let mut t = Tape::new();
            let p = t.input(0.4);
            let a = t.allpass_pow(p, zinv, k);
            assert!((t.cvalue(a) - f(0.4)).norm() < 1e-14);
            let d = complex_fd(&f, 0.4);
            let gr = t.gradient(a.re, &[p])[0];
            let gi = t.gradient(a.im, &[p])[0];
            assert!((gr - d.re).abs() < 1e-7 && (gi - d.im).abs() < 1e-7);
        }
        let f = |d: f64| Complex64::from_polar(1.0, -0.3 * d);
        let mut t = Tape::new();
        let d = t.input(12.5);
        let ph = t.delay_phasor(d, 0.3);
        let fdv = complex_fd(&f, 12.5);
        assert!((t.gradient(ph.re, &[d])[0] - fdv.re).abs() < 1e-7);
        assert!((t.gradient(ph.im, &[d])[0] - fdv.im).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn complex_mul_div_partials(ar in -2.0f64..2.0, ai in -2.0f64..2.0, br in 0.5f64..2.0, bi in -2.0f64..2.0, which in 0usize..4) {
            let build = |vals: [f64; 4]| {
                let mut t = Tape::new();
                let v: Vec<Var> = vals.iter().map(|&x| t.input(x)).collect();
                let a = CVar { re: v[0], im: v[1] };
                let b = CVar { re: v[2], im: v[3] };
                let m = t.cmul(a, b);
                let q = t.cdiv(m, b);
                let q2 = t.cdiv(a, m);
                let out = t.lincomb(&[(q.re, 1.0), (q.im, 0.5), (q2.re, -0.3), (q2.im, 0.7), (m.re, 0.2), (m.im, -0.1)], 0.0);
                (t, v, out)
            };
            let vals = [ar, ai, br, bi];
            let (mut t, v, out) = build(vals);
            let g = t.gradient(out, &v)[which];
            let h = 1e-6;
            let mut up = vals; up[which] += h;
            let mut dn = vals; dn[which] -= h;
            let fu = { let (t, _, o) = build(up); t.value(o) };
            let fdn = { let (t, _, o) = build(dn); t.value(o) };
            let fdv = (fu - fdn) / (2.0 * h);
            prop_assert!((g - fdv).abs() < 1e-5 * (1.0 + fdv.abs()));
        }

        /// For loss |y - x h(θ)|^2, the adjoint is 2 Re[(x h - y)^* x dh/dθ].
        #[test]
        fn residual_energy_chain(theta in -3.0f64..3.0, xr in -1.0f64..1.0, xi in -1.0f64..1.0, yr in -1.0f64..1.0, yi in -1.0f64..1.0) {
            let x = Complex64::new(xr, xi);
            let y = Complex64::new(yr, yi);
            let mut t = Tape::new();
            let th = t.input(theta);
            let h = t.delay_phasor(th, 0.8);
            let l = t.residual_energy(h, x, y, 1.0);
            let g = t.gradient(l, &[th])[0];
            let hv = Complex64::from_polar(1.0, -0.8 * theta);
            let dh = Complex64::new(0.0, -0.8) * hv;
            let symbolic = 2.0 * ((x * hv - y).conj() * x * dh).re;
            prop_assert!((g - symbolic).abs() < 1e-12);
        }
    }
}
