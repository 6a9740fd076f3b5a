//! Loss surfaces of the delay and all-pass estimation problems, plain
//! gradient descent on the delay loss, and CSV export.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{apf_section, FreqGrid, HalfSpectrum};

/// `Γ(D̂, k) = 1 - cos(2πk(D̂ - D)/N)`
pub fn gamma(dhat: f64, d: f64, k: usize, n: usize) -> f64 {
    1.0 - (2.0 * PI * k as f64 * (dhat - d) / n as f64).cos()
}

/// Γ over a `k × D̂` grid, row-major in `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSurface {
    pub ks: Vec<usize>,
    pub dhats: Vec<f64>,
    pub values: Vec<f64>,
    pub n: usize,
    pub target: f64,
}

impl GammaSurface {
    pub fn at(&self, ki: usize, di: usize) -> f64 {
        self.values[ki * self.dhats.len() + di]
    }

    /// Mean over `k` for every `D̂` (the flat-spectrum loss up to scale).
    pub fn mean_over_k(&self) -> Vec<f64> {
        let cols = self.dhats.len();
        (0..cols)
            .map(|j| (0..self.ks.len()).map(|i| self.values[i * cols + j]).sum::<f64>() / self.ks.len() as f64)
            .collect()
    }
}

pub fn gamma_surface(d: f64, n: usize, ks: &[usize], dhats: &[f64]) -> GammaSurface {
    let values = ks.iter().flat_map(|&k| dhats.iter().map(move |&dh| gamma(dh, d, k, n))).collect();
    GammaSurface { ks: ks.to_vec(), dhats: dhats.to_vec(), values, n, target: d }
}

/// Delay loss `Σ_k |X(k)|² Γ(D̂, k)` over the nonnegative bins and its exact
/// derivative `Σ_k |X(k)|² (2πk/N) sin(2πk(D̂ - D)/N)`.
pub fn delay_loss(dhat: f64, d: f64, x: &HalfSpectrum) -> (f64, f64) {
    let n = x.n as f64;
    let mut loss = 0.0;
    let mut grad = 0.0;
    for (k, b) in x.bins.iter().enumerate() {
        let w = b.norm_sqr();
        let omega = 2.0 * PI * k as f64 / n;
        let phase = omega * (dhat - d);
        loss += w * (1.0 - phase.cos());
        grad += w * omega * phase.sin();
    }
    (loss, grad)
}

/// The gradient as it is usually printed, `Σ_k |X(k)|² k sin(...)`, which
/// omits the `2π/N` chain factor of the exact derivative.
pub fn delay_loss_gradient_without_chain_factor(dhat: f64, d: f64, x: &HalfSpectrum) -> f64 {
    delay_loss(dhat, d, x).1 * x.n as f64 / (2.0 * PI)
}

/// Ratio between the exact derivative and the form without chain factor.
pub fn delay_gradient_constant(n: usize) -> f64 {
    2.0 * PI / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMeta {
    pub n: usize,
    pub n_prime: Option<usize>,
    pub target: f64,
    pub sections: Option<u32>,
    pub parameter: String,
}

/// A 1-D loss surface with the input power spectrum that weighted it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSurface {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub weighting: Vec<f64>,
    pub meta: SurfaceMeta,
}

impl LossSurface {
    fn check(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("loss surface has an empty grid".into()));
        }
        if self.grid.len() != self.values.len() {
            return Err(Error::ShapeMismatch("grid and values differ in length".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("loss surface grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

pub fn delay_loss_surface(d: f64, x: &HalfSpectrum, grid: &[f64], n_prime: Option<usize>) -> LossSurface {
    let values = grid.par_iter().map(|&dh| delay_loss(dh, d, x).0).collect();
    LossSurface {
        grid: grid.to_vec(),
        values,
        weighting: x.power(),
        meta: SurfaceMeta { n: x.n, n_prime, target: d, sections: None, parameter: "dhat".into() },
    }
}

/// `Σ_k |X(k)|² |A_p(k)^K - A_p̂(k)^K|²`
pub fn apf_loss(phat: f64, p: f64, k_sections: u32, x: &HalfSpectrum) -> Result<f64> {
    if !(phat.abs() < 1.0) || !(p.abs() < 1.0) {
        return Err(Error::Instability(format!("all-pass poles must lie inside the unit circle ({p}, {phat})")));
    }
    let grid = FreqGrid::new(x.n)?;
    Ok(x.bins
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let zinv = grid.zinv(k);
            let diff: Complex64 = apf_section(p, zinv).powu(k_sections) - apf_section(phat, zinv).powu(k_sections);
            b.norm_sqr() * diff.norm_sqr()
        })
        .sum())
}

/// All-pass loss over `phat_grid`, reported against `1 - p̂` in increasing
/// order.
pub fn apf_loss_surface(p: f64, k_sections: u32, x: &HalfSpectrum, phat_grid: &[f64], n_prime: Option<usize>) -> Result<LossSurface> {
    if let Some(bad) = phat_grid.iter().find(|v| !(v.abs() < 1.0)) {
        return Err(Error::InvalidArgument(format!("pole {bad} outside the unit circle")));
    }
    let mut phats = phat_grid.to_vec();
    phats.sort_by(|a, b| b.partial_cmp(a).expect("finite poles"));
    phats.dedup();
    let values = phats.par_iter().map(|&ph| apf_loss(ph, p, k_sections, x)).collect::<Result<Vec<_>>>()?;
    Ok(LossSurface {
        grid: phats.iter().map(|ph| 1.0 - ph).collect(),
        values,
        weighting: x.power(),
        meta: SurfaceMeta { n: x.n, n_prime, target: p, sections: Some(k_sections), parameter: "one_minus_phat".into() },
    })
}

/// Interior local minima of a sampled surface.
pub fn local_minima(values: &[f64]) -> usize {
    values.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descent {
    pub trajectory: Vec<f64>,
    pub losses: Vec<f64>,
    pub final_loss: f64,
}

impl Descent {
    pub fn final_estimate(&self) -> f64 {
        *self.trajectory.last().expect("trajectory holds the start point")
    }
}

pub const DESCENT_LR: f64 = 1e-2;
pub const DESCENT_STEPS: usize = 5000;

/// Plain gradient descent on [`delay_loss`] from `d0`.
pub fn descend_delay(d0: f64, d: f64, x: &HalfSpectrum, steps: usize, lr: f64) -> Descent {
    let mut dh = d0;
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (l, g) = delay_loss(dh, d, x);
        trajectory.push(dh);
        losses.push(l);
        dh -= lr * g;
    }
    let final_loss = delay_loss(dh, d, x).0;
    trajectory.push(dh);
    losses.push(final_loss);
    Descent { trajectory, losses, final_loss }
}

/// Largest `w` such that the gradient points towards `D` (strictly) for
/// every probed `D̂` with `0 < |D̂ - D| < w`, probing at `step` spacing on
/// both sides.
pub fn basin_half_width(d: f64, x: &HalfSpectrum, step: f64) -> f64 {
    let limit = x.n as f64;
    let side = |sign: f64| {
        let mut off = step;
        while off < limit {
            let g = delay_loss(d + sign * off, d, x).1;
            if !(g * sign > 0.0) {
                return off - step;
            }
            off += step;
        }
        limit
    };
    side(1.0).min(side(-1.0))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_plot.py"))
}

/// Writes `param,loss` rows and a matplotlib script beside the CSV.
/// Returns the sidecar path.
pub fn export_surface(surface: &LossSurface, path: &Path) -> Result<PathBuf> {
    surface.check()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["param", "loss"]).map_err(csv_err)?;
    for (g, v) in surface.grid.iter().zip(&surface.values) {
        w.write_record([g.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    write_text(path, &into_string(w)?)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let script = format!(
        "import csv\nimport matplotlib.pyplot as plt\n\nrows = list(csv.DictReader(open(\"{name}\")))\n\
         x = [float(r[\"param\"]) for r in rows]\ny = [float(r[\"loss\"]) for r in rows]\n\
         plt.plot(x, y)\nplt.xlabel(\"{}\")\nplt.ylabel(\"loss\")\nplt.savefig(\"{}.png\")\n",
        surface.meta.parameter,
        name.trim_end_matches(".csv")
    );
    let side = sidecar_path(path);
    write_text(&side, &script)?;
    Ok(side)
}

/// Long-format `k,dhat,gamma` rows plus a heat-map script.
pub fn export_gamma_surface(surface: &GammaSurface, path: &Path) -> Result<PathBuf> {
    if surface.ks.is_empty() || surface.dhats.is_empty() {
        return Err(Error::InvalidArgument("gamma surface has an empty grid".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "dhat", "gamma"]).map_err(csv_err)?;
    for (i, k) in surface.ks.iter().enumerate() {
        for (j, dh) in surface.dhats.iter().enumerate() {
            w.write_record([k.to_string(), dh.to_string(), surface.at(i, j).to_string()]).map_err(csv_err)?;
        }
    }
    write_text(path, &into_string(w)?)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let script = format!(
        "import csv\nimport matplotlib.pyplot as plt\n\nrows = list(csv.DictReader(open(\"{name}\")))\n\
         ks = sorted({{int(r[\"k\"]) for r in rows}})\nds = sorted({{float(r[\"dhat\"]) for r in rows}})\n\
         g = {{(int(r[\"k\"]), float(r[\"dhat\"])): float(r[\"gamma\"]) for r in rows}}\n\
         z = [[g[(k, d)] for d in ds] for k in ks]\n\
         plt.imshow(z, aspect=\"auto\", origin=\"lower\", extent=[ds[0], ds[-1], ks[0], ks[-1]])\n\
         plt.xlabel(\"dhat\")\nplt.ylabel(\"k\")\nplt.colorbar()\nplt.savefig(\"{}.png\")\n",
        name.trim_end_matches(".csv")
    );
    let side = sidecar_path(path);
    write_text(&side, &script)?;
    Ok(side)
}

/// Writes a descent trajectory as `step,dhat,loss`.
pub fn export_descent(descent: &Descent, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "dhat", "loss"]).map_err(csv_err)?;
    for (i, (d, l)) in descent.trajectory.iter().zip(&descent.losses).enumerate() {
        w.write_record([i.to_string(), d.to_string(), l.to_string()]).map_err(csv_err)?;
    }
    write_text(path, &into_string(w)?)
}

/// Reads back a file written by [`export_surface`] as `(grid, values)`.
pub fn read_surface(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize, field: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { field: field.into(), msg: format!("row {}", line + 1) })
        };
        grid.push(parse(0, "param")?);
        values.push(parse(1, "loss")?);
    }
    Ok((grid, values))
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Parse { field: "csv".into(), msg: e.to_string() }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// Evenly spaced grid of `count` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
