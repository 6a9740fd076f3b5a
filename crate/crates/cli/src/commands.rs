//! Command implementations. Each successful command ends by writing
//! `manifest.json` into its output directory.

use std::path::{Path, PathBuf};

use modfx::analysis::{
    apf_loss_surface, delay_loss_surface, descend_delay, export_descent, export_gamma_surface, export_surface,
    gamma_surface, linspace, local_minima,
};
use modfx::io::{
    load_params, read_wav, save_params, write_json, write_loss_history, write_seed_table, write_series,
    write_stats_summary, write_wav, Audio, Manifest,
};
use modfx::signals::{frame_signal, gen_kernel, FramedInput, KernelKind};
use modfx::spectral::HalfSpectrum;
use modfx::tdengine::{
    control_sources, make_toy_target, process, validation_signal, ControlMode, RenderOptions, ToyKind,
};
use modfx::trainer::{
    multi_seed, train, trivial_baseline, validate, validate_with, ExperimentData, MultiSeedResult, RunStats, SeedRun,
    TrainConfig, ValidationOptions,
};
use modfx::{Error, Result};
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::{AnalyzeArgs, AnalyzeKind, Command, Common, GenArgs, InferArgs, MakeTargetArgs, TrainArgs, ValidateArgs};

pub const OUT_DIR_ENV: &str = "MODFX_OUT_DIR";

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::MakeTarget(a) => make_target(a),
        Command::Train(a) => train_cmd(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Infer(a) => infer(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("modfx-out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Config file overlaid with `--profile` and then with `flags`.
fn resolve(common: &Common, flags: FileConfig) -> Result<FileConfig> {
    let file = config::load(common.config.as_deref())?;
    let profile = common.profile.as_deref().map(str::parse).transpose()?;
    let mut cfg = config::merge(file, flags);
    if profile.is_some() {
        cfg.profile = profile;
    }
    if cfg.profile.is_none() {
        cfg.profile = Some(cfg.profile());
    }
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn write_toml(path: &Path, cfg: &FileConfig) -> Result<()> {
    let text = toml::to_string_pretty(cfg).map_err(|e| Error::Parse { field: "config".into(), msg: e.to_string() })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn wav_rate(sample_rate: f64) -> Result<u32> {
    if sample_rate.fract() != 0.0 || !(sample_rate > 0.0) || sample_rate > u32::MAX as f64 {
        return Err(Error::Parse { field: "sample_rate".into(), msg: format!("WAV needs an integer rate, got {sample_rate}") });
    }
    Ok(sample_rate as u32)
}

fn read_at(path: &Path, sample_rate: f64) -> Result<Audio> {
    let a = read_wav(path)?;
    if a.sample_rate as f64 != sample_rate {
        return Err(Error::UnsupportedFormat(format!(
            "{}: sample rate {} Hz, expected {sample_rate} Hz",
            path.display(),
            a.sample_rate
        )));
    }
    Ok(a)
}

fn read_pair(input: &Path, target: &Path, sample_rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = read_at(input, sample_rate)?.samples;
    let y = read_at(target, sample_rate)?.samples;
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} has {} samples, {} has {}",
            input.display(),
            x.len(),
            target.display(),
            y.len()
        )));
    }
    Ok((x, y))
}

fn gen(a: GenArgs) -> Result<()> {
    let kind: KernelKind = a.kind.parse()?;
    let flags = FileConfig { n: Some(a.n), n_prime: a.n_prime, length: a.length, input_kind: Some(kind), ..Default::default() };
    let cfg = resolve(&a.common, flags)?;
    let tc = cfg.train_config()?;
    let dir = out_dir(&a.common)?;
    let rate = wav_rate(tc.sample_rate)?;
    let mut manifest = Manifest::new("gen", to_json(&cfg));
    manifest.seeds.push(a.seed);

    let kernel = gen_kernel(kind, tc.n_prime, tc.n)?;
    let input = tc.training_input()?.flatten();
    let arts = [dir.join("kernel.wav"), dir.join("kernel.csv"), dir.join("input.wav"), dir.join("config.toml")];
    write_wav(&arts[0], &kernel.samples, rate)?;
    write_series(&arts[1], "sample", &kernel.samples)?;
    write_wav(&arts[2], &input, rate)?;
    write_toml(&arts[3], &cfg)?;
    manifest.artifacts.extend(arts);

    let toy = a.toy.as_deref().map(str::parse::<ToyKind>).transpose()?;
    let toy = toy.map(|k| cfg.toy_config(Some(k))).transpose()?;
    if let Some(toy) = &toy {
        let target = dir.join("target.wav");
        write_wav(&target, &make_toy_target(toy, &input)?, rate)?;
        let traj = dir.join("target_trajectory.csv");
        write_series(&traj, "trajectory", &toy.frame_trajectory(tc.frames()))?;
        manifest.artifacts.extend([target, traj]);
    }
    if a.validation {
        let v = validation_signal(tc.length, tc.sample_rate, a.seed);
        let path = dir.join("val_input.wav");
        write_wav(&path, &v, rate)?;
        manifest.artifacts.push(path);
        if let Some(toy) = &toy {
            let path = dir.join("val_target.wav");
            write_wav(&path, &make_toy_target(toy, &v)?, rate)?;
            manifest.artifacts.push(path);
        }
    }
    println!("{kind:?} kernel N'={} N={}, {} samples -> {}", tc.n_prime, tc.n, input.len(), dir.display());
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(())
}

fn make_target(a: MakeTargetArgs) -> Result<()> {
    let kind: ToyKind = a.kind.parse()?;
    let x = read_wav(&a.input)?;
    let mut flags = FileConfig { n: a.n, sample_rate: Some(x.sample_rate as f64), ..Default::default() };
    if let Some(r) = a.lfo_rate {
        flags.toy = Some(config::ToyFile { lfo_rate_hz: Some(r), ..Default::default() });
    }
    let mut cfg = resolve(&a.common, flags)?;
    cfg.length.get_or_insert(x.samples.len());
    let toy = cfg.toy_config(Some(kind))?;
    let dir = out_dir(&a.common)?;
    let output = a.output.clone().unwrap_or_else(|| dir.join("target.wav"));
    write_wav(&output, &make_toy_target(&toy, &x.samples)?, x.sample_rate)?;
    let frames = x.samples.len().div_ceil(toy.n);
    let traj = dir.join("target_trajectory.csv");
    write_series(&traj, "trajectory", &toy.frame_trajectory(frames))?;
    println!("{kind:?} at {:.4} Hz -> {}", toy.lfo_rate_hz, output.display());
    let mut manifest = Manifest::new("make-target", serde_json::json!({ "input": a.input, "toy": format!("{toy:?}") }));
    manifest.artifacts.extend([output, traj]);
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(())
}

fn framed(x: &[f64], tc: &TrainConfig) -> Result<FramedInput> {
    if x.len() % tc.n != 0 {
        return Err(Error::ShapeMismatch(format!("input length {} is not a multiple of N={}", x.len(), tc.n)));
    }
    Ok(FramedInput { frames: frame_signal(x, tc.n)?, frame_len: tc.n, kernel_len: tc.n_prime })
}

fn write_run(dir: &Path, run: &SeedRun, arts: &mut Vec<PathBuf>) -> Result<()> {
    let sd = dir.join(format!("seed_{}", run.seed));
    let files = [sd.join("params.json"), sd.join("loss.csv"), sd.join("metrics.json")];
    save_params(&files[0], &run.outcome.params)?;
    write_loss_history(&files[1], &run.outcome.history)?;
    write_json(&files[2], &run.metrics)?;
    arts.extend(files);
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let flags = FileConfig {
        variant: a.variant.clone(),
        sections: a.sections,
        fb_config: a.fb_config.clone(),
        channels: a.channels,
        n: a.n,
        n_prime: a.n_prime,
        input_kind: a.input_kind.as_deref().map(str::parse).transpose()?,
        preemphasis: a.preemphasis.as_deref().map(str::parse).transpose()?,
        iterations: a.iterations,
        learning_rate: a.learning_rate,
        seeds: a.seeds,
        base_seed: a.base_seed,
        jobs: a.jobs,
        align: a.align.then_some(true),
        ..Default::default()
    };
    let mut cfg = resolve(&a.common, flags)?;
    let fs = cfg.sample_rate.unwrap_or(44100.0);
    let (x, y) = read_pair(&a.input, &a.target, fs)?;
    if let Some(l) = cfg.length.filter(|&l| l != x.len()) {
        return Err(Error::ShapeMismatch(format!("config length {l} but input has {} samples", x.len())));
    }
    cfg.length = Some(x.len());
    let tc = cfg.train_config()?;
    let input = framed(&x, &tc)?;
    let (val_input, val_target) = match (&a.val_input, &a.val_target) {
        (Some(vi), Some(vt)) => read_pair(vi, vt, fs)?,
        (None, None) => (x.clone(), y.clone()),
        _ => return Err(Error::InvalidArgument("--val-input and --val-target go together".into())),
    };
    let opts = ValidationOptions { align: cfg.align.unwrap_or(false), mode: ControlMode::Wavetable };
    let dir = out_dir(&a.common)?;
    let mut manifest = Manifest::new("train", to_json(&tc));
    manifest.seeds = (0..tc.seeds as u64).map(|i| tc.base_seed + i).collect();

    let result = if tc.seeds == 1 {
        let outcome = train(&tc, tc.base_seed, &input, &y)?;
        let metrics = validate_with(&outcome.params, &val_input, &val_target, opts.align, opts.mode)?;
        let stats = RunStats::from_values(vec![(tc.base_seed, metrics.esr_db)], Vec::new())?;
        MultiSeedResult { runs: vec![SeedRun { seed: tc.base_seed, outcome, metrics }], stats }
    } else {
        let data = ExperimentData { train_input: input, train_target: y, val_input, val_target };
        multi_seed(&tc, &data, &opts, cfg.jobs.unwrap_or(0))?
    };

    let mut arts = Vec::new();
    for run in &result.runs {
        write_run(&dir, run, &mut arts)?;
    }
    let top = [dir.join("seeds.csv"), dir.join("stats.csv"), dir.join("config.toml")];
    write_seed_table(&top[0], &result)?;
    write_stats_summary(&top[1], &result.stats)?;
    write_toml(&top[2], &cfg)?;
    arts.extend(top);
    manifest.artifacts = arts;

    let s = &result.stats;
    println!(
        "{} seeds ok, {} failed: median {:.2} dB, best {:.2} dB, ci {:.2} dB",
        s.esr_db.len(),
        s.failures.len(),
        s.median,
        s.best,
        s.ci
    );
    for f in &s.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(())
}

fn validate_cmd(a: ValidateArgs) -> Result<()> {
    let params = load_params(&a.params)?;
    let (x, y) = read_pair(&a.input, &a.target, params.sample_rate)?;
    let m = validate(&params, &x, &y, a.align)?;
    let trivial = trivial_baseline(&x, &y)?;
    println!("esr_db {:.3}", m.esr_db);
    println!("mrsl {:.6}", m.mrsl);
    println!("trivial_esr_db {trivial:.3}");
    if let Some(s) = m.alignment {
        println!("alignment {s}");
    }
    let dir = out_dir(&a.common)?;
    let path = dir.join("metrics.json");
    write_json(&path, &m)?;
    let mut manifest = Manifest::new(
        "validate",
        serde_json::json!({ "params": a.params, "input": a.input, "target": a.target, "align": a.align }),
    );
    manifest.artifacts.push(path);
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    if !(a.rate_scale > 0.0 && a.rate_scale.is_finite()) {
        return Err(Error::Parse { field: "rate_scale".into(), msg: format!("must be positive, got {}", a.rate_scale) });
    }
    let params = load_params(&a.params)?;
    let x = read_at(&a.input, params.sample_rate)?;
    let mode = if a.frame_interp { ControlMode::FrameInterp } else { ControlMode::Wavetable };
    let opts = RenderOptions { rate_scale: a.rate_scale, mode, frame_offset: 0.0 };
    let y = process(&params, &x.samples, &opts)?;
    let dir = out_dir(&a.common)?;
    let output = a.output.clone().unwrap_or_else(|| dir.join("output.wav"));
    write_wav(&output, &y, x.sample_rate)?;
    let mut arts = vec![output.clone()];
    for (i, src) in control_sources(&params, mode)?.iter().enumerate() {
        let path = dir.join(format!("control_ch{i}.csv"));
        write_series(&path, "control", &src.render(params.n, x.samples.len(), a.rate_scale, 0.0)?)?;
        arts.push(path);
    }
    println!("{} samples -> {}", y.len(), output.display());
    let mut manifest = Manifest::new("infer", to_json(&opts));
    manifest.artifacts = arts;
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(())
}

/// Input spectrum for the analysis commands: `flat` or a kernel kind.
fn analysis_spectrum(kernel: &str, n: usize, n_prime: Option<usize>) -> Result<(HalfSpectrum, Option<usize>)> {
    if kernel == "flat" {
        return Ok((HalfSpectrum::ones(n), None));
    }
    let kind: KernelKind = kernel.parse()?;
    let np = n_prime.unwrap_or(n / 2);
    if np == 0 || np > n {
        return Err(Error::Parse { field: "n_prime".into(), msg: format!("must lie in 1..={n}, got {np}") });
    }
    Ok((gen_kernel(kind, np, n)?.spectrum(n)?, Some(np)))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    if a.n < 4 || !a.n.is_power_of_two() {
        return Err(Error::Parse { field: "n".into(), msg: format!("must be a power of two >= 4, got {}", a.n) });
    }
    if a.points < 2 {
        return Err(Error::Parse { field: "points".into(), msg: "need at least 2".into() });
    }
    let dir = out_dir(&a.common)?;
    let (x, np) = analysis_spectrum(&a.kernel, a.n, a.n_prime)?;
    let half = a.n as f64 / 2.0;
    let mut arts = Vec::new();
    match a.kind {
        AnalyzeKind::Gamma => {
            let ks: Vec<usize> = (1..=a.n / 2).collect();
            let s = gamma_surface(a.d, a.n, &ks, &linspace(0.0, half, a.points));
            let path = dir.join("gamma.csv");
            arts.push(export_gamma_surface(&s, &path)?);
            arts.push(path);
        }
        AnalyzeKind::DelaySurface => {
            let s = delay_loss_surface(a.d, &x, &linspace(0.0, half, a.points), np);
            let path = dir.join("delay_surface.csv");
            arts.push(export_surface(&s, &path)?);
            arts.push(path);
            println!("local minima: {}", local_minima(&s.values));
        }
        AnalyzeKind::ApfSurface => {
            let grid: Vec<f64> = linspace(-0.999, 0.999, a.points);
            let s = apf_loss_surface(a.pole, a.sections, &x, &grid, np)?;
            let path = dir.join("apf_surface.csv");
            arts.push(export_surface(&s, &path)?);
            arts.push(path);
            println!("local minima: {}", local_minima(&s.values));
        }
        AnalyzeKind::Descend => {
            let d = descend_delay(a.d0, a.d, &x, a.steps, a.lr);
            let path = dir.join("descent.csv");
            export_descent(&d, &path)?;
            arts.push(path);
            println!("final dhat {:.4} (target {}, error {:.4})", d.final_estimate(), a.d, d.final_estimate() - a.d);
        }
    }
    let mut manifest = Manifest::new(
        "analyze",
        serde_json::json!({
            "kind": format!("{:?}", a.kind), "n": a.n, "kernel": a.kernel, "n_prime": np, "d": a.d, "d0": a.d0,
            "sections": a.sections, "pole": a.pole, "points": a.points, "steps": a.steps, "lr": a.lr,
        }),
    );
    manifest.artifacts = arts;
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(())
}
