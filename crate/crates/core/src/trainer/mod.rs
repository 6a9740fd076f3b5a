//! Training: full-batch Adam on the spectral loss, validation of the
//! time-domain model, and the multi-seed harness.

mod adam;
mod loss;
mod metrics;

pub use adam::{adam_step, Adam, AdamConfig};
pub use loss::spectral_loss;
pub use metrics::{esr, esr_db, mrsl, to_db, ESR_DB_FLOOR, MRSL_RESOLUTIONS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmodel::{init_params, FbConfig, ModelParams, ModelShape, Variant};
use crate::error::{Error, Result};
use crate::grad::{Batch, LossGraph, LossSpec};
use crate::signals::{frame_signal, gen_kernel, gen_triangular, FramedInput, KernelKind};
use crate::spectral::rfft;
use crate::tdengine::{control_sources, process_with_sources, ControlMode, RenderOptions};

/// Default sizes: desk scale for quick runs, paper scale for the full
/// protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Parse { field: "profile".into(), msg: format!("expected desk or paper, got `{other}`") }),
        }
    }
}

impl Profile {
    pub fn length(self) -> usize {
        match self {
            Profile::Desk => 1 << 16,
            Profile::Paper => 1 << 18,
        }
    }

    pub fn iterations(self) -> usize {
        match self {
            Profile::Desk => 2000,
            Profile::Paper => 15000,
        }
    }

    pub fn seeds(self) -> usize {
        match self {
            Profile::Desk => 5,
            Profile::Paper => 30,
        }
    }

    /// LFO rate of the toy targets. Desk scale fits exactly two periods
    /// into the training signal.
    pub fn toy_lfo_rate(self, sample_rate: f64) -> f64 {
        match self {
            Profile::Desk => 2.0 * sample_rate / self.length() as f64,
            Profile::Paper => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preemphasis {
    #[default]
    None,
    Tri,
}

impl std::str::FromStr for Preemphasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Preemphasis::None),
            "tri" => Ok(Preemphasis::Tri),
            other => Err(Error::Parse { field: "preemphasis".into(), msg: format!("expected none or tri, got `{other}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub profile: Profile,
    pub variant: Variant,
    pub fb_config: FbConfig,
    pub channels: usize,
    pub n: usize,
    pub n_prime: usize,
    pub sample_rate: f64,
    pub length: usize,
    pub input_kind: KernelKind,
    pub preemphasis: Preemphasis,
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seeds: usize,
    pub base_seed: u64,
}

impl TrainConfig {
    pub fn new(profile: Profile, variant: Variant) -> Self {
        let adam = AdamConfig::default();
        Self {
            profile,
            variant,
            fb_config: FbConfig::I,
            channels: 1,
            n: 1024,
            n_prime: 512,
            sample_rate: 44100.0,
            length: profile.length(),
            input_kind: KernelKind::Tri,
            preemphasis: Preemphasis::None,
            iterations: profile.iterations(),
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seeds: profile.seeds(),
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Parse { field: field.into(), msg });
        if self.n < 4 || !self.n.is_power_of_two() {
            return bad("n", format!("must be a power of two >= 4, got {}", self.n));
        }
        if self.n_prime == 0 || self.n_prime > self.n / 2 {
            return bad("n_prime", format!("must lie in 1..={}, got {}", self.n / 2, self.n_prime));
        }
        if self.length == 0 || self.length % self.n != 0 {
            return bad("length", format!("must be a positive multiple of n={}, got {}", self.n, self.length));
        }
        if self.channels == 0 {
            return bad("channels", "must be at least 1".into());
        }
        if let Variant::ApfCascade { k: 0 } = self.variant {
            return bad("k", "must be at least 1".into());
        }
        if !(self.sample_rate > 0.0) {
            return bad("sample_rate", format!("must be positive, got {}", self.sample_rate));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", format!("must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("adam", "need 0 <= beta < 1 and eps > 0".into());
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.length / self.n
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            variant: self.variant,
            fb_config: self.fb_config,
            channels: self.channels,
            n: self.n,
            frames: self.frames(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn loss_spec(&self) -> Result<LossSpec> {
        Ok(match self.preemphasis {
            Preemphasis::None => LossSpec::default(),
            Preemphasis::Tri => LossSpec { preemphasis: Some(gen_triangular(self.n_prime)?.spectrum(self.n)?) },
        })
    }

    /// The repeated-kernel training input.
    pub fn training_input(&self) -> Result<FramedInput> {
        let kernel = gen_kernel(self.input_kind, self.n_prime, self.n)?;
        crate::signals::build_training_input(&kernel, self.n, self.frames())
    }
}

/// Frame spectra of a training pair.
pub fn build_batch(input: &FramedInput, target: &[f64]) -> Result<Batch> {
    let n = input.frame_len;
    if target.len() != input.frame_count() * n {
        return Err(Error::ShapeMismatch(format!(
            "target has {} samples, input {}",
            target.len(),
            input.frame_count() * n
        )));
    }
    let inputs = input.frames.iter().map(|f| rfft(f)).collect::<Result<Vec<_>>>()?;
    let targets = frame_signal(target, n)?.iter().map(|f| rfft(f)).collect::<Result<Vec<_>>>()?;
    Batch::full(inputs, targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Loss before each update.
    pub history: Vec<f64>,
    /// Loss of the returned parameters.
    pub final_loss: f64,
}

/// Full-batch training from `init`.
pub fn train_from(config: &TrainConfig, init: ModelParams, batch: &Batch) -> Result<TrainOutcome> {
    let spec = config.loss_spec()?;
    let mut graph = LossGraph::new();
    let mut flat = init.flatten();
    let mut params = init;
    let mut adam = Adam::new(config.adam(), flat.len());
    let mut history = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let (loss, grads) = graph.evaluate(&params, batch, &spec)?;
        if !loss.is_finite() {
            return Err(Error::Aborted(format!("non-finite loss at iteration {it}")));
        }
        history.push(loss);
        adam.step(&mut flat, &grads).map_err(|e| Error::Aborted(format!("iteration {it}: {e}")))?;
        params = params.with_flat(&flat)?;
    }
    let final_loss = crate::grad::batch_loss(&params, batch, &spec)?;
    Ok(TrainOutcome { params, history, final_loss })
}

/// Seeded initialisation followed by [`train_from`].
pub fn train(config: &TrainConfig, seed: u64, input: &FramedInput, target: &[f64]) -> Result<TrainOutcome> {
    config.validate()?;
    if input.frame_len != config.n || input.frame_count() != config.frames() {
        return Err(Error::ShapeMismatch(format!(
            "input is {}x{}, config expects {}x{}",
            input.frame_count(),
            input.frame_len,
            config.frames(),
            config.n
        )));
    }
    let batch = build_batch(input, target)?;
    train_from(config, init_params(seed, &config.shape())?, &batch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub esr: f64,
    pub esr_db: f64,
    pub mrsl: f64,
    /// LFO start frame chosen by the alignment search.
    pub alignment: Option<usize>,
}

/// Renders `input` through the time-domain engine and scores it against
/// `target`. With `align`, every start frame `0..M` is tried and the
/// lowest-ESR one is kept.
pub fn validate(params: &ModelParams, input: &[f64], target: &[f64], align: bool) -> Result<ValidationMetrics> {
    validate_with(params, input, target, align, ControlMode::Wavetable)
}

pub fn validate_with(params: &ModelParams, input: &[f64], target: &[f64], align: bool, mode: ControlMode) -> Result<ValidationMetrics> {
    if input.len() != target.len() {
        return Err(Error::ShapeMismatch(format!("validation input {} vs target {}", input.len(), target.len())));
    }
    if !target.iter().any(|v| *v != 0.0) {
        return Err(Error::DegenerateTarget("silent validation target".into()));
    }
    let sources = control_sources(params, mode)?;
    let render = |offset: usize| {
        let opts = RenderOptions { rate_scale: 1.0, mode, frame_offset: offset as f64 };
        process_with_sources(params, &sources, input, &opts)
    };
    let (alignment, pred) = if align {
        let scores = (0..params.frame_count().max(1))
            .into_par_iter()
            .map(|s| Ok((s, esr(target, &render(s)?)?)))
            .collect::<Result<Vec<_>>>()?;
        let best = scores
            .iter()
            .fold(scores[0], |acc, &(s, e)| if e < acc.1 { (s, e) } else { acc });
        (Some(best.0), render(best.0)?)
    } else {
        (None, render(0)?)
    };
    let ratio = esr(target, &pred)?;
    Ok(ValidationMetrics { esr: ratio, esr_db: to_db(ratio), mrsl: mrsl(target, &pred)?, alignment })
}

/// ESR in dB of the unprocessed input against the target.
pub fn trivial_baseline(input: &[f64], target: &[f64]) -> Result<f64> {
    esr_db(target, input)
}

/// Training and validation signals for one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train_input: FramedInput,
    pub train_target: Vec<f64>,
    pub val_input: Vec<f64>,
    pub val_target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub align: bool,
    pub mode: ControlMode,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub metrics: ValidationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// `(seed, validation ESR dB)` of every successful seed, by seed.
    pub esr_db: Vec<(u64, f64)>,
    pub median: f64,
    pub best: f64,
    /// `0.95 σ / sqrt(N_res)` with the population standard deviation.
    pub ci: f64,
    pub failures: Vec<SeedFailure>,
}

impl RunStats {
    pub fn from_values(esr_db: Vec<(u64, f64)>, failures: Vec<SeedFailure>) -> Result<Self> {
        if esr_db.is_empty() {
            return Err(Error::Aborted(format!("all {} seeds failed", failures.len())));
        }
        let mut v: Vec<f64> = esr_db.iter().map(|e| e.1).collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite ESR"));
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        let mean = v.iter().sum::<f64>() / n as f64;
        let sigma = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        Ok(Self { esr_db, median, best: v[0], ci: 0.95 * sigma / (n as f64).sqrt(), failures })
    }
}

#[derive(Debug, Clone)]
pub struct MultiSeedResult {
    pub runs: Vec<SeedRun>,
    pub stats: RunStats,
}

/// Independent train + validate per seed on a pool of `jobs` threads
/// (0 = rayon default). Failed seeds are reported and left out of the
/// statistics.
pub fn multi_seed(config: &TrainConfig, data: &ExperimentData, opts: &ValidationOptions, jobs: usize) -> Result<MultiSeedResult> {
    config.validate()?;
    if config.seeds < 2 {
        return Err(Error::Parse { field: "seeds".into(), msg: format!("multi-seed runs need at least 2, got {}", config.seeds) });
    }
    let batch = build_batch(&data.train_input, &data.train_target)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|i| config.base_seed + i).collect();
    let results: Vec<(u64, Result<SeedRun>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let run = init_params(seed, &config.shape())
                    .and_then(|init| train_from(config, init, &batch))
                    .and_then(|outcome| {
                        let metrics = validate_with(&outcome.params, &data.val_input, &data.val_target, opts.align, opts.mode)?;
                        Ok(SeedRun { seed, outcome, metrics })
                    });
                (seed, run)
            })
            .collect()
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(SeedFailure { seed, error: e.to_string() }),
        }
    }
    let stats = RunStats::from_values(runs.iter().map(|r| (r.seed, r.metrics.esr_db)).collect(), failures)?;
    Ok(MultiSeedResult { runs, stats })
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Best Pearson correlation of `learned` against `target` over cyclic
/// shifts of `learned` by `0..len` frames, with the chosen shift.
pub fn aligned_correlation(learned: &[f64], target: &[f64]) -> (f64, usize) {
    let m = learned.len().min(target.len());
    (0..m)
        .map(|s| {
            let shifted: Vec<f64> = (0..m).map(|i| learned[(i + s) % m]).collect();
            (pearson(&shifted, &target[..m]), s)
        })
        .fold((f64::NEG_INFINITY, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
}
