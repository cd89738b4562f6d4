//! The five verbs: train, sample, eval, gradcheck, bench-parallel.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abelnet::adversarial::{
    fake_grads, metrics_csv, sample_chains, FakeGradOptions, LossKind, TrainerState, TrainingData,
};
use abelnet::beliefnet::BeliefNet;
use abelnet::container::{load_checkpoint, save_checkpoint, Checkpoint};
use abelnet::datasets::{load_digits_csv, load_idx, load_spikes_csv, one_hot, synth_spikes};
use abelnet::discriminator::MlpDiscriminator;
use abelnet::metrics::{firing_rates, mean_loglik};
use abelnet::numcore::{bernoulli_vec, BitVec, RngStream};
use abelnet::optim::Parameters;
use anyhow::{bail, Context, Result};
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::config::{architecture, DatasetSpec, RunConfig};
use crate::pgm;

const MODEL_STREAM: u64 = u64::MAX;
const CRITIC_STREAM: u64 = u64::MAX - 1;
const DATA_STREAM: u64 = 2;
const LOGLIK_STREAM: u64 = 3;
const SAMPLE_STREAM: u64 = 4;
const CHECK_STREAM: u64 = 5;

/// Data as loaded, before any conditioning.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub samples: Vec<BitVec>,
    pub labels: Option<Vec<usize>>,
    pub shape: Option<(usize, usize)>,
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    let seed = cfg.train.seed;
    let data = match &cfg.dataset {
        DatasetSpec::Digits { path } => {
            let ds = load_digits_csv(path, cfg.threshold())?;
            LoadedData {
                shape: ds.sample_shape(),
                labels: ds.labels().map(<[usize]>::to_vec),
                samples: ds.into_samples(),
            }
        }
        DatasetSpec::Idx { images, labels } => {
            let img = load_idx(images)?;
            if img.shape.len() != 3 {
                bail!("{} is not an image file", images.display());
            }
            let lab = labels.as_ref().map(load_idx).transpose()?;
            let ds = img.to_dataset(cfg.threshold(), lab.as_ref())?;
            LoadedData {
                shape: ds.sample_shape(),
                labels: ds.labels().map(<[usize]>::to_vec),
                samples: ds.into_samples(),
            }
        }
        DatasetSpec::SpikesCsv { path } => LoadedData {
            samples: load_spikes_csv(path)?.spikes().to_vec(),
            labels: None,
            shape: None,
        },
        DatasetSpec::SynthSpikes {
            neurons,
            frames,
            rate,
            shared,
        } => LoadedData {
            samples: synth_spikes(*neurons, *frames, *rate, *shared, seed)?.spikes().to_vec(),
            labels: None,
            shape: None,
        },
        DatasetSpec::Bernoulli { probs, samples } => {
            let mut rng = RngStream::new(seed, DATA_STREAM);
            let samples = (0..*samples)
                .map(|_| BitVec::from_bools(probs.iter().map(|&p| rng.bernoulli(p))))
                .collect();
            LoadedData {
                samples,
                labels: None,
                shape: None,
            }
        }
    };
    if data.samples.is_empty() {
        bail!("dataset is empty");
    }
    Ok(data)
}

pub fn training_data(cfg: &RunConfig, data: &LoadedData) -> Result<TrainingData> {
    if cfg.conditional_classes == 0 {
        return Ok(TrainingData::new(data.samples.clone())?);
    }
    let labels = data
        .labels
        .as_ref()
        .context("conditional training needs a labelled dataset")?;
    let conditions = labels
        .iter()
        .map(|&l| one_hot(l, cfg.conditional_classes))
        .collect::<abelnet::Result<Vec<_>>>()?;
    Ok(TrainingData::conditional(data.samples.clone(), conditions)?)
}

pub fn init_models(cfg: &RunConfig) -> Result<(BeliefNet, MlpDiscriminator)> {
    let base = RngStream::new(cfg.train.seed, 0);
    let arch = architecture(&cfg.generator_tokens())?;
    let mut net = BeliefNet::build(&arch, Some(&mut base.split(MODEL_STREAM)))?;
    if cfg.conditional_classes > 0 {
        net = net.clamped();
    }
    if net.output_dim() != cfg.disc_layers[0] {
        bail!(
            "generator output width {} differs from critic input width {}",
            net.output_dim(),
            cfg.disc_layers[0]
        );
    }
    let mut sizes = cfg.disc_layers.clone();
    sizes[0] += cfg.conditional_classes;
    let mut disc = MlpDiscriminator::random(&sizes, cfg.train.loss.head(), &mut base.split(CRITIC_STREAM))?;
    if cfg.train.loss == LossKind::Wasserstein {
        disc.clip_weights(cfg.train.clip)?;
    }
    Ok((net, disc))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").expect("string write");
        s
    })
}

/// Files written by a command, in creation order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let path = self.dir.join(name);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        self.files.push((name.to_string(), sha256_hex(&bytes)));
        Ok(())
    }

    /// The manifest is itself a valid config file: provenance lines are
    /// comments, followed by the resolved configuration.
    fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<Self> {
        let mut text = format!("# abelnet {command}\n");
        if let Some(ck) = &cfg.checkpoint {
            let bytes = std::fs::read(ck).with_context(|| format!("reading {}", ck.display()))?;
            writeln!(text, "# input checkpoint sha256={}", sha256_hex(&bytes))?;
        }
        for (name, hash) in &self.files {
            writeln!(text, "# artifact {name} sha256={hash}")?;
        }
        text.push_str(&cfg.render());
        self.write("manifest.txt", text.as_bytes())?;
        Ok(self)
    }
}

fn eval_points(data: &[BitVec], n: usize) -> Vec<BitVec> {
    let n = n.min(data.len());
    (0..n).map(|i| data[i * data.len() / n].clone()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn train(cfg: &RunConfig) -> Result<Artifacts> {
    let data = load_data(cfg)?;
    let tdata = training_data(cfg, &data)?;
    let mut state = match &cfg.checkpoint {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            TrainerState {
                net: ck.net,
                disc: ck.disc,
                gen_opt: ck.gen_opt,
                disc_opt: ck.disc_opt,
                t: ck.t,
                log: Vec::new(),
            }
        }
        None => {
            let (net, disc) = init_models(cfg)?;
            TrainerState::new(net, disc, &cfg.train)?
        }
    };
    if cfg.loglik_every > 0 && cfg.conditional_classes > 0 {
        bail!("loglik tracking is only available for unconditional runs");
    }
    let mut out = Artifacts::new(&cfg.out_dir)?;
    let points = eval_points(&data.samples, cfg.loglik_points);
    let loglik_rng = RngStream::new(cfg.train.seed, LOGLIK_STREAM);
    let mut loglik_csv = String::from("iter,loglik\n");
    let checkpoint = |s: &TrainerState| Checkpoint {
        net: s.net.clone(),
        disc: s.disc.clone(),
        gen_opt: s.gen_opt.clone(),
        disc_opt: s.disc_opt.clone(),
        t: s.t,
    };
    while state.t < cfg.train.iterations as u64 {
        state.train_step(&cfg.train, &tdata)?;
        let t = state.t as usize;
        if cfg.checkpoint_every > 0 && t.is_multiple_of(cfg.checkpoint_every) {
            let name = format!("checkpoint_{t:08}.bin");
            save_checkpoint(out.dir.join(&name), &checkpoint(&state))?;
            out.record(&name)?;
        }
        if cfg.loglik_every > 0 && t.is_multiple_of(cfg.loglik_every) {
            let ll = mean(&mean_loglik(&state.net, &points, cfg.loglik_samples, &loglik_rng)?);
            writeln!(loglik_csv, "{t},{ll}")?;
        }
    }
    out.write("metrics.csv", metrics_csv(&state.log).as_bytes())?;
    if cfg.loglik_every > 0 {
        out.write("loglik.csv", loglik_csv.as_bytes())?;
    }
    out.write("checkpoint.bin", &checkpoint(&state).to_bytes()?)?;
    out.finish("train", cfg)
}

fn require_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg.checkpoint.as_ref().context("this command needs --checkpoint")?;
    Ok(load_checkpoint(path)?)
}

/// Output samples and the output-layer probabilities they were drawn from.
pub fn draw_samples(net: &BeliefNet, cfg: &RunConfig, n: usize) -> Result<Vec<(BitVec, Vec<f64>)>> {
    let rng = RngStream::new(cfg.train.seed, SAMPLE_STREAM);
    (0..n)
        .map(|i| {
            let mut r = rng.split(i as u64);
            let cond = match cfg.conditional_classes {
                0 => None,
                k => Some(one_hot(i % k, k)?),
            };
            let (_, probs) = net.sample_output_probs(cond.as_ref(), &mut r)?;
            Ok((bernoulli_vec(&probs, &mut r)?, probs))
        })
        .collect()
}

fn tile_shape(cfg: &RunConfig, width: usize, data_shape: Option<(usize, usize)>) -> (usize, usize) {
    if let Some(s) = cfg.image_shape.or(data_shape).filter(|(h, w)| h * w == width) {
        return s;
    }
    let side = (width as f64).sqrt().round() as usize;
    if side * side == width {
        (side, side)
    } else {
        (1, width)
    }
}

pub fn sample(cfg: &RunConfig) -> Result<Artifacts> {
    let ck = require_checkpoint(cfg)?;
    let draws = draw_samples(&ck.net, cfg, cfg.sample_count)?;
    let width = ck.net.output_dim();
    let shape = match &cfg.dataset {
        DatasetSpec::Digits { .. } => Some((8, 8)),
        _ => None,
    };
    let (h, w) = tile_shape(cfg, width, shape);
    let bits: Vec<Vec<u8>> = draws
        .iter()
        .map(|(x, _)| x.iter().map(|b| if b { 255 } else { 0 }).collect())
        .collect();
    let grey: Vec<Vec<u8>> = draws
        .iter()
        .map(|(_, p)| p.iter().map(|&v| (v * 255.0).round() as u8).collect())
        .collect();
    let mut out = Artifacts::new(&cfg.out_dir)?;
    let mut csv = String::new();
    for (x, _) in &draws {
        let row: Vec<&str> = x.iter().map(|b| if b { "1" } else { "0" }).collect();
        writeln!(csv, "{}", row.join(","))?;
    }
    out.write("samples.csv", csv.as_bytes())?;
    let (gw, gh, px) = pgm::grid(&bits, h, w, cfg.grid_cols)?;
    out.write("samples.pgm", &pgm::encode(gw, gh, &px))?;
    let (gw, gh, px) = pgm::grid(&grey, h, w, cfg.grid_cols)?;
    out.write("probs.pgm", &pgm::encode(gw, gh, &px))?;
    out.finish("sample", cfg)
}

/// Evaluation rows keyed by metric name.
pub fn evaluate(cfg: &RunConfig, net: &BeliefNet, data: &LoadedData) -> Result<Vec<(String, f64)>> {
    let mut rows = Vec::new();
    if !net.is_clamped() {
        let points = eval_points(&data.samples, cfg.loglik_points);
        let rng = RngStream::new(cfg.train.seed, LOGLIK_STREAM);
        rows.push((
            "loglik_mean".to_string(),
            mean(&mean_loglik(net, &points, cfg.loglik_samples, &rng)?),
        ));
    }
    let generated: Vec<BitVec> = draw_samples(net, cfg, cfg.sample_count)?
        .into_iter()
        .map(|(x, _)| x)
        .collect();
    let model = firing_rates(&generated)?;
    let truth = firing_rates(&data.samples)?;
    let diffs: Vec<f64> = model.iter().zip(&truth).map(|(m, t)| (m - t).abs()).collect();
    rows.push(("marginal_mad".to_string(), mean(&diffs)));
    rows.push((
        "marginal_max_abs".to_string(),
        diffs.iter().cloned().fold(0.0, f64::max),
    ));
    rows.push((
        "units_within_0.01".to_string(),
        diffs.iter().filter(|&&d| d <= 0.01).count() as f64,
    ));
    rows.push(("model_mean_rate".to_string(), mean(&model)));
    rows.push(("data_mean_rate".to_string(), mean(&truth)));
    for (i, (m, t)) in model.iter().zip(&truth).enumerate() {
        rows.push((format!("rate_model_{i}"), *m));
        rows.push((format!("rate_data_{i}"), *t));
    }
    Ok(rows)
}

fn report_csv(rows: &[(String, f64)]) -> String {
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        writeln!(s, "{k},{v}").expect("string write");
    }
    s
}

pub fn eval(cfg: &RunConfig) -> Result<Artifacts> {
    let ck = require_checkpoint(cfg)?;
    let data = load_data(cfg)?;
    let rows = evaluate(cfg, &ck.net, &data)?;
    let mut out = Artifacts::new(&cfg.out_dir)?;
    out.write("eval.csv", report_csv(&rows).as_bytes())?;
    out.finish("eval", cfg)
}

/// Central-difference step for `gradcheck`.
pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn central_differences<P: Parameters + Clone>(p: &P, f: impl Fn(&P) -> f64) -> Vec<f64> {
    let mut work = p.clone();
    let mut out = Vec::new();
    let n_blocks = p.blocks().len();
    for b in 0..n_blocks {
        for i in 0..p.blocks()[b].len() {
            let x = p.blocks()[b][i];
            work.blocks_mut()[b][i] = x + FD_STEP;
            let up = f(&work);
            work.blocks_mut()[b][i] = x - FD_STEP;
            let down = f(&work);
            work.blocks_mut()[b][i] = x;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

fn redraw<P: Parameters>(p: &mut P, std: f64, rng: &mut RngStream) {
    let normal = Normal::new(0.0, std).expect("finite std");
    for block in p.blocks_mut() {
        for v in block {
            *v = normal.sample(rng);
        }
    }
}

/// Max relative error of analytic gradients against central differences on
/// models built from the configured architecture. Parameters (biases
/// included) are redrawn with std 0.5 so no ReLU sits on a kink.
pub fn gradcheck_rows(cfg: &RunConfig, chains: usize) -> Result<Vec<(String, f64)>> {
    let (mut net, mut disc) = init_models(cfg)?;
    let mut rng = RngStream::new(cfg.train.seed, CHECK_STREAM);
    redraw(&mut net, 0.5, &mut rng);
    redraw(&mut disc, 0.5, &mut rng);
    if cfg.conditional_classes > 0 {
        net = net.clamp_input(&one_hot(0, cfg.conditional_classes)?)?;
    }
    let mut worst_net: f64 = 0.0;
    for _ in 0..chains {
        let chain = net.sample_forward(&mut rng)?;
        let analytic = net.grad_log_joint(&chain)?.to_flat();
        let numeric = central_differences(&net, |n| n.log_joint(&chain).expect("shapes fixed"));
        for (a, b) in analytic.iter().zip(&numeric) {
            worst_net = worst_net.max(rel_err(*a, *b));
        }
    }
    let mut worst_disc: f64 = 0.0;
    for _ in 0..chains {
        let x: Vec<f64> = (0..disc.input_dim()).map(|_| rng.bernoulli(0.5) as u8 as f64).collect();
        let (_, g) = disc.backward(&x, 1.0)?;
        let numeric = central_differences(&disc, |d| d.forward(&x).expect("shapes fixed"));
        for (a, b) in g.to_flat().iter().zip(&numeric) {
            worst_disc = worst_disc.max(rel_err(*a, *b));
        }
    }
    Ok(vec![
        ("generator_log_joint".to_string(), worst_net),
        ("critic_backward".to_string(), worst_disc),
    ])
}

/// A written table plus whether every row passed.
#[derive(Debug)]
pub struct Checked {
    pub artifacts: Artifacts,
    pub table: String,
    pub ok: bool,
}

pub fn gradcheck(cfg: &RunConfig) -> Result<Checked> {
    let rows = gradcheck_rows(cfg, 5)?;
    let mut csv = String::from("check,max_rel_err,tolerance,status\n");
    let mut ok = true;
    for (name, err) in &rows {
        let pass = *err <= GRADCHECK_TOL;
        ok &= pass;
        writeln!(
            csv,
            "{name},{err:e},{GRADCHECK_TOL:e},{}",
            if pass { "PASS" } else { "FAIL" }
        )?;
    }
    let mut out = Artifacts::new(&cfg.out_dir)?;
    out.write("gradcheck.csv", csv.as_bytes())?;
    Ok(Checked {
        artifacts: out.finish("gradcheck", cfg)?,
        table: csv,
        ok,
    })
}

/// One bench measurement.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub workers: usize,
    pub seconds: f64,
    pub speedup: f64,
    pub bitwise_equal: bool,
}

fn bits_of(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Times the generator gradient of a `bench_layers × bench_width` network
/// on pools of each size and compares every result with the serial one.
pub fn bench_rows(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let base = RngStream::new(cfg.train.seed, 0);
    let net = BeliefNet::dense(&vec![cfg.bench_width; cfg.bench_layers], &mut base.split(MODEL_STREAM))?;
    let kind = cfg.train.loss;
    let disc = MlpDiscriminator::random(&[cfg.bench_width, 32, 1], kind.head(), &mut base.split(CRITIC_STREAM))?;
    let loss = cfg.train.loss_pair()?;
    let chains = sample_chains(&net, cfg.bench_batch, &base.split(0), None)?;
    let run = |layer_parallel: bool| -> Result<Vec<f64>> {
        let g = fake_grads(
            &net,
            &disc,
            &loss,
            &chains,
            None,
            FakeGradOptions {
                theta: true,
                layer_parallel,
                ..Default::default()
            },
        )?;
        Ok(g.g_theta.expect("requested").to_flat())
    };
    let pool = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")
    };
    let serial = pool(1)?.install(|| run(false))?;
    let mut rows = Vec::new();
    let mut baseline = None;
    for &w in &cfg.bench_workers {
        let p = pool(w)?;
        let mut best = f64::INFINITY;
        let mut equal = true;
        for _ in 0..cfg.bench_repeats {
            let start = Instant::now();
            let g = p.install(|| run(true))?;
            best = best.min(start.elapsed().as_secs_f64());
            equal &= bits_of(&g) == bits_of(&serial);
        }
        let base_time = *baseline.get_or_insert(best);
        rows.push(BenchRow {
            workers: w,
            seconds: best,
            speedup: base_time / best,
            bitwise_equal: equal,
        });
    }
    Ok(rows)
}

pub fn bench(cfg: &RunConfig) -> Result<Checked> {
    let rows = bench_rows(cfg)?;
    let mut csv = String::from("workers,seconds,speedup,bitwise_equal\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{:.6},{:.3},{}",
            r.workers, r.seconds, r.speedup, r.bitwise_equal
        )?;
    }
    let mut out = Artifacts::new(&cfg.out_dir)?;
    out.write("bench.csv", csv.as_bytes())?;
    Ok(Checked {
        artifacts: out.finish("bench-parallel", cfg)?,
        table: csv,
        ok: rows.iter().all(|r| r.bitwise_equal),
    })
}
