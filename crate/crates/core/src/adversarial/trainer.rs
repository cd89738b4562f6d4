use std::fmt::Write as _;

use crate::beliefnet::BeliefNet;
use crate::discriminator::{concat_input, MlpDiscriminator};
use crate::error::{Error, Result};
use crate::numcore::{BitVec, RngStream};
use crate::optim::{Direction, OptimizerKind, OptimizerState, Parameters};

use super::estimator::{fake_grads, real_rho_grad, sample_chains, FakeGradOptions};
use super::{LossKind, LossPair, DEFAULT_CLIP};

/// Hyperparameters of the alternating saddle-point loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub critic_steps: usize,
    pub loss: LossKind,
    pub gen_optimizer: OptimizerKind,
    pub disc_optimizer: OptimizerKind,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub clip: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Leave-one-out baseline in the generator estimator (off by default).
    pub baseline: bool,
    /// Evaluate per-layer generator gradients concurrently.
    pub layer_parallel: bool,
}

impl TrainConfig {
    /// Defaults: batch 32, Adam for both players at their default rates,
    /// clip 0.01, one log row per iteration.
    pub fn new(loss: LossKind) -> Self {
        Self {
            batch_size: 32,
            iterations: 1000,
            critic_steps: loss.default_critic_steps(),
            loss,
            gen_optimizer: OptimizerKind::Adam,
            disc_optimizer: OptimizerKind::Adam,
            gen_lr: OptimizerKind::Adam.default_lr(),
            disc_lr: OptimizerKind::Adam.default_lr(),
            clip: DEFAULT_CLIP,
            seed: 0,
            eval_every: 1,
            baseline: false,
            layer_parallel: false,
        }
    }

    pub fn loss_pair(&self) -> Result<LossPair> {
        LossPair::new(self.loss).with_clip(self.clip)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("iterations", self.iterations),
            ("critic_steps", self.critic_steps),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(Error::Contract(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [("gen_lr", self.gen_lr), ("disc_lr", self.disc_lr)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Contract(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        if self.clip.is_nan() || self.clip <= 0.0 {
            return Err(Error::Contract(format!("clip must be positive, got {}", self.clip)));
        }
        Ok(())
    }
}

/// The empirical data measure, with optional per-sample conditions that
/// clamp the generator input and are prepended to critic inputs.
#[derive(Clone, Debug)]
pub struct TrainingData {
    samples: Vec<BitVec>,
    conditions: Option<Vec<BitVec>>,
}

impl TrainingData {
    pub fn new(samples: Vec<BitVec>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Contract("training data is empty".into()))?;
        if let Some(bad) = samples.iter().find(|s| s.len() != first.len()) {
            return Err(Error::shape("training sample width", first.len(), bad.len()));
        }
        Ok(Self {
            samples,
            conditions: None,
        })
    }

    pub fn conditional(samples: Vec<BitVec>, conditions: Vec<BitVec>) -> Result<Self> {
        let mut data = Self::new(samples)?;
        if conditions.len() != data.samples.len() {
            return Err(Error::shape(
                "training conditions",
                data.samples.len(),
                conditions.len(),
            ));
        }
        data.conditions = Some(conditions);
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[BitVec] {
        &self.samples
    }

    pub fn conditions(&self) -> Option<&[BitVec]> {
        self.conditions.as_deref()
    }

    pub fn sample_width(&self) -> usize {
        self.samples[0].len()
    }

    /// Width of critic inputs (condition plus sample).
    pub fn critic_width(&self) -> usize {
        self.sample_width() + self.conditions.as_ref().map_or(0, |c| c[0].len())
    }

    fn critic_input(&self, i: usize) -> Vec<f64> {
        let x = self.samples[i].to_reals();
        match &self.conditions {
            Some(c) => concat_input(&c[i].to_reals(), &x),
            None => x,
        }
    }

    fn draw_indices(&self, batch: usize, rng: &mut RngStream) -> Vec<usize> {
        (0..batch).map(|_| rng.below(self.samples.len())).collect()
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub iter: u64,
    /// Objective estimate `mean φ(f(x)) + mean ψ(f(y))`.
    pub loss_total: f64,
    pub score_real_mean: f64,
    pub score_fake_mean: f64,
    pub gtheta_norm: f64,
    pub grho_norm: f64,
    /// Mean `ψ(f(y))` over the generator's batch.
    pub gen_loss: f64,
    /// Negated objective estimate (the critic maximizes the objective).
    pub disc_loss: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str = "iter,loss_total,score_real_mean,score_fake_mean,gtheta_norm,grho_norm";
}

/// Renders the metric log as CSV.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(MetricRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iter, r.loss_total, r.score_real_mean, r.score_fake_mean, r.gtheta_norm, r.grho_norm
        )
        .expect("string write");
    }
    out
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainerState {
    pub net: BeliefNet,
    pub disc: MlpDiscriminator,
    pub gen_opt: OptimizerState,
    pub disc_opt: OptimizerState,
    /// Completed iterations.
    pub t: u64,
    pub log: Vec<MetricRow>,
}

const STREAM_GENERATOR: u64 = 1 << 32;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl TrainerState {
    pub fn new(net: BeliefNet, disc: MlpDiscriminator, config: &TrainConfig) -> Result<Self> {
        let gen_opt = OptimizerState::for_params(config.gen_optimizer, &net);
        let disc_opt = OptimizerState::for_params(config.disc_optimizer, &disc);
        Ok(Self {
            net,
            disc,
            gen_opt,
            disc_opt,
            t: 0,
            log: Vec::new(),
        })
    }

    /// Random stream for iteration `t` of a run seeded with `seed`.
    pub fn iteration_stream(seed: u64, t: u64) -> RngStream {
        RngStream::new(seed, 0).split(t)
    }

    fn check_shapes(&self, data: &TrainingData) -> Result<()> {
        if data.sample_width() != self.net.output_dim() {
            return Err(Error::shape(
                "data vs generator output",
                self.net.output_dim(),
                data.sample_width(),
            ));
        }
        if data.critic_width() != self.disc.input_dim() {
            return Err(Error::shape(
                "data vs critic input",
                self.disc.input_dim(),
                data.critic_width(),
            ));
        }
        if data.conditions().is_some() != self.net.is_clamped() {
            return Err(Error::Usage(
                "conditional data requires a clamped-input generator and vice versa".into(),
            ));
        }
        Ok(())
    }

    fn fake_conditions(&self, data: &TrainingData, batch: usize, rng: &mut RngStream) -> Option<Vec<BitVec>> {
        data.conditions().map(|c| {
            data.draw_indices(batch, rng)
                .into_iter()
                .map(|i| c[i].clone())
                .collect()
        })
    }

    /// One iteration: `critic_steps` critic ascents, each from one real and
    /// one generated batch (clipped afterwards in Wasserstein mode), then one
    /// generator descent from a fresh generated batch.
    pub fn train_step(&mut self, config: &TrainConfig, data: &TrainingData) -> Result<()> {
        self.train_step_observed(config, data, |_| {})
    }

    /// [`TrainerState::train_step`], calling `after_critic_update` with the
    /// critic after every critic update.
    pub fn train_step_observed(
        &mut self,
        config: &TrainConfig,
        data: &TrainingData,
        mut after_critic_update: impl FnMut(&MlpDiscriminator),
    ) -> Result<()> {
        config.validate()?;
        self.check_shapes(data)?;
        let loss = config.loss_pair()?;
        let b = config.batch_size;
        let stream = Self::iteration_stream(config.seed, self.t);

        let mut last_real: Vec<Vec<f64>> = Vec::new();
        let mut grho_norm = 0.0;
        for k in 0..config.critic_steps as u64 {
            let mut idx_rng = stream.split(3 * k);
            let real: Vec<Vec<f64>> = data
                .draw_indices(b, &mut idx_rng)
                .into_iter()
                .map(|i| data.critic_input(i))
                .collect();
            let (mut g_rho, _) = real_rho_grad(&self.disc, &loss, &real)?;

            let conds = self.fake_conditions(data, b, &mut stream.split(3 * k + 2));
            let chains = sample_chains(&self.net, b, &stream.split(3 * k + 1), conds.as_deref())?;
            let fake = fake_grads(
                &self.net,
                &self.disc,
                &loss,
                &chains,
                conds.as_deref(),
                FakeGradOptions {
                    rho: true,
                    ..Default::default()
                },
            )?;
            g_rho.add_scaled(fake.g_rho.as_ref().expect("requested"), 1.0)?;
            grho_norm = g_rho.norm();

            self.disc_opt
                .step(&mut self.disc, &g_rho, config.disc_lr, Direction::Ascend)?;
            if let Some(c) = loss.clip {
                self.disc.clip_weights(c)?;
            }
            if !self.disc.is_finite() {
                return Err(Error::Numerical(format!(
                    "critic parameters became non-finite at iteration {}",
                    self.t
                )));
            }
            after_critic_update(&self.disc);
            last_real = real;
        }

        let gen_stream = stream.split(STREAM_GENERATOR);
        let conds = self.fake_conditions(data, b, &mut stream.split(STREAM_GENERATOR + 1));
        let chains = sample_chains(&self.net, b, &gen_stream, conds.as_deref())?;
        let fake = fake_grads(
            &self.net,
            &self.disc,
            &loss,
            &chains,
            conds.as_deref(),
            FakeGradOptions {
                theta: true,
                baseline: config.baseline,
                layer_parallel: config.layer_parallel,
                ..Default::default()
            },
        )?;
        let g_theta = fake.g_theta.expect("requested");
        if !g_theta.is_finite() {
            return Err(Error::Numerical(format!(
                "generator gradient became non-finite at iteration {}",
                self.t
            )));
        }
        self.gen_opt
            .step(&mut self.net, &g_theta, config.gen_lr, Direction::Descend)?;
        self.net.check_finite().map_err(|_| {
            Error::Numerical(format!(
                "generator parameters became non-finite at iteration {}",
                self.t
            ))
        })?;

        self.t += 1;
        if self.t.is_multiple_of(config.eval_every as u64) {
            let real_scores = last_real
                .iter()
                .map(|x| self.disc.forward(x))
                .collect::<Result<Vec<_>>>()?;
            let fake_scores = &fake.scores;
            let gen_loss = mean(&fake_scores.iter().map(|&f| loss.psi(f)).collect::<Vec<_>>());
            let loss_total = mean(&real_scores.iter().map(|&f| loss.phi(f)).collect::<Vec<_>>()) + gen_loss;
            if !loss_total.is_finite() {
                return Err(Error::Numerical(format!(
                    "objective became non-finite at iteration {}",
                    self.t
                )));
            }
            self.log.push(MetricRow {
                iter: self.t,
                loss_total,
                score_real_mean: mean(&real_scores),
                score_fake_mean: mean(fake_scores),
                gtheta_norm: g_theta.norm(),
                grho_norm,
                gen_loss,
                disc_loss: -loss_total,
            });
        }
        Ok(())
    }

    /// Runs until `config.iterations` iterations have completed.
    pub fn train(&mut self, config: &TrainConfig, data: &TrainingData) -> Result<()> {
        while self.t < config.iterations as u64 {
            self.train_step(config, data)?;
        }
        Ok(())
    }
}

/// Exact objective `(1/N) Σ φ(f(x_n)) + Σ_x p(x) ψ(f(x))`, with the model
/// distribution obtained by enumeration.
pub fn exact_objective(net: &BeliefNet, disc: &MlpDiscriminator, loss: &LossPair, data: &[BitVec]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Contract("empty data set".into()));
    }
    let probs = net.enumerate_output_probs()?;
    let width = net.output_dim();
    let mut real = 0.0;
    for x in data {
        real += loss.phi(disc.forward(&x.to_reals())?);
    }
    let mut fake = 0.0;
    for (code, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            let y = BitVec::from_index(code as u64, width).to_reals();
            fake += p * loss.psi(disc.forward(&y)?);
        }
    }
    Ok(real / data.len() as f64 + fake)
}

/// Exact generator gradient of `Σ_x p(x) ψ(f(x))`, computed as the
/// enumerated expectation of the score-function estimator.
pub fn exact_generator_grad(net: &BeliefNet, disc: &MlpDiscriminator, loss: &LossPair) -> Result<Vec<f64>> {
    let units = net.free_units();
    if units > crate::beliefnet::ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            units,
            limit: crate::beliefnet::ENUMERATION_LIMIT,
        });
    }
    let sizes = net.sizes();
    let clamp = match net.mode() {
        crate::beliefnet::InputMode::Free => None,
        crate::beliefnet::InputMode::Clamped { condition } => Some(
            condition
                .clone()
                .ok_or_else(|| Error::Usage("exact gradient of a clamped network needs a stored condition".into()))?,
        ),
    };
    let mut total = vec![0.0; net.num_params()];
    for code in 0..(1u64 << units) {
        let mut states = Vec::with_capacity(sizes.len());
        let mut shift = 0;
        for (l, &w) in sizes.iter().enumerate() {
            if l == 0 {
                if let Some(c) = &clamp {
                    states.push(c.clone());
                    continue;
                }
            }
            states.push(BitVec::from_index(code >> shift, w));
            shift += w;
        }
        let chain = crate::beliefnet::ChainSample { states };
        let p = net.log_joint(&chain)?.exp();
        let weight = p * loss.psi(disc.forward(&chain.output().to_reals())?);
        for (t, g) in total.iter_mut().zip(net.grad_log_joint(&chain)?.to_flat()) {
            *t += weight * g;
        }
    }
    Ok(total)
}
