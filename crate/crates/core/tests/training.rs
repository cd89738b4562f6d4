use abelnet::adversarial::{
    exact_objective, metrics_csv, LossKind, LossPair, MetricRow, TrainConfig, TrainerState, TrainingData,
};
use abelnet::beliefnet::BeliefNet;
use abelnet::discriminator::{Head, MlpDiscriminator};
use abelnet::numcore::{BitVec, RngStream};
use abelnet::optim::{OptimizerKind, Parameters};

fn product_bernoulli(probs: &[f64], n: usize, seed: u64) -> Vec<BitVec> {
    let mut rng = RngStream::new(seed, 99);
    (0..n)
        .map(|_| BitVec::from_bools(probs.iter().map(|&p| rng.bernoulli(p))))
        .collect()
}

fn toy_state(kind: LossKind, config: &TrainConfig) -> TrainerState {
    let mut rng = RngStream::new(config.seed, 1);
    let net = BeliefNet::dense(&[4, 3], &mut rng).unwrap();
    let disc = MlpDiscriminator::random(&[3, 8, 1], kind.head(), &mut rng).unwrap();
    TrainerState::new(net, disc, config).unwrap()
}

fn flat(p: &impl Parameters) -> Vec<f64> {
    p.blocks().concat()
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged() {
    for kind in LossKind::ALL {
        let mut config = TrainConfig::new(kind);
        config.gen_lr = 0.0;
        config.disc_lr = 0.0;
        config.gen_optimizer = OptimizerKind::Sgd;
        config.disc_optimizer = OptimizerKind::Sgd;
        let data = TrainingData::new(product_bernoulli(&[0.8, 0.2, 0.5], 100, 0)).unwrap();
        let mut state = toy_state(kind, &config);
        if kind == LossKind::Wasserstein {
            state.disc.clip_weights(config.clip).unwrap();
        }
        let (net0, disc0) = (flat(&state.net), flat(&state.disc));
        state.train_step(&config, &data).unwrap();
        assert_eq!(state.t, 1);
        assert_eq!(flat(&state.net), net0);
        assert_eq!(flat(&state.disc), disc0);
    }
}

#[test]
fn wasserstein_critic_stays_clipped_after_every_update() {
    let mut config = TrainConfig::new(LossKind::Wasserstein);
    config.disc_lr = 0.05;
    let data = TrainingData::new(product_bernoulli(&[0.8, 0.2, 0.5], 200, 1)).unwrap();
    let mut state = toy_state(LossKind::Wasserstein, &config);
    let mut updates = 0;
    for _ in 0..50 {
        state
            .train_step_observed(&config, &data, |d| {
                assert!(d.max_abs_param() <= config.clip);
                updates += 1;
            })
            .unwrap();
    }
    assert_eq!(updates, 50 * config.critic_steps);
}

#[test]
fn fixed_seed_reproduces_log_bitwise() {
    let run = || {
        let mut config = TrainConfig::new(LossKind::Js);
        config.iterations = 30;
        config.seed = 42;
        let data = TrainingData::new(product_bernoulli(&[0.8, 0.2, 0.5], 200, 2)).unwrap();
        let mut state = toy_state(LossKind::Js, &config);
        state.train(&config, &data).unwrap();
        (metrics_csv(&state.log), flat(&state.net))
    };
    let (a, na) = run();
    let (b, nb) = run();
    assert_eq!(a, b);
    assert_eq!(na, nb);
    assert!(a.starts_with(MetricRow::CSV_HEADER));
    assert_eq!(a.lines().count(), 31);
}

#[test]
fn layer_parallel_training_is_bitwise_serial() {
    let run = |layer_parallel| {
        let mut config = TrainConfig::new(LossKind::MalHybrid);
        config.iterations = 10;
        config.layer_parallel = layer_parallel;
        let data = TrainingData::new(product_bernoulli(&[0.8, 0.2, 0.5], 200, 2)).unwrap();
        let mut state = toy_state(LossKind::MalHybrid, &config);
        state.train(&config, &data).unwrap();
        metrics_csv(&state.log)
    };
    assert_eq!(run(false), run(true));
}

#[test]
fn eval_every_thins_the_log() {
    let mut config = TrainConfig::new(LossKind::Js);
    config.iterations = 10;
    config.eval_every = 3;
    let data = TrainingData::new(product_bernoulli(&[0.5, 0.5, 0.5], 50, 3)).unwrap();
    let mut state = toy_state(LossKind::Js, &config);
    state.train(&config, &data).unwrap();
    assert_eq!(state.log.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![3, 6, 9]);
}

#[test]
fn exact_objective_constant_critics() {
    let net = BeliefNet::zeros(&[2, 3]).unwrap();
    let data = product_bernoulli(&[0.8, 0.2, 0.5], 10, 4);
    let w = MlpDiscriminator::zeros(&[3, 1], Head::Identity).unwrap();
    assert_eq!(
        exact_objective(&net, &w, &LossPair::new(LossKind::Wasserstein), &data).unwrap(),
        0.0
    );
    let js = MlpDiscriminator::zeros(&[3, 4, 1], Head::Sigmoid).unwrap();
    let v = exact_objective(&net, &js, &LossPair::new(LossKind::Js), &data).unwrap();
    // A zero critic outputs 1/2, so each term is ln(1/2).
    assert!((v + 4f64.ln()).abs() < 1e-12);
}

#[test]
fn generator_updates_against_frozen_critic_lower_objective() {
    let kind = LossKind::Js;
    let mut config = TrainConfig::new(kind);
    config.gen_lr = 0.0;
    config.disc_lr = 0.01;
    config.batch_size = 64;
    let samples = product_bernoulli(&[0.8, 0.2, 0.5], 2000, 5);
    let data = TrainingData::new(samples.clone()).unwrap();
    let mut state = toy_state(kind, &config);
    // Fit the critic with the generator held still.
    for _ in 0..1500 {
        state.train_step(&config, &data).unwrap();
    }
    let loss = config.loss_pair().unwrap();
    let before = exact_objective(&state.net, &state.disc, &loss, &samples).unwrap();
    config.gen_lr = 0.01;
    config.disc_lr = 0.0;
    for _ in 0..200 {
        state.train_step(&config, &data).unwrap();
    }
    let after = exact_objective(&state.net, &state.disc, &loss, &samples).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn shape_and_mode_mismatches_are_rejected() {
    let config = TrainConfig::new(LossKind::Js);
    let mut state = toy_state(LossKind::Js, &config);
    let wide = TrainingData::new(vec![BitVec::zeros(4)]).unwrap();
    assert!(state.train_step(&config, &wide).is_err());
    let cond = TrainingData::conditional(vec![BitVec::zeros(3)], vec![BitVec::zeros(4)]).unwrap();
    assert!(state.train_step(&config, &cond).is_err());
    let mut bad = config.clone();
    bad.batch_size = 0;
    let ok = TrainingData::new(vec![BitVec::zeros(3)]).unwrap();
    assert!(state.train_step(&bad, &ok).is_err());
    assert_eq!(state.t, 0);
}

#[test]
fn conditional_training_runs() {
    let mut rng = RngStream::new(6, 0);
    let config = TrainConfig::new(LossKind::Js);
    let net = BeliefNet::dense(&[2, 5, 3], &mut rng).unwrap().clamped();
    let disc = MlpDiscriminator::random(&[5, 6, 1], Head::Sigmoid, &mut rng).unwrap();
    let mut state = TrainerState::new(net, disc, &config).unwrap();
    let samples = product_bernoulli(&[0.9, 0.1, 0.5], 40, 7);
    let conds = (0..40)
        .map(|i| BitVec::from_bits(&[(i % 2) as u8, 1 - (i % 2) as u8]).unwrap())
        .collect();
    let data = TrainingData::conditional(samples, conds).unwrap();
    for _ in 0..5 {
        state.train_step(&config, &data).unwrap();
    }
    assert_eq!(state.log.len(), 5);
}
