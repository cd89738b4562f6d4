use abelnet::adversarial::{exact_generator_grad, fake_batch_grad, LossKind, LossPair};
use abelnet::beliefnet::BeliefNet;
use abelnet::discriminator::MlpDiscriminator;
use abelnet::metrics::{empirical_pmf, loglik_estimate, tv_distance, PmfTable};
use abelnet::numcore::{BitVec, RngStream};
use abelnet_oracle as oracle;

#[test]
fn enumerated_pmf_matches_independent_enumeration() {
    for seed in 0..20 {
        let mut rng = RngStream::new(seed, 10);
        let sizes = [1 + seed as usize % 4, 3, 2 + seed as usize % 3];
        let net = BeliefNet::dense(&sizes, &mut rng).unwrap();
        let probs = net.enumerate_output_probs().unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(oracle::max_abs_diff(&probs, &oracle::output_pmf(&net)) <= 1e-14);
    }
}

#[test]
fn ancestral_samples_match_enumeration() {
    let mut rng = RngStream::new(77, 0);
    let mut net = BeliefNet::dense(&[3, 4, 3], &mut rng).unwrap();
    oracle::randomize(&mut net, 1.0, &mut rng);
    let exact = net.enumerate_output_pmf().unwrap();
    let draws: Vec<BitVec> = (0..100_000u64)
        .map(|i| net.sample_forward(&mut rng.split(i)).unwrap().output().clone())
        .collect();
    let tv = tv_distance(&exact, &empirical_pmf(&draws).unwrap()).unwrap();
    assert!(tv < 0.02, "tv {tv}");
}

#[test]
fn score_function_estimator_is_unbiased_in_monte_carlo() {
    let mut rng = RngStream::new(21, 0);
    let mut net = BeliefNet::dense(&[2, 3], &mut rng).unwrap();
    oracle::randomize(&mut net, 1.0, &mut rng);
    let kind = LossKind::Wasserstein;
    let mut disc = MlpDiscriminator::random(&[3, 4, 1], kind.head(), &mut rng).unwrap();
    oracle::randomize(&mut disc, 1.0, &mut rng);
    let loss = LossPair::new(kind);
    let exact = exact_generator_grad(&net, &disc, &loss).unwrap();

    let n = 100_000u64;
    let mut sum = vec![0.0; exact.len()];
    let mut sum_sq = vec![0.0; exact.len()];
    let base = RngStream::new(5, 5);
    for i in 0..n {
        let (est, _) = fake_batch_grad(&net, &disc, &loss, 1, &base.split(i), None).unwrap();
        for (k, g) in est.g_theta.to_flat().into_iter().enumerate() {
            sum[k] += g;
            sum_sq[k] += g * g;
        }
    }
    for k in 0..exact.len() {
        let mean = sum[k] / n as f64;
        let var = sum_sq[k] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact[k]).abs() <= 4.0 * se,
            "coordinate {k}: {mean} vs {} (se {se})",
            exact[k]
        );
    }
}

#[test]
fn zero_critic_gives_zero_generator_gradient() {
    let mut rng = RngStream::new(1, 0);
    let net = BeliefNet::dense(&[3, 4], &mut rng).unwrap();
    let disc = MlpDiscriminator::zeros(&[4, 3, 1], LossKind::Wasserstein.head()).unwrap();
    let loss = LossPair::new(LossKind::Wasserstein);
    let (est, chains) = fake_batch_grad(&net, &disc, &loss, 16, &rng, None).unwrap();
    assert_eq!(chains.len(), 16);
    assert!(est.g_theta.to_flat().iter().all(|&g| g == 0.0));
}

#[test]
fn loglik_of_zero_net() {
    // Every output pattern of three fair coins has probability 1/8.
    let net = BeliefNet::zeros(&[2, 3]).unwrap();
    let x = BitVec::from_bits(&[1, 0, 1]).unwrap();
    let ll = loglik_estimate(&net, &x, 50, &RngStream::new(0, 0)).unwrap();
    assert!((ll - (0.125f64).ln()).abs() < 1e-12);
}

#[test]
fn loglik_estimate_converges_to_exact() {
    let mut rng = RngStream::new(8, 0);
    let mut net = BeliefNet::dense(&[3, 3, 2], &mut rng).unwrap();
    oracle::randomize(&mut net, 1.0, &mut rng);
    let exact = net.enumerate_output_probs().unwrap();
    for code in 0..4u64 {
        let x = BitVec::from_index(code, 2);
        let ll = loglik_estimate(&net, &x, 200_000, &rng.split(code)).unwrap();
        assert!(
            (ll - exact[code as usize].ln()).abs() < 0.02,
            "{code}: {ll} vs {}",
            exact[code as usize].ln()
        );
    }
}

#[test]
fn reverse_chain_starts_at_given_output() {
    let mut rng = RngStream::new(4, 0);
    let net = BeliefNet::dense(&[3, 5, 4], &mut rng).unwrap();
    let x = BitVec::from_bits(&[1, 1, 0, 1]).unwrap();
    let chain = net.sample_reverse(&x, &mut rng).unwrap();
    assert_eq!(chain.output(), &x);
    assert_eq!(chain.states.iter().map(BitVec::len).collect::<Vec<_>>(), vec![3, 5, 4]);
}

#[test]
fn tv_of_identical_tables_is_zero() {
    let p = PmfTable::from_dense(2, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
}
