use abelnet::adversarial::{real_batch_grad, real_rho_grad, LossKind, LossPair};
use abelnet::beliefnet::BeliefNet;
use abelnet::container::ModelBundle;
use abelnet::discriminator::{Head, MlpDiscriminator};
use abelnet::numcore::{stable_sigmoid, BitVec, RngStream};
use abelnet::optim::{Direction, OptimizerKind, OptimizerState};
use proptest::prelude::*;

fn loss_kind() -> impl Strategy<Value = LossKind> {
    prop_oneof![
        Just(LossKind::Js),
        Just(LossKind::Wasserstein),
        Just(LossKind::MalHybrid)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigmoid_symmetry(x in -800.0f64..800.0) {
        let s = stable_sigmoid(x);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + stable_sigmoid(-x) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn bit_index_round_trip(code in 0u64..(1 << 20), width in 20usize..40) {
        prop_assert_eq!(BitVec::from_index(code, width).to_index(), code);
    }

    #[test]
    fn pmf_normalized(seed in any::<u64>(), a in 1usize..5, b in 1usize..5, c in 1usize..5) {
        let net = BeliefNet::dense(&[a, b, c], &mut RngStream::new(seed, 0)).unwrap();
        let total: f64 = net.enumerate_output_probs().unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn real_gradient_is_a_permutation_invariant_mean(seed in any::<u64>(), kind in loss_kind(), n in 1usize..6) {
        let mut rng = RngStream::new(seed, 0);
        let net = BeliefNet::dense(&[2, 4], &mut rng).unwrap();
        let disc = MlpDiscriminator::random(&[4, 5, 1], kind.head(), &mut rng).unwrap();
        let loss = LossPair::new(kind);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.bernoulli(0.5) as u8 as f64).collect()).collect();
        let est = real_batch_grad(&net, &disc, &loss, &xs).unwrap();
        prop_assert!(est.g_theta.to_flat().iter().all(|&g| g == 0.0));

        let mut reversed = xs.clone();
        reversed.reverse();
        let (a, _) = real_rho_grad(&disc, &loss, &xs).unwrap();
        let (b, _) = real_rho_grad(&disc, &loss, &reversed).unwrap();
        for (x, y) in a.to_flat().iter().zip(b.to_flat()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }

        let (single, _) = real_rho_grad(&disc, &loss, &xs[..1]).unwrap();
        let (doubled, _) = real_rho_grad(&disc, &loss, &[xs[0].clone(), xs[0].clone()]).unwrap();
        prop_assert_eq!(single.to_flat(), doubled.to_flat());
    }

    #[test]
    fn clipping_is_idempotent(seed in any::<u64>(), c in 0.001f64..0.5) {
        let disc = MlpDiscriminator::random(&[6, 7, 1], Head::Identity, &mut RngStream::new(seed, 0)).unwrap();
        let once = disc.clipped(c).unwrap();
        prop_assert!(once.max_abs_param() <= c);
        prop_assert_eq!(once.clipped(c).unwrap(), once);
    }

    #[test]
    fn container_round_trip(seed in any::<u64>(), sizes in proptest::collection::vec(1usize..6, 1..4)) {
        let mut rng = RngStream::new(seed, 0);
        let net = BeliefNet::dense(&sizes, &mut rng).unwrap();
        let disc = MlpDiscriminator::random(&[*sizes.last().unwrap(), 3, 1], Head::Sigmoid, &mut rng).unwrap();
        let bundle = ModelBundle { net, disc: Some(disc) };
        let bytes = bundle.to_bytes().unwrap();
        let back = ModelBundle::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back, bundle);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point(seed in any::<u64>(), steps in 1usize..20) {
        for kind in [OptimizerKind::Sgd, OptimizerKind::RmsProp, OptimizerKind::Adam] {
            let mut params: Vec<f64> = (0..5).map(|i| (seed.wrapping_add(i) % 97) as f64 / 10.0).collect();
            let before = params.clone();
            let mut state = OptimizerState::new(kind, params.len());
            for _ in 0..steps {
                state.step(&mut params, &vec![0.0; 5], 0.1, Direction::Descend).unwrap();
            }
            prop_assert_eq!(&params, &before);
        }
    }
}
