//! Adversarial training of the belief network against the critic.
//!
//! Real batches give the critic gradient `mean φ′(f(x)) ∂f/∂ρ` and nothing
//! for the generator. Generated batches use the log-derivative identity
//! `∂ E[ψ(f(Y))]/∂θ = E[ψ(f(hᴸ)) ∂ log p(h)/∂θ]`, estimated by a sample
//! mean over whole chains, so no gradient flows through the sampler.

mod estimator;
mod loss;
mod trainer;

pub use estimator::{
    fake_batch_grad, fake_grads, fake_input, real_batch_grad, real_rho_grad, sample_chains, FakeGradOptions, FakeGrads,
    GradEstimate,
};
pub use loss::{make_loss_pair, LossKind, LossPair, DEFAULT_CLIP, LOG_EPS};
pub use trainer::{
    exact_generator_grad, exact_objective, metrics_csv, MetricRow, TrainConfig, TrainerState, TrainingData,
};
