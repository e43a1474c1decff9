//! Batched REINFORCE with a penalized cost and a critic baseline.
//!
//! Each epoch draws a batch of station orderings (and, by default, per-DU
//! load and routing-cost rescalings), rolls the policy out on each, prices
//! the resulting assignments, and updates the agent by the advantage-weighted
//! log-likelihood gradient and the critic by MSE against realized penalized
//! costs. Both updates run through Adam at their own learning rates after a
//! global-norm clip.
//!
//! All randomness is derived statelessly from (seed, epoch, element), so a
//! run is reproducible and resumable from any checkpoint.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Assignment, CostReport, Instance, PenaltyWeights, SplitOption};
use crate::nn::adam::{adam_update, clip_global_norm, AdamState};
use crate::nn::checkpoint::{Checkpoint, ModelState, CHECKPOINT_VERSION};
use crate::nn::sample::{derived_rng, mix_seed};
use crate::nn::Tensor;
use crate::policy::{
    collect_param_grads, critic_forward, featurize, rollout_traced, CriticParameters, DecodeMode,
    FeatureScales, PolicyConfig, PolicyParameters, FEATURE_DIM,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub agent_lr: f64,
    pub critic_lr: f64,
    /// Sampling temperature during training rollouts.
    pub temperature: f64,
    pub seed: u64,
    /// Epochs between checkpoints written by the train command; 0 disables
    /// intermediate checkpoints.
    pub checkpoint_every: usize,
    /// Rescale each DU's traffic and path routing cost by fresh uniform
    /// [0, 1] draws per batch element. Off means fixed-instance training.
    pub randomize_scaling: bool,
    pub grad_clip: f64,
    /// Overrides the instance's penalty weights when set.
    pub penalty_override: Option<PenaltyWeights>,
    pub policy: PolicyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15_000,
            batch_size: 128,
            agent_lr: 0.0001,
            critic_lr: 0.005,
            temperature: 1.0,
            seed: 0,
            checkpoint_every: 1_000,
            randomize_scaling: true,
            grad_clip: 2.0,
            penalty_override: None,
            policy: PolicyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("epochs and batch size must be positive".into()));
        }
        if self.agent_lr <= 0.0 || self.critic_lr <= 0.0 || self.temperature <= 0.0 {
            return Err(Error::Parameter(
                "learning rates and temperature must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch training statistics; one CSV row each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_j: f64,
    pub mean_xi: f64,
    pub mean_l: f64,
    pub critic_loss: f64,
    pub grad_norm: f64,
}

pub const CURVE_CSV_HEADER: &str = "epoch,mean_J,mean_xi,mean_L,critic_loss,grad_norm";

impl EpochRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.mean_j, self.mean_xi, self.mean_l, self.critic_loss, self.grad_norm
        )
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub policy: PolicyParameters,
    pub critic: CriticParameters,
    pub policy_adam: AdamState,
    pub critic_adam: AdamState,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Self {
        let mut rng = derived_rng(config.seed, 0x1217, 0);
        let policy = PolicyParameters::new(config.policy, &mut rng);
        let critic = CriticParameters::new(config.policy.hidden_dim, config.policy.num_layers, &mut rng);
        let policy_adam = AdamState::new(&policy.tensors());
        let critic_adam = AdamState::new(&critic.tensors());
        TrainState {
            policy,
            critic,
            policy_adam,
            critic_adam,
            epoch: 0,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            epoch: self.epoch,
            policy: ModelState {
                params: self.policy.to_named(),
                adam: self.policy_adam.clone(),
            },
            critic: ModelState {
                params: self.critic.to_named(),
                adam: self.critic_adam.clone(),
            },
        }
    }

    pub fn restore(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        self.policy.load_named(&checkpoint.policy.params)?;
        self.critic.load_named(&checkpoint.critic.params)?;
        self.policy_adam = checkpoint.policy.adam.clone();
        self.critic_adam = checkpoint.critic.adam.clone();
        self.epoch = checkpoint.epoch;
        Ok(())
    }
}

/// One batch element: a scaled copy of the instance profiles, a station
/// permutation, and the features the policy will see (in permuted order).
#[derive(Clone, Debug)]
pub struct BatchSample {
    /// position t in the input sequence -> profile index.
    pub permutation: Vec<usize>,
    /// Scaled profiles in canonical DU order.
    pub profiles: Vec<crate::model::BsProfile>,
    pub features: Vec<[f64; FEATURE_DIM]>,
}

/// Seed stream for batch element `i` of `epoch`.
fn element_seed(seed: u64, epoch: usize, i: usize) -> u64 {
    mix_seed(mix_seed(seed, 0xE70C, epoch as u64), 0xB47C, i as u64)
}

/// Draw a batch of independently permuted (and optionally rescaled) views of
/// the instance.
pub fn sample_batch(
    instance: &Instance,
    config: &TrainConfig,
    epoch: usize,
) -> Vec<BatchSample> {
    (0..config.batch_size)
        .map(|i| {
            let mut rng = derived_rng(element_seed(config.seed, epoch, i), 0, 0);
            let n = instance.n_dus();

            let mut profiles = instance.profiles.clone();
            if config.randomize_scaling {
                for p in &mut profiles {
                    p.lambda_mbps *= rng.gen::<f64>();
                    p.route_cost_per_mbps *= rng.gen::<f64>();
                }
            }

            let mut permutation: Vec<usize> = (0..n).collect();
            for t in (1..n).rev() {
                let j = rng.gen_range(0..=t);
                permutation.swap(t, j);
            }

            let scales = FeatureScales::from_profiles(&profiles);
            let permuted: Vec<crate::model::BsProfile> = permutation
                .iter()
                .map(|idx| profiles[*idx].clone())
                .collect();
            let features = featurize(&permuted, &scales);

            BatchSample {
                permutation,
                profiles,
                features,
            }
        })
        .collect()
}

/// Map per-position decisions back to a DU-ordered assignment.
pub fn assignment_from_decisions(permutation: &[usize], decisions: &[usize]) -> Assignment {
    let mut splits = vec![SplitOption::S0; permutation.len()];
    for (t, du_idx) in permutation.iter().enumerate() {
        splits[*du_idx] = SplitOption::from_index(decisions[t]).expect("valid split index");
    }
    Assignment::new(splits)
}

struct ElementOutcome {
    policy_grads: Vec<Tensor>,
    critic_grads: Vec<Tensor>,
    report: CostReport,
    baseline: f64,
}

/// One optimization step over a fresh batch. Returns the epoch statistics;
/// parameters and Adam state advance in place, and `state.epoch` increments.
pub fn train_epoch(
    state: &mut TrainState,
    instance: &Instance,
    config: &TrainConfig,
) -> Result<EpochRecord> {
    let epoch = state.epoch;
    let samples = sample_batch(instance, config, epoch);
    let b = samples.len() as f64;

    let policy = &state.policy;
    let critic = &state.critic;
    let policy_like = policy.tensors();
    let critic_like = critic.tensors();

    let outcomes: Vec<Result<ElementOutcome>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let mut rng = derived_rng(element_seed(config.seed, epoch, i), 0x5A17, 1);
            let (tape, vars, trace) = rollout_traced(
                policy,
                &sample.features,
                DecodeMode::Sample {
                    temperature: config.temperature,
                },
                &mut rng,
            );
            let assignment = assignment_from_decisions(&sample.permutation, &trace.decisions);
            let report = crate::model::evaluate(
                &assignment,
                &sample.profiles,
                &instance.system,
                &instance.topology,
            )?;
            let cost = report.penalized_total;
            if !cost.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite penalized cost at epoch {epoch}"
                )));
            }

            let mut ctape = crate::nn::Tape::new();
            let cvars = critic.register(&mut ctape);
            let value_var = critic_forward(&mut ctape, &cvars, &sample.features);
            let baseline = ctape.value(value_var).item();

            // d/dtheta of (1/B) sum_i (L_i - b_i) log pi_i.
            let advantage = cost - baseline;
            let grads = tape.backward_scaled(trace.total_logp, advantage / b);
            let policy_grads = collect_param_grads(&grads, &vars.param_vars(), &policy.tensors());

            // d/dtheta_v of (1/B) sum_i (b_i - L_i)^2.
            let cgrads = ctape.backward_scaled(value_var, 2.0 * (baseline - cost) / b);
            let critic_grads =
                collect_param_grads(&cgrads, &cvars.param_vars(), &critic.tensors());

            Ok(ElementOutcome {
                policy_grads,
                critic_grads,
                report,
                baseline,
            })
        })
        .collect();

    // Reduce in batch order so results do not depend on thread scheduling.
    let mut policy_grads: Vec<Tensor> =
        policy_like.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut critic_grads: Vec<Tensor> =
        critic_like.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut sum_j = 0.0;
    let mut sum_xi = 0.0;
    let mut sum_l = 0.0;
    let mut critic_loss = 0.0;
    for outcome in outcomes {
        let o = outcome?;
        accumulate(&mut policy_grads, &o.policy_grads);
        accumulate(&mut critic_grads, &o.critic_grads);
        sum_j += o.report.total;
        sum_xi += o.report.penalty;
        sum_l += o.report.penalized_total;
        let err = o.baseline - o.report.penalized_total;
        critic_loss += err * err / b;
    }

    for g in policy_grads.iter().chain(&critic_grads) {
        if !g.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at epoch {epoch}")));
        }
    }

    let grad_norm = clip_global_norm(&mut policy_grads, config.grad_clip);
    clip_global_norm(&mut critic_grads, config.grad_clip);

    adam_update(
        &mut state.policy.tensors_mut(),
        &policy_grads,
        &mut state.policy_adam,
        config.agent_lr,
    );
    adam_update(
        &mut state.critic.tensors_mut(),
        &critic_grads,
        &mut state.critic_adam,
        config.critic_lr,
    );
    state.epoch += 1;

    Ok(EpochRecord {
        epoch,
        mean_j: sum_j / b,
        mean_xi: sum_xi / b,
        mean_l: sum_l / b,
        critic_loss,
        grad_norm,
    })
}

fn accumulate(into: &mut [Tensor], from: &[Tensor]) {
    for (dst, src) in into.iter_mut().zip(from) {
        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d += s;
        }
    }
}

/// Run epochs until `config.epochs`, invoking `sink` after each. The sink
/// handles curve rows and checkpoint cadence.
pub fn train(
    state: &mut TrainState,
    instance: &Instance,
    config: &TrainConfig,
    mut sink: impl FnMut(&EpochRecord, &TrainState) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    let mut instance = instance.clone();
    if let Some(penalty) = config.penalty_override {
        instance.system.penalty = penalty;
    }
    let mut records = Vec::with_capacity(config.epochs.saturating_sub(state.epoch));
    while state.epoch < config.epochs {
        let record = train_epoch(state, &instance, config)?;
        sink(&record, state)?;
        records.push(record);
    }
    Ok(records)
}
