//! The agent: featurize base stations, encode the sequence, decode one split
//! decision per station with attention. Plus the critic baseline network.
//!
//! The decoder is conditioned on the previous decision through a learned
//! embedding with a dedicated start token, its initial state is the encoder's
//! final state, and logits come from an affine projection of the decoder
//! hidden state concatenated with the attention context.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{BsProfile, CostReport};
use crate::nn::attention::{
    attention_context_projected, project_encoder_states, AttentionParams, AttentionVars,
};
use crate::nn::checkpoint::NamedTensors;
use crate::nn::gradcheck::{check_scalar_fn, CheckOutcome};
use crate::nn::lstm::{lstm_step, LstmCellParams, LstmVars};
use crate::nn::mlp::{mlp_forward, MlpParams, MlpVars};
use crate::nn::sample::{argmax, softmax_probs};
use crate::nn::tape::{Grads, Tape, Var};
use crate::nn::Tensor;
use crate::{Error, Result};

pub const FEATURE_DIM: usize = 4;
pub const N_OPTIONS: usize = 4;
/// Decision-embedding row used as the decoder's first input.
pub const START_TOKEN: usize = N_OPTIONS;

/// Instance-wide maxima used to normalize features into [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    pub max_lambda_mbps: f64,
    pub max_delay_us: f64,
    pub max_route_cost: f64,
}

impl FeatureScales {
    pub fn from_profiles(profiles: &[BsProfile]) -> Self {
        let max = |f: fn(&BsProfile) -> f64| profiles.iter().map(f).fold(0.0, f64::max);
        FeatureScales {
            max_lambda_mbps: max(|p| p.lambda_mbps),
            max_delay_us: max(|p| p.route_delay_us),
            max_route_cost: max(|p| p.route_cost_per_mbps),
        }
    }
}

fn guarded(value: f64, max: f64) -> f64 {
    if max > 0.0 {
        value / max
    } else {
        0.0
    }
}

/// Per-station feature vector: normalized traffic, path delay, path routing
/// cost, and DU compute headroom under full decentralization.
pub fn featurize(profiles: &[BsProfile], scales: &FeatureScales) -> Vec<[f64; FEATURE_DIM]> {
    profiles
        .iter()
        .map(|p| {
            let headroom =
                (1.0 - p.lambda_mbps * crate::model::RHO_DU[0] / p.du_capacity).clamp(0.0, 1.0);
            [
                guarded(p.lambda_mbps, scales.max_lambda_mbps),
                guarded(p.route_delay_us, scales.max_delay_us),
                guarded(p.route_cost_per_mbps, scales.max_route_cost),
                headroom,
            ]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            embed_dim: 32,
            hidden_dim: 32,
            num_layers: 1,
        }
    }
}

/// All learnable agent weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub config: PolicyConfig,
    pub embed: Tensor,
    pub encoder: Vec<LstmCellParams>,
    pub decoder: Vec<LstmCellParams>,
    pub decision_embed: Tensor,
    pub attention: AttentionParams,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl PolicyParameters {
    pub fn new(config: PolicyConfig, rng: &mut impl Rng) -> Self {
        let h = config.hidden_dim;
        let e = config.embed_dim;
        let encoder = (0..config.num_layers)
            .map(|l| LstmCellParams::new(if l == 0 { e } else { h }, h, rng))
            .collect();
        let decoder = (0..config.num_layers)
            .map(|l| LstmCellParams::new(if l == 0 { e } else { h }, h, rng))
            .collect();
        PolicyParameters {
            config,
            embed: Tensor::uniform_init(&[e, FEATURE_DIM], FEATURE_DIM, rng),
            encoder,
            decoder,
            decision_embed: Tensor::uniform_init(&[N_OPTIONS + 1, e], e, rng),
            attention: AttentionParams::new(h, rng),
            head_w: Tensor::uniform_init(&[N_OPTIONS, 2 * h], 2 * h, rng),
            head_b: Tensor::zeros(&[N_OPTIONS]),
        }
    }

    /// Scoped parameter names, aligned with [`Self::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embed.w".to_string()];
        for l in 0..self.encoder.len() {
            names.push(format!("enc.l{l}.w_ih"));
            names.push(format!("enc.l{l}.w_hh"));
            names.push(format!("enc.l{l}.bias"));
        }
        names.push("dec.embed".to_string());
        for l in 0..self.decoder.len() {
            names.push(format!("dec.l{l}.w_ih"));
            names.push(format!("dec.l{l}.w_hh"));
            names.push(format!("dec.l{l}.bias"));
        }
        names.push("attn.w1".to_string());
        names.push("attn.w2".to_string());
        names.push("attn.v".to_string());
        names.push("head.w".to_string());
        names.push("head.b".to_string());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embed];
        for c in &self.encoder {
            out.extend([&c.w_ih, &c.w_hh, &c.bias]);
        }
        out.push(&self.decision_embed);
        for c in &self.decoder {
            out.extend([&c.w_ih, &c.w_hh, &c.bias]);
        }
        out.extend([
            &self.attention.w1,
            &self.attention.w2,
            &self.attention.v,
            &self.head_w,
            &self.head_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed];
        for c in &mut self.encoder {
            out.extend([&mut c.w_ih, &mut c.w_hh, &mut c.bias]);
        }
        out.push(&mut self.decision_embed);
        for c in &mut self.decoder {
            out.extend([&mut c.w_ih, &mut c.w_hh, &mut c.bias]);
        }
        out.extend([
            &mut self.attention.w1,
            &mut self.attention.w2,
            &mut self.attention.v,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    pub fn to_named(&self) -> NamedTensors {
        NamedTensors::new(&self.names(), &self.tensors())
    }

    pub fn load_named(&mut self, named: &NamedTensors) -> Result<()> {
        load_into(self.names(), self.tensors_mut(), named)
    }

    pub fn register(&self, tape: &mut Tape) -> PolicyVars {
        PolicyVars {
            config: self.config,
            embed: tape.leaf(self.embed.clone()),
            encoder: self.encoder.iter().map(|c| c.register(tape)).collect(),
            decision_embed: tape.leaf(self.decision_embed.clone()),
            decoder: self.decoder.iter().map(|c| c.register(tape)).collect(),
            attention: self.attention.register(tape),
            head_w: tape.leaf(self.head_w.clone()),
            head_b: tape.leaf(self.head_b.clone()),
        }
    }
}

fn load_into(names: Vec<String>, tensors: Vec<&mut Tensor>, named: &NamedTensors) -> Result<()> {
    for (name, tensor) in names.iter().zip(tensors) {
        let loaded = named
            .get(name)
            .ok_or_else(|| Error::Input(format!("checkpoint missing parameter {name}")))?;
        if loaded.shape() != tensor.shape() {
            return Err(Error::Input(format!(
                "checkpoint parameter {name} has shape {:?}, expected {:?}",
                loaded.shape(),
                tensor.shape()
            )));
        }
        *tensor = loaded.clone();
    }
    Ok(())
}

/// Tape handles for registered policy parameters, in registration order.
pub struct PolicyVars {
    pub config: PolicyConfig,
    pub embed: Var,
    pub encoder: Vec<LstmVars>,
    pub decision_embed: Var,
    pub decoder: Vec<LstmVars>,
    pub attention: AttentionVars,
    pub head_w: Var,
    pub head_b: Var,
}

impl PolicyVars {
    /// Vars in the same canonical order as [`PolicyParameters::tensors`].
    pub fn param_vars(&self) -> Vec<Var> {
        let mut out = vec![self.embed];
        for c in &self.encoder {
            out.extend([c.w_ih, c.w_hh, c.bias]);
        }
        out.push(self.decision_embed);
        for c in &self.decoder {
            out.extend([c.w_ih, c.w_hh, c.bias]);
        }
        out.extend([
            self.attention.w1,
            self.attention.w2,
            self.attention.v,
            self.head_w,
            self.head_b,
        ]);
        out
    }

    /// Rebuild handles from a flat var list in canonical order; the
    /// gradient checker drives whole-graph checks through this.
    pub fn from_vars(config: PolicyConfig, vars: &[Var]) -> PolicyVars {
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("var list too short");
        let embed = next();
        let encoder = (0..config.num_layers)
            .map(|_| LstmVars {
                hidden_size: config.hidden_dim,
                w_ih: next(),
                w_hh: next(),
                bias: next(),
            })
            .collect();
        let decision_embed = next();
        let decoder = (0..config.num_layers)
            .map(|_| LstmVars {
                hidden_size: config.hidden_dim,
                w_ih: next(),
                w_hh: next(),
                bias: next(),
            })
            .collect();
        PolicyVars {
            config,
            embed,
            encoder,
            decision_embed,
            decoder,
            attention: AttentionVars {
                w1: next(),
                w2: next(),
                v: next(),
            },
            head_w: next(),
            head_b: next(),
        }
    }
}

/// Encoder output: top-layer hidden state per station plus the final
/// (hidden, cell) pair of every layer for the decoder handoff.
pub struct Encoding {
    pub states: Vec<Var>,
    pub final_states: Vec<(Var, Var)>,
}

/// Run the stacked LSTM encoder over embedded features.
pub fn encode(tape: &mut Tape, vars: &PolicyVars, features: &[[f64; FEATURE_DIM]]) -> Encoding {
    assert!(!features.is_empty(), "encode needs at least one station");
    let h = vars.config.hidden_dim;
    let mut layer_states: Vec<(Var, Var)> = (0..vars.encoder.len())
        .map(|_| crate::nn::lstm::zero_state(tape, h))
        .collect();
    let mut states = Vec::with_capacity(features.len());
    for f in features {
        let x = tape.leaf(Tensor::vector(f.to_vec()));
        let mut input = tape.matvec(vars.embed, x);
        for (l, cell) in vars.encoder.iter().enumerate() {
            let st = lstm_step(tape, cell, input, layer_states[l]);
            layer_states[l] = st;
            input = st.0;
        }
        states.push(input);
    }
    Encoding {
        states,
        final_states: layer_states,
    }
}

/// How decisions are drawn during decoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64 },
}

/// One decoded assignment in the order the stations were presented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// Split option index per step.
    pub decisions: Vec<usize>,
    /// Log-probability of each decision under the temperature-1 policy.
    pub step_logps: Vec<f64>,
    pub total_logp: f64,
    pub report: Option<CostReport>,
}

/// Tape-level decode result; `total_logp` stays differentiable.
pub struct RolloutTrace {
    pub decisions: Vec<usize>,
    pub step_logps: Vec<f64>,
    pub total_logp: Var,
}

/// Decode one split decision per station.
///
/// Step t embeds decision t-1 (start token first), advances the decoder
/// LSTM, attends over the encoder states, projects (hidden ++ context) to
/// four logits and draws per `mode`. Log-probabilities accumulate under the
/// temperature-1 policy so the product rule over steps holds exactly.
pub fn decode_rollout(
    tape: &mut Tape,
    vars: &PolicyVars,
    encoding: &Encoding,
    mode: DecodeMode,
    rng: &mut impl Rng,
) -> RolloutTrace {
    let projected = project_encoder_states(tape, &vars.attention, &encoding.states);
    let mut layer_states = encoding.final_states.clone();
    let mut prev = START_TOKEN;
    let mut decisions = Vec::with_capacity(encoding.states.len());
    let mut step_logps = Vec::with_capacity(encoding.states.len());
    let mut total_logp = tape.scalar(0.0);

    for _ in 0..encoding.states.len() {
        let mut input = tape.row(vars.decision_embed, prev);
        for (l, cell) in vars.decoder.iter().enumerate() {
            let st = lstm_step(tape, cell, input, layer_states[l]);
            layer_states[l] = st;
            input = st.0;
        }
        let query = input;
        let (context, _alignment) = attention_context_projected(
            tape,
            &vars.attention,
            query,
            &projected,
            &encoding.states,
        );
        let joint = tape.concat(&[query, context]);
        let proj = tape.matvec(vars.head_w, joint);
        let logits = tape.add(proj, vars.head_b);

        let chosen = match mode {
            DecodeMode::Greedy => argmax(tape.value(logits).data()),
            DecodeMode::Sample { temperature } => {
                let probs = softmax_probs(tape.value(logits).data(), temperature);
                let u: f64 = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut idx = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                idx
            }
        };

        let logp_vec = tape.log_softmax(logits);
        let logp = tape.pick(logp_vec, chosen);
        total_logp = tape.add(total_logp, logp);
        step_logps.push(tape.value(logp).item());
        decisions.push(chosen);
        prev = chosen;
    }

    RolloutTrace {
        decisions,
        step_logps,
        total_logp,
    }
}

/// Log-probability of a fixed decision sequence (teacher forcing); used by
/// the whole-graph gradient checks and the estimator tests.
pub fn logprob_of_decisions(
    tape: &mut Tape,
    vars: &PolicyVars,
    features: &[[f64; FEATURE_DIM]],
    decisions: &[usize],
) -> Var {
    let encoding = encode(tape, vars, features);
    let projected = project_encoder_states(tape, &vars.attention, &encoding.states);
    let mut layer_states = encoding.final_states.clone();
    let mut prev = START_TOKEN;
    let mut total = tape.scalar(0.0);
    for &chosen in decisions {
        let mut input = tape.row(vars.decision_embed, prev);
        for (l, cell) in vars.decoder.iter().enumerate() {
            let st = lstm_step(tape, cell, input, layer_states[l]);
            layer_states[l] = st;
            input = st.0;
        }
        let (context, _) = attention_context_projected(
            tape,
            &vars.attention,
            input,
            &projected,
            &encoding.states,
        );
        let joint = tape.concat(&[input, context]);
        let proj = tape.matvec(vars.head_w, joint);
        let logits = tape.add(proj, vars.head_b);
        let logp_vec = tape.log_softmax(logits);
        let logp = tape.pick(logp_vec, chosen);
        total = tape.add(total, logp);
        prev = chosen;
    }
    total
}

/// Convenience: full traced rollout on a fresh tape.
pub fn rollout_traced(
    params: &PolicyParameters,
    features: &[[f64; FEATURE_DIM]],
    mode: DecodeMode,
    rng: &mut impl Rng,
) -> (Tape, PolicyVars, RolloutTrace) {
    let mut tape = Tape::with_capacity(64 + features.len() * 64);
    let vars = params.register(&mut tape);
    let encoding = encode(&mut tape, &vars, features);
    let trace = decode_rollout(&mut tape, &vars, &encoding, mode, rng);
    (tape, vars, trace)
}

/// Value-only rollout.
pub fn rollout(
    params: &PolicyParameters,
    features: &[[f64; FEATURE_DIM]],
    mode: DecodeMode,
    rng: &mut impl Rng,
) -> Rollout {
    let (tape, _, trace) = rollout_traced(params, features, mode, rng);
    Rollout {
        decisions: trace.decisions,
        step_logps: trace.step_logps,
        total_logp: tape.value(trace.total_logp).item(),
        report: None,
    }
}

/// Per-step probability table of the policy on an instance, computed by
/// teacher forcing each prefix; used by distribution tests.
pub fn step_distribution(
    params: &PolicyParameters,
    features: &[[f64; FEATURE_DIM]],
    prefix: &[usize],
) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let encoding = encode(&mut tape, &vars, features);
    let projected = project_encoder_states(&mut tape, &vars.attention, &encoding.states);
    let mut layer_states = encoding.final_states.clone();
    let mut prev = START_TOKEN;
    for t in 0..=prefix.len() {
        let mut input = tape.row(vars.decision_embed, prev);
        for (l, cell) in vars.decoder.iter().enumerate() {
            let st = lstm_step(&mut tape, cell, input, layer_states[l]);
            layer_states[l] = st;
            input = st.0;
        }
        let (context, _) = attention_context_projected(
            &mut tape,
            &vars.attention,
            input,
            &projected,
            &encoding.states,
        );
        let joint = tape.concat(&[input, context]);
        let proj = tape.matvec(vars.head_w, joint);
        let logits = tape.add(proj, vars.head_b);
        if t == prefix.len() {
            return softmax_probs(tape.value(logits).data(), 1.0);
        }
        prev = prefix[t];
    }
    unreachable!()
}

/// Critic configuration and weights: LSTM over raw features, MLP head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticParameters {
    pub hidden_dim: usize,
    pub encoder: Vec<LstmCellParams>,
    pub mlp: MlpParams,
}

impl CriticParameters {
    pub fn new(hidden_dim: usize, num_layers: usize, rng: &mut impl Rng) -> Self {
        let encoder = (0..num_layers)
            .map(|l| LstmCellParams::new(if l == 0 { FEATURE_DIM } else { hidden_dim }, hidden_dim, rng))
            .collect();
        CriticParameters {
            hidden_dim,
            encoder,
            mlp: MlpParams::new(&[hidden_dim, hidden_dim, 1], rng),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.encoder.len() {
            names.push(format!("critic.enc.l{l}.w_ih"));
            names.push(format!("critic.enc.l{l}.w_hh"));
            names.push(format!("critic.enc.l{l}.bias"));
        }
        for l in 0..self.mlp.layers.len() {
            names.push(format!("critic.mlp.l{l}.w"));
            names.push(format!("critic.mlp.l{l}.b"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in &self.encoder {
            out.extend([&c.w_ih, &c.w_hh, &c.bias]);
        }
        for l in &self.mlp.layers {
            out.extend([&l.weight, &l.bias]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for c in &mut self.encoder {
            out.extend([&mut c.w_ih, &mut c.w_hh, &mut c.bias]);
        }
        for l in &mut self.mlp.layers {
            out.extend([&mut l.weight, &mut l.bias]);
        }
        out
    }

    pub fn to_named(&self) -> NamedTensors {
        NamedTensors::new(&self.names(), &self.tensors())
    }

    pub fn load_named(&mut self, named: &NamedTensors) -> Result<()> {
        load_into(self.names(), self.tensors_mut(), named)
    }

    pub fn register(&self, tape: &mut Tape) -> CriticVars {
        CriticVars {
            hidden_dim: self.hidden_dim,
            encoder: self.encoder.iter().map(|c| c.register(tape)).collect(),
            mlp: self.mlp.register(tape),
        }
    }
}

pub struct CriticVars {
    pub hidden_dim: usize,
    pub encoder: Vec<LstmVars>,
    pub mlp: MlpVars,
}

impl CriticVars {
    pub fn param_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for c in &self.encoder {
            out.extend([c.w_ih, c.w_hh, c.bias]);
        }
        for (w, b) in &self.mlp.layers {
            out.extend([*w, *b]);
        }
        out
    }

    pub fn from_vars(hidden_dim: usize, num_layers: usize, n_mlp_layers: usize, vars: &[Var]) -> CriticVars {
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("var list too short");
        let encoder = (0..num_layers)
            .map(|_| LstmVars {
                hidden_size: hidden_dim,
                w_ih: next(),
                w_hh: next(),
                bias: next(),
            })
            .collect();
        let mlp = MlpVars {
            layers: (0..n_mlp_layers).map(|_| (next(), next())).collect(),
        };
        CriticVars {
            hidden_dim,
            encoder,
            mlp,
        }
    }
}

/// Critic forward pass on a tape; returns the scalar prediction var.
pub fn critic_forward(
    tape: &mut Tape,
    vars: &CriticVars,
    features: &[[f64; FEATURE_DIM]],
) -> Var {
    assert!(!features.is_empty(), "critic needs at least one station");
    let mut layer_states: Vec<(Var, Var)> = (0..vars.encoder.len())
        .map(|_| crate::nn::lstm::zero_state(tape, vars.hidden_dim))
        .collect();
    for f in features {
        let mut input = tape.leaf(Tensor::vector(f.to_vec()));
        for (l, cell) in vars.encoder.iter().enumerate() {
            let st = lstm_step(tape, cell, input, layer_states[l]);
            layer_states[l] = st;
            input = st.0;
        }
    }
    let final_hidden = layer_states.last().unwrap().0;
    mlp_forward(tape, &vars.mlp, final_hidden)
}

/// Value-only critic evaluation.
pub fn critic_value(params: &CriticParameters, features: &[[f64; FEATURE_DIM]]) -> f64 {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = critic_forward(&mut tape, &vars, features);
    tape.value(out).item()
}

/// Pull gradients for a parameter list out of a backward pass.
pub fn collect_param_grads(grads: &Grads, vars: &[Var], like: &[&Tensor]) -> Vec<Tensor> {
    vars.iter()
        .zip(like)
        .map(|(v, t)| grads.get(*v, t))
        .collect()
}

/// Whole-graph finite-difference checks for the policy and critic.
pub fn graph_checks(seed: u64, coords_per_check: usize) -> Vec<CheckOutcome> {
    let mut rng = crate::nn::sample::derived_rng(seed, 0x90AC, 7);
    let config = PolicyConfig {
        embed_dim: 8,
        hidden_dim: 8,
        num_layers: 1,
    };
    let features: Vec<[f64; FEATURE_DIM]> = (0..3)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
        .collect();
    let decisions = vec![1usize, 3, 0];

    let mut out = Vec::new();
    {
        let policy = PolicyParameters::new(config, &mut rng);
        let tensors: Vec<Tensor> = policy.tensors().into_iter().cloned().collect();
        let feats = features.clone();
        let dec = decisions.clone();
        out.push(check_scalar_fn(
            "policy_graph",
            &tensors,
            coords_per_check,
            seed ^ 21,
            move |tape, vars| {
                let pv = PolicyVars::from_vars(config, vars);
                logprob_of_decisions(tape, &pv, &feats, &dec)
            },
        ));
    }
    {
        let critic = CriticParameters::new(8, 1, &mut rng);
        let tensors: Vec<Tensor> = critic.tensors().into_iter().cloned().collect();
        let feats = features;
        out.push(check_scalar_fn(
            "critic_graph",
            &tensors,
            coords_per_check,
            seed ^ 22,
            move |tape, vars| {
                let cv = CriticVars::from_vars(8, 1, 2, vars);
                critic_forward(tape, &cv, &feats)
            },
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, ScenarioConfig};
    use crate::nn::sample::derived_rng;
    use crate::topology::{generate_waxman, WaxmanConfig};
    use approx::assert_relative_eq;

    fn small_policy(seed: u64) -> PolicyParameters {
        let mut rng = derived_rng(seed, 1, 1);
        PolicyParameters::new(
            PolicyConfig {
                embed_dim: 8,
                hidden_dim: 8,
                num_layers: 1,
            },
            &mut rng,
        )
    }

    fn test_profiles(n_nodes: usize, seed: u64) -> Vec<BsProfile> {
        let mut topo =
            generate_waxman(&WaxmanConfig { n_nodes, ..WaxmanConfig::default() }, seed).unwrap();
        topo.rescale_max_path_delay(3_658.61);
        build_instance(topo, &ScenarioConfig::default()).unwrap().profiles
    }

    #[test]
    fn featurize_normalizes_by_instance_maxima() {
        let profiles = test_profiles(10, 3);
        let scales = FeatureScales::from_profiles(&profiles);
        let features = featurize(&profiles, &scales);
        // Uniform traffic means every traffic component is exactly 1.
        assert!(features.iter().all(|f| f[0] == 1.0));
        // The DU with the longest path carries delay component 1.
        let max_delay = features.iter().map(|f| f[1]).fold(0.0, f64::max);
        assert_eq!(max_delay, 1.0);
        for f in &features {
            for c in f {
                assert!((0.0..=1.0).contains(c), "component {c}");
            }
        }
    }

    #[test]
    fn features_invariant_to_cost_unit_rescaling() {
        let profiles = test_profiles(8, 4);
        let scaled: Vec<BsProfile> = profiles
            .iter()
            .map(|p| BsProfile {
                vm_cost: p.vm_cost * 37.0,
                compute_cost: p.compute_cost * 37.0,
                route_cost_per_mbps: p.route_cost_per_mbps * 37.0,
                ..p.clone()
            })
            .collect();
        let f1 = featurize(&profiles, &FeatureScales::from_profiles(&profiles));
        let f2 = featurize(&scaled, &FeatureScales::from_profiles(&scaled));
        for (a, b) in f1.iter().zip(&f2) {
            for (x, y) in a.iter().zip(b) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_maxima_guarded() {
        let mut profiles = test_profiles(5, 5);
        for p in &mut profiles {
            p.lambda_mbps = 0.0;
            p.route_cost_per_mbps = 0.0;
        }
        let scales = FeatureScales::from_profiles(&profiles);
        let features = featurize(&profiles, &scales);
        assert!(features.iter().all(|f| f[0] == 0.0 && f[2] == 0.0));
    }

    #[test]
    fn single_station_encoding_matches_manual_step() {
        let policy = small_policy(7);
        let feature = [[0.3, 0.6, 0.1, 0.9]];

        let mut tape = Tape::new();
        let vars = policy.register(&mut tape);
        let enc = encode(&mut tape, &vars, &feature);
        let got = tape.value(enc.states[0]).data().to_vec();

        let mut tape2 = Tape::new();
        let cell = policy.encoder[0].register(&mut tape2);
        let embed = tape2.leaf(policy.embed.clone());
        let x = tape2.leaf(Tensor::vector(feature[0].to_vec()));
        let e = tape2.matvec(embed, x);
        let st = crate::nn::lstm::zero_state(&mut tape2, 8);
        let (h, _) = lstm_step(&mut tape2, &cell, e, st);
        assert_eq!(got, tape2.value(h).data());
    }

    #[test]
    fn permuted_inputs_change_the_encoding() {
        let policy = small_policy(8);
        let features = vec![
            [0.1, 0.2, 0.3, 0.4],
            [0.9, 0.8, 0.7, 0.6],
            [0.5, 0.5, 0.5, 0.5],
        ];
        let mut permuted = features.clone();
        permuted.swap(0, 2);

        let mut t1 = Tape::new();
        let v1 = policy.register(&mut t1);
        let e1 = encode(&mut t1, &v1, &features);
        let mut t2 = Tape::new();
        let v2 = policy.register(&mut t2);
        let e2 = encode(&mut t2, &v2, &permuted);
        assert_ne!(
            t1.value(e1.final_states[0].0).data(),
            t2.value(e2.final_states[0].0).data()
        );
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let mut policy = small_policy(9);
        for t in policy.tensors_mut() {
            *t = Tensor::zeros(t.shape());
        }
        let mut tape = Tape::new();
        let vars = policy.register(&mut tape);
        let enc = encode(&mut tape, &vars, &[[0.5; 4], [0.2, 0.9, 0.1, 0.7]]);
        for s in &enc.states {
            assert!(tape.value(*s).data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn greedy_decoding_is_deterministic() {
        let policy = small_policy(10);
        let features = vec![[0.2, 0.4, 0.6, 0.8], [0.9, 0.1, 0.5, 0.3]];
        let mut rng = derived_rng(0, 0, 0);
        let a = rollout(&policy, &features, DecodeMode::Greedy, &mut rng);
        let b = rollout(&policy, &features, DecodeMode::Greedy, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn logprob_is_sum_of_steps_and_probability_valid() {
        let policy = small_policy(11);
        let features = vec![[0.2, 0.4, 0.6, 0.8], [0.9, 0.1, 0.5, 0.3], [0.4; 4]];
        let mut rng = derived_rng(3, 1, 4);
        for _ in 0..20 {
            let r = rollout(
                &policy,
                &features,
                DecodeMode::Sample { temperature: 1.0 },
                &mut rng,
            );
            let sum: f64 = r.step_logps.iter().sum();
            assert_relative_eq!(r.total_logp, sum, epsilon = 1e-12);
            let p = r.total_logp.exp();
            assert!(p > 0.0 && p <= 1.0);
        }
    }

    #[test]
    fn zero_projection_weights_give_uniform_policy() {
        let mut policy = small_policy(12);
        policy.head_w = Tensor::zeros(policy.head_w.shape());
        policy.head_b = Tensor::zeros(policy.head_b.shape());
        let features = vec![[0.1; 4], [0.9; 4], [0.4, 0.2, 0.7, 0.3]];
        let mut rng = derived_rng(5, 5, 5);
        let r = rollout(
            &policy,
            &features,
            DecodeMode::Sample { temperature: 1.0 },
            &mut rng,
        );
        let expected = (features.len() as f64) * (0.25f64).ln();
        assert_relative_eq!(r.total_logp, expected, epsilon = 1e-10);
    }

    #[test]
    fn greedy_is_mode_of_each_step_distribution() {
        let policy = small_policy(13);
        let features = vec![[0.3, 0.1, 0.8, 0.5], [0.6, 0.9, 0.2, 0.4]];
        let mut rng = derived_rng(0, 0, 0);
        let greedy = rollout(&policy, &features, DecodeMode::Greedy, &mut rng);
        let mut prefix = Vec::new();
        for (t, d) in greedy.decisions.iter().enumerate() {
            let dist = step_distribution(&policy, &features, &prefix);
            let best = crate::nn::sample::argmax(&dist);
            assert_eq!(*d, best, "step {t}");
            prefix.push(*d);
        }
    }

    #[test]
    fn sampled_rollouts_match_step_distributions() {
        // Chi-square over the 16 joint outcomes of a 2-station fixture.
        let policy = small_policy(14);
        let features = vec![[0.3, 0.1, 0.8, 0.5], [0.6, 0.9, 0.2, 0.4]];

        let mut expected = vec![0.0; 16];
        let first = step_distribution(&policy, &features, &[]);
        for a in 0..4 {
            let second = step_distribution(&policy, &features, &[a]);
            for b in 0..4 {
                expected[a * 4 + b] = first[a] * second[b];
            }
        }

        let draws = 100_000;
        let mut counts = vec![0usize; 16];
        let mut rng = derived_rng(15, 0, 0);
        for _ in 0..draws {
            let r = rollout(
                &policy,
                &features,
                DecodeMode::Sample { temperature: 1.0 },
                &mut rng,
            );
            counts[r.decisions[0] * 4 + r.decisions[1]] += 1;
        }
        let chi2: f64 = (0..16)
            .map(|k| {
                let e = expected[k] * draws as f64;
                let d = counts[k] as f64 - e;
                d * d / e
            })
            .sum();
        // 15 degrees of freedom, 5% critical value.
        assert!(chi2 < 24.996, "chi2 = {chi2}");
    }

    #[test]
    fn critic_zero_parameters_give_zero() {
        let mut rng = derived_rng(16, 0, 0);
        let mut critic = CriticParameters::new(8, 1, &mut rng);
        for t in critic.tensors_mut() {
            *t = Tensor::zeros(t.shape());
        }
        let v = critic_value(&critic, &[[0.4; 4], [0.6; 4]]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn critic_prediction_is_finite_scalar() {
        let mut rng = derived_rng(17, 0, 0);
        let critic = CriticParameters::new(8, 1, &mut rng);
        let v = critic_value(&critic, &[[0.4; 4], [0.6; 4], [0.1; 4]]);
        assert!(v.is_finite());
    }

    #[test]
    fn whole_graph_gradients_match_finite_differences() {
        for outcome in graph_checks(31, 64) {
            assert!(
                outcome.passes(1e-5),
                "{}: max rel err {} at {:?}",
                outcome.name,
                outcome.max_rel_err,
                outcome.worst
            );
        }
    }

    #[test]
    fn checkpoint_names_round_trip() {
        let policy = small_policy(18);
        let named = policy.to_named();
        assert!(named.get("embed.w").is_some());
        assert!(named.get("enc.l0.w_ih").is_some());
        assert!(named.get("dec.embed").is_some());
        assert!(named.get("attn.v").is_some());
        assert!(named.get("head.w").is_some());

        let mut other = small_policy(19);
        assert_ne!(other.tensors()[0], policy.tensors()[0]);
        other.load_named(&named).unwrap();
        assert_eq!(other, policy);

        let mut rng = derived_rng(20, 0, 0);
        let critic = CriticParameters::new(8, 1, &mut rng);
        let cn = critic.to_named();
        assert!(cn.get("critic.enc.l0.w_ih").is_some());
        assert!(cn.get("critic.mlp.l0.w").is_some());
        let mut other_c = CriticParameters::new(8, 1, &mut rng);
        other_c.load_named(&cn).unwrap();
        assert_eq!(other_c, critic);
    }
}
