//! Additive (Bahdanau-style) attention scoring.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::Tensor;

/// Weights for additive attention: score_k = v . tanh(w1 q + w2 e_k).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub hidden_size: usize,
    pub w1: Tensor,
    pub w2: Tensor,
    pub v: Tensor,
}

impl AttentionParams {
    pub fn new(hidden_size: usize, rng: &mut impl Rng) -> Self {
        AttentionParams {
            hidden_size,
            w1: Tensor::uniform_init(&[hidden_size, hidden_size], hidden_size, rng),
            w2: Tensor::uniform_init(&[hidden_size, hidden_size], hidden_size, rng),
            v: Tensor::uniform_init(&[hidden_size], hidden_size, rng),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> AttentionVars {
        AttentionVars {
            w1: tape.leaf(self.w1.clone()),
            w2: tape.leaf(self.w2.clone()),
            v: tape.leaf(self.v.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub w1: Var,
    pub w2: Var,
    pub v: Var,
}

/// Project encoder states through w2 once per sequence; the projections are
/// reused by every decoder step.
pub fn project_encoder_states(
    tape: &mut Tape,
    attn: &AttentionVars,
    encoder_states: &[Var],
) -> Vec<Var> {
    encoder_states
        .iter()
        .map(|e| tape.matvec(attn.w2, *e))
        .collect()
}

/// Context vector and alignment for one query against projected encoder
/// states. `encoder_states` are the raw states used to form the context.
pub fn attention_context_projected(
    tape: &mut Tape,
    attn: &AttentionVars,
    query: Var,
    projected: &[Var],
    encoder_states: &[Var],
) -> (Var, Var) {
    assert!(!encoder_states.is_empty(), "attention over empty sequence");
    let q = tape.matvec(attn.w1, query);
    let scores: Vec<Var> = projected
        .iter()
        .map(|p| {
            let pre = tape.add(q, *p);
            let act = tape.tanh(pre);
            tape.dot(attn.v, act)
        })
        .collect();
    let score_vec = tape.stack(&scores);
    let alignment = tape.softmax(score_vec);
    let context = tape.weighted_sum(alignment, encoder_states);
    (context, alignment)
}

/// Convenience form that projects the encoder states internally.
pub fn attention_context(
    tape: &mut Tape,
    attn: &AttentionVars,
    query: Var,
    encoder_states: &[Var],
) -> (Var, Var) {
    let projected = project_encoder_states(tape, attn, encoder_states);
    attention_context_projected(tape, attn, query, &projected, encoder_states)
}
