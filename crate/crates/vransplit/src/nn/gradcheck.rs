//! Central finite-difference verification of tape gradients.
//!
//! The checker never calls [`Tape::backward`] on the perturbed evaluations;
//! it compares the analytic gradient of one unperturbed pass against
//! two-sided difference quotients of the forward value, so the two routes
//! stay independent.

use rand::seq::SliceRandom;
use rand::Rng;

use super::attention::{attention_context, AttentionParams};
use super::lstm::{lstm_step, zero_state, LstmCellParams};
use super::mlp::{mlp_forward, MlpParams};
use super::sample::derived_rng;
use super::tape::{Tape, Var};
use super::Tensor;

pub const FD_STEP: f64 = 1e-6;

/// Result of checking one named computation.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    /// (tensor index, coordinate, analytic, finite difference) of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl CheckOutcome {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Relative error with an absolute guard for near-zero gradients.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Compare the tape gradient of `build`'s scalar output against central
/// finite differences on `coords` randomly chosen coordinates of `tensors`.
pub fn check_scalar_fn<F>(
    name: &str,
    tensors: &[Tensor],
    coords: usize,
    seed: u64,
    build: F,
) -> CheckOutcome
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |ts: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ts.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &vars);
        tape.value(root).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &vars);
    let grads = tape.backward(root);
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(tensors)
        .map(|(v, t)| grads.get(*v, t))
        .collect();

    let mut flat: Vec<(usize, usize)> = Vec::new();
    for (ti, t) in tensors.iter().enumerate() {
        for ci in 0..t.len() {
            flat.push((ti, ci));
        }
    }
    let mut rng = derived_rng(seed, 0xC0DE, 0);
    flat.shuffle(&mut rng);
    flat.truncate(coords.min(flat.len()));

    let mut max_rel = 0.0;
    let mut worst = None;
    let mut work: Vec<Tensor> = tensors.to_vec();
    for (ti, ci) in flat.iter().copied() {
        let orig = work[ti].data()[ci];
        work[ti].data_mut()[ci] = orig + FD_STEP;
        let fp = eval(&work);
        work[ti].data_mut()[ci] = orig - FD_STEP;
        let fm = eval(&work);
        work[ti].data_mut()[ci] = orig;
        let fd = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic[ti].data()[ci];
        let e = rel_err(a, fd);
        if e > max_rel {
            max_rel = e;
            worst = Some((ti, ci, a, fd));
        }
    }

    CheckOutcome {
        name: name.to_string(),
        coords_checked: flat.len(),
        max_rel_err: max_rel,
        worst,
    }
}

fn rand_vec(len: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::vector((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Finite-difference checks for every kernel in this module.
///
/// `coords_per_check` coordinates are sampled per entry; whole policy and
/// critic graphs are checked separately in the policy module.
pub fn kernel_suite(seed: u64, coords_per_check: usize) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut rng = derived_rng(seed, 0xFD, 1);

    // Two chained LSTM steps, so gradients flow through the recurrent state.
    {
        let hidden = 6;
        let input = 4;
        let p = LstmCellParams::new(input, hidden, &mut rng);
        let x1 = rand_vec(input, &mut rng);
        let x2 = rand_vec(input, &mut rng);
        let rh = rand_vec(hidden, &mut rng);
        let rc = rand_vec(hidden, &mut rng);
        let tensors = vec![p.w_ih.clone(), p.w_hh.clone(), p.bias.clone(), x1, x2, rh, rc];
        out.push(check_scalar_fn(
            "lstm_step",
            &tensors,
            coords_per_check,
            seed ^ 1,
            |tape, vars| {
                let cell = super::lstm::LstmVars {
                    hidden_size: 6,
                    w_ih: vars[0],
                    w_hh: vars[1],
                    bias: vars[2],
                };
                let st = zero_state(tape, 6);
                let st = lstm_step(tape, &cell, vars[3], st);
                let (h, c) = lstm_step(tape, &cell, vars[4], st);
                let a = tape.dot(vars[5], h);
                let b = tape.dot(vars[6], c);
                tape.add(a, b)
            },
        ));
    }

    // Attention scoring and context over four encoder states.
    {
        let hidden = 5;
        let p = AttentionParams::new(hidden, &mut rng);
        let query = rand_vec(hidden, &mut rng);
        let states: Vec<Tensor> = (0..4).map(|_| rand_vec(hidden, &mut rng)).collect();
        let rctx = rand_vec(hidden, &mut rng);
        let ralign = rand_vec(4, &mut rng);
        let mut tensors = vec![p.w1.clone(), p.w2.clone(), p.v.clone(), query, rctx, ralign];
        tensors.extend(states);
        out.push(check_scalar_fn(
            "attention",
            &tensors,
            coords_per_check,
            seed ^ 2,
            |tape, vars| {
                let attn = super::attention::AttentionVars {
                    w1: vars[0],
                    w2: vars[1],
                    v: vars[2],
                };
                let enc = &vars[6..10];
                let (ctx, align) = attention_context(tape, &attn, vars[3], enc);
                let a = tape.dot(vars[4], ctx);
                let b = tape.dot(vars[5], align);
                tape.add(a, b)
            },
        ));
    }

    // MLP with one tanh hidden layer and scalar output.
    {
        let p = MlpParams::new(&[5, 7, 1], &mut rng);
        let x = rand_vec(5, &mut rng);
        let tensors = vec![
            p.layers[0].weight.clone(),
            p.layers[0].bias.clone(),
            p.layers[1].weight.clone(),
            p.layers[1].bias.clone(),
            x,
        ];
        out.push(check_scalar_fn(
            "mlp",
            &tensors,
            coords_per_check,
            seed ^ 3,
            |tape, vars| {
                let mlp = super::mlp::MlpVars {
                    layers: vec![(vars[0], vars[1]), (vars[2], vars[3])],
                };
                mlp_forward(tape, &mlp, vars[4])
            },
        ));
    }

    // Embedding rows feeding a bilinear readout.
    {
        let table = Tensor::uniform_init(&[6, 5], 5, &mut rng);
        let r1 = rand_vec(5, &mut rng);
        let r2 = rand_vec(5, &mut rng);
        let tensors = vec![table, r1, r2];
        out.push(check_scalar_fn(
            "embedding",
            &tensors,
            coords_per_check,
            seed ^ 4,
            |tape, vars| {
                let e2 = tape.row(vars[0], 2);
                let e5 = tape.row(vars[0], 5);
                let m = tape.mul(e2, e5);
                let t = tape.tanh(m);
                let a = tape.dot(vars[1], t);
                let b = tape.dot(vars[2], e2);
                tape.add(a, b)
            },
        ));
    }

    // Log-softmax pick, the REINFORCE log-likelihood path.
    {
        let logits = rand_vec(4, &mut rng);
        let tensors = vec![logits];
        out.push(check_scalar_fn(
            "softmax_logprob",
            &tensors,
            coords_per_check,
            seed ^ 5,
            |tape, vars| {
                let ls = tape.log_softmax(vars[0]);
                tape.pick(ls, 2)
            },
        ));
    }

    // Composite expression over the remaining primitive ops.
    {
        let a = rand_vec(6, &mut rng);
        let b = rand_vec(6, &mut rng);
        let w = rand_vec(2, &mut rng);
        let tensors = vec![a, b, w];
        out.push(check_scalar_fn(
            "tape_primitives",
            &tensors,
            coords_per_check,
            seed ^ 6,
            |tape, vars| {
                let s = tape.sub(vars[0], vars[1]);
                let m = tape.mul(s, vars[0]);
                let sc = tape.scale(m, 0.5);
                let sg = tape.sigmoid(sc);
                let head = tape.slice(sg, 0, 3);
                let tail = tape.slice(sg, 3, 3);
                let sm = tape.softmax(vars[2]);
                let ws = tape.weighted_sum(sm, &[head, tail]);
                let cat = tape.concat(&[ws, head]);
                let th = tape.tanh(cat);
                let p1 = tape.pick(th, 0);
                let p2 = tape.pick(th, 4);
                let st = tape.stack(&[p1, p2]);
                tape.dot(st, vars[2])
            },
        ));
    }

    out
}
