//! LSTM cell on the autodiff tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::Tensor;

/// Weights of one LSTM cell.
///
/// The four gates are fused: `w_ih` is `[4h, in]`, `w_hh` is `[4h, h]` and
/// `bias` is `[4h]`, with gate order input, forget, cell candidate, output.
/// The forget-gate bias section starts at 1.0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

impl LstmCellParams {
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden_size]);
        for b in &mut bias.data_mut()[hidden_size..2 * hidden_size] {
            *b = 1.0;
        }
        LstmCellParams {
            input_size,
            hidden_size,
            w_ih: Tensor::uniform_init(&[4 * hidden_size, input_size], input_size, rng),
            w_hh: Tensor::uniform_init(&[4 * hidden_size, hidden_size], hidden_size, rng),
            bias,
        }
    }

    /// All-zero weights and biases; used by tests that probe the gate algebra.
    pub fn zeroed(input_size: usize, hidden_size: usize) -> Self {
        LstmCellParams {
            input_size,
            hidden_size,
            w_ih: Tensor::zeros(&[4 * hidden_size, input_size]),
            w_hh: Tensor::zeros(&[4 * hidden_size, hidden_size]),
            bias: Tensor::zeros(&[4 * hidden_size]),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> LstmVars {
        LstmVars {
            hidden_size: self.hidden_size,
            w_ih: tape.leaf(self.w_ih.clone()),
            w_hh: tape.leaf(self.w_hh.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }
}

/// Tape handles for one registered cell.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub hidden_size: usize,
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

/// One step of the standard LSTM recurrence. Returns (hidden, cell).
pub fn lstm_step(tape: &mut Tape, cell: &LstmVars, input: Var, state: (Var, Var)) -> (Var, Var) {
    let h = cell.hidden_size;
    let (prev_h, prev_c) = state;

    let zi = tape.matvec(cell.w_ih, input);
    let zh = tape.matvec(cell.w_hh, prev_h);
    let zs = tape.add(zi, zh);
    let z = tape.add(zs, cell.bias);

    let gi = tape.slice(z, 0, h);
    let gf = tape.slice(z, h, h);
    let gc = tape.slice(z, 2 * h, h);
    let go = tape.slice(z, 3 * h, h);

    let i = tape.sigmoid(gi);
    let f = tape.sigmoid(gf);
    let c_cand = tape.tanh(gc);
    let o = tape.sigmoid(go);

    let keep = tape.mul(f, prev_c);
    let write = tape.mul(i, c_cand);
    let c = tape.add(keep, write);
    let c_act = tape.tanh(c);
    let hidden = tape.mul(o, c_act);
    (hidden, c)
}

/// Zero (hidden, cell) state leaves for a fresh sequence.
pub fn zero_state(tape: &mut Tape, hidden_size: usize) -> (Var, Var) {
    let h = tape.leaf(Tensor::zeros(&[hidden_size]));
    let c = tape.leaf(Tensor::zeros(&[hidden_size]));
    (h, c)
}
