//! Small MLP head: affine + tanh hidden layers, affine output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<MlpLayer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl MlpParams {
    /// `sizes` runs input -> hidden... -> output, e.g. `[32, 32, 1]`.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "mlp needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| MlpLayer {
                weight: Tensor::uniform_init(&[w[1], w[0]], w[0], rng),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        MlpParams { layers }
    }

    pub fn zeroed(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| MlpLayer {
                weight: Tensor::zeros(&[w[1], w[0]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        MlpParams { layers }
    }

    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

/// Forward pass; tanh between layers, no activation on the last.
pub fn mlp_forward(tape: &mut Tape, mlp: &MlpVars, input: Var) -> Var {
    let mut x = input;
    let last = mlp.layers.len() - 1;
    for (i, (w, b)) in mlp.layers.iter().enumerate() {
        let z = tape.matvec(*w, x);
        let z = tape.add(z, *b);
        x = if i == last { z } else { tape.tanh(z) };
    }
    x
}
