//! Reverse-mode autodiff over a recorded operation sequence.
//!
//! A [`Tape`] owns every intermediate value of one forward computation.
//! Operations append a node and return a [`Var`] handle; [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints. Values are checked
//! for finiteness as they are produced, so a NaN or Inf fails at the op that
//! created it instead of surfacing later as a corrupted update.

use super::Tensor;

/// Handle to a value on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Matrix-vector product.
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product.
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    /// Contiguous sub-vector: (source, start, len).
    Slice(Var, usize, usize),
    Concat(Vec<Var>),
    /// Row of a matrix, used as embedding lookup.
    Row(Var, usize),
    Softmax(Var),
    LogSoftmax(Var),
    /// Single element of a vector as a scalar.
    Pick(Var, usize),
    /// Scalars stacked into a vector.
    Stack(Vec<Var>),
    /// weights[k] * items[k] summed over k; items are equal-length vectors.
    WeightedSum(Var, Vec<Var>),
    Dot(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Grads {
    by_var: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of the loss w.r.t. `var`; zeros if the var was unused.
    pub fn get(&self, var: Var, like: &Tensor) -> Tensor {
        match &self.by_var[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(like.shape()),
        }
    }

    pub fn get_opt(&self, var: Var) -> Option<&Tensor> {
        self.by_var[var.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        assert!(
            value.all_finite(),
            "non-finite value produced by {:?}",
            op
        );
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Insert a value with no parents (input or parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> Var {
        let (mt, xt) = (&self.nodes[m.0].value, &self.nodes[x.0].value);
        let (rows, cols) = (mt.rows(), mt.cols());
        assert_eq!(cols, xt.len(), "matvec: {}x{} times {}", rows, cols, xt.len());
        let md = mt.data();
        let xd = xt.data();
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let row = &md[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for c in 0..cols {
                acc += row[c] * xd[c];
            }
            out[r] = acc;
        }
        self.push(Tensor::vector(out), Op::MatVec(m, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(at.len(), bt.len(), "add: length mismatch");
        let out = at.data().iter().zip(bt.data()).map(|(x, y)| x + y).collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(at.len(), bt.len(), "sub: length mismatch");
        let out = at.data().iter().zip(bt.data()).map(|(x, y)| x - y).collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(at.len(), bt.len(), "mul: length mismatch");
        let out = at.data().iter().zip(bt.data()).map(|(x, y)| x * y).collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let at = &self.nodes[a.0].value;
        let out = at.data().iter().map(|x| x * c).collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let out = at.data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let out = at.data().iter().map(|x| x.tanh()).collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Tanh(a))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let at = &self.nodes[a.0].value;
        assert!(start + len <= at.len(), "slice out of bounds");
        let out = at.data()[start..start + len].to_vec();
        self.push(Tensor::vector(out), Op::Slice(a, start, len))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.nodes[p.0].value.data());
        }
        self.push(Tensor::vector(out), Op::Concat(parts.to_vec()))
    }

    pub fn row(&mut self, m: Var, idx: usize) -> Var {
        let mt = &self.nodes[m.0].value;
        let cols = mt.cols();
        assert!(idx < mt.rows(), "row index out of bounds");
        let out = mt.data()[idx * cols..(idx + 1) * cols].to_vec();
        self.push(Tensor::vector(out), Op::Row(m, idx))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = stable_softmax(self.nodes[a.0].value.data());
        self.push(Tensor::vector(out), Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.nodes[a.0].value.data();
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        let out = x.iter().map(|v| v - log_z).collect();
        self.push(Tensor::vector(out), Op::LogSoftmax(a))
    }

    pub fn pick(&mut self, a: Var, idx: usize) -> Var {
        let at = &self.nodes[a.0].value;
        assert!(idx < at.len(), "pick index out of bounds");
        let v = at.data()[idx];
        self.push(Tensor::scalar(v), Op::Pick(a, idx))
    }

    pub fn stack(&mut self, scalars: &[Var]) -> Var {
        let out = scalars
            .iter()
            .map(|s| self.nodes[s.0].value.item())
            .collect();
        self.push(Tensor::vector(out), Op::Stack(scalars.to_vec()))
    }

    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let w = self.nodes[weights.0].value.data();
        assert_eq!(w.len(), items.len(), "weighted_sum: weight count mismatch");
        assert!(!items.is_empty(), "weighted_sum: empty item list");
        let dim = self.nodes[items[0].0].value.len();
        let mut out = vec![0.0; dim];
        for (k, item) in items.iter().enumerate() {
            let it = self.nodes[item.0].value.data();
            for d in 0..dim {
                out[d] += w[k] * it[d];
            }
        }
        self.push(Tensor::vector(out), Op::WeightedSum(weights, items.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(at.len(), bt.len(), "dot: length mismatch");
        let v = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(x, y)| x * y)
            .sum::<f64>();
        self.push(Tensor::scalar(v), Op::Dot(a, b))
    }

    /// Backward pass from a scalar `root` with seed adjoint 1.
    pub fn backward(&self, root: Var) -> Grads {
        self.backward_scaled(root, 1.0)
    }

    /// Backward pass from a scalar `root` with the given seed adjoint.
    pub fn backward_scaled(&self, root: Var, seed: f64) -> Grads {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be scalar"
        );
        let mut by_var: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        by_var[root.0] = Some(Tensor::scalar(seed));

        for i in (0..=root.0).rev() {
            let g = match by_var[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(i, &g, &mut by_var);
            by_var[i] = Some(g);
        }
        Grads { by_var }
    }

    fn accumulate(&self, i: usize, g: &Tensor, by_var: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatVec(m, x) => {
                let mt = &self.nodes[m.0].value;
                let xt = &self.nodes[x.0].value;
                let (rows, cols) = (mt.rows(), mt.cols());
                {
                    let gm = grad_slot(by_var, m.0, mt.shape());
                    for r in 0..rows {
                        let gr = gd[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let dst = &mut gm.data_mut()[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            dst[c] += gr * xt.data()[c];
                        }
                    }
                }
                let gx = grad_slot(by_var, x.0, xt.shape());
                for r in 0..rows {
                    let gr = gd[r];
                    if gr == 0.0 {
                        continue;
                    }
                    let row = &mt.data()[r * cols..(r + 1) * cols];
                    for c in 0..cols {
                        gx.data_mut()[c] += gr * row[c];
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(by_var, a.0, self.nodes[a.0].value.shape(), gd, 1.0);
                add_into(by_var, b.0, self.nodes[b.0].value.shape(), gd, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(by_var, a.0, self.nodes[a.0].value.shape(), gd, 1.0);
                add_into(by_var, b.0, self.nodes[b.0].value.shape(), gd, -1.0);
            }
            Op::Mul(a, b) => {
                let bv: Vec<f64> = self.nodes[b.0].value.data().to_vec();
                let av: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                {
                    let ga = grad_slot(by_var, a.0, self.nodes[a.0].value.shape());
                    for (dst, (g, b)) in ga.data_mut().iter_mut().zip(gd.iter().zip(&bv)) {
                        *dst += g * b;
                    }
                }
                let gb = grad_slot(by_var, b.0, self.nodes[b.0].value.shape());
                for (dst, (g, a)) in gb.data_mut().iter_mut().zip(gd.iter().zip(&av)) {
                    *dst += g * a;
                }
            }
            Op::Scale(a, c) => {
                add_into(by_var, a.0, self.nodes[a.0].value.shape(), gd, *c);
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.data().to_vec();
                let ga = grad_slot(by_var, a.0, self.nodes[a.0].value.shape());
                for (dst, (g, y)) in ga.data_mut().iter_mut().zip(gd.iter().zip(&y)) {
                    *dst += g * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.data().to_vec();
                let ga = grad_slot(by_var, a.0, self.nodes[a.0].value.shape());
                for (dst, (g, y)) in ga.data_mut().iter_mut().zip(gd.iter().zip(&y)) {
                    *dst += g * (1.0 - y * y);
                }
            }
            Op::Slice(a, start, len) => {
                let ga = grad_slot(by_var, a.0, self.nodes[a.0].value.shape());
                for k in 0..*len {
                    ga.data_mut()[start + k] += gd[k];
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    let gp = grad_slot(by_var, p.0, self.nodes[p.0].value.shape());
                    for k in 0..len {
                        gp.data_mut()[k] += gd[offset + k];
                    }
                    offset += len;
                }
            }
            Op::Row(m, idx) => {
                let cols = self.nodes[m.0].value.cols();
                let gm = grad_slot(by_var, m.0, self.nodes[m.0].value.shape());
                for k in 0..cols {
                    gm.data_mut()[idx * cols + k] += gd[k];
                }
            }
            Op::Softmax(a) => {
                // dx = y * (g - <y, g>)
                let y = self.nodes[i].value.data().to_vec();
                let inner: f64 = y.iter().zip(gd).map(|(y, g)| y * g).sum();
                let ga = grad_slot(by_var, a.0, self.nodes[a.0].value.shape());
                for (dst, (y, g)) in ga.data_mut().iter_mut().zip(y.iter().zip(gd)) {
                    *dst += y * (g - inner);
                }
            }
            Op::LogSoftmax(a) => {
                // dx = g - softmax(x) * sum(g)
                let y = self.nodes[i].value.data().to_vec();
                let gsum: f64 = gd.iter().sum();
                let ga = grad_slot(by_var, a.0, self.nodes[a.0].value.shape());
                for (dst, (y, g)) in ga.data_mut().iter_mut().zip(y.iter().zip(gd)) {
                    *dst += g - y.exp() * gsum;
                }
            }
            Op::Pick(a, idx) => {
                let ga = grad_slot(by_var, a.0, self.nodes[a.0].value.shape());
                ga.data_mut()[*idx] += gd[0];
            }
            Op::Stack(scalars) => {
                for (k, s) in scalars.iter().enumerate() {
                    let gs = grad_slot(by_var, s.0, self.nodes[s.0].value.shape());
                    gs.data_mut()[0] += gd[k];
                }
            }
            Op::WeightedSum(weights, items) => {
                let w: Vec<f64> = self.nodes[weights.0].value.data().to_vec();
                {
                    let gw = grad_slot(by_var, weights.0, self.nodes[weights.0].value.shape());
                    for (k, item) in items.iter().enumerate() {
                        let it = self.nodes[item.0].value.data();
                        let mut acc = 0.0;
                        for d in 0..gd.len() {
                            acc += gd[d] * it[d];
                        }
                        gw.data_mut()[k] += acc;
                    }
                }
                for (k, item) in items.iter().enumerate() {
                    add_into(by_var, item.0, self.nodes[item.0].value.shape(), gd, w[k]);
                }
            }
            Op::Dot(a, b) => {
                let g0 = gd[0];
                let bv: Vec<f64> = self.nodes[b.0].value.data().to_vec();
                let av: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                add_into(by_var, a.0, self.nodes[a.0].value.shape(), &bv, g0);
                add_into(by_var, b.0, self.nodes[b.0].value.shape(), &av, g0);
            }
        }
    }
}

fn grad_slot<'a>(by_var: &'a mut [Option<Tensor>], idx: usize, shape: &[usize]) -> &'a mut Tensor {
    if by_var[idx].is_none() {
        by_var[idx] = Some(Tensor::zeros(shape));
    }
    by_var[idx].as_mut().unwrap()
}

fn add_into(by_var: &mut [Option<Tensor>], idx: usize, shape: &[usize], src: &[f64], factor: f64) {
    let dst = grad_slot(by_var, idx, shape);
    for (d, s) in dst.data_mut().iter_mut().zip(src) {
        *d += factor * s;
    }
}

/// Numerically stable softmax over a plain slice.
pub fn stable_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
