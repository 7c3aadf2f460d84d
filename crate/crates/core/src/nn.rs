//! Parameter storage and the small set of layers the walk generator and
//! critic are built from.

use rand::Rng;

use crate::autodiff::{softmax, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// The tape handles of a [`ParamSet`] bound for one forward pass.
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Copies every tensor onto the tape as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.tensors.iter().map(|t| tape.leaf(t.clone(), true)).collect())
    }

    /// Like [`ParamSet::bind`] but without gradient tracking.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound(self.tensors.iter().map(|t| tape.constant(t.clone())).collect())
    }

    /// Reads back the gradient of every bound tensor after `backward`.
    /// Parameters the loss does not depend on get zeros.
    pub fn gradients(&self, tape: &Tape, bound: &Bound) -> Vec<Vec<f64>> {
        self.tensors
            .iter()
            .zip(bound.vars())
            .map(|(t, &v)| tape.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Clamps every parameter into `[-bound, bound]`.
    pub fn clamp(&mut self, bound: f64) {
        for t in &mut self.tensors {
            for x in t.data_mut() {
                *x = x.clamp(-bound, bound);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|x| x.is_finite()))
    }
}

fn uniform_tensor<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Affine map `y = W x + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    /// Weights uniform in `±1/sqrt(input_dim)`, zero bias.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Dense {
        let bound = 1.0 / (input_dim.max(1) as f64).sqrt();
        let weight = params.add(format!("{name}.weight"), uniform_tensor(&[output_dim, input_dim], bound, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[output_dim]));
        Dense {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    /// Applies the layer to a vector, or to each column of a matrix.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let wx = tape.matmul(bound.var(self.weight), x)?;
        if tape.value(x).shape().len() == 2 {
            tape.add_col(wx, bound.var(self.bias))
        } else {
            tape.add(wx, bound.var(self.bias))
        }
    }
}

/// Weights of a single LSTM cell. Each gate maps the concatenation of the
/// step input and the previous hidden output to `hidden_dim` units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub input_gate: Dense,
    pub forget_gate: Dense,
    pub output_gate: Dense,
    pub candidate: Dense,
}

/// Recurrent memory carried between LSTM steps: the cell state and the
/// previous hidden output.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub cell: Var,
    pub hidden: Var,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> LstmParams {
        let concat = input_dim + hidden_dim;
        LstmParams {
            input_dim,
            hidden_dim,
            input_gate: Dense::new(params, &format!("{name}.input_gate"), concat, hidden_dim, rng),
            forget_gate: Dense::new(params, &format!("{name}.forget_gate"), concat, hidden_dim, rng),
            output_gate: Dense::new(params, &format!("{name}.output_gate"), concat, hidden_dim, rng),
            candidate: Dense::new(params, &format!("{name}.candidate"), concat, hidden_dim, rng),
        }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> LstmState {
        LstmState {
            cell: tape.constant(Tensor::zeros(&[self.hidden_dim])),
            hidden: tape.constant(Tensor::zeros(&[self.hidden_dim])),
        }
    }

    /// Zero memory for `batch` sequences processed as matrix columns.
    pub fn zero_batch_state(&self, tape: &mut Tape, batch: usize) -> LstmState {
        LstmState {
            cell: tape.constant(Tensor::zeros(&[self.hidden_dim, batch])),
            hidden: tape.constant(Tensor::zeros(&[self.hidden_dim, batch])),
        }
    }
}

/// One LSTM step. Returns the new memory and the hidden output (which is
/// also stored in the memory for the next step). Inputs and memory may be
/// vectors or matrices holding one sequence per column.
pub fn lstm_step(
    params: &LstmParams,
    tape: &mut Tape,
    bound: &Bound,
    memory: LstmState,
    input: Var,
) -> Result<(LstmState, Var)> {
    let (si, sc) = (tape.value(input).shape(), tape.value(memory.cell).shape());
    if si.first() != Some(&params.input_dim) || sc.first() != Some(&params.hidden_dim) || si[1..] != sc[1..] {
        return Err(Error::Shape {
            op: "lstm_step",
            left: si.to_vec(),
            right: sc.to_vec(),
        });
    }
    let x = tape.concat(&[input, memory.hidden])?;
    let i = params.input_gate.forward(tape, bound, x)?;
    let i = tape.sigmoid(i);
    let f = params.forget_gate.forward(tape, bound, x)?;
    let f = tape.sigmoid(f);
    let o = params.output_gate.forward(tape, bound, x)?;
    let o = tape.sigmoid(o);
    let g = params.candidate.forward(tape, bound, x)?;
    let g = tape.tanh(g);
    let kept = tape.mul(f, memory.cell)?;
    let fresh = tape.mul(i, g)?;
    let cell = tape.add(kept, fresh)?;
    let squashed = tape.tanh(cell);
    let hidden = tape.mul(o, squashed)?;
    Ok((LstmState { cell, hidden }, hidden))
}

/// Standard Gumbel(0, 1) draw.
pub fn gumbel_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Gumbel-softmax relaxation with explicit noise: returns the relaxed
/// probability vector `softmax((logits + noise) / temperature)` and the index
/// of its largest entry.
pub fn gumbel_softmax_with_noise(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    noise: &[f64],
) -> Result<(Var, usize)> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Param(format!("temperature must be positive, got {temperature}")));
    }
    let n = tape.value(logits).len();
    if tape.value(logits).shape().len() != 1 || noise.len() != n {
        return Err(Error::Shape {
            op: "gumbel_softmax",
            left: tape.value(logits).shape().to_vec(),
            right: vec![noise.len()],
        });
    }
    let g = tape.constant(Tensor::vector(noise.to_vec()));
    let perturbed = tape.add(logits, g)?;
    let scaled = tape.scale(perturbed, 1.0 / temperature);
    let relaxed = tape.softmax(scaled)?;
    let hard = argmax(tape.value(relaxed).data());
    Ok((relaxed, hard))
}

pub fn gumbel_softmax<R: Rng + ?Sized>(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    rng: &mut R,
) -> Result<(Var, usize)> {
    let n = tape.value(logits).len();
    let noise = gumbel_noise(n, rng);
    gumbel_softmax_with_noise(tape, logits, temperature, &noise)
}

/// Index of the first maximum.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from unnormalized log-weights.
pub fn sample_logits<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    sample_probs(&softmax(logits), rng)
}

/// Draws an index from a probability vector by inversion.
pub fn sample_probs<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Per-parameter adaptive step size from a decaying average of squared
/// gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    mean_sq: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(params: &ParamSet, lr: f64, decay: f64) -> RmsProp {
        RmsProp {
            lr,
            decay,
            eps: 1e-8,
            mean_sq: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    /// Takes one descent step along `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) {
        for ((t, g), ms) in params.tensors.iter_mut().zip(grads).zip(&mut self.mean_sq) {
            for ((x, &g), m) in t.data_mut().iter_mut().zip(g).zip(ms.iter_mut()) {
                *m = self.decay * *m + (1.0 - self.decay) * g * g;
                *x -= self.lr * g / (m.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_lstm_gives_zero_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::new();
        let lstm = LstmParams::new(&mut ps, "lstm", 3, 4, &mut rng);
        for t in ps.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let m = lstm.zero_state(&mut tape);
        let a = tape.constant(Tensor::zeros(&[3]));
        let (m, h) = lstm_step(&lstm, &mut tape, &b, m, a).unwrap();
        assert_eq!(tape.value(h).data(), [0.0; 4]);
        assert_eq!(tape.value(m.cell).data(), [0.0; 4]);
    }

    #[test]
    fn lstm_hidden_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        let lstm = LstmParams::new(&mut ps, "lstm", 2, 5, &mut rng);
        for t in ps.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= 20.0);
        }
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let mut m = lstm.zero_state(&mut tape);
        for step in 0..5 {
            let a = tape.constant(Tensor::vector(vec![step as f64, -3.0]));
            let (next, h) = lstm_step(&lstm, &mut tape, &b, m, a).unwrap();
            assert!(tape.value(h).data().iter().all(|x| x.abs() < 1.0));
            m = next;
        }
        let bad = tape.constant(Tensor::zeros(&[3]));
        assert!(lstm_step(&lstm, &mut tape, &b, m, bad).is_err());
    }

    #[test]
    fn gumbel_rejects_bad_temperature() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::vector(vec![0.0, 1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gumbel_softmax(&mut tape, l, 0.0, &mut rng).is_err());
        assert!(gumbel_softmax(&mut tape, l, -1.0, &mut rng).is_err());
    }

    #[test]
    fn gumbel_sharp_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = 0;
        for _ in 0..10_000 {
            let mut tape = Tape::new();
            let l = tape.constant(Tensor::vector(vec![10.0, -10.0, -10.0]));
            let (r, i) = gumbel_softmax(&mut tape, l, 0.1, &mut rng).unwrap();
            let s: f64 = tape.value(r).data().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert_eq!(i, argmax(tape.value(r).data()));
            hits += usize::from(i == 0);
        }
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn clamp_and_rmsprop() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::vector(vec![0.5, -0.02, 0.001]));
        let mut opt = RmsProp::new(&ps, 0.0, 0.9);
        opt.step(&mut ps, &[vec![1.0, 1.0, 1.0]]);
        assert_eq!(ps.get(id).data(), [0.5, -0.02, 0.001]);
        ps.clamp(0.01);
        assert_eq!(ps.get(id).data(), [0.01, -0.01, 0.001]);
        let mut opt = RmsProp::new(&ps, 0.1, 0.9);
        opt.step(&mut ps, &[vec![1.0, -1.0, 0.0]]);
        assert!(ps.get(id).data()[0] < 0.01);
        assert!(ps.get(id).data()[1] > -0.01);
        assert_eq!(ps.get(id).data()[2], 0.001);
    }
}
