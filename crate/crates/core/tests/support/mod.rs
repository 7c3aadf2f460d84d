//! Finite-difference gradient checking shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetgen::autodiff::{Tape, Tensor, Var};
use hetgen::config::TrainConfig;
use hetgen::embed::EmbeddingTable;
use hetgen::gan::{critic_loss, generator_loss, Model, Relaxation};
use hetgen::graph::{HetGraph, TypeSchema};
use hetgen::nn::{gumbel_noise, gumbel_softmax_with_noise, lstm_step, Dense, LstmParams, ParamSet};
use hetgen::walk::WalkSampler;
use hetgen::Result;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this in magnitude are compared absolutely.
pub const FLOOR: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

/// Largest relative error between the analytic gradient of
/// `sum(w * build(inputs))` (fixed random `w`) and central differences,
/// over every element of every input.
pub fn check_op(shapes: &[&[usize]], build: &Build, rng: &mut ChaCha8Rng) -> f64 {
    let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(s, rng)).collect();
    let out_len = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).len()
    };
    let weights: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eval = |inputs: &[Tensor]| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &vars).unwrap();
        let shape = tape.value(out).shape().to_vec();
        let w = tape.constant(Tensor::new(shape, weights.clone()).unwrap());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        tape.backward(loss).unwrap();
        let grads = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
            .collect();
        (tape.value(loss).item(), grads)
    };
    let (_, grads) = eval(&inputs);
    let mut worst = 0.0f64;
    for (k, g) in grads.iter().enumerate() {
        for (j, &a) in g.iter().enumerate() {
            let mut shifted = inputs.clone();
            shifted[k].data_mut()[j] += STEP;
            let up = eval(&shifted).0;
            shifted[k].data_mut()[j] -= 2.0 * STEP;
            let down = eval(&shifted).0;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * STEP)));
        }
    }
    worst
}

/// Same as [`check_op`] for a loss over a parameter set: `loss` returns the
/// value and the gradient of every parameter tensor.
pub fn check_params(params: &ParamSet, loss: &dyn Fn(&ParamSet) -> (f64, Vec<Vec<f64>>)) -> f64 {
    let (_, grads) = loss(params);
    assert!(grads.iter().flatten().any(|g| g.abs() > 1e-3), "gradient is trivially small");
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for (k, g) in grads.iter().enumerate() {
        for (j, &a) in g.iter().enumerate() {
            let orig = p.tensors_mut()[k].data()[j];
            p.tensors_mut()[k].data_mut()[j] = orig + STEP;
            let up = loss(&p).0;
            p.tensors_mut()[k].data_mut()[j] = orig - STEP;
            let down = loss(&p).0;
            p.tensors_mut()[k].data_mut()[j] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * STEP)));
        }
    }
    worst
}

fn ops() -> Vec<(&'static str, Vec<Vec<usize>>, Box<Build>)> {
    fn v(s: &[usize]) -> Vec<usize> {
        s.to_vec()
    }
    vec![
        ("matmul m×k·k", vec![v(&[3, 4]), v(&[4])], Box::new(|t, x| t.matmul(x[0], x[1]))),
        ("matmul m×k·k×n", vec![v(&[2, 3]), v(&[3, 4])], Box::new(|t, x| t.matmul(x[0], x[1]))),
        ("matmul k·k×n", vec![v(&[3]), v(&[3, 2])], Box::new(|t, x| t.matmul(x[0], x[1]))),
        ("add", vec![v(&[2, 3]), v(&[2, 3])], Box::new(|t, x| t.add(x[0], x[1]))),
        ("sub", vec![v(&[4]), v(&[4])], Box::new(|t, x| t.sub(x[0], x[1]))),
        ("mul", vec![v(&[2, 3]), v(&[2, 3])], Box::new(|t, x| t.mul(x[0], x[1]))),
        ("scale", vec![v(&[5])], Box::new(|t, x| Ok(t.scale(x[0], -2.5)))),
        ("offset", vec![v(&[5])], Box::new(|t, x| Ok(t.offset(x[0], 0.7)))),
        ("concat vectors", vec![v(&[2]), v(&[3])], Box::new(|t, x| t.concat(x))),
        ("concat matrices", vec![v(&[2, 3]), v(&[1, 3])], Box::new(|t, x| t.concat(x))),
        ("columns", vec![v(&[3]), v(&[3]), v(&[3])], Box::new(|t, x| t.columns(x))),
        ("add_col", vec![v(&[3, 2]), v(&[3])], Box::new(|t, x| t.add_col(x[0], x[1]))),
        ("tanh", vec![v(&[6])], Box::new(|t, x| Ok(t.tanh(x[0])))),
        ("sigmoid", vec![v(&[2, 3])], Box::new(|t, x| Ok(t.sigmoid(x[0])))),
        ("exp", vec![v(&[4])], Box::new(|t, x| Ok(t.exp(x[0])))),
        ("softmax", vec![v(&[5])], Box::new(|t, x| t.softmax(x[0]))),
        ("log_softmax", vec![v(&[5])], Box::new(|t, x| t.log_softmax(x[0]))),
        ("sum", vec![v(&[2, 2])], Box::new(|t, x| Ok(t.sum(x[0])))),
        ("dot", vec![v(&[4]), v(&[4])], Box::new(|t, x| t.dot(x[0], x[1]))),
        ("pick", vec![v(&[2, 3])], Box::new(|t, x| t.pick(x[0], 4))),
        ("sq_dist_rows", vec![v(&[3]), v(&[4, 3])], Box::new(|t, x| t.sq_dist_rows(x[0], x[1]))),
        (
            "shared input",
            vec![v(&[3])],
            Box::new(|t, x| {
                let a = t.mul(x[0], x[0])?;
                let b = t.tanh(x[0]);
                t.add(a, b)
            }),
        ),
    ]
}

/// Every elementary op once, with fresh random inputs. Returns
/// `(name, max relative error)` per op.
pub fn check_all_ops(rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64)> {
    ops()
        .into_iter()
        .map(|(name, shapes, build)| {
            let shapes: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
            (name, check_op(&shapes, build.as_ref(), rng))
        })
        .collect()
}

/// Three dense layers with tanh between them, squared output norm.
pub fn check_mlp(dims: [usize; 4], rng: &mut ChaCha8Rng) -> f64 {
    let mut params = ParamSet::new();
    let layers: Vec<Dense> = (0..3)
        .map(|i| Dense::new(&mut params, &format!("l{i}"), dims[i], dims[i + 1], rng))
        .collect();
    for t in params.tensors_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    let input = random_tensor(&[dims[0]], rng);
    check_params(&params, &|p| {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let mut h = tape.constant(input.clone());
        for (i, l) in layers.iter().enumerate() {
            h = l.forward(&mut tape, &bound, h).unwrap();
            if i < 2 {
                h = tape.tanh(h);
            }
        }
        let loss = tape.dot(h, h).unwrap();
        tape.backward(loss).unwrap();
        (tape.value(loss).item(), p.gradients(&tape, &bound))
    })
}

/// Two LSTM steps from random memory, loss `‖h‖²`, against every gate weight.
pub fn check_lstm(input_dim: usize, hidden_dim: usize, batch: Option<usize>, rng: &mut ChaCha8Rng) -> f64 {
    let mut params = ParamSet::new();
    let lstm = LstmParams::new(&mut params, "lstm", input_dim, hidden_dim, rng);
    for t in params.tensors_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    let shape = |d: usize| match batch {
        Some(b) => vec![d, b],
        None => vec![d],
    };
    let xs = [random_tensor(&shape(input_dim), rng), random_tensor(&shape(input_dim), rng)];
    let cell = random_tensor(&shape(hidden_dim), rng);
    let hidden = random_tensor(&shape(hidden_dim), rng);
    check_params(&params, &|p| {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let mut memory = hetgen::nn::LstmState {
            cell: tape.constant(cell.clone()),
            hidden: tape.constant(hidden.clone()),
        };
        let mut h = memory.hidden;
        for x in &xs {
            let x = tape.constant(x.clone());
            (memory, h) = lstm_step(&lstm, &mut tape, &bound, memory, x).unwrap();
        }
        let loss = tape.dot(h, h).unwrap();
        tape.backward(loss).unwrap();
        (tape.value(loss).item(), p.gradients(&tape, &bound))
    })
}

/// Gumbel-softmax with frozen noise, against the logits.
pub fn check_gumbel(n: usize, temperature: f64, rng: &mut ChaCha8Rng) -> f64 {
    let noise = gumbel_noise(n, rng);
    check_op(
        &[&[n]],
        &move |t, x| gumbel_softmax_with_noise(t, x[0], temperature, &noise).map(|(relaxed, _)| relaxed),
        rng,
    )
}

/// A small random graph with `types` node types and random embeddings.
/// Without `rule` the schema leaves edge types open, so the generator
/// carries its edge-type head.
pub fn micro_model(seed: u64, rule: bool) -> (Model, HetGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = rng.random_range(2..=3);
    let n = rng.random_range(types + 1..=types + 4);
    let node_labels: Vec<String> = (0..types).map(|t| format!("T{t}")).collect();
    let mut pairs = Vec::new();
    for a in 0..types {
        for b in a..types {
            pairs.push((a, b));
        }
    }
    let edge_labels: Vec<String> = if rule {
        pairs.iter().map(|(a, b)| format!("T{a}_T{b}")).collect()
    } else {
        vec!["x".into(), "y".into()]
    };
    let mut schema = TypeSchema::new(node_labels, edge_labels).unwrap();
    if rule {
        schema = schema.with_rule(pairs.iter().enumerate().map(|(i, &p)| (p, i))).unwrap();
    }
    let node_types: Vec<usize> = (0..n).map(|v| if v < types { v } else { rng.random_range(0..types) }).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if u + 1 == v || rng.random_bool(0.4) {
                let (a, b) = (node_types[u].min(node_types[v]), node_types[u].max(node_types[v]));
                let e = if rule {
                    pairs.iter().position(|&p| p == (a, b)).unwrap()
                } else {
                    rng.random_range(0..2)
                };
                edges.push((u, v, e));
            }
        }
    }
    let graph = HetGraph::new(Arc::new(schema), node_types.clone(), edges).unwrap();
    let config = TrainConfig {
        noise_dim: 3,
        hidden_dim: 4,
        input_dim: 3,
        embed_dim: 4,
        max_len: 4,
        ..TrainConfig::default()
    };
    let vectors = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let table = EmbeddingTable::from_vectors(4, vectors, &node_types, types).unwrap();
    let mut model = Model::new(&graph, config, table, &mut rng).unwrap();
    for t in model.critic.params.tensors_mut() {
        for x in t.data_mut() {
            *x *= 2.0;
        }
    }
    (model, graph)
}

/// Critic loss on real walks and frozen-noise soft fake walks, against the
/// critic parameters.
pub fn check_critic(seed: u64, rule: bool) -> f64 {
    let (model, graph) = micro_model(seed, rule);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    let real = WalkSampler::new(&graph).unwrap().corpus(4, &[1, 2, 3], &mut rng).unwrap();
    check_params(&model.critic.params, &|p| {
        let mut m = model.clone();
        m.critic.params = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (eval, _) = critic_loss(&m, &real, Relaxation::Soft, &mut rng).unwrap();
        (eval.loss, eval.grads)
    })
}

/// Generator loss with z and all sampling noise frozen by reseeding, against
/// every generator parameter (including the edge-type head when present).
pub fn check_generator(seed: u64, rule: bool) -> f64 {
    let (model, graph) = micro_model(seed, rule);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    let aux = WalkSampler::new(&graph).unwrap().corpus(3, &[1, 2], &mut rng).unwrap();
    check_params(&model.generator.params, &|p| {
        let mut m = model.clone();
        m.generator.params = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eval = generator_loss(&m, 3, &aux, Relaxation::Soft, &mut rng).unwrap();
        (eval.loss, eval.grads)
    })
}
