//! Adversarial training of the walk generator against a Wasserstein critic
//! with weight clipping.
//!
//! The critic minimizes `mean D(fake) - mean D(real)` and has its weights
//! clamped after every update. The generator minimizes `-mean D(fake)`,
//! plus the edge-type cross-entropy when the schema leaves some edge types
//! open. Each loss is computed for a whole batch on a single tape.

mod critic;
mod generator;

use std::sync::Arc;

use log::{debug, info};
use rand::Rng;

pub use critic::DiscriminatorParams;
pub use generator::{Catalog, GeneratorParams, Relaxation, Rollout, SamplingOptions};

use crate::autodiff::{Tape, Tensor, Var};
use crate::config::TrainConfig;
use crate::embed::{train_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::graph::{HetGraph, TypeSchema};
use crate::nn::{Bound, RmsProp};
use crate::walk::{HeteroWalk, WalkSampler};

/// Everything needed to generate walks after training.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub schema: Arc<TypeSchema>,
    pub node_types: Vec<usize>,
    pub node_names: Vec<String>,
    pub table: EmbeddingTable,
    pub generator: GeneratorParams,
    pub critic: DiscriminatorParams,
    /// Edge count of the graph the model was trained on.
    pub train_edges: usize,
}

/// A loss value and its gradient with respect to one network's parameters.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    /// Critic loss of the last critic update in this step.
    pub critic_loss: f64,
    pub gen_loss: f64,
    /// `mean D(real) - mean D(fake)` measured by the last critic update.
    pub gap: f64,
}

impl Model {
    /// Fresh networks for `graph` around an already trained table.
    pub fn new<R: Rng + ?Sized>(graph: &HetGraph, config: TrainConfig, table: EmbeddingTable, rng: &mut R) -> Result<Model> {
        config.validate()?;
        let schema = graph.schema_arc().clone();
        let generator = GeneratorParams::new(
            &schema,
            config.noise_dim,
            config.hidden_dim,
            config.input_dim,
            table.dim(),
            rng,
        );
        let critic = DiscriminatorParams::new(generator.type_slots, table.dim(), config.hidden_dim, rng);
        Ok(Model {
            schema,
            node_types: graph.node_types().to_vec(),
            node_names: graph.node_names().to_vec(),
            table,
            generator,
            critic,
            train_edges: graph.num_edges(),
            config,
        })
    }

    pub fn sampling_options(&self, relaxation: Relaxation) -> SamplingOptions {
        SamplingOptions {
            max_len: self.config.effective_max_len(),
            temperature: self.config.temperature,
            type_retries: self.config.type_retries,
            uniform_nodes: self.config.uniform_node_sampling,
            relaxation,
            force_eos_at: None,
        }
    }

    /// Sequence length every walk is padded to before scoring.
    pub fn padded_len(&self) -> usize {
        self.config.effective_max_len() + 1
    }

    pub fn generate_walks<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<HeteroWalk>> {
        let opts = self.sampling_options(Relaxation::StraightThrough);
        self.generator.generate_walks(&self.table, &self.schema, &opts, count, rng)
    }

    pub fn score_walk(&self, walk: &HeteroWalk) -> Result<f64> {
        self.critic.score_walk(walk, &self.table, self.config.effective_max_len())
    }

    /// The trained-on node set with no edges.
    pub fn empty_graph(&self) -> Result<HetGraph> {
        HetGraph::new(self.schema.clone(), self.node_types.clone(), [])?.with_names(self.node_names.clone())
    }
}

fn fake_inputs<R: Rng + ?Sized>(
    model: &Model,
    tape: &mut Tape,
    gen: &Bound,
    count: usize,
    relaxation: Relaxation,
    rng: &mut R,
) -> Result<Vec<(Vec<Var>, Vec<Var>)>> {
    let opts = model.sampling_options(relaxation);
    let catalog = Catalog::bind(tape, &model.table);
    (0..count)
        .map(|_| {
            let r = model.generator.rollout(tape, gen, &catalog, &model.schema, &opts, rng)?;
            Ok((r.type_inputs, r.node_inputs))
        })
        .collect()
}

/// `sum_i w_i * scores_i` for a `[1, n]` score row.
fn weighted_sum(tape: &mut Tape, scores: Var, weights: Vec<f64>) -> Result<Var> {
    let n = weights.len();
    let w = tape.constant(Tensor::matrix(1, n, weights)?);
    let prod = tape.mul(scores, w)?;
    Ok(tape.sum(prod))
}

fn check_finite(loss: f64, grads: &[Vec<f64>], what: &str) -> Result<()> {
    if loss.is_finite() && grads.iter().flatten().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Training {
            step: 0,
            msg: format!("{what} loss or gradient is not finite ({loss})"),
        })
    }
}

/// Critic loss `mean D(fake) - mean D(real)` over `real` and as many
/// generated walks, with gradients for the critic.
pub fn critic_loss<R: Rng + ?Sized>(
    model: &Model,
    real: &[HeteroWalk],
    relaxation: Relaxation,
    rng: &mut R,
) -> Result<(LossEval, f64)> {
    if real.is_empty() {
        return Err(Error::Param("critic batch is empty".into()));
    }
    let mut tape = Tape::new();
    let gb = model.generator.params.bind_frozen(&mut tape);
    let cb = model.critic.params.bind(&mut tape);
    let mut batch = fake_inputs(model, &mut tape, &gb, real.len(), relaxation, rng)?;
    for w in real {
        batch.push(model.critic.walk_inputs(&mut tape, w, &model.table)?);
    }
    let scores = model.critic.score_batch(&mut tape, &cb, &batch, model.padded_len())?;
    let n = real.len() as f64;
    let weights = (0..2 * real.len()).map(|i| if i < real.len() { 1.0 / n } else { -1.0 / n }).collect();
    let loss = weighted_sum(&mut tape, scores, weights)?;
    tape.backward(loss)?;
    let value = tape.value(loss).item();
    let grads = model.critic.params.gradients(&tape, &cb);
    check_finite(value, &grads, "critic")?;
    Ok((LossEval { loss: value, grads }, -value))
}

/// Generator loss `-mean D(fake)` over `batch_size` walks plus the
/// edge-type term on `aux` real walks, with gradients for the generator.
pub fn generator_loss<R: Rng + ?Sized>(
    model: &Model,
    batch_size: usize,
    aux: &[HeteroWalk],
    relaxation: Relaxation,
    rng: &mut R,
) -> Result<LossEval> {
    if batch_size == 0 {
        return Err(Error::Param("generator batch is empty".into()));
    }
    let mut tape = Tape::new();
    let gb = model.generator.params.bind(&mut tape);
    let cb = model.critic.params.bind_frozen(&mut tape);
    let batch = fake_inputs(model, &mut tape, &gb, batch_size, relaxation, rng)?;
    let scores = model.critic.score_batch(&mut tape, &cb, &batch, model.padded_len())?;
    let mut loss = weighted_sum(&mut tape, scores, vec![-1.0 / batch_size as f64; batch_size])?;
    if let Some(edge) = model
        .generator
        .edge_type_loss(&mut tape, &gb, aux, &model.table, &model.schema)?
    {
        loss = tape.add(loss, edge)?;
    }
    tape.backward(loss)?;
    let value = tape.value(loss).item();
    let grads = model.generator.params.gradients(&tape, &gb);
    check_finite(value, &grads, "generator")?;
    Ok(LossEval { loss: value, grads })
}

/// One critic update followed by weight clipping. Returns the loss before
/// the update and the score gap it measured.
pub fn critic_step<R: Rng + ?Sized>(
    model: &mut Model,
    opt: &mut RmsProp,
    real: &[HeteroWalk],
    rng: &mut R,
) -> Result<(f64, f64)> {
    let clip = model.config.clip;
    if clip.is_nan() || clip <= 0.0 {
        return Err(Error::Param(format!("clip must be positive, got {clip}")));
    }
    let (eval, gap) = critic_loss(model, real, Relaxation::StraightThrough, rng)?;
    opt.step(&mut model.critic.params, &eval.grads);
    model.critic.params.clamp(clip);
    Ok((eval.loss, gap))
}

/// One generator update; the critic is left untouched.
pub fn generator_step<R: Rng + ?Sized>(
    model: &mut Model,
    opt: &mut RmsProp,
    batch_size: usize,
    aux: &[HeteroWalk],
    rng: &mut R,
) -> Result<f64> {
    let eval = generator_loss(model, batch_size, aux, Relaxation::StraightThrough, rng)?;
    opt.step(&mut model.generator.params, &eval.grads);
    Ok(eval.loss)
}

/// Trains embeddings on `graph`, then the generator and critic.
pub fn train<R: Rng + ?Sized>(graph: &HetGraph, config: &TrainConfig, rng: &mut R) -> Result<(Model, Vec<LogEntry>)> {
    train_with_hook(graph, config, rng, |_, _| Ok(()))
}

/// [`train`] that calls `checkpoint(model, steps_done)` every
/// `checkpoint_interval` generator steps, and once more with the last
/// consistent parameters if a step fails.
pub fn train_with_hook<R, F>(
    graph: &HetGraph,
    config: &TrainConfig,
    rng: &mut R,
    mut checkpoint: F,
) -> Result<(Model, Vec<LogEntry>)>
where
    R: Rng + ?Sized,
    F: FnMut(&Model, usize) -> Result<()>,
{
    config.validate()?;
    let sampler = WalkSampler::new(graph)?;
    let corpus = sampler.corpus(
        config.embed_walks_per_node * graph.num_nodes(),
        &[config.embed_walk_length],
        rng,
    )?;
    let table = train_embeddings(&corpus, graph, &config.embed_params(), rng)?;
    info!("trained {}-dim embeddings on {} walks", table.dim(), corpus.len());
    let mut model = Model::new(graph, config.clone(), table, rng)?;
    let mut critic_opt = RmsProp::new(&model.critic.params, config.critic_lr, config.rms_decay);
    let mut gen_opt = RmsProp::new(&model.generator.params, config.gen_lr, config.rms_decay);
    let lengths = config.effective_lengths();
    let mut log = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let result = (|| -> Result<LogEntry> {
            let iters = if step < config.critic_warmup_steps {
                config.warmup_critic_iters
            } else {
                config.n_critic
            };
            let (mut critic_loss, mut gap) = (0.0, 0.0);
            for _ in 0..iters {
                let real = sampler.corpus(config.batch_size, &lengths, rng)?;
                (critic_loss, gap) = critic_step(&mut model, &mut critic_opt, &real, rng)?;
            }
            let aux = if model.generator.g_e.is_some() {
                sampler.corpus(config.batch_size, &lengths, rng)?
            } else {
                Vec::new()
            };
            let gen_loss = generator_step(&mut model, &mut gen_opt, config.batch_size, &aux, rng)?;
            Ok(LogEntry {
                step,
                critic_loss,
                gen_loss,
                gap,
            })
        })();
        let entry = match result {
            Ok(e) => e,
            Err(e) => {
                checkpoint(&model, step)?;
                return Err(match e {
                    Error::Training { msg, .. } => Error::Training { step, msg },
                    other => other,
                });
            }
        };
        debug!(
            "step {} critic {:.6} gen {:.6} gap {:.6}",
            entry.step, entry.critic_loss, entry.gen_loss, entry.gap
        );
        log.push(entry);
        if (step + 1) % config.checkpoint_interval == 0 {
            info!("step {}: gap {:.5}", step + 1, entry.gap);
            checkpoint(&model, step + 1)?;
        }
    }
    Ok((model, log))
}
