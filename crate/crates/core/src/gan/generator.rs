//! Recurrent walk generator.
//!
//! Each step runs the LSTM, decodes a node type with Gumbel-softmax, then
//! picks a node of that type with probability `softmax(-‖ṽ - e_i‖²)` over the
//! type's embeddings `e_i`. The chosen (type, embedding) pair is mapped back
//! into the next recurrent input.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor, Var};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::TypeSchema;
use crate::nn::{argmax, gumbel_softmax, lstm_step, sample_probs, Bound, Dense, LstmParams, LstmState, ParamSet};
use crate::walk::HeteroWalk;

/// Added to the EOS logit while a walk is too short to end.
const MASKED: f64 = -1e9;

/// How discrete choices enter the differentiable computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relaxation {
    /// One-hot forward values with the relaxed gradient (training).
    StraightThrough,
    /// The relaxed vectors themselves. The forward pass is then a smooth
    /// function of the parameters once the noise is fixed, which is what
    /// finite-difference checks need.
    Soft,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingOptions {
    /// Maximum walk size in nodes.
    pub max_len: usize,
    pub temperature: f64,
    /// Extra type draws allowed when a drawn type has no nodes.
    pub type_retries: usize,
    pub uniform_nodes: bool,
    pub relaxation: Relaxation,
    /// Test hook: replaces the type logits at this 0-based step with a
    /// point mass on EOS.
    pub force_eos_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub params: ParamSet,
    pub noise_dim: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub embed_dim: usize,
    /// Node types plus the EOS slot.
    pub type_slots: usize,
    pub f0_cell: Dense,
    pub f0_hidden: Dense,
    pub lstm: LstmParams,
    pub g_o: Dense,
    pub g_v: Dense,
    pub g_c: Dense,
    /// Present only when the schema does not determine every edge type.
    pub g_e: Option<Dense>,
}

/// Per-type embedding matrices placed on a tape as constants.
pub struct Catalog<'t> {
    table: &'t EmbeddingTable,
    matrices: Vec<Option<Var>>,
}

impl<'t> Catalog<'t> {
    pub fn bind(tape: &mut Tape, table: &'t EmbeddingTable) -> Catalog<'t> {
        let matrices = (0..table.by_type().len())
            .map(|t| {
                let m = table.type_matrix(t).ok()?;
                let rows = table.by_type()[t].len();
                Some(tape.constant(Tensor::matrix(rows, table.dim(), m).expect("type matrix shape")))
            })
            .collect();
        Catalog { table, matrices }
    }

    pub fn table(&self) -> &'t EmbeddingTable {
        self.table
    }
}

/// A generated walk together with the tape values the critic consumes.
pub struct Rollout {
    pub walk: HeteroWalk,
    /// One type vector per node, followed by the EOS vector when the walk
    /// ended by emitting EOS.
    pub type_inputs: Vec<Var>,
    /// One embedding per node.
    pub node_inputs: Vec<Var>,
}

fn edge_features(tape: &mut Tape, slots: usize, types: (usize, usize), embs: (&[f64], &[f64])) -> Result<Var> {
    let mut x = Vec::with_capacity(2 * (slots + embs.0.len()));
    x.extend(Tensor::one_hot(slots, types.1).data());
    x.extend(embs.1);
    x.extend(Tensor::one_hot(slots, types.0).data());
    x.extend(embs.0);
    Ok(tape.constant(Tensor::vector(x)))
}

impl GeneratorParams {
    pub fn new<R: Rng + ?Sized>(
        schema: &TypeSchema,
        noise_dim: usize,
        hidden_dim: usize,
        input_dim: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> GeneratorParams {
        let slots = schema.num_node_types() + 1;
        let mut params = ParamSet::new();
        let f0_cell = Dense::new(&mut params, "gen.f0_cell", noise_dim, hidden_dim, rng);
        let f0_hidden = Dense::new(&mut params, "gen.f0_hidden", noise_dim, hidden_dim, rng);
        let lstm = LstmParams::new(&mut params, "gen.lstm", input_dim, hidden_dim, rng);
        let g_o = Dense::new(&mut params, "gen.g_o", hidden_dim, slots, rng);
        let g_v = Dense::new(&mut params, "gen.g_v", hidden_dim + slots, embed_dim, rng);
        let g_c = Dense::new(&mut params, "gen.g_c", slots + embed_dim, input_dim, rng);
        let g_e = (!schema.rule_is_total()).then(|| {
            Dense::new(
                &mut params,
                "gen.g_e",
                2 * (slots + embed_dim),
                schema.num_edge_types(),
                rng,
            )
        });
        GeneratorParams {
            params,
            noise_dim,
            hidden_dim,
            input_dim,
            embed_dim,
            type_slots: slots,
            f0_cell,
            f0_hidden,
            lstm,
            g_o,
            g_v,
            g_c,
            g_e,
        }
    }

    pub fn eos(&self) -> usize {
        self.type_slots - 1
    }

    /// Samples one walk, recording every differentiable step on `tape`.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        catalog: &Catalog<'_>,
        schema: &TypeSchema,
        opts: &SamplingOptions,
        rng: &mut R,
    ) -> Result<Rollout> {
        if opts.max_len < 2 {
            return Err(Error::Param(format!("max_len must be at least 2 nodes, got {}", opts.max_len)));
        }
        let table = catalog.table;
        if table.dim() != self.embed_dim {
            return Err(Error::Shape {
                op: "generator embeddings",
                left: vec![table.dim()],
                right: vec![self.embed_dim],
            });
        }
        let eos = self.eos();
        let z: Vec<f64> = (0..self.noise_dim).map(|_| rng.sample(StandardNormal)).collect();
        let z = tape.constant(Tensor::vector(z));
        let c0 = self.f0_cell.forward(tape, bound, z)?;
        let h0 = self.f0_hidden.forward(tape, bound, z)?;
        let mut memory = LstmState {
            cell: tape.tanh(c0),
            hidden: tape.tanh(h0),
        };
        let mut input = tape.constant(Tensor::zeros(&[self.input_dim]));
        let mut mask = vec![0.0; self.type_slots];
        mask[eos] = MASKED;
        let mask = tape.constant(Tensor::vector(mask));

        let (mut nodes, mut types, mut edge_types) = (Vec::new(), Vec::new(), Vec::new());
        let (mut type_inputs, mut node_inputs) = (Vec::new(), Vec::new());
        while nodes.len() < opts.max_len {
            let (next, h) = lstm_step(&self.lstm, tape, bound, memory, input)?;
            memory = next;
            let mut logits = self.g_o.forward(tape, bound, h)?;
            if nodes.len() < 2 {
                logits = tape.add(logits, mask)?;
            } else if opts.force_eos_at == Some(nodes.len()) {
                let mut point = vec![MASKED; self.type_slots];
                point[eos] = 0.0;
                logits = tape.constant(Tensor::vector(point));
            }
            let prev = nodes.last().copied();
            let mut draw = None;
            for _ in 0..=opts.type_retries {
                let (relaxed, t) = gumbel_softmax(tape, logits, opts.temperature, rng)?;
                if t == eos {
                    draw = Some((relaxed, t));
                    break;
                }
                if catalog.matrices[t].is_none() {
                    continue;
                }
                // A type whose only member is the previous node would force a
                // self-loop, so it is masked out for this step.
                if prev.is_some() && table.by_type()[t] == [prev.unwrap()] {
                    let mut m = vec![0.0; self.type_slots];
                    m[t] = MASKED;
                    let m = tape.constant(Tensor::vector(m));
                    logits = tape.add(logits, m)?;
                    continue;
                }
                draw = Some((relaxed, t));
                break;
            }
            let Some((relaxed, t)) = draw else {
                return Err(Error::Generation(format!(
                    "no drawable node type after {} attempts",
                    opts.type_retries + 1
                )));
            };
            let type_vec = match opts.relaxation {
                Relaxation::StraightThrough => tape.straight_through(relaxed, t)?,
                Relaxation::Soft => relaxed,
            };
            type_inputs.push(type_vec);
            if t == eos {
                break;
            }

            let members = &table.by_type()[t];
            let matrix = catalog.matrices[t].expect("type has members");
            let banned = prev.and_then(|p| members.binary_search(&p).ok());
            let (index, emb) = if opts.uniform_nodes {
                let mut j = rng.random_range(0..members.len() - usize::from(banned.is_some()));
                if banned.is_some_and(|b| j >= b) {
                    j += 1;
                }
                let emb = tape.constant(Tensor::vector(table.vector(members[j]).to_vec()));
                (j, emb)
            } else {
                let query_in = tape.concat(&[h, type_vec])?;
                let query = self.g_v.forward(tape, bound, query_in)?;
                let dist = tape.sq_dist_rows(query, matrix)?;
                let mut neg = tape.scale(dist, -1.0);
                if let Some(b) = banned {
                    let mut m = vec![0.0; members.len()];
                    m[b] = MASKED;
                    let m = tape.constant(Tensor::vector(m));
                    neg = tape.add(neg, m)?;
                }
                let probs = tape.softmax(neg)?;
                let j = sample_probs(tape.value(probs).data(), rng);
                let weights = match opts.relaxation {
                    Relaxation::StraightThrough => tape.straight_through(probs, j)?,
                    Relaxation::Soft => probs,
                };
                (j, tape.matmul(weights, matrix)?)
            };
            let node = members[index];

            if let Some(&prev) = nodes.last() {
                let prev_type = *types.last().expect("types follow nodes");
                let et = match schema.rule_for(prev_type, t) {
                    Some(et) => et,
                    None => {
                        let g_e = self.g_e.ok_or_else(|| {
                            Error::Generation(format!("no edge type for node types {prev_type} and {t}"))
                        })?;
                        let x = edge_features(
                            tape,
                            self.type_slots,
                            (prev_type, t),
                            (table.vector(prev), table.vector(node)),
                        )?;
                        let logits = g_e.forward(tape, bound, x)?;
                        argmax(tape.value(logits).data())
                    }
                };
                edge_types.push(et);
            }
            nodes.push(node);
            types.push(t);
            node_inputs.push(emb);

            let pair = tape.concat(&[type_vec, emb])?;
            let a = self.g_c.forward(tape, bound, pair)?;
            input = tape.tanh(a);
        }
        let walk = HeteroWalk::new(nodes, types, edge_types)?;
        Ok(Rollout {
            walk,
            type_inputs,
            node_inputs,
        })
    }

    /// Mean cross-entropy of `g_e` on the edges of `walks` whose type pair
    /// the schema leaves open. `None` when there is no such edge.
    pub fn edge_type_loss(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        walks: &[HeteroWalk],
        table: &EmbeddingTable,
        schema: &TypeSchema,
    ) -> Result<Option<Var>> {
        let Some(g_e) = self.g_e else { return Ok(None) };
        let mut terms = Vec::new();
        for w in walks {
            for i in 1..w.nodes().len() {
                let (a, b) = (w.types()[i - 1], w.types()[i]);
                if schema.rule_for(a, b).is_some() {
                    continue;
                }
                let x = edge_features(
                    tape,
                    self.type_slots,
                    (a, b),
                    (table.vector(w.nodes()[i - 1]), table.vector(w.nodes()[i])),
                )?;
                let logits = g_e.forward(tape, bound, x)?;
                let logp = tape.log_softmax(logits)?;
                terms.push(tape.pick(logp, w.edge_types()[i - 1])?);
            }
        }
        if terms.is_empty() {
            return Ok(None);
        }
        let n = terms.len() as f64;
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = tape.add(total, t)?;
        }
        Ok(Some(tape.scale(total, -1.0 / n)))
    }

    /// Samples `count` walks without recording gradients.
    pub fn generate_walks<R: Rng + ?Sized>(
        &self,
        table: &EmbeddingTable,
        schema: &TypeSchema,
        opts: &SamplingOptions,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<HeteroWalk>> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let catalog = Catalog::bind(&mut tape, table);
        let mark = tape.len();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.rollout(&mut tape, &bound, &catalog, schema, opts, rng)?.walk);
            tape.truncate(mark);
        }
        Ok(out)
    }

    pub fn generate_walk<R: Rng + ?Sized>(
        &self,
        table: &EmbeddingTable,
        schema: &TypeSchema,
        opts: &SamplingOptions,
        rng: &mut R,
    ) -> Result<HeteroWalk> {
        Ok(self.generate_walks(table, schema, opts, 1, rng)?.remove(0))
    }
}
