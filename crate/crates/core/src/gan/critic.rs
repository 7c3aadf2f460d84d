//! Two-track recurrent critic.
//!
//! One LSTM reads the node-type vectors of a walk, another reads the node
//! embeddings. Each track ends in a scalar head applied to its last hidden
//! state and the walk's score is the sum of the two. Walks are padded with
//! the EOS type and zero embeddings to a common length before scoring.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{lstm_step, Bound, Dense, LstmParams, ParamSet};
use crate::walk::HeteroWalk;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub params: ParamSet,
    pub type_slots: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub type_lstm: LstmParams,
    pub node_lstm: LstmParams,
    pub type_head: Dense,
    pub node_head: Dense,
}

impl DiscriminatorParams {
    pub fn new<R: Rng + ?Sized>(type_slots: usize, embed_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let type_lstm = LstmParams::new(&mut params, "critic.type_lstm", type_slots, hidden_dim, rng);
        let node_lstm = LstmParams::new(&mut params, "critic.node_lstm", embed_dim, hidden_dim, rng);
        let type_head = Dense::new(&mut params, "critic.type_head", hidden_dim, 1, rng);
        let node_head = Dense::new(&mut params, "critic.node_head", hidden_dim, 1, rng);
        DiscriminatorParams {
            params,
            type_slots,
            embed_dim,
            hidden_dim,
            type_lstm,
            node_lstm,
            type_head,
            node_head,
        }
    }

    /// Scores a batch of sequences already on the tape. Each entry holds a
    /// walk's type vectors and node embeddings; all are padded to at least
    /// `padded_len` steps. Returns a `[1, batch]` row of scores.
    pub fn score_batch(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &[(Vec<Var>, Vec<Var>)],
        padded_len: usize,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Param("cannot score an empty batch".into()));
        }
        let steps = batch
            .iter()
            .map(|(t, n)| t.len().max(n.len()))
            .max()
            .unwrap_or(0)
            .max(padded_len);
        let eos = tape.constant(Tensor::one_hot(self.type_slots, self.type_slots - 1));
        let zero = tape.constant(Tensor::zeros(&[self.embed_dim]));
        let h_type = self.run_track(tape, bound, &self.type_lstm, batch, steps, |(t, _)| t, eos)?;
        let h_node = self.run_track(tape, bound, &self.node_lstm, batch, steps, |(_, n)| n, zero)?;
        let a = self.type_head.forward(tape, bound, h_type)?;
        let b = self.node_head.forward(tape, bound, h_node)?;
        tape.add(a, b)
    }

    #[allow(clippy::too_many_arguments)]
    fn run_track(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        lstm: &LstmParams,
        batch: &[(Vec<Var>, Vec<Var>)],
        steps: usize,
        pick: impl Fn(&(Vec<Var>, Vec<Var>)) -> &Vec<Var>,
        pad: Var,
    ) -> Result<Var> {
        let mut state = lstm.zero_batch_state(tape, batch.len());
        let mut h = state.hidden;
        for i in 0..steps {
            let column: Vec<Var> = batch.iter().map(|e| pick(e).get(i).copied().unwrap_or(pad)).collect();
            let x = tape.columns(&column)?;
            (state, h) = lstm_step(lstm, tape, bound, state, x)?;
        }
        Ok(h)
    }

    /// Tape inputs for a discrete walk: type one-hots and table embeddings.
    pub fn walk_inputs(&self, tape: &mut Tape, walk: &HeteroWalk, table: &EmbeddingTable) -> Result<(Vec<Var>, Vec<Var>)> {
        if walk.nodes().len() < 2 {
            return Err(Error::Contract(format!(
                "a scored walk needs at least 2 nodes, got {}",
                walk.nodes().len()
            )));
        }
        let types = walk
            .types()
            .iter()
            .map(|&t| tape.constant(Tensor::one_hot(self.type_slots, t)))
            .collect();
        let nodes = walk
            .nodes()
            .iter()
            .map(|&v| tape.constant(Tensor::vector(table.vector(v).to_vec())))
            .collect();
        Ok((types, nodes))
    }

    /// Score of a single walk padded to `max_len + 1` steps.
    pub fn score_walk(&self, walk: &HeteroWalk, table: &EmbeddingTable, max_len: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let inputs = self.walk_inputs(&mut tape, walk, table)?;
        let s = self.score_batch(&mut tape, &bound, &[inputs], max_len + 1)?;
        Ok(tape.value(s).item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (DiscriminatorParams, EmbeddingTable, HeteroWalk) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let critic = DiscriminatorParams::new(3, 2, 4, &mut rng);
        let table = EmbeddingTable::from_vectors(2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6], &[0, 1, 1], 2).unwrap();
        let walk = HeteroWalk::new(vec![0, 1, 2], vec![0, 1, 1], vec![0, 1]).unwrap();
        (critic, table, walk)
    }

    #[test]
    fn zero_critic_scores_zero() {
        let (mut critic, table, walk) = fixture();
        critic.params.clamp(0.0);
        assert_eq!(critic.score_walk(&walk, &table, 4).unwrap(), 0.0);
    }

    #[test]
    fn scoring_is_pure() {
        let (critic, table, walk) = fixture();
        let a = critic.score_walk(&walk, &table, 4).unwrap();
        let b = critic.score_walk(&walk, &table, 4).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, 0.0);
    }

    #[test]
    fn single_node_walk_is_rejected() {
        let (critic, table, _) = fixture();
        let w = HeteroWalk::new(vec![0], vec![0], vec![]).unwrap();
        assert!(matches!(critic.score_walk(&w, &table, 4), Err(Error::Contract(_))));
    }
}
