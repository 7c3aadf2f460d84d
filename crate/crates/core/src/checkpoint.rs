//! Model checkpoints.
//!
//! A checkpoint is a UTF-8 header followed by a binary payload. Header lines
//! are tab-separated records: the schema, the node list, the training
//! configuration, and one `tensor <name> <dims...>` line per stored tensor.
//! A line reading `payload` ends the header; after it come the tensors'
//! values as little-endian f64s in manifest order. Output is a pure
//! function of the model, so equal models give byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::config::TrainConfig;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::gan::Model;
use crate::graph::{HetGraph, TypeSchema};
use crate::nn::ParamSet;

const MAGIC: &str = "hetgen-checkpoint\t1";
const EMBEDDING: &str = "embedding";

fn manifest(model: &Model) -> Vec<(&str, Vec<usize>, &[f64])> {
    let mut out = vec![(
        EMBEDDING,
        vec![model.table.num_nodes(), model.table.dim()],
        model.table.vectors(),
    )];
    for set in [&model.generator.params, &model.critic.params] {
        for (name, t) in set.iter() {
            out.push((name, t.shape().to_vec(), t.data()));
        }
    }
    out
}

/// Serializes `model` to bytes.
pub fn to_bytes(model: &Model) -> Vec<u8> {
    let schema = &model.schema;
    let mut h = String::new();
    let mut line = |fields: Vec<String>| {
        h.push_str(&fields.join("\t"));
        h.push('\n');
    };
    line(vec![MAGIC.into()]);
    let mut f = vec!["node_types".to_string()];
    f.extend(schema.node_type_labels().iter().cloned());
    line(f);
    let mut f = vec!["edge_types".to_string()];
    f.extend(schema.edge_type_labels().iter().cloned());
    line(f);
    if let Some(rule) = schema.rule() {
        let mut f = vec!["rule".to_string()];
        f.extend(rule.iter().map(|(&(a, b), &e)| format!("{a},{b},{e}")));
        line(f);
    }
    line(vec!["nodes".into(), model.node_types.len().to_string()]);
    for (t, name) in model.node_types.iter().zip(&model.node_names) {
        line(vec!["node".into(), t.to_string(), name.clone()]);
    }
    line(vec!["train_edges".into(), model.train_edges.to_string()]);
    line(vec!["noise_dim".into(), model.generator.noise_dim.to_string()]);
    line(vec!["max_len".into(), model.config.effective_max_len().to_string()]);
    line(vec!["temperature".into(), model.config.temperature.to_string()]);
    for (k, v) in model.config.entries() {
        line(vec!["config".into(), k.into(), v]);
    }
    let tensors = manifest(model);
    for (name, shape, _) in &tensors {
        let mut f = vec!["tensor".to_string(), name.to_string()];
        f.extend(shape.iter().map(usize::to_string));
        line(f);
    }
    line(vec!["payload".into()]);
    let mut bytes = h.into_bytes();
    for (_, _, data) in &tensors {
        for x in *data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    bytes
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model);
    let run = || -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.flush()
    };
    run().map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, &path.display().to_string())
}

struct Header {
    node_labels: Vec<String>,
    edge_labels: Vec<String>,
    rule: Option<Vec<((usize, usize), usize)>>,
    node_types: Vec<usize>,
    node_names: Vec<String>,
    train_edges: usize,
    config: TrainConfig,
    tensors: Vec<(String, Vec<usize>)>,
}

/// Parses a checkpoint produced by [`to_bytes`]. `origin` names the source
/// in error messages.
pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Model> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let (header, payload_at) = parse_header(bytes, origin)?;
    let schema = TypeSchema::new(header.node_labels, header.edge_labels)?;
    let schema = Arc::new(match header.rule {
        Some(r) => schema.with_rule(r)?,
        None => schema,
    });
    let graph = HetGraph::new(schema, header.node_types, [])?.with_names(header.node_names)?;

    let mut payload = &bytes[payload_at..];
    let mut take = |shape: &[usize]| -> Result<Vec<f64>> {
        let n: usize = shape.iter().product();
        if payload.len() < n * 8 {
            return Err(Error::Integrity("checkpoint payload is truncated".into()));
        }
        let (head, rest) = payload.split_at(n * 8);
        payload = rest;
        Ok(head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    };

    let mut tensors = header.tensors.into_iter();
    let (name, shape) = tensors
        .next()
        .ok_or_else(|| err(0, "checkpoint lists no tensors".into()))?;
    if name != EMBEDDING || shape.len() != 2 || shape[0] != graph.num_nodes() {
        return Err(Error::Integrity(format!(
            "first tensor must be the {} x d embedding, found {name} {shape:?}",
            graph.num_nodes()
        )));
    }
    let table = EmbeddingTable::from_vectors(
        shape[1],
        take(&shape)?,
        graph.node_types(),
        graph.schema().num_node_types(),
    )?;
    // Network shapes follow from the schema and config; the throwaway
    // initialization is overwritten below.
    let mut model = Model::new(&graph, header.config, table, &mut ChaCha8Rng::seed_from_u64(0))?;
    model.train_edges = header.train_edges;
    let expected = model.generator.params.len() + model.critic.params.len();
    let rest: Vec<(String, Vec<usize>)> = tensors.collect();
    if rest.len() != expected {
        return Err(Error::Integrity(format!(
            "checkpoint stores {} network tensors, the model needs {expected}",
            rest.len()
        )));
    }
    let mut rest = rest.into_iter();
    for set in [&mut model.generator.params, &mut model.critic.params] {
        fill(set, &mut rest, &mut take)?;
    }
    if !payload.is_empty() {
        return Err(Error::Integrity(format!(
            "{} trailing payload bytes",
            payload.len()
        )));
    }
    Ok(model)
}

fn fill(
    set: &mut ParamSet,
    entries: &mut impl Iterator<Item = (String, Vec<usize>)>,
    take: &mut impl FnMut(&[usize]) -> Result<Vec<f64>>,
) -> Result<()> {
    let names = set.names().to_vec();
    for (want, slot) in names.iter().zip(set.tensors_mut()) {
        let (name, shape) = entries.next().expect("count checked by caller");
        if &name != want || shape != slot.shape() {
            return Err(Error::Integrity(format!(
                "expected tensor {want} {:?}, found {name} {shape:?}",
                slot.shape()
            )));
        }
        *slot = Tensor::new(shape.clone(), take(&shape)?)?;
    }
    Ok(())
}

fn parse_header(bytes: &[u8], origin: &str) -> Result<(Header, usize)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let num = |line: usize, s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| err(line, format!("expected an integer, found {s:?}")))
    };
    let mut h = Header {
        node_labels: Vec::new(),
        edge_labels: Vec::new(),
        rule: None,
        node_types: Vec::new(),
        node_names: Vec::new(),
        train_edges: 0,
        config: TrainConfig::default(),
        tensors: Vec::new(),
    };
    let mut pos = 0;
    let mut lineno = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(lineno + 1, "header has no payload marker".into()))?;
        let text = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| err(lineno + 1, "header is not UTF-8".into()))?;
        pos += end + 1;
        lineno += 1;
        if lineno == 1 {
            if text != MAGIC {
                return Err(err(1, "not a checkpoint file".into()));
            }
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        match fields[0] {
            "payload" => break,
            "node_types" => h.node_labels = fields[1..].iter().map(|s| s.to_string()).collect(),
            "edge_types" => h.edge_labels = fields[1..].iter().map(|s| s.to_string()).collect(),
            "rule" => {
                let mut rule = Vec::new();
                for f in &fields[1..] {
                    let parts: Vec<&str> = f.split(',').collect();
                    if parts.len() != 3 {
                        return Err(err(lineno, format!("bad rule entry {f:?}")));
                    }
                    rule.push((
                        (num(lineno, parts[0])?, num(lineno, parts[1])?),
                        num(lineno, parts[2])?,
                    ));
                }
                h.rule = Some(rule);
            }
            "nodes" if fields.len() == 2 => {
                let n = num(lineno, fields[1])?;
                h.node_types.reserve(n);
                h.node_names.reserve(n);
            }
            "node" if fields.len() == 3 => {
                h.node_types.push(num(lineno, fields[1])?);
                h.node_names.push(fields[2].to_string());
            }
            "train_edges" if fields.len() == 2 => h.train_edges = num(lineno, fields[1])?,
            "noise_dim" | "max_len" | "temperature" => {}
            "config" if fields.len() == 3 => h.config.set(fields[1], fields[2])?,
            "tensor" if fields.len() >= 2 => {
                let shape = fields[2..]
                    .iter()
                    .map(|s| num(lineno, s))
                    .collect::<Result<Vec<_>>>()?;
                h.tensors.push((fields[1].to_string(), shape));
            }
            other => return Err(err(lineno, format!("unexpected header record {other:?}"))),
        }
    }
    Ok((h, pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth_hetero_graph;

    fn model(rule: bool) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = synth_hetero_graph(2, 5, 0.5, 0.4, &mut rng).unwrap();
        if !rule {
            let s = TypeSchema::new(["A", "B"], ["x", "y", "z"]).unwrap();
            let edges: Vec<_> = g.edges().iter().map(|e| (e.u, e.v, e.edge_type.min(2))).collect();
            g = HetGraph::new(Arc::new(s), g.node_types().to_vec(), edges).unwrap();
        }
        let cfg = TrainConfig {
            hidden_dim: 3,
            noise_dim: 2,
            input_dim: 3,
            embed_dim: 2,
            ..TrainConfig::default()
        };
        let table = EmbeddingTable::initialize(&g, 2, &mut rng).unwrap();
        Model::new(&g, cfg, table, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for rule in [true, false] {
            let m = model(rule);
            let bytes = to_bytes(&m);
            let back = from_bytes(&bytes, "mem").unwrap();
            assert_eq!(back, m);
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let m = model(true);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save(&m, &p).unwrap();
        assert_eq!(load(&p).unwrap(), m);
    }

    #[test]
    fn rejects_damage() {
        let bytes = to_bytes(&model(true));
        assert!(from_bytes(&bytes[..bytes.len() - 3], "mem").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra, "mem").is_err());
        assert!(matches!(from_bytes(b"nonsense\n", "mem"), Err(Error::Parse { .. })));
        let text = String::from_utf8_lossy(&bytes).replace("gen.g_o.weight", "gen.g_o.wieght");
        assert!(from_bytes(text.as_bytes(), "mem").is_err());
    }
}
