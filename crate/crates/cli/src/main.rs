use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hetgen::assembler::generate_graphs;
use hetgen::config::TrainConfig;
use hetgen::error::Error;
use hetgen::gan::train_with_hook;
use hetgen::graph::{load_graph, load_graph_like, save_graph, split_edges, synth_hetero_graph, synth_preset, HetGraph};
use hetgen::report::{evaluate, PatternSampling};
use hetgen::{checkpoint, Result};

#[derive(Parser, Debug)]
#[command(name = "hetgen", version, about = "Heterogeneous graph generation from typed walks")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra configuration assignments applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for all output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic heterogeneous graph as nodes.tsv / edges.tsv.
    Synth {
        #[arg(long, default_value_t = 3)]
        types: usize,
        /// Nodes per type.
        #[arg(long, default_value_t = 34)]
        size: usize,
        /// Total node count spread over the types; overrides --size.
        #[arg(long)]
        nodes: Option<usize>,
        /// Intra-type edge probability.
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        /// Fraction of each type's nodes that also join another type's block.
        #[arg(long, default_value_t = 0.2)]
        share: f64,
    },
    /// Split a graph, train embeddings and the adversarial walk model.
    Train {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Generator steps; overrides the config.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Assemble graphs from a trained checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Defaults to the training graph's edge count.
        #[arg(long)]
        target_edges: Option<usize>,
    },
    /// Score generated graphs against the training and test splits.
    Eval {
        /// Directory holding `<name>.nodes.tsv` / `<name>.edges.tsv` pairs.
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        train_edges: PathBuf,
        #[arg(long)]
        test_edges: PathBuf,
        /// Walks sampled per graph for meta-path distributions.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
}

fn load_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Param(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn pair_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.nodes.tsv")), dir.join(format!("{stem}.edges.tsv")))
}

fn synth(cli: &Cli, types: usize, size: usize, nodes: Option<usize>, p: f64, share: f64) -> Result<()> {
    let seed = load_config(cli)?.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = match nodes {
        Some(n) => synth_preset(n, types, p, share).generate(&mut rng)?,
        None => synth_hetero_graph(types, size, p, share, &mut rng)?,
    };
    save_graph(&g, cli.out_dir.join("nodes.tsv"), cli.out_dir.join("edges.tsv"))?;
    println!("nodes\t{}", g.num_nodes());
    println!("edges\t{}", g.num_edges());
    println!("components\t{}", g.num_components());
    for (t, members) in g.nodes_by_type().iter().enumerate() {
        println!("type.{}\t{}", g.schema().node_type_label(t), members.len());
    }
    Ok(())
}

fn train(cli: &Cli, nodes: &Path, edges: &Path, steps: Option<usize>) -> Result<()> {
    let mut cfg = load_config(cli)?;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    cfg.validate()?;
    let graph = load_graph(nodes, edges)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_g, test_g) = split_edges(&graph, cfg.train_fraction, &mut rng)?;
    let out = &cli.out_dir;
    save_graph(&train_g, out.join("nodes.tsv"), out.join("train.edges.tsv"))?;
    save_graph(&test_g, out.join("nodes.tsv"), out.join("test.edges.tsv"))?;
    write(&out.join("config.txt"), &cfg.to_text())?;
    info!(
        "training on {} of {} edges for {} steps",
        train_g.num_edges(),
        graph.num_edges(),
        cfg.steps
    );
    let ckpt = out.join("model.ckpt");
    let (model, log) = train_with_hook(&train_g, &cfg, &mut rng, |m, step| {
        info!("checkpoint at step {step}");
        checkpoint::save(m, &ckpt)
    })?;
    checkpoint::save(&model, &ckpt)?;
    let mut text = String::new();
    for e in &log {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", e.step, e.critic_loss, e.gen_loss, e.gap));
    }
    write(&out.join("train.log"), &text)?;
    println!("checkpoint\t{}", ckpt.display());
    Ok(())
}

fn generate(cli: &Cli, ckpt: &Path, count: usize, target: Option<usize>) -> Result<bool> {
    if count == 0 {
        return Err(Error::Param("--count must be at least 1".into()));
    }
    let model = checkpoint::load(ckpt)?;
    let seed = cli.seed.unwrap_or(model.config.seed);
    let target = target.unwrap_or(model.train_edges);
    let mut cfg = model.config.clone();
    cfg.seed = seed;
    write(&cli.out_dir.join("config.txt"), &cfg.to_text())?;
    let mut stalled = false;
    for (i, result) in generate_graphs(&model, count, target, seed).into_iter().enumerate() {
        let stem = format!("graph_{i:02}");
        let (graph, trace) = match result {
            Ok(a) => (a.graph, a.trace),
            Err(Error::Stall { reached, partial, .. }) => {
                warn!("{stem}: assembly stalled at {reached} of {target} edges; writing the partial graph");
                stalled = true;
                (*partial, Vec::new())
            }
            Err(e) => return Err(e),
        };
        let (n, e) = pair_paths(&cli.out_dir, &stem);
        save_graph(&graph, n, e)?;
        let lines: String = trace
            .iter()
            .map(|p| p.label(&model.schema) + "\n")
            .collect();
        write(&cli.out_dir.join(format!("{stem}.trace.tsv")), &lines)?;
        println!("{stem}\t{}", graph.num_edges());
    }
    Ok(!stalled)
}

fn eval(
    cli: &Cli,
    dir: &Path,
    nodes: &Path,
    train_edges: &Path,
    test_edges: &Path,
    samples: usize,
) -> Result<()> {
    let train_g = load_graph(nodes, train_edges)?;
    let test_g = load_graph_like(&train_g, nodes, test_edges)?;
    let mut stems: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            name.strip_suffix(".edges.tsv").map(str::to_string)
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Param(format!("no *.edges.tsv files in {}", dir.display())));
    }
    let generated: Vec<HetGraph> = stems
        .iter()
        .map(|stem| {
            let (n, e) = pair_paths(dir, stem);
            let n = if n.exists() { n } else { nodes.to_path_buf() };
            load_graph_like(&train_g, n, e)
        })
        .collect::<Result<_>>()?;
    let sampling = PatternSampling {
        samples,
        seed: cli.seed.unwrap_or(0),
        ..PatternSampling::default()
    };
    let report = evaluate(&generated, &train_g, &test_g, &sampling)?;
    let text = report.to_text();
    write(&cli.out_dir.join("report.tsv"), &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    match &cli.command {
        Command::Synth {
            types,
            size,
            nodes,
            p,
            share,
        } => synth(cli, *types, *size, *nodes, *p, *share).map(|_| true),
        Command::Train { nodes, edges, steps } => train(cli, nodes, edges, *steps).map(|_| true),
        Command::Generate {
            checkpoint,
            count,
            target_edges,
        } => generate(cli, checkpoint, *count, *target_edges),
        Command::Eval {
            generated,
            nodes,
            train_edges,
            test_edges,
            samples,
        } => eval(cli, generated, nodes, train_edges, test_edges, *samples).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Param(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
