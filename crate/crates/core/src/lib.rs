pub mod assembler;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod embed;
pub mod error;
pub mod gan;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod walk;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/graphs.md")]
    pub struct Graphs;
    #[doc = include_str!("../../../book/src/walks.md")]
    pub struct Walks;
    #[doc = include_str!("../../../book/src/embeddings.md")]
    pub struct Embeddings;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub struct Autodiff;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
    #[doc = include_str!("../../../book/src/assembly.md")]
    pub struct Assembly;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
