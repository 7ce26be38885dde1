//! Network, temporal, engagement and clustering analyses. Everything here
//! is a pure function of its inputs.

pub mod cluster;
pub mod community;
pub mod engagement;
pub mod graph;
pub mod pagerank;
pub mod temporal;

pub use cluster::{cluster_embeddings, Clustering};
pub use community::{detect_communities, modularity, Partition};
pub use engagement::{engagement_change, EngagementChange};
pub use graph::{build_interaction_graph, InteractionGraph};
pub use pagerank::{pagerank, PageRank, PageRankParams};
pub use temporal::{daily_series, temporal_match, LagMatch, SeriesValue, TimeSeries};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("graph is empty")]
    EmptyGraph,
    #[error("graph has zero total weight")]
    ZeroWeight,
    #[error("node {0} has no community label")]
    UnlabeledNode(String),
    #[error("edge weight must be finite and non-negative")]
    BadWeight,
    #[error("edge list line {line}: {reason}")]
    EdgeList { line: usize, reason: String },
    #[error("series {0} has zero variance; correlation is undefined")]
    ZeroVariance(String),
    #[error("no lag leaves at least 3 overlapping days")]
    InsufficientOverlap,
    #[error("insufficient data")]
    InsufficientData,
    #[error("baseline mean is zero; change is undefined")]
    ZeroBaseline,
    #[error("k must be between 1 and {n}, got {k}")]
    BadK { k: usize, n: usize },
}
