//! Ancestral gene order reconstruction under the weighted Single-Cut-or-Join
//! criterion.
//!
//! Given a rooted phylogeny with genomes at its leaves and, optionally,
//! per-node confidence weights for candidate ancestral adjacencies, the
//! solvers label every internal node with a consistent adjacency set that
//! minimizes `alpha * (discarded weight) + (1 - alpha) * (SCJ changes)`.
//!
//! The instance is split into the connected components of the global
//! adjacency graph ([`graph`]); each component is solved exactly by a
//! dynamic program over joint labels ([`dp`]) or, when its label space is too
//! large, by a 0/1 branch-and-bound on the integer program ([`ilp`]).
//! [`weights`] provides Boltzmann adjacency weights and the Fitch and
//! matching baselines, [`sim`] the rearrangement simulator and reconstruction
//! scores, and [`pipeline`] the end-to-end orchestration used by the CLI.

pub mod car;
pub mod dp;
pub mod error;
pub mod genome;
pub mod graph;
pub mod ilp;
pub mod io;
pub mod labeling;
pub mod pipeline;
pub mod random;
pub mod score;
pub mod sim;
pub mod tree;
pub mod weights;

pub use car::{extract_cars, Car, CarCounts, CarKind};
pub use error::{Error, Result};
pub use genome::{check_consistency, dcj_distance, scj_distance, Adjacency, End, Extremity, Genome, MarkerId};
pub use graph::{Component, ComponentStats, GlobalAdjacencyGraph};
pub use labeling::{labeling_objective, Labeling, Objective};
pub use score::{Alpha, Cost, Threshold, Weight, WeightTable};
pub use tree::{Node, NodeId, Phylogeny, Tree};
