//! Publishing graph degree distributions under node local differential
//! privacy.
//!
//! Users hold their own adjacency bit vectors. A run selects a degree bound
//! θ with the server's help ([`selection`]), lets each user project locally
//! to a θ-bounded degree ([`projection`]) and collects Laplace-perturbed
//! degrees into a histogram ([`protocol`]).

pub mod agents;
pub mod crypto;
pub mod error;
pub mod graph;
pub mod harness;
pub mod mechanism;
pub mod projection;
pub mod protocol;
pub mod rng;
pub mod selection;
pub mod synthetic;

pub use error::{Error, Result};
pub use graph::{degree_histogram, load_edge_list, mae, mse, DegreeDistribution, DegreeHistogram, Graph};
pub use mechanism::{account_privacy, laplace_sample, split_budget, BudgetSplit, PrivacyAccount};
pub use projection::ProjectionMethod;
pub use protocol::{run_pipeline, run_pipeline_on, Dataset, MethodPair, RunConfig, RunOutput, SelectionMethod};
pub use rng::SeedTree;
