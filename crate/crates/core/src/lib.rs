//! Structure learning for discrete Markov networks with context-specific
//! independences.
//!
//! CSGS learns a canonical model: one instantiated graph per canonical
//! context (a unique training row), each grown and shrunk with χ² tests that
//! condition on the context's values over the current Markov blanket. The
//! crate also carries the evaluation substrate: an ADTree count index, the
//! GSMN single-graph baseline, feature generation, pseudo-likelihood weight
//! fitting, exact KL divergence and a synthetic ground-truth generator.
//!
//! ```
//! use csgs::{csgs, LearnerConfig};
//! use csgs::model::{fit_weights, kl_divergence, sample, synth_model};
//!
//! # fn main() -> csgs::Result<()> {
//! let truth = synth_model(6, -1.0, 1.0, 7)?;
//! let data = sample(&truth.model, 10_000, 8)?;
//! let learned = csgs(&data, &LearnerConfig::default())?;
//! let fitted = fit_weights(&learned.features, &data, 1.0)?;
//! assert!(kl_divergence(&truth.model, &fitted)? < 0.1);
//! # Ok(())
//! # }
//! ```

pub mod counts;
pub mod dataset;
pub mod error;
pub mod indep;
pub mod io;
pub mod learners;
pub mod model;
mod special;
pub mod structures;

pub use counts::{ContingencyTable, CountIndex};
pub use dataset::{unique_rows, Context, Dataset, VariableSchema};
pub use error::{Error, Result};
pub use indep::{Decision, TestResult};
pub use learners::{csgs, gsmn, CsgsResult, LearnerConfig, LearnerStats, NodeOrder};
pub use model::{GroundTruth, LogLinearModel};
pub use structures::{CanonicalGraph, CanonicalModel, Feature, UGraph};

pub use special::chi_square_sf;
