//! Probabilistic Boolean tensor decomposition.
//!
//! A K-way binary tensor with missing entries is modelled as the Boolean
//! (OR-of-ANDs) product of K binary factor matrices observed through a
//! symmetric Bernoulli noise channel. Factor entries are Gibbs-sampled from
//! their full conditionals; the noise strength is set to its conditional MAP
//! under a Beta prior after every sweep.
//!
//! Modules:
//! - [`tensor`]: ternary tensor storage, indexing, file formats, hold-out masks.
//! - [`model`]: factor matrices, noise model, likelihood.
//! - [`sampler`]: full conditionals, sweeps, chain driver, posterior accumulator.
//! - [`reconstruct`]: posterior predictive, factor-MAP and factor-mean estimators.
//! - [`modelselect`]: rank selection by pruning and by cross-validation.
//! - [`simulate`]: synthetic random Boolean tensors and the benchmark grid.
//! - [`encode`]: relational encoding of continuous object×attribute matrices.

pub mod encode;
pub mod error;
pub mod model;
pub mod modelselect;
pub mod reconstruct;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{FactorMatrix, ModelState, NoiseModel};
pub use reconstruct::{accuracy, EstimatorKind, Reconstruction, Scope};
pub use sampler::{run_chain, ChainResult, PosteriorAccumulator, SamplerConfig, Trace};
pub use tensor::{HeldOutEntry, ObservedTensor};
