//! Reconstruction of tumor subclones, their cellular proportions, and the
//! phylogenetic tree they span, from short-read counts over mutation pairs
//! (two proximal SNVs phased by the same paired-end reads).
//!
//! The model is a Bayesian latent feature allocation: subclones are columns
//! of a genotype matrix constrained to a rooted tree, samples mix subclones
//! with Dirichlet-distributed proportions, and reads follow a multinomial
//! emission model with a background noise clone. Posterior simulation uses
//! Gibbs row updates, Metropolis-Hastings moves on weights and noise,
//! parallel tempering, and a trans-dimensional tree move driven by a
//! fractional training/test likelihood split.

pub mod error;
pub mod genotype;
pub mod inference;
pub mod cli;
pub mod io;
pub mod model;
mod numeric;
pub mod phylogeny;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
