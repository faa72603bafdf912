//! Neuroevolution of convolutional networks.
//!
//! A genetic algorithm searches jointly over CNN architectures and the
//! Gaussian statistics used to initialize each layer's connection weights.
//! Chromosomes are variable length: a head of convolution/pooling genes
//! followed by a tail of fully connected genes. Candidates are scored by a
//! short truncated training run and per-batch error statistics on a held-out
//! fitness split.
//!
//! The crate is organized bottom-up:
//!
//! - [`genome`]: gene encoding, random initialization, decoding, parameter counting
//! - [`variation`]: unit-aligned crossover, SBX, polynomial and structural mutation
//! - [`selection`]: slack binary tournament and elitist environmental selection
//! - [`network`]: a small CPU CNN engine with SGD and the two initializers
//! - [`fitness`]: truncated-training evaluation and a training-free surrogate
//! - [`data`]: IDX loading, train/fitness split, batching, synthetic datasets
//! - [`engine`]: the generational driver, checkpointing, reporting, final training

pub mod data;
pub mod engine;
mod error;
pub mod fitness;
pub mod genome;
pub mod network;
pub mod rng;
pub mod selection;
pub mod variation;

pub use error::{Error, Result};
