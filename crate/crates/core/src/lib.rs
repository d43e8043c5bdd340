//! Unsupervised spoken term discovery built on self-expressing autoencoder
//! features.
//!
//! The pipeline runs MFCC extraction, two-stage autoencoder training,
//! Kernel-Gram segmentation of the learned frame embeddings, clustering of
//! segments into virtual phones, greedy recurring n-gram word discovery, and
//! scoring against gold alignments.

pub mod alignment;
pub mod audio;
pub mod bench;
pub mod clustering;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod mfcc;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod plot;
pub mod segmentation;
pub mod synth;
pub mod words;

pub use error::{Error, Result};
