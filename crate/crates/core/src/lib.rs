//! Social recommendation over rating and trust graphs: data loading,
//! relationship coefficients, a small reverse-mode autodiff core, the
//! attention model, training and evaluation.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod diffcore;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod social_graph;
pub mod synth;
pub mod trainer;
