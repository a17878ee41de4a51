//! Experimentation toolkit for span-corruption protein language models.

pub mod autograd;
pub mod corpus;
pub mod corruption;
pub mod downstream;
pub mod generation;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod training;
