//! Distilling LLM-written explanations into a small joint classify-then-explain
//! model for implicit discourse relations.

pub mod corpus;
pub mod distill;
pub mod eval;
pub mod model;
pub mod train;
