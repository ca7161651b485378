//! Relation-driven retrieval over multiple time series.

pub mod datamodel;
pub mod matcher;
pub mod preprocess;
pub mod querymodel;
pub mod recommender;
pub mod relations;
pub mod store;
pub mod synth;
pub mod wire;
