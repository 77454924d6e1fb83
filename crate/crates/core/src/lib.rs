pub mod baselines;
pub mod cli;
pub mod content_embeddings;
pub mod config;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod nar;
pub mod nn;
pub mod pipeline;
pub mod recommender;
pub mod stream_stats;
