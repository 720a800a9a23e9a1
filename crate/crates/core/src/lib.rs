//! Reinforcement-learning synthesis of tabular classification pipelines.
//!
//! An agent fills a grid of primitive placeholders cell by cell. A
//! hierarchical tournament over same-size clusters reduces the changing
//! set of legal actions to fixed-width decisions for a dueling Q-network.

pub mod agent;
pub mod environment;
pub mod hstep;
pub mod neuralnet;
pub mod pipeline;
pub mod primitives;
pub mod scalar;
pub mod search;
pub mod seed;
pub mod tabular;
pub mod toy;

pub use scalar::Scalar;

pub type QNetwork32 = neuralnet::QNetwork<f32>;
pub type QNetwork64 = neuralnet::QNetwork<f64>;
pub type Agent32 = agent::Agent<f32>;
pub type Agent64 = agent::Agent<f64>;
pub type Policy32 = agent::Policy<f32>;
pub type Policy64 = agent::Policy<f64>;
