//! Core library for the housenav laboratory: a procedurally generated
//! multi-room house simulator with a first-person renderer, a two-level
//! navigation agent trained with policy-gradient RL, a learned goal
//! assessment module that gates episode termination, and an evaluation
//! bench with failure classification.
//!
//! Determinism contract: every public operation that consumes randomness
//! takes an explicit seed or RNG, and identical seeds produce identical
//! results — bit-for-bit — regardless of whether the `parallel` feature
//! is enabled. Collections iterated in compute paths are order-stable
//! (vectors and B-tree maps, never hash maps).

pub mod ckpt;
pub mod config;
pub mod error;
pub mod evalbench;
pub mod exec;
pub mod floorplan;
pub mod ga;
pub mod geom;
pub mod hierarchy;
pub mod lang;
pub mod nn;
pub mod render;
pub mod rl;
pub mod simworld;
pub mod trace;

pub use error::CoreError;
