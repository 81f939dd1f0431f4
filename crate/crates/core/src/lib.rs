//! Leader-follower mean-field dynamics with birth/death exchange of mass
//! between the two populations.
//!
//! The crate provides the measure-theoretic toolbox ([`measures`]), the
//! interaction kernels and transition rates, three deterministic solvers for
//! the macroscopic equations, a seeded particle system and a harness that
//! measures how fast the particle system approaches the mean-field limit.

pub mod config;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod macro_solver;
pub mod measures;
pub mod micro_sim;
pub mod presets;
pub mod rates;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
