//! Simulation of resonant dipole-dipole energy transfer between cold Rydberg
//! atoms held in two separated elongated volumes.

pub mod atomic;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod io;
pub mod scalar;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision forms of the generic core.
pub type Structure = atomic::AtomicStructure<f64>;
pub type Scheme = hamiltonian::LevelScheme<f64>;
pub type Problem = hamiltonian::ManyBodyProblem<f64>;
pub type Evolution = dynamics::EvolutionResult<f64>;

/// Single-precision forms, for throughput studies.
pub type Structure32 = atomic::AtomicStructure<f32>;
pub type Problem32 = hamiltonian::ManyBodyProblem<f32>;
pub type Evolution32 = dynamics::EvolutionResult<f32>;
