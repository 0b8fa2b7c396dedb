//! Low-rank Parareal for matrix differential equations.
//!
//! States are kept in factored form `U S V^T` ([`LowRankMatrix`]) and
//! propagated with dynamical low-rank approximation (projector splitting)
//! inside a Parareal iteration whose coarse and fine propagators differ only
//! in rank. The [`bounds`] module evaluates the a-priori convergence bounds
//! that the measured errors are compared against.

pub mod bounds;
pub mod dense;
pub mod error;
pub mod integrators;
pub mod lowrank;
pub mod mmio;
pub mod parareal;
pub mod problems;
pub mod rng;

pub use dense::Mat;
pub use error::{Error, Result};
pub use integrators::{FlowMethod, FlowOptions};
pub use lowrank::{LowRankMatrix, SingularSpectrum};
pub use parareal::{FineRank, PararealConfig, PararealOutput};
pub use problems::VectorField;
