//! Quantum autoencoder toolkit: dense complex linear algebra, pure-state and
//! density-matrix machinery, piecewise-constant control dynamics, optimal
//! compression bounds with an analytic encoder construction, four closed-loop
//! learning algorithms, a simulated optical two-qubit gate, and a seeded
//! experiment harness.

pub mod autoencoder;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optical;
pub mod optimizers;
pub mod state;

pub use error::{QaeError, Result};
