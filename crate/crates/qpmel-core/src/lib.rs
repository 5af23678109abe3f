//! Quantum projective metric learning.
//!
//! A classical encoder maps data to per-qubit angular coordinates; a
//! linear-time kernel over the Cartesian images of those angles reproduces
//! the fidelity of the corresponding tensor-product quantum states; an
//! episodic prototypical trainer fits the encoder entirely classically; and
//! a brute-force statevector oracle certifies every kernel value.
//!
//! Modules:
//! - [`geometry`]: angle/Cartesian types, conversions, range handling.
//! - [`kernel`]: single-qubit fidelity kernel, multi-qubit product and
//!   additive reductions, analytic gradients.
//! - [`oracle`]: explicit statevectors, exact fidelity, shot-sampled
//!   inversion test.
//! - [`encoder`]: dense trunk + angle-projection heads, manual backprop,
//!   binary checkpoints.
//! - [`trainer`]: episodic prototypical loss, Adam, evaluation with
//!   classical or shot-based similarities.
//! - [`data`]: IDX parsing, preprocessing, synthetic blobs.
//! - [`circuit`]: depth-2 encoding circuits and OpenQASM 2.0 text.
//! - [`verify`]: on-demand certification suites with a mutation hook.
//! - [`rng`]: portable seeded generators behind all of the above.

pub mod circuit;
pub mod data;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod oracle;
pub mod rng;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
