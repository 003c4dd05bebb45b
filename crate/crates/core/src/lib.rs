//! Decoherence of a central qubit coupled to a linearly driven transverse
//! Ising ring, with and without stochastic drive-field noise.
//!
//! The chain is never treated as a 2^N problem: after fermionization it
//! splits into independent 2x2 momentum modes, each driven through its
//! avoided crossing by the field ramp. Conditioned on the qubit state the
//! environment evolves under two slightly shifted fields, and the qubit
//! coherence is the product of per-mode branch overlaps. Noise on the drive
//! enters as a scalar Gaussian process (white, or exponentially correlated)
//! and is treated three independent ways that cross-validate each other:
//!
//! * exact averaged master equations with a local memory accumulator
//!   ([`master`]),
//! * a closed-form propagator in parabolic cylinder functions for the
//!   noiseless linear ramp ([`propagator`]),
//! * brute-force Monte Carlo over explicit noise realizations
//!   ([`trajectory`]).
//!
//! [`observables`], [`fit`] and [`nonmarkov`] turn mode-resolved output into
//! the decoherence factor, revival statistics, scaling-law fits and the
//! information-backflow measure. [`pipeline`] wires whole runs together.

// Validation guards use `!(x > 0.0)` deliberately: unlike `x <= 0.0` the
// negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod fit;
pub mod integrate;
pub mod mat2;
pub mod master;
pub mod model;
pub mod noise;
pub mod nonmarkov;
pub mod observables;
pub mod pipeline;
pub mod propagator;
pub mod special;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex::Complex64;
