// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Batch-based stochastic GRAPE for robust, high-precision quantum gates.
//!
//! Piecewise-constant control fields are trained by stochastic gradient
//! descent over mini-batches of sampled Hamiltonian uncertainties. Fixed
//! batches give sample-based GRAPE and a single nominal sample gives plain
//! GRAPE, so all three share one training loop.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod objective;
pub mod optimizer;
pub mod qmat;
pub mod sampling;

pub use error::{Error, Result};
