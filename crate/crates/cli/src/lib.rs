// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment harness behind the `bgrape` binary: config loading, the
//! subcommands, and the CSV/JSON formats they write.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;
