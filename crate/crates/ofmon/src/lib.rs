// SPDX-License-Identifier: Apache-2.0

//! File formats, synthetic traffic, experiment campaigns and the command
//! line for the [`ofmon_core`] simulator.

pub mod campaign;
pub mod cli;
pub mod config;
pub mod export;
pub mod synth;
pub mod trace;
pub mod units;

pub use ofmon_core as core;
