// SPDX-License-Identifier: Apache-2.0

//! Simulation core for NetFlow-style flow monitoring on an OpenFlow switch.
//!
//! The switch keeps three priority blocks in table 0: per-flow record
//! entries, sampling rules, and a catch-all default. Every entry forwards to
//! table 1, so monitoring is transparent to whatever forwarding happens
//! there. Sampling rules send the first packet(s) of a selected flow to the
//! controller, which reactively installs an exact 5-tuple entry whose
//! counters are pushed back in a `FlowRemoved` message on expiry.
//!
//! Three rule generators are provided: IP-suffix masks, port sets, and a
//! select group keyed by a 5-tuple hash. The [`eval`] module replays traces
//! through the pipeline to measure sampling accuracy, flow size distribution
//! distortion (WMRD) and controller overhead.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, synthetic
//! traces and the command line live in the `ofmon` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod controller;
pub mod eval;
pub mod hash;
pub mod sampling;
pub mod sim;
pub mod switch;
pub mod types;

pub use controller::{Controller, ControllerConfig, ControllerError, FlowMod};
pub use sampling::{Method, Mode, Rate, RuleSet, SamplingConfig, SamplingError};
pub use sim::{replay, RunSummary, SimError, SimOutput, Simulation};
pub use switch::{
    Action, Bucket, EntryId, FlowEntry, GroupEntry, GroupId, MatchFields, PortSet, RemovalReason,
    Switch, SwitchError, SwitchEvent,
};
pub use types::{ExpiryReason, FlowKey, FlowRecord, PacketRecord, Protocol};

pub(crate) type FxHashMap<K, V> = hashbrown::HashMap<K, V, rustc_hash::FxBuildHasher>;
pub(crate) type FxHashSet<K> = hashbrown::HashSet<K, rustc_hash::FxBuildHasher>;
