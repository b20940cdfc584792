// SPDX-License-Identifier: Apache-2.0

//! Keyed 5-tuple hashing and seed derivation.

use crate::types::FlowKey;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// 64-bit finalizer (murmur3 `fmix64`). Every input bit affects every output
/// bit with probability close to one half.
#[inline]
pub const fn mix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

/// Keyed hash over the five tuple fields.
///
/// Only the 5-tuple enters the hash, so all packets of a flow map to the same
/// value for a given `basis`.
#[inline]
pub fn flow_hash(key: &FlowKey, basis: u64) -> u64 {
    let addrs = (u64::from(key.src_ip) << 32) | u64::from(key.dst_ip);
    let rest = (u64::from(key.src_port) << 32)
        | (u64::from(key.dst_port) << 16)
        | u64::from(key.protocol.number());
    let mut h = mix64(basis ^ GOLDEN);
    h = mix64(h ^ addrs);
    mix64(h.wrapping_add(GOLDEN) ^ rest)
}

/// Maps a 64-bit hash onto `[0, total)` by multiply-shift, which keeps the
/// mapping unbiased up to `total / 2^64`.
#[inline]
pub fn scale_to_range(hash: u64, total: u64) -> u64 {
    ((u128::from(hash) * u128::from(total)) >> 64) as u64
}

/// Counter-based seed split: the `index`-th child of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master ^ GOLDEN).wrapping_add(index.wrapping_mul(GOLDEN)) ^ 0x5851_f42d_4c95_7f2d)
}
