// SPDX-License-Identifier: Apache-2.0

//! Sampling rule generators.
//!
//! Each method turns a [`SamplingConfig`] into the block of table-0 rules
//! (plus a select group for the hash method) that decides which flows are
//! sent to the controller:
//!
//! * IP suffix: one wildcard entry matching the low `m` bits of the source
//!   address (and the low `n` bits of the destination in pair mode).
//!   Rate `1 / (2^m * 2^n)`.
//! * Ports: `m` random source ports, one entry per port and protocol.
//!   Rate `m / 65535`. In pair mode `m` source and `n` destination ports are
//!   checked in two stages, costing `m + n` entries per protocol, for a rate
//!   of `m * n / 65535^2`.
//! * Hash: every packet goes through a select group whose sample bucket has
//!   weight `s` and whose drop bucket has weight `d`. Rate `s / (s + d)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_rational::Ratio;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::switch::{
    priority, Action, Bucket, FlowEntry, GroupEntry, GroupId, IpMatch, MatchFields, PortSet,
    FORWARD_TABLE,
};
use crate::types::Protocol;

pub use crate::switch::select_bucket;

/// Exact sampling rate.
pub type Rate = Ratio<u128>;

/// Number of usable port values (port 0 is never drawn).
pub const PORT_SPACE: u32 = 65535;

/// Group id used by the hash-based method.
pub const SAMPLING_GROUP: GroupId = GroupId(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    IpSuffix,
    PortBased,
    HashBased,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::IpSuffix, Method::PortBased, Method::HashBased];

    pub const fn as_str(self) -> &'static str {
        match self {
            Method::IpSuffix => "ip",
            Method::PortBased => "port",
            Method::HashBased => "hash",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Method {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ip" | "ip-suffix" | "ip_suffix" => Ok(Method::IpSuffix),
            "port" | "ports" => Ok(Method::PortBased),
            "hash" => Ok(Method::HashBased),
            _ => Err(SamplingError::UnknownToken),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    SourceOnly,
    Pair,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::SourceOnly, Mode::Pair];

    pub const fn as_str(self) -> &'static str {
        match self {
            Mode::SourceOnly => "source",
            Mode::Pair => "pair",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Mode {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" | "src" | "source-only" => Ok(Mode::SourceOnly),
            "pair" => Ok(Mode::Pair),
            _ => Err(SamplingError::UnknownToken),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SamplingError {
    #[error("IP suffix length {0} exceeds 32 bits")]
    SuffixTooLong(u32),
    #[error("port count {0} exceeds 65535")]
    TooManyPorts(u32),
    #[error("port method needs at least one port on each checked side")]
    EmptyPortSet,
    #[error("hash method needs a sample weight of at least 1")]
    ZeroSampleWeight,
    #[error("sampling rate must lie in (0, 1]")]
    RateOutOfRange,
    #[error("rate is too small to express with bucket weights")]
    RateTooSmall,
    #[error("unrecognised method or mode")]
    UnknownToken,
}

/// Which method to use and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SamplingConfig {
    pub method: Method,
    pub mode: Mode,
    /// Source suffix bits (IP) or source port count (ports).
    pub m: u32,
    /// Destination counterpart of `m`. Ignored in source-only mode.
    pub n: u32,
    pub sample_weight: u32,
    pub drop_weight: u32,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn ip_suffix(mode: Mode, m: u32, n: u32, seed: u64) -> Self {
        SamplingConfig {
            method: Method::IpSuffix,
            mode,
            m,
            n: if mode == Mode::Pair { n } else { 0 },
            sample_weight: 0,
            drop_weight: 0,
            seed,
        }
    }

    pub fn ports(mode: Mode, m: u32, n: u32, seed: u64) -> Self {
        SamplingConfig {
            method: Method::PortBased,
            ..SamplingConfig::ip_suffix(mode, m, n, seed)
        }
    }

    pub fn hash(sample_weight: u32, drop_weight: u32, seed: u64) -> Self {
        SamplingConfig {
            method: Method::HashBased,
            mode: Mode::SourceOnly,
            m: 0,
            n: 0,
            sample_weight,
            drop_weight,
            seed,
        }
    }

    /// Monitors every flow.
    pub fn all_flows(seed: u64) -> Self {
        SamplingConfig::hash(1, 0, seed)
    }

    /// Parameters whose rate is closest to `rate` for the given method.
    ///
    /// IP suffix picks the nearest power of two and splits the bits as
    /// `m = ceil(b/2)`, `n = floor(b/2)` in pair mode. Ports use
    /// `m = round(rate * 65535)`, or `m = n = round(sqrt(rate) * 65535)` in
    /// pair mode. Hash uses weights `(1, round(1/rate) - 1)`. The rate that
    /// is actually achieved is [`SamplingConfig::closed_form_rate`].
    pub fn for_rate(method: Method, mode: Mode, rate: Rate, seed: u64) -> Result<Self, SamplingError> {
        let (p, q) = (*rate.numer(), *rate.denom());
        if p == 0 || p > q {
            return Err(SamplingError::RateOutOfRange);
        }
        let cfg = match method {
            Method::IpSuffix => {
                let max_bits = if mode == Mode::Pair { 64 } else { 32 };
                let target = p as f64 / q as f64;
                let bits = (0..=max_bits)
                    .min_by(|&a, &b| {
                        let da = (target - pow2_neg(a)).abs();
                        let db = (target - pow2_neg(b)).abs();
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                match mode {
                    Mode::SourceOnly => SamplingConfig::ip_suffix(mode, bits, 0, seed),
                    Mode::Pair => SamplingConfig::ip_suffix(mode, bits.div_ceil(2), bits / 2, seed),
                }
            }
            Method::PortBased => {
                let space = u128::from(PORT_SPACE);
                let count = match mode {
                    Mode::SourceOnly => (2 * space * p + q) / (2 * q),
                    Mode::Pair => {
                        // round(sqrt(space^2 * p / q)) without floating point
                        let c = (space * space * p / q).isqrt();
                        if 4 * space * space * p >= (2 * c + 1) * (2 * c + 1) * q {
                            c + 1
                        } else {
                            c
                        }
                    }
                };
                let count = count.clamp(1, space) as u32;
                SamplingConfig::ports(mode, count, count, seed)
            }
            Method::HashBased => {
                let inv = (2 * q + p) / (2 * p);
                let drop = u32::try_from(inv - 1).map_err(|_| SamplingError::RateTooSmall)?;
                SamplingConfig::hash(1, drop, seed)
            }
        };
        Ok(cfg)
    }

    /// Same parameters, different random draw.
    pub fn reseeded(&self, seed: u64) -> Self {
        SamplingConfig { seed, ..*self }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let n = self.dst_param();
        match self.method {
            Method::IpSuffix => {
                for bits in [self.m, n] {
                    if bits > 32 {
                        return Err(SamplingError::SuffixTooLong(bits));
                    }
                }
            }
            Method::PortBased => {
                for count in [self.m, n] {
                    if count > PORT_SPACE {
                        return Err(SamplingError::TooManyPorts(count));
                    }
                }
                if self.m == 0 || (self.mode == Mode::Pair && n == 0) {
                    return Err(SamplingError::EmptyPortSet);
                }
            }
            Method::HashBased => {
                if self.sample_weight == 0 {
                    return Err(SamplingError::ZeroSampleWeight);
                }
            }
        }
        Ok(())
    }

    /// Rate given by the closed-form expression for this method.
    pub fn closed_form_rate(&self) -> Rate {
        let n = self.dst_param();
        match self.method {
            Method::IpSuffix => Rate::new(1, 1u128 << (self.m + n)),
            Method::PortBased => {
                let space = u128::from(PORT_SPACE);
                match self.mode {
                    Mode::SourceOnly => Rate::new(u128::from(self.m), space),
                    Mode::Pair => Rate::new(u128::from(self.m) * u128::from(n), space * space),
                }
            }
            Method::HashBased => Rate::new(
                u128::from(self.sample_weight),
                u128::from(self.sample_weight) + u128::from(self.drop_weight),
            ),
        }
    }

    /// Builds the rule set for this configuration.
    pub fn generate(&self) -> Result<RuleSet, SamplingError> {
        match self.method {
            Method::IpSuffix => gen_ip_suffix_rules(self),
            Method::PortBased => gen_port_rules(self),
            Method::HashBased => gen_hash_rules(self),
        }
    }

    fn dst_param(&self) -> u32 {
        match self.mode {
            Mode::SourceOnly => 0,
            Mode::Pair => self.n,
        }
    }
}

fn pow2_neg(bits: u32) -> f64 {
    let mut x = 1.0f64;
    for _ in 0..bits {
        x *= 0.5;
    }
    x
}

/// Sampling block for table 0: flow entries at the sampling priority and
/// any groups they reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub config: SamplingConfig,
    pub flow_entries: Vec<FlowEntry>,
    pub groups: Vec<GroupEntry>,
    pub theoretical_rate: Rate,
}

impl RuleSet {
    /// Hardware entries the rule set occupies. A folded two-stage port entry
    /// counts one entry per checked source port plus one per destination
    /// port.
    pub fn entry_count(&self) -> usize {
        self.flow_entries.iter().map(entry_cost).sum()
    }

    /// Entries attributable to one protocol. Port rules are duplicated for
    /// TCP and UDP; the other methods use protocol-agnostic entries.
    pub fn entries_per_protocol(&self) -> usize {
        match self.config.method {
            Method::PortBased => self
                .flow_entries
                .iter()
                .filter(|e| e.match_fields.protocol == Some(Protocol::Tcp))
                .map(entry_cost)
                .sum(),
            _ => self.entry_count(),
        }
    }
}

fn entry_cost(e: &FlowEntry) -> usize {
    let m = &e.match_fields;
    match (&m.src_port_set, &m.dst_port_set) {
        (None, None) => 1,
        (s, d) => s.as_ref().map_or(0, PortSet::len) + d.as_ref().map_or(0, PortSet::len),
    }
}

fn sampling_actions() -> Vec<Action> {
    vec![Action::OutputToController, Action::GotoTable(FORWARD_TABLE)]
}

/// One wildcard entry on IP suffixes drawn uniformly with the config seed.
pub fn gen_ip_suffix_rules(cfg: &SamplingConfig) -> Result<RuleSet, SamplingError> {
    debug_assert_eq!(cfg.method, Method::IpSuffix);
    cfg.validate()?;
    let n = cfg.dst_param();
    if cfg.m + n == 0 {
        log::warn!("IP suffix sampling with no checked bits selects every flow");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let src_suffix = rng.random_range(0..1u64 << cfg.m) as u32;
    let mut fields = MatchFields::any().with_src_ip(IpMatch::suffix(src_suffix, cfg.m));
    if cfg.mode == Mode::Pair {
        let dst_suffix = rng.random_range(0..1u64 << n) as u32;
        fields = fields.with_dst_ip(IpMatch::suffix(dst_suffix, n));
    }
    let rules = RuleSet {
        config: *cfg,
        flow_entries: vec![FlowEntry::new(fields, priority::SAMPLING, sampling_actions())],
        groups: Vec::new(),
        theoretical_rate: cfg.closed_form_rate(),
    };
    Ok(rules)
}

fn draw_ports(rng: &mut ChaCha8Rng, count: u32) -> Vec<u16> {
    let mut ports: Vec<u16> = index::sample(rng, PORT_SPACE as usize, count as usize)
        .into_iter()
        .map(|i| (i + 1) as u16)
        .collect();
    ports.sort_unstable();
    ports
}

/// Port-set rules. The same port draw is used for TCP and UDP.
pub fn gen_port_rules(cfg: &SamplingConfig) -> Result<RuleSet, SamplingError> {
    debug_assert_eq!(cfg.method, Method::PortBased);
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let src_ports = draw_ports(&mut rng, cfg.m);
    let flow_entries = match cfg.mode {
        Mode::SourceOnly => Protocol::ALL
            .iter()
            .flat_map(|&proto| {
                src_ports.iter().map(move |&port| {
                    FlowEntry::new(
                        MatchFields::any().with_protocol(proto).with_src_port(port),
                        priority::SAMPLING,
                        sampling_actions(),
                    )
                })
            })
            .collect(),
        Mode::Pair => {
            let dst_ports = draw_ports(&mut rng, cfg.n);
            let srcs = PortSet::from_ports(src_ports);
            let dsts = PortSet::from_ports(dst_ports);
            Protocol::ALL
                .iter()
                .map(|&proto| {
                    FlowEntry::new(
                        MatchFields::any()
                            .with_protocol(proto)
                            .with_src_port_set(srcs.clone())
                            .with_dst_port_set(dsts.clone()),
                        priority::SAMPLING,
                        sampling_actions(),
                    )
                })
                .collect()
        }
    };
    Ok(RuleSet {
        config: *cfg,
        flow_entries,
        groups: Vec::new(),
        theoretical_rate: cfg.closed_form_rate(),
    })
}

/// Match-all entry feeding a two-bucket select group: bucket 0 copies the
/// packet to the controller, bucket 1 drops the copy.
pub fn gen_hash_rules(cfg: &SamplingConfig) -> Result<RuleSet, SamplingError> {
    debug_assert_eq!(cfg.method, Method::HashBased);
    cfg.validate()?;
    let group = GroupEntry {
        group_id: SAMPLING_GROUP,
        hash_basis: cfg.seed,
        buckets: vec![
            Bucket {
                weight: cfg.sample_weight,
                actions: vec![Action::OutputToController],
            },
            Bucket {
                weight: cfg.drop_weight,
                actions: vec![Action::Drop],
            },
        ],
    };
    let entry = FlowEntry::new(
        MatchFields::any(),
        priority::SAMPLING,
        vec![Action::Group(SAMPLING_GROUP), Action::GotoTable(FORWARD_TABLE)],
    );
    Ok(RuleSet {
        config: *cfg,
        flow_entries: vec![entry],
        groups: vec![group],
        theoretical_rate: cfg.closed_form_rate(),
    })
}

/// Rate of a rule set, read off the installed rules themselves rather than
/// the configuration that produced them.
pub fn theoretical_rate(rules: &RuleSet) -> Rate {
    if let Some(group) = rules.groups.first() {
        let sampled: u128 = group
            .buckets
            .iter()
            .filter(|b| b.actions.contains(&Action::OutputToController))
            .map(|b| u128::from(b.weight))
            .sum();
        return Rate::new(sampled, u128::from(group.total_weight()));
    }
    let space = u128::from(PORT_SPACE);
    let Some(first) = rules.flow_entries.first() else {
        return Rate::new(0, 1);
    };
    let m = &first.match_fields;
    if let (Some(s), Some(d)) = (&m.src_port_set, &m.dst_port_set) {
        return Rate::new(s.len() as u128 * d.len() as u128, space * space);
    }
    if m.protocol.is_some() {
        let tcp_ports = rules
            .flow_entries
            .iter()
            .filter(|e| e.match_fields.protocol == Some(Protocol::Tcp))
            .count();
        return Rate::new(tcp_ports as u128, space);
    }
    let bits = m.src_ip.map_or(0, |x| x.mask().count_ones())
        + m.dst_ip.map_or(0, |x| x.mask().count_ones());
    Rate::new(1, 1u128 << bits)
}

/// Lossy conversion for reporting.
pub fn rate_to_f64(rate: &Rate) -> f64 {
    *rate.numer() as f64 / *rate.denom() as f64
}
