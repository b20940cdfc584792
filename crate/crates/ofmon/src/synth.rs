// SPDX-License-Identifier: Apache-2.0

//! Synthetic traces and key randomization.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ofmon_core::hash::derive_seed;
use ofmon_core::{FlowKey, PacketRecord, Protocol};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Pareto, Zipf};
use serde::{Deserialize, Serialize};

use crate::units::{format_duration_ns, parse_duration_ns};

/// Upper bound on packets per flow, so heavy-tailed draws stay finite.
pub const MAX_FLOW_PACKETS: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid {what} `{value}`: {reason}")]
pub struct SpecError {
    pub what: &'static str,
    pub value: String,
    pub reason: &'static str,
}

fn spec_err(what: &'static str, value: &str, reason: &'static str) -> SpecError {
    SpecError {
        what,
        value: value.to_owned(),
        reason,
    }
}

/// Packets per flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SizeDist {
    /// `1 + Geometric(p)`, mean `1/p`.
    Geometric(f64),
    /// `floor(Pareto(min_size, alpha))`.
    ParetoDiscrete { alpha: f64, min_size: u64 },
    Fixed(u64),
}

/// How addresses or ports are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KeyMode {
    UniformRandom,
    /// Zipf with exponent `s` over a pool of random values.
    ZipfSkewed(f64),
}

/// Gap between consecutive packets of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GapDist {
    Exponential { mean_ns: u64 },
    Fixed { gap_ns: u64 },
}

fn params<'a>(s: &'a str) -> (&'a str, Vec<&'a str>) {
    let mut it = s.trim().split(':');
    let name = it.next().unwrap_or_default();
    (name, it.collect())
}

impl FromStr for SizeDist {
    type Err = SpecError;

    /// `geometric:P`, `pareto:ALPHA[:MIN]` or `fixed:K`.
    fn from_str(s: &str) -> Result<Self, SpecError> {
        let bad = |reason| spec_err("size distribution", s, reason);
        let (name, args) = params(s);
        let float = |i: usize| -> Result<f64, SpecError> {
            args.get(i)
                .and_then(|a| a.parse::<f64>().ok())
                .ok_or_else(|| bad("missing or non-numeric parameter"))
        };
        let int = |i: usize| -> Result<u64, SpecError> {
            args.get(i)
                .and_then(|a| a.parse::<u64>().ok())
                .ok_or_else(|| bad("missing or non-integer parameter"))
        };
        let d = match (name, args.len()) {
            ("geometric", 1) => SizeDist::Geometric(float(0)?),
            ("pareto", 1) => SizeDist::ParetoDiscrete {
                alpha: float(0)?,
                min_size: 1,
            },
            ("pareto", 2) => SizeDist::ParetoDiscrete {
                alpha: float(0)?,
                min_size: int(1)?,
            },
            ("fixed", 1) => SizeDist::Fixed(int(0)?),
            _ => return Err(bad("expected geometric:P, pareto:ALPHA[:MIN] or fixed:K")),
        };
        d.validate().map_err(bad)?;
        Ok(d)
    }
}

impl SizeDist {
    fn validate(&self) -> Result<(), &'static str> {
        match *self {
            SizeDist::Geometric(p) if !(p > 0.0 && p <= 1.0) => Err("p must lie in (0, 1]"),
            SizeDist::ParetoDiscrete { alpha, .. } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err("alpha must be positive")
            }
            SizeDist::ParetoDiscrete { min_size: 0, .. } | SizeDist::Fixed(0) => {
                Err("flows need at least one packet")
            }
            _ => Ok(()),
        }
    }

    fn sampler(&self) -> SizeSampler {
        match *self {
            SizeDist::Geometric(p) => SizeSampler::Geometric(Geometric::new(p).expect("validated")),
            SizeDist::ParetoDiscrete { alpha, min_size } => {
                SizeSampler::Pareto(Pareto::new(min_size as f64, alpha).expect("validated"))
            }
            SizeDist::Fixed(k) => SizeSampler::Fixed(k),
        }
    }
}

enum SizeSampler {
    Geometric(Geometric),
    Pareto(Pareto<f64>),
    Fixed(u64),
}

impl SizeSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let k = match self {
            SizeSampler::Geometric(g) => g.sample(rng).saturating_add(1),
            SizeSampler::Pareto(p) => p.sample(rng).floor() as u64,
            SizeSampler::Fixed(k) => *k,
        };
        k.clamp(1, MAX_FLOW_PACKETS)
    }
}

impl fmt::Display for SizeDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeDist::Geometric(p) => write!(f, "geometric:{p}"),
            SizeDist::ParetoDiscrete { alpha, min_size } => write!(f, "pareto:{alpha}:{min_size}"),
            SizeDist::Fixed(k) => write!(f, "fixed:{k}"),
        }
    }
}

impl FromStr for KeyMode {
    type Err = SpecError;

    /// `uniform` or `zipf:S`.
    fn from_str(s: &str) -> Result<Self, SpecError> {
        let bad = |reason| spec_err("key distribution", s, reason);
        match params(s) {
            ("uniform", a) if a.is_empty() => Ok(KeyMode::UniformRandom),
            ("zipf", a) if a.len() == 1 => {
                let e: f64 = a[0].parse().map_err(|_| bad("non-numeric exponent"))?;
                if e > 0.0 && e.is_finite() {
                    Ok(KeyMode::ZipfSkewed(e))
                } else {
                    Err(bad("exponent must be positive"))
                }
            }
            _ => Err(bad("expected uniform or zipf:S")),
        }
    }
}

impl fmt::Display for KeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyMode::UniformRandom => f.write_str("uniform"),
            KeyMode::ZipfSkewed(s) => write!(f, "zipf:{s}"),
        }
    }
}

impl FromStr for GapDist {
    type Err = SpecError;

    /// `exp:MEAN` or `fixed:GAP`, durations with units (`50ms`).
    fn from_str(s: &str) -> Result<Self, SpecError> {
        let bad = |reason| spec_err("gap distribution", s, reason);
        let (name, args) = params(s);
        let dur = || -> Result<u64, SpecError> {
            match args.as_slice() {
                [d] => parse_duration_ns(d).map_err(|_| bad("invalid duration")),
                _ => Err(bad("expected one duration parameter")),
            }
        };
        match name {
            "exp" => match dur()? {
                0 => Err(bad("mean must be positive")),
                mean_ns => Ok(GapDist::Exponential { mean_ns }),
            },
            "fixed" => Ok(GapDist::Fixed { gap_ns: dur()? }),
            _ => Err(bad("expected exp:MEAN or fixed:GAP")),
        }
    }
}

impl fmt::Display for GapDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapDist::Exponential { mean_ns } => write!(f, "exp:{}", format_duration_ns(*mean_ns)),
            GapDist::Fixed { gap_ns } => write!(f, "fixed:{}", format_duration_ns(*gap_ns)),
        }
    }
}

macro_rules! string_conversions {
    ($($t:ty),*) => {$(
        impl TryFrom<String> for $t {
            type Error = SpecError;
            fn try_from(s: String) -> Result<Self, SpecError> {
                s.parse()
            }
        }
        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_string()
            }
        }
    )*};
}
string_conversions!(SizeDist, KeyMode, GapDist);

/// Parameters of a synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub flows: u64,
    #[serde(default = "default_sizes")]
    pub sizes: SizeDist,
    #[serde(default = "default_keys")]
    pub ips: KeyMode,
    #[serde(default = "default_keys")]
    pub ports: KeyMode,
    /// Fraction of TCP flows; the rest are UDP.
    #[serde(default = "default_tcp_fraction")]
    pub tcp_fraction: f64,
    #[serde(default = "default_gaps")]
    pub gaps: GapDist,
    /// Probability that a flow takes the typical size of its source host
    /// or source port instead of an independent draw. Only pooled (Zipf)
    /// keys have typical sizes. Each flow's size distribution is unchanged;
    /// flows sharing a heavy host or port become correlated.
    #[serde(default)]
    pub size_coupling: f64,
    /// Flow start times are uniform over `[0, duration)`.
    #[serde(default = "default_duration", with = "duration_str")]
    pub duration_ns: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_sizes() -> SizeDist {
    SizeDist::Geometric(0.5)
}
fn default_keys() -> KeyMode {
    KeyMode::UniformRandom
}
fn default_tcp_fraction() -> f64 {
    0.8
}
fn default_gaps() -> GapDist {
    GapDist::Exponential { mean_ns: 50_000_000 }
}
fn default_duration() -> u64 {
    60_000_000_000
}

pub(crate) mod duration_str {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::units::{format_duration_ns, parse_duration_ns};

    pub fn serialize<S: Serializer>(ns: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_duration_ns(*ns))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        parse_duration_ns(&s).map_err(serde::de::Error::custom)
    }
}

impl SyntheticSpec {
    pub fn new(flows: u64, seed: u64) -> Self {
        SyntheticSpec {
            flows,
            sizes: default_sizes(),
            ips: default_keys(),
            ports: default_keys(),
            tcp_fraction: default_tcp_fraction(),
            size_coupling: 0.0,
            gaps: default_gaps(),
            duration_ns: default_duration(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let v = |what, value: String, reason| SpecError { what, value, reason };
        if self.flows == 0 {
            return Err(v("flow count", "0".into(), "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.tcp_fraction) {
            return Err(v("tcp fraction", self.tcp_fraction.to_string(), "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.size_coupling) {
            return Err(v("size coupling", self.size_coupling.to_string(), "must lie in [0, 1]"));
        }
        if self.duration_ns == 0 {
            return Err(v("duration", "0".into(), "must be positive"));
        }
        self.sizes
            .validate()
            .map_err(|r| v("size distribution", self.sizes.to_string(), r))
    }
}

/// Draws values uniformly or from a Zipf law over a fixed random pool.
enum KeySampler<T> {
    Uniform,
    Zipf { pool: Vec<T>, zipf: Zipf<f64> },
}

impl<T: Copy> KeySampler<T> {
    fn new(mode: KeyMode, pool: impl FnOnce() -> Vec<T>) -> Self {
        match mode {
            KeyMode::UniformRandom => KeySampler::Uniform,
            KeyMode::ZipfSkewed(s) => {
                let pool = pool();
                let zipf = Zipf::new(pool.len() as f64, s).expect("positive pool and exponent");
                KeySampler::Zipf { pool, zipf }
            }
        }
    }

    /// A value and, for pooled draws, its pool index.
    fn sample<R: Rng>(&self, rng: &mut R, uniform: impl FnOnce(&mut R) -> T) -> (T, Option<usize>) {
        match self {
            KeySampler::Uniform => (uniform(rng), None),
            KeySampler::Zipf { pool, zipf } => {
                let i = (zipf.sample(rng) as usize).clamp(1, pool.len()) - 1;
                (pool[i], Some(i))
            }
        }
    }

    fn pool_len(&self) -> usize {
        match self {
            KeySampler::Uniform => 0,
            KeySampler::Zipf { pool, .. } => pool.len(),
        }
    }
}

fn random_port<R: Rng>(rng: &mut R) -> u16 {
    rng.random_range(1..=u16::MAX)
}

/// Generates a trace: distinct keys per flow, sizes from the size
/// distribution, packets of all flows merged by timestamp.
pub fn generate_trace(spec: &SyntheticSpec) -> Result<Vec<PacketRecord>, SpecError> {
    spec.validate()?;
    let flows = spec.flows as usize;
    let mut key_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0));
    let mut flow_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1));

    let host_pool = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..flows.max(2)).map(|_| rng.random()).collect() };
    let src_ips = KeySampler::new(spec.ips, || host_pool(&mut key_rng));
    let dst_ips = KeySampler::new(spec.ips, || host_pool(&mut key_rng));
    let port_pool = |rng: &mut ChaCha8Rng| -> Vec<u16> {
        let mut ports: Vec<u16> = (1..=u16::MAX).collect();
        ports.shuffle(rng);
        ports
    };
    let src_ports = KeySampler::new(spec.ports, || port_pool(&mut key_rng));
    let dst_ports = KeySampler::new(spec.ports, || port_pool(&mut key_rng));

    let sizes = spec.sizes.sampler();
    // Typical flow size of each pooled source host and source port.
    let (host_sizes, port_sizes) = if spec.size_coupling > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 2));
        let mut draw = |n: usize| -> Vec<u64> { (0..n).map(|_| sizes.sample(&mut rng)).collect() };
        (draw(src_ips.pool_len()), draw(src_ports.pool_len()))
    } else {
        (Vec::new(), Vec::new())
    };
    let gap_exp = match spec.gaps {
        GapDist::Exponential { mean_ns } => Some(Exp::new(1.0 / mean_ns as f64).expect("positive mean")),
        GapDist::Fixed { .. } => None,
    };

    let mut seen: HashSet<FlowKey> = HashSet::with_capacity(flows);
    let mut trace = Vec::new();
    for _ in 0..flows {
        let protocol = if flow_rng.random_bool(spec.tcp_fraction) {
            Protocol::Tcp
        } else {
            Protocol::Udp
        };
        let mut attempt = 0u32;
        let (key, host, port) = loop {
            let rng = &mut key_rng;
            let (src_ip, host) = src_ips.sample(rng, |r| r.random());
            let (dst_ip, _) = dst_ips.sample(rng, |r| r.random());
            let (mut src_port, mut port) = src_ports.sample(rng, random_port);
            let (dst_port, _) = dst_ports.sample(rng, random_port);
            // Heavy skew can exhaust the pools; fall back to a uniform source port.
            if attempt >= 64 {
                src_port = random_port(rng);
                port = None;
            }
            let key = FlowKey {
                src_ip,
                dst_ip,
                src_port,
                dst_port,
                protocol,
            };
            if seen.insert(key) {
                break (key, host, port);
            }
            attempt += 1;
        };
        let typical: Vec<u64> = [host.and_then(|i| host_sizes.get(i)), port.and_then(|i| port_sizes.get(i))]
            .into_iter()
            .flatten()
            .copied()
            .collect();
        let u: f64 = flow_rng.random();
        let size = if u < spec.size_coupling && !typical.is_empty() {
            typical[((u / spec.size_coupling) * typical.len() as f64) as usize % typical.len()]
        } else {
            sizes.sample(&mut flow_rng)
        };
        let mut ts = flow_rng.random_range(0..spec.duration_ns);
        for i in 0..size {
            if i > 0 {
                ts += match (spec.gaps, &gap_exp) {
                    (_, Some(e)) => e.sample(&mut flow_rng).round() as u64,
                    (GapDist::Fixed { gap_ns }, None) => gap_ns,
                    _ => unreachable!(),
                };
            }
            let len = match protocol {
                Protocol::Tcp => flow_rng.random_range(40..=1500),
                Protocol::Udp => flow_rng.random_range(28..=1500),
            };
            trace.push(PacketRecord {
                timestamp_ns: ts,
                src_ip: key.src_ip,
                dst_ip: key.dst_ip,
                src_port: key.src_port,
                dst_port: key.dst_port,
                protocol,
                length_bytes: len,
            });
        }
    }
    // Stable: equal timestamps keep flow generation order.
    trace.sort_by_key(|p| p.timestamp_ns);
    Ok(trace)
}

/// Replaces every flow key with uniformly random IPs and ports, one fixed
/// draw per distinct key in order of first appearance. Protocol, timestamps
/// and lengths are untouched, and distinct keys stay distinct.
pub fn randomize_trace(trace: &[PacketRecord], seed: u64) -> Vec<PacketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map: std::collections::HashMap<FlowKey, FlowKey> = std::collections::HashMap::new();
    let mut used: HashSet<FlowKey> = HashSet::new();
    trace
        .iter()
        .map(|p| {
            let old = p.flow_key();
            let new = *map.entry(old).or_insert_with(|| loop {
                let k = FlowKey {
                    src_ip: rng.random(),
                    dst_ip: rng.random(),
                    src_port: random_port(&mut rng),
                    dst_port: random_port(&mut rng),
                    protocol: old.protocol,
                };
                if used.insert(k) {
                    break k;
                }
            });
            p.with_key(new)
        })
        .collect()
}
