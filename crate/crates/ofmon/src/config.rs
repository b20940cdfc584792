// SPDX-License-Identifier: Apache-2.0

//! Campaign configuration files (TOML).
//!
//! ```toml
//! seed = 42
//! trials = 100
//! output_dir = "results"
//! experiments = ["rate", "wmrd", "overhead", "export"]
//!
//! [trace]
//! path = "trace.csv.gz"      # or a [trace.synthetic] table
//! randomize_seed = 9         # optional key randomization
//!
//! [controller]
//! idle_timeout = "15s"
//! hard_timeout = "0s"
//! install_delay = "0s"
//!
//! [[sampling]]
//! method = "ip"
//! modes = ["source", "pair"]
//! rates = ["1/64", "1/128"]
//!
//! [overhead]
//! delays = ["1ms", "5ms", "10ms"]
//! rate = "1"
//! ```

use std::path::{Path, PathBuf};

use ofmon_core::{ControllerConfig, Method, Mode, Rate, SamplingConfig};
use serde::Deserialize;

use crate::export::Format;
use crate::synth::SyntheticSpec;
use crate::units::{parse_duration_ns, parse_rate};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("trace not found: {}", .0.display())]
    TraceNotFound(PathBuf),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    trials: u32,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    experiments: Vec<String>,
    #[serde(default = "default_format")]
    format: Format,
    trace: RawTrace,
    #[serde(default)]
    controller: RawController,
    #[serde(default)]
    sampling: Vec<RawSweep>,
    overhead: Option<RawOverhead>,
}

fn one() -> u32 {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_format() -> Format {
    Format::Csv
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    path: Option<PathBuf>,
    synthetic: Option<SyntheticSpec>,
    randomize_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    idle_timeout: Option<String>,
    hard_timeout: Option<String>,
    install_delay: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    method: String,
    #[serde(default)]
    modes: Vec<String>,
    rates: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverhead {
    delays: Vec<String>,
    method: Option<String>,
    mode: Option<String>,
    rate: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    CsvFile(PathBuf),
    Synthetic(SyntheticSpec),
}

/// One sampling method swept over modes and rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSweep {
    pub method: Method,
    pub modes: Vec<Mode>,
    pub rates: Vec<Rate>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Experiments {
    pub rate: bool,
    pub wmrd: bool,
    pub overhead: bool,
    pub export: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadSettings {
    pub delays_ns: Vec<u64>,
    pub method: Method,
    pub mode: Mode,
    pub rate: Rate,
}

impl OverheadSettings {
    pub fn sampling(&self, seed: u64) -> Result<SamplingConfig, ofmon_core::SamplingError> {
        SamplingConfig::for_rate(self.method, self.mode, self.rate, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub seed: u64,
    pub trials: u32,
    pub output_dir: PathBuf,
    pub experiments: Experiments,
    pub export_format: Format,
    pub trace: TraceSource,
    pub randomize_seed: Option<u64>,
    pub controller: ControllerConfig,
    pub sampling: Vec<SamplingSweep>,
    pub overhead: Option<OverheadSettings>,
}

fn parse_token<T: std::str::FromStr>(what: &str, s: &str) -> Result<T, ConfigError> {
    s.parse().map_err(|_| invalid(format!("unknown {what} `{s}`")))
}

impl CampaignConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut experiments = Experiments::default();
        for e in &raw.experiments {
            match e.as_str() {
                "rate" => experiments.rate = true,
                "wmrd" => experiments.wmrd = true,
                "overhead" => experiments.overhead = true,
                "export" => experiments.export = true,
                other => return Err(invalid(format!("unknown experiment `{other}`"))),
            }
        }
        if experiments == Experiments::default() {
            return Err(invalid("at least one experiment must be selected"));
        }
        if raw.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }

        let trace = match (raw.trace.path, raw.trace.synthetic) {
            (Some(p), None) => {
                let p = base_dir.join(p);
                if !p.is_file() {
                    return Err(ConfigError::TraceNotFound(p));
                }
                TraceSource::CsvFile(p)
            }
            (None, Some(spec)) => {
                spec.validate().map_err(|e| invalid(e.to_string()))?;
                TraceSource::Synthetic(spec)
            }
            _ => return Err(invalid("trace needs exactly one of `path` or `synthetic`")),
        };

        let dur = |field: &str, v: &Option<String>, default: u64| -> Result<u64, ConfigError> {
            v.as_deref().map_or(Ok(default), |s| {
                parse_duration_ns(s).map_err(|e| invalid(format!("controller.{field}: {e}")))
            })
        };
        let defaults = ControllerConfig::default();
        let controller = ControllerConfig {
            install_delay_ns: dur("install_delay", &raw.controller.install_delay, defaults.install_delay_ns)?,
            idle_timeout_ns: dur("idle_timeout", &raw.controller.idle_timeout, defaults.idle_timeout_ns)?,
            hard_timeout_ns: dur("hard_timeout", &raw.controller.hard_timeout, defaults.hard_timeout_ns)?,
        };
        controller.validate().map_err(|e| invalid(e.to_string()))?;

        let rates = |list: &[String]| -> Result<Vec<Rate>, ConfigError> {
            list.iter()
                .map(|r| parse_rate(r).map_err(|e| invalid(e.to_string())))
                .collect()
        };
        let mut sampling = Vec::new();
        for s in &raw.sampling {
            let method: Method = parse_token("method", &s.method)?;
            let modes = if s.modes.is_empty() {
                vec![Mode::SourceOnly]
            } else {
                s.modes
                    .iter()
                    .map(|m| parse_token("mode", m))
                    .collect::<Result<_, _>>()?
            };
            let rates = rates(&s.rates)?;
            if rates.is_empty() {
                return Err(invalid(format!("sampling `{method}` lists no rates")));
            }
            sampling.push(SamplingSweep { method, modes, rates });
        }
        if (experiments.rate || experiments.wmrd || experiments.export) && sampling.is_empty() {
            return Err(invalid("rate, wmrd and export experiments need a [[sampling]] section"));
        }

        let overhead = match raw.overhead {
            Some(o) => {
                let delays_ns = o
                    .delays
                    .iter()
                    .map(|d| parse_duration_ns(d).map_err(|e| invalid(format!("overhead.delays: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if delays_ns.is_empty() {
                    return Err(invalid("overhead.delays is empty"));
                }
                let settings = OverheadSettings {
                    delays_ns,
                    method: o.method.as_deref().map_or(Ok(Method::HashBased), |m| parse_token("method", m))?,
                    mode: o.mode.as_deref().map_or(Ok(Mode::SourceOnly), |m| parse_token("mode", m))?,
                    rate: o.rate.as_deref().map_or(Ok(Rate::new(1, 1)), |r| {
                        parse_rate(r).map_err(|e| invalid(e.to_string()))
                    })?,
                };
                settings.sampling(0).map_err(|e| invalid(format!("overhead: {e}")))?;
                Some(settings)
            }
            None if experiments.overhead => {
                return Err(invalid("overhead experiment needs an [overhead] section"));
            }
            None => None,
        };

        Ok(CampaignConfig {
            seed: raw.seed,
            trials: raw.trials,
            output_dir: base_dir.join(raw.output_dir),
            experiments,
            export_format: raw.format,
            trace,
            randomize_seed: raw.trace.randomize_seed,
            controller,
            sampling,
            overhead,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"
        seed = 3
        trials = 5
        experiments = ["rate", "overhead"]
        [trace.synthetic]
        flows = 100
        sizes = "geometric:0.5"
        ips = "zipf:1.1"
        gaps = "exp:50ms"
        [[sampling]]
        method = "port"
        modes = ["source", "pair"]
        rates = ["1/64", "1/128"]
        [overhead]
        delays = ["1ms", "100ms"]
    "#;

    #[test]
    fn parses_full_config() {
        let c = CampaignConfig::parse(SYNTH, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.trials, 5);
        assert_eq!(c.output_dir, Path::new("/tmp/x/results"));
        assert!(c.experiments.rate && c.experiments.overhead && !c.experiments.wmrd);
        assert_eq!(c.sampling[0].modes, vec![Mode::SourceOnly, Mode::Pair]);
        assert_eq!(c.sampling[0].rates[1], Rate::new(1, 128));
        let o = c.overhead.unwrap();
        assert_eq!(o.delays_ns, vec![1_000_000, 100_000_000]);
        assert_eq!((o.method, o.rate), (Method::HashBased, Rate::new(1, 1)));
        assert_eq!(c.controller, ControllerConfig::default());
        match c.trace {
            TraceSource::Synthetic(s) => assert_eq!(s.flows, 100),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let err = |text: &str| CampaignConfig::parse(text, Path::new(".")).unwrap_err().to_string();
        assert!(err(&SYNTH.replace("[\"rate\", \"overhead\"]", "[]")).contains("at least one experiment"));
        assert!(err(&SYNTH.replace("\"1/64\"", "\"0.1\"")).contains("invalid rate"));
        assert!(err(&SYNTH.replace("\"port\"", "\"magic\"")).contains("unknown method"));
        assert!(err(&SYNTH.replace("trials = 5", "trials = 5\nbogus = 1")).contains("unknown field"));
        let missing = "experiments=[\"overhead\"]\n[trace]\npath=\"nope.csv\"\n[overhead]\ndelays=[\"1ms\"]\n";
        assert!(err(missing).starts_with("trace not found"));
    }
}
