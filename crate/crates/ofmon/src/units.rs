// SPDX-License-Identifier: Apache-2.0

//! Parsing of rates and durations given on the command line or in configs.

use ofmon_core::Rate;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnitError {
    #[error("invalid rate `{0}`: expected a fraction such as 1/64")]
    Rate(String),
    #[error("rate `{0}` must lie in (0, 1]")]
    RateRange(String),
    #[error("invalid duration `{0}`: expected an integer with unit ns, us, ms, s or m")]
    Duration(String),
}

/// Parses an exact rate: `1/64`, `3/1000` or `1`. Decimal notation is
/// rejected so rates stay exact.
pub fn parse_rate(s: &str) -> Result<Rate, UnitError> {
    let t = s.trim();
    let (p, q) = match t.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (t, "1"),
    };
    let p: u128 = p.parse().map_err(|_| UnitError::Rate(s.to_owned()))?;
    let q: u128 = q.parse().map_err(|_| UnitError::Rate(s.to_owned()))?;
    if p == 0 || q == 0 || p > q {
        return Err(UnitError::RateRange(s.to_owned()));
    }
    Ok(Rate::new(p, q))
}

pub fn format_rate(rate: &Rate) -> String {
    format!("{}/{}", rate.numer(), rate.denom())
}

/// Parses `250ms`, `15s`, `2m`, `10us` or a bare nanosecond count.
pub fn parse_duration_ns(s: &str) -> Result<u64, UnitError> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: u64 = num.parse().map_err(|_| UnitError::Duration(s.to_owned()))?;
    let scale: u64 = match unit.trim() {
        "" | "ns" => 1,
        "us" => 1_000,
        "ms" => 1_000_000,
        "s" => 1_000_000_000,
        "m" | "min" => 60_000_000_000,
        _ => return Err(UnitError::Duration(s.to_owned())),
    };
    value
        .checked_mul(scale)
        .ok_or_else(|| UnitError::Duration(s.to_owned()))
}

/// Renders nanoseconds with the largest unit that divides them exactly.
pub fn format_duration_ns(ns: u64) -> String {
    const UNITS: [(u64, &str); 4] = [
        (1_000_000_000, "s"),
        (1_000_000, "ms"),
        (1_000, "us"),
        (1, "ns"),
    ];
    if ns == 0 {
        return "0s".to_owned();
    }
    let (scale, unit) = UNITS
        .iter()
        .find(|(scale, _)| ns % scale == 0)
        .copied()
        .unwrap_or((1, "ns"));
    format!("{}{unit}", ns / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert_eq!(parse_rate("1/64").unwrap(), Rate::new(1, 64));
        assert_eq!(parse_rate(" 2/128 ").unwrap(), Rate::new(1, 64));
        assert_eq!(parse_rate("1").unwrap(), Rate::new(1, 1));
        assert!(matches!(parse_rate("0.5"), Err(UnitError::Rate(_))));
        assert!(matches!(parse_rate("3/2"), Err(UnitError::RateRange(_))));
        assert!(matches!(parse_rate("0/5"), Err(UnitError::RateRange(_))));
        assert_eq!(format_rate(&Rate::new(2, 512)), "1/256");
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration_ns("15s").unwrap(), 15_000_000_000);
        assert_eq!(parse_duration_ns("50ms").unwrap(), 50_000_000);
        assert_eq!(parse_duration_ns("7").unwrap(), 7);
        assert_eq!(parse_duration_ns("3us").unwrap(), 3_000);
        assert!(parse_duration_ns("1.5s").is_err());
        assert!(parse_duration_ns("ms").is_err());
        assert_eq!(format_duration_ns(50_000_000), "50ms");
        assert_eq!(format_duration_ns(1_500), "1500ns");
        assert_eq!(format_duration_ns(0), "0s");
    }
}
