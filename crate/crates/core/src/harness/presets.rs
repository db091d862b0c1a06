//! Built-in scenarios for the four experimental cases.

use crate::cc::ControllerKind;
use crate::netem::{
    normalize_trace, parse_trace_csv, CapacityPattern, DelayModel, JitterProfile, TraceSample,
};
use crate::sim::Scenario;

pub const PRESETS: [&str; 6] = ["case1", "case2", "case3", "case4a", "case4b", "case4c"];

/// Raw synthetic cellular trace; scaled onto 0–5 Mbps when used.
pub const CASE3_TRACE_CSV: &str = include_str!("../../data/case3_trace.csv");

pub const DEFAULT_DURATION_S: f64 = 120.0;
pub const DEFAULT_SEED_COUNT: u64 = 5;

const JITTER_PROBABILITIES: [f64; 4] = [0.85, 0.10, 0.04, 0.01];

fn jitter(delays_ms: [f64; 4]) -> DelayModel {
    let entries: Vec<(f64, f64)> = delays_ms.into_iter().zip(JITTER_PROBABILITIES).collect();
    DelayModel::Jitter {
        profile: JitterProfile::new(&entries),
    }
}

pub fn case3_trace() -> Vec<TraceSample> {
    let raw = parse_trace_csv(CASE3_TRACE_CSV.as_bytes()).expect("bundled trace parses");
    normalize_trace(&raw, 5.0).expect("bundled trace normalizes")
}

/// Looks up a preset by name, configured for `controller` and `seed`.
pub fn preset(name: &str, controller: ControllerKind, seed: u64) -> Option<Scenario> {
    let mut s = Scenario::new(name, controller);
    s.seed = seed;
    s.duration_s = DEFAULT_DURATION_S;
    match name {
        "case1" => s.link.capacity = CapacityPattern::Constant { mbps: 3.0 },
        "case2" => {
            s.link.capacity = CapacityPattern::SquareWave {
                low_mbps: 2.5,
                high_mbps: 4.0,
                half_period_s: 10.0,
            }
        }
        "case3" => {
            s.link.capacity = CapacityPattern::Trace {
                samples: case3_trace(),
            }
        }
        "case4a" | "case4b" | "case4c" => {
            s.link.capacity = CapacityPattern::Constant { mbps: 5.0 };
            s.link.forward_delay = match name {
                "case4a" => jitter([10.0, 12.0, 14.0, 16.0]),
                "case4b" => jitter([10.0, 14.0, 18.0, 22.0]),
                _ => jitter([10.0, 18.0, 26.0, 34.0]),
            };
        }
        _ => return None,
    }
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in PRESETS {
            for kind in ControllerKind::ALL {
                preset(name, kind, 1).unwrap().validate().unwrap();
            }
        }
        assert!(preset("case9", ControllerKind::Gcc, 1).is_none());
    }

    #[test]
    fn case3_trace_spans_zero_to_five() {
        let t = case3_trace();
        let max = t.iter().map(|s| s.mbps).fold(f64::MIN, f64::max);
        let min = t.iter().map(|s| s.mbps).fold(f64::MAX, f64::min);
        assert!((max - 5.0).abs() < 1e-9);
        assert!((min - 0.1).abs() < 1e-9);
        assert!(t.last().unwrap().t_s >= DEFAULT_DURATION_S);
    }

    #[test]
    fn jitter_profiles_have_expected_means() {
        let mean = |name| match preset(name, ControllerKind::Gcc, 0)
            .unwrap()
            .link
            .forward_delay
        {
            DelayModel::Jitter { profile } => profile.mean_ms(),
            _ => unreachable!(),
        };
        assert!((mean("case4a") - 10.42).abs() < 1e-9);
        assert!((mean("case4b") - 10.84).abs() < 1e-9);
        assert!((mean("case4c") - 11.68).abs() < 1e-9);
    }
}
