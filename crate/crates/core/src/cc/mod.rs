//! Rate controllers. Each consumes feedback reports and produces a target
//! bitrate for the media source.

pub mod gcc;
pub mod l4s;
pub mod trendline;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gcc::{BandwidthUsage, GccController, GccParams, OveruseDetector, RateState};
pub use l4s::{L4sCcController, L4sGccController, L4sParams};
pub use trendline::{
    compute_delay_gradients, ols_slope, InterGroupDelta, PacketGrouper, TrendlineEstimator,
};

use crate::error::ConfigError;
use crate::types::{FeedbackReport, SimDuration, SimTime};

/// Receive-rate averaging window.
pub const RECEIVE_RATE_WINDOW: SimDuration = SimDuration(500_000);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateBounds {
    pub min_bps: u64,
    pub max_bps: u64,
}

impl RateBounds {
    pub fn clamp(&self, bps: f64) -> f64 {
        bps.clamp(self.min_bps as f64, self.max_bps as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Gcc,
    SensitiveGcc,
    L4sCc,
    L4sGcc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Gcc,
        ControllerKind::SensitiveGcc,
        ControllerKind::L4sCc,
        ControllerKind::L4sGcc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Gcc => "GCC",
            ControllerKind::SensitiveGcc => "Sensitive-GCC",
            ControllerKind::L4sCc => "L4S-CC",
            ControllerKind::L4sGcc => "L4S-GCC",
        }
    }

    /// Whether the sender marks its packets ECT(1).
    pub fn uses_ecn(self) -> bool {
        matches!(self, ControllerKind::L4sCc | ControllerKind::L4sGcc)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "gcc" => Ok(ControllerKind::Gcc),
            "sensitivegcc" => Ok(ControllerKind::SensitiveGcc),
            "l4scc" => Ok(ControllerKind::L4sCc),
            "l4sgcc" => Ok(ControllerKind::L4sGcc),
            _ => Err(format!(
                "unknown controller `{s}` (expected gcc, sensitive-gcc, l4s-cc or l4s-gcc)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// GCC constants. Defaults to the standard set, or the sensitive preset
    /// for `sensitive_gcc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gcc: Option<GccParams>,
    #[serde(default)]
    pub l4s: L4sParams,
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind) -> Self {
        ControllerConfig {
            kind,
            gcc: None,
            l4s: L4sParams::default(),
        }
    }

    pub fn gcc_params(&self) -> GccParams {
        self.gcc.clone().unwrap_or_else(|| match self.kind {
            ControllerKind::SensitiveGcc => GccParams::sensitive(),
            _ => GccParams::default(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gcc_params().validate().map_err(|e| e.within("gcc"))?;
        self.l4s.validate().map_err(|e| e.within("l4s"))
    }

    pub fn build(&self, bounds: RateBounds, start_bps: u64) -> Controller {
        match self.kind {
            ControllerKind::Gcc | ControllerKind::SensitiveGcc => {
                Controller::Gcc(GccController::new(self.gcc_params(), bounds, start_bps))
            }
            ControllerKind::L4sCc => {
                Controller::L4sCc(L4sCcController::new(self.l4s.clone(), bounds, start_bps))
            }
            ControllerKind::L4sGcc => Controller::L4sGcc(L4sGccController::new(
                self.gcc_params(),
                self.l4s.clone(),
                bounds,
                start_bps,
            )),
        }
    }
}

/// A running controller of any kind.
#[derive(Clone, Debug)]
pub enum Controller {
    Gcc(GccController),
    L4sCc(L4sCcController),
    L4sGcc(L4sGccController),
}

impl Controller {
    pub fn on_feedback(&mut self, report: &FeedbackReport, now: SimTime) -> u64 {
        match self {
            Controller::Gcc(c) => c.on_feedback(report, now),
            Controller::L4sCc(c) => c.l4s_cc_update(report),
            Controller::L4sGcc(c) => c.l4s_gcc_update(report, now),
        }
    }

    pub fn target_bps(&self) -> u64 {
        match self {
            Controller::Gcc(c) => c.target_bps(),
            Controller::L4sCc(c) => c.target_bps(),
            Controller::L4sGcc(c) => c.target_bps(),
        }
    }
}

/// Share of ECN-capable arrivals in a report that carried CE; 0 when the
/// report holds no ECN-capable packets.
pub fn ce_fraction(report: &FeedbackReport) -> f64 {
    let total = report.ect1_count + report.ce_count;
    if total == 0 {
        0.0
    } else {
        report.ce_count as f64 / total as f64
    }
}

/// Bytes received over the trailing window, as bits per second. Until a full
/// window has elapsed the rate is taken over the time observed so far.
#[derive(Clone, Debug, Default)]
pub struct ReceiveRateEstimator {
    arrivals: VecDeque<(SimTime, u32)>,
    bytes: u64,
    started: Option<SimTime>,
    rate_bps: f64,
}

impl ReceiveRateEstimator {
    pub fn update(&mut self, report: &FeedbackReport) {
        let start = *self.started.get_or_insert(report.interval_start);
        for s in &report.arrival_samples {
            self.arrivals.push_back((s.arrived_at, s.size_bytes));
            self.bytes += s.size_bytes as u64;
        }
        let now = report.interval_end;
        while let Some(&(t, b)) = self.arrivals.front() {
            if now.saturating_since(t) >= RECEIVE_RATE_WINDOW {
                self.arrivals.pop_front();
                self.bytes -= b as u64;
            } else {
                break;
            }
        }
        let span = now.saturating_since(start).min(RECEIVE_RATE_WINDOW);
        self.rate_bps = if span.as_micros() == 0 {
            0.0
        } else {
            self.bytes as f64 * 8.0 / span.as_secs_f64()
        };
    }

    pub fn bps(&self) -> f64 {
        self.rate_bps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ArrivalSample;

    fn counts(ect1: u64, ce: u64) -> FeedbackReport {
        FeedbackReport {
            received_count: ect1 + ce,
            ect1_count: ect1,
            ce_count: ce,
            ..Default::default()
        }
    }

    #[test]
    fn ce_fraction_cases() {
        assert!((ce_fraction(&counts(95, 5)) - 0.05).abs() < 1e-15);
        assert_eq!(ce_fraction(&counts(0, 0)), 0.0);
        assert_eq!(ce_fraction(&counts(0, 10)), 1.0);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "l4s-gcc".parse::<ControllerKind>().unwrap(),
            ControllerKind::L4sGcc
        );
        assert_eq!(
            "Sensitive-GCC".parse::<ControllerKind>().unwrap(),
            ControllerKind::SensitiveGcc
        );
        assert_eq!(
            "l4s_cc".parse::<ControllerKind>().unwrap(),
            ControllerKind::L4sCc
        );
        assert!("bbr".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn receive_rate_window() {
        let mut est = ReceiveRateEstimator::default();
        let mk = |start_ms: u64, end_ms: u64| FeedbackReport {
            interval_start: SimTime::from_millis(start_ms),
            interval_end: SimTime::from_millis(end_ms),
            arrival_samples: (start_ms..end_ms)
                .step_by(10)
                .map(|t| ArrivalSample {
                    seq: t,
                    sent_at: SimTime::from_millis(t),
                    arrived_at: SimTime::from_millis(t + 5),
                    size_bytes: 1250,
                })
                .collect(),
            ..Default::default()
        };
        // 1250 B every 10 ms = 1 Mbps, from the very first report.
        est.update(&mk(0, 100));
        assert!((est.bps() - 1e6).abs() < 1.0, "{}", est.bps());
        for k in 1..20 {
            est.update(&mk(k * 100, (k + 1) * 100));
        }
        assert!((est.bps() - 1e6).abs() < 1.0, "{}", est.bps());
    }
}
