//! ECN-driven controllers: the scalable-only L4S-CC and the hybrid L4S-GCC.

use serde::{Deserialize, Serialize};

use super::gcc::{BandwidthUsage, GccController, GccParams};
use super::{ce_fraction, RateBounds};
use crate::error::{ensure, ConfigError};
use crate::types::{FeedbackReport, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L4sParams {
    /// EWMA gain for the CE fraction.
    pub ewma_gain: f64,
    /// Additive increase per unmarked feedback report (L4S-CC only).
    pub additive_step_bps: u64,
    /// L4S-GCC only: when a report carries ECN-capable packets and none were
    /// marked, a delay-based overuse is treated as normal. The bottleneck
    /// marks as soon as its queue builds, so unmarked feedback means the delay
    /// rise came from path jitter rather than queueing.
    pub ecn_overrides_delay: bool,
}

impl Default for L4sParams {
    fn default() -> Self {
        L4sParams {
            ewma_gain: 1.0 / 16.0,
            additive_step_bps: 50_000,
            ecn_overrides_delay: true,
        }
    }
}

impl L4sParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(
            self.ewma_gain > 0.0 && self.ewma_gain <= 1.0,
            "ewma_gain",
            "must be within (0, 1]",
        )
    }
}

/// Smoothed CE fraction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CeEwma {
    pub value: f64,
}

impl CeEwma {
    pub fn update(&mut self, fraction: f64, gain: f64) -> f64 {
        self.value = ((1.0 - gain) * self.value + gain * fraction).clamp(0.0, 1.0);
        self.value
    }
}

/// Scalable controller driven only by CE marks: multiplicative decrease by
/// half the smoothed mark fraction, additive increase otherwise.
#[derive(Clone, Debug)]
pub struct L4sCcController {
    params: L4sParams,
    bounds: RateBounds,
    ce_ewma: CeEwma,
    target: f64,
}

impl L4sCcController {
    pub fn new(params: L4sParams, bounds: RateBounds, start_bps: u64) -> Self {
        L4sCcController {
            params,
            bounds,
            ce_ewma: CeEwma::default(),
            target: start_bps as f64,
        }
    }

    pub fn ce_ewma(&self) -> f64 {
        self.ce_ewma.value
    }

    pub fn target_bps(&self) -> u64 {
        self.target.round() as u64
    }

    pub fn l4s_cc_update(&mut self, report: &FeedbackReport) -> u64 {
        let f = ce_fraction(report);
        let alpha = self.ce_ewma.update(f, self.params.ewma_gain);
        if f > 0.0 {
            self.target *= 1.0 - alpha / 2.0;
        } else {
            self.target += self.params.additive_step_bps as f64;
        }
        self.target = self.bounds.clamp(self.target);
        self.target_bps()
    }

    #[cfg(test)]
    pub(crate) fn set_state(&mut self, target: f64, ce_ewma: f64) {
        self.target = target;
        self.ce_ewma.value = ce_ewma;
    }
}

/// GCC with ECN feedback folded into congestion detection. Any CE mark forces
/// an overuse decision, and the decrease is the deeper of GCC's back-off and
/// the scalable `1 − α/2` cut. Without marks the GCC machinery drives the
/// rate, so recovery uses its multiplicative increase.
#[derive(Clone, Debug)]
pub struct L4sGccController {
    gcc: GccController,
    params: L4sParams,
    ce_ewma: CeEwma,
}

impl L4sGccController {
    pub fn new(
        gcc_params: GccParams,
        params: L4sParams,
        bounds: RateBounds,
        start_bps: u64,
    ) -> Self {
        L4sGccController {
            gcc: GccController::new(gcc_params, bounds, start_bps),
            params,
            ce_ewma: CeEwma::default(),
        }
    }

    pub fn gcc(&self) -> &GccController {
        &self.gcc
    }

    pub fn ce_ewma(&self) -> f64 {
        self.ce_ewma.value
    }

    pub fn target_bps(&self) -> u64 {
        self.gcc.target_bps()
    }

    pub fn l4s_gcc_update(&mut self, report: &FeedbackReport, now: SimTime) -> u64 {
        let f = ce_fraction(report);
        let alpha = self.ce_ewma.update(f, self.params.ewma_gain);
        self.gcc.observe_receive_rate(report);
        let signal = self.gcc.observe_delay(report);
        if f > 0.0 {
            let before = self.gcc.target();
            let gcc_cut =
                self.gcc
                    .gcc_rate_update(BandwidthUsage::Overuse, report, now) as f64;
            let scalable_cut = before * (1.0 - alpha / 2.0);
            self.gcc.pin_target(gcc_cut.min(scalable_cut));
            self.gcc.target_bps()
        } else {
            let ecn_capable = report.ect1_count + report.ce_count > 0;
            let signal = if self.params.ecn_overrides_delay
                && ecn_capable
                && signal == BandwidthUsage::Overuse
            {
                BandwidthUsage::Normal
            } else {
                signal
            };
            self.gcc.gcc_rate_update(signal, report, now)
        }
    }

    #[cfg(test)]
    pub(crate) fn gcc_mut(&mut self) -> &mut GccController {
        &mut self.gcc
    }

    #[cfg(test)]
    pub(crate) fn set_ce_ewma(&mut self, v: f64) {
        self.ce_ewma.value = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ArrivalSample;

    fn bounds() -> RateBounds {
        RateBounds {
            min_bps: 150_000,
            max_bps: 5_000_000,
        }
    }

    fn ecn_report(ect1: u64, ce: u64) -> FeedbackReport {
        FeedbackReport {
            received_count: ect1 + ce,
            ect1_count: ect1,
            ce_count: ce,
            ..Default::default()
        }
    }

    #[test]
    fn unmarked_reports_add_linearly() {
        let mut c = L4sCcController::new(L4sParams::default(), bounds(), 2_000_000);
        let mut prev = c.target_bps();
        for _ in 0..5 {
            let t = c.l4s_cc_update(&ecn_report(30, 0));
            assert_eq!(t - prev, 50_000);
            prev = t;
        }
    }

    #[test]
    fn fully_marked_ewma_halves() {
        let mut c = L4sCcController::new(L4sParams::default(), bounds(), 4_000_000);
        c.set_state(4_000_000.0, 1.0);
        assert_eq!(c.l4s_cc_update(&ecn_report(0, 10)), 2_000_000);
        assert_eq!(c.l4s_cc_update(&ecn_report(0, 10)), 1_000_000);
    }

    #[test]
    fn ewma_decays_geometrically() {
        let mut c = L4sCcController::new(L4sParams::default(), bounds(), 1_000_000);
        c.set_state(1_000_000.0, 0.5);
        let mut expect = 0.5;
        for _ in 0..10 {
            c.l4s_cc_update(&ecn_report(30, 0));
            expect *= 15.0 / 16.0;
            assert!((c.ce_ewma() - expect).abs() < 1e-15);
        }
    }

    fn rate_report(end_ms: u64, rate_bps: f64, ect1: u64, ce: u64) -> FeedbackReport {
        let n = 50u64;
        let bytes = (rate_bps * 0.5 / 8.0 / n as f64) as u32;
        let samples: Vec<_> = (0..n)
            .map(|i| {
                let t = SimTime::from_millis(end_ms - 500 + (i + 1) * 10);
                ArrivalSample {
                    seq: i,
                    sent_at: t,
                    arrived_at: t,
                    size_bytes: bytes,
                }
            })
            .collect();
        FeedbackReport {
            interval_start: SimTime::from_millis(end_ms - 500),
            interval_end: SimTime::from_millis(end_ms),
            received_count: ect1 + ce,
            ect1_count: ect1,
            ce_count: ce,
            arrival_samples: samples,
            lost_seqs: vec![],
            rtt_sample_us: None,
        }
    }

    #[test]
    fn marked_report_takes_deeper_cut() {
        let mut c = L4sGccController::new(
            GccParams::default(),
            L4sParams::default(),
            bounds(),
            4_000_000,
        );
        // ce_ewma lands on 0.5 after folding in f = 0.5.
        c.set_ce_ewma(0.5);
        c.gcc_mut().pin_target(4_000_000.0);
        let t = c.l4s_gcc_update(
            &rate_report(1000, 4_000_000.0, 25, 25),
            SimTime::from_millis(1000),
        );
        // min(0.85 * 4.0, 4.0 * (1 - 0.5 / 2)) = 3.0 Mbps
        assert!((t as f64 - 3_000_000.0).abs() < 2.0, "{t}");
    }

    #[test]
    fn unmarked_ecn_feedback_suppresses_delay_overuse() {
        let mut c = L4sGccController::new(
            GccParams::default(),
            L4sParams::default(),
            bounds(),
            1_000_000,
        );
        let mut plain = GccController::new(GccParams::default(), bounds(), 1_000_000);
        // Delay grows 2 ms per 10 ms group: a clear overuse for delay-only GCC.
        let mut prev_plain = 0;
        let mut prev = 0;
        for k in 1..20u64 {
            let end_ms = 500 + k * 100;
            let mut r = rate_report(end_ms, 1_000_000.0, 50, 0);
            for (i, s) in r.arrival_samples.iter_mut().enumerate() {
                let step = (k * 50 + i as u64) * 2_000;
                s.arrived_at = SimTime(s.sent_at.as_micros() + step);
            }
            let now = SimTime::from_millis(end_ms);
            prev = c.l4s_gcc_update(&r, now);
            prev_plain = plain.on_feedback(&r, now);
        }
        assert_eq!(plain.detector().signal(), BandwidthUsage::Overuse);
        assert!(prev > prev_plain, "{prev} vs {prev_plain}");
    }

    #[test]
    fn no_marks_matches_plain_gcc() {
        let mut hybrid = L4sGccController::new(
            GccParams::default(),
            L4sParams::default(),
            bounds(),
            1_000_000,
        );
        let mut plain = GccController::new(GccParams::default(), bounds(), 1_000_000);
        for k in 1..40u64 {
            let r = rate_report(500 + k * 100, 1_000_000.0 + k as f64 * 20_000.0, 0, 0);
            let now = SimTime::from_millis(500 + k * 100);
            assert_eq!(hybrid.l4s_gcc_update(&r, now), plain.on_feedback(&r, now));
        }
    }
}
