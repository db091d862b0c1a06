//! Delay-gradient congestion control in the style of WebRTC's GCC: trendline
//! slope, adaptive-threshold overuse detector, and an increase/hold/decrease
//! rate state machine capped by a loss-based estimate.

use serde::{Deserialize, Serialize};

use super::trendline::{PacketGrouper, TrendlineEstimator};
use super::{RateBounds, ReceiveRateEstimator};
use crate::error::{ensure, ConfigError};
use crate::types::{FeedbackReport, SimTime};

/// Threshold adaptation is skipped when the trend is this far (ms) above it.
const MAX_ADAPT_OFFSET_MS: f64 = 15.0;
/// Longest time step used in one threshold adaptation, ms.
const MAX_ADAPT_STEP_MS: f64 = 100.0;
/// Longest time step used in one multiplicative increase, seconds.
const MAX_INCREASE_STEP_S: f64 = 1.0;
/// Increase may not push the target past this multiple of the receive rate.
const RECEIVE_RATE_HEADROOM: f64 = 1.5;
/// Per-report growth of the loss-based cap while loss is low.
const LOW_LOSS_GROWTH: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GccParams {
    /// Trendline window, in inter-group deltas.
    pub window: usize,
    pub threshold_gain: f64,
    pub gamma_init_ms: f64,
    pub gamma_min_ms: f64,
    pub gamma_max_ms: f64,
    pub k_up: f64,
    pub k_down: f64,
    pub overuse_time_ms: f64,
    /// Multiplicative increase per second.
    pub eta_increase: f64,
    pub decrease_factor: f64,
    pub loss_high: f64,
    pub loss_low: f64,
}

impl Default for GccParams {
    fn default() -> Self {
        GccParams {
            window: 20,
            threshold_gain: 4.0,
            gamma_init_ms: 12.5,
            gamma_min_ms: 6.0,
            gamma_max_ms: 600.0,
            k_up: 0.0087,
            k_down: 0.039,
            overuse_time_ms: 10.0,
            eta_increase: 1.08,
            decrease_factor: 0.85,
            loss_high: 0.10,
            loss_low: 0.02,
        }
    }
}

impl GccParams {
    /// Earlier detection and a harder back-off.
    pub fn sensitive() -> Self {
        GccParams {
            gamma_init_ms: 6.0,
            overuse_time_ms: 5.0,
            decrease_factor: 0.80,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(
            self.decrease_factor > 0.0 && self.decrease_factor < 1.0,
            "decrease_factor",
            "must be within (0, 1)",
        )?;
        ensure(
            self.loss_low < self.loss_high,
            "loss_low",
            "must be < loss_high",
        )?;
        ensure(
            self.gamma_min_ms < self.gamma_max_ms,
            "gamma_min_ms",
            "must be < gamma_max_ms",
        )?;
        ensure(
            (self.gamma_min_ms..=self.gamma_max_ms).contains(&self.gamma_init_ms),
            "gamma_init_ms",
            "must lie within [gamma_min_ms, gamma_max_ms]",
        )?;
        ensure(self.eta_increase >= 1.0, "eta_increase", "must be >= 1")?;
        ensure(self.threshold_gain > 0.0, "threshold_gain", "must be > 0")?;
        ensure(
            self.overuse_time_ms >= 0.0,
            "overuse_time_ms",
            "must be >= 0",
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BandwidthUsage {
    Normal,
    Overuse,
    Underuse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RateState {
    Increase,
    Hold,
    Decrease,
}

/// Adaptive-threshold overuse detector.
#[derive(Clone, Debug)]
pub struct OveruseDetector {
    gamma_ms: f64,
    gamma_min_ms: f64,
    gamma_max_ms: f64,
    k_up: f64,
    k_down: f64,
    overuse_time_ms: f64,
    time_over_using_ms: Option<f64>,
    overuse_counter: u32,
    prev_trend: f64,
    last_threshold_update: Option<SimTime>,
    signal: BandwidthUsage,
}

impl OveruseDetector {
    pub fn new(p: &GccParams) -> Self {
        OveruseDetector {
            gamma_ms: p.gamma_init_ms,
            gamma_min_ms: p.gamma_min_ms,
            gamma_max_ms: p.gamma_max_ms,
            k_up: p.k_up,
            k_down: p.k_down,
            overuse_time_ms: p.overuse_time_ms,
            time_over_using_ms: None,
            overuse_counter: 0,
            prev_trend: 0.0,
            last_threshold_update: None,
            signal: BandwidthUsage::Normal,
        }
    }

    pub fn gamma_ms(&self) -> f64 {
        self.gamma_ms
    }

    pub fn signal(&self) -> BandwidthUsage {
        self.signal
    }

    /// Classifies a modified trend. `raw_trend` is the unscaled slope, used
    /// for the non-decreasing check; `dt_ms` is the send-time spacing of the
    /// latest group pair; `now` drives threshold adaptation.
    ///
    /// Overuse needs the trend above the threshold for longer than
    /// `overuse_time` over at least two samples, with a slope that is not
    /// falling. Until then the previous signal is held.
    pub fn overuse_detect(
        &mut self,
        modified_trend: f64,
        raw_trend: f64,
        dt_ms: f64,
        now: SimTime,
    ) -> BandwidthUsage {
        if modified_trend > self.gamma_ms {
            let t = match self.time_over_using_ms {
                None => dt_ms / 2.0,
                Some(t) => t + dt_ms,
            };
            self.time_over_using_ms = Some(t);
            self.overuse_counter += 1;
            if t > self.overuse_time_ms && self.overuse_counter > 1 && raw_trend >= self.prev_trend
            {
                self.time_over_using_ms = Some(0.0);
                self.overuse_counter = 0;
                self.signal = BandwidthUsage::Overuse;
            }
        } else if modified_trend < -self.gamma_ms {
            self.time_over_using_ms = None;
            self.overuse_counter = 0;
            self.signal = BandwidthUsage::Underuse;
        } else {
            self.time_over_using_ms = None;
            self.overuse_counter = 0;
            self.signal = BandwidthUsage::Normal;
        }
        self.prev_trend = raw_trend;
        self.adapt_threshold(modified_trend, now);
        self.signal
    }

    fn adapt_threshold(&mut self, modified_trend: f64, now: SimTime) {
        let last = *self.last_threshold_update.get_or_insert(now);
        let abs = modified_trend.abs();
        if abs > self.gamma_ms + MAX_ADAPT_OFFSET_MS {
            // Sudden spikes (e.g. a route change) should not drag the threshold.
            self.last_threshold_update = Some(now);
            return;
        }
        let k = if abs < self.gamma_ms {
            self.k_down
        } else {
            self.k_up
        };
        let dt_ms = (now.saturating_since(last).as_micros() as f64 / 1e3).min(MAX_ADAPT_STEP_MS);
        self.gamma_ms = (self.gamma_ms + k * (abs - self.gamma_ms) * dt_ms)
            .clamp(self.gamma_min_ms, self.gamma_max_ms);
        self.last_threshold_update = Some(now);
    }
}

/// GCC sender state.
#[derive(Clone, Debug)]
pub struct GccController {
    params: GccParams,
    bounds: RateBounds,
    grouper: PacketGrouper,
    trendline: TrendlineEstimator,
    detector: OveruseDetector,
    rate_state: RateState,
    delay_target: f64,
    loss_target: f64,
    target: f64,
    receive_rate: ReceiveRateEstimator,
    last_update: Option<SimTime>,
}

impl GccController {
    pub fn new(params: GccParams, bounds: RateBounds, start_bps: u64) -> Self {
        GccController {
            trendline: TrendlineEstimator::new(params.window, params.threshold_gain),
            detector: OveruseDetector::new(&params),
            grouper: PacketGrouper::default(),
            params,
            bounds,
            rate_state: RateState::Increase,
            delay_target: start_bps as f64,
            loss_target: bounds.max_bps as f64,
            target: start_bps as f64,
            receive_rate: ReceiveRateEstimator::default(),
            last_update: None,
        }
    }

    pub fn params(&self) -> &GccParams {
        &self.params
    }

    pub fn target_bps(&self) -> u64 {
        self.target.round() as u64
    }

    pub fn rate_state(&self) -> RateState {
        self.rate_state
    }

    pub fn detector(&self) -> &OveruseDetector {
        &self.detector
    }

    pub fn trendline(&self) -> &TrendlineEstimator {
        &self.trendline
    }

    pub fn measured_receive_rate(&self) -> f64 {
        self.receive_rate.bps()
    }

    /// Records the report's arrivals in the receive-rate window.
    pub fn observe_receive_rate(&mut self, report: &FeedbackReport) {
        self.receive_rate.update(report);
    }

    /// Runs every new inter-group delta through the trendline and detector
    /// and returns the resulting signal.
    pub fn observe_delay(&mut self, report: &FeedbackReport) -> BandwidthUsage {
        for s in &report.arrival_samples {
            if let Some(delta) = self.grouper.push(s) {
                let raw = self.trendline.update(&delta);
                let modified = self.trendline.modified_trend();
                if self.trendline.num_deltas() >= 2 {
                    self.detector
                        .overuse_detect(modified, raw, delta.send_delta_ms, delta.arrival);
                }
            }
        }
        self.detector.signal()
    }

    /// One feedback-driven rate update for a given detector signal.
    pub fn gcc_rate_update(
        &mut self,
        signal: BandwidthUsage,
        report: &FeedbackReport,
        now: SimTime,
    ) -> u64 {
        let dt_s = self
            .last_update
            .map_or(0.0, |t| now.saturating_since(t).as_secs_f64())
            .min(MAX_INCREASE_STEP_S);
        self.last_update = Some(now);
        let measured = self.receive_rate.bps();

        self.rate_state = match signal {
            BandwidthUsage::Overuse => RateState::Decrease,
            BandwidthUsage::Underuse => RateState::Hold,
            BandwidthUsage::Normal => RateState::Increase,
        };
        match self.rate_state {
            RateState::Decrease => {
                self.delay_target = self
                    .delay_target
                    .min(self.params.decrease_factor * measured);
            }
            RateState::Hold => {}
            RateState::Increase => {
                let grown = self.delay_target * self.params.eta_increase.powf(dt_s);
                self.delay_target = grown
                    .min(RECEIVE_RATE_HEADROOM * measured)
                    .max(self.delay_target);
            }
        }

        let loss = report.loss_rate();
        if loss > self.params.loss_high {
            self.loss_target = self.target * (1.0 - 0.5 * loss);
        } else if loss < self.params.loss_low {
            self.loss_target = (self.loss_target * LOW_LOSS_GROWTH).min(self.bounds.max_bps as f64);
        }

        let target = self
            .delay_target
            .min(self.loss_target)
            .min(RECEIVE_RATE_HEADROOM * measured);
        self.set_target(target);
        self.target_bps()
    }

    fn set_target(&mut self, bps: f64) {
        self.target = self.bounds.clamp(bps);
        self.delay_target = self.bounds.clamp(self.delay_target);
    }

    /// Overrides both the delay-based estimate and the target.
    pub(crate) fn pin_target(&mut self, bps: f64) {
        self.delay_target = self.bounds.clamp(bps);
        self.target = self.delay_target;
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn on_feedback(&mut self, report: &FeedbackReport, now: SimTime) -> u64 {
        self.observe_receive_rate(report);
        let signal = self.observe_delay(report);
        self.gcc_rate_update(signal, report, now)
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

    /// A report whose arrivals over the last 500 ms add up to `rate_bps`.
    fn report_at_rate(end_ms: u64, rate_bps: f64, loss: usize, received: u64) -> FeedbackReport {
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
            received_count: received,
            lost_seqs: (0..loss as u64).collect(),
            arrival_samples: samples,
            ..Default::default()
        }
    }

    #[test]
    fn overuse_decreases_to_fraction_of_receive_rate() {
        let mut g = GccController::new(GccParams::default(), bounds(), 4_000_000);
        let r = report_at_rate(1000, 3_000_000.0, 1, 19);
        g.observe_receive_rate(&r);
        let t = g.gcc_rate_update(BandwidthUsage::Overuse, &r, SimTime::from_millis(1000));
        assert!((t as f64 - 2_550_000.0).abs() < 2.0, "{t}");
        assert_eq!(g.rate_state(), RateState::Decrease);
    }

    #[test]
    fn normal_increases_eight_percent_per_second() {
        let mut g = GccController::new(GccParams::default(), bounds(), 2_000_000);
        let r0 = report_at_rate(1000, 2_000_000.0, 1, 19);
        g.observe_receive_rate(&r0);
        g.gcc_rate_update(BandwidthUsage::Normal, &r0, SimTime::from_millis(1000));
        let r1 = report_at_rate(2000, 2_000_000.0, 1, 19);
        g.observe_receive_rate(&r1);
        let t = g.gcc_rate_update(BandwidthUsage::Normal, &r1, SimTime::from_millis(2000));
        assert!((t as f64 - 2_160_000.0).abs() < 2.0, "{t}");
    }

    #[test]
    fn heavy_loss_cuts_target() {
        let mut g = GccController::new(GccParams::default(), bounds(), 3_000_000);
        // Underuse holds the delay estimate; 20% loss applies (1 - 0.1).
        let r = report_at_rate(1000, 3_000_000.0, 20, 80);
        g.observe_receive_rate(&r);
        let t = g.gcc_rate_update(BandwidthUsage::Underuse, &r, SimTime::from_millis(1000));
        assert!((t as f64 - 2_700_000.0).abs() < 2.0, "{t}");
    }

    #[test]
    fn detector_rules() {
        let p = GccParams::default();
        let mut d = OveruseDetector::new(&p);
        assert_eq!(
            d.overuse_detect(0.0, 0.0, 5.0, SimTime(0)),
            BandwidthUsage::Normal
        );
        let mut d = OveruseDetector::new(&p);
        let g = d.gamma_ms();
        assert_eq!(
            d.overuse_detect(-2.0 * g, -0.1, 5.0, SimTime(0)),
            BandwidthUsage::Underuse
        );
        let mut d = OveruseDetector::new(&p);
        let mut s = BandwidthUsage::Normal;
        for i in 0..4 {
            s = d.overuse_detect(2.0 * 12.5, 0.1, 5.0, SimTime(i * 5_000));
        }
        assert_eq!(s, BandwidthUsage::Overuse);
    }

    #[test]
    fn gamma_stays_in_bounds() {
        let p = GccParams::default();
        let mut d = OveruseDetector::new(&p);
        for i in 0..10_000u64 {
            d.overuse_detect(0.0, 0.0, 5.0, SimTime(i * 5_000));
        }
        assert!((d.gamma_ms() - p.gamma_min_ms).abs() < 1e-9);
        let mut d = OveruseDetector::new(&p);
        for i in 0..10_000u64 {
            // Stay inside the adaptation band so the threshold keeps rising.
            let m = d.gamma_ms() + 10.0;
            d.overuse_detect(m, 0.0, 5.0, SimTime(i * 100_000));
        }
        assert!(d.gamma_ms() <= p.gamma_max_ms);
    }

    #[test]
    fn sensitive_preset_differs_only_in_constants() {
        let s = GccParams::sensitive();
        let d = GccParams::default();
        assert_eq!(s.gamma_init_ms, 6.0);
        assert_eq!(s.overuse_time_ms, 5.0);
        assert_eq!(s.decrease_factor, 0.80);
        assert_eq!(
            GccParams {
                gamma_init_ms: d.gamma_init_ms,
                overuse_time_ms: d.overuse_time_ms,
                decrease_factor: d.decrease_factor,
                ..s
            },
            d
        );
    }
}
