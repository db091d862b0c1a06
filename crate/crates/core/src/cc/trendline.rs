//! Delay-gradient measurement: send-time packet grouping and the trendline
//! (least-squares slope) estimator over smoothed accumulated delay.

use std::collections::VecDeque;

use crate::types::{ArrivalSample, SimTime};

/// Packets sent within this span of the group's first packet share a group.
pub const BURST_SPAN_US: u64 = 5_000;

/// Smoothing coefficient applied to the accumulated delay.
pub const SMOOTHING: f64 = 0.9;

/// Cap on the sample-count multiplier of the modified trend.
const MAX_DELTAS: u32 = 60;

#[derive(Clone, Copy, Debug)]
struct Group {
    first_send: SimTime,
    last_send: SimTime,
    last_arrival: SimTime,
}

/// Delay variation between two consecutive packet groups.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterGroupDelta {
    /// `(arrival_i − arrival_{i−1}) − (send_i − send_{i−1})`, milliseconds.
    pub delay_delta_ms: f64,
    pub send_delta_ms: f64,
    pub arrival_delta_ms: f64,
    /// Arrival time of the later group's last packet.
    pub arrival: SimTime,
}

/// Streams arrival samples into send-time bursts. A group is closed when the
/// first packet of the next group shows up, so the newest group always stays
/// open until more data arrives.
#[derive(Clone, Debug, Default)]
pub struct PacketGrouper {
    current: Option<Group>,
    previous: Option<Group>,
}

impl PacketGrouper {
    pub fn push(&mut self, s: &ArrivalSample) -> Option<InterGroupDelta> {
        match &mut self.current {
            Some(g)
                if s.sent_at.saturating_since(g.first_send).as_micros() <= BURST_SPAN_US
                    && s.sent_at >= g.first_send =>
            {
                g.last_send = g.last_send.max(s.sent_at);
                g.last_arrival = g.last_arrival.max(s.arrived_at);
                None
            }
            _ => {
                let closed = self.current.replace(Group {
                    first_send: s.sent_at,
                    last_send: s.sent_at,
                    last_arrival: s.arrived_at,
                });
                closed.and_then(|c| self.close(c))
            }
        }
    }

    /// Closes the open group, as at the end of a finite sample list.
    pub fn flush(&mut self) -> Option<InterGroupDelta> {
        let c = self.current.take()?;
        self.close(c)
    }

    fn close(&mut self, closed: Group) -> Option<InterGroupDelta> {
        let prev = self.previous.replace(closed)?;
        let arrival_delta_ms =
            (closed.last_arrival.as_micros() as f64 - prev.last_arrival.as_micros() as f64) / 1e3;
        let send_delta_ms =
            (closed.last_send.as_micros() as f64 - prev.last_send.as_micros() as f64) / 1e3;
        Some(InterGroupDelta {
            delay_delta_ms: arrival_delta_ms - send_delta_ms,
            send_delta_ms,
            arrival_delta_ms,
            arrival: closed.last_arrival,
        })
    }
}

/// Inter-group delay variations (ms) for a self-contained list of samples
/// ordered by sequence number. Fewer than two groups yield an empty list.
pub fn compute_delay_gradients(samples: &[ArrivalSample]) -> Vec<f64> {
    let mut g = PacketGrouper::default();
    let mut out: Vec<f64> = samples
        .iter()
        .filter_map(|s| g.push(s))
        .map(|d| d.delay_delta_ms)
        .collect();
    out.extend(g.flush().map(|d| d.delay_delta_ms));
    out
}

/// Ordinary least-squares slope of `y` on `x`. `None` with fewer than two
/// points or when every `x` is equal.
pub fn ols_slope(points: impl IntoIterator<Item = (f64, f64)> + Clone) -> Option<f64> {
    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for (x, y) in points.clone() {
        n += 1;
        sx += x;
        sy += y;
    }
    if n < 2 {
        return None;
    }
    let (xm, ym) = (sx / n as f64, sy / n as f64);
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in points {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

#[derive(Clone, Debug)]
pub struct TrendlineEstimator {
    window: usize,
    threshold_gain: f64,
    accumulated_delay_ms: f64,
    smoothed_delay_ms: f64,
    first_arrival: Option<SimTime>,
    points: VecDeque<(f64, f64)>,
    num_deltas: u32,
    slope: f64,
}

impl TrendlineEstimator {
    pub fn new(window: usize, threshold_gain: f64) -> Self {
        TrendlineEstimator {
            window,
            threshold_gain,
            accumulated_delay_ms: 0.0,
            smoothed_delay_ms: 0.0,
            first_arrival: None,
            points: VecDeque::with_capacity(window),
            num_deltas: 0,
            slope: 0.0,
        }
    }

    /// Feeds one inter-group delta and returns the updated raw slope.
    pub fn update(&mut self, delta: &InterGroupDelta) -> f64 {
        self.num_deltas = (self.num_deltas + 1).min(MAX_DELTAS);
        self.accumulated_delay_ms += delta.delay_delta_ms;
        self.smoothed_delay_ms =
            SMOOTHING * self.smoothed_delay_ms + (1.0 - SMOOTHING) * self.accumulated_delay_ms;
        let first = *self.first_arrival.get_or_insert(delta.arrival);
        let x = (delta.arrival.as_micros() - first.as_micros()) as f64 / 1e3;
        if self.window == 0 {
            self.slope = 0.0;
            return 0.0;
        }
        if self.points.len() == self.window {
            self.points.pop_front();
        }
        self.points.push_back((x, self.smoothed_delay_ms));
        self.slope = self.trendline_slope();
        self.slope
    }

    /// Least-squares slope of smoothed accumulated delay against arrival time
    /// over the current window; 0 with fewer than two points.
    pub fn trendline_slope(&self) -> f64 {
        if self.window < 2 {
            return 0.0;
        }
        ols_slope(self.points.iter().copied()).unwrap_or(0.0)
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// The slope scaled for comparison with the adaptive threshold:
    /// `slope · min(deltas, 60) · threshold_gain`.
    pub fn modified_trend(&self) -> f64 {
        self.slope * self.num_deltas as f64 * self.threshold_gain
    }

    pub fn num_deltas(&self) -> u32 {
        self.num_deltas
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seq: u64, sent_us: u64, arrived_us: u64) -> ArrivalSample {
        ArrivalSample {
            seq,
            sent_at: SimTime(sent_us),
            arrived_at: SimTime(arrived_us),
            size_bytes: 1200,
        }
    }

    #[test]
    fn constant_delay_gives_zero_gradients() {
        let samples: Vec<_> = (0..40)
            .map(|i| sample(i, i * 3_000, i * 3_000 + 20_000))
            .collect();
        let g = compute_delay_gradients(&samples);
        assert!(!g.is_empty());
        assert!(g.iter().all(|&d| d.abs() < 1e-12));
    }

    #[test]
    fn growing_queue_gives_constant_gradient() {
        // One packet per 10 ms group, queueing delay +1 ms per group.
        let samples: Vec<_> = (0..20)
            .map(|i| sample(i, i * 10_000, i * 10_000 + 20_000 + i * 1_000))
            .collect();
        let g = compute_delay_gradients(&samples);
        assert_eq!(g.len(), 19);
        assert!(g.iter().all(|&d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_sample_is_empty() {
        assert!(compute_delay_gradients(&[sample(0, 0, 10)]).is_empty());
        assert!(compute_delay_gradients(&[]).is_empty());
    }

    #[test]
    fn burst_grouping_uses_last_packet() {
        // Two packets per group 2 ms apart; groups 10 ms apart.
        let mut v = vec![];
        for g in 0..3u64 {
            v.push(sample(2 * g, g * 10_000, g * 10_000 + 5_000));
            v.push(sample(
                2 * g + 1,
                g * 10_000 + 2_000,
                g * 10_000 + 7_000 + g * 500,
            ));
        }
        let d = compute_delay_gradients(&v);
        assert_eq!(d.len(), 2);
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_series_has_zero_slope() {
        let mut t = TrendlineEstimator::new(20, 4.0);
        for i in 1..50u64 {
            t.update(&InterGroupDelta {
                delay_delta_ms: 0.0,
                send_delta_ms: 5.0,
                arrival_delta_ms: 5.0,
                arrival: SimTime(i * 5_000),
            });
        }
        assert_eq!(t.slope(), 0.0);
        assert_eq!(t.modified_trend(), 0.0);
    }

    #[test]
    fn short_window_slope_is_zero() {
        let mut t = TrendlineEstimator::new(1, 4.0);
        for i in 1..5u64 {
            t.update(&InterGroupDelta {
                delay_delta_ms: 1.0,
                send_delta_ms: 5.0,
                arrival_delta_ms: 6.0,
                arrival: SimTime(i * 6_000),
            });
        }
        assert_eq!(t.slope(), 0.0);
        assert_eq!(ols_slope([(1.0, 2.0)]), None);
    }

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 - 1.0)).collect();
        assert!((ols_slope(pts.iter().copied()).unwrap() - 3.0).abs() < 1e-12);
    }
}
