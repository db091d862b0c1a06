use serde::Serialize;
use thiserror::Error;

use crate::media::stalling_rate;
use crate::sim::{RunStats, Scenario};

/// Summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rtt_max_ms: f64,
    pub rtt_min_ms: f64,
    pub rtt_avg_ms: f64,
    pub stalling_rate: f64,
    pub quality_mbps: f64,
    pub bandwidth_utilization: f64,
    pub mark_count: u64,
    pub drop_count: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("run produced no RTT samples")]
    NoSamples,
}

/// Min/max/mean of RTT samples in milliseconds.
pub fn rtt_summary(samples_ms: &[f64]) -> Result<(f64, f64, f64), MetricsError> {
    if samples_ms.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let max = samples_ms.iter().copied().fold(f64::MIN, f64::max);
    let min = samples_ms.iter().copied().fold(f64::MAX, f64::min);
    let avg = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    Ok((max, min, avg))
}

/// Utilization of a link with the given time-average capacity.
pub fn utilization(quality_mbps: f64, average_capacity_mbps: f64) -> f64 {
    if average_capacity_mbps <= 0.0 {
        0.0
    } else {
        quality_mbps / average_capacity_mbps
    }
}

pub fn compute_metrics(
    stats: &RunStats,
    scenario: &Scenario,
) -> Result<MetricsReport, MetricsError> {
    if stats.rtt_count == 0 {
        return Err(MetricsError::NoSamples);
    }
    let duration = scenario.duration();
    let quality_mbps = stats.played_bytes as f64 * 8.0 / duration.as_secs_f64() / 1e6;
    Ok(MetricsReport {
        rtt_max_ms: stats.rtt_max_us as f64 / 1e3,
        rtt_min_ms: stats.rtt_min_us as f64 / 1e3,
        rtt_avg_ms: stats.rtt_sum_us as f64 / stats.rtt_count as f64 / 1e3,
        stalling_rate: stalling_rate(stats.stalled_time, duration),
        quality_mbps,
        bandwidth_utilization: utilization(quality_mbps, stats.average_capacity_bps / 1e6),
        mark_count: stats.marks,
        drop_count: stats.drops,
    })
}
