//! Bottleneck link emulation: time-varying capacity, fixed or probabilistic
//! one-way delay, and bandwidth trace handling.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ensure, ConfigError};
use crate::rng::StreamRng;
use crate::types::{Packet, SimDuration, SimTime};

/// Lowest rate a normalized trace is allowed to reach.
pub const TRACE_FLOOR_MBPS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t_s: f64,
    pub mbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapacityPattern {
    Constant {
        mbps: f64,
    },
    /// `low_mbps` on `[0, half_period)`, `high_mbps` on the next half period,
    /// repeating.
    SquareWave {
        low_mbps: f64,
        high_mbps: f64,
        half_period_s: f64,
    },
    /// Step function holding each sample until the next one.
    Trace {
        samples: Vec<TraceSample>,
    },
}

impl CapacityPattern {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            CapacityPattern::Constant { mbps } => ensure(*mbps > 0.0, "mbps", "must be > 0"),
            CapacityPattern::SquareWave {
                low_mbps,
                high_mbps,
                half_period_s,
            } => {
                ensure(*low_mbps > 0.0, "low_mbps", "must be > 0")?;
                ensure(*high_mbps > 0.0, "high_mbps", "must be > 0")?;
                ensure(*half_period_s > 0.0, "half_period_s", "must be > 0")
            }
            CapacityPattern::Trace { samples } => {
                ensure(!samples.is_empty(), "samples", "trace is empty")?;
                ensure(
                    samples[0].t_s == 0.0,
                    "samples[0].t_s",
                    "trace must start at t = 0",
                )?;
                for (i, s) in samples.iter().enumerate() {
                    ensure(s.mbps > 0.0, &format!("samples[{i}].mbps"), "must be > 0")?;
                    if i > 0 {
                        ensure(
                            s.t_s > samples[i - 1].t_s,
                            &format!("samples[{i}].t_s"),
                            "times must be strictly increasing",
                        )?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Capacity in bits per second at time `t`.
    pub fn capacity_at(&self, t: SimTime) -> f64 {
        match self {
            CapacityPattern::Constant { mbps } => mbps * 1e6,
            CapacityPattern::SquareWave {
                low_mbps,
                high_mbps,
                half_period_s,
            } => {
                let half = SimDuration::from_secs_f64(*half_period_s)
                    .as_micros()
                    .max(1);
                if (t.as_micros() / half).is_multiple_of(2) {
                    low_mbps * 1e6
                } else {
                    high_mbps * 1e6
                }
            }
            CapacityPattern::Trace { samples } => {
                let ts = t.as_secs_f64();
                // Last sample with t_s <= ts.
                let idx = samples.partition_point(|s| s.t_s <= ts);
                samples[idx.saturating_sub(1)].mbps * 1e6
            }
        }
    }

    /// Time-average capacity over `[0, duration)`, bits per second.
    pub fn average_capacity(&self, duration: SimDuration) -> f64 {
        let end = duration.as_secs_f64();
        if end <= 0.0 {
            return self.capacity_at(SimTime::ZERO);
        }
        match self {
            CapacityPattern::Constant { mbps } => mbps * 1e6,
            CapacityPattern::SquareWave {
                low_mbps,
                high_mbps,
                half_period_s,
            } => {
                let mut acc = 0.0;
                let mut t = 0.0;
                let mut low = true;
                while t < end {
                    let seg_end = (t + half_period_s).min(end);
                    acc += (seg_end - t) * if low { *low_mbps } else { *high_mbps };
                    t = seg_end;
                    low = !low;
                }
                acc / end * 1e6
            }
            CapacityPattern::Trace { samples } => {
                let mut acc = 0.0;
                for (i, s) in samples.iter().enumerate() {
                    if s.t_s >= end {
                        break;
                    }
                    let seg_end = samples.get(i + 1).map_or(end, |n| n.t_s.min(end));
                    acc += (seg_end - s.t_s) * s.mbps;
                }
                acc / end * 1e6
            }
        }
    }
}

pub fn capacity_at(pattern: &CapacityPattern, t: SimTime) -> f64 {
    pattern.capacity_at(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterEntry {
    pub delay_ms: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterProfile {
    pub entries: Vec<JitterEntry>,
}

impl JitterProfile {
    /// Delays paired with probabilities, in the order given.
    pub fn new(entries: &[(f64, f64)]) -> Self {
        JitterProfile {
            entries: entries
                .iter()
                .map(|&(delay_ms, probability)| JitterEntry {
                    delay_ms,
                    probability,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(!self.entries.is_empty(), "entries", "profile is empty")?;
        let mut sum = 0.0;
        for (i, e) in self.entries.iter().enumerate() {
            ensure(
                e.delay_ms > 0.0,
                &format!("entries[{i}].delay_ms"),
                "must be > 0",
            )?;
            ensure(
                (0.0..=1.0).contains(&e.probability),
                &format!("entries[{i}].probability"),
                "must be within [0, 1]",
            )?;
            sum += e.probability;
        }
        ensure(
            (sum - 1.0).abs() <= 1e-9,
            "entries",
            "probabilities must sum to 1",
        )
    }

    pub fn mean_ms(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.delay_ms * e.probability)
            .sum()
    }

    /// Inverse-CDF lookup for a uniform draw `u` in `[0, 1)`.
    pub fn delay_for(&self, u: f64) -> SimDuration {
        let mut cdf = 0.0;
        for e in &self.entries {
            cdf += e.probability;
            if u < cdf {
                return SimDuration::from_millis_f64(e.delay_ms);
            }
        }
        // Rounding can leave the cumulative sum a hair under 1.
        SimDuration::from_millis_f64(self.entries.last().expect("validated non-empty").delay_ms)
    }
}

/// Draws one delay from the profile using a single uniform from `rng`.
pub fn sample_jitter(profile: &JitterProfile, rng: &mut StreamRng) -> SimDuration {
    profile.delay_for(rng.gen::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Fixed { delay_ms: f64 },
    Jitter { profile: JitterProfile },
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            DelayModel::Fixed { delay_ms } => ensure(*delay_ms >= 0.0, "delay_ms", "must be >= 0"),
            DelayModel::Jitter { profile } => profile.validate().map_err(|e| e.within("profile")),
        }
    }

    pub fn one_way_delay(&self, rng: &mut StreamRng) -> SimDuration {
        match self {
            DelayModel::Fixed { delay_ms } => SimDuration::from_millis_f64(*delay_ms),
            DelayModel::Jitter { profile } => sample_jitter(profile, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Forward (media) bottleneck capacity.
    pub capacity: CapacityPattern,
    /// Forward one-way delay model.
    pub forward_delay: DelayModel,
    /// Reverse (feedback) path: fixed delay, capacity not modeled.
    pub reverse_delay_ms: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            capacity: CapacityPattern::Constant { mbps: 3.0 },
            forward_delay: DelayModel::Fixed { delay_ms: 6.0 },
            reverse_delay_ms: 6.0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.capacity.validate().map_err(|e| e.within("capacity"))?;
        self.forward_delay
            .validate()
            .map_err(|e| e.within("forward_delay"))?;
        ensure(
            self.reverse_delay_ms >= 0.0,
            "reverse_delay_ms",
            "must be >= 0",
        )
    }

    pub fn reverse_delay(&self) -> SimDuration {
        SimDuration::from_millis_f64(self.reverse_delay_ms)
    }
}

/// Serialization time of `size_bytes` at `bps`, rounded up to a whole
/// microsecond.
pub fn serialization_time(size_bytes: u32, bps: f64) -> SimDuration {
    SimDuration((size_bytes as f64 * 8.0 * 1e6 / bps).ceil() as u64)
}

/// The forward bottleneck: serializes one packet at a time at the current
/// capacity and keeps per-flow delivery in order.
#[derive(Debug)]
pub struct BottleneckLink {
    cfg: LinkConfig,
    last_delivery: HashMap<u32, SimTime>,
}

/// Timing of one packet crossing the link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    /// When the link is free to start the next packet.
    pub link_free_at: SimTime,
    pub delivered_at: SimTime,
}

impl BottleneckLink {
    pub fn new(cfg: LinkConfig) -> Self {
        BottleneckLink {
            cfg,
            last_delivery: HashMap::new(),
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    /// Starts transmitting `packet` at `now`.
    pub fn deliver(&mut self, packet: &Packet, now: SimTime, rng: &mut StreamRng) -> Delivery {
        let bps = self.cfg.capacity.capacity_at(now);
        let ser = serialization_time(packet.size_bytes, bps);
        let raw = now + ser + self.cfg.forward_delay.one_way_delay(rng);
        let last = self
            .last_delivery
            .entry(packet.flow_id)
            .or_insert(SimTime::ZERO);
        let delivered_at = raw.max(*last);
        *last = delivered_at;
        Delivery {
            link_free_at: now + ser,
            delivered_at,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("trace needs at least 2 samples")]
    TooShort,
    #[error("trace rates are all equal; cannot normalize a zero range")]
    Degenerate,
    #[error("reading trace `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parses a `t_s,mbps` CSV. Times must start at 0 and increase strictly; rates
/// must be non-negative.
pub fn parse_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceSample>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_s", "mbps"] {
        return Err(TraceError::Invalid {
            line: 1,
            message: format!(
                "expected header `t_s,mbps`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out: Vec<TraceSample> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let field = |idx: usize, name: &str| -> Result<f64, TraceError> {
            record
                .get(idx)
                .ok_or_else(|| TraceError::Invalid {
                    line,
                    message: format!("missing `{name}`"),
                })?
                .parse::<f64>()
                .map_err(|e| TraceError::Invalid {
                    line,
                    message: format!("bad `{name}`: {e}"),
                })
        };
        let t_s = field(0, "t_s")?;
        let mbps = field(1, "mbps")?;
        if !t_s.is_finite() || t_s < 0.0 {
            return Err(TraceError::Invalid {
                line,
                message: format!("negative or non-finite time {t_s}"),
            });
        }
        if !mbps.is_finite() || mbps < 0.0 {
            return Err(TraceError::Invalid {
                line,
                message: format!("negative or non-finite rate {mbps}"),
            });
        }
        match out.last() {
            None if t_s != 0.0 => {
                return Err(TraceError::Invalid {
                    line,
                    message: "first sample must be at t_s = 0".into(),
                })
            }
            Some(prev) if t_s <= prev.t_s => {
                return Err(TraceError::Invalid {
                    line,
                    message: format!("time {t_s} does not increase past {}", prev.t_s),
                })
            }
            _ => {}
        }
        out.push(TraceSample { t_s, mbps });
    }
    Ok(out)
}

pub fn load_trace_csv(path: &Path) -> Result<Vec<TraceSample>, TraceError> {
    let file = std::fs::File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace_csv(file)
}

pub fn write_trace_csv<W: std::io::Write>(
    samples: &[TraceSample],
    writer: W,
) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_s", "mbps"])?;
    for s in samples {
        w.write_record([s.t_s.to_string(), s.mbps.to_string()])?;
    }
    w.flush().map_err(|source| TraceError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Min-max scales rates onto `[0, max_mbps]` without the floor.
pub fn min_max_scale(
    samples: &[TraceSample],
    max_mbps: f64,
) -> Result<Vec<TraceSample>, TraceError> {
    if samples.len() < 2 {
        return Err(TraceError::TooShort);
    }
    let lo = samples.iter().map(|s| s.mbps).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.mbps)
        .fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(TraceError::Degenerate);
    }
    Ok(samples
        .iter()
        .map(|s| TraceSample {
            t_s: s.t_s,
            mbps: (s.mbps - lo) / (hi - lo) * max_mbps,
        })
        .collect())
}

/// Min-max scales rates onto `[0, max_mbps]`, then floors them at
/// [`TRACE_FLOOR_MBPS`] so a zero step cannot freeze the link.
pub fn normalize_trace(
    samples: &[TraceSample],
    max_mbps: f64,
) -> Result<Vec<TraceSample>, TraceError> {
    let mut scaled = min_max_scale(samples, max_mbps)?;
    for s in &mut scaled {
        s.mbps = s.mbps.max(TRACE_FLOOR_MBPS);
    }
    Ok(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{named_stream, JITTER_STREAM};
    use crate::types::EcnCodepoint;

    fn secs(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn samples(v: &[(f64, f64)]) -> Vec<TraceSample> {
        v.iter()
            .map(|&(t_s, mbps)| TraceSample { t_s, mbps })
            .collect()
    }

    #[test]
    fn constant_capacity() {
        let p = CapacityPattern::Constant { mbps: 3.0 };
        assert_eq!(p.capacity_at(secs(0.0)), 3e6);
        assert_eq!(p.capacity_at(secs(77.7)), 3e6);
    }

    #[test]
    fn square_wave_phases() {
        let p = CapacityPattern::SquareWave {
            low_mbps: 2.5,
            high_mbps: 4.0,
            half_period_s: 10.0,
        };
        assert_eq!(p.capacity_at(secs(0.0)), 2.5e6);
        assert_eq!(p.capacity_at(secs(9.999)), 2.5e6);
        assert_eq!(p.capacity_at(secs(10.0)), 4e6);
        assert_eq!(p.capacity_at(secs(12.0)), 4e6);
        assert_eq!(p.capacity_at(secs(20.0)), 2.5e6);
        assert!((p.average_capacity(SimDuration::from_secs(120)) - 3.25e6).abs() < 1e-6);
        assert!((p.average_capacity(SimDuration::from_secs(15)) - 3.0e6).abs() < 1e-6);
    }

    #[test]
    fn trace_step_hold() {
        let p = CapacityPattern::Trace {
            samples: samples(&[(0.0, 1.0), (5.0, 2.0)]),
        };
        assert_eq!(p.capacity_at(secs(4.9)), 1e6);
        assert_eq!(p.capacity_at(secs(5.0)), 2e6);
        assert_eq!(p.capacity_at(secs(500.0)), 2e6);
        assert!((p.average_capacity(SimDuration::from_secs(10)) - 1.5e6).abs() < 1e-6);
    }

    #[test]
    fn jitter_mean_and_determinism() {
        let profile = JitterProfile::new(&[(10.0, 0.85), (12.0, 0.10), (14.0, 0.04), (16.0, 0.01)]);
        profile.validate().unwrap();
        let mut a = named_stream(9, JITTER_STREAM);
        let mut b = named_stream(9, JITTER_STREAM);
        for _ in 0..100 {
            assert_eq!(
                sample_jitter(&profile, &mut a),
                sample_jitter(&profile, &mut b)
            );
        }
        assert!((profile.mean_ms() - 10.42).abs() < 1e-12);
    }

    #[test]
    fn jitter_profile_must_sum_to_one() {
        let bad = JitterProfile::new(&[(10.0, 0.5), (12.0, 0.4)]);
        assert!(bad.validate().is_err());
    }

    fn pkt(flow_id: u32, size: u32) -> Packet {
        Packet {
            seq: 0,
            flow_id,
            size_bytes: size,
            ecn: EcnCodepoint::NotEct,
            frame: None,
            sent_at: SimTime::ZERO,
            is_retransmit: false,
        }
    }

    #[test]
    fn delivery_serialization_plus_delay() {
        let mut link = BottleneckLink::new(LinkConfig::default());
        let mut rng = named_stream(0, JITTER_STREAM);
        let now = SimTime::from_millis(100);
        let d = link.deliver(&pkt(0, 1500), now, &mut rng);
        assert_eq!(d.link_free_at, now + SimDuration::from_millis(4));
        assert_eq!(d.delivered_at, now + SimDuration::from_millis(10));
    }

    #[test]
    fn in_order_clamp() {
        let cfg = LinkConfig {
            capacity: CapacityPattern::Constant { mbps: 100.0 },
            forward_delay: DelayModel::Jitter {
                profile: JitterProfile::new(&[(10.0, 0.5), (30.0, 0.5)]),
            },
            reverse_delay_ms: 6.0,
        };
        let mut link = BottleneckLink::new(cfg);
        let mut rng = named_stream(3, JITTER_STREAM);
        let mut last = SimTime::ZERO;
        let mut clamped = 0;
        for i in 0..200u64 {
            let now = SimTime::from_millis(i);
            let d = link.deliver(&pkt(1, 100), now, &mut rng);
            assert!(d.delivered_at >= last);
            if d.delivered_at == last {
                clamped += 1;
            }
            last = d.delivered_at;
        }
        assert!(
            clamped > 0,
            "expected some deliveries held back by the clamp"
        );
    }

    #[test]
    fn normalize_endpoints() {
        let raw = samples(&[(0.0, 10.0), (1.0, 30.0), (2.0, 50.0)]);
        let s = min_max_scale(&raw, 5.0).unwrap();
        let rates: Vec<f64> = s.iter().map(|s| s.mbps).collect();
        assert_eq!(rates, vec![0.0, 2.5, 5.0]);
        let floored = normalize_trace(&raw, 5.0).unwrap();
        assert_eq!(floored[0].mbps, TRACE_FLOOR_MBPS);
        assert_eq!(floored[0].t_s, 0.0);
        let ident = min_max_scale(&samples(&[(0.0, 0.0), (1.0, 5.0)]), 5.0).unwrap();
        assert_eq!(ident[0].mbps, 0.0);
        assert_eq!(ident[1].mbps, 5.0);
    }

    #[test]
    fn normalize_rejects_flat_trace() {
        assert!(matches!(
            normalize_trace(&samples(&[(0.0, 3.0), (1.0, 3.0)]), 5.0),
            Err(TraceError::Degenerate)
        ));
        assert!(matches!(
            normalize_trace(&samples(&[(0.0, 3.0)]), 5.0),
            Err(TraceError::TooShort)
        ));
    }

    #[test]
    fn csv_loader_reports_line_numbers() {
        let ok = "t_s,mbps\n0,1.5\n1,2\n";
        assert_eq!(parse_trace_csv(ok.as_bytes()).unwrap().len(), 2);
        let err = parse_trace_csv("t_s,mbps\n0,1\n2,1\n1,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 4:"), "{err}");
        let err = parse_trace_csv("t_s,mbps\n0,1\n1,-3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 3:"), "{err}");
        let err = parse_trace_csv("time,rate\n0,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 1:"), "{err}");
    }

    proptest::proptest! {
        #[test]
        fn scaling_preserves_order(mut rates in proptest::collection::vec(0.0f64..1000.0, 2..50)) {
            rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            proptest::prop_assume!(rates[0] < rates[rates.len() - 1]);
            let raw: Vec<TraceSample> = rates.iter().enumerate().map(|(i, &m)| TraceSample { t_s: i as f64, mbps: m }).collect();
            let out = normalize_trace(&raw, 5.0).unwrap();
            for w in out.windows(2) {
                proptest::prop_assert!(w[0].mbps <= w[1].mbps);
            }
            for s in &out {
                proptest::prop_assert!(s.mbps >= TRACE_FLOOR_MBPS && s.mbps <= 5.0 + 1e-12);
            }
        }

        #[test]
        fn capacity_total_and_piecewise(t in 0u64..400_000_000) {
            let p = CapacityPattern::SquareWave { low_mbps: 2.5, high_mbps: 4.0, half_period_s: 10.0 };
            let c = p.capacity_at(SimTime(t));
            proptest::prop_assert!(c == 2.5e6 || c == 4e6);
        }
    }
}
