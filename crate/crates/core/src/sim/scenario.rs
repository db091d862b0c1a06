use serde::{Deserialize, Serialize};

use crate::aqm::AqmConfig;
use crate::cc::{ControllerConfig, ControllerKind, RateBounds};
use crate::error::{ensure, ConfigError};
use crate::media::{PlayoutConfig, SourceConfig};
use crate::netem::LinkConfig;
use crate::types::{EcnCodepoint, SimDuration};

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub aqm: AqmConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub playout: PlayoutConfig,
    #[serde(default = "default_feedback_interval")]
    pub feedback_interval_ms: f64,
    /// Record a per-event timeline.
    #[serde(default)]
    pub timeline: bool,
}

fn default_name() -> String {
    "custom".into()
}

fn default_duration() -> f64 {
    120.0
}

fn default_feedback_interval() -> f64 {
    100.0
}

impl Scenario {
    pub fn new(name: impl Into<String>, controller: ControllerKind) -> Self {
        Scenario {
            name: name.into(),
            duration_s: default_duration(),
            seed: 0,
            link: LinkConfig::default(),
            aqm: AqmConfig::default(),
            controller: ControllerConfig::new(controller),
            source: SourceConfig::default(),
            playout: PlayoutConfig::default(),
            feedback_interval_ms: default_feedback_interval(),
            timeline: false,
        }
    }

    /// Parses a JSON scenario. Unknown keys and type errors are reported with
    /// the path of the offending field; the result is validated.
    pub fn from_json(text: &str) -> Result<Scenario, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(
            self.duration_s.is_finite() && self.duration_s > 0.0,
            "duration_s",
            "must be > 0",
        )?;
        ensure(
            self.feedback_interval_ms.is_finite() && self.feedback_interval_ms >= 1.0,
            "feedback_interval_ms",
            "must be >= 1",
        )?;
        self.link.validate().map_err(|e| e.within("link"))?;
        self.source.validate().map_err(|e| e.within("source"))?;
        self.aqm
            .validate(self.source.mtu_bytes)
            .map_err(|e| e.within("aqm"))?;
        self.controller
            .validate()
            .map_err(|e| e.within("controller"))?;
        self.playout.validate().map_err(|e| e.within("playout"))
    }

    pub fn duration(&self) -> SimDuration {
        SimDuration::from_secs_f64(self.duration_s)
    }

    pub fn feedback_interval(&self) -> SimDuration {
        SimDuration::from_millis_f64(self.feedback_interval_ms)
    }

    /// The codepoint media packets carry.
    pub fn ecn_codepoint(&self) -> EcnCodepoint {
        self.source
            .ecn_mode
            .unwrap_or(if self.controller.kind.uses_ecn() {
                EcnCodepoint::Ect1
            } else {
                EcnCodepoint::NotEct
            })
    }

    pub fn rate_bounds(&self) -> RateBounds {
        RateBounds {
            min_bps: self.source.min_bitrate_bps,
            max_bps: self.source.max_bitrate_bps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_json(r#"{"controller": {"kind": "l4s_gcc"}}"#).unwrap();
        assert_eq!(s.duration_s, 120.0);
        assert_eq!(s.feedback_interval_ms, 100.0);
        assert_eq!(s.ecn_codepoint(), EcnCodepoint::Ect1);
        assert_eq!(
            Scenario::new("x", ControllerKind::Gcc).ecn_codepoint(),
            EcnCodepoint::NotEct
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Scenario::from_json(r#"{"controller": {"kind": "gcc"}, "link": {"capacity": {"kind": "constant", "mbps": 3}, "forward_delay": {"kind": "fixed", "delay_ms": 6}, "reverse_delay_ms": 6, "bogus": 1}}"#)
            .unwrap_err();
        assert!(err.path.starts_with("link"), "{err}");
        assert!(err.message.contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_value_has_field_path() {
        let mut s = Scenario::new("x", ControllerKind::Gcc);
        s.duration_s = 0.0;
        assert_eq!(s.validate().unwrap_err().path, "duration_s");
        let mut s = Scenario::new("x", ControllerKind::Gcc);
        s.source.fps = 0;
        assert_eq!(s.validate().unwrap_err().path, "source.fps");
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario::new("x", ControllerKind::SensitiveGcc);
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}
