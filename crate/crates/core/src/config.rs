//! Run configuration: every tunable of the scenario, tracker, environment,
//! metrics and batch runner, loaded from TOML.
//!
//! Unknown keys are rejected. Angles are given in degrees in the file and
//! converted to radians by the accessor methods.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::UtParams;
use crate::metrics::GospaParams;
use crate::models::NoiseParams;
use crate::policies::PolicyKind;
use crate::scenario::{RadarSensor, TargetRegion};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub target_count: usize,
    pub range_min: f64,
    pub range_max: f64,
    pub max_azimuth_deg: f64,
    pub max_elevation_deg: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Truth process-noise intensity, m²/s³.
    pub q_truth: f64,
    pub detection_probability: f64,
    /// Expected false alarms per scan.
    pub clutter_rate: f64,
    /// Total width of the square beam window.
    pub fov_width_deg: f64,
    pub sigma_azimuth_deg: f64,
    pub sigma_elevation_deg: f64,
    pub sigma_range: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            target_count: 5,
            range_min: 1000.0,
            range_max: 10_000.0,
            max_azimuth_deg: 50.0,
            max_elevation_deg: 50.0,
            speed_min: 10.0,
            speed_max: 100.0,
            q_truth: 0.1,
            detection_probability: 0.9,
            clutter_rate: 0.0,
            fov_width_deg: 9.0,
            sigma_azimuth_deg: 0.2,
            sigma_elevation_deg: 0.2,
            sigma_range: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    /// Simulation and tracking interval T_s, seconds.
    pub time_step: f64,
    /// Tracker process-noise intensity, m²/s³.
    pub q: f64,
    pub sigma_azimuth_deg: f64,
    pub sigma_elevation_deg: f64,
    pub sigma_range: f64,
    pub gate_threshold: f64,
    pub missed_distance: f64,
    pub deleter_threshold: f64,
    pub deleter_use_full_trace: bool,
    pub sigma_v0: f64,
    pub ut: UtParams,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let t = TrackerConfig::default();
        Self {
            time_step: 0.005,
            q: t.noise.process_intensity,
            sigma_azimuth_deg: t.noise.sigma_azimuth.to_degrees(),
            sigma_elevation_deg: t.noise.sigma_elevation.to_degrees(),
            sigma_range: t.noise.sigma_range,
            gate_threshold: t.gate_threshold,
            missed_distance: t.missed_distance,
            deleter_threshold: t.deleter_threshold,
            deleter_use_full_trace: t.deleter_use_full_trace,
            sigma_v0: t.sigma_v0,
            ut: t.ut,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsvKind {
    /// `exp(−Δt/τ)`
    Exp,
    /// `max(0, 1 − Δt/τ)`
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsvSection {
    pub kind: SsvKind,
    /// Decay constant in seconds; defaults to a quarter of the episode duration.
    pub tau: Option<f64>,
}

impl Default for SsvSection {
    fn default() -> Self {
        Self {
            kind: SsvKind::Exp,
            tau: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    /// Use `‖P_k‖ − ‖P_{k−1}‖` for the covariance term instead of the
    /// reduction `‖P_{k−1}‖ − ‖P_k‖`.
    pub sign_as_written: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationSection {
    pub enabled: bool,
    pub max_cov_norm_sum: Option<f64>,
    pub max_gospa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub n_track: usize,
    pub horizon: usize,
    /// Width of the square search region.
    pub total_fov_deg: f64,
    pub ssv: SsvSection,
    pub reward: RewardSection,
    pub termination: TerminationSection,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            n_track: 10,
            horizon: 1000,
            total_fov_deg: 120.0,
            ssv: SsvSection::default(),
            reward: RewardSection::default(),
            termination: TerminationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub policy: PolicyKind,
    pub episodes: usize,
    pub base_seed: u64,
    pub output_dir: String,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub log_states: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Coverage,
            episodes: 100,
            base_seed: 0,
            output_dir: "out".into(),
            threads: 0,
            log_states: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub tracker: TrackerSection,
    pub environment: EnvironmentSection,
    pub metrics: GospaParams,
    pub run: RunSection,
}

/// One problem found while loading or validating a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

fn range_issue(key: &str, message: String) -> Diagnostic {
    Diagnostic {
        line: None,
        key: Some(key.to_string()),
        message,
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, Vec<Diagnostic>> {
        let config: RunConfig = toml::from_str(text).map_err(|e| vec![parse_diagnostic(text, &e)])?;
        let issues = config.validate();
        if issues.is_empty() {
            Ok(config)
        } else {
            Err(issues)
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
            .map_err(|d| Error::Config(d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Semantic range checks; an empty result means the config is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut positive = |key: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(range_issue(key, format!("must be finite and > 0, got {v}")));
            }
        };
        let s = &self.scenario;
        let t = &self.tracker;
        let e = &self.environment;
        positive("scenario.range_min", s.range_min);
        positive("scenario.range_max", s.range_max);
        positive("scenario.fov_width_deg", s.fov_width_deg);
        positive("tracker.time_step", t.time_step);
        positive("tracker.q", t.q);
        positive("tracker.sigma_azimuth_deg", t.sigma_azimuth_deg);
        positive("tracker.sigma_elevation_deg", t.sigma_elevation_deg);
        positive("tracker.sigma_range", t.sigma_range);
        positive("tracker.gate_threshold", t.gate_threshold);
        positive("tracker.missed_distance", t.missed_distance);
        positive("tracker.deleter_threshold", t.deleter_threshold);
        positive("tracker.sigma_v0", t.sigma_v0);
        positive("tracker.ut.alpha", t.ut.alpha);
        positive("environment.total_fov_deg", e.total_fov_deg);
        positive("metrics.c", self.metrics.c);
        if let Some(tau) = e.ssv.tau {
            positive("environment.ssv.tau", tau);
        }

        let mut non_negative = |key: &str, v: f64| {
            if !(v.is_finite() && v >= 0.0) {
                out.push(range_issue(key, format!("must be finite and >= 0, got {v}")));
            }
        };
        non_negative("scenario.speed_min", s.speed_min);
        non_negative("scenario.q_truth", s.q_truth);
        non_negative("scenario.clutter_rate", s.clutter_rate);
        non_negative("scenario.sigma_azimuth_deg", s.sigma_azimuth_deg);
        non_negative("scenario.sigma_elevation_deg", s.sigma_elevation_deg);
        non_negative("scenario.sigma_range", s.sigma_range);

        if s.range_max < s.range_min {
            out.push(range_issue(
                "scenario.range_max",
                "must be >= scenario.range_min".into(),
            ));
        }
        if s.speed_max < s.speed_min {
            out.push(range_issue(
                "scenario.speed_max",
                "must be >= scenario.speed_min".into(),
            ));
        }
        if !(0.0..=180.0).contains(&s.max_azimuth_deg) {
            out.push(range_issue("scenario.max_azimuth_deg", "must lie in [0, 180]".into()));
        }
        if !(0.0..90.0).contains(&s.max_elevation_deg) {
            out.push(range_issue("scenario.max_elevation_deg", "must lie in [0, 90)".into()));
        }
        if !(0.0..=1.0).contains(&s.detection_probability) {
            out.push(range_issue(
                "scenario.detection_probability",
                "must lie in [0, 1]".into(),
            ));
        }
        if s.fov_width_deg > e.total_fov_deg {
            out.push(range_issue(
                "scenario.fov_width_deg",
                "beam window cannot exceed environment.total_fov_deg".into(),
            ));
        }
        if e.horizon == 0 {
            out.push(range_issue("environment.horizon", "must be >= 1".into()));
        }
        if e.n_track == 0 {
            out.push(range_issue("environment.n_track", "must be >= 1".into()));
        }
        if let Err(err) = self.metrics.validate() {
            out.push(range_issue("metrics", err.to_string()));
        }
        if t.ut.lambda(6) + 6.0 <= 0.0 || t.ut.lambda(3) + 3.0 <= 0.0 {
            out.push(range_issue("tracker.ut", "sigma-point spread n + λ must be > 0".into()));
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(
                issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        let t = &self.tracker;
        TrackerConfig {
            noise: NoiseParams {
                sigma_azimuth: t.sigma_azimuth_deg.to_radians(),
                sigma_elevation: t.sigma_elevation_deg.to_radians(),
                sigma_range: t.sigma_range,
                process_intensity: t.q,
            },
            ut: t.ut,
            gate_threshold: t.gate_threshold,
            missed_distance: t.missed_distance,
            deleter_threshold: t.deleter_threshold,
            deleter_use_full_trace: t.deleter_use_full_trace,
            sigma_v0: t.sigma_v0,
            sensor_position: Vector3::zeros(),
        }
    }

    pub fn target_region(&self) -> TargetRegion {
        let s = &self.scenario;
        TargetRegion {
            range_min: s.range_min,
            range_max: s.range_max,
            max_azimuth: s.max_azimuth_deg.to_radians(),
            max_elevation: s.max_elevation_deg.to_radians(),
        }
    }

    pub fn sensor(&self) -> RadarSensor {
        let s = &self.scenario;
        RadarSensor {
            position: Vector3::zeros(),
            dwell_centre: (0.0, 0.0),
            fov_halfwidth: s.fov_width_deg.to_radians() / 2.0,
            detection_probability: s.detection_probability,
            noise: NoiseParams {
                sigma_azimuth: s.sigma_azimuth_deg.to_radians(),
                sigma_elevation: s.sigma_elevation_deg.to_radians(),
                sigma_range: s.sigma_range,
                process_intensity: s.q_truth,
            },
            clutter_rate: s.clutter_rate,
            clutter_range: (s.range_min, s.range_max),
        }
    }

    /// Simulated episode length in seconds.
    pub fn episode_duration(&self) -> f64 {
        self.environment.horizon as f64 * self.tracker.time_step
    }

    pub fn ssv_tau(&self) -> f64 {
        self.environment.ssv.tau.unwrap_or(0.25 * self.episode_duration())
    }

    /// Sets a dotted key such as `tracker.sigma_v0` from a string value,
    /// parsed as a TOML literal when possible and as a string otherwise.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut tree = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = parse_literal(value);
        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not a section")))?;
            if i + 1 == parts.len() {
                table.insert((*part).to_string(), parsed.clone());
                break;
            }
            node = table
                .entry((*part).to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let text = toml::to_string(&tree).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text).map_err(|d| {
            Error::Config(format!(
                "override `{key}={value}`: {}",
                d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
            ))
        })
    }
}

fn parse_literal(value: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: toml::Value,
    }
    toml::from_str::<Wrapper>(&format!("v = {value}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| toml::Value::String(value.to_string()))
}

fn parse_diagnostic(text: &str, err: &toml::de::Error) -> Diagnostic {
    let line = err
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    let message = err.message().to_string();
    let (key, message) = match unknown_field(&message) {
        Some((field, expected)) => {
            let hint = nearest(&field, &expected)
                .map(|n| format!(" (did you mean `{n}`?)"))
                .unwrap_or_default();
            (Some(field.clone()), format!("unknown key `{field}`{hint}"))
        }
        None => (None, message),
    };
    Diagnostic { line, key, message }
}

/// Extracts the offending name and the expected names from serde's
/// "unknown field `x`, expected one of `a`, `b`" message.
fn unknown_field(message: &str) -> Option<(String, Vec<String>)> {
    let rest = message.strip_prefix("unknown field `")?;
    let (field, tail) = rest.split_once('`')?;
    let expected = tail.split('`').skip(1).step_by(2).map(str::to_string).collect();
    Some((field.to_string(), expected))
}

fn nearest(field: &str, candidates: &[String]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(field, c), c))
        .filter(|(d, c)| *d <= (c.len().max(field.len()) / 2).max(2))
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c.clone())
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_toml_str(s)
            .map_err(|d| Error::Config(d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))
    }
}
