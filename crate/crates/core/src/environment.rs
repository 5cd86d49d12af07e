//! The search-and-track episode: discrete beam actions, the scan value map,
//! observation assembly, reward, and the reset/step contract.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_3;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SsvKind};
use crate::error::{Error, Result};
use crate::metrics::{self, GospaResult};
use crate::models;
use crate::scenario::{self, Detection, GroundTruthPath, RadarSensor};
use crate::tracker::{TrackId, TrackList, TrackerConfig};

/// Side length of the scan value map.
pub const SCAN_GRID: usize = 48;
/// Columns of one track-list observation row.
pub const TRACK_FEATURES: usize = 7;

/// Number of beam positions per axis needed to tile `total_fov` with
/// overlapping square windows of width `instantaneous_fov`.
pub fn action_space_size(total_fov: f64, instantaneous_fov: f64) -> Result<usize> {
    if !(total_fov > 0.0 && instantaneous_fov > 0.0 && total_fov.is_finite()) {
        return Err(Error::Config(format!(
            "fields of view must be positive, got total {total_fov}, instantaneous {instantaneous_fov}"
        )));
    }
    if instantaneous_fov > total_fov {
        return Err(Error::Config(format!(
            "instantaneous field of view {instantaneous_fov} exceeds total {total_fov}"
        )));
    }
    Ok((total_fov / (std::f64::consts::FRAC_1_SQRT_2 * instantaneous_fov)).ceil() as usize)
}

/// A beam cell `(azimuth index, elevation index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionIndex {
    pub azimuth: usize,
    pub elevation: usize,
}

impl ActionIndex {
    pub fn new(azimuth: usize, elevation: usize) -> Self {
        Self { azimuth, elevation }
    }

    /// Decodes the canonical flat encoding `azimuth + elevation·N_a`.
    pub fn from_flat(flat: usize, n_a: usize) -> Result<Self> {
        if n_a == 0 || flat >= n_a * n_a {
            return Err(Error::Argument(format!(
                "flat action {flat} outside [0, {})",
                n_a * n_a
            )));
        }
        Ok(Self::new(flat % n_a, flat / n_a))
    }

    pub fn to_flat(self, n_a: usize) -> usize {
        self.azimuth + self.elevation * n_a
    }

    pub fn is_valid(self, n_a: usize) -> bool {
        self.azimuth < n_a && self.elevation < n_a
    }
}

/// Beam centre `(ψ, θ)` of a cell, each in [−π/3, π/3].
pub fn action_to_pointing(a: ActionIndex, n_a: usize) -> Result<(f64, f64)> {
    if n_a < 2 {
        return Err(Error::Config(format!("action grid needs N_a >= 2, got {n_a}")));
    }
    if !a.is_valid(n_a) {
        return Err(Error::Argument(format!("action {a:?} outside a {n_a}×{n_a} grid")));
    }
    let map = |i: usize| FRAC_PI_3 * (2.0 * i as f64 / (n_a - 1) as f64 - 1.0);
    Ok((map(a.azimuth), map(a.elevation)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsvDecay {
    pub kind: SsvKind,
    pub tau: f64,
}

impl SsvDecay {
    pub fn value(&self, elapsed: f64) -> f64 {
        let x = elapsed.max(0.0) / self.tau;
        match self.kind {
            SsvKind::Exp => (-x).exp(),
            SsvKind::Linear => (1.0 - x).max(0.0),
        }
    }
}

/// Recency of scanning over a 48×48 grid of cell centres spanning
/// [−π/3, π/3]² in azimuth and elevation. Stored row-major with elevation
/// as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanValueMap {
    values: Vec<f64>,
    last_stamp: Vec<Option<f64>>,
    decay: SsvDecay,
    halfwidth: f64,
}

/// Angle of grid cell `k` along either axis.
pub fn cell_centre(k: usize) -> f64 {
    -FRAC_PI_3 + 2.0 * FRAC_PI_3 * k as f64 / (SCAN_GRID - 1) as f64
}

fn nearest_cell(angle: f64) -> usize {
    let step = 2.0 * FRAC_PI_3 / (SCAN_GRID - 1) as f64;
    ((angle + FRAC_PI_3) / step).round().clamp(0.0, (SCAN_GRID - 1) as f64) as usize
}

impl ScanValueMap {
    pub fn new(decay: SsvDecay, fov_halfwidth: f64) -> Self {
        Self {
            values: vec![0.0; SCAN_GRID * SCAN_GRID],
            last_stamp: vec![None; SCAN_GRID * SCAN_GRID],
            decay,
            halfwidth: fov_halfwidth,
        }
    }

    fn index(az: usize, el: usize) -> usize {
        el * SCAN_GRID + az
    }

    /// Current values, row-major `[elevation][azimuth]`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, az: usize, el: usize) -> f64 {
        self.values[Self::index(az, el)]
    }

    pub fn last_stamp(&self, az: usize, el: usize) -> Option<f64> {
        self.last_stamp[Self::index(az, el)]
    }

    pub fn stamped_count(&self) -> usize {
        self.last_stamp.iter().filter(|s| s.is_some()).count()
    }

    /// Value at `time` of the cell whose centre is nearest to `pointing`.
    pub fn value_at(&self, pointing: (f64, f64), time: f64) -> f64 {
        let idx = Self::index(nearest_cell(pointing.0), nearest_cell(pointing.1));
        self.last_stamp[idx].map_or(0.0, |s| self.decay.value(time - s))
    }

    /// Re-evaluates every stamped cell at `time`.
    pub fn refresh(&mut self, time: f64) {
        for (v, s) in self.values.iter_mut().zip(&self.last_stamp) {
            *v = s.map_or(0.0, |s| self.decay.value(time - s));
        }
    }

    /// Stamps the cells inside the beam window at `time` and decays the rest.
    pub fn update(&mut self, pointing: (f64, f64), time: f64) {
        const EDGE: f64 = 1e-12;
        let inside = |k: usize, centre: f64| (cell_centre(k) - centre).abs() <= self.halfwidth + EDGE;
        let az_cells: Vec<usize> = (0..SCAN_GRID).filter(|&k| inside(k, pointing.0)).collect();
        let el_cells: Vec<usize> = (0..SCAN_GRID).filter(|&k| inside(k, pointing.1)).collect();
        for &el in &el_cells {
            for &az in &az_cells {
                self.last_stamp[Self::index(az, el)] = Some(time);
            }
        }
        self.refresh(time);
    }
}

/// Track-list and scan-history observation in the adapter layout:
/// `track_list` is row-major `(n_track, 7)`, `scan_history` is `(1, 48, 48)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub track_list: Vec<f32>,
    pub scan_history: Vec<f32>,
    pub n_track: usize,
    /// Rows populated.
    pub n_est: usize,
    /// Live tracks dropped because `n_track` rows were already filled.
    pub n_truncated: usize,
}

impl Observation {
    pub fn track_row(&self, i: usize) -> &[f32] {
        &self.track_list[i * TRACK_FEATURES..(i + 1) * TRACK_FEATURES]
    }

    pub fn track_list_shape(&self) -> (usize, usize) {
        (self.n_track, TRACK_FEATURES)
    }

    pub fn scan_history_shape(&self) -> (usize, usize, usize) {
        (1, SCAN_GRID, SCAN_GRID)
    }
}

pub fn build_observation(
    tracks: &TrackList,
    map: &ScanValueMap,
    n_track: usize,
    sensor_position: &Vector3<f64>,
) -> Observation {
    let mut track_list = vec![0f32; n_track * TRACK_FEATURES];
    let live = tracks.tracks();
    let n_est = live.len().min(n_track);
    for (row, track) in track_list.chunks_exact_mut(TRACK_FEATURES).zip(live) {
        let state = track.state();
        let relative = state.position() - sensor_position;
        let (range, az, el) = models::cart_to_spherical(&relative)
            .map(|s| (s.range, s.azimuth, s.elevation))
            .unwrap_or((0.0, 0.0, 0.0));
        let v = state.velocity();
        let features = [range, az, el, v.x, v.y, v.z, state.frobenius_norm()];
        for (dst, src) in row.iter_mut().zip(features) {
            *dst = src as f32;
        }
    }
    Observation {
        track_list,
        scan_history: map.values().iter().map(|&v| v as f32).collect(),
        n_track,
        n_est,
        n_truncated: live.len() - n_est,
    }
}

/// The two reward terms; `total` is always `cov − ssv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub cov: f64,
    pub ssv: f64,
    pub total: f64,
}

/// Reward for one step.
///
/// The covariance term sums `‖P_{k−1}‖ − ‖P_k‖` over tracks that were
/// assigned a detection at step k or k−1 and exist at both steps
/// (negated when `sign_as_written`). `scan_value` is the value of the
/// pointed cell read before the map is stamped.
pub fn compute_reward(
    prev_norms: &BTreeMap<TrackId, f64>,
    current: &TrackList,
    associated_now: &BTreeSet<TrackId>,
    associated_prev: &BTreeSet<TrackId>,
    scan_value: f64,
    sign_as_written: bool,
) -> RewardTerms {
    let mut cov = 0.0;
    for id in associated_now.union(associated_prev) {
        if let (Some(prev), Some(track)) = (prev_norms.get(id), current.get(*id)) {
            let reduction = prev - track.state().frobenius_norm();
            cov += if sign_as_written { -reduction } else { reduction };
        }
    }
    RewardTerms {
        cov,
        ssv: scan_value,
        total: cov - scan_value,
    }
}

/// Diagnostics attached to every step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub reward_cov: f64,
    pub reward_ssv: f64,
    pub n_detections: usize,
    pub n_tracks: usize,
    pub clamped: bool,
    pub n_truncated: usize,
    pub action: ActionIndex,
    pub pointing: (f64, f64),
    pub time: f64,
    /// Positions of live truths and tracks, the inputs to GOSPA.
    pub truth_positions: Vec<Vector3<f64>>,
    pub track_positions: Vec<Vector3<f64>>,
    /// Only computed when metric-based termination is enabled.
    pub gospa: Option<GospaResult>,
}

impl StepInfo {
    /// Scalar diagnostics under their stable key names.
    pub fn to_map(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("reward_cov", self.reward_cov),
            ("reward_ssv", self.reward_ssv),
            ("n_detections", self.n_detections as f64),
            ("n_tracks", self.n_tracks as f64),
            ("clamped", f64::from(u8::from(self.clamped))),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Unset,
    Running,
    Finished,
}

/// One independent episode environment. Owns its scenario, tracker, scan map
/// and random stream.
#[derive(Debug, Clone)]
pub struct Environment {
    config: RunConfig,
    tracker_config: TrackerConfig,
    n_a: usize,
    rng: ChaCha8Rng,
    truths: Vec<GroundTruthPath>,
    sensor: RadarSensor,
    tracks: TrackList,
    map: ScanValueMap,
    step_count: usize,
    prev_norms: BTreeMap<TrackId, f64>,
    prev_associated: BTreeSet<TrackId>,
    last_detections: Vec<Detection>,
    phase: Phase,
}

impl Environment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.ensure_valid()?;
        let n_a = action_space_size(config.environment.total_fov_deg, config.scenario.fov_width_deg)?;
        if n_a < 2 {
            return Err(Error::Config(format!("action grid needs N_a >= 2, got {n_a}")));
        }
        let sensor = config.sensor();
        let map = ScanValueMap::new(
            SsvDecay {
                kind: config.environment.ssv.kind,
                tau: config.ssv_tau(),
            },
            sensor.fov_halfwidth,
        );
        Ok(Self {
            tracker_config: config.tracker_config(),
            n_a,
            rng: ChaCha8Rng::seed_from_u64(0),
            truths: Vec::new(),
            sensor,
            tracks: TrackList::new(),
            map,
            step_count: 0,
            prev_norms: BTreeMap::new(),
            prev_associated: BTreeSet::new(),
            last_detections: Vec::new(),
            phase: Phase::Unset,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_actions(&self) -> usize {
        self.n_a * self.n_a
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn time(&self) -> f64 {
        self.step_count as f64 * self.config.tracker.time_step
    }

    pub fn truths(&self) -> &[GroundTruthPath] {
        &self.truths
    }

    pub fn tracks(&self) -> &TrackList {
        &self.tracks
    }

    pub fn scan_map(&self) -> &ScanValueMap {
        &self.map
    }

    pub fn sensor(&self) -> &RadarSensor {
        &self.sensor
    }

    pub fn last_detections(&self) -> &[Detection] {
        &self.last_detections
    }

    pub fn live_truth_positions(&self) -> Vec<Vector3<f64>> {
        let t = self.time();
        self.truths
            .iter()
            .filter(|p| p.is_alive(t))
            .map(|p| p.current().position)
            .collect()
    }

    pub fn track_positions(&self) -> Vec<Vector3<f64>> {
        self.tracks.tracks().iter().map(|t| t.state().position()).collect()
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = &self.config.scenario;
        self.truths = scenario::spawn_targets(
            s.target_count,
            &self.config.target_region(),
            (s.speed_min, s.speed_max),
            0.0,
            self.config.episode_duration(),
            &mut rng,
        )?;
        self.rng = rng;
        self.sensor = self.config.sensor();
        self.tracks = TrackList::new();
        self.map = ScanValueMap::new(self.map.decay, self.sensor.fov_halfwidth);
        self.step_count = 0;
        self.prev_norms.clear();
        self.prev_associated.clear();
        self.last_detections.clear();
        self.phase = Phase::Running;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        build_observation(
            &self.tracks,
            &self.map,
            self.config.environment.n_track,
            &self.tracker_config.sensor_position,
        )
    }

    pub fn step_flat(&mut self, flat: usize) -> Result<StepOutcome> {
        let action = ActionIndex::from_flat(flat, self.n_a)?;
        self.step(action)
    }

    pub fn step(&mut self, action: ActionIndex) -> Result<StepOutcome> {
        match self.phase {
            Phase::Unset => return Err(Error::Lifecycle("step called before reset".into())),
            Phase::Finished => return Err(Error::Lifecycle("step called after the episode ended".into())),
            Phase::Running => {}
        }
        let pointing = action_to_pointing(action, self.n_a)?;
        let time = (self.step_count + 1) as f64 * self.config.tracker.time_step;

        let clamped = self.sensor.point_dwell(pointing);
        let pointing = self.sensor.dwell_centre;
        let scan_value = self.map.value_at(pointing, time);
        self.map.update(pointing, time);

        scenario::advance_truth(&mut self.truths, time, self.config.scenario.q_truth, &mut self.rng);
        let detections = self.sensor.sense(&self.truths, time, &mut self.rng);
        let report = match self.tracks.mtt_step(&detections, time, &self.tracker_config) {
            Ok(r) => r,
            Err(e) => {
                self.phase = Phase::Finished;
                return Err(e);
            }
        };
        self.step_count += 1;

        let associated_now: BTreeSet<TrackId> = report.assignment.pairs.iter().map(|(t, _)| *t).collect();
        let reward = compute_reward(
            &self.prev_norms,
            &self.tracks,
            &associated_now,
            &self.prev_associated,
            scan_value,
            self.config.environment.reward.sign_as_written,
        );
        self.prev_norms = self
            .tracks
            .tracks()
            .iter()
            .map(|t| (t.id, t.state().frobenius_norm()))
            .collect();
        self.prev_associated = associated_now;

        let observation = self.observe();
        let truth_positions = self.live_truth_positions();
        let track_positions = self.track_positions();

        let termination = &self.config.environment.termination;
        let mut gospa = None;
        let mut terminated = false;
        if termination.enabled {
            let g = metrics::gospa(&truth_positions, &track_positions, &self.config.metrics)?;
            let cov = metrics::covariance_norm_sum(&self.tracks);
            terminated = termination.max_gospa.is_some_and(|m| g.distance > m)
                || termination.max_cov_norm_sum.is_some_and(|m| cov > m);
            gospa = Some(g);
        }
        let truncated = !terminated && self.step_count >= self.config.environment.horizon;
        if terminated || truncated {
            self.phase = Phase::Finished;
        }

        let info = StepInfo {
            reward_cov: reward.cov,
            reward_ssv: reward.ssv,
            n_detections: detections.len(),
            n_tracks: self.tracks.len(),
            clamped,
            n_truncated: observation.n_truncated,
            action,
            pointing,
            time,
            truth_positions,
            track_positions,
            gospa,
        };
        self.last_detections = detections;
        Ok(StepOutcome {
            observation,
            reward: reward.total,
            terminated,
            truncated,
            info,
        })
    }
}
