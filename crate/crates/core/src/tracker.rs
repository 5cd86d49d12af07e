//! Track lifecycle and the per-step multi-target tracking pipeline:
//! predict, hypothesise and gate, associate, update, initiate, delete.

use std::fmt;

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::association::{self, Assignment};
use crate::error::Result;
use crate::estimation::{self, GaussianEstimate, SigmaPointSet, UtParams, TIME_TOLERANCE};
use crate::models::{self, NoiseParams};
use crate::scenario::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    history: Vec<GaussianEstimate>,
    pub last_detection_time: Option<f64>,
    pub status: TrackStatus,
}

impl Track {
    pub fn new(id: TrackId, initial: GaussianEstimate) -> Self {
        let last_detection_time = Some(initial.time);
        Self {
            id,
            history: vec![initial],
            last_detection_time,
            status: TrackStatus::Tentative,
        }
    }

    pub fn state(&self) -> &GaussianEstimate {
        self.history.last().expect("track history is never empty")
    }

    pub fn history(&self) -> &[GaussianEstimate] {
        &self.history
    }

    /// Appends `estimate`, replacing the latest entry if it has the same timestamp.
    pub fn push(&mut self, estimate: GaussianEstimate) {
        let last = self.state().time;
        debug_assert!(estimate.time >= last - TIME_TOLERANCE);
        if (estimate.time - last).abs() <= TIME_TOLERANCE {
            *self.history.last_mut().expect("non-empty") = estimate;
        } else {
            self.history.push(estimate);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    /// Tracker-side measurement noise and process intensity.
    pub noise: NoiseParams,
    #[serde(default)]
    pub ut: UtParams,
    pub gate_threshold: f64,
    pub missed_distance: f64,
    pub deleter_threshold: f64,
    /// Compare the full 6×6 trace instead of the position block.
    pub deleter_use_full_trace: bool,
    /// Initial per-axis velocity standard deviation of initiated tracks (m/s).
    pub sigma_v0: f64,
    pub sensor_position: Vector3<f64>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams {
                sigma_azimuth: 0.2f64.to_radians(),
                sigma_elevation: 0.2f64.to_radians(),
                sigma_range: 5.0,
                process_intensity: 1.0,
            },
            ut: UtParams::default(),
            gate_threshold: association::DEFAULT_GATE_THRESHOLD,
            missed_distance: association::DEFAULT_GATE_THRESHOLD,
            deleter_threshold: 5000.0,
            deleter_use_full_trace: false,
            sigma_v0: 50.0,
            sensor_position: Vector3::zeros(),
        }
    }
}

/// What one pipeline step did, keyed by track id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub assignment: Assignment,
    pub initiated: Vec<TrackId>,
    pub deleted: Vec<TrackId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackList {
    tracks: Vec<Track>,
    next_id: u64,
}

impl TrackList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Live tracks in ascending id order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn get(&self, id: TrackId) -> Option<&Track> {
        self.tracks
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.tracks[i])
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Inserts a track built from `initial`, assigning the next id.
    pub fn insert(&mut self, initial: GaussianEstimate) -> TrackId {
        let id = TrackId(self.next_id);
        self.next_id += 1;
        self.tracks.push(Track::new(id, initial));
        id
    }

    /// Removes tracks whose covariance statistic exceeds `threshold` and
    /// returns their ids.
    pub fn delete_tracks(&mut self, threshold: f64, use_full_trace: bool) -> Vec<TrackId> {
        let mut deleted = Vec::new();
        self.tracks.retain_mut(|t| {
            let state = t.state();
            let statistic = if use_full_trace {
                state.covariance.trace()
            } else {
                state.position_trace()
            };
            if statistic > threshold {
                t.status = TrackStatus::Deleted;
                deleted.push(t.id);
                false
            } else {
                true
            }
        });
        deleted
    }

    /// Runs one tracking cycle at `time` against `detections`.
    pub fn mtt_step(&mut self, detections: &[Detection], time: f64, config: &TrackerConfig) -> Result<StepReport> {
        let mut predicted = Vec::with_capacity(self.tracks.len());
        for track in &self.tracks {
            let p = estimation::predict(track.state(), time, &config.noise).map_err(|e| e.for_track(track.id))?;
            predicted.push(p);
        }

        let mut updates = Vec::with_capacity(self.tracks.len());
        for (track, prediction) in self.tracks.iter().zip(&predicted) {
            let row = detections
                .iter()
                .map(|d| estimation::ukf_update(prediction, d, &config.sensor_position, &config.noise, &config.ut))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.for_track(track.id))?;
            updates.push(row);
        }

        let ids: Vec<TrackId> = self.tracks.iter().map(|t| t.id).collect();
        let hypotheses = association::hypothesise(&ids, updates, config.missed_distance);
        let hypotheses = association::gate(hypotheses, config.gate_threshold);
        let assignment = association::nearest_neighbour_assign(&hypotheses, detections.len());

        for (track, prediction) in self.tracks.iter_mut().zip(predicted) {
            let posterior = assignment.detection_for(track.id).and_then(|d| {
                hypotheses
                    .iter()
                    .find(|h| h.track_id == track.id && h.detection_index == Some(d))
                    .and_then(|h| h.update.as_ref())
                    .map(|u| u.posterior.clone())
            });
            match posterior {
                Some(p) => {
                    track.push(p);
                    track.last_detection_time = Some(time);
                }
                None => track.push(prediction),
            }
        }

        let unassigned: Vec<Detection> = assignment
            .unassigned_detections
            .iter()
            .map(|&d| detections[d])
            .collect();
        let initiated = initiate(self, &unassigned, config)?;

        let deleted = self.delete_tracks(config.deleter_threshold, config.deleter_use_full_trace);
        Ok(StepReport {
            assignment,
            initiated,
            deleted,
        })
    }
}

/// Initial estimate from a single detection: the position is the inverse
/// measurement, its covariance the unscented transform of the measurement
/// noise, and the velocity is zero-mean with `sigma_v0` per axis.
pub fn initiate_estimate(detection: &Detection, config: &TrackerConfig) -> Result<GaussianEstimate> {
    let m = detection.measurement;
    let z = m.to_vector();
    let position = models::spherical_to_cart(&m.to_spherical()) + config.sensor_position;

    let sigma = estimation::sigma_points_of(&z, &config.noise.measurement_covariance(), &config.ut)?;
    let transformed = SigmaPointSet::<3> {
        points: sigma
            .points
            .iter()
            .map(|p| models::spherical_to_cart(&models::SphericalCoords::new(p.z, p.x, p.y)) + config.sensor_position)
            .collect(),
        mean_weights: sigma.mean_weights,
        covariance_weights: sigma.covariance_weights,
    };
    let position_cov = estimation::symmetrise(&transformed.weighted_covariance(&position));

    let mut mean = Vector6::zeros();
    mean.fixed_rows_mut::<3>(0).copy_from(&position);
    let mut covariance = Matrix6::zeros();
    covariance.fixed_view_mut::<3, 3>(0, 0).copy_from(&position_cov);
    for axis in 3..6 {
        covariance[(axis, axis)] = config.sigma_v0.powi(2);
    }
    Ok(GaussianEstimate::new(mean, covariance, detection.time))
}

/// Starts one tentative track per detection.
pub fn initiate(tracks: &mut TrackList, unassigned: &[Detection], config: &TrackerConfig) -> Result<Vec<TrackId>> {
    unassigned
        .iter()
        .map(|d| initiate_estimate(d, config).map(|e| tracks.insert(e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::error::Error;
    use crate::models::MeasurementVector;

    fn boresight(range: f64, time: f64) -> Detection {
        Detection::new(MeasurementVector::new(0.0, 0.0, range), time)
    }

    fn with_position_variances(v: f64) -> GaussianEstimate {
        let mut cov = Matrix6::identity();
        for axis in 0..3 {
            cov[(axis, axis)] = v;
        }
        GaussianEstimate::new(Vector6::zeros(), cov, 0.0)
    }

    #[test]
    fn initiate_examples() {
        let config = TrackerConfig::default();
        let mut list = TrackList::new();
        assert!(initiate(&mut list, &[], &config).unwrap().is_empty());

        let ids = initiate(&mut list, &[boresight(1000.0, 0.0)], &config).unwrap();
        let t = list.get(ids[0]).unwrap();
        assert_relative_eq!(t.state().position(), Vector3::new(1000.0, 0.0, 0.0), epsilon = 1e-9);
        assert_eq!(t.state().velocity(), Vector3::zeros());
        assert_eq!(t.status, TrackStatus::Tentative);
        assert_relative_eq!(t.state().covariance[(3, 3)], 2500.0);

        let ids = initiate(
            &mut list,
            &[boresight(2000.0, 0.0), boresight(3000.0, 0.0), boresight(4000.0, 0.0)],
            &config,
        )
        .unwrap();
        assert_eq!(ids, vec![TrackId(1), TrackId(2), TrackId(3)]);
    }

    #[test]
    fn initiated_position_covariance_matches_linearisation_at_boresight() {
        let config = TrackerConfig::default();
        let e = initiate_estimate(&boresight(10_000.0, 0.0), &config).unwrap();
        let n = &config.noise;
        // Range along x, cross-range ≈ r·σ along y and z.
        assert_relative_eq!(e.covariance[(0, 0)], n.sigma_range.powi(2), max_relative = 1e-2);
        assert_relative_eq!(
            e.covariance[(1, 1)],
            (10_000.0 * n.sigma_azimuth).powi(2),
            max_relative = 1e-3
        );
        assert_relative_eq!(
            e.covariance[(2, 2)],
            (10_000.0 * n.sigma_elevation).powi(2),
            max_relative = 1e-3
        );
        assert!(e.covariance.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn deleter_examples() {
        let mut list = TrackList::new();
        list.insert(with_position_variances(100.0));
        list.insert(with_position_variances(2000.0));
        let deleted = list.delete_tracks(5000.0, false);
        assert_eq!(deleted, vec![TrackId(1)]);
        assert_eq!(list.len(), 1);
        assert_eq!(list.tracks()[0].state(), &with_position_variances(100.0));

        let mut empty = TrackList::new();
        assert!(empty.delete_tracks(5000.0, false).is_empty());

        // Full trace adds the velocity block.
        let mut list = TrackList::new();
        list.insert(with_position_variances(1666.0));
        assert!(list.delete_tracks(5000.0, false).is_empty());
        assert_eq!(list.delete_tracks(5000.0, true), vec![TrackId(0)]);
    }

    #[test]
    fn empty_step_is_a_no_op() {
        let mut list = TrackList::new();
        let report = list.mtt_step(&[], 0.005, &TrackerConfig::default()).unwrap();
        assert!(list.is_empty());
        assert_eq!(report, StepReport::default());
    }

    #[test]
    fn exact_detection_contracts_covariance() {
        let config = TrackerConfig::default();
        let mut list = TrackList::new();
        initiate(&mut list, &[boresight(3000.0, 0.0)], &config).unwrap();
        let predicted = estimation::predict(list.tracks()[0].state(), 0.005, &config.noise).unwrap();
        let report = list.mtt_step(&[boresight(3000.0, 0.005)], 0.005, &config).unwrap();
        assert_eq!(report.assignment.pairs, vec![(TrackId(0), 0)]);
        assert!(report.initiated.is_empty());
        let t = &list.tracks()[0];
        assert!(t.state().covariance.trace() < predicted.covariance.trace());
        assert_eq!(t.last_detection_time, Some(0.005));
        assert_eq!(t.history().len(), 2);
    }

    #[test]
    fn far_detection_starts_new_track_and_old_one_coasts() {
        let config = TrackerConfig::default();
        let mut list = TrackList::new();
        initiate(&mut list, &[boresight(3000.0, 0.0)], &config).unwrap();
        let far = Detection::new(MeasurementVector::new(0.5, 0.3, 8000.0), 0.005);
        let report = list.mtt_step(&[far], 0.005, &config).unwrap();
        assert!(report.assignment.pairs.is_empty());
        assert_eq!(report.initiated, vec![TrackId(1)]);
        assert_eq!(list.len(), 2);
        let coasted = list.get(TrackId(0)).unwrap();
        assert_eq!(coasted.last_detection_time, Some(0.0));
        assert!(coasted.state().covariance.trace() > coasted.history()[0].covariance.trace());
    }

    #[test]
    fn step_backwards_in_time_names_the_track() {
        let config = TrackerConfig::default();
        let mut list = TrackList::new();
        initiate(&mut list, &[boresight(3000.0, 1.0)], &config).unwrap();
        let err = list.mtt_step(&[], 0.5, &config).unwrap_err();
        assert!(matches!(err, Error::Track { id: TrackId(0), .. }), "{err}");
    }

    #[test]
    fn coasting_track_is_eventually_deleted() {
        let config = TrackerConfig::default();
        let mut list = TrackList::new();
        initiate(&mut list, &[boresight(5000.0, 0.0)], &config).unwrap();
        let mut last_trace = 0.0;
        let mut deleted_at = None;
        for k in 1..100_000 {
            let report = list.mtt_step(&[], k as f64 * 0.005, &config).unwrap();
            if !report.deleted.is_empty() {
                deleted_at = Some(k);
                break;
            }
            let trace = list.tracks()[0].state().position_trace();
            assert!(trace >= last_trace);
            last_trace = trace;
        }
        assert!(deleted_at.is_some());
    }
}
