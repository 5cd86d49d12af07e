//! Mahalanobis distance, gating, hypothesis generation and greedy global
//! nearest-neighbour assignment between tracks and detections.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::estimation::UpdateResult;
use crate::tracker::TrackId;

/// `√χ²₃(0.99)`, the 99% gate on a 3-D Mahalanobis distance.
pub const DEFAULT_GATE_THRESHOLD: f64 = 3.368_214_175_218_727_6;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub track_id: TrackId,
    /// `None` is the missed-detection hypothesis.
    pub detection_index: Option<usize>,
    pub distance: f64,
    pub update: Option<UpdateResult>,
}

impl Hypothesis {
    pub fn missed(track_id: TrackId, distance: f64) -> Self {
        Self {
            track_id,
            detection_index: None,
            distance,
            update: None,
        }
    }

    pub fn pair(track_id: TrackId, detection_index: usize, update: UpdateResult) -> Self {
        Self {
            track_id,
            detection_index: Some(detection_index),
            distance: update.mahalanobis_distance,
            update: Some(update),
        }
    }

    pub fn is_missed(&self) -> bool {
        self.detection_index.is_none()
    }
}

/// One-to-one pairing of tracks with detections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// Sorted by track id.
    pub pairs: Vec<(TrackId, usize)>,
    pub unassigned_tracks: BTreeSet<TrackId>,
    pub unassigned_detections: BTreeSet<usize>,
}

impl Assignment {
    pub fn detection_for(&self, track: TrackId) -> Option<usize> {
        self.pairs.iter().find(|(t, _)| *t == track).map(|(_, d)| *d)
    }
}

pub fn mahalanobis(innovation: &Vector3<f64>, s: &Matrix3<f64>) -> Result<f64> {
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("innovation covariance not positive definite: {s:?}")))?;
    let whitened = chol.solve(innovation);
    Ok(innovation.dot(&whitened).max(0.0).sqrt())
}

/// Keeps pair hypotheses within `gate_threshold`; missed-detection hypotheses always pass.
pub fn gate(hypotheses: Vec<Hypothesis>, gate_threshold: f64) -> Vec<Hypothesis> {
    hypotheses
        .into_iter()
        .filter(|h| h.is_missed() || h.distance <= gate_threshold)
        .collect()
}

/// Builds one hypothesis per (track, detection) pair plus one missed-detection
/// hypothesis per track.
///
/// `updates[t][d]` is the update of track `track_ids[t]` with detection `d`.
pub fn hypothesise(track_ids: &[TrackId], updates: Vec<Vec<UpdateResult>>, missed_distance: f64) -> Vec<Hypothesis> {
    debug_assert_eq!(track_ids.len(), updates.len());
    let mut out = Vec::new();
    for (&track_id, row) in track_ids.iter().zip(updates) {
        out.extend(
            row.into_iter()
                .enumerate()
                .map(|(d, update)| Hypothesis::pair(track_id, d, update)),
        );
        out.push(Hypothesis::missed(track_id, missed_distance));
    }
    out
}

/// Ordering used by the greedy assignment: distance, then track id, then
/// detection index with the missed hypothesis after every pair.
fn greedy_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.track_id.cmp(&b.track_id))
        .then_with(|| match (a.detection_index, b.detection_index) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
}

/// Greedy global nearest neighbour.
///
/// Hypotheses are visited in ascending distance. A track is settled by the
/// first hypothesis reached for it whose detection (if any) is still free; a
/// track settled by its missed hypothesis stays unassigned.
pub fn nearest_neighbour_assign(hypotheses: &[Hypothesis], n_detections: usize) -> Assignment {
    let mut order: Vec<&Hypothesis> = hypotheses.iter().collect();
    order.sort_by(|a, b| greedy_order(a, b));

    let mut settled = BTreeSet::new();
    let mut used = BTreeSet::new();
    let mut pairs = Vec::new();
    for h in order {
        if settled.contains(&h.track_id) {
            continue;
        }
        match h.detection_index {
            None => {
                settled.insert(h.track_id);
            }
            Some(d) if !used.contains(&d) => {
                settled.insert(h.track_id);
                used.insert(d);
                pairs.push((h.track_id, d));
            }
            Some(_) => {}
        }
    }
    pairs.sort();

    let assigned: BTreeSet<TrackId> = pairs.iter().map(|(t, _)| *t).collect();
    let unassigned_tracks = hypotheses
        .iter()
        .map(|h| h.track_id)
        .filter(|t| !assigned.contains(t))
        .collect();
    let unassigned_detections = (0..n_detections).filter(|d| !used.contains(d)).collect();
    Assignment {
        pairs,
        unassigned_tracks,
        unassigned_detections,
    }
}
