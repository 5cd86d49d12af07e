//! Episode evaluation: GOSPA with its decomposition, the sum of covariance
//! Frobenius norms, and the track-to-truth ratio.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::assignment;
use crate::error::{Error, Result};
use crate::tracker::TrackList;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GospaParams {
    /// Cut-off distance, meters.
    pub c: f64,
    /// Order.
    pub p: f64,
    pub alpha: f64,
}

impl Default for GospaParams {
    fn default() -> Self {
        Self {
            c: 500.0,
            p: 1.0,
            alpha: 2.0,
        }
    }
}

impl GospaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Argument(format!("GOSPA cut-off must be > 0, got {}", self.c)));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::Argument(format!("GOSPA order must be >= 1, got {}", self.p)));
        }
        if self.alpha != 2.0 {
            return Err(Error::Argument(format!(
                "GOSPA decomposition requires alpha = 2, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// GOSPA distance and its components. The components are in p-th power
/// units, so `distance^p = localisation + missed + false_alarm`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GospaResult {
    pub distance: f64,
    pub localisation: f64,
    pub missed: f64,
    pub false_alarm: f64,
    pub n_missed: usize,
    pub n_false: usize,
    /// `(truth index, track index)` pairs closer than the cut-off.
    pub assignment: Vec<(usize, usize)>,
}

pub fn gospa(truths: &[Vector3<f64>], tracks: &[Vector3<f64>], params: &GospaParams) -> Result<GospaResult> {
    params.validate()?;
    let GospaParams { c, p, alpha } = *params;
    let costs: Vec<Vec<f64>> = truths
        .iter()
        .map(|t| tracks.iter().map(|x| (t - x).norm().min(c).powf(p)).collect())
        .collect();
    let (pairs, _) = assignment::solve(&costs);

    // Pairs at or beyond the cut-off cost the same as leaving both sides unassigned.
    let assignment: Vec<(usize, usize)> = pairs
        .into_iter()
        .filter(|&(i, j)| (truths[i] - tracks[j]).norm() < c)
        .collect();
    let localisation = assignment
        .iter()
        .map(|&(i, j)| (truths[i] - tracks[j]).norm().powf(p))
        .fold(0.0, |a, d| a + d);
    let n_missed = truths.len() - assignment.len();
    let n_false = tracks.len() - assignment.len();
    let penalty = c.powf(p) / alpha;
    let missed = penalty * n_missed as f64;
    let false_alarm = penalty * n_false as f64;
    Ok(GospaResult {
        distance: (localisation + missed + false_alarm).powf(1.0 / p),
        localisation,
        missed,
        false_alarm,
        n_missed,
        n_false,
        assignment,
    })
}

pub fn covariance_norm_sum(tracks: &TrackList) -> f64 {
    tracks
        .tracks()
        .iter()
        .map(|t| t.state().frobenius_norm())
        .fold(0.0, |a, n| a + n)
}

/// Live tracks per live truth; `None` when there are no truths.
pub fn track_to_truth_ratio(n_tracks: usize, n_truths: usize) -> Option<f64> {
    (n_truths > 0).then(|| n_tracks as f64 / n_truths as f64)
}

/// Per-step metric series of one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeMetrics {
    pub gospa: Vec<GospaResult>,
    pub covariance_norm_sum: Vec<f64>,
    pub track_to_truth: Vec<Option<f64>>,
}

impl EpisodeMetrics {
    pub fn push(&mut self, gospa: GospaResult, cov_norm_sum: f64, t2t: Option<f64>) {
        self.gospa.push(gospa);
        self.covariance_norm_sum.push(cov_norm_sum);
        self.track_to_truth.push(t2t);
    }

    pub fn len(&self) -> usize {
        self.covariance_norm_sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariance_norm_sum.is_empty()
    }

    /// Mean over steps with at least one live truth.
    pub fn mean_track_to_truth(&self) -> Option<f64> {
        mean(self.track_to_truth.iter().flatten().copied())
    }

    pub fn mean_covariance_norm_sum(&self) -> Option<f64> {
        mean(self.covariance_norm_sum.iter().copied())
    }

    pub fn mean_gospa(&self) -> Option<f64> {
        mean(self.gospa.iter().map(|g| g.distance))
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values.iter().copied())?;
    (values.len() > 1).then(|| (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Welch's unequal-variance t-test of `mean(a) = mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    let (ma, mb) = (mean(a.iter().copied())?, mean(b.iter().copied())?);
    let (sa, sb) = (std_dev(a)?, std_dev(b)?);
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    let se = (va + vb).sqrt();
    if se == 0.0 {
        return None;
    }
    let t = (ma - mb) / se;
    let df = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(WelchTest {
        t,
        degrees_of_freedom: df,
        p_value: 2.0 * dist.sf(t.abs()),
    })
}
