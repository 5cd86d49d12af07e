//! Kalman prediction over the constant-velocity model and the unscented
//! measurement update for the spherical radar measurement model.

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, NoiseParams};
use crate::scenario::Detection;

/// Timestamps closer than this are treated as equal.
pub const TIME_TOLERANCE: f64 = 1e-9;

/// Mean and covariance of a 6-D CV state at a point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimate {
    pub mean: Vector6<f64>,
    pub covariance: Matrix6<f64>,
    pub time: f64,
}

impl GaussianEstimate {
    pub fn new(mean: Vector6<f64>, covariance: Matrix6<f64>, time: f64) -> Self {
        Self { mean, covariance, time }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into_owned()
    }

    /// Sum of the three position variances (m²).
    pub fn position_trace(&self) -> f64 {
        self.covariance.fixed_view::<3, 3>(0, 0).trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.covariance.norm()
    }
}

/// Scaling parameters of the unscented transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    /// `None` selects `3 − n` for an n-dimensional state.
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 2.0,
            kappa: None,
        }
    }
}

impl UtParams {
    pub fn kappa_for(&self, dim: usize) -> f64 {
        self.kappa.unwrap_or(3.0 - dim as f64)
    }

    /// `λ = α²(n + κ) − n`.
    pub fn lambda(&self, dim: usize) -> f64 {
        let n = dim as f64;
        self.alpha.powi(2) * (n + self.kappa_for(dim)) - n
    }
}

/// `2n + 1` sigma points with their mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaPointSet<const N: usize> {
    pub points: Vec<SVector<f64, N>>,
    pub mean_weights: Vec<f64>,
    pub covariance_weights: Vec<f64>,
}

impl<const N: usize> SigmaPointSet<N> {
    pub fn weighted_mean(&self) -> SVector<f64, N> {
        self.points
            .iter()
            .zip(&self.mean_weights)
            .fold(SVector::zeros(), |acc, (p, w)| acc + p * *w)
    }

    pub fn weighted_covariance(&self, mean: &SVector<f64, N>) -> SMatrix<f64, N, N> {
        self.points
            .iter()
            .zip(&self.covariance_weights)
            .fold(SMatrix::zeros(), |acc, (p, w)| {
                let d = p - mean;
                acc + d * d.transpose() * *w
            })
    }
}

/// Result of updating a predicted estimate with one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub posterior: GaussianEstimate,
    pub innovation: Vector3<f64>,
    pub innovation_covariance: Matrix3<f64>,
    pub mahalanobis_distance: f64,
}

pub(crate) fn symmetrise<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor after symmetric projection, retrying once with
/// `1e-9·trace·I` jitter.
pub(crate) fn cholesky_lower<const N: usize>(cov: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let sym = symmetrise(cov);
    if let Some(chol) = sym.cholesky() {
        return Ok(chol.l());
    }
    let trace = sym.trace();
    let jitter = 1e-9 * if trace > 0.0 { trace } else { 1.0 };
    let jittered = sym + SMatrix::<f64, N, N>::identity() * jitter;
    jittered.cholesky().map(|c| c.l()).ok_or_else(|| {
        Error::Numerical(format!(
            "covariance not positive definite after jitter {jitter:e} (trace {trace:e}, min diagonal {:e})",
            sym.diagonal().min()
        ))
    })
}

pub fn predict(prior: &GaussianEstimate, to_time: f64, noise: &NoiseParams) -> Result<GaussianEstimate> {
    let dt = to_time - prior.time;
    if dt < 0.0 {
        return Err(Error::TemporalOrder(format!(
            "cannot predict from t={} back to t={to_time}",
            prior.time
        )));
    }
    if dt == 0.0 {
        return Ok(prior.clone());
    }
    let (f, q) = models::cv_matrices(dt, noise.process_intensity);
    let covariance = symmetrise(&(f * prior.covariance * f.transpose() + q));
    Ok(GaussianEstimate::new(f * prior.mean, covariance, to_time))
}

/// Scaled sigma points of an N-dimensional Gaussian.
pub fn sigma_points_of<const N: usize>(
    mean: &SVector<f64, N>,
    covariance: &SMatrix<f64, N, N>,
    params: &UtParams,
) -> Result<SigmaPointSet<N>> {
    let n = N as f64;
    let lambda = params.lambda(N);
    let spread = n + lambda;
    if spread.is_nan() || spread <= 0.0 {
        return Err(Error::Argument(format!(
            "sigma-point spread n + λ = {spread} must be > 0"
        )));
    }
    let sqrt_cov = cholesky_lower(covariance)? * spread.sqrt();

    let mut points = Vec::with_capacity(2 * N + 1);
    points.push(*mean);
    for i in 0..N {
        points.push(mean + sqrt_cov.column(i));
    }
    for i in 0..N {
        points.push(mean - sqrt_cov.column(i));
    }

    let w0 = lambda / spread;
    let wi = 1.0 / (2.0 * spread);
    let mut mean_weights = vec![wi; 2 * N + 1];
    let mut covariance_weights = mean_weights.clone();
    mean_weights[0] = w0;
    covariance_weights[0] = w0 + 1.0 - params.alpha.powi(2) + params.beta;

    Ok(SigmaPointSet {
        points,
        mean_weights,
        covariance_weights,
    })
}

pub fn sigma_points(estimate: &GaussianEstimate, params: &UtParams) -> Result<SigmaPointSet<6>> {
    sigma_points_of(&estimate.mean, &estimate.covariance, params)
}

/// Unscented update against an arbitrary 3-D measurement function.
///
/// `angular[i]` marks measurement components whose residuals are wrapped to
/// (−π, π].
pub fn unscented_update<F>(
    predicted: &GaussianEstimate,
    measurement: &Vector3<f64>,
    measurement_fn: F,
    measurement_noise: &Matrix3<f64>,
    angular: [bool; 3],
    params: &UtParams,
) -> Result<UpdateResult>
where
    F: Fn(&Vector6<f64>) -> Result<Vector3<f64>>,
{
    let wrap = |mut v: Vector3<f64>| {
        for (c, is_angle) in v.iter_mut().zip(angular) {
            if is_angle {
                *c = models::wrap_angle(*c);
            }
        }
        v
    };

    let sigma = sigma_points(predicted, params)?;
    let projected = sigma.points.iter().map(&measurement_fn).collect::<Result<Vec<_>>>()?;

    // Angular means are taken as offsets from the central point so that
    // points straddling ±π average correctly.
    let anchor = projected[0];
    let offset = projected
        .iter()
        .zip(&sigma.mean_weights)
        .fold(Vector3::zeros(), |acc, (z, w)| acc + wrap(z - anchor) * *w);
    let predicted_measurement = wrap(anchor + offset);

    let mut s = *measurement_noise;
    let mut cross = SMatrix::<f64, 6, 3>::zeros();
    for ((point, z), w) in sigma.points.iter().zip(&projected).zip(&sigma.covariance_weights) {
        let dz = wrap(z - predicted_measurement);
        let dx = point - predicted.mean;
        s += dz * dz.transpose() * *w;
        cross += dx * dz.transpose() * *w;
    }
    let s = symmetrise(&s);
    let s_inv = s
        .try_inverse()
        .filter(|inv| inv.iter().all(|c| c.is_finite()))
        .ok_or_else(|| Error::Numerical(format!("singular innovation covariance {s:?}")))?;

    let innovation = wrap(measurement - predicted_measurement);
    let gain = cross * s_inv;
    let mean = predicted.mean + gain * innovation;
    let covariance = symmetrise(&(predicted.covariance - gain * s * gain.transpose()));
    let mahalanobis_distance = innovation.dot(&(s_inv * innovation)).max(0.0).sqrt();

    Ok(UpdateResult {
        posterior: GaussianEstimate::new(mean, covariance, predicted.time),
        innovation,
        innovation_covariance: s,
        mahalanobis_distance,
    })
}

/// Unscented update of a predicted track with a radar detection.
pub fn ukf_update(
    predicted: &GaussianEstimate,
    detection: &Detection,
    sensor_position: &Vector3<f64>,
    noise: &NoiseParams,
    params: &UtParams,
) -> Result<UpdateResult> {
    if (detection.time - predicted.time).abs() > TIME_TOLERANCE {
        return Err(Error::TemporalOrder(format!(
            "detection at t={} does not match prediction at t={}",
            detection.time, predicted.time
        )));
    }
    unscented_update(
        predicted,
        &detection.measurement.to_vector(),
        |x| {
            let position = x.fixed_rows::<3>(0).into_owned();
            models::measure_position(&position, sensor_position).map(|m| m.to_vector())
        },
        &noise.measurement_covariance(),
        [true, true, false],
        params,
    )
}
